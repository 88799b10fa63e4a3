//! Detection scoring: IoU, greedy confidence-ordered matching, 101-point
//! interpolated average precision, mAP at 0.5 and 0.5:0.95, and an
//! 11x11 confusion matrix (10 classes plus background).

use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::annotations::{BoundingBox, GroupedAnnotation, NUM_CLASSES, PARENT_CLASSES};
use crate::error::{Error, Result};
use crate::table::{format_float, write_table, Cell, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub class_index: usize,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

pub const DETECTION_COLUMNS: [&str; 7] =
    ["image_id", "class_index", "tlx", "tly", "brx", "bry", "confidence"];

pub fn parse_detections(text: &str) -> Result<Vec<Detection>> {
    let t = Table::parse(text)?;
    let c_id = t.column("image_id")?;
    let c_class = t.column("class_index")?;
    let c_tlx = t.column("tlx")?;
    let c_tly = t.column("tly")?;
    let c_brx = t.column("brx")?;
    let c_bry = t.column("bry")?;
    let c_conf = t.column("confidence")?;
    let mut out = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let class_index = t.usize_at(i, c_class)?;
        if class_index >= NUM_CLASSES {
            return Err(Error::parse(
                t.line_of(i),
                format!("class index {class_index} out of range"),
            ));
        }
        let confidence = t.f64_at(i, c_conf)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::parse(
                t.line_of(i),
                format!("confidence {confidence} outside [0, 1]"),
            ));
        }
        out.push(Detection {
            image_id: t.raw(i, c_id).to_string(),
            class_index,
            bbox: BoundingBox::new(
                t.i64_at(i, c_tlx)?,
                t.i64_at(i, c_tly)?,
                t.i64_at(i, c_brx)?,
                t.i64_at(i, c_bry)?,
            ),
            confidence,
        });
    }
    Ok(out)
}

pub fn write_detections(dets: &[Detection]) -> Result<String> {
    let rows: Vec<Vec<Cell>> = dets
        .iter()
        .map(|d| {
            vec![
                Cell::from(d.image_id.clone()),
                Cell::from(d.class_index),
                Cell::from(d.bbox.tlx),
                Cell::from(d.bbox.tly),
                Cell::from(d.bbox.brx),
                Cell::from(d.bbox.bry),
                Cell::from(d.confidence),
            ]
        })
        .collect();
    write_table(&DETECTION_COLUMNS, &rows)
}

/// Intersection over union of two corner boxes; 0 when disjoint.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = a.brx.min(b.brx) - a.tlx.max(b.tlx);
    let ih = a.bry.min(b.bry) - a.tly.max(b.tly);
    if iw <= 0 || ih <= 0 {
        return 0.0;
    }
    let inter = (iw * ih) as f64;
    let union = (a.area() + b.area()) as f64 - inter;
    inter / union
}

/// The ten IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    let mut t = [0.0; 10];
    for (i, slot) in t.iter_mut().enumerate() {
        *slot = (10 + i) as f64 / 20.0;
    }
    t
}

/// Indices of `dets`, sorted by descending confidence with ties kept in
/// input order. All matching walks detections in this order.
fn confidence_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.partial_cmp(&dets[a].confidence).unwrap());
    order
}

/// Greedy matching for one class: walk detections by descending
/// confidence; each takes the unmatched same-image ground truth with the
/// highest IoU at or above the threshold (IoU ties go to the earliest
/// ground truth). Returns the true-positive flag per visited detection.
fn match_class(
    dets: &[Detection],
    order: &[usize],
    gts: &[&GroupedAnnotation],
    class_index: usize,
    iou_threshold: f64,
) -> Vec<bool> {
    let mut gts_by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (gi, g) in gts.iter().enumerate() {
        gts_by_image.entry(g.image_id.as_str()).or_default().push(gi);
    }
    let mut matched = vec![false; gts.len()];
    let mut flags = Vec::new();
    for &di in order {
        let d = &dets[di];
        if d.class_index != class_index {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        if let Some(candidates) = gts_by_image.get(d.image_id.as_str()) {
            for &gi in candidates {
                if matched[gi] {
                    continue;
                }
                let overlap = iou(&d.bbox, &gts[gi].bbox);
                if overlap >= iou_threshold && best.map_or(true, |(_, b)| overlap > b) {
                    best = Some((gi, overlap));
                }
            }
        }
        match best {
            Some((gi, _)) => {
                matched[gi] = true;
                flags.push(true);
            }
            None => flags.push(false),
        }
    }
    flags
}

/// Cumulative (recall, precision) points from true-positive flags in
/// confidence order.
fn pr_points(flags: &[bool], n_gt: usize) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(flags.len());
    for (i, &is_tp) in flags.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (i + 1) as f64));
    }
    points
}

/// 101-point interpolated average precision: the mean over recall levels
/// j/100 of the maximum precision among points with recall >= j/100.
fn interpolated_ap(points: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    for j in 0..=100 {
        let level = j as f64 / 100.0;
        let best = points
            .iter()
            .filter(|(r, _)| *r >= level)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        total += best;
    }
    total / 101.0
}

/// AP and PR points for one class at one threshold, or None when the
/// class has no ground truth (AP undefined).
pub fn match_and_ap(
    dets: &[Detection],
    gts: &[GroupedAnnotation],
    class_index: usize,
    iou_threshold: f64,
) -> Option<(f64, Vec<(f64, f64)>)> {
    let class_gts: Vec<&GroupedAnnotation> =
        gts.iter().filter(|g| g.class_index == class_index).collect();
    if class_gts.is_empty() {
        return None;
    }
    let order = confidence_order(dets);
    let flags = match_class(dets, &order, &class_gts, class_index, iou_threshold);
    let points = pr_points(&flags, class_gts.len());
    Some((interpolated_ap(&points), points))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAp {
    pub class_index: usize,
    pub n_gt: usize,
    /// AP per threshold, aligned with `iou_thresholds()`.
    pub ap_by_threshold: Vec<f64>,
    /// PR curve at the 0.5 threshold.
    pub pr_points_50: Vec<(f64, f64)>,
}

impl ClassAp {
    pub fn ap50(&self) -> f64 {
        self.ap_by_threshold[0]
    }

    pub fn ap5095(&self) -> f64 {
        self.ap_by_threshold.iter().sum::<f64>() / self.ap_by_threshold.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Classes with at least one ground truth.
    pub classes: Vec<ClassAp>,
    pub map50: f64,
    pub map5095: f64,
}

/// Score detections against ground truth across all classes and the ten
/// IoU thresholds. Classes without ground truth are excluded from both
/// means; scoring fails only when no class is defined.
pub fn evaluate(dets: &[Detection], gts: &[GroupedAnnotation]) -> Result<EvalReport> {
    let thresholds = iou_thresholds();
    let classes: Vec<ClassAp> = (0..NUM_CLASSES)
        .into_par_iter()
        .filter_map(|class_index| {
            let mut ap_by_threshold = Vec::with_capacity(thresholds.len());
            let mut pr_points_50 = Vec::new();
            let mut n_gt = 0usize;
            for (ti, &thr) in thresholds.iter().enumerate() {
                let (ap, points) = match_and_ap(dets, gts, class_index, thr)?;
                if ti == 0 {
                    pr_points_50 = points;
                    n_gt = gts.iter().filter(|g| g.class_index == class_index).count();
                }
                ap_by_threshold.push(ap);
            }
            Some(ClassAp { class_index, n_gt, ap_by_threshold, pr_points_50 })
        })
        .collect();
    if classes.is_empty() {
        return Err(Error::invalid("no ground truth for any class; mAP undefined"));
    }
    let n = classes.len() as f64;
    let map50 = classes.iter().map(ClassAp::ap50).sum::<f64>() / n;
    let map5095 = classes.iter().map(ClassAp::ap5095).sum::<f64>() / n;
    Ok(EvalReport { classes, map50, map5095 })
}

/// Index of the background row/column in the confusion matrix.
pub const BACKGROUND: usize = NUM_CLASSES;

pub type ConfusionMatrix = [[u64; NUM_CLASSES + 1]; NUM_CLASSES + 1];

/// Confusion counts with rows = ground-truth class and columns =
/// detected class. Detections below `conf_threshold` are discarded.
/// Within each image, ground truths are visited in input order and take
/// the remaining detection with the highest IoU at or above
/// `iou_threshold` (ties go to the earliest detection). Unmatched ground
/// truths land in the background column, leftover detections in the
/// background row.
pub fn confusion_matrix(
    dets: &[Detection],
    gts: &[GroupedAnnotation],
    iou_threshold: f64,
    conf_threshold: f64,
) -> ConfusionMatrix {
    let mut matrix = [[0u64; NUM_CLASSES + 1]; NUM_CLASSES + 1];
    let kept: Vec<(usize, &Detection)> = dets
        .iter()
        .enumerate()
        .filter(|(_, d)| d.confidence >= conf_threshold)
        .collect();
    let mut dets_by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (pos, (_, d)) in kept.iter().enumerate() {
        dets_by_image.entry(d.image_id.as_str()).or_default().push(pos);
    }
    let mut used = vec![false; kept.len()];
    for g in gts {
        let mut best: Option<(usize, f64)> = None;
        if let Some(candidates) = dets_by_image.get(g.image_id.as_str()) {
            for &pos in candidates {
                if used[pos] {
                    continue;
                }
                let overlap = iou(&g.bbox, &kept[pos].1.bbox);
                if overlap >= iou_threshold && best.map_or(true, |(_, b)| overlap > b) {
                    best = Some((pos, overlap));
                }
            }
        }
        match best {
            Some((pos, _)) => {
                used[pos] = true;
                matrix[g.class_index][kept[pos].1.class_index] += 1;
            }
            None => matrix[g.class_index][BACKGROUND] += 1,
        }
    }
    for (pos, (_, d)) in kept.iter().enumerate() {
        if !used[pos] {
            matrix[BACKGROUND][d.class_index] += 1;
        }
    }
    matrix
}

fn confusion_label(i: usize) -> &'static str {
    if i == BACKGROUND {
        "background"
    } else {
        PARENT_CLASSES[i]
    }
}

/// Confusion matrix as a table: one row per ground-truth class, one
/// column per detected class.
pub fn write_confusion(matrix: &ConfusionMatrix) -> Result<String> {
    let mut columns = vec!["gt_class"];
    for i in 0..=NUM_CLASSES {
        columns.push(confusion_label(i));
    }
    let rows: Vec<Vec<Cell>> = (0..=NUM_CLASSES)
        .map(|r| {
            let mut row = vec![Cell::from(confusion_label(r))];
            row.extend(matrix[r].iter().map(|&v| Cell::from(v)));
            row
        })
        .collect();
    write_table(&columns, &rows)
}

/// Per-class AP table plus key=value summary lines.
pub fn write_eval_report(report: &EvalReport) -> (String, Result<String>) {
    let mut summary = String::new();
    summary.push_str(&format!("map50 = {}\n", format_float(report.map50)));
    summary.push_str(&format!("map5095 = {}\n", format_float(report.map5095)));
    for c in &report.classes {
        summary.push_str(&format!(
            "ap50_class{} = {}\n",
            c.class_index,
            format_float(c.ap50())
        ));
        summary.push_str(&format!(
            "ap5095_class{} = {}\n",
            c.class_index,
            format_float(c.ap5095())
        ));
    }
    let rows: Vec<Vec<Cell>> = report
        .classes
        .iter()
        .map(|c| {
            vec![
                Cell::from(c.class_index),
                Cell::from(PARENT_CLASSES[c.class_index]),
                Cell::from(c.n_gt),
                Cell::from(c.ap50()),
                Cell::from(c.ap5095()),
            ]
        })
        .collect();
    let table = write_table(&["class_index", "class_name", "n_gt", "ap50", "ap5095"], &rows);
    (summary, table)
}
