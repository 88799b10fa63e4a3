//! Quadrant-weighted chip sampling.
//!
//! Each image splits into a 4x4 grid of quadrants sized by floor
//! division, with the row/column at index 3 absorbing the remainder.
//! Every object contributes its class weight to the quadrant holding
//! its box center, and the weight sums become cumulative probability
//! intervals on [0, 1) that steer chip placement toward rare classes.
//!
//! Field naming note: `row_i` drives the horizontal offset `toleft_x`
//! and `col_j` the vertical `toleft_y`. Output tables keep this
//! transposed convention so they compare directly against existing
//! artifacts that use it.

use rand_chacha::ChaCha8Rng;

use crate::annotations::{to_normalized, BoundingBox, GroupedAnnotation, NormalizedBox, NUM_CLASSES, PARENT_CLASSES};
use crate::error::{Error, Result};
use crate::seed::sample_range;
use crate::table::{write_table, Cell, Table};

pub const DEFAULT_CLIP_RETENTION: f64 = 0.25;

/// Per-class sampling weights: w = ceil(max_count / count); the most
/// frequent class gets 1, rarer classes more. Classes with no instances
/// get weight 0 and a warning.
pub fn class_weights(counts: &[u64; NUM_CLASSES]) -> Result<([u64; NUM_CLASSES], Vec<String>)> {
    let max = *counts.iter().max().unwrap();
    if max == 0 {
        return Err(Error::invalid("cannot weight classes: no annotations"));
    }
    let mut weights = [0u64; NUM_CLASSES];
    let mut warnings = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            warnings.push(format!(
                "class `{}` has no instances; weight set to 0",
                PARENT_CLASSES[c]
            ));
        } else {
            weights[c] = max.div_ceil(n);
        }
    }
    Ok((weights, warnings))
}

pub fn count_classes(annotations: &[GroupedAnnotation]) -> [u64; NUM_CLASSES] {
    let mut counts = [0u64; NUM_CLASSES];
    for a in annotations {
        counts[a.class_index] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantRecord {
    pub orig_filename: String,
    pub row_i: u32,
    pub col_j: u32,
    pub toleft_x: u32,
    pub toleft_y: u32,
    pub orig_width: u32,
    pub orig_height: u32,
    pub quad_width: u32,
    pub quad_height: u32,
    pub sum_w: u64,
    pub prob: f64,
    pub prob_from: f64,
    pub prob_to: f64,
}

/// The 16 quadrant records of one image, in (row_i, col_j) order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantTable {
    pub records: Vec<QuadrantRecord>,
}

impl QuadrantTable {
    /// Build the table from externally supplied weight sums, indexed
    /// row_i * 4 + col_j.
    pub fn from_weights(
        orig_filename: &str,
        img_w: u32,
        img_h: u32,
        sums: &[u64; 16],
    ) -> Result<Self> {
        let quad_width = img_w / 4;
        let quad_height = img_h / 4;
        if quad_width == 0 || quad_height == 0 {
            return Err(Error::invalid(format!(
                "image {img_w}x{img_h} too small for a 4x4 quadrant grid"
            )));
        }
        let total: u64 = sums.iter().sum();
        let mut records = Vec::with_capacity(16);
        let mut cum = 0u64;
        for row_i in 0..4u32 {
            for col_j in 0..4u32 {
                let sum_w = sums[(row_i * 4 + col_j) as usize];
                // Rational bounds cum/total keep the final prob_to at
                // exactly 1 and intervals exactly contiguous.
                let (prob, prob_from, prob_to) = if total == 0 {
                    (0.0, 0.0, 0.0)
                } else {
                    let from = cum as f64 / total as f64;
                    cum += sum_w;
                    (sum_w as f64 / total as f64, from, cum as f64 / total as f64)
                };
                records.push(QuadrantRecord {
                    orig_filename: orig_filename.to_string(),
                    row_i,
                    col_j,
                    toleft_x: row_i * quad_width,
                    toleft_y: col_j * quad_height,
                    orig_width: img_w,
                    orig_height: img_h,
                    quad_width,
                    quad_height,
                    sum_w,
                    prob,
                    prob_from,
                    prob_to,
                });
            }
        }
        Ok(QuadrantTable { records })
    }

    /// Accumulate class weights of annotations by box-center membership
    /// and build the table.
    pub fn from_annotations(
        orig_filename: &str,
        img_w: u32,
        img_h: u32,
        annotations: &[GroupedAnnotation],
        weights: &[u64; NUM_CLASSES],
    ) -> Result<Self> {
        let quad_width = img_w / 4;
        let quad_height = img_h / 4;
        if quad_width == 0 || quad_height == 0 {
            return Err(Error::invalid(format!(
                "image {img_w}x{img_h} too small for a 4x4 quadrant grid"
            )));
        }
        let mut sums = [0u64; 16];
        for a in annotations {
            let cx = (a.bbox.tlx + a.bbox.brx) as f64 / 2.0;
            let cy = (a.bbox.tly + a.bbox.bry) as f64 / 2.0;
            // Right/bottom boundaries are exclusive except at the image
            // edge, where min() folds the center into index 3.
            let row_i = ((cx / f64::from(quad_width)) as u32).min(3);
            let col_j = ((cy / f64::from(quad_height)) as u32).min(3);
            sums[(row_i * 4 + col_j) as usize] += weights[a.class_index];
        }
        Self::from_weights(orig_filename, img_w, img_h, &sums)
    }

    pub fn total_weight(&self) -> u64 {
        self.records.iter().map(|r| r.sum_w).sum()
    }

    /// The unique quadrant index with prob_from <= u < prob_to.
    /// Zero-probability quadrants are never returned.
    pub fn sample(&self, u: f64) -> Result<usize> {
        if self.total_weight() == 0 {
            return Err(Error::invalid("cannot sample: all quadrant weights are zero"));
        }
        if !(0.0..1.0).contains(&u) {
            return Err(Error::invalid(format!("sample point {u} outside [0, 1)")));
        }
        let idx = self.records.partition_point(|r| r.prob_to <= u);
        if idx >= self.records.len() {
            return Err(Error::internal(format!("sample point {u} fell past the last interval")));
        }
        Ok(idx)
    }

    /// Pixel bounds (x0, y0, x1, y1) of a quadrant; index-3 rows and
    /// columns extend to the image edge.
    pub fn quadrant_bounds(&self, idx: usize) -> (u32, u32, u32, u32) {
        let r = &self.records[idx];
        let x1 = if r.row_i == 3 { r.orig_width } else { r.toleft_x + r.quad_width };
        let y1 = if r.col_j == 3 { r.orig_height } else { r.toleft_y + r.quad_height };
        (r.toleft_x, r.toleft_y, x1, y1)
    }
}

pub const QUADRANT_COLUMNS: [&str; 13] = [
    "orig_filename",
    "row_i",
    "col_j",
    "toleft_x",
    "toleft_y",
    "orig_width",
    "orig_height",
    "quad_width",
    "quad_height",
    "sum_w",
    "prob",
    "prob_from",
    "prob_to",
];

/// Serialize one or more quadrant tables into a single file.
pub fn write_quadrant_tables(tables: &[QuadrantTable]) -> Result<String> {
    let rows: Vec<Vec<Cell>> = tables
        .iter()
        .flat_map(|t| t.records.iter())
        .map(|r| {
            vec![
                Cell::from(r.orig_filename.clone()),
                Cell::from(r.row_i),
                Cell::from(r.col_j),
                Cell::from(r.toleft_x),
                Cell::from(r.toleft_y),
                Cell::from(r.orig_width),
                Cell::from(r.orig_height),
                Cell::from(r.quad_width),
                Cell::from(r.quad_height),
                Cell::from(r.sum_w),
                Cell::from(r.prob),
                Cell::from(r.prob_from),
                Cell::from(r.prob_to),
            ]
        })
        .collect();
    write_table(&QUADRANT_COLUMNS, &rows)
}

/// Parse a weight fixture: one image per row with columns
/// orig_filename, orig_width, orig_height, w00..w33 (first digit row_i,
/// second col_j).
pub fn parse_weight_fixture(text: &str) -> Result<Vec<(String, u32, u32, [u64; 16])>> {
    let t = Table::parse(text)?;
    let c_name = t.column("orig_filename")?;
    let c_w = t.column("orig_width")?;
    let c_h = t.column("orig_height")?;
    let mut weight_cols = [0usize; 16];
    for row_i in 0..4 {
        for col_j in 0..4 {
            weight_cols[row_i * 4 + col_j] = t.column(&format!("w{row_i}{col_j}"))?;
        }
    }
    let mut out = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let mut sums = [0u64; 16];
        for (slot, &col) in sums.iter_mut().zip(weight_cols.iter()) {
            *slot = t.u64_at(i, col)?;
        }
        out.push((t.raw(i, c_name).to_string(), t.u32_at(i, c_w)?, t.u32_at(i, c_h)?, sums));
    }
    Ok(out)
}

/// A sampled training chip: square crop origin plus remapped boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Chip {
    pub origin_x: u32,
    pub origin_y: u32,
    pub size: u32,
    pub boxes: Vec<NormalizedBox>,
}

/// Place a chip uniformly among positions whose center lies inside the
/// quadrant, clamped inside the image, then translate, clip, and filter
/// the image's annotations. A clipped box survives when it keeps at
/// least `retention` of its original area.
pub fn sample_chip(
    img_w: u32,
    img_h: u32,
    quadrant: (u32, u32, u32, u32),
    annotations: &[GroupedAnnotation],
    chip_size: u32,
    retention: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Chip> {
    if chip_size == 0 {
        return Err(Error::invalid("chip size must be positive"));
    }
    if chip_size > img_w || chip_size > img_h {
        return Err(Error::invalid(format!(
            "chip size {chip_size} exceeds image {img_w}x{img_h}"
        )));
    }
    if !(0.0..=1.0).contains(&retention) {
        return Err(Error::invalid(format!("retention {retention} outside [0, 1]")));
    }
    let (qx0, qy0, qx1, qy1) = quadrant;
    let half = f64::from(chip_size) / 2.0;
    let origin_x = draw_origin(f64::from(qx0), f64::from(qx1), half, img_w - chip_size, rng);
    let origin_y = draw_origin(f64::from(qy0), f64::from(qy1), half, img_h - chip_size, rng);

    let cx0 = i64::from(origin_x);
    let cy0 = i64::from(origin_y);
    let cx1 = cx0 + i64::from(chip_size);
    let cy1 = cy0 + i64::from(chip_size);
    let mut boxes = Vec::new();
    for a in annotations {
        let clipped = BoundingBox::new(
            a.bbox.tlx.max(cx0),
            a.bbox.tly.max(cy0),
            a.bbox.brx.min(cx1),
            a.bbox.bry.min(cy1),
        );
        if clipped.is_degenerate() {
            continue;
        }
        let kept = clipped.area() as f64;
        if kept < retention * a.bbox.area() as f64 {
            continue;
        }
        let local = BoundingBox::new(
            clipped.tlx - cx0,
            clipped.tly - cy0,
            clipped.brx - cx0,
            clipped.bry - cy0,
        );
        boxes.push(to_normalized(local, a.class_index, chip_size, chip_size));
    }
    Ok(Chip { origin_x, origin_y, size: chip_size, boxes })
}

/// Uniform integer origin with chip center in [q0, q1), clamped to
/// [0, max_origin].
fn draw_origin(q0: f64, q1: f64, half: f64, max_origin: u32, rng: &mut ChaCha8Rng) -> u32 {
    let lo = (q0 - half).ceil() as i64;
    let hi = (q1 - half).ceil() as i64 - 1;
    let span = (hi - lo + 1).max(1) as u64;
    let drawn = lo + sample_range(rng, span) as i64;
    drawn.clamp(0, i64::from(max_origin)) as u32
}
