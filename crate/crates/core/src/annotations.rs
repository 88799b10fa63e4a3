//! Annotation ingestion: raw box tables, the child-to-parent class map,
//! per-image validation, and conversion to normalized center format.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::table::{format_float, write_table, Cell, Table};

/// The ten parent classes, in canonical index order.
pub const PARENT_CLASSES: [&str; 10] = [
    "Fixed-Wing Aircraft",
    "Passenger Vehicle",
    "Truck",
    "Railway Vehicle",
    "Maritime Vessel",
    "Engineering Vehicle",
    "Building",
    "Helipad",
    "Vehicle Lot",
    "Construction Site",
];

pub const NUM_CLASSES: usize = 10;

/// Name of the reject column: children listed under it are dropped from
/// training data without counting as annotation errors.
pub const REJECT_NAME: &str = "None";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub tlx: i64,
    pub tly: i64,
    pub brx: i64,
    pub bry: i64,
}

impl BoundingBox {
    pub fn new(tlx: i64, tly: i64, brx: i64, bry: i64) -> Self {
        BoundingBox { tlx, tly, brx, bry }
    }

    pub fn is_degenerate(&self) -> bool {
        self.brx <= self.tlx || self.bry <= self.tly
    }

    pub fn area(&self) -> i64 {
        if self.is_degenerate() {
            0
        } else {
            (self.brx - self.tlx) * (self.bry - self.tly)
        }
    }

    pub fn inside_image(&self, width: u32, height: u32) -> bool {
        self.tlx >= 0 && self.tly >= 0 && self.brx <= i64::from(width) && self.bry <= i64::from(height)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawAnnotation {
    pub image_id: String,
    pub bbox: BoundingBox,
    pub class_name: String,
}

/// Parse the six-column annotation table. Rows load verbatim; validation
/// is a separate pass.
pub fn parse_annotations(text: &str) -> Result<Vec<RawAnnotation>> {
    let t = Table::parse(text)?;
    let c_id = t.column("image_id")?;
    let c_tlx = t.column("tlx")?;
    let c_tly = t.column("tly")?;
    let c_brx = t.column("brx")?;
    let c_bry = t.column("bry")?;
    let c_class = t.column("class_name")?;
    let mut out = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        out.push(RawAnnotation {
            image_id: t.raw(i, c_id).to_string(),
            bbox: BoundingBox::new(
                t.i64_at(i, c_tlx)?,
                t.i64_at(i, c_tly)?,
                t.i64_at(i, c_brx)?,
                t.i64_at(i, c_bry)?,
            ),
            class_name: t.raw(i, c_class).to_string(),
        });
    }
    Ok(out)
}

pub fn write_annotations(annotations: &[RawAnnotation]) -> Result<String> {
    let rows: Vec<Vec<Cell>> = annotations
        .iter()
        .map(|a| {
            vec![
                Cell::from(a.image_id.clone()),
                Cell::from(a.bbox.tlx),
                Cell::from(a.bbox.tly),
                Cell::from(a.bbox.brx),
                Cell::from(a.bbox.bry),
                Cell::from(a.class_name.clone()),
            ]
        })
        .collect();
    write_table(&["image_id", "tlx", "tly", "brx", "bry", "class_name"], &rows)
}

/// Parse the image dimension registry: columns image_id, width, height.
pub fn parse_image_dims(text: &str) -> Result<BTreeMap<String, (u32, u32)>> {
    let t = Table::parse(text)?;
    let c_id = t.column("image_id")?;
    let c_w = t.column("width")?;
    let c_h = t.column("height")?;
    let mut out = BTreeMap::new();
    for i in 0..t.len() {
        let id = t.raw(i, c_id).to_string();
        let w = t.u32_at(i, c_w)?;
        let h = t.u32_at(i, c_h)?;
        if w == 0 || h == 0 {
            return Err(Error::parse(t.line_of(i), format!("image `{id}` has zero dimension")));
        }
        if out.insert(id.clone(), (w, h)).is_some() {
            return Err(Error::parse(t.line_of(i), format!("duplicate image_id `{id}`")));
        }
    }
    Ok(out)
}

/// Where a child class name lands: a parent index or the reject set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassTarget {
    Parent(usize),
    Rejected,
}

#[derive(Debug, Clone)]
pub struct ClassMap {
    map: BTreeMap<String, ClassTarget>,
}

impl ClassMap {
    /// The built-in xView grouping: every child class mapped to one of
    /// the ten parents, six classes rejected.
    pub fn xview() -> Self {
        const GROUPS: [(&str, &[&str]); 10] = [
            ("Fixed-Wing Aircraft", &["Small Aircraft", "Cargo Plane"]),
            ("Passenger Vehicle", &["Small Car", "Bus"]),
            (
                "Truck",
                &[
                    "Pickup Truck",
                    "Utility Truck",
                    "Cargo Truck",
                    "Truck w/Box",
                    "Truck Tractor",
                    "Trailer",
                    "Truck w/Flatbed",
                    "Truck w/Liquid",
                ],
            ),
            (
                "Railway Vehicle",
                &["Passenger Car", "Cargo Car", "Flat Car", "Tank Car", "Locomotive"],
            ),
            (
                "Maritime Vessel",
                &[
                    "Motoboat",
                    "Sailboat",
                    "Tugboat",
                    "Barge",
                    "Fishing Vessel",
                    "Ferry",
                    "Yacht",
                    "Container Ship",
                    "Oil Tanker",
                ],
            ),
            (
                "Engineering Vehicle",
                &[
                    "Tower Crane",
                    "Container Crane",
                    "Reach Stacker",
                    "Straddle Carrier",
                    "Mobile Crane",
                    "Dump Truck",
                    "Haul Truck",
                    "Scraper/Tractor",
                    "Front Loader",
                    "Excavator",
                    "Cement Mixer",
                    "Ground Grader",
                    "Crane Truck",
                ],
            ),
            (
                "Building",
                &["Hut/Tent", "Shed", "Aircraft Hangar", "Damaged Building", "Facility"],
            ),
            ("Helipad", &[]),
            ("Vehicle Lot", &[]),
            ("Construction Site", &[]),
        ];
        const REJECTED: [&str; 6] = [
            "Pylon",
            "Shipping Container",
            "Shipping Container Lot",
            "Storage Tank",
            "Tower Structure",
            "Helicopter",
        ];
        let mut map = BTreeMap::new();
        for (idx, (parent, children)) in GROUPS.iter().enumerate() {
            map.insert((*parent).to_string(), ClassTarget::Parent(idx));
            for child in *children {
                map.insert((*child).to_string(), ClassTarget::Parent(idx));
            }
        }
        for name in REJECTED {
            map.insert(name.to_string(), ClassTarget::Rejected);
        }
        ClassMap { map }
    }

    /// Parse `child<TAB>parent` lines. The parent must be one of the ten
    /// class names or the reject name. Parent names always map to
    /// themselves and cannot be reassigned.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, ClassTarget> = BTreeMap::new();
        for (idx, name) in PARENT_CLASSES.iter().enumerate() {
            map.insert((*name).to_string(), ClassTarget::Parent(idx));
        }
        for (i, raw) in text.split('\n').enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let lineno = i + 1;
            let (child, parent) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(lineno, "expected `child<TAB>parent`"))?;
            let child = child.trim();
            let parent = parent.trim();
            if child.is_empty() {
                return Err(Error::parse(lineno, "empty child class name"));
            }
            let target = if parent == REJECT_NAME {
                ClassTarget::Rejected
            } else {
                match PARENT_CLASSES.iter().position(|p| *p == parent) {
                    Some(idx) => ClassTarget::Parent(idx),
                    None => {
                        return Err(Error::parse(
                            lineno,
                            format!("unknown parent class `{parent}`"),
                        ))
                    }
                }
            };
            if let Some(idx) = PARENT_CLASSES.iter().position(|p| *p == child) {
                if target != ClassTarget::Parent(idx) {
                    return Err(Error::parse(
                        lineno,
                        format!("parent class `{child}` cannot be remapped"),
                    ));
                }
                continue;
            }
            if let Some(prev) = map.insert(child.to_string(), target) {
                if prev != target {
                    return Err(Error::parse(
                        lineno,
                        format!("child class `{child}` mapped to two different parents"),
                    ));
                }
            }
        }
        Ok(ClassMap { map })
    }

    pub fn lookup(&self, class_name: &str) -> Option<ClassTarget> {
        self.map.get(class_name).copied()
    }

    /// Parent index for a known, non-rejected class; rejected classes
    /// return `Ok(None)`.
    pub fn group(&self, class_name: &str) -> Result<Option<usize>> {
        match self.lookup(class_name) {
            Some(ClassTarget::Parent(idx)) => Ok(Some(idx)),
            Some(ClassTarget::Rejected) => Ok(None),
            None => Err(Error::invalid(format!("unknown class name `{class_name}`"))),
        }
    }
}

/// An annotation that survived validation, carrying its parent class.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedAnnotation {
    pub image_id: String,
    pub bbox: BoundingBox,
    pub class_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageValidation {
    Kept {
        kept: Vec<GroupedAnnotation>,
        /// 0 or 1; a single incorrect annotation is removed, not fatal.
        removed_incorrect: usize,
        /// Reject-set annotations filtered after validation.
        filtered_rejected: usize,
    },
    Dropped {
        incorrect: usize,
    },
}

/// Apply the per-image validation rule: one incorrect annotation is
/// removed and the image kept; two or more drop the whole image.
/// An annotation is incorrect when its box is degenerate, extends
/// outside the image, or names a class unknown to the map. Reject-set
/// classes are valid; they are filtered out after the verdict.
pub fn validate_image(
    annotations: &[RawAnnotation],
    dims: (u32, u32),
    class_map: &ClassMap,
) -> ImageValidation {
    let (width, height) = dims;
    let mut incorrect = 0usize;
    let mut survivors: Vec<(&RawAnnotation, ClassTarget)> = Vec::with_capacity(annotations.len());
    for a in annotations {
        let target = class_map.lookup(&a.class_name);
        let ok = !a.bbox.is_degenerate() && a.bbox.inside_image(width, height) && target.is_some();
        match (ok, target) {
            (true, Some(t)) => survivors.push((a, t)),
            _ => incorrect += 1,
        }
    }
    if incorrect >= 2 {
        return ImageValidation::Dropped { incorrect };
    }
    let mut kept = Vec::with_capacity(survivors.len());
    let mut filtered_rejected = 0usize;
    for (a, target) in survivors {
        match target {
            ClassTarget::Parent(idx) => kept.push(GroupedAnnotation {
                image_id: a.image_id.clone(),
                bbox: a.bbox,
                class_index: idx,
            }),
            ClassTarget::Rejected => filtered_rejected += 1,
        }
    }
    ImageValidation::Kept { kept, removed_incorrect: incorrect, filtered_rejected }
}

/// Write validated annotations as a table keyed by parent class index.
/// This is the ground-truth format the detection evaluator consumes.
pub fn write_grouped(annotations: &[GroupedAnnotation]) -> Result<String> {
    let rows: Vec<Vec<Cell>> = annotations
        .iter()
        .map(|a| {
            vec![
                Cell::from(a.image_id.clone()),
                Cell::from(a.class_index),
                Cell::from(a.bbox.tlx),
                Cell::from(a.bbox.tly),
                Cell::from(a.bbox.brx),
                Cell::from(a.bbox.bry),
            ]
        })
        .collect();
    write_table(&["image_id", "class_index", "tlx", "tly", "brx", "bry"], &rows)
}

pub fn parse_grouped(text: &str) -> Result<Vec<GroupedAnnotation>> {
    let t = Table::parse(text)?;
    let c_id = t.column("image_id")?;
    let c_class = t.column("class_index")?;
    let c_tlx = t.column("tlx")?;
    let c_tly = t.column("tly")?;
    let c_brx = t.column("brx")?;
    let c_bry = t.column("bry")?;
    let mut out = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let class_index = t.usize_at(i, c_class)?;
        if class_index >= NUM_CLASSES {
            return Err(Error::parse(
                t.line_of(i),
                format!("class index {class_index} out of range"),
            ));
        }
        out.push(GroupedAnnotation {
            image_id: t.raw(i, c_id).to_string(),
            class_index,
            bbox: BoundingBox::new(
                t.i64_at(i, c_tlx)?,
                t.i64_at(i, c_tly)?,
                t.i64_at(i, c_brx)?,
                t.i64_at(i, c_bry)?,
            ),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedBox {
    pub class_index: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// Convert a pixel-corner box to normalized center form.
pub fn to_normalized(bbox: BoundingBox, class_index: usize, img_w: u32, img_h: u32) -> NormalizedBox {
    let wf = f64::from(img_w);
    let hf = f64::from(img_h);
    NormalizedBox {
        class_index,
        cx: (bbox.tlx + bbox.brx) as f64 / (2.0 * wf),
        cy: (bbox.tly + bbox.bry) as f64 / (2.0 * hf),
        w: (bbox.brx - bbox.tlx) as f64 / wf,
        h: (bbox.bry - bbox.tly) as f64 / hf,
    }
}

/// Inverse of `to_normalized`, rounding to integer pixel corners.
pub fn denormalize(nb: &NormalizedBox, img_w: u32, img_h: u32) -> BoundingBox {
    let wf = f64::from(img_w);
    let hf = f64::from(img_h);
    BoundingBox {
        tlx: ((nb.cx - nb.w / 2.0) * wf).round() as i64,
        tly: ((nb.cy - nb.h / 2.0) * hf).round() as i64,
        brx: ((nb.cx + nb.w / 2.0) * wf).round() as i64,
        bry: ((nb.cy + nb.h / 2.0) * hf).round() as i64,
    }
}

/// One object per line: `class cx cy w h`, space-separated, 6 decimals.
pub fn write_normalized(boxes: &[NormalizedBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            b.class_index,
            format_float(b.cx),
            format_float(b.cy),
            format_float(b.w),
            format_float(b.h)
        ));
    }
    out
}

pub fn parse_normalized(text: &str) -> Result<Vec<NormalizedBox>> {
    let mut out = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 5 {
            return Err(Error::parse(lineno, format!("expected 5 fields, found {}", tokens.len())));
        }
        let class_index: usize = tokens[0]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad class index `{}`", tokens[0])))?;
        if class_index >= NUM_CLASSES {
            return Err(Error::parse(lineno, format!("class index {class_index} out of range")));
        }
        let mut vals = [0.0f64; 4];
        for (slot, tok) in vals.iter_mut().zip(&tokens[1..]) {
            *slot = tok
                .parse()
                .map_err(|_| Error::parse(lineno, format!("expected number, found `{tok}`")))?;
        }
        out.push(NormalizedBox {
            class_index,
            cx: vals[0],
            cy: vals[1],
            w: vals[2],
            h: vals[3],
        });
    }
    Ok(out)
}
