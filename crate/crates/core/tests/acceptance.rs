//! End-to-end acceptance checks. Each test prints one PASS/FAIL line so
//! the suite doubles as a release checklist; a FAIL line is followed by
//! the panic that carries the detail.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use povmap::annotations::{
    validate_image, BoundingBox, ClassMap, ClassTarget, GroupedAnnotation, ImageValidation,
    RawAnnotation, NUM_CLASSES,
};
use povmap::deteval::{match_and_ap, Detection};
use povmap::etl::{
    aggregate_counts, concat_features, detector_features, relativize, split_provinces,
    FeatureTable, ProvinceRecord,
};
use povmap::gmm::{fit_gmm_1d, GmmFitOptions};
use povmap::ridge::{default_lambda_grid, kfold_cv, r_squared, ridge_fit};
use povmap::sampler::QuadrantTable;
use povmap::seed::{stage_rng, uniform_f64};
use povmap::table::{write_table, Cell};

type CheckResult = Result<(), String>;

fn check(number: usize, name: &str, body: impl FnOnce() -> CheckResult) {
    match body() {
        Ok(()) => println!("acceptance {number} {name}: PASS"),
        Err(message) => {
            println!("acceptance {number} {name}: FAIL ({message})");
            panic!("acceptance {number} {name}: {message}");
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !($cond) {
            return Err(format!($($arg)*));
        }
    };
}

/// Weight sums of the 4763x3064 demonstration image, with the cumulative
/// interval table worked out by hand from sum_w / 21190.
const REF_SUM_W: [u64; 16] =
    [15, 0, 2058, 655, 0, 0, 2632, 2220, 0, 1117, 3048, 3187, 0, 4106, 1040, 1112];
const REF_PROB: [f64; 16] = [
    0.00070788, 0.0, 0.09712128, 0.030910807, 0.0, 0.0, 0.12420953, 0.1047664, 0.0, 0.052713543,
    0.14384143, 0.15040113, 0.0, 0.19377065, 0.049079753, 0.052477583,
];
const REF_PROB_FROM: [f64; 16] = [
    0.0, 0.00070788, 0.00070788, 0.09782916, 0.12873997, 0.12873997, 0.12873997, 0.2529495,
    0.3577159, 0.3577159, 0.41042945, 0.55427086, 0.704672, 0.704672, 0.8984426, 0.9475224,
];
const REF_PROB_TO: [f64; 16] = [
    0.00070788, 0.00070788, 0.09782916, 0.12873997, 0.12873997, 0.12873997, 0.2529495, 0.3577159,
    0.3577159, 0.41042945, 0.55427086, 0.704672, 0.704672, 0.8984426, 0.9475224, 1.0,
];

fn reference_table() -> QuadrantTable {
    QuadrantTable::from_weights("104.tif", 4763, 3064, &REF_SUM_W).expect("fixture is valid")
}

#[test]
fn acceptance_1_probability_table() {
    check(1, "probability table reproduction", || {
        let table = reference_table();
        for (i, r) in table.records.iter().enumerate() {
            ensure!(r.sum_w == REF_SUM_W[i], "row {i}: sum_w {} != {}", r.sum_w, REF_SUM_W[i]);
            ensure!(
                (r.prob - REF_PROB[i]).abs() < 1e-6,
                "row {i}: prob {} != {}",
                r.prob,
                REF_PROB[i]
            );
            ensure!(
                (r.prob_from - REF_PROB_FROM[i]).abs() < 1e-6,
                "row {i}: prob_from {} != {}",
                r.prob_from,
                REF_PROB_FROM[i]
            );
            ensure!(
                (r.prob_to - REF_PROB_TO[i]).abs() < 1e-6,
                "row {i}: prob_to {} != {}",
                r.prob_to,
                REF_PROB_TO[i]
            );
        }
        ensure!(table.records[15].prob_to == 1.0, "final interval must close at exactly 1");
        Ok(())
    });
}

#[test]
fn acceptance_2_quadrant_geometry() {
    check(2, "quadrant geometry", || {
        let table = reference_table();
        for (i, r) in table.records.iter().enumerate() {
            let row_i = (i / 4) as u32;
            let col_j = (i % 4) as u32;
            ensure!(r.quad_width == 1190, "row {i}: quad_width {}", r.quad_width);
            ensure!(r.quad_height == 766, "row {i}: quad_height {}", r.quad_height);
            ensure!(
                (r.row_i, r.col_j) == (row_i, col_j),
                "row {i}: indices ({}, {})",
                r.row_i,
                r.col_j
            );
            ensure!(
                r.toleft_x == row_i * 1190,
                "row {i}: toleft_x {} != {}",
                r.toleft_x,
                row_i * 1190
            );
            ensure!(
                r.toleft_y == col_j * 766,
                "row {i}: toleft_y {} != {}",
                r.toleft_y,
                col_j * 766
            );
            ensure!(
                (r.orig_width, r.orig_height) == (4763, 3064),
                "row {i}: image dims recorded wrong"
            );
        }
        Ok(())
    });
}

#[test]
fn acceptance_3_sampling_law() {
    check(3, "seeded sampling frequencies", || {
        let table = reference_table();
        const DRAWS: usize = 100_000;
        let mut rng = stage_rng(777, "acceptance/sampling-law");
        let mut hits = [0u64; 16];
        for _ in 0..DRAWS {
            let u = uniform_f64(&mut rng);
            let idx = table.sample(u).map_err(|e| e.to_string())?;
            hits[idx] += 1;
        }
        for (i, r) in table.records.iter().enumerate() {
            if r.sum_w == 0 {
                ensure!(hits[i] == 0, "zero-weight quadrant {i} hit {} times", hits[i]);
                continue;
            }
            let expected = r.prob * DRAWS as f64;
            let sigma = (DRAWS as f64 * r.prob * (1.0 - r.prob)).sqrt();
            let delta = (hits[i] as f64 - expected).abs();
            ensure!(
                delta <= 3.0 * sigma,
                "quadrant {i}: {} hits, expected {expected:.1} +- {:.1}",
                hits[i],
                3.0 * sigma
            );
        }
        Ok(())
    });
}

/// Standard normal draw via the Box-Muller transform, so the test does
/// not depend on the library's own distributions.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = uniform_f64(rng).max(1e-300);
    let u2 = uniform_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[test]
fn acceptance_4_mixture_recovery() {
    check(4, "mixture recovery", || {
        let true_means = [0.0, 50.0, 200.0];
        let true_stds = [1.0, 5.0, 20.0];
        let mut rng = stage_rng(4, "acceptance/mixture");
        let mut values = Vec::with_capacity(3000);
        for (&mean, &std) in true_means.iter().zip(true_stds.iter()) {
            for _ in 0..1000 {
                values.push(mean + std * gaussian(&mut rng));
            }
        }
        let fit = fit_gmm_1d(&values, &GmmFitOptions { k: 3, max_iter: 500, tol: 1e-8 })
            .map_err(|e| e.to_string())?;
        for window in fit.log_likelihoods.windows(2) {
            ensure!(
                window[1] >= window[0] - 1e-9 * (1.0 + window[0].abs()),
                "log-likelihood decreased: {} -> {}",
                window[0],
                window[1]
            );
        }
        for i in 0..3 {
            // A 10% relative band is empty at a true mean of zero, so
            // the scale falls back to the component deviation.
            let tolerance = 0.10 * true_means[i].abs().max(true_stds[i]);
            let err = (fit.model.means[i] - true_means[i]).abs();
            ensure!(
                err <= tolerance,
                "component {i}: mean {} vs {} (tolerance {tolerance})",
                fit.model.means[i],
                true_means[i]
            );
        }
        Ok(())
    });
}

/// Dense normal-equation solve by Gauss-Jordan elimination with partial
/// pivoting; independent of the library's factorization.
fn gauss_jordan(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        b[col] /= p;
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = a[i][col];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                a[i][j] -= f * a[col][j];
            }
            b[i] -= f * b[col];
        }
    }
    b
}

fn oracle_ridge_weights(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let mut means = vec![0.0; d];
    for r in rows {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut stds = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in stds.iter_mut().zip(r).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut stds {
        *s = (*s / n as f64).sqrt();
    }
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..d).map(|j| (r[j] - means[j]) / stds[j]).collect())
        .collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut gram = vec![vec![0.0; d]; d];
    let mut rhs = vec![0.0; d];
    for (r, &target) in x.iter().zip(y) {
        for j in 0..d {
            rhs[j] += r[j] * (target - y_mean);
            for k in 0..d {
                gram[j][k] += r[j] * r[k];
            }
        }
    }
    for (j, row) in gram.iter_mut().enumerate() {
        row[j] += lambda;
    }
    gauss_jordan(gram, rhs)
}

#[test]
fn acceptance_5_ridge_oracle() {
    check(5, "ridge against dense solver", || {
        let mut rng = stage_rng(5, "acceptance/ridge");
        for system in 0..20 {
            let rows: Vec<Vec<f64>> =
                (0..50).map(|_| (0..8).map(|_| gaussian(&mut rng) * 3.0).collect()).collect();
            let y: Vec<f64> = rows
                .iter()
                .map(|r| {
                    r.iter().enumerate().map(|(j, v)| v * (j as f64 - 3.5)).sum::<f64>()
                        + gaussian(&mut rng)
                })
                .collect();
            for lambda in [0.0, 0.1, 10.0] {
                let model = ridge_fit(&rows, &y, lambda).map_err(|e| e.to_string())?;
                let oracle = oracle_ridge_weights(&rows, &y, lambda);
                for j in 0..8 {
                    let delta = (model.weights[j] - oracle[j]).abs();
                    ensure!(
                        delta <= 1e-8,
                        "system {system} lambda {lambda} weight {j}: |{} - {}| = {delta}",
                        model.weights[j],
                        oracle[j]
                    );
                }
            }
        }
        Ok(())
    });
}

fn oracle_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.brx.min(b.brx) - a.tlx.max(b.tlx)).max(0) as f64;
    let ih = (a.bry.min(b.bry) - a.tly.max(b.tly)).max(0) as f64;
    let inter = iw * ih;
    let union = (a.area() + b.area()) as f64 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy matching applied from scratch to a confidence-ranked prefix.
fn oracle_true_positives(prefix: &[&Detection], gts: &[GroupedAnnotation], thr: f64) -> usize {
    let mut used = vec![false; gts.len()];
    let mut tp = 0;
    for d in prefix {
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if used[gi] || g.image_id != d.image_id || g.class_index != d.class_index {
                continue;
            }
            let overlap = oracle_iou(&d.bbox, &g.bbox);
            if overlap >= thr {
                // Strictly-greater keeps the earliest ground truth on ties.
                if best.map_or(true, |(_, b)| overlap > b) {
                    best = Some((gi, overlap));
                }
            }
        }
        if let Some((gi, _)) = best {
            used[gi] = true;
            tp += 1;
        }
    }
    tp
}

fn oracle_ap(dets: &[Detection], gts: &[GroupedAnnotation], thr: f64) -> f64 {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b].confidence.partial_cmp(&dets[a].confidence).unwrap().then(a.cmp(&b))
    });
    let mut points = Vec::with_capacity(order.len());
    for k in 1..=order.len() {
        let prefix: Vec<&Detection> = order[..k].iter().map(|&i| &dets[i]).collect();
        let tp = oracle_true_positives(&prefix, gts, thr);
        points.push((tp as f64 / gts.len() as f64, tp as f64 / k as f64));
    }
    let mut total = 0.0;
    for level in 0..=100 {
        let level = level as f64 / 100.0;
        let best = points
            .iter()
            .filter(|(recall, _)| *recall >= level)
            .map(|&(_, precision)| precision)
            .fold(0.0, f64::max);
        total += best;
    }
    total / 101.0
}

#[test]
fn acceptance_6_average_precision_oracle() {
    check(6, "average precision against enumeration", || {
        let mut rng = stage_rng(6, "acceptance/ap");
        let small_box = |rng: &mut ChaCha8Rng| {
            // An 8x8 world with 1-3 px boxes makes overlap ties common.
            let tlx = (uniform_f64(rng) * 6.0) as i64;
            let tly = (uniform_f64(rng) * 6.0) as i64;
            let w = 1 + (uniform_f64(rng) * 3.0) as i64;
            let h = 1 + (uniform_f64(rng) * 3.0) as i64;
            BoundingBox::new(tlx, tly, tlx + w, tly + h)
        };
        let mut cases = 0usize;
        for n_det in 0..=5usize {
            for n_gt in 1..=3usize {
                for _ in 0..12 {
                    let gts: Vec<GroupedAnnotation> = (0..n_gt)
                        .map(|_| GroupedAnnotation {
                            image_id: format!("img{}", (uniform_f64(&mut rng) * 2.0) as u32),
                            bbox: small_box(&mut rng),
                            class_index: 0,
                        })
                        .collect();
                    let dets: Vec<Detection> = (0..n_det)
                        .map(|_| Detection {
                            image_id: format!("img{}", (uniform_f64(&mut rng) * 2.0) as u32),
                            class_index: 0,
                            bbox: small_box(&mut rng),
                            // Coarse confidences force ranking ties.
                            confidence: (1.0 + (uniform_f64(&mut rng) * 9.0).floor()) / 10.0,
                        })
                        .collect();
                    for thr in [0.25, 0.5, 0.75] {
                        let (ap, _) = match_and_ap(&dets, &gts, 0, thr)
                            .ok_or("class with ground truth must produce an AP")?;
                        let expected = oracle_ap(&dets, &gts, thr);
                        ensure!(
                            (ap - expected).abs() <= 1e-9,
                            "case {cases} thr {thr}: ap {ap} != oracle {expected}"
                        );
                        cases += 1;
                    }
                }
            }
        }
        ensure!(cases >= 200, "only {cases} cases enumerated");
        Ok(())
    });
}

#[test]
fn acceptance_7_synthetic_provinces_end_to_end() {
    check(7, "synthetic province regression", || {
        const N: usize = 180;
        let mut rng = stage_rng(7, "acceptance/provinces");
        let geocodes: Vec<String> = (0..N).map(|i| format!("PH{i:03}")).collect();

        let widths = [4usize, 3, 5];
        let mut tables = Vec::new();
        let mut features: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (t, &width) in widths.iter().enumerate() {
            let names: Vec<String> = (0..width).map(|j| format!("f{t}_{j}")).collect();
            let mut rows = BTreeMap::new();
            for g in &geocodes {
                let values: Vec<f64> = (0..width).map(|_| uniform_f64(&mut rng) * 10.0).collect();
                features.entry(g.clone()).or_default().extend(values.iter());
                rows.insert(g.clone(), values);
            }
            tables.push(FeatureTable { feature_names: names, rows });
        }

        let total_width: usize = widths.iter().sum();
        let true_weights: Vec<f64> =
            (0..total_width).map(|j| ((j as f64) * 0.37).sin() + 0.2).collect();
        let raw: BTreeMap<&str, f64> = features
            .iter()
            .map(|(g, x)| {
                (g.as_str(), x.iter().zip(&true_weights).map(|(v, w)| v * w).sum::<f64>())
            })
            .collect();
        let lo = raw.values().cloned().fold(f64::INFINITY, f64::min);
        let hi = raw.values().cloned().fold(f64::NEG_INFINITY, f64::max);
        // Rates squeezed into [0.1, 0.9] leave 2% noise far from the
        // [0, 1] bounds, keeping the target exactly linear in features.
        let range = 0.8;
        let sigma = 0.02 * range;
        let provinces: Vec<ProvinceRecord> = geocodes
            .iter()
            .map(|g| ProvinceRecord {
                geocode: g.clone(),
                name: format!("Province {g}"),
                poverty_rate: 0.1
                    + range * (raw[g.as_str()] - lo) / (hi - lo)
                    + sigma * gaussian(&mut rng),
                population: 100_000.0,
            })
            .collect();
        for p in &provinces {
            ensure!(
                (0.0..=1.0).contains(&p.poverty_rate),
                "rate {} escaped the unit interval",
                p.poverty_rate
            );
        }

        let (ensemble, warnings) =
            concat_features(&tables, &provinces, false).map_err(|e| e.to_string())?;
        ensure!(warnings.is_empty(), "strict concat warned: {warnings:?}");
        ensure!(ensemble.rows.len() == N, "ensemble has {} rows", ensemble.rows.len());

        let (train, test) =
            split_provinces(&geocodes, 0.2, 20_26).map_err(|e| e.to_string())?;
        ensure!(test.len() == 36, "test size {} != 36", test.len());
        ensure!(train.len() == 144, "train size {} != 144", train.len());

        let by_geo: BTreeMap<&str, (&Vec<f64>, f64)> = ensemble
            .rows
            .iter()
            .map(|r| (r.geocode.as_str(), (&r.features, r.poverty_rate)))
            .collect();
        let collect = |set: &[String]| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for g in set {
                let (x, y) = by_geo[g.as_str()];
                xs.push(x.clone());
                ys.push(y);
            }
            (xs, ys)
        };
        let (x_train, y_train) = collect(&train);
        let (x_test, y_test) = collect(&test);

        let report = kfold_cv(&x_train, &y_train, 5, &default_lambda_grid(), 2026)
            .map_err(|e| e.to_string())?;
        ensure!(report.mean_r2 >= 0.90, "cv mean r2 {} below 0.90", report.mean_r2);

        let model = ridge_fit(&x_train, &y_train, report.lambda).map_err(|e| e.to_string())?;
        let predictions = model.predict(&x_test).map_err(|e| e.to_string())?;
        let holdout = r_squared(&y_test, &predictions).map_err(|e| e.to_string())?;
        ensure!(holdout >= 0.90, "holdout r2 {holdout} below 0.90");
        Ok(())
    });
}

#[test]
fn acceptance_8_annotation_rules() {
    check(8, "annotation validation rules", || {
        let map = ClassMap::xview();
        let dims = (200u32, 200u32);
        let good = |class: &str, offset: i64| RawAnnotation {
            image_id: "img".to_string(),
            bbox: BoundingBox::new(10 + offset, 10, 60 + offset, 60),
            class_name: class.to_string(),
        };
        let degenerate = RawAnnotation {
            image_id: "img".to_string(),
            bbox: BoundingBox::new(50, 50, 40, 90),
            class_name: "Bus".to_string(),
        };
        let outside = RawAnnotation {
            image_id: "img".to_string(),
            bbox: BoundingBox::new(150, 150, 250, 199),
            class_name: "Bus".to_string(),
        };

        match validate_image(&[good("Small Car", 0), degenerate.clone()], dims, &map) {
            ImageValidation::Kept { kept, removed_incorrect, .. } => {
                ensure!(kept.len() == 1, "one valid box should survive, got {}", kept.len());
                ensure!(removed_incorrect == 1, "one incorrect box should be removed");
            }
            ImageValidation::Dropped { .. } => {
                return Err("single incorrect annotation must not drop the image".to_string())
            }
        }
        match validate_image(
            &[good("Small Car", 0), degenerate.clone(), outside.clone()],
            dims,
            &map,
        ) {
            ImageValidation::Dropped { incorrect } => {
                ensure!(incorrect == 2, "expected 2 incorrect, got {incorrect}");
            }
            ImageValidation::Kept { .. } => {
                return Err("two incorrect annotations must drop the image".to_string())
            }
        }
        // A reject-set class is filtered without counting as incorrect.
        match validate_image(&[good("Pylon", 0), good("Small Car", 70), degenerate], dims, &map) {
            ImageValidation::Kept { kept, removed_incorrect, filtered_rejected } => {
                ensure!(kept.len() == 1 && kept[0].class_index == 1, "reject filter broke");
                ensure!(removed_incorrect == 1 && filtered_rejected == 1, "counts wrong");
            }
            ImageValidation::Dropped { .. } => {
                return Err("reject-set class must not count toward the drop rule".to_string())
            }
        }

        let parents = [
            ("Small Aircraft", 0),
            ("Cargo Plane", 0),
            ("Small Car", 1),
            ("Bus", 1),
            ("Pickup Truck", 2),
            ("Truck Tractor", 2),
            ("Locomotive", 3),
            ("Motoboat", 4),
            ("Ferry", 4),
            ("Excavator", 5),
            ("Hut/Tent", 6),
            ("Aircraft Hangar", 6),
            ("Helipad", 7),
            ("Vehicle Lot", 8),
            ("Construction Site", 9),
        ];
        for (child, parent) in parents {
            match map.lookup(child) {
                Some(ClassTarget::Parent(idx)) if idx == parent => {}
                other => return Err(format!("`{child}` mapped to {other:?}, expected {parent}")),
            }
        }
        for child in ["Pylon", "Storage Tank", "Helicopter"] {
            match map.lookup(child) {
                Some(ClassTarget::Rejected) => {}
                other => return Err(format!("`{child}` mapped to {other:?}, expected reject")),
            }
        }
        Ok(())
    });
}

mod pipeline_fixture {
    use super::*;
    use std::fmt::Write as _;

    fn grid_raster(values: impl Fn(usize) -> f64) -> String {
        let mut text = String::from(
            "ncols 10\nnrows 8\nxllcorner 120\nyllcorner 14\ncellsize 0.05\nNODATA_value -9999\n",
        );
        for row in 0..8 {
            let cells: Vec<String> =
                (0..10).map(|col| format!("{}", values(row * 10 + col))).collect();
            let _ = writeln!(text, "{}", cells.join(" "));
        }
        text
    }

    pub fn vnl() -> String {
        grid_raster(|idx| match idx % 7 {
            0 | 1 => (idx % 5) as f64 * 0.8,
            2 | 3 | 4 => 40.0 + (idx % 11) as f64 * 2.0,
            5 => 180.0 + (idx % 13) as f64 * 3.0,
            _ => -9999.0,
        })
    }

    pub fn worldpop() -> String {
        grid_raster(|idx| {
            if idx % 17 == 3 {
                -9999.0
            } else {
                match idx % 9 {
                    0 => 0.5,
                    1 => 1.0,
                    _ => 3.0 + (idx % 4) as f64,
                }
            }
        })
    }

    pub fn aoi() -> String {
        "120.02 14.02 120.48 14.02 120.48 14.38 120.02 14.38\n".to_string()
    }

    pub fn image_dims() -> String {
        let rows = [
            ("im1.tif", 400u32, 300u32),
            ("im2.tif", 500, 400),
            ("im3.tif", 420, 420),
            ("im4.tif", 380, 300),
            ("im5.tif", 400, 400),
            ("im6.tif", 450, 350),
        ];
        let cells: Vec<Vec<Cell>> = rows
            .iter()
            .map(|&(id, w, h)| vec![Cell::from(id), Cell::from(w), Cell::from(h)])
            .collect();
        write_table(&["image_id", "width", "height"], &cells).unwrap()
    }

    pub fn annotations() -> String {
        let rows: Vec<(&str, i64, i64, i64, i64, &str)> = vec![
            ("im1.tif", 10, 10, 50, 40, "Small Car"),
            ("im1.tif", 60, 15, 110, 55, "Bus"),
            ("im1.tif", 200, 100, 260, 140, "Pickup Truck"),
            ("im1.tif", 300, 200, 390, 290, "Hut/Tent"),
            ("im1.tif", 120, 220, 180, 280, "Motoboat"),
            ("im2.tif", 20, 20, 80, 70, "Cargo Plane"),
            ("im2.tif", 90, 90, 150, 150, "Excavator"),
            ("im2.tif", 300, 300, 480, 380, "Facility"),
            ("im2.tif", 200, 50, 260, 110, "Small Car"),
            ("im2.tif", 350, 120, 420, 180, "Truck Tractor"),
            ("im2.tif", 30, 250, 90, 310, "Sailboat"),
            ("im3.tif", 50, 50, 120, 120, "Helipad"),
            ("im3.tif", 150, 150, 260, 260, "Vehicle Lot"),
            ("im3.tif", 280, 280, 400, 400, "Construction Site"),
            ("im3.tif", 10, 300, 70, 360, "Bus"),
            ("im3.tif", 200, 20, 280, 90, "Dump Truck"),
            // Two incorrect boxes: the whole image is dropped.
            ("im4.tif", 10, 10, 5, 40, "Small Car"),
            ("im4.tif", 0, 0, 400, 200, "Bus"),
            ("im4.tif", 50, 50, 100, 100, "Small Car"),
            // One incorrect box: removed, image kept.
            ("im5.tif", 30, 30, 20, 60, "Bus"),
            ("im5.tif", 100, 100, 180, 160, "Small Car"),
            ("im5.tif", 200, 200, 300, 300, "Cargo Truck"),
            ("im5.tif", 310, 50, 390, 130, "Ferry"),
            // Reject-set children are filtered but are not errors.
            ("im6.tif", 40, 40, 100, 100, "Pylon"),
            ("im6.tif", 150, 40, 210, 100, "Storage Tank"),
            ("im6.tif", 250, 40, 310, 100, "Helicopter"),
            ("im6.tif", 40, 150, 100, 210, "Small Car"),
            ("im6.tif", 150, 150, 290, 290, "Shed"),
            ("im6.tif", 300, 150, 440, 290, "Mobile Crane"),
        ];
        let cells: Vec<Vec<Cell>> = rows
            .iter()
            .map(|&(id, tlx, tly, brx, bry, class)| {
                vec![
                    Cell::from(id),
                    Cell::from(tlx),
                    Cell::from(tly),
                    Cell::from(brx),
                    Cell::from(bry),
                    Cell::from(class),
                ]
            })
            .collect();
        write_table(&["image_id", "tlx", "tly", "brx", "bry", "class_name"], &cells).unwrap()
    }

    pub fn detections() -> String {
        let mut rows: Vec<(String, usize, i64, i64, i64, i64, f64)> = vec![
            ("im1.tif".into(), 1, 12, 11, 52, 42, 0.92),
            ("im1.tif".into(), 1, 61, 16, 108, 57, 0.85),
            ("im1.tif".into(), 2, 205, 103, 258, 138, 0.78),
            ("im1.tif".into(), 6, 298, 198, 392, 292, 0.66),
            ("im1.tif".into(), 4, 118, 222, 182, 277, 0.55),
            ("im1.tif".into(), 1, 300, 20, 340, 60, 0.40),
            ("im2.tif".into(), 0, 22, 21, 78, 72, 0.90),
            ("im2.tif".into(), 5, 88, 92, 148, 148, 0.81),
            ("im2.tif".into(), 6, 310, 305, 470, 375, 0.72),
            ("im2.tif".into(), 1, 198, 52, 258, 108, 0.64),
            ("im2.tif".into(), 2, 352, 118, 418, 182, 0.57),
            ("im2.tif".into(), 3, 100, 200, 160, 260, 0.35),
            ("im3.tif".into(), 7, 48, 52, 118, 118, 0.88),
            ("im3.tif".into(), 8, 155, 148, 258, 262, 0.76),
            ("im3.tif".into(), 9, 282, 278, 398, 402, 0.69),
            ("im3.tif".into(), 1, 12, 302, 68, 358, 0.52),
            ("im3.tif".into(), 5, 198, 22, 282, 88, 0.45),
            ("im5.tif".into(), 1, 102, 98, 178, 162, 0.83),
            ("im5.tif".into(), 2, 202, 198, 298, 302, 0.74),
            ("im5.tif".into(), 4, 312, 52, 388, 128, 0.61),
            ("im6.tif".into(), 1, 42, 148, 98, 212, 0.79),
            ("im6.tif".into(), 6, 148, 152, 292, 288, 0.68),
            ("im6.tif".into(), 5, 302, 148, 438, 292, 0.59),
            ("im6.tif".into(), 0, 50, 250, 110, 310, 0.30),
        ];
        // Spread synthetic detections over the ETL-only images. Images
        // congruent to 6 mod 10 land in G07, which gets no trucks so the
        // fallback path stays exercised.
        for i in 0..20usize {
            let id = format!("etl_img_{i:02}");
            let classes: &[usize] = if i % 10 == 6 { &[1, 4, 6] } else { &[1, 2, 5, 6] };
            for (k, &class) in classes.iter().enumerate() {
                let base = 10 + (k as i64) * 40;
                rows.push((
                    id.clone(),
                    class,
                    base,
                    base,
                    base + 30,
                    base + 25,
                    0.35 + ((i + k) % 12) as f64 * 0.05,
                ));
            }
        }
        let cells: Vec<Vec<Cell>> = rows
            .iter()
            .map(|(id, class, tlx, tly, brx, bry, conf)| {
                vec![
                    Cell::from(id.clone()),
                    Cell::from(*class),
                    Cell::from(*tlx),
                    Cell::from(*tly),
                    Cell::from(*brx),
                    Cell::from(*bry),
                    Cell::from(*conf),
                ]
            })
            .collect();
        write_table(
            &["image_id", "class_index", "tlx", "tly", "brx", "bry", "confidence"],
            &cells,
        )
        .unwrap()
    }

    pub fn image_geocodes() -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("im1.tif".into(), "G01".into()),
            ("im2.tif".into(), "G01".into()),
            ("im3.tif".into(), "G02".into()),
            ("im4.tif".into(), "G03".into()),
            ("im5.tif".into(), "G04".into()),
            ("im6.tif".into(), "G05".into()),
        ];
        for i in 0..20usize {
            rows.push((format!("etl_img_{i:02}"), format!("G{:02}", (i % 10) + 1)));
        }
        let cells: Vec<Vec<Cell>> = rows
            .iter()
            .map(|(id, g)| vec![Cell::from(id.clone()), Cell::from(g.clone())])
            .collect();
        write_table(&["image_id", "geocode"], &cells).unwrap()
    }

    pub fn provinces() -> String {
        let cells: Vec<Vec<Cell>> = (1..=10usize)
            .map(|g| {
                vec![
                    Cell::from(format!("G{g:02}")),
                    Cell::from(format!("Province {g:02}")),
                    Cell::from(0.08 + g as f64 * 0.04),
                    Cell::from(50_000.0 + g as f64 * 17_000.0),
                ]
            })
            .collect();
        write_table(&["geocode", "name", "poverty_rate", "population"], &cells).unwrap()
    }

    pub fn tiles() -> String {
        let mut cells = Vec::new();
        for g in 1..=10usize {
            for j in 0..(3 + g % 3) {
                cells.push(vec![
                    Cell::from(format!("G{g:02}")),
                    Cell::from(120.5 + g as f64 * 3.0 + j as f64 * 2.25),
                ]);
            }
        }
        write_table(&["geocode", "population"], &cells).unwrap()
    }

    pub fn upstream(prefix: &str, width: usize, slope: f64) -> String {
        let mut columns = vec!["geocode".to_string()];
        columns.extend((0..width).map(|j| format!("{prefix}{j}")));
        let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
        let cells: Vec<Vec<Cell>> = (1..=10usize)
            .map(|g| {
                let mut row = vec![Cell::from(format!("G{g:02}"))];
                row.extend(
                    (0..width)
                        .map(|j| Cell::from(1.5 + slope * g as f64 + j as f64 * 0.75)),
                );
                row
            })
            .collect();
        write_table(&column_refs, &cells).unwrap()
    }
}

/// Run one subcommand of the release binary against a fixture directory,
/// with the environment cleared so only flags steer it.
fn run_cli(args: &[&str]) -> Result<String, String> {
    let output = Command::new(env!("CARGO_BIN_EXE_povmap"))
        .args(args)
        .env_clear()
        .output()
        .map_err(|e| format!("cannot launch binary: {e}"))?;
    if !output.status.success() {
        return Err(format!(
            "`povmap {}` exited with {:?}: {}",
            args.join(" "),
            output.status.code(),
            String::from_utf8_lossy(&output.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&output.stdout).to_string())
}

fn write_fixture(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, content).expect("fixture write");
    path
}

fn full_pipeline(fixtures: &Path, out: &Path, seed: &str) -> Result<(), String> {
    let f = |name: &str| fixtures.join(name).display().to_string();
    let o = out.display().to_string();
    let og = |name: &str| out.join(name).display().to_string();
    run_cli(&[
        "--out", &o, "centroids",
        "--vnl", &f("vnl.asc"), "--worldpop", &f("pop.asc"), "--aoi", &f("aoi.txt"),
    ])?;
    run_cli(&["--out", &o, "nightlabels", "--centroids", &og("centroids.tsv")])?;
    run_cli(&[
        "--out", &o, "annotations",
        "--annotations", &f("annos.tsv"), "--image-dims", &f("dims.tsv"),
    ])?;
    run_cli(&[
        "--out", &o, "--seed", seed, "sampler",
        "--annotations", &f("annos.tsv"), "--image-dims", &f("dims.tsv"),
        "--chip-size", "64", "--chips-per-image", "3",
    ])?;
    run_cli(&[
        "--out", &o, "eval-det",
        "--detections", &f("dets.tsv"), "--ground-truth", &og("grouped.tsv"),
    ])?;
    run_cli(&[
        "--out", &o, "etl",
        "--detections", &f("dets.tsv"), "--image-geocodes", &f("imggeo.tsv"),
        "--provinces", &f("provinces.tsv"), "--tiles", &f("tiles.tsv"),
    ])?;
    run_cli(&[
        "--out", &o, "ensemble",
        "--features", &og("detector_features.tsv"),
        "--features", &f("up_a.tsv"), "--features", &f("up_b.tsv"),
        "--provinces", &f("provinces.tsv"),
    ])?;
    run_cli(&["--out", &o, "--seed", seed, "split", "--provinces", &f("provinces.tsv")])?;
    run_cli(&[
        "--out", &o, "regress",
        "--ensemble", &og("ensemble.tsv"), "--split", &og("split.tsv"),
    ])?;
    run_cli(&["--out", &o, "--seed", seed, "cv", "--ensemble", &og("ensemble.tsv")])?;
    let dry = out.join("dry").display().to_string();
    run_cli(&[
        "--out", &dry, "sampler", "--dry-run", "--quadrant-weights", &f("weights.tsv"),
    ])?;
    Ok(())
}

fn hash_tree(root: &Path) -> BTreeMap<String, [u8; 32]> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, [u8; 32]>) {
        for entry in std::fs::read_dir(dir).expect("readable output dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let bytes = std::fs::read(&path).expect("readable output file");
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().to_string();
                out.insert(rel, Sha256::digest(&bytes).into());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn acceptance_9_pipeline_determinism() {
    check(9, "byte-identical pipeline reruns", || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let fixtures = dir.path().join("fixtures");
        std::fs::create_dir_all(&fixtures).map_err(|e| e.to_string())?;
        write_fixture(&fixtures, "vnl.asc", &pipeline_fixture::vnl());
        write_fixture(&fixtures, "pop.asc", &pipeline_fixture::worldpop());
        write_fixture(&fixtures, "aoi.txt", &pipeline_fixture::aoi());
        write_fixture(&fixtures, "dims.tsv", &pipeline_fixture::image_dims());
        write_fixture(&fixtures, "annos.tsv", &pipeline_fixture::annotations());
        write_fixture(&fixtures, "dets.tsv", &pipeline_fixture::detections());
        write_fixture(&fixtures, "imggeo.tsv", &pipeline_fixture::image_geocodes());
        write_fixture(&fixtures, "provinces.tsv", &pipeline_fixture::provinces());
        write_fixture(&fixtures, "tiles.tsv", &pipeline_fixture::tiles());
        write_fixture(&fixtures, "up_a.tsv", &pipeline_fixture::upstream("fa", 2, 0.31));
        write_fixture(&fixtures, "up_b.tsv", &pipeline_fixture::upstream("fb", 3, -0.17));
        let mut weight_cols = vec!["orig_filename".to_string(), "orig_width".into(), "orig_height".into()];
        for row_i in 0..4 {
            for col_j in 0..4 {
                weight_cols.push(format!("w{row_i}{col_j}"));
            }
        }
        let weight_refs: Vec<&str> = weight_cols.iter().map(String::as_str).collect();
        let mut weight_row = vec![Cell::from("104.tif"), Cell::from(4763u32), Cell::from(3064u32)];
        weight_row.extend(REF_SUM_W.iter().map(|&w| Cell::from(w)));
        write_fixture(
            &fixtures,
            "weights.tsv",
            &write_table(&weight_refs, &[weight_row]).unwrap(),
        );

        let run_a = dir.path().join("run_a");
        let run_b = dir.path().join("run_b");
        full_pipeline(&fixtures, &run_a, "4242")?;
        full_pipeline(&fixtures, &run_b, "4242")?;

        let hashes_a = hash_tree(&run_a);
        let hashes_b = hash_tree(&run_b);
        ensure!(
            hashes_a.len() >= 25,
            "expected a full artifact tree, found {} files",
            hashes_a.len()
        );
        let keys_a: Vec<&String> = hashes_a.keys().collect();
        let keys_b: Vec<&String> = hashes_b.keys().collect();
        ensure!(keys_a == keys_b, "file sets differ: {keys_a:?} vs {keys_b:?}");
        for (path, hash) in &hashes_a {
            ensure!(hashes_b[path] == *hash, "{path} differs between identical runs");
        }
        Ok(())
    });
}

#[test]
fn acceptance_10_threshold_counts_and_truck_relative() {
    check(10, "confidence thresholds and relative counts", || {
        let geocodes: BTreeMap<String, String> =
            [("imgA".to_string(), "G1".to_string())].into_iter().collect();
        let mk = |conf: f64| Detection {
            image_id: "imgA".to_string(),
            class_index: 3,
            bbox: BoundingBox::new(0, 0, 10, 10),
            confidence: conf,
        };
        let dets: Vec<Detection> =
            [0.45, 0.45, 0.55, 0.55, 0.55].iter().map(|&c| mk(c)).collect();
        let at_04 = aggregate_counts(&dets, &geocodes, 0.4).map_err(|e| e.to_string())?;
        let at_05 = aggregate_counts(&dets, &geocodes, 0.5).map_err(|e| e.to_string())?;
        ensure!(at_04["G1"][3] == 5, "count at 0.4 is {}, expected 5", at_04["G1"][3]);
        ensure!(at_05["G1"][3] == 3, "count at 0.5 is {}, expected 3", at_05["G1"][3]);
        ensure!(at_04["G1"].iter().sum::<u64>() == 5, "other classes leaked in");

        let mut counts = [0u64; NUM_CLASSES];
        counts[0] = 6;
        counts[1] = 3;
        counts[2] = 2;
        let (rel, truck_zero) = relativize(&counts);
        ensure!(!truck_zero, "trucks present, no fallback expected");
        ensure!(rel[0] == 3.0 && rel[1] == 1.5 && rel[2] == 1.0, "division wrong: {rel:?}");
        ensure!(rel[3..].iter().all(|&v| v == 0.0), "empty classes must stay zero");

        let mut no_trucks = [0u64; NUM_CLASSES];
        no_trucks[0] = 4;
        no_trucks[1] = 2;
        let (rel, truck_zero) = relativize(&no_trucks);
        ensure!(truck_zero, "zero trucks must raise the fallback flag");
        ensure!(rel[0] == 4.0 && rel[1] == 2.0, "fallback must keep absolute counts: {rel:?}");

        // The flagged row flows through to the feature table unchanged.
        let row = detector_features("G1", rel, &[10.0, 12.5], 90_000.0);
        ensure!(row.n_samples == 2, "tile count wrong");
        ensure!((row.pop_sampled - 22.5).abs() < 1e-12, "tile population sum wrong");
        ensure!(row.pop_province == 90_000.0, "province population wrong");
        Ok(())
    });
}
