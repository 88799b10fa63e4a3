//! Province-level ETL: aggregate detection counts per province, build
//! truck-relative detector features with sample-population columns,
//! concatenate per-model feature tables into the ensemble dataset, and
//! produce the seeded train/test province split.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::annotations::{GroupedAnnotation, NUM_CLASSES, PARENT_CLASSES};
use crate::deteval::Detection;
use crate::error::{Error, Result};
use crate::seed::shuffle;
use crate::table::{write_table, Cell, Table};

/// Class index counts are divided by.
pub const TRUCK_CLASS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ProvinceRecord {
    pub geocode: String,
    pub name: String,
    pub poverty_rate: f64,
    pub population: f64,
}

pub fn parse_provinces(text: &str) -> Result<Vec<ProvinceRecord>> {
    let t = Table::parse(text)?;
    let c_geo = t.column("geocode")?;
    let c_name = t.column("name")?;
    let c_rate = t.column("poverty_rate")?;
    let c_pop = t.column("population")?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let geocode = t.raw(i, c_geo).to_string();
        if !seen.insert(geocode.clone()) {
            return Err(Error::parse(t.line_of(i), format!("duplicate geocode `{geocode}`")));
        }
        let poverty_rate = t.f64_at(i, c_rate)?;
        if !(0.0..=1.0).contains(&poverty_rate) {
            return Err(Error::parse(
                t.line_of(i),
                format!("poverty_rate {poverty_rate} outside [0, 1]"),
            ));
        }
        out.push(ProvinceRecord {
            geocode,
            name: t.raw(i, c_name).to_string(),
            poverty_rate,
            population: t.f64_at(i, c_pop)?,
        });
    }
    Ok(out)
}

pub fn write_provinces(provinces: &[ProvinceRecord]) -> Result<String> {
    let rows: Vec<Vec<Cell>> = provinces
        .iter()
        .map(|p| {
            vec![
                Cell::from(p.geocode.clone()),
                Cell::from(p.name.clone()),
                Cell::from(p.poverty_rate),
                Cell::from(p.population),
            ]
        })
        .collect();
    write_table(&["geocode", "name", "poverty_rate", "population"], &rows)
}

/// Parse the image-to-province assignment: columns image_id, geocode.
pub fn parse_image_geocodes(text: &str) -> Result<BTreeMap<String, String>> {
    let t = Table::parse(text)?;
    let c_id = t.column("image_id")?;
    let c_geo = t.column("geocode")?;
    let mut out = BTreeMap::new();
    for i in 0..t.len() {
        let id = t.raw(i, c_id).to_string();
        if out.insert(id.clone(), t.raw(i, c_geo).to_string()).is_some() {
            return Err(Error::parse(t.line_of(i), format!("duplicate image_id `{id}`")));
        }
    }
    Ok(out)
}

/// Parse sampled-tile assignments: columns geocode, population, one row
/// per tile.
pub fn parse_tiles(text: &str) -> Result<Vec<(String, f64)>> {
    let t = Table::parse(text)?;
    let c_geo = t.column("geocode")?;
    let c_pop = t.column("population")?;
    let mut out = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        out.push((t.raw(i, c_geo).to_string(), t.f64_at(i, c_pop)?));
    }
    Ok(out)
}

/// Count detections at or above the confidence threshold per province
/// and class. Every geocode in the map's codomain gets a row, so
/// provinces whose images produced nothing still appear with zeros.
pub fn aggregate_counts(
    dets: &[Detection],
    image_geocodes: &BTreeMap<String, String>,
    conf_threshold: f64,
) -> Result<BTreeMap<String, [u64; NUM_CLASSES]>> {
    let mut counts: BTreeMap<String, [u64; NUM_CLASSES]> =
        image_geocodes.values().map(|g| (g.clone(), [0u64; NUM_CLASSES])).collect();
    let mut unmapped = BTreeSet::new();
    for d in dets {
        match image_geocodes.get(&d.image_id) {
            Some(geocode) => {
                if d.confidence >= conf_threshold {
                    counts.get_mut(geocode).unwrap()[d.class_index] += 1;
                }
            }
            None => {
                unmapped.insert(d.image_id.clone());
            }
        }
    }
    if !unmapped.is_empty() {
        let list: Vec<String> = unmapped.into_iter().collect();
        return Err(Error::invalid(format!(
            "detections reference unmapped image ids: {}",
            list.join(", ")
        )));
    }
    Ok(counts)
}

/// Divide every class count by the truck count. A zero truck count
/// divides by 1 instead and raises the warning flag, leaving absolute
/// counts in place rather than aborting the province.
pub fn relativize(counts: &[u64; NUM_CLASSES]) -> ([f64; NUM_CLASSES], bool) {
    let trucks = counts[TRUCK_CLASS];
    let truck_zero = trucks == 0;
    let divisor = if truck_zero { 1.0 } else { trucks as f64 };
    let mut rel = [0.0f64; NUM_CLASSES];
    for (slot, &c) in rel.iter_mut().zip(counts.iter()) {
        *slot = c as f64 / divisor;
    }
    (rel, truck_zero)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorFeatureRow {
    pub geocode: String,
    pub rel_counts: [f64; NUM_CLASSES],
    pub n_samples: u64,
    pub pop_sampled: f64,
    pub pop_province: f64,
}

/// Attach the three sample-coverage features to a province's relative
/// counts. `tile_populations` holds one entry per tile assigned to the
/// province; an empty slice yields the flagged zero row.
pub fn detector_features(
    geocode: &str,
    rel_counts: [f64; NUM_CLASSES],
    tile_populations: &[f64],
    pop_province: f64,
) -> DetectorFeatureRow {
    DetectorFeatureRow {
        geocode: geocode.to_string(),
        rel_counts,
        n_samples: tile_populations.len() as u64,
        pop_sampled: tile_populations.iter().sum(),
        pop_province,
    }
}

/// Feature column names of a detector feature row, in emission order.
pub fn detector_feature_names() -> Vec<String> {
    let mut names: Vec<String> = (0..NUM_CLASSES).map(|c| format!("rel_{c}")).collect();
    names.push("n_samples".to_string());
    names.push("pop_sampled".to_string());
    names.push("pop_province".to_string());
    names
}

pub fn write_detector_features(rows: &[DetectorFeatureRow]) -> Result<String> {
    let mut columns = vec!["geocode".to_string()];
    columns.extend(detector_feature_names());
    let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let table_rows: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![Cell::from(r.geocode.clone())];
            row.extend(r.rel_counts.iter().map(|&v| Cell::from(v)));
            row.push(Cell::from(r.n_samples));
            row.push(Cell::from(r.pop_sampled));
            row.push(Cell::from(r.pop_province));
            row
        })
        .collect();
    write_table(&column_refs, &table_rows)
}

/// A geocode-keyed table of named numeric features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub rows: BTreeMap<String, Vec<f64>>,
}

impl FeatureTable {
    /// Parse a table whose `geocode` column keys rows; every other
    /// column is a numeric feature in file order.
    pub fn parse(text: &str) -> Result<Self> {
        let t = Table::parse(text)?;
        let c_geo = t.column("geocode")?;
        let feature_cols: Vec<usize> = (0..t.columns.len()).filter(|&c| c != c_geo).collect();
        let feature_names: Vec<String> =
            feature_cols.iter().map(|&c| t.columns[c].clone()).collect();
        let mut rows = BTreeMap::new();
        for i in 0..t.len() {
            let geocode = t.raw(i, c_geo).to_string();
            let mut values = Vec::with_capacity(feature_cols.len());
            for &c in &feature_cols {
                values.push(t.f64_at(i, c)?);
            }
            if rows.insert(geocode.clone(), values).is_some() {
                return Err(Error::parse(t.line_of(i), format!("duplicate geocode `{geocode}`")));
            }
        }
        Ok(FeatureTable { feature_names, rows })
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRow {
    pub geocode: String,
    pub features: Vec<f64>,
    pub poverty_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleTable {
    /// Concatenated names, prefixed m0_, m1_, ... by source table order.
    pub feature_names: Vec<String>,
    /// Sorted by geocode.
    pub rows: Vec<EnsembleRow>,
}

/// Join feature tables and the province targets on geocode. By default
/// any geocode missing from one of the inputs is an error naming the
/// offenders; `permissive` downgrades that to an inner join, returning
/// the dropped geocodes as warnings.
pub fn concat_features(
    tables: &[FeatureTable],
    provinces: &[ProvinceRecord],
    permissive: bool,
) -> Result<(EnsembleTable, Vec<String>)> {
    if tables.is_empty() {
        return Err(Error::invalid("at least one feature table required"));
    }
    let province_rates: BTreeMap<&str, f64> =
        provinces.iter().map(|p| (p.geocode.as_str(), p.poverty_rate)).collect();

    let mut key_sets: Vec<BTreeSet<&str>> = tables
        .iter()
        .map(|t| t.rows.keys().map(String::as_str).collect::<BTreeSet<&str>>())
        .collect();
    key_sets.push(province_rates.keys().copied().collect());

    let union: BTreeSet<&str> = key_sets.iter().flatten().copied().collect();
    let common: BTreeSet<&str> = union
        .iter()
        .filter(|g| key_sets.iter().all(|s| s.contains(**g)))
        .copied()
        .collect();
    let missing: Vec<&str> = union.difference(&common).copied().collect();

    let mut warnings = Vec::new();
    if !missing.is_empty() {
        let msg = format!(
            "geocodes missing from at least one input: {}",
            missing.join(", ")
        );
        if permissive {
            warnings.push(msg);
        } else {
            return Err(Error::invalid(msg));
        }
    }

    let mut feature_names = Vec::new();
    for (i, t) in tables.iter().enumerate() {
        for name in &t.feature_names {
            feature_names.push(format!("m{i}_{name}"));
        }
    }
    let rows: Vec<EnsembleRow> = common
        .iter()
        .map(|&g| {
            let mut features = Vec::with_capacity(feature_names.len());
            for t in tables {
                features.extend_from_slice(&t.rows[g]);
            }
            EnsembleRow {
                geocode: g.to_string(),
                features,
                poverty_rate: province_rates[g],
            }
        })
        .collect();
    Ok((EnsembleTable { feature_names, rows }, warnings))
}

pub fn write_ensemble(table: &EnsembleTable) -> Result<String> {
    let mut columns = vec!["geocode".to_string()];
    columns.extend(table.feature_names.iter().cloned());
    columns.push("poverty_rate".to_string());
    let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let rows: Vec<Vec<Cell>> = table
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![Cell::from(r.geocode.clone())];
            row.extend(r.features.iter().map(|&v| Cell::from(v)));
            row.push(Cell::from(r.poverty_rate));
            row
        })
        .collect();
    write_table(&column_refs, &rows)
}

/// Parse an ensemble table: geocode first, poverty_rate last, features
/// between.
pub fn parse_ensemble(text: &str) -> Result<EnsembleTable> {
    let t = Table::parse(text)?;
    if t.columns.first().map(String::as_str) != Some("geocode")
        || t.columns.last().map(String::as_str) != Some("poverty_rate")
    {
        return Err(Error::invalid(
            "ensemble table must start with `geocode` and end with `poverty_rate`",
        ));
    }
    let width = t.columns.len() - 2;
    let feature_names = t.columns[1..=width].to_vec();
    let mut rows = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let mut features = Vec::with_capacity(width);
        for c in 1..=width {
            features.push(t.f64_at(i, c)?);
        }
        rows.push(EnsembleRow {
            geocode: t.raw(i, 0).to_string(),
            features,
            poverty_rate: t.f64_at(i, width + 1)?,
        });
    }
    rows.sort_by(|a, b| a.geocode.cmp(&b.geocode));
    Ok(EnsembleTable { feature_names, rows })
}

/// Seeded train/test split over geocodes: sort, shuffle, take the first
/// round(test_fraction * n) as the test set. Outputs are sorted, so the
/// manifest is byte-stable for a given seed.
pub fn split_provinces(
    geocodes: &[String],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    if geocodes.len() < 5 {
        return Err(Error::invalid(format!(
            "need at least 5 geocodes to split, got {}",
            geocodes.len()
        )));
    }
    let mut sorted: Vec<String> = geocodes.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("duplicate geocodes in split input"));
    }
    let test_size = (test_fraction * sorted.len() as f64).round() as usize;
    if test_size == 0 || test_size >= sorted.len() {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} with {} geocodes rounds to an empty side",
            sorted.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle(&mut rng, &mut sorted);
    let mut test: Vec<String> = sorted[..test_size].to_vec();
    let mut train: Vec<String> = sorted[test_size..].to_vec();
    test.sort();
    train.sort();
    Ok((train, test))
}

/// Serialize a split as a manifest: geocode, split in {train, test},
/// sorted by geocode.
pub fn write_split_manifest(train: &[String], test: &[String]) -> Result<String> {
    let mut entries: Vec<(&str, &str)> = train
        .iter()
        .map(|g| (g.as_str(), "train"))
        .chain(test.iter().map(|g| (g.as_str(), "test")))
        .collect();
    entries.sort();
    let rows: Vec<Vec<Cell>> =
        entries.iter().map(|(g, s)| vec![Cell::from(*g), Cell::from(*s)]).collect();
    write_table(&["geocode", "split"], &rows)
}

pub fn parse_split_manifest(text: &str) -> Result<(Vec<String>, Vec<String>)> {
    let t = Table::parse(text)?;
    let c_geo = t.column("geocode")?;
    let c_split = t.column("split")?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..t.len() {
        let geocode = t.raw(i, c_geo).to_string();
        match t.raw(i, c_split) {
            "train" => train.push(geocode),
            "test" => test.push(geocode),
            other => {
                return Err(Error::parse(
                    t.line_of(i),
                    format!("split must be `train` or `test`, found `{other}`"),
                ))
            }
        }
    }
    Ok((train, test))
}

/// Classes whose instance count falls below `min_instances`, with their
/// counts.
pub fn check_class_coverage(
    annotations: &[GroupedAnnotation],
    min_instances: u64,
) -> Vec<(usize, u64)> {
    let mut counts = [0u64; NUM_CLASSES];
    for a in annotations {
        counts[a.class_index] += 1;
    }
    counts
        .iter()
        .enumerate()
        .filter(|(_, &n)| n < min_instances)
        .map(|(c, &n)| (c, n))
        .collect()
}

/// Human-readable names for a coverage report.
pub fn coverage_report(deficient: &[(usize, u64)], min_instances: u64) -> Vec<String> {
    deficient
        .iter()
        .map(|&(c, n)| {
            format!(
                "class `{}` has {n} instances, below the minimum {min_instances}",
                PARENT_CLASSES[c]
            )
        })
        .collect()
}
