//! Pipeline configuration: a flat `key = value` file with typed keys,
//! environment overrides, and defaults. Precedence, lowest to highest:
//! built-in default, config file, `POVMAP_*` environment variable,
//! command-line flag (flags are applied by the caller after loading).

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Keys that name input or output files. `features` may hold several
/// whitespace-separated paths.
pub const PATH_KEYS: [&str; 18] = [
    "vnl",
    "worldpop",
    "aoi",
    "centroids",
    "annotations",
    "image_dims",
    "class_map",
    "detections",
    "ground_truth",
    "image_geocodes",
    "tiles",
    "provinces",
    "features",
    "ensemble",
    "split",
    "quadrant_weights",
    "gmm_model",
    "ridge_model",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub tile_side_m: f64,
    pub min_pop: f64,
    pub gmm_k: usize,
    pub gmm_max_iter: usize,
    pub gmm_tol: f64,
    pub chip_size: u32,
    pub chips_per_image: u32,
    pub clip_retention: f64,
    pub conf_threshold: f64,
    pub iou_threshold: f64,
    pub test_fraction: f64,
    pub cv_k: usize,
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    pub min_instances: u64,
    /// No default: randomized subcommands fail without one.
    pub seed: Option<u64>,
    /// 0 = one thread per core.
    pub threads: usize,
    paths: BTreeMap<String, String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tile_side_m: 450.0,
            min_pop: 2.0,
            gmm_k: 3,
            gmm_max_iter: 500,
            gmm_tol: 1e-8,
            chip_size: 416,
            chips_per_image: 8,
            clip_retention: 0.25,
            conf_threshold: 0.5,
            iou_threshold: 0.5,
            test_fraction: 0.2,
            cv_k: 5,
            lambda: 1.0,
            lambda_grid: crate::ridge::default_lambda_grid(),
            min_instances: 10,
            seed: None,
            threads: 0,
            paths: BTreeMap::new(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("config key `{key}`: bad value `{value}`")))
}

impl PipelineConfig {
    /// Apply one key/value pair, validating the range. Unknown keys are
    /// an error naming the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "tile_side_m" => {
                let v: f64 = parse_num(key, value)?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid(format!("`{key}` must be positive, got {value}")));
                }
                self.tile_side_m = v;
            }
            "min_pop" => {
                let v: f64 = parse_num(key, value)?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::invalid(format!("`{key}` must be non-negative, got {value}")));
                }
                self.min_pop = v;
            }
            "gmm_k" => {
                let v: usize = parse_num(key, value)?;
                if v == 0 {
                    return Err(Error::invalid(format!("`{key}` must be positive, got {value}")));
                }
                self.gmm_k = v;
            }
            "gmm_max_iter" => {
                let v: usize = parse_num(key, value)?;
                if v == 0 {
                    return Err(Error::invalid(format!("`{key}` must be positive, got {value}")));
                }
                self.gmm_max_iter = v;
            }
            "gmm_tol" => {
                let v: f64 = parse_num(key, value)?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid(format!("`{key}` must be positive, got {value}")));
                }
                self.gmm_tol = v;
            }
            "chip_size" => {
                let v: u32 = parse_num(key, value)?;
                if v == 0 {
                    return Err(Error::invalid(format!("`{key}` must be positive, got {value}")));
                }
                self.chip_size = v;
            }
            "chips_per_image" => {
                let v: u32 = parse_num(key, value)?;
                if v == 0 {
                    return Err(Error::invalid(format!("`{key}` must be positive, got {value}")));
                }
                self.chips_per_image = v;
            }
            "clip_retention" => {
                let v: f64 = parse_num(key, value)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!("`{key}` must be in [0, 1], got {value}")));
                }
                self.clip_retention = v;
            }
            "conf_threshold" => {
                let v: f64 = parse_num(key, value)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!("`{key}` must be in [0, 1], got {value}")));
                }
                self.conf_threshold = v;
            }
            "iou_threshold" => {
                let v: f64 = parse_num(key, value)?;
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::invalid(format!("`{key}` must be in (0, 1], got {value}")));
                }
                self.iou_threshold = v;
            }
            "test_fraction" => {
                let v: f64 = parse_num(key, value)?;
                if !(v > 0.0 && v < 1.0) {
                    return Err(Error::invalid(format!("`{key}` must be in (0, 1), got {value}")));
                }
                self.test_fraction = v;
            }
            "cv_k" => {
                let v: usize = parse_num(key, value)?;
                if v < 2 {
                    return Err(Error::invalid(format!("`{key}` must be at least 2, got {value}")));
                }
                self.cv_k = v;
            }
            "lambda" => {
                let v: f64 = parse_num(key, value)?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::invalid(format!("`{key}` must be non-negative, got {value}")));
                }
                self.lambda = v;
            }
            "lambda_grid" => {
                let grid: Result<Vec<f64>> = value
                    .split_whitespace()
                    .map(|tok| parse_num::<f64>(key, tok))
                    .collect();
                let grid = grid?;
                if grid.is_empty() {
                    return Err(Error::invalid("`lambda_grid` must not be empty"));
                }
                if grid.iter().any(|&l| !(l.is_finite() && l >= 0.0)) {
                    return Err(Error::invalid("`lambda_grid` values must be non-negative"));
                }
                self.lambda_grid = grid;
            }
            "min_instances" => self.min_instances = parse_num(key, value)?,
            "seed" => self.seed = Some(parse_num(key, value)?),
            "threads" => self.threads = parse_num(key, value)?,
            _ if PATH_KEYS.contains(&key) => {
                self.paths.insert(key.to_string(), value.to_string());
            }
            _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Apply a config file on top of the current values.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.split('\n').enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(i + 1, format!("expected `key = value`, found `{line}`"))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        Ok(())
    }

    /// Apply `POVMAP_<KEY>` environment variables; the suffix is
    /// lowercased and must be a known key.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        // BTreeMap ordering keeps duplicate handling deterministic.
        let filtered: BTreeMap<String, String> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                k.strip_prefix("POVMAP_").map(|rest| (rest.to_ascii_lowercase(), v))
            })
            .collect();
        for (key, value) in filtered {
            self.set(&key, &value)
                .map_err(|e| Error::invalid(format!("environment override: {e}")))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = PipelineConfig::default();
        config.apply_file(text)?;
        Ok(config)
    }

    pub fn path(&self, key: &str) -> Option<&str> {
        self.paths.get(key).map(String::as_str)
    }

    /// Whitespace-separated list value of a path key.
    pub fn path_list(&self, key: &str) -> Vec<String> {
        self.path(key)
            .map(|v| v.split_whitespace().map(str::to_string).collect())
            .unwrap_or_default()
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::invalid("this subcommand is randomized: pass --seed or set `seed` in the config")
        })
    }
}
