//! One-dimensional Gaussian mixtures for nightlight class labels.
//!
//! EM with deterministic k-quantile initialization: means seeded at the
//! (i+0.5)/k quantiles, uniform weights, and the global sample variance
//! for every component. Initialization is fully determined by the data,
//! so fitting takes no seed.

use crate::error::{Error, Result};
use crate::grid::CentroidRecord;

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Gmm1D {
    pub weights: Vec<f64>,
    /// Ascending; component 0 is the dimmest class.
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub log_likelihood: f64,
}

impl Gmm1D {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    /// Posterior responsibilities of each component for one value.
    pub fn posteriors(&self, value: f64) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.k())
            .map(|j| self.weights[j].ln() + log_normal_pdf(value, self.means[j], self.variances[j]))
            .collect();
        let lse = log_sum_exp(&logs);
        logs.iter().map(|l| (l - lse).exp()).collect()
    }

    /// Argmax posterior; ties break toward the lower index.
    pub fn assign(&self, value: f64) -> usize {
        let post = self.posteriors(value);
        let mut best = 0;
        for (j, &p) in post.iter().enumerate().skip(1) {
            if p > post[best] {
                best = j;
            }
        }
        best
    }

    /// Serialize as `key = value` lines with full float precision.
    pub fn write(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        format!(
            "k = {}\nweights = {}\nmeans = {}\nvariances = {}\nlog_likelihood = {}\n",
            self.k(),
            join(&self.weights),
            join(&self.means),
            join(&self.variances),
            self.log_likelihood
        )
    }

    /// Parse the key-value model format. Unknown keys are ignored so the
    /// file can carry informational extras.
    pub fn parse(text: &str) -> Result<Self> {
        let mut k: Option<usize> = None;
        let mut weights: Option<Vec<f64>> = None;
        let mut means: Option<Vec<f64>> = None;
        let mut variances: Option<Vec<f64>> = None;
        let mut log_likelihood: Option<f64> = None;
        for (i, raw) in text.split('\n').enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = i + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "k" => {
                    k = Some(value.parse().map_err(|_| {
                        Error::parse(lineno, format!("k: expected integer, found `{value}`"))
                    })?)
                }
                "weights" => weights = Some(parse_vec(lineno, value)?),
                "means" => means = Some(parse_vec(lineno, value)?),
                "variances" => variances = Some(parse_vec(lineno, value)?),
                "log_likelihood" => {
                    log_likelihood = Some(value.parse().map_err(|_| {
                        Error::parse(lineno, format!("log_likelihood: expected number, found `{value}`"))
                    })?)
                }
                _ => {}
            }
        }
        let k = k.ok_or_else(|| Error::invalid("model missing `k`"))?;
        let weights = weights.ok_or_else(|| Error::invalid("model missing `weights`"))?;
        let means = means.ok_or_else(|| Error::invalid("model missing `means`"))?;
        let variances = variances.ok_or_else(|| Error::invalid("model missing `variances`"))?;
        let log_likelihood =
            log_likelihood.ok_or_else(|| Error::invalid("model missing `log_likelihood`"))?;
        if weights.len() != k || means.len() != k || variances.len() != k {
            return Err(Error::invalid(format!(
                "model k = {k} but has {} weights, {} means, {} variances",
                weights.len(),
                means.len(),
                variances.len()
            )));
        }
        if k == 0 {
            return Err(Error::invalid("model k must be positive"));
        }
        if variances.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::invalid("model variances must be positive"));
        }
        if weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::invalid("model weights must be positive"));
        }
        Ok(Gmm1D { weights, means, variances, log_likelihood })
    }
}

fn parse_vec(line: usize, value: &str) -> Result<Vec<f64>> {
    value
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::parse(line, format!("expected number, found `{tok}`")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct GmmFitOptions {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for GmmFitOptions {
    fn default() -> Self {
        GmmFitOptions { k: DEFAULT_K, max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: Gmm1D,
    /// Log-likelihood after each EM iteration, non-decreasing.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

fn log_normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    const LN_2PI: f64 = 1.837_877_066_409_345_6;
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln() + d * d / variance)
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// Linear-interpolated quantile of sorted values at q in [0, 1].
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Fit a k-component mixture by EM. Stops when the log-likelihood
/// improves by less than `tol` or after `max_iter` iterations.
pub fn fit_gmm_1d(values: &[f64], opts: &GmmFitOptions) -> Result<GmmFit> {
    let k = opts.k;
    if k == 0 {
        return Err(Error::invalid("component count must be positive"));
    }
    let n = values.len();
    if n < k {
        return Err(Error::invalid(format!("{n} values cannot support {k} components")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("mixture input must be finite"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = 1;
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            distinct += 1;
        }
    }
    if distinct < k {
        return Err(Error::invalid(format!(
            "{distinct} distinct values cannot support {k} components"
        )));
    }

    let nf = n as f64;
    let sample_mean = values.iter().sum::<f64>() / nf;
    let sample_var = values.iter().map(|v| (v - sample_mean).powi(2)).sum::<f64>() / nf;
    let floor = 1e-6 * (sample_var + 1e-12);

    let mut weights = vec![1.0 / k as f64; k];
    let mut means: Vec<f64> = (0..k).map(|i| quantile(&sorted, (i as f64 + 0.5) / k as f64)).collect();
    let mut variances = vec![sample_var.max(floor); k];

    let mut log_likelihoods = Vec::new();
    let mut converged = false;
    let mut resp = vec![0.0f64; n * k];
    let mut logs = vec![0.0f64; k];
    for _ in 0..opts.max_iter {
        // E step.
        let mut ll = 0.0;
        for (i, &x) in values.iter().enumerate() {
            for j in 0..k {
                logs[j] = weights[j].ln() + log_normal_pdf(x, means[j], variances[j]);
            }
            let lse = log_sum_exp(&logs);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (logs[j] - lse).exp();
            }
        }
        let improved = match log_likelihoods.last() {
            Some(&prev) => ll - prev,
            None => f64::INFINITY,
        };
        log_likelihoods.push(ll);
        if improved.abs() < opts.tol {
            converged = true;
            break;
        }
        // M step.
        for j in 0..k {
            let nj: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nj <= 0.0 || !nj.is_finite() {
                return Err(Error::numeric(format!("component {j} collapsed to zero weight")));
            }
            let mean = (0..n).map(|i| resp[i * k + j] * values[i]).sum::<f64>() / nj;
            let var = (0..n)
                .map(|i| resp[i * k + j] * (values[i] - mean).powi(2))
                .sum::<f64>()
                / nj;
            weights[j] = nj / nf;
            means[j] = mean;
            variances[j] = var.max(floor);
        }
    }

    let final_ll = *log_likelihoods.last().unwrap();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| means[a].partial_cmp(&means[b]).unwrap());
    let model = Gmm1D {
        weights: order.iter().map(|&j| weights[j]).collect(),
        means: order.iter().map(|&j| means[j]).collect(),
        variances: order.iter().map(|&j| variances[j]).collect(),
        log_likelihood: final_ll,
    };
    Ok(GmmFit { model, log_likelihoods, converged })
}

/// Set `night_class` on every record from its nightlight sum. The raw
/// sum column is left untouched as the regression target.
pub fn label_centroids(records: &mut [CentroidRecord], model: &Gmm1D) {
    for r in records.iter_mut() {
        r.night_class = Some(model.assign(r.nightlight_sum) as u8);
    }
}
