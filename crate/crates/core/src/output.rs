//! Smoother results and their CSV/JSON serialization.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::grid::ClassicalGrid;

/// Per-τ filtering and smoothing statistics of one estimator run.
///
/// Row k refers to `times[k]`; the filter at that row is conditioned on the
/// record before `times[k]`, the smoother on the whole record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SmootherOutput {
    pub estimator: String,
    pub axis_names: Vec<String>,
    pub times: Vec<f64>,
    pub filter_mean: Vec<Vec<f64>>,
    pub filter_var: Vec<Vec<f64>>,
    pub smooth_mean: Vec<Vec<f64>>,
    pub smooth_var: Vec<Vec<f64>>,
    /// Names of the quantum observables Â reported as tr[F̂Â].
    pub observables: Vec<String>,
    pub filter_expectations: Vec<Vec<f64>>,
    /// Smoothing densities on the grid, one row per time, when requested.
    pub densities: Option<Vec<Vec<f64>>>,
    /// Largest relative change of the forward/backward pairing along the run.
    pub pairing_deviation: Option<f64>,
    /// Backward-filter statistics, where the estimator has them (Kalman mode).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub backward_mean: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub backward_var: Vec<Vec<f64>>,
}

impl SmootherOutput {
    pub fn axis(&self, name: &str) -> Option<usize> {
        self.axis_names.iter().position(|n| n == name)
    }

    /// Index of the stored time closest to `tau`.
    pub fn time_index(&self, tau: f64) -> usize {
        let mut best = 0;
        for (k, t) in self.times.iter().enumerate() {
            if (t - tau).abs() < (self.times[best] - tau).abs() {
                best = k;
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, w: W, with_density: bool) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut head = vec!["tau".to_string()];
        for a in &self.axis_names {
            head.push(format!("filter_mean_{a}"));
            head.push(format!("filter_var_{a}"));
        }
        for a in &self.axis_names {
            head.push(format!("smooth_mean_{a}"));
            head.push(format!("smooth_var_{a}"));
        }
        for a in self.axis_names.iter().filter(|_| !self.backward_mean.is_empty()) {
            head.push(format!("backward_mean_{a}"));
            head.push(format!("backward_var_{a}"));
        }
        for o in &self.observables {
            head.push(format!("filter_expect_{o}"));
        }
        let dens = self.densities.as_ref().filter(|_| with_density);
        if let Some(d) = dens {
            head.extend((0..d.first().map_or(0, Vec::len)).map(|i| format!("h_{i}")));
        }
        wr.write_record(&head)?;
        let fmt = |v: f64| format!("{v:.12e}");
        for k in 0..self.times.len() {
            let mut row = vec![fmt(self.times[k])];
            for a in 0..self.axis_names.len() {
                row.push(fmt(self.filter_mean[k][a]));
                row.push(fmt(self.filter_var[k][a]));
            }
            for a in 0..self.axis_names.len() {
                row.push(fmt(self.smooth_mean[k][a]));
                row.push(fmt(self.smooth_var[k][a]));
            }
            if !self.backward_mean.is_empty() {
                for a in 0..self.axis_names.len() {
                    row.push(fmt(self.backward_mean[k][a]));
                    row.push(fmt(self.backward_var[k][a]));
                }
            }
            if !self.observables.is_empty() {
                row.extend(self.filter_expectations[k].iter().map(|v| fmt(*v)));
            }
            if let Some(d) = dens {
                row.extend(d[k].iter().map(|v| fmt(*v)));
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Provenance written next to every estimator output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub estimator: String,
    pub model_hash: String,
    pub grid: Option<ClassicalGrid>,
    pub dt: f64,
    pub seed: Option<u64>,
    pub version: String,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(estimator: &str, model: &impl Serialize, grid: Option<ClassicalGrid>, dt: f64, seed: Option<u64>) -> Self {
        Self {
            estimator: estimator.to_string(),
            model_hash: model_hash(model),
            grid,
            dt,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            files: Vec::new(),
        }
    }
}

/// SHA-256 of the JSON serialization of a model.
pub fn model_hash(model: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(model).unwrap_or_default();
    hex::encode(Sha256::digest(&bytes))
}

/// Writes `<stem>.csv` and `<stem>.manifest.json` into `dir`.
pub fn write_output(
    dir: &Path,
    stem: &str,
    out: &SmootherOutput,
    manifest: &mut RunManifest,
    with_density: bool,
) -> Result<()> {
    let csv_name = format!("{stem}.csv");
    out.write_csv(File::create(dir.join(&csv_name))?, with_density)?;
    manifest.files.push(csv_name);
    let f = File::create(dir.join(format!("{stem}.manifest.json")))?;
    serde_json::to_writer_pretty(f, manifest)?;
    Ok(())
}
