//! Monte-Carlo comparison of filtered and smoothed field estimates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kalman::{kalman_mfp, KalmanOptions};
use super::{run_estimator, simulate_quantum_truth, simulate_truth_and_record, Estimator, MagnetometerConfig};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Squared errors of one trial at the stored times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialErrors {
    pub trial: usize,
    pub filter_sq: Vec<f64>,
    pub smooth_sq: Vec<f64>,
    pub order_violation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub estimator: String,
    pub trials: usize,
    pub seed: u64,
    pub tau: Vec<f64>,
    pub mse_filter: Vec<f64>,
    pub mse_smooth: Vec<f64>,
    pub mid_tau: f64,
    pub mid_mse_filter: f64,
    pub mid_mse_smooth: f64,
    /// Mean and standard error of filter_sq − smooth_sq at mid_tau.
    pub paired_mean: f64,
    pub paired_se: f64,
    pub z_score: f64,
    pub smoothing_better: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_order_violation: Option<f64>,
}

fn run_trial(cfg: &MagnetometerConfig, seed: u64, trial: usize) -> Result<(Vec<f64>, TrialErrors)> {
    let mut rng = RngStream::new(seed, trial as u64);
    let (truth, record) = match cfg.estimator {
        Estimator::ExactHybrid => simulate_quantum_truth(cfg, &mut rng)?,
        _ => simulate_truth_and_record(cfg, &mut rng)?,
    };
    let (out, violation) = match cfg.estimator {
        Estimator::KalmanMfp => {
            let run = kalman_mfp(cfg, &record, &KalmanOptions::default())?;
            let v = run.order_violation();
            (run.output, Some(v))
        }
        _ => (run_estimator(cfg, &record)?, None),
    };
    let ax = out
        .axis("b")
        .ok_or_else(|| Error::Dimension("estimator output has no b axis".into()))?;
    let mut e = TrialErrors {
        trial,
        filter_sq: Vec::with_capacity(out.times.len()),
        smooth_sq: Vec::with_capacity(out.times.len()),
        order_violation: violation,
    };
    for (k, &t) in out.times.iter().enumerate() {
        let b = truth.b_at(t, cfg.dt);
        e.filter_sq.push((out.filter_mean[k][ax] - b).powi(2));
        e.smooth_sq.push((out.smooth_mean[k][ax] - b).powi(2));
    }
    Ok((out.times, e))
}

/// Runs `cfg.trials` independent trials (stream id = trial index) in parallel
/// and summarizes the squared errors of filtered and smoothed b̂.
pub fn benchmark(cfg: &MagnetometerConfig, seed: u64) -> Result<BenchmarkSummary> {
    cfg.validate()?;
    if cfg.trials < 2 {
        return Err(Error::InvalidArgument("a benchmark needs at least two trials".into()));
    }
    let runs: Vec<(Vec<f64>, TrialErrors)> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, seed, i))
        .collect::<Result<_>>()?;
    let tau = runs[0].0.clone();
    let nt = tau.len();
    let n = runs.len() as f64;
    let mut mse_filter = vec![0.0; nt];
    let mut mse_smooth = vec![0.0; nt];
    for (_, e) in &runs {
        for k in 0..nt {
            mse_filter[k] += e.filter_sq[k] / n;
            mse_smooth[k] += e.smooth_sq[k] / n;
        }
    }
    let target = cfg.tau_fraction * cfg.t_end;
    let mid = (0..nt)
        .min_by(|&a, &b| (tau[a] - target).abs().total_cmp(&(tau[b] - target).abs()))
        .unwrap_or(0);
    let d: Vec<f64> = runs.iter().map(|(_, e)| e.filter_sq[mid] - e.smooth_sq[mid]).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let z = if se > 0.0 { mean / se } else { 0.0 };
    let max_order_violation = runs
        .iter()
        .filter_map(|(_, e)| e.order_violation)
        .reduce(f64::max);
    Ok(BenchmarkSummary {
        estimator: cfg.estimator.name().into(),
        trials: cfg.trials,
        seed,
        mid_tau: tau[mid],
        mid_mse_filter: mse_filter[mid],
        mid_mse_smooth: mse_smooth[mid],
        tau,
        mse_filter,
        mse_smooth,
        paired_mean: mean,
        paired_se: se,
        z_score: z,
        smoothing_better: z >= 3.0,
        max_order_violation,
    })
}
