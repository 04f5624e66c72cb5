//! Forward and backward hybrid sweeps and the smoothing density over x.

use serde::{Deserialize, Serialize};

use super::model::HybridModel;
use super::operator::HybridOperator;
use super::steps::{smooth_density, HybridStepper};
use crate::classical::stored;
use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::linalg::CMatrix;
use crate::output::SmootherOutput;
use crate::record::MeasurementRecord;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HybridForwardKind {
    /// Normalized quantum filter.
    Snyder,
    /// Linear forward equation, normalized after each step with the scale kept.
    #[default]
    Zakai,
}

#[derive(Clone, Debug, Default)]
pub struct HybridSmootherOptions {
    pub forward: HybridForwardKind,
    pub stride: usize,
    pub keep_densities: bool,
    /// Observables Â reported as tr[F̂Â] at every stored time.
    pub observables: Vec<(String, CMatrix)>,
}

/// Stored hybrid states; the unnormalized state at `indices[j]` is
/// `states[j] · exp(log_scale[j])`.
#[derive(Clone, Debug)]
pub struct HybridSweep {
    pub indices: Vec<usize>,
    pub states: Vec<HybridOperator>,
    pub log_scale: Vec<f64>,
}

fn check_record(model: &HybridModel, record: &MeasurementRecord) -> Result<()> {
    record.validate()?;
    if record.channels.len() != model.channels().len() {
        return Err(Error::Dimension(format!(
            "record has {} Poisson channels, model has {}",
            record.channels.len(),
            model.channels().len()
        )));
    }
    if record.gaussian_channels.len() != model.num_gaussian() {
        return Err(Error::Dimension(format!(
            "record has {} Gaussian channels, model has {}",
            record.gaussian_channels.len(),
            model.num_gaussian()
        )));
    }
    Ok(())
}

pub fn forward_sweep(
    model: &HybridModel,
    prior: &HybridOperator,
    record: &MeasurementRecord,
    kind: HybridForwardKind,
    stride: usize,
) -> Result<HybridSweep> {
    check_record(model, record)?;
    let stepper = HybridStepper::new(model, record.dt)?;
    let n = record.steps();
    let mut f = prior.clone();
    f.normalize()?;
    let mut ls = 0.0;
    let mut sweep = HybridSweep {
        indices: Vec::new(),
        states: Vec::new(),
        log_scale: Vec::new(),
    };
    for k in 0..=n {
        if stored(k, n, stride) {
            sweep.indices.push(k);
            sweep.states.push(f.clone());
            sweep.log_scale.push(ls);
        }
        if k == n {
            break;
        }
        let (dn, dy) = (&record.counts[k], record.dy(k));
        f = match kind {
            HybridForwardKind::Snyder => stepper.snyder_step(&f, dn, dy)?,
            HybridForwardKind::Zakai => {
                let mut next = stepper.forward_step(&f, dn, dy)?;
                let t = next.normalize().map_err(|_| {
                    Error::DegenerateRecord(format!("forward hybrid trace vanished at step {k}"))
                })?;
                ls += t.ln();
                next
            }
        };
    }
    Ok(sweep)
}

fn rescale_effect(g: &mut HybridOperator) -> Result<f64> {
    let m = g.max_trace();
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::DegenerateRecord("effect operator vanished".into()));
    }
    g.scale(1.0 / m);
    Ok(m.ln())
}

/// Backward sweep from ĝ(T) = `terminal` (default 1̂), states in increasing k.
pub fn backward_sweep(
    model: &HybridModel,
    record: &MeasurementRecord,
    terminal: Option<&HybridOperator>,
    stride: usize,
) -> Result<HybridSweep> {
    check_record(model, record)?;
    let stepper = HybridStepper::new(model, record.dt)?;
    let n = record.steps();
    let mut g = terminal
        .cloned()
        .unwrap_or_else(|| HybridOperator::identity(model.grid().clone(), model.dim()));
    let mut ls = 0.0;
    let mut sweep = HybridSweep {
        indices: Vec::new(),
        states: Vec::new(),
        log_scale: Vec::new(),
    };
    for k in (0..=n).rev() {
        if stored(k, n, stride) {
            sweep.indices.push(k);
            sweep.states.push(g.clone());
            sweep.log_scale.push(ls);
        }
        if k == 0 {
            break;
        }
        g = stepper.backward_step(&g, &record.counts[k - 1], record.dy(k - 1))?;
        ls += rescale_effect(&mut g)?;
    }
    sweep.indices.reverse();
    sweep.states.reverse();
    sweep.log_scale.reverse();
    Ok(sweep)
}

/// Largest relative change of ∫dx tr[ĝf̂] along matching stored steps.
pub fn pairing_deviation(fwd: &HybridSweep, bwd: &HybridSweep) -> f64 {
    let mut logs = Vec::new();
    for (j, k) in fwd.indices.iter().enumerate() {
        if let Some(i) = bwd.indices.iter().position(|x| x == k) {
            logs.push(fwd.states[j].pairing(&bwd.states[i]).ln() + fwd.log_scale[j] + bwd.log_scale[i]);
        }
    }
    logs.iter().map(|p| (p - logs[0]).exp_m1().abs()).fold(0.0, f64::max)
}

fn moments(d: &DensityGrid) -> (Vec<f64>, Vec<f64>) {
    (0..d.grid.ndim()).map(|a| d.moments(a)).unzip()
}

/// Filters and smooths a record, reporting statistics of the classical variable.
pub fn smooth(
    model: &HybridModel,
    prior: &HybridOperator,
    record: &MeasurementRecord,
    opts: &HybridSmootherOptions,
) -> Result<SmootherOutput> {
    let fwd = forward_sweep(model, prior, record, opts.forward, opts.stride)?;
    let stepper = HybridStepper::new(model, record.dt)?;
    let n = record.steps();
    let mut out = SmootherOutput {
        estimator: "hybrid".into(),
        axis_names: model.grid().axes().iter().map(|a| a.name.clone()).collect(),
        times: fwd.indices.iter().map(|&k| record.time(k)).collect(),
        observables: opts.observables.iter().map(|(n, _)| n.clone()).collect(),
        densities: opts.keep_densities.then(Vec::new),
        ..Default::default()
    };
    let mut rows = Vec::with_capacity(fwd.indices.len());
    let mut logs = Vec::with_capacity(fwd.indices.len());
    let mut g = HybridOperator::identity(model.grid().clone(), model.dim());
    let mut lg = 0.0;
    let mut j = fwd.indices.len();
    for k in (0..=n).rev() {
        if j > 0 && fwd.indices[j - 1] == k {
            j -= 1;
            let f = &fwd.states[j];
            rows.push(smooth_density(f, &g)?);
            logs.push(f.pairing(&g).ln() + fwd.log_scale[j] + lg);
        }
        if k == 0 {
            break;
        }
        g = stepper.backward_step(&g, &record.counts[k - 1], record.dy(k - 1))?;
        lg += rescale_effect(&mut g)?;
    }
    rows.reverse();
    logs.reverse();
    for (f, h) in fwd.states.iter().zip(&rows) {
        let (fm, fv) = moments(&f.marginal()?.normalized_copy()?);
        let (sm, sv) = moments(h);
        out.filter_mean.push(fm);
        out.filter_var.push(fv);
        out.smooth_mean.push(sm);
        out.smooth_var.push(sv);
        out.filter_expectations
            .push(opts.observables.iter().map(|(_, a)| f.expectation(a)).collect());
        if let Some(d) = out.densities.as_mut() {
            d.push(h.values.clone());
        }
    }
    if opts.forward == HybridForwardKind::Zakai {
        out.pairing_deviation = Some(logs.iter().map(|p| (p - logs[0]).exp_m1().abs()).fold(0.0, f64::max));
    }
    Ok(out)
}
