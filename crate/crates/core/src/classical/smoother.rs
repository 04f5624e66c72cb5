//! Forward and backward sweeps over a record and their combination.

use serde::{Deserialize, Serialize};

use super::model::ClassicalModel;
use super::steps::{combine_smooth, pardoux_forward_step, retrodictive_backward_step, snyder_step};
use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::output::SmootherOutput;
use crate::record::MeasurementRecord;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForwardKind {
    /// Normalized nonlinear filter.
    Snyder,
    /// Unnormalized linear filter; its pairing with the backward sweep is conserved.
    #[default]
    Pardoux,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmootherOptions {
    pub forward: ForwardKind,
    /// Keep every `stride`-th time step (the final step is always kept).
    pub stride: usize,
    pub keep_densities: bool,
}

impl Default for SmootherOptions {
    fn default() -> Self {
        Self {
            forward: ForwardKind::Pardoux,
            stride: 1,
            keep_densities: false,
        }
    }
}

/// Stored states of a sweep. The unnormalized state at `indices[j]` is
/// `states[j] · exp(log_scale[j])`.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub indices: Vec<usize>,
    pub states: Vec<DensityGrid>,
    pub log_scale: Vec<f64>,
}

impl Sweep {
    pub fn at(&self, step: usize) -> Option<(&DensityGrid, f64)> {
        self.indices
            .iter()
            .position(|&k| k == step)
            .map(|j| (&self.states[j], self.log_scale[j]))
    }
}

pub(crate) fn stored(k: usize, n: usize, stride: usize) -> bool {
    k % stride.max(1) == 0 || k == n
}

pub(crate) fn check_record(model: &ClassicalModel, record: &MeasurementRecord) -> Result<()> {
    record.validate()?;
    if record.channels.len() != model.num_channels() {
        return Err(Error::Dimension(format!(
            "record has {} channels, model has {}",
            record.channels.len(),
            model.num_channels()
        )));
    }
    Ok(())
}

/// Runs the forward filter over the whole record, storing states k = 0..=n.
pub fn forward_sweep(
    model: &ClassicalModel,
    prior: &DensityGrid,
    record: &MeasurementRecord,
    kind: ForwardKind,
    stride: usize,
) -> Result<Sweep> {
    check_record(model, record)?;
    let n = record.steps();
    let mut f = prior.normalized_copy()?;
    let mut ls = 0.0;
    let mut sweep = Sweep {
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
        let dn = &record.counts[k];
        f = match kind {
            ForwardKind::Snyder => snyder_step(&f, model, dn, record.dt)?,
            ForwardKind::Pardoux => {
                let mut next = pardoux_forward_step(&f, model, dn, record.dt)?;
                let mass = next.normalize().map_err(|_| {
                    Error::DegenerateRecord(format!("forward density vanished at step {k}"))
                })?;
                ls += mass.ln();
                next
            }
        };
    }
    Ok(sweep)
}

fn renormalize_max(g: &mut DensityGrid) -> Result<f64> {
    let m = g.values.iter().cloned().fold(0.0, f64::max);
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::DegenerateRecord("retrodictive likelihood vanished".into()));
    }
    g.values.iter_mut().for_each(|v| *v /= m);
    Ok(m.ln())
}

/// Runs the backward sweep from g(T) = 1, storing states k = n..=0 in
/// increasing order of k.
pub fn backward_sweep(model: &ClassicalModel, record: &MeasurementRecord, stride: usize) -> Result<Sweep> {
    check_record(model, record)?;
    let n = record.steps();
    let mut g = DensityGrid::ones(model.grid().clone());
    let mut ls = 0.0;
    let mut sweep = Sweep {
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
        g = retrodictive_backward_step(&g, model, &record.counts[k - 1], record.dt)?;
        ls += renormalize_max(&mut g)?;
    }
    sweep.indices.reverse();
    sweep.states.reverse();
    sweep.log_scale.reverse();
    Ok(sweep)
}

/// ln Σ g·f·ΔV including the stored scales.
fn log_pairing(f: &DensityGrid, lf: f64, g: &DensityGrid, lg: f64) -> f64 {
    super::steps::pairing(f, g).ln() + lf + lg
}

fn moments(d: &DensityGrid) -> (Vec<f64>, Vec<f64>) {
    (0..d.grid.ndim()).map(|a| d.moments(a)).unzip()
}

/// Filters and smooths a record, returning per-τ statistics for every axis.
pub fn smooth(
    model: &ClassicalModel,
    prior: &DensityGrid,
    record: &MeasurementRecord,
    opts: &SmootherOptions,
) -> Result<SmootherOutput> {
    let fwd = forward_sweep(model, prior, record, opts.forward, opts.stride)?;
    let n = record.steps();
    let mut out = SmootherOutput {
        estimator: "classical".into(),
        axis_names: model.grid().axes().iter().map(|a| a.name.clone()).collect(),
        times: fwd.indices.iter().map(|&k| record.time(k)).collect(),
        densities: opts.keep_densities.then(Vec::new),
        ..Default::default()
    };
    let mut smooth_rows = Vec::with_capacity(fwd.indices.len());
    let mut pairings = Vec::with_capacity(fwd.indices.len());

    let mut g = DensityGrid::ones(model.grid().clone());
    let mut lg = 0.0;
    let mut j = fwd.indices.len();
    for k in (0..=n).rev() {
        if j > 0 && fwd.indices[j - 1] == k {
            j -= 1;
            let f = &fwd.states[j];
            let h = combine_smooth(f, &g)?;
            pairings.push(log_pairing(f, fwd.log_scale[j], &g, lg));
            smooth_rows.push(h);
        }
        if k == 0 {
            break;
        }
        g = retrodictive_backward_step(&g, model, &record.counts[k - 1], record.dt)?;
        lg += renormalize_max(&mut g)?;
    }
    smooth_rows.reverse();
    pairings.reverse();

    for (f, h) in fwd.states.iter().zip(&smooth_rows) {
        let (fm, fv) = moments(f);
        let (sm, sv) = moments(h);
        out.filter_mean.push(fm);
        out.filter_var.push(fv);
        out.smooth_mean.push(sm);
        out.smooth_var.push(sv);
        if let Some(d) = out.densities.as_mut() {
            d.push(h.values.clone());
        }
    }
    if opts.forward == ForwardKind::Pardoux {
        let p0 = pairings[0];
        out.pairing_deviation = Some(pairings.iter().map(|p| (p - p0).exp_m1().abs()).fold(0.0, f64::max));
    }
    Ok(out)
}

/// Smoothing densities h_k for every stored step (used by oracles and the CLI).
pub fn smoothing_densities(
    model: &ClassicalModel,
    prior: &DensityGrid,
    record: &MeasurementRecord,
    kind: ForwardKind,
) -> Result<Vec<DensityGrid>> {
    let fwd = forward_sweep(model, prior, record, kind, 1)?;
    let bwd = backward_sweep(model, record, 1)?;
    fwd.states
        .iter()
        .zip(&bwd.states)
        .map(|(f, g)| combine_smooth(f, g))
        .collect()
}

/// Largest relative change of Σ g·f along a record, for a Pardoux forward sweep.
pub fn pairing_deviation(fwd: &Sweep, bwd: &Sweep) -> f64 {
    let logs: Vec<f64> = fwd
        .indices
        .iter()
        .zip(&fwd.states)
        .zip(&fwd.log_scale)
        .filter_map(|((&k, f), &lf)| bwd.at(k).map(|(g, lg)| log_pairing(f, lf, g, lg)))
        .collect();
    logs.iter().map(|p| (p - logs[0]).exp_m1().abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::JumpKernel;
    use crate::grid::{Axis, ClassicalGrid};
    use crate::record::sample_poisson_record;
    use crate::rng::RngStream;

    fn grid() -> ClassicalGrid {
        ClassicalGrid::one_dim(Axis::new("x", 0.0, 1.0, 2).unwrap())
    }

    fn model() -> ClassicalModel {
        ClassicalModel::builder(grid())
            .jump(JumpKernel::Dense(vec![vec![0.0, 1.1], vec![0.6, 0.0]]))
            .channel_table("1", vec![0.5, 4.0])
            .build()
            .unwrap()
    }

    fn record(n: usize, dt: f64, seed: u64) -> MeasurementRecord {
        let mut rng = RngStream::new(seed, 0);
        sample_poisson_record(&vec![vec![3.0]; n], vec!["1".into()], 0.0, dt, &mut rng).unwrap()
    }

    #[test]
    fn pairing_is_constant_along_a_record() {
        let m = model();
        let rec = record(10_000, 1e-4, 3);
        assert!(rec.total_counts(0) > 0);
        let prior = DensityGrid::uniform(grid());
        let fwd = forward_sweep(&m, &prior, &rec, ForwardKind::Pardoux, 1).unwrap();
        let bwd = backward_sweep(&m, &rec, 1).unwrap();
        assert!(pairing_deviation(&fwd, &bwd) < 1e-10);
    }

    #[test]
    fn normalized_pardoux_tracks_snyder() {
        let m = model();
        let rec = record(10_000, 1e-4, 8);
        let prior = DensityGrid::uniform(grid());
        let a = forward_sweep(&m, &prior, &rec, ForwardKind::Pardoux, 1).unwrap();
        let b = forward_sweep(&m, &prior, &rec, ForwardKind::Snyder, 1).unwrap();
        let worst = a
            .states
            .iter()
            .zip(&b.states)
            .map(|(x, y)| x.l1_distance(y))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-3, "L1 {worst}");
    }

    #[test]
    fn smoothing_at_the_end_equals_filtering() {
        let m = model();
        let rec = record(500, 1e-3, 1);
        let out = smooth(&m, &DensityGrid::uniform(grid()), &rec, &SmootherOptions::default()).unwrap();
        let last = out.times.len() - 1;
        assert!((out.filter_mean[last][0] - out.smooth_mean[last][0]).abs() < 1e-14);
        assert!(out.pairing_deviation.unwrap() < 1e-10);
    }

    #[test]
    fn strided_output_matches_full_output() {
        let m = model();
        let rec = record(100, 1e-3, 4);
        let prior = DensityGrid::uniform(grid());
        let full = smooth(&m, &prior, &rec, &SmootherOptions::default()).unwrap();
        let opts = SmootherOptions {
            stride: 7,
            ..Default::default()
        };
        let coarse = smooth(&m, &prior, &rec, &opts).unwrap();
        assert_eq!(*coarse.times.last().unwrap(), *full.times.last().unwrap());
        for (j, t) in coarse.times.iter().enumerate() {
            let k = full.time_index(*t);
            assert!((coarse.smooth_mean[j][0] - full.smooth_mean[k][0]).abs() < 1e-14);
        }
    }
}
