//! Truth trajectories for hybrid models: a grid path for the classical
//! variable and a pure-state quantum-jump unraveling for the quantum system.

use super::HybridModel;
use crate::classical::sample_path;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::record::MeasurementRecord;
use crate::rng::RngStream;

#[derive(Clone, Debug)]
pub struct HybridTrajectory {
    /// Flat grid index of the classical variable at t_k, k = 0..=n.
    pub path: Vec<usize>,
    /// Quantum state at t_k.
    pub states: Vec<Vec<C64>>,
    pub record: MeasurementRecord,
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn normalize(v: &mut [C64]) -> Result<()> {
    let n = norm_sqr(v).sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Numerical("trajectory state vanished".into()));
    }
    v.iter_mut().for_each(|z| *z /= n);
    Ok(())
}

/// Samples a trajectory with the same step order as the filters: clicks from
/// ⟨L†L⟩dt at x_k, then the classical move, then exp(−iH(x_{k+1})dt).
/// Dissipators are unraveled as unrecorded jumps.
pub fn sample_trajectory(
    model: &HybridModel,
    start: usize,
    psi0: &[C64],
    steps: usize,
    dt: f64,
    rng: &mut RngStream,
) -> Result<HybridTrajectory> {
    if model.num_gaussian() > 0 {
        return Err(Error::InvalidArgument("trajectory sampling supports Poisson channels only".into()));
    }
    if psi0.len() != model.dim() {
        return Err(Error::Dimension(format!("initial state has {} entries, model dim is {}", psi0.len(), model.dim())));
    }
    let path = sample_path(model.classical(), start, steps, dt, &mut rng.fork(rng.stream_id() ^ 0x5eed))?;
    let n_points = model.grid().len();
    let mut unitaries: Vec<Option<CMatrix>> = vec![None; n_points];
    let mut no_click: Vec<Option<CMatrix>> = vec![None; n_points];
    let mut psi = psi0.to_vec();
    normalize(&mut psi)?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut counts = Vec::with_capacity(steps);
    for k in 0..steps {
        states.push(psi.clone());
        let x = path[k];
        let ls: Vec<&CMatrix> = model.channels().iter().map(|c| c.op.at(x)).collect();
        let mut row = Vec::with_capacity(ls.len());
        for l in &ls {
            let p = norm_sqr(&l.apply(&psi)) * dt;
            if p > 1.0 {
                return Err(Error::StepSize(format!("click probability {p} exceeds 1 at step {k}")));
            }
            row.push(rng.bernoulli(p) as u8);
        }
        let hidden: Vec<bool> = model
            .dissipators()
            .iter()
            .map(|d| rng.bernoulli((norm_sqr(&d.apply(&psi)) * dt).min(1.0)))
            .collect();
        if no_click[x].is_none() {
            let mut k_op = CMatrix::zeros(model.dim());
            for l in ls.iter().copied().chain(model.dissipators()) {
                k_op.axpy_real(1.0, &(&l.adjoint() * l));
            }
            no_click[x] = Some(k_op.scale(C64::new(-0.5 * dt, 0.0)).expm()?);
        }
        psi = no_click[x].as_ref().expect("cached").apply(&psi);
        for (d, _) in model.dissipators().iter().zip(&hidden).filter(|(_, &h)| h) {
            psi = d.apply(&psi);
        }
        for (l, _) in ls.iter().zip(&row).filter(|(_, &c)| c == 1) {
            psi = l.apply(&psi);
        }
        normalize(&mut psi)?;
        counts.push(row);
        let y = path[k + 1];
        if unitaries[y].is_none() {
            unitaries[y] = Some(model.hamiltonian().at(y).scale(C64::new(0.0, -dt)).expm()?);
        }
        psi = unitaries[y].as_ref().expect("cached").apply(&psi);
    }
    states.push(psi);
    let mut record = MeasurementRecord::from_counts(0.0, dt, model.channel_names(), counts)?;
    record.seed = Some(rng.seed());
    Ok(HybridTrajectory { path, states, record })
}
