//! Truth trajectories and their photodetection records.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{intensities, measurement_channels, MagnetometerConfig, CHANNELS};
use crate::error::Result;
use crate::linalg::{ops, C64};
use crate::record::{sample_poisson_record, MeasurementRecord};
use crate::rng::RngStream;

/// Simulated field and spin variables at t_k = k·dt, k = 0..=n.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub t: Vec<f64>,
    pub b: Vec<f64>,
    pub m: Vec<f64>,
    pub phi: Vec<f64>,
}

impl Truth {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Field at the stored time closest to `t`.
    pub fn b_at(&self, t: f64, dt: f64) -> f64 {
        let k = ((t - self.t[0]) / dt).round().clamp(0.0, (self.len() - 1) as f64) as usize;
        self.b[k]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "b", "m", "phi"])?;
        for k in 0..self.len() {
            wr.write_record(
                [self.t[k], self.b[k], self.m[k], self.phi[k]].map(|v| format!("{v:.12e}")),
            )?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn initial_field(cfg: &MagnetometerConfig, rng: &mut RngStream) -> Result<f64> {
    Ok(match cfg.field.b0 {
        Some(b) => b,
        None => cfg.prior_var()?.sqrt() * rng.normal(),
    })
}

/// Euler-Maruyama truth: OU field, dm = γ_g s b cos φ dt, diffusing φ.
/// m(0) and φ(0) are drawn around `m0`, `phi0` with the configured prior spreads.
pub fn simulate_truth(cfg: &MagnetometerConfig, rng: &mut RngStream) -> Result<Truth> {
    cfg.validate()?;
    let n = cfg.steps();
    let dt = cfg.dt;
    let sq = (cfg.field.q * dt).sqrt();
    let sphi = (cfg.phi_variance_rate() * dt).sqrt();
    let mut tr = Truth {
        t: (0..=n).map(|k| k as f64 * dt).collect(),
        b: Vec::with_capacity(n + 1),
        m: Vec::with_capacity(n + 1),
        phi: Vec::with_capacity(n + 1),
    };
    let mut b = initial_field(cfg, rng)?;
    let mut m = cfg.m0 + cfg.m_prior_var().sqrt() * rng.normal();
    let mut phi = cfg.phi0 + cfg.phi_prior_var().sqrt() * rng.normal();
    for k in 0..=n {
        tr.b.push(b);
        tr.m.push(m);
        tr.phi.push(phi);
        if k == n {
            break;
        }
        let (xb, xp) = (rng.normal(), rng.normal());
        m += cfg.gamma_g * cfg.s * b * phi.cos() * dt;
        b += -cfg.field.gamma * b * dt + sq * xb;
        phi += sphi * xp;
    }
    Ok(tr)
}

/// Truth simulation followed by Poisson sampling with λ±(m_t).
pub fn simulate_truth_and_record(
    cfg: &MagnetometerConfig,
    rng: &mut RngStream,
) -> Result<(Truth, MeasurementRecord)> {
    let truth = simulate_truth(cfg, rng)?;
    let n = truth.len() - 1;
    let rates: Vec<Vec<f64>> = truth.m[..n].iter().map(|&m| intensities(cfg, m).to_vec()).collect();
    let rec = sample_poisson_record(&rates, channels(), 0.0, cfg.dt, rng)?;
    Ok((truth, rec))
}

pub(crate) fn channels() -> Vec<String> {
    CHANNELS.iter().map(|s| s.to_string()).collect()
}

/// Quantum-trajectory truth for small spins: OU field, Larmor precession of a
/// pure spin state, and clicks drawn from ⟨L̂±†L̂±⟩dt. The reported m and φ are
/// ⟨Ŝ_z⟩ and the azimuth of (⟨Ŝ_x⟩, ⟨Ŝ_y⟩).
pub fn simulate_quantum_truth(
    cfg: &MagnetometerConfig,
    rng: &mut RngStream,
) -> Result<(Truth, MeasurementRecord)> {
    cfg.validate()?;
    let n = cfg.steps();
    let dt = cfg.dt;
    let dim = cfg.dim();
    let sq = (cfg.field.q * dt).sqrt();
    let (sx, sy, sz) = ops::spin_operators(cfg.two_s());
    let eig = sy.to_nalgebra().symmetric_eigen();
    let vecs = eig.eigenvectors;
    let vals = eig.eigenvalues;
    let ls: Vec<Vec<f64>> = measurement_channels(cfg)
        .iter()
        .map(|l| l.diagonal().iter().map(|z| z.re).collect())
        .collect();
    let no_click: Vec<f64> = (0..dim)
        .map(|q| ls.iter().map(|l| (-0.5 * l[q] * l[q] * dt).exp()).product())
        .collect();

    let mut psi = DVector::from_vec(super::coherent_state_x(cfg.two_s()));
    let mut b = initial_field(cfg, rng)?;
    let mut tr = Truth::default();
    let mut counts = Vec::with_capacity(n);
    let expect = |psi: &DVector<C64>, op: &crate::linalg::CMatrix| -> f64 {
        let v = op.apply(psi.as_slice());
        psi.iter().zip(&v).map(|(a, b)| (a.conj() * b).re).sum()
    };
    for k in 0..=n {
        tr.t.push(k as f64 * dt);
        tr.b.push(b);
        tr.m.push(expect(&psi, &sz));
        tr.phi.push(expect(&psi, &sy).atan2(expect(&psi, &sx)));
        if k == n {
            break;
        }
        let mut row = Vec::with_capacity(2);
        for l in &ls {
            let p: f64 = psi.iter().zip(l).map(|(z, x)| z.norm_sqr() * x * x).sum::<f64>() * dt;
            row.push(rng.bernoulli(p) as u8);
        }
        for q in 0..dim {
            psi[q] *= no_click[q];
        }
        for (l, &c) in ls.iter().zip(&row) {
            if c == 1 {
                for q in 0..dim {
                    psi[q] *= l[q];
                }
            }
        }
        psi /= C64::new(psi.norm(), 0.0);
        counts.push(row);

        b += -cfg.field.gamma * b * dt + sq * rng.normal();
        let theta = cfg.gamma_g * b * dt;
        let mut w = vecs.adjoint() * &psi;
        for (j, z) in w.iter_mut().enumerate() {
            *z *= C64::from_polar(1.0, theta * vals[j]);
        }
        psi = &vecs * w;
    }
    let mut rec = MeasurementRecord::from_counts(0.0, dt, channels(), counts)?;
    rec.seed = Some(rng.seed());
    Ok((tr, rec))
}
