//! One-step updates of hybrid operators.
//!
//! A forward step applies, in order: the no-click part of every Poisson
//! channel, the Gaussian-record terms, the click operators L̂(·)L̂† of the
//! channels that clicked, the classical generator, and the quantum generator.
//! Backward steps apply the Hilbert–Schmidt adjoints of the same maps in
//! reverse order, so ∫dx tr[ĝ f̂] is conserved exactly.

use super::model::HybridModel;
use super::operator::HybridOperator;
use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::linalg::{CMatrix, C64};

/// Step-size dependent data (unitary propagators) for one model and dt.
pub struct HybridStepper<'a> {
    model: &'a HybridModel,
    dt: f64,
    unitaries: Option<Vec<CMatrix>>,
    /// exp(−½L†L dt) per channel.
    no_click_ops: Vec<super::PointOp>,
    gaussian_effect: Vec<CMatrix>,
}

impl<'a> HybridStepper<'a> {
    pub fn new(model: &'a HybridModel, dt: f64) -> Result<Self> {
        model.classical().generator().check_step(dt)?;
        for (mu, c) in model.channels().iter().enumerate() {
            let m = model.max_intensity(mu);
            if m * dt > 1.0 {
                return Err(Error::StepSize(format!(
                    "max eigenvalue of L†L times dt = {} on channel '{}'",
                    m * dt,
                    c.name
                )));
            }
        }
        let n = model.grid().len();
        let unitaries = if model.dissipators().is_empty() {
            let mut us = Vec::with_capacity(n);
            let mut cache: Option<CMatrix> = None;
            for i in 0..n {
                let u = match (model.hamiltonian(), &cache) {
                    (super::PointOp::Shared(_), Some(u)) => u.clone(),
                    _ => model.hamiltonian().at(i).scale(C64::new(0.0, -dt)).expm()?,
                };
                if matches!(model.hamiltonian(), super::PointOp::Shared(_)) {
                    cache = Some(u.clone());
                }
                us.push(u);
            }
            Some(us)
        } else {
            None
        };
        let gaussian_effect = match model.gaussian() {
            None => Vec::new(),
            Some(g) => (0..n)
                .map(|i| {
                    let mut k = CMatrix::zeros(model.dim());
                    for (j, cdj) in g.adjoints.iter().enumerate() {
                        for (l, cl) in g.ops.iter().enumerate() {
                            k.axpy_real(g.rinv[j][l], &(cdj.at(i) * cl.at(i)));
                        }
                    }
                    k
                })
                .collect(),
        };
        let mut no_click_ops = Vec::with_capacity(model.channels().len());
        for ch in model.channels() {
            let mut err = None;
            let op = ch.effect.map(|k| {
                k.scale(C64::new(-0.5 * dt, 0.0)).expm().unwrap_or_else(|e| {
                    err = Some(e);
                    CMatrix::identity(k.dim())
                })
            });
            if let Some(e) = err {
                return Err(e);
            }
            no_click_ops.push(op);
        }
        Ok(Self {
            model,
            dt,
            unitaries,
            no_click_ops,
            gaussian_effect,
        })
    }

    pub fn model(&self) -> &HybridModel {
        self.model
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn check_state(&self, f: &HybridOperator) -> Result<()> {
        if f.grid != *self.model.grid() {
            return Err(Error::Dimension("hybrid operator and model grids differ".into()));
        }
        if f.dim() != self.model.dim() {
            return Err(Error::Dimension(format!(
                "quantum dimension {} vs model {}",
                f.dim(),
                self.model.dim()
            )));
        }
        Ok(())
    }

    fn check_record(&self, dn: &[u8], dy: &[f64]) -> Result<()> {
        if dn.len() != self.model.channels().len() {
            return Err(Error::Dimension(format!(
                "model has {} Poisson channels, step has {}",
                self.model.channels().len(),
                dn.len()
            )));
        }
        if dn.iter().any(|&c| c > 1) {
            return Err(Error::InvalidArgument("dN must be 0 or 1".into()));
        }
        if !dy.is_empty() && dy.len() != self.model.num_gaussian() {
            return Err(Error::Dimension("dy length != number of Gaussian channels".into()));
        }
        if dy.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dy must be finite".into()));
        }
        Ok(())
    }

    /// −i[H, m] + Σ D m D† − ½{D†D, m}
    fn lindblad(&self, i: usize, m: &CMatrix) -> CMatrix {
        let h = self.model.hamiltonian().at(i);
        let mut out = h.commutator(m).scale(C64::new(0.0, -1.0));
        for d in self.model.dissipators() {
            let dd = &d.adjoint() * d;
            out += &m.sandwich(d, &d.adjoint());
            out.axpy_real(-0.5, &dd.anticommutator(m));
        }
        out
    }

    /// i[H, m] + Σ D† m D − ½{D†D, m}
    fn lindblad_adjoint(&self, i: usize, m: &CMatrix) -> CMatrix {
        let h = self.model.hamiltonian().at(i);
        let mut out = h.commutator(m).scale(C64::new(0.0, 1.0));
        for d in self.model.dissipators() {
            let dd = &d.adjoint() * d;
            out += &m.sandwich(&d.adjoint(), d);
            out.axpy_real(-0.5, &dd.anticommutator(m));
        }
        out
    }

    /// Fourth-order Taylor propagation of a superoperator.
    fn taylor4(&self, m: &CMatrix, gen: impl Fn(&CMatrix) -> CMatrix) -> CMatrix {
        let mut out = m.clone();
        let mut term = m.clone();
        for k in 1..=4 {
            term = gen(&term);
            term.scale_real_mut(self.dt / k as f64);
            out += &term;
        }
        out
    }

    fn quantum_forward(&self, f: &mut HybridOperator) {
        for (i, m) in f.mats.iter_mut().enumerate() {
            *m = match &self.unitaries {
                Some(us) => m.sandwich(&us[i], &us[i].adjoint()),
                None => self.taylor4(m, |x| self.lindblad(i, x)),
            };
        }
    }

    fn quantum_adjoint(&self, g: &mut HybridOperator) {
        for (i, m) in g.mats.iter_mut().enumerate() {
            *m = match &self.unitaries {
                Some(us) => m.sandwich(&us[i].adjoint(), &us[i]),
                None => self.taylor4(m, |x| self.lindblad_adjoint(i, x)),
            };
        }
    }

    fn classical_forward(&self, f: &HybridOperator) -> HybridOperator {
        let gen = self.model.classical().generator();
        if gen.is_zero() {
            return f.clone();
        }
        let mut out = f.clone();
        gen.forward_into(&f.mats, self.dt, &mut out.mats);
        out
    }

    fn classical_adjoint(&self, g: &HybridOperator) -> HybridOperator {
        let gen = self.model.classical().generator();
        if gen.is_zero() {
            return g.clone();
        }
        let mut out = g.clone();
        gen.adjoint_into(&g.mats, self.dt, &mut out.mats);
        out
    }

    /// f ← e^{c·dt} M f M with M = exp(−½L†L dt); c = 1 for the linear equations,
    /// ⟨L†L⟩ for the normalized one. M is Hermitian, so this is also its own adjoint.
    fn no_click(&self, mu: usize, f: &mut HybridOperator, c: f64) {
        let ops = &self.no_click_ops[mu];
        let s = (self.dt * c).exp();
        for (i, m) in f.mats.iter_mut().enumerate() {
            let k = ops.at(i);
            *m = m.sandwich(k, k);
            m.scale_real_mut(s);
        }
    }

    fn click(&self, mu: usize, f: &mut HybridOperator) {
        let l = &self.model.channels()[mu].op;
        for (i, m) in f.mats.iter_mut().enumerate() {
            *m = m.sandwich(l.at(i), &l.at(i).adjoint());
        }
    }

    fn click_adjoint(&self, mu: usize, g: &mut HybridOperator) {
        let l = &self.model.channels()[mu].op;
        for (i, m) in g.mats.iter_mut().enumerate() {
            *m = m.sandwich(&l.at(i).adjoint(), l.at(i));
        }
    }

    /// Σ_k R⁻¹_jk w_k
    fn rinv_times(&self, w: &[f64]) -> Vec<f64> {
        let g = self.model.gaussian().expect("gaussian channels present");
        g.rinv.iter().map(|row| row.iter().zip(w).map(|(a, b)| a * b).sum()).collect()
    }

    /// dt/8 Σ R⁻¹_jk (2 C_j f C_k† − C_j†C_k f − f C_j†C_k) at point i.
    fn gaussian_dissipator(&self, i: usize, m: &CMatrix) -> CMatrix {
        let g = self.model.gaussian().expect("gaussian channels present");
        let k = &self.gaussian_effect[i];
        let mut out = k.anticommutator(m).scale((-self.dt / 8.0).into());
        for (j, cj) in g.ops.iter().enumerate() {
            for (l, cdl) in g.adjoints.iter().enumerate() {
                let w = g.rinv[j][l];
                if w != 0.0 {
                    out.axpy_real(self.dt / 4.0 * w, &m.sandwich(cj.at(i), cdl.at(i)));
                }
            }
        }
        out
    }

    fn gaussian_dissipator_adjoint(&self, i: usize, m: &CMatrix) -> CMatrix {
        let g = self.model.gaussian().expect("gaussian channels present");
        let k = &self.gaussian_effect[i];
        let mut out = k.anticommutator(m).scale((-self.dt / 8.0).into());
        for (j, cdj) in g.adjoints.iter().enumerate() {
            for (l, cl) in g.ops.iter().enumerate() {
                let w = g.rinv[j][l];
                if w != 0.0 {
                    out.axpy_real(self.dt / 4.0 * w, &m.sandwich(cdj.at(i), cl.at(i)));
                }
            }
        }
        out
    }

    /// Linear Gaussian-record terms.
    fn gaussian_forward(&self, f: &mut HybridOperator, dy: &[f64]) {
        let Some(g) = self.model.gaussian() else { return };
        let a = self.rinv_times(dy);
        for (i, m) in f.mats.iter_mut().enumerate() {
            let mut inc = self.gaussian_dissipator(i, m);
            for (j, aj) in a.iter().enumerate() {
                inc.axpy_real(0.5 * aj, &(g.ops[j].at(i) * &*m));
                inc.axpy_real(0.5 * aj, &(&*m * g.adjoints[j].at(i)));
            }
            *m += &inc;
        }
    }

    fn gaussian_adjoint(&self, gop: &mut HybridOperator, dy: &[f64]) {
        let Some(g) = self.model.gaussian() else { return };
        let a = self.rinv_times(dy);
        for (i, m) in gop.mats.iter_mut().enumerate() {
            let mut inc = self.gaussian_dissipator_adjoint(i, m);
            for (j, aj) in a.iter().enumerate() {
                inc.axpy_real(0.5 * aj, &(&*m * g.ops[j].at(i)));
                inc.axpy_real(0.5 * aj, &(g.adjoints[j].at(i) * &*m));
            }
            *m += &inc;
        }
    }

    /// Normalized Gaussian-record terms driven by the innovation dη.
    fn gaussian_normalized(&self, f: &mut HybridOperator, dy: &[f64]) {
        let Some(g) = self.model.gaussian() else { return };
        let means: Vec<C64> = g.ops.iter().map(|op| mean_of(f, op)).collect();
        let deta: Vec<f64> = dy.iter().zip(&means).map(|(y, c)| y - self.dt * c.re).collect();
        let a = self.rinv_times(&deta);
        for (i, m) in f.mats.iter_mut().enumerate() {
            let mut inc = self.gaussian_dissipator(i, m);
            for (j, aj) in a.iter().enumerate() {
                let mut cj = g.ops[j].at(i).clone();
                for d in 0..cj.dim() {
                    cj[(d, d)] -= means[j];
                }
                let left = &cj * &*m;
                inc.axpy_real(0.5 * aj, &left);
                inc.axpy_real(0.5 * aj, &left.adjoint());
            }
            *m += &inc;
        }
    }

    /// ρ ← ρ + dt(L₀ + L_I + L_C)ρ with no measurement.
    pub fn prior_step(&self, rho: &HybridOperator) -> Result<HybridOperator> {
        self.check_state(rho)?;
        let mut out = self.classical_forward(rho);
        self.quantum_forward(&mut out);
        out.symmetrize();
        let t = rho.hybrid_trace();
        if (t - 1.0).abs() < 1e-6 {
            out.normalize()?;
        }
        Ok(out)
    }

    /// Normalized filter for Poisson and (optionally) Gaussian records.
    pub fn snyder_step(&self, f: &HybridOperator, dn: &[u8], dy: &[f64]) -> Result<HybridOperator> {
        self.check_state(f)?;
        self.check_record(dn, dy)?;
        let mut v = f.clone();
        for (mu, &c) in dn.iter().enumerate() {
            let e = mean_intensity(&v, &self.model.channels()[mu].effect);
            if c == 1 && !(e > 0.0) {
                return Err(Error::ImpossibleEvent(format!(
                    "click on channel '{}' whose expected intensity is zero",
                    self.model.channels()[mu].name
                )));
            }
            self.no_click(mu, &mut v, e);
        }
        if !dy.is_empty() {
            self.gaussian_normalized(&mut v, dy);
        }
        for (mu, _) in dn.iter().enumerate().filter(|(_, &c)| c == 1) {
            let e = mean_intensity(&v, &self.model.channels()[mu].effect);
            if !(e > 0.0) {
                return Err(Error::ImpossibleEvent(format!(
                    "click on channel '{}' whose expected intensity is zero",
                    self.model.channels()[mu].name
                )));
            }
            self.click(mu, &mut v);
            v.scale(1.0 / e);
        }
        let mut v = self.classical_forward(&v);
        self.quantum_forward(&mut v);
        v.symmetrize();
        v.normalize()?;
        Ok(v)
    }

    /// Linear (unnormalized) forward step; `dy` may be empty.
    pub fn forward_step(&self, f: &HybridOperator, dn: &[u8], dy: &[f64]) -> Result<HybridOperator> {
        self.check_state(f)?;
        self.check_record(dn, dy)?;
        let mut v = f.clone();
        for mu in 0..dn.len() {
            self.no_click(mu, &mut v, 1.0);
        }
        if !dy.is_empty() {
            self.gaussian_forward(&mut v, dy);
        }
        for (mu, _) in dn.iter().enumerate().filter(|(_, &c)| c == 1) {
            self.click(mu, &mut v);
        }
        let mut v = self.classical_forward(&v);
        self.quantum_forward(&mut v);
        v.symmetrize();
        finite(v)
    }

    /// Adjoint of [`forward_step`](Self::forward_step), from t_{k+1} back to t_k.
    pub fn backward_step(&self, g: &HybridOperator, dn: &[u8], dy: &[f64]) -> Result<HybridOperator> {
        self.check_state(g)?;
        self.check_record(dn, dy)?;
        let mut v = g.clone();
        self.quantum_adjoint(&mut v);
        let mut v = self.classical_adjoint(&v);
        for (mu, _) in dn.iter().enumerate().rev().filter(|(_, &c)| c == 1) {
            self.click_adjoint(mu, &mut v);
        }
        if !dy.is_empty() {
            self.gaussian_adjoint(&mut v, dy);
        }
        for mu in (0..dn.len()).rev() {
            self.no_click(mu, &mut v, 1.0);
        }
        v.symmetrize();
        finite(v)
    }
}

fn finite(v: HybridOperator) -> Result<HybridOperator> {
    if v.mats.iter().all(CMatrix::is_finite) {
        Ok(v)
    } else {
        Err(Error::Numerical("non-finite hybrid operator after step".into()))
    }
}

/// ∫tr[L†L F] / ∫tr F.
fn mean_intensity(f: &HybridOperator, effect: &super::PointOp) -> f64 {
    let num: f64 = f.mats.iter().enumerate().map(|(i, m)| effect.at(i).trace_product(m).re).sum();
    let den: f64 = f.trace_density().iter().sum();
    num / den
}

/// ∫tr[C F] / ∫tr F.
fn mean_of(f: &HybridOperator, op: &super::PointOp) -> C64 {
    let num: C64 = f.mats.iter().enumerate().map(|(i, m)| op.at(i).trace_product(m)).sum();
    let den: f64 = f.trace_density().iter().sum();
    num / den
}

/// dη = dy − (dt/2)⟨Ĉ + Ĉ†⟩_F for every Gaussian channel.
pub fn filtered_gaussian_innovation(f: &HybridOperator, model: &HybridModel, dy: &[f64], dt: f64) -> Result<Vec<f64>> {
    let g = model
        .gaussian()
        .ok_or_else(|| Error::Model("model has no Gaussian channels".into()))?;
    if dy.len() != g.ops.len() {
        return Err(Error::Dimension("dy length != number of Gaussian channels".into()));
    }
    Ok(g.ops.iter().zip(dy).map(|(op, y)| y - dt * mean_of(f, op).re).collect())
}

/// h(x) = tr[ĝ(x)f̂(x)] / ∫dx tr[ĝf̂].
pub fn smooth_density(f: &HybridOperator, g: &HybridOperator) -> Result<DensityGrid> {
    if f.grid != g.grid || f.dim() != g.dim() {
        return Err(Error::Dimension("f and g have different shapes".into()));
    }
    let raw: Vec<f64> = f.mats.iter().zip(&g.mats).map(|(a, b)| b.trace_product(a).re).collect();
    let total: f64 = raw.iter().sum::<f64>() * f.grid.cell_volume();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateRecord(format!("forward/backward overlap is {total}")));
    }
    let scale = raw.iter().cloned().fold(0.0, f64::max);
    if let Some(v) = raw.iter().find(|v| **v < -1e-9 * scale) {
        return Err(Error::Numerical(format!("smoothing density has a negative value {v}")));
    }
    DensityGrid::new(f.grid.clone(), raw.into_iter().map(|v| v.max(0.0)).collect(), true)
}

pub fn hybrid_prior_step(rho: &HybridOperator, model: &HybridModel, dt: f64) -> Result<HybridOperator> {
    HybridStepper::new(model, dt)?.prior_step(rho)
}

pub fn quantum_snyder_step(f: &HybridOperator, model: &HybridModel, dn: &[u8], dt: f64) -> Result<HybridOperator> {
    HybridStepper::new(model, dt)?.snyder_step(f, dn, &[])
}

pub fn quantum_zakai_step(f: &HybridOperator, model: &HybridModel, dn: &[u8], dt: f64) -> Result<HybridOperator> {
    HybridStepper::new(model, dt)?.forward_step(f, dn, &[])
}

pub fn effect_backward_step(g: &HybridOperator, model: &HybridModel, dn: &[u8], dt: f64) -> Result<HybridOperator> {
    HybridStepper::new(model, dt)?.backward_step(g, dn, &[])
}

pub fn combined_step_forward(
    f: &HybridOperator,
    model: &HybridModel,
    dn: &[u8],
    dy: &[f64],
    dt: f64,
) -> Result<HybridOperator> {
    HybridStepper::new(model, dt)?.forward_step(f, dn, dy)
}

pub fn combined_step_backward(
    g: &HybridOperator,
    model: &HybridModel,
    dn: &[u8],
    dy: &[f64],
    dt: f64,
) -> Result<HybridOperator> {
    HybridStepper::new(model, dt)?.backward_step(g, dn, dy)
}
