//! Spin-ensemble magnetometry: configuration, polarimetry channels, the
//! azimuthal jump kernel, truth simulation, and three field estimators.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ops, CMatrix, C64};

mod benchmark;
mod estimators;
mod kalman;
mod simulate;
#[cfg(test)]
mod tests;

pub use benchmark::{benchmark, BenchmarkSummary, TrialErrors};
pub(crate) use estimators::{exact_hybrid_model, exact_hybrid_prior};
pub use estimators::{coherent_state_x, phase_space_validity, run_estimator, run_exact_hybrid, run_phase_space_classical};
pub use kalman::{kalman_mfp, KalmanOptions, KalmanRun};
pub use simulate::{simulate_quantum_truth, simulate_truth, simulate_truth_and_record, Truth};

/// Names of the two polarimetry channels.
pub const CHANNELS: [&str; 2] = ["plus", "minus"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    ExactHybrid,
    PhaseSpaceClassical,
    #[default]
    KalmanMfp,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::ExactHybrid => "exact-hybrid",
            Estimator::PhaseSpaceClassical => "phase-space-classical",
            Estimator::KalmanMfp => "kalman-mfp",
        }
    }
}

/// Variance rate of the azimuthal diffusion: |a|²κ² or |a|²κ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiRate {
    #[default]
    KappaSquared,
    Kappa,
}

/// Ornstein-Uhlenbeck field db = −γ_b b dt + √Q dW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldModel {
    pub gamma: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    /// Initial field of the truth; drawn from the prior when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    /// Prior variance of b(0); defaults to the stationary Q/(2γ_b).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_var: Option<f64>,
}

/// Grid resolution of the grid-based estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub b_points: usize,
    /// Half-width of the b grid in prior standard deviations.
    pub b_width: f64,
    /// Explicit b range, overriding `b_width`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_range: Option<[f64; 2]>,
    /// m grid of the phase-space model; defaults to the 2s+1 spin values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_points: Option<usize>,
    /// Half-width of the m grid; defaults to s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_range: Option<f64>,
    pub phi_points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            b_points: 21,
            b_width: 4.0,
            b_range: None,
            m_points: None,
            m_range: None,
            phi_points: 16,
        }
    }
}

fn default_stride() -> usize {
    1
}

fn default_trials() -> usize {
    200
}

fn default_mid() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetometerConfig {
    /// Total spin number; the spin dimension is 2s+1.
    pub s: f64,
    pub kappa: f64,
    /// Optical amplitude; |a|² is the photon flux.
    pub a: f64,
    pub gamma_g: f64,
    pub field: FieldModel,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub phi_rate: PhiRate,
    #[serde(default)]
    pub m0: f64,
    #[serde(default)]
    pub phi0: f64,
    /// Spread of m(0); defaults to the coherent-state value s/2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_prior_var: Option<f64>,
    /// Spread of φ(0); defaults to the coherent-state value 1/(2s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_prior_var: Option<f64>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Benchmark evaluation time as a fraction of T.
    #[serde(default = "default_mid")]
    pub tau_fraction: f64,
}

impl MagnetometerConfig {
    /// The OU benchmark: five field correlation times, γ_g·s = 10, |a|² = 500.
    pub fn benchmark_default() -> Self {
        Self {
            s: 1000.0,
            kappa: 2e-3,
            a: 500f64.sqrt(),
            gamma_g: 0.01,
            field: FieldModel {
                gamma: 1.0,
                q: 2.0,
                b0: None,
                prior_var: None,
            },
            dt: 1e-4,
            t_end: 10.0,
            estimator: Estimator::KalmanMfp,
            phi_rate: PhiRate::KappaSquared,
            m0: 0.0,
            phi0: 0.0,
            m_prior_var: None,
            phi_prior_var: None,
            grid: GridConfig::default(),
            stride: 100,
            trials: 200,
            tau_fraction: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        let two_s = 2.0 * self.s;
        if !(self.s > 0.0 && (two_s - two_s.round()).abs() < 1e-9) {
            return bad(format!("s = {} must be a positive multiple of 1/2", self.s));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa = {} must be finite and nonnegative", self.kappa));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad(format!("a = {} must be positive", self.a));
        }
        if !self.gamma_g.is_finite() {
            return bad("gamma_g must be finite".into());
        }
        if !(self.dt > 0.0 && self.t_end >= self.dt) {
            return bad(format!("need dt > 0 and T >= dt, got dt = {}, T = {}", self.dt, self.t_end));
        }
        let f = &self.field;
        if !(f.gamma >= 0.0 && f.gamma.is_finite()) {
            return bad("field.gamma must be nonnegative".into());
        }
        if !(f.q >= 0.0 && f.q.is_finite()) {
            return bad("field.Q must be nonnegative".into());
        }
        if let Some(v) = f.prior_var {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("field.prior_var must be nonnegative".into());
            }
        }
        for v in [self.m_prior_var, self.phi_prior_var].into_iter().flatten() {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("prior variances must be nonnegative".into());
            }
        }
        if self.grid.b_points < 2 || self.grid.phi_points < 2 {
            return bad("grids need at least two points per axis".into());
        }
        if self.grid.m_points.is_some_and(|m| m < 2) {
            return bad("grid.m_points must be at least 2".into());
        }
        if !(self.tau_fraction > 0.0 && self.tau_fraction < 1.0) {
            return bad("tau_fraction must lie in (0, 1)".into());
        }
        Ok(())
    }

    pub fn two_s(&self) -> usize {
        (2.0 * self.s).round() as usize
    }

    /// Spin dimension N = 2s+1.
    pub fn dim(&self) -> usize {
        self.two_s() + 1
    }

    pub fn a2(&self) -> f64 {
        self.a * self.a
    }

    /// Magnetic quantum numbers −s, …, s.
    pub fn m_values(&self) -> Vec<f64> {
        (0..self.dim()).map(|q| q as f64 - self.s).collect()
    }

    pub fn phi_variance_rate(&self) -> f64 {
        match self.phi_rate {
            PhiRate::KappaSquared => self.a2() * self.kappa * self.kappa,
            PhiRate::Kappa => self.a2() * self.kappa,
        }
    }

    pub fn prior_var(&self) -> Result<f64> {
        let f = &self.field;
        match f.prior_var {
            Some(v) => Ok(v),
            None if f.gamma > 0.0 => Ok(f.q / (2.0 * f.gamma)),
            None => Err(Error::InvalidArgument(
                "field.prior_var is required when the field has no reversion".into(),
            )),
        }
    }

    pub fn m_prior_var(&self) -> f64 {
        self.m_prior_var.unwrap_or(0.5 * self.s)
    }

    pub fn phi_prior_var(&self) -> f64 {
        self.phi_prior_var.unwrap_or(0.5 / self.s)
    }

    pub fn b_range(&self) -> Result<[f64; 2]> {
        if let Some(r) = self.grid.b_range {
            return Ok(r);
        }
        let sd = self.prior_var()?.sqrt();
        if sd <= 0.0 {
            return Err(Error::InvalidArgument("zero prior variance needs an explicit grid.b_range".into()));
        }
        Ok([-self.grid.b_width * sd, self.grid.b_width * sd])
    }

    pub fn steps(&self) -> usize {
        crate::record::step_count(0.0, self.t_end, self.dt)
    }
}

/// (λ₊, λ₋)(m) = (|a|²/2)(1 ± sin 2κm).
pub fn intensities(cfg: &MagnetometerConfig, m: f64) -> [f64; 2] {
    let s = (2.0 * cfg.kappa * m).sin();
    let h = 0.5 * cfg.a2();
    [h * (1.0 + s), h * (1.0 - s)]
}

/// L̂± = (a/√2)[cos κm̂ ± sin κm̂], diagonal in the m basis.
pub fn measurement_channels(cfg: &MagnetometerConfig) -> [CMatrix; 2] {
    let c = cfg.a / 2f64.sqrt();
    let ms = cfg.m_values();
    let diag = |sign: f64| {
        CMatrix::from_real_diag(
            &ms.iter()
                .map(|m| c * ((cfg.kappa * m).cos() + sign * (cfg.kappa * m).sin()))
                .collect::<Vec<_>>(),
        )
    };
    [diag(1.0), diag(-1.0)]
}

/// Larmor Hamiltonian −γ_g b Ŝ_y.
pub fn larmor_hamiltonian(cfg: &MagnetometerConfig, b: f64) -> CMatrix {
    let (_, sy, _) = ops::spin_operators(cfg.two_s());
    sy.scale(C64::new(-cfg.gamma_g * b, 0.0))
}

/// Tabulated J(Δφ) on Δφ = πk/N, k = 0..2N−1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpKernelTable {
    #[serde(rename = "N")]
    pub n: usize,
    pub kappa: f64,
    pub dphi: Vec<f64>,
    pub values: Vec<f64>,
}

impl JumpKernelTable {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn has_negative(&self) -> bool {
        self.min() < -1e-12
    }

    /// J at a shift of `k` half-steps, k taken mod 2N.
    pub fn at(&self, k: isize) -> f64 {
        self.values[k.rem_euclid(2 * self.n as isize) as usize]
    }
}

/// sin(Nx)/tan(x/2), continued by its limit 2N·cos(Nx)·cos²(x/2) where sin(x/2) = 0.
fn sin_tan_ratio(n: usize, x: f64) -> f64 {
    let nf = n as f64;
    let h = (0.5 * x).sin();
    if h.abs() < 1e-9 {
        2.0 * nf * (nf * x).cos() * (0.5 * x).cos().powi(2)
    } else {
        (nf * x).sin() / (0.5 * x).tan()
    }
}

/// J(Δφ) = (1/4N)[sin N(Δφ−κ)/tan((Δφ−κ)/2) + sin N(Δφ+κ)/tan((Δφ+κ)/2)].
pub fn jump_kernel_table(n: usize, kappa: f64) -> JumpKernelTable {
    let nf = n as f64;
    let dphi: Vec<f64> = (0..2 * n).map(|k| PI * k as f64 / nf).collect();
    let values = dphi
        .iter()
        .map(|&d| (sin_tan_ratio(n, d - kappa) + sin_tan_ratio(n, d + kappa)) / (4.0 * nf))
        .collect();
    JumpKernelTable { n, kappa, dphi, values }
}

/// Jump kernel of a configuration, with negative entries reported as a warning.
pub fn jump_kernel(cfg: &MagnetometerConfig) -> JumpKernelTable {
    let t = jump_kernel_table(cfg.dim(), cfg.kappa);
    if t.has_negative() {
        log::warn!("jump kernel has negative entries (min {:.3e})", t.min());
    }
    t
}
