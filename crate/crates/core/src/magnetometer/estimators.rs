//! Grid-based field estimators: exact hybrid and cylindrical phase space.

use std::f64::consts::PI;

use super::kalman::{kalman_mfp, KalmanOptions};
use super::{intensities, larmor_hamiltonian, measurement_channels, Estimator, MagnetometerConfig, CHANNELS};
use crate::classical::{self, ClassicalModel, ForwardKind, SmootherOptions};
use crate::error::{Error, Result};
use crate::grid::{Axis, ClassicalGrid, DensityGrid};
use crate::hybrid::{self, HybridForwardKind, HybridModel, HybridOperator, HybridSmootherOptions, PointOp};
use crate::linalg::{ops, CMatrix, C64};
use crate::output::SmootherOutput;
use crate::record::MeasurementRecord;

/// Spin coherent state along +x, (Ŝ_x = s), in the m = −s..s basis.
pub fn coherent_state_x(two_s: usize) -> Vec<C64> {
    let (_, sy, _) = ops::spin_operators(two_s);
    let rot = sy
        .scale(C64::new(0.0, -0.5 * PI))
        .expm()
        .expect("rotation generator is finite");
    let mut top = vec![C64::new(0.0, 0.0); two_s + 1];
    top[two_s] = C64::new(1.0, 0.0);
    rot.apply(&top)
}

fn gaussian(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp()
}

fn check_positive(var: f64, what: &str) -> Result<f64> {
    if var > 0.0 {
        Ok(var)
    } else {
        Err(Error::InvalidArgument(format!("{what} prior variance must be positive on a grid")))
    }
}

fn b_axis(cfg: &MagnetometerConfig) -> Result<Axis> {
    let [lo, hi] = cfg.b_range()?;
    Axis::new("b", lo, hi, cfg.grid.b_points)
}

/// Hybrid model on the b grid: OU field, Larmor coupling −γ_g b Ŝ_y, and the
/// two polarimetry channels.
pub(crate) fn exact_hybrid_model(cfg: &MagnetometerConfig) -> Result<HybridModel> {
    let grid = ClassicalGrid::one_dim(b_axis(cfg)?);
    let (gamma, q) = (cfg.field.gamma, cfg.field.q);
    let classical = ClassicalModel::builder(grid)
        .drift(0, move |x| -gamma * x[0])
        .diffusion(0, move |_| q)
        .build()?;
    let [lp, lm] = measurement_channels(cfg);
    let c = cfg.clone();
    HybridModel::builder(classical, cfg.dim())
        .coupling(move |x| larmor_hamiltonian(&c, x[0]))
        .jump_channel(CHANNELS[0], PointOp::Shared(lp))
        .jump_channel(CHANNELS[1], PointOp::Shared(lm))
        .build()
}

pub(crate) fn exact_hybrid_prior(cfg: &MagnetometerConfig, model: &HybridModel) -> Result<HybridOperator> {
    let var = check_positive(cfg.prior_var()?, "field")?;
    let pb = DensityGrid::from_fn(model.grid().clone(), |x| gaussian(x[0], 0.0, var), true)?;
    let rho = CMatrix::pure_state(&coherent_state_x(cfg.two_s()));
    Ok(HybridOperator::product(&pb, &rho))
}

/// Forward quantum Zakai sweep, effect-operator sweep, and h(b, τ) for a small spin.
pub fn run_exact_hybrid(cfg: &MagnetometerConfig, record: &MeasurementRecord) -> Result<SmootherOutput> {
    cfg.validate()?;
    let model = exact_hybrid_model(cfg)?;
    let prior = exact_hybrid_prior(cfg, &model)?;
    let (_, _, sz) = ops::spin_operators(cfg.two_s());
    let opts = HybridSmootherOptions {
        forward: HybridForwardKind::Zakai,
        stride: cfg.stride,
        keep_densities: false,
        observables: vec![("m".into(), sz)],
    };
    let mut out = hybrid::smooth(&model, &prior, record, &opts)?;
    out.estimator = Estimator::ExactHybrid.name().into();
    Ok(out)
}

/// Violations of the diffusive-approximation conditions behind the
/// cylindrical model, as human-readable warnings.
pub fn phase_space_validity(cfg: &MagnetometerConfig) -> Vec<String> {
    let mut w = Vec::new();
    let m_scale = cfg.grid.m_range.unwrap_or(cfg.s).min(cfg.s);
    if cfg.s < 10.0 {
        w.push(format!("s = {} is too small for the diffusive approximation", cfg.s));
    }
    if m_scale > 0.5 * cfg.s && cfg.grid.m_range.is_none() {
        w.push("the m grid reaches |m| ~ s, where the cylinder picture breaks down".into());
    }
    let dphi = cfg.phi_prior_var().sqrt();
    if cfg.kappa > 0.1 * dphi {
        w.push(format!("kappa = {} is not small compared with the azimuthal spread {dphi:.3e}", cfg.kappa));
    }
    w
}

pub(crate) fn phase_space_model(cfg: &MagnetometerConfig) -> Result<ClassicalModel> {
    let mr = cfg.grid.m_range.unwrap_or(cfg.s);
    let mp = cfg.grid.m_points.unwrap_or(cfg.dim());
    let grid = ClassicalGrid::new(vec![
        Axis::new("m", -mr, mr, mp)?,
        Axis::periodic("phi", -PI, PI, cfg.grid.phi_points)?,
        b_axis(cfg)?,
    ])?;
    let (gs, gamma, q, dphi) = (cfg.gamma_g * cfg.s, cfg.field.gamma, cfg.field.q, cfg.phi_variance_rate());
    let (c1, c2) = (cfg.clone(), cfg.clone());
    ClassicalModel::builder(grid)
        .drift(0, move |x| gs * x[2] * x[1].cos())
        .diffusion(1, move |_| dphi)
        .drift(2, move |x| -gamma * x[2])
        .diffusion(2, move |_| q)
        .channel(CHANNELS[0], move |x| intensities(&c1, x[0])[0])
        .channel(CHANNELS[1], move |x| intensities(&c2, x[0])[1])
        .build()
}

pub(crate) fn phase_space_prior(cfg: &MagnetometerConfig, model: &ClassicalModel) -> Result<DensityGrid> {
    let vb = check_positive(cfg.prior_var()?, "field")?;
    let vm = check_positive(cfg.m_prior_var(), "m")?;
    let vp = check_positive(cfg.phi_prior_var(), "phi")?;
    let (m0, p0) = (cfg.m0, cfg.phi0);
    let wrap = |d: f64| (d + PI).rem_euclid(2.0 * PI) - PI;
    let d = DensityGrid::from_fn(
        model.grid().clone(),
        |x| gaussian(x[0], m0, vm) * gaussian(wrap(x[1] - p0), 0.0, vp) * gaussian(x[2], 0.0, vb),
        true,
    );
    match d {
        Err(Error::DegenerateRecord(_)) | Err(Error::Numerical(_)) => {
            Err(Error::InvalidArgument("prior has no mass on the grid".into()))
        }
        other => other,
    }
}

/// Classical smoother on the (m, φ, b) cylinder with intensities λ±(m).
pub fn run_phase_space_classical(
    cfg: &MagnetometerConfig,
    record: &MeasurementRecord,
    keep_densities: bool,
) -> Result<SmootherOutput> {
    cfg.validate()?;
    for w in phase_space_validity(cfg) {
        log::warn!("{w}");
    }
    let model = phase_space_model(cfg)?;
    let prior = phase_space_prior(cfg, &model)?;
    let opts = SmootherOptions {
        forward: ForwardKind::Pardoux,
        stride: cfg.stride,
        keep_densities,
    };
    let mut out = classical::smooth(&model, &prior, record, &opts)?;
    out.estimator = Estimator::PhaseSpaceClassical.name().into();
    Ok(out)
}

/// Runs the configured estimator.
pub fn run_estimator(cfg: &MagnetometerConfig, record: &MeasurementRecord) -> Result<SmootherOutput> {
    match cfg.estimator {
        Estimator::ExactHybrid => run_exact_hybrid(cfg, record),
        Estimator::PhaseSpaceClassical => run_phase_space_classical(cfg, record, false),
        Estimator::KalmanMfp => Ok(kalman_mfp(cfg, record, &KalmanOptions::default())?.output),
    }
}
