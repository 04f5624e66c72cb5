//! Linearized two-filter smoother for the state (b, m).

use nalgebra::{Matrix2, Matrix4, Vector2};

use super::{Estimator, MagnetometerConfig};
use crate::error::{Error, Result};
use crate::output::SmootherOutput;
use crate::record::MeasurementRecord;

#[derive(Clone, Debug, PartialEq)]
pub struct KalmanOptions {
    /// Multiplier of the observation noise |a|²dt; infinity ignores the record.
    pub noise_scale: f64,
}

impl Default for KalmanOptions {
    fn default() -> Self {
        Self { noise_scale: 1.0 }
    }
}

/// Kalman smoother output plus the covariances behind it, one per stored time.
#[derive(Clone, Debug)]
pub struct KalmanRun {
    pub output: SmootherOutput,
    /// Predictive covariance P_f.
    pub forward_cov: Vec<Matrix2<f64>>,
    /// Retrodictive information matrix P_b⁻¹ (may be singular near T).
    pub backward_info: Vec<Matrix2<f64>>,
    /// Smoothed covariance (P_f⁻¹ + P_b⁻¹)⁻¹.
    pub smooth_cov: Vec<Matrix2<f64>>,
}

fn min_eig(m: &Matrix2<f64>) -> f64 {
    let s = 0.5 * (m + m.transpose());
    s.symmetric_eigenvalues().min()
}

impl KalmanRun {
    /// Largest relative violation of H ≼ P_f and H ≼ P_b over all stored
    /// times; zero when the order holds. The backward check is done in
    /// information form, H⁻¹ − P_b⁻¹ ≽ 0, which stays defined when P_b⁻¹ is singular.
    pub fn order_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ((pf, yb), h) in self.forward_cov.iter().zip(&self.backward_info).zip(&self.smooth_cov) {
            let scale = pf.norm().max(1e-300);
            worst = worst.max(-min_eig(&(pf - h)) / scale);
            if let Some(hi) = h.try_inverse() {
                let iscale = hi.norm().max(1e-300);
                worst = worst.max(-min_eig(&(hi - yb)) / iscale);
            }
            if let Some(pb) = yb.try_inverse().filter(|m| m.iter().all(|v| v.is_finite())) {
                worst = worst.max(-min_eig(&(pb - h)) / pb.norm().max(1e-300));
            }
        }
        worst.max(0.0)
    }
}

/// Van Loan discretization of dx = A x dt + noise with spectral density Qc.
fn discretize(a: &Matrix2<f64>, qc: &Matrix2<f64>, dt: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-a * dt));
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(&(qc * dt));
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&(a.transpose() * dt));
    let e = m.exp();
    let f: Matrix2<f64> = e.fixed_view::<2, 2>(2, 2).transpose();
    let qd = f * e.fixed_view::<2, 2>(0, 2);
    (f, 0.5 * (qd + qd.transpose()))
}

fn check_psd(m: &Matrix2<f64>, what: &str, k: usize) -> Result<()> {
    let tol = 1e-9 * m.norm().max(1.0);
    if !m.iter().all(|v| v.is_finite()) || min_eig(m) < -tol {
        return Err(Error::Numerical(format!(
            "{what} lost positive semidefiniteness at step {k}: {m:?}"
        )));
    }
    Ok(())
}

/// Forward Kalman filter, backward information filter, and their
/// precision-weighted combination on the linearized model
/// db = −γ_b b dt + √Q dW, dm = γ_g s b dt, z = dN₊ − dN₋ ≈ 2|a|²κ m dt + noise(|a|²dt).
pub fn kalman_mfp(cfg: &MagnetometerConfig, record: &MeasurementRecord, opts: &KalmanOptions) -> Result<KalmanRun> {
    cfg.validate()?;
    record.validate()?;
    if record.channels.len() != 2 {
        return Err(Error::Dimension("the Kalman smoother needs the two polarimetry channels".into()));
    }
    let dt = record.dt;
    let n = record.steps();
    let a = Matrix2::new(-cfg.field.gamma, 0.0, cfg.gamma_g * cfg.s, 0.0);
    let qc = Matrix2::new(cfg.field.q, 0.0, 0.0, 0.0);
    let (f, qd) = discretize(&a, &qc, dt);
    let h = Vector2::new(0.0, 2.0 * cfg.a2() * cfg.kappa * dt);
    let r = opts.noise_scale * cfg.a2() * dt;
    let observe = r.is_finite();
    let z = |k: usize| record.counts[k][0] as f64 - record.counts[k][1] as f64;

    let stride = cfg.stride.max(1);
    let stored = |k: usize| k % stride == 0 || k == n;
    let mut idx = Vec::new();
    let mut xf = Vec::new();
    let mut pf = Vec::new();
    let mut x = Vector2::new(0.0, cfg.m0);
    let mut p = Matrix2::new(cfg.prior_var()?, 0.0, 0.0, cfg.m_prior_var());
    for k in 0..=n {
        check_psd(&p, "forward covariance", k)?;
        if stored(k) {
            idx.push(k);
            xf.push(x);
            pf.push(p);
        }
        if k == n {
            break;
        }
        if observe {
            let ph = p * h;
            let s = h.dot(&ph) + r;
            let gain = ph / s;
            x += gain * (z(k) - h.dot(&x));
            // Joseph form keeps P symmetric and PSD.
            let ikh = Matrix2::identity() - gain * h.transpose();
            p = ikh * p * ikh.transpose() + gain * gain.transpose() * r;
        }
        x = f * x;
        p = f * p * f.transpose() + qd;
        p = 0.5 * (p + p.transpose());
    }

    let mut yb = vec![Matrix2::zeros(); idx.len()];
    let mut vb = vec![Vector2::zeros(); idx.len()];
    let mut y = Matrix2::<f64>::zeros();
    let mut v = Vector2::<f64>::zeros();
    let mut j = idx.len();
    for k in (0..=n).rev() {
        if k < n {
            let gain = (Matrix2::identity() + y * qd)
                .try_inverse()
                .ok_or_else(|| Error::Numerical(format!("backward propagation singular at step {k}")))?;
            y = f.transpose() * gain * y * f;
            v = f.transpose() * gain * v;
            y = 0.5 * (y + y.transpose());
            if observe {
                y += h * h.transpose() / r;
                v += h * z(k) / r;
            }
            check_psd(&y, "backward information", k)?;
        }
        if j > 0 && idx[j - 1] == k {
            j -= 1;
            yb[j] = y;
            vb[j] = v;
        }
    }

    let mut out = SmootherOutput {
        estimator: Estimator::KalmanMfp.name().into(),
        axis_names: vec!["b".into(), "m".into()],
        times: idx.iter().map(|&k| record.time(k)).collect(),
        ..Default::default()
    };
    let mut hs = Vec::with_capacity(idx.len());
    for i in 0..idx.len() {
        let pinv = pf[i]
            .try_inverse()
            .ok_or_else(|| Error::Numerical(format!("forward covariance singular at step {}", idx[i])))?;
        let hcov = (pinv + yb[i])
            .try_inverse()
            .ok_or_else(|| Error::Numerical(format!("smoothed precision singular at step {}", idx[i])))?;
        let hcov = 0.5 * (hcov + hcov.transpose());
        let mean = hcov * (pinv * xf[i] + vb[i]);
        out.filter_mean.push(vec![xf[i][0], xf[i][1]]);
        out.filter_var.push(vec![pf[i][(0, 0)], pf[i][(1, 1)]]);
        out.smooth_mean.push(vec![mean[0], mean[1]]);
        out.smooth_var.push(vec![hcov[(0, 0)], hcov[(1, 1)]]);
        match yb[i].cholesky() {
            Some(ch) => {
                let pb = ch.inverse();
                let xb = pb * vb[i];
                out.backward_mean.push(vec![xb[0], xb[1]]);
                out.backward_var.push(vec![pb[(0, 0)], pb[(1, 1)]]);
            }
            None => {
                out.backward_mean.push(vec![f64::NAN; 2]);
                out.backward_var.push(vec![f64::INFINITY; 2]);
            }
        }
        hs.push(hcov);
    }
    Ok(KalmanRun {
        output: out,
        forward_cov: pf,
        backward_info: yb,
        smooth_cov: hs,
    })
}
