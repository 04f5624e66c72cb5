use std::f64::consts::PI;

use proptest::prelude::*;

use super::estimators::{exact_hybrid_model, phase_space_model};
use super::*;
use crate::linalg::{ops, CMatrix, C64};
use crate::record::MeasurementRecord;
use crate::rng::RngStream;
use crate::wigner::hb_wigner;

fn small_cfg() -> MagnetometerConfig {
    MagnetometerConfig {
        s: 0.5,
        kappa: 0.3,
        a: 5.0,
        gamma_g: 20.0,
        field: FieldModel {
            gamma: 1.0,
            q: 2.0,
            b0: None,
            prior_var: None,
        },
        dt: 1e-3,
        t_end: 0.2,
        estimator: Estimator::ExactHybrid,
        phi_rate: PhiRate::KappaSquared,
        m0: 0.0,
        phi0: 0.0,
        m_prior_var: None,
        phi_prior_var: None,
        grid: GridConfig {
            b_points: 9,
            ..Default::default()
        },
        stride: 1,
        trials: 4,
        tau_fraction: 0.5,
    }
}

#[test]
fn channels_are_complete() {
    for (s, kappa) in [(0.5, 0.3), (2.0, 1.1), (3.5, 0.05)] {
        let cfg = MagnetometerConfig { s, kappa, ..small_cfg() };
        let [lp, lm] = measurement_channels(&cfg);
        let total = &lp.adjoint().try_mul(&lp).unwrap() + &lm.adjoint().try_mul(&lm).unwrap();
        let expect = CMatrix::identity(cfg.dim()).scale(C64::new(cfg.a2(), 0.0));
        assert!(total.max_abs_diff(&expect) < 1e-12);
        for m in cfg.m_values() {
            let [a, b] = intensities(&cfg, m);
            assert!((a + b - cfg.a2()).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_coupling_channels_coincide() {
    let cfg = MagnetometerConfig { kappa: 0.0, ..small_cfg() };
    let [lp, lm] = measurement_channels(&cfg);
    assert!(lp.max_abs_diff(&lm) < 1e-15);
    let expect = CMatrix::identity(2).scale(C64::new(cfg.a / 2f64.sqrt(), 0.0));
    assert!(lp.max_abs_diff(&expect) < 1e-15);
}

#[test]
fn half_spin_intensities_at_quarter_turn() {
    let cfg = MagnetometerConfig { kappa: PI / 2.0, ..small_cfg() };
    let [lp, lm] = measurement_channels(&cfg);
    let a2 = cfg.a2();
    for (q, m) in [(0usize, -0.5), (1, 0.5)] {
        let lam_p = lp[(q, q)].norm_sqr();
        let lam_m = lm[(q, q)].norm_sqr();
        assert!((lam_p - 0.5 * a2 * (1.0 + (PI * m).sin())).abs() < 1e-12);
        assert!((lam_m - 0.5 * a2 * (1.0 - (PI * m).sin())).abs() < 1e-12);
    }
    assert!(lp[(1, 1)].norm_sqr() - a2 < 1e-12);
    assert!(lp[(0, 0)].norm_sqr() < 1e-12);
}

#[test]
fn jump_kernel_delta_form_on_lattice() {
    for n in 2..=7 {
        for mu in 1..n {
            let kappa = PI * mu as f64 / n as f64;
            let t = jump_kernel_table(n, kappa);
            for k in 0..2 * n {
                let expect = if k == mu || k == 2 * n - mu { 0.5 } else { 0.0 };
                assert!((t.values[k] - expect).abs() < 1e-12, "N={n} mu={mu} k={k}: {}", t.values[k]);
            }
        }
    }
}

#[test]
fn jump_kernel_is_normalized_and_can_be_negative() {
    let mut negative = false;
    for n in [2usize, 3, 5, 8] {
        for j in 1..=20 {
            let kappa = 0.037 + 0.173 * j as f64;
            let t = jump_kernel_table(n, kappa);
            assert!((t.sum() - 1.0).abs() < 1e-10, "N={n} kappa={kappa}: {}", t.sum());
            negative |= t.has_negative();
        }
    }
    assert!(negative);
}

#[test]
fn jump_kernel_matches_decoherence_in_phase_space() {
    // ½(e^{iκm} f e^{−iκm} + e^{−iκm} f e^{iκm}) shifts the HB table along p by J.
    for (n, kappa) in [(2usize, 0.41), (3, 1.3), (4, 0.2), (5, 2.2)] {
        let cfg = MagnetometerConfig {
            s: (n as f64 - 1.0) / 2.0,
            kappa,
            ..small_cfg()
        };
        let ms = cfg.m_values();
        let u = CMatrix::from_diag(&ms.iter().map(|m| C64::from_polar(1.0, kappa * m)).collect::<Vec<_>>());
        let mut rng = RngStream::new(11, n as u64);
        let mut f = CMatrix::zeros(n);
        for r in 0..n {
            for c in 0..n {
                f[(r, c)] = C64::new(rng.normal(), rng.normal());
            }
        }
        let f = &f + &f.adjoint();
        let ud = u.adjoint();
        let mut d = f.sandwich(&u, &ud);
        d.axpy_real(1.0, &f.sandwich(&ud, &u));
        d.scale_real_mut(0.5);
        let w = hb_wigner(&f, n).unwrap();
        let wd = hb_wigner(&d, n).unwrap();
        let j = jump_kernel(&cfg);
        let side = 2 * n;
        for q2 in 0..side {
            for p2 in 0..side {
                let conv: f64 = (0..side)
                    .map(|k| j.values[k] * w.values[q2][(p2 + side - k) % side])
                    .sum();
                assert!(
                    (conv - wd.values[q2][p2]).abs() < 1e-12,
                    "N={n} q2={q2} p2={p2}: {conv} vs {}",
                    wd.values[q2][p2]
                );
            }
        }
    }
}

#[test]
fn static_field_free_spin_keeps_m() {
    let mut cfg = MagnetometerConfig::benchmark_default();
    cfg.field.q = 0.0;
    cfg.field.b0 = Some(0.0);
    cfg.t_end = 0.5;
    let tr = simulate_truth(&cfg, &mut RngStream::new(3, 0)).unwrap();
    assert!(tr.m.iter().all(|&m| m == tr.m[0]));
}

#[test]
fn constant_field_grows_m_linearly() {
    let mut cfg = MagnetometerConfig::benchmark_default();
    cfg.field = FieldModel {
        gamma: 0.0,
        q: 0.0,
        b0: Some(0.7),
        prior_var: Some(1.0),
    };
    cfg.m_prior_var = Some(0.0);
    cfg.phi_prior_var = Some(0.0);
    cfg.t_end = 1.0;
    let tr = simulate_truth(&cfg, &mut RngStream::new(4, 0)).unwrap();
    let rate = cfg.gamma_g * cfg.s * 0.7;
    let last = tr.len() - 1;
    let expect = rate * tr.t[last];
    // φ diffuses at a²κ² = 2e-3 per unit time, so cos φ stays within 1e-2 of 1.
    assert!((tr.m[last] - expect).abs() < 1e-2 * expect.abs());
}

#[test]
fn mean_counts_follow_intensities() {
    let mut cfg = MagnetometerConfig::benchmark_default();
    cfg.kappa = 0.02;
    cfg.t_end = 0.5;
    let seeds = 40;
    let (mut np, mut nm, mut expect_p, mut expect_m) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..seeds {
        let (tr, rec) = simulate_truth_and_record(&cfg, &mut RngStream::new(9, seed)).unwrap();
        np += rec.total_counts(0) as f64;
        nm += rec.total_counts(1) as f64;
        for &m in &tr.m[..rec.steps()] {
            let [a, b] = intensities(&cfg, m);
            expect_p += a * cfg.dt;
            expect_m += b * cfg.dt;
        }
    }
    // Poisson totals of about 5000 clicks: 5σ is about 1.5%.
    assert!((np - expect_p).abs() < 5.0 * expect_p.sqrt(), "{np} vs {expect_p}");
    assert!((nm - expect_m).abs() < 5.0 * expect_m.sqrt(), "{nm} vs {expect_m}");
}

#[test]
fn truth_is_reproducible() {
    let cfg = small_cfg();
    let a = simulate_quantum_truth(&cfg, &mut RngStream::new(5, 2)).unwrap();
    let b = simulate_quantum_truth(&cfg, &mut RngStream::new(5, 2)).unwrap();
    assert_eq!(a, b);
    let mut c2 = MagnetometerConfig::benchmark_default();
    c2.t_end = 0.1;
    let a = simulate_truth_and_record(&c2, &mut RngStream::new(5, 2)).unwrap();
    let b = simulate_truth_and_record(&c2, &mut RngStream::new(5, 2)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn kalman_without_observations_returns_prior_statistics() {
    let mut cfg = MagnetometerConfig::benchmark_default();
    cfg.t_end = 3.0;
    cfg.dt = 1e-3;
    let (_, rec) = simulate_truth_and_record(&cfg, &mut RngStream::new(1, 0)).unwrap();
    let run = kalman_mfp(&cfg, &rec, &KalmanOptions { noise_scale: f64::INFINITY }).unwrap();
    let stat = cfg.field.q / (2.0 * cfg.field.gamma);
    for k in 0..run.output.times.len() {
        assert!((run.output.filter_var[k][0] - stat).abs() < 1e-9);
        assert!((run.output.smooth_var[k][0] - stat).abs() < 1e-9);
        assert!(run.output.smooth_mean[k][0].abs() < 1e-12);
    }
}

#[test]
fn static_field_filter_variance_decreases() {
    let mut cfg = MagnetometerConfig::benchmark_default();
    cfg.field = FieldModel {
        gamma: 0.0,
        q: 0.0,
        b0: Some(0.5),
        prior_var: Some(1.0),
    };
    cfg.kappa = 0.01;
    cfg.t_end = 2.0;
    cfg.dt = 1e-3;
    cfg.stride = 1;
    let (_, rec) = simulate_truth_and_record(&cfg, &mut RngStream::new(2, 0)).unwrap();
    let run = kalman_mfp(&cfg, &rec, &KalmanOptions::default()).unwrap();
    let v: Vec<f64> = run.output.filter_var.iter().map(|r| r[0]).collect();
    assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    assert!(v[v.len() - 1] < 0.5 * v[0]);
}

#[test]
fn kalman_covariances_are_ordered() {
    let mut cfg = MagnetometerConfig::benchmark_default();
    cfg.t_end = 2.0;
    for seed in 0..5 {
        let (_, rec) = simulate_truth_and_record(&cfg, &mut RngStream::new(8, seed)).unwrap();
        let run = kalman_mfp(&cfg, &rec, &KalmanOptions::default()).unwrap();
        assert!(run.order_violation() < 1e-9, "{}", run.order_violation());
        for k in 0..run.output.times.len() {
            assert!(run.output.smooth_var[k][0] <= run.output.filter_var[k][0] + 1e-12);
        }
    }
}

#[test]
fn uninformative_hybrid_record_keeps_prior() {
    let mut cfg = MagnetometerConfig { kappa: 0.0, ..small_cfg() };
    cfg.t_end = 0.05;
    let (_, rec) = simulate_quantum_truth(&cfg, &mut RngStream::new(1, 1)).unwrap();
    let out = run_exact_hybrid(&cfg, &rec).unwrap();
    let model = exact_hybrid_model(&cfg).unwrap();
    let prior = super::estimators::exact_hybrid_prior(&cfg, &model).unwrap();
    let (m0, v0) = prior.marginal().unwrap().moments(0);
    for k in 0..out.times.len() {
        assert!((out.smooth_mean[k][0] - m0).abs() < 1e-3, "{}", out.smooth_mean[k][0]);
        assert!((out.smooth_var[k][0] - v0).abs() < 2e-2 * v0);
    }
    assert!(out.pairing_deviation.unwrap() < 1e-9);
}

fn phase_cfg() -> MagnetometerConfig {
    let mut cfg = MagnetometerConfig::benchmark_default();
    cfg.s = 20.0;
    cfg.kappa = 0.01;
    cfg.gamma_g = 0.5;
    cfg.a = 200f64.sqrt();
    cfg.dt = 1e-3;
    cfg.t_end = 0.3;
    cfg.stride = 10;
    cfg.grid = GridConfig {
        b_points: 11,
        m_points: Some(21),
        phi_points: 8,
        ..Default::default()
    };
    cfg
}

#[test]
fn decoupled_field_gives_prior_smoothing() {
    let cfg = MagnetometerConfig { gamma_g: 0.0, ..phase_cfg() };
    let (_, rec) = simulate_truth_and_record(&cfg, &mut RngStream::new(7, 0)).unwrap();
    let out = run_phase_space_classical(&cfg, &rec, false).unwrap();
    let b = out.axis("b").unwrap();
    let (m0, v0) = (out.smooth_mean[0][b], out.smooth_var[0][b]);
    for k in 0..out.times.len() {
        assert!((out.smooth_mean[k][b] - m0).abs() < 1e-9);
        assert!((out.smooth_var[k][b] - v0).abs() < 1e-3 * v0);
    }
}

#[test]
fn vanishing_coupling_is_uninformative() {
    let mut cfg = phase_cfg();
    cfg.kappa = 0.0;
    let (_, rec) = simulate_truth_and_record(&cfg, &mut RngStream::new(7, 1)).unwrap();
    let out = run_phase_space_classical(&cfg, &rec, false).unwrap();
    let quiet = MeasurementRecord::silent(0.0, cfg.dt, rec.steps(), rec.channels.clone());
    let prior_only = run_phase_space_classical(&cfg, &quiet, false).unwrap();
    for k in 0..out.times.len() {
        for a in 0..3 {
            assert!((out.smooth_mean[k][a] - prior_only.smooth_mean[k][a]).abs() < 1e-9);
            assert!((out.filter_mean[k][a] - prior_only.filter_mean[k][a]).abs() < 1e-9);
        }
    }
}

#[test]
fn phase_space_model_has_both_channels() {
    let cfg = phase_cfg();
    let model = phase_space_model(&cfg).unwrap();
    assert_eq!(model.channels(), &["plus".to_string(), "minus".to_string()]);
    for i in 0..model.grid().len() {
        let total = model.intensity(0)[i] + model.intensity(1)[i];
        assert!((total - cfg.a2()).abs() < 1e-9);
    }
}

#[test]
fn coherent_state_points_along_x() {
    for two_s in 1..6 {
        let psi = coherent_state_x(two_s);
        let (sx, _, sz) = ops::spin_operators(two_s);
        let rho = CMatrix::pure_state(&psi);
        assert!((rho.trace_product(&sx).re - two_s as f64 / 2.0).abs() < 1e-12);
        assert!(rho.trace_product(&sz).re.abs() < 1e-12);
    }
}

#[test]
fn config_rejects_bad_spin() {
    let cfg = MagnetometerConfig { s: 0.7, ..small_cfg() };
    assert!(cfg.validate().is_err());
    let cfg = MagnetometerConfig { s: 0.0, ..small_cfg() };
    assert!(cfg.validate().is_err());
    let json = serde_json::to_string(&small_cfg()).unwrap();
    let back: MagnetometerConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, small_cfg());
    let bad = json.replacen("\"kappa\"", "\"kapa\"", 1);
    assert!(serde_json::from_str::<MagnetometerConfig>(&bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_sums_to_one(n in 2usize..12, kappa in 0.0f64..6.3) {
        let t = jump_kernel_table(n, kappa);
        prop_assert!((t.sum() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn intensities_complete(m in -50.0f64..50.0, kappa in 0.0f64..1.0) {
        let cfg = MagnetometerConfig { kappa, ..small_cfg() };
        let [a, b] = intensities(&cfg, m);
        prop_assert!(a >= 0.0 && b >= 0.0);
        prop_assert!((a + b - cfg.a2()).abs() < 1e-12);
    }
}
