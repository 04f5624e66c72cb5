use super::*;
use crate::classical::{self, ClassicalModel, JumpKernel};
use crate::error::Error;
use crate::grid::{Axis, ClassicalGrid, DensityGrid};
use crate::linalg::{ops, CMatrix, C64};
use crate::record::{add_gaussian_channels, MeasurementRecord};
use crate::rng::RngStream;

fn grid2() -> ClassicalGrid {
    ClassicalGrid::one_dim(Axis::new("x", 0.0, 1.0, 2).unwrap())
}

fn chain(a: f64, b: f64) -> ClassicalModel {
    ClassicalModel::builder(grid2())
        .jump(JumpKernel::Dense(vec![vec![0.0, b], vec![a, 0.0]]))
        .build()
        .unwrap()
}

fn qubit_state(theta: f64, phi: f64) -> CMatrix {
    let ket = [C64::new(theta.cos(), 0.0), C64::from_polar(theta.sin(), phi)];
    CMatrix::pure_state(&ket)
}

fn random_record(n: usize, dt: f64, channels: usize, rate: f64, seed: u64) -> MeasurementRecord {
    let mut rng = RngStream::new(seed, 0);
    let counts = (0..n)
        .map(|_| (0..channels).map(|_| rng.bernoulli(rate * dt) as u8).collect())
        .collect();
    MeasurementRecord::from_counts(0.0, dt, (1..=channels).map(|i| i.to_string()).collect(), counts).unwrap()
}

/// Qubit coupled to a two-state chain, with a decay channel and a field-dependent drive.
fn driven_qubit() -> HybridModel {
    HybridModel::builder(chain(0.8, 1.2), 2)
        .hamiltonian(ops::sigma_z().scale(0.7.into()))
        .coupling(|x| ops::sigma_x().scale((1.5 * x[0] + 0.3).into()))
        .jump_channel("decay", PointOp::Shared(ops::sigma_minus().scale(2.0f64.sqrt().into())))
        .build()
        .unwrap()
}

#[test]
fn diagonal_hamiltonian_rotates_coherences_at_bohr_frequency() {
    let g = ClassicalGrid::one_dim(Axis::new("x", 0.0, 1.0, 2).unwrap());
    let h = CMatrix::from_real_diag(&[0.0, 1.3, 2.9]);
    let model = HybridModel::builder(ClassicalModel::trivial(g.clone()), 3)
        .hamiltonian(h.clone())
        .build()
        .unwrap();
    let ket: Vec<C64> = [1.0, 2.0, 0.5].iter().map(|v| C64::new(*v, 0.0)).collect();
    let rho = CMatrix::pure_state(&ket);
    let mut f = HybridOperator::product(&DensityGrid::uniform(g), &rho);
    let (dt, n) = (1e-4, 10_000);
    let stepper = HybridStepper::new(&model, dt).unwrap();
    for _ in 0..n {
        f = stepper.prior_step(&f).unwrap();
    }
    let u = h.scale(C64::new(0.0, -1.0)).expm().unwrap();
    let exact = rho.sandwich(&u, &u.adjoint());
    let mut got = f.mats[0].clone();
    got.scale_real_mut(1.0 / got.trace().re);
    assert!(got.max_abs_diff(&exact) < 1e-6);
    for i in 0..3 {
        assert!((got[(i, i)] - rho[(i, i)]).norm() < 1e-12);
    }
}

#[test]
fn one_dimensional_quantum_factor_is_the_classical_prior() {
    let model = HybridModel::builder(chain(0.8, 1.2), 1)
        .hamiltonian(CMatrix::from_real_diag(&[3.0]))
        .build()
        .unwrap();
    let p = DensityGrid::new(grid2(), vec![0.3, 0.7], true).unwrap();
    let mut f = HybridOperator::product(&p, &CMatrix::identity(1));
    let mut q = p.clone();
    let cm = chain(0.8, 1.2);
    for _ in 0..100 {
        f = hybrid_prior_step(&f, &model, 1e-3).unwrap();
        q = classical::ck_step(&q, &cm, 1e-3).unwrap();
    }
    for (a, b) in f.trace_density().iter().zip(&q.values) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn nothing_moves_without_dynamics() {
    let model = HybridModel::builder(ClassicalModel::trivial(grid2()), 2).build().unwrap();
    let p = DensityGrid::new(grid2(), vec![0.3, 0.7], true).unwrap();
    let f = HybridOperator::product(&p, &qubit_state(0.4, 1.0));
    let g = hybrid_prior_step(&f, &model, 1e-2).unwrap();
    assert!(g.l1_distance(&f) < 1e-15);
}

#[test]
fn identity_jump_operator_carries_no_information() {
    let model = HybridModel::builder(chain(0.8, 1.2), 2)
        .hamiltonian(ops::sigma_x())
        .jump_channel("flat", PointOp::Shared(CMatrix::identity(2).scale(3.0f64.sqrt().into())))
        .build()
        .unwrap();
    let p = DensityGrid::new(grid2(), vec![0.3, 0.7], true).unwrap();
    let f = HybridOperator::product(&p, &qubit_state(0.4, 1.0));
    let prior = hybrid_prior_step(&f, &model, 1e-3).unwrap();
    for dn in [0, 1] {
        let s = quantum_snyder_step(&f, &model, &[dn], 1e-3).unwrap();
        assert!(s.l1_distance(&prior) < 1e-14);
    }
}

#[test]
fn diagonal_channels_reduce_to_the_classical_filter() {
    let lam = [0.5, 4.0];
    let cm = chain(0.6, 1.1);
    let classical_model = cm
        .with_channels(vec![("1".into(), lam.to_vec()), ("2".into(), vec![2.0, 1.0])])
        .unwrap();
    let model = HybridModel::builder(cm, 2)
        .jump_channel_fn("1", |x| CMatrix::identity(2).scale(lam[x[0] as usize].sqrt().into()))
        .jump_channel_fn("2", |x| CMatrix::identity(2).scale((2.0 - x[0]).sqrt().into()))
        .build()
        .unwrap();
    let rec = random_record(400, 1e-3, 2, 2.5, 5);
    let p = DensityGrid::new(grid2(), vec![0.4, 0.6], true).unwrap();
    let rho = CMatrix::from_real_diag(&[0.3, 0.7]);
    let mut f = HybridOperator::product(&p, &rho);
    let mut fz = f.clone();
    let mut q = p.clone();
    let mut qz = p.clone();
    let stepper = HybridStepper::new(&model, 1e-3).unwrap();
    for dn in &rec.counts {
        f = stepper.snyder_step(&f, dn, &[]).unwrap();
        fz = stepper.forward_step(&fz, dn, &[]).unwrap();
        q = classical::snyder_step(&q, &classical_model, dn, 1e-3).unwrap();
        qz = classical::pardoux_forward_step(&qz, &classical_model, dn, 1e-3).unwrap();
        for (a, b) in f.trace_density().iter().zip(&q.values) {
            assert!((a - b).abs() < 1e-8);
        }
        for (a, b) in fz.trace_density().iter().zip(&qz.values) {
            assert!((a - b).abs() < 1e-8 * b.max(1.0));
        }
    }
    let mut g = HybridOperator::identity(grid2(), 2);
    let mut gc = DensityGrid::ones(grid2());
    for dn in rec.counts.iter().rev() {
        g = stepper.backward_step(&g, dn, &[]).unwrap();
        gc = classical::retrodictive_backward_step(&gc, &classical_model, dn, 1e-3).unwrap();
    }
    let hq = smooth_density(&HybridOperator::product(&p, &rho), &g).unwrap();
    let hc = classical::combine_smooth(&p, &gc).unwrap();
    assert!(hq.l1_distance(&hc) < 1e-8);
}

#[test]
fn decay_click_collapses_to_ground_state() {
    let model = HybridModel::builder(ClassicalModel::trivial(grid2()), 2)
        .jump_channel("decay", PointOp::Shared(ops::sigma_minus()))
        .build()
        .unwrap();
    let p = DensityGrid::new(grid2(), vec![0.5, 0.5], true).unwrap();
    let f = HybridOperator::product(&p, &qubit_state(0.9, 0.3));
    let s = quantum_snyder_step(&f, &model, &[1], 1e-3).unwrap();
    let ground = CMatrix::from_real_diag(&[0.5, 0.0]);
    for m in &s.mats {
        assert!(m.max_abs_diff(&ground) < 1e-15);
    }
    let z = quantum_zakai_step(&f, &model, &[1], 1e-3).unwrap();
    for m in &z.mats {
        assert_eq!(m[(1, 1)].norm(), 0.0);
        assert_eq!(m[(0, 1)].norm(), 0.0);
    }
}

#[test]
fn click_on_dark_state_is_impossible() {
    let model = HybridModel::builder(ClassicalModel::trivial(grid2()), 2)
        .jump_channel("decay", PointOp::Shared(ops::sigma_minus()))
        .build()
        .unwrap();
    let p = DensityGrid::uniform(grid2());
    let f = HybridOperator::product(&p, &CMatrix::from_real_diag(&[1.0, 0.0]));
    assert!(matches!(quantum_snyder_step(&f, &model, &[1], 1e-3), Err(Error::ImpossibleEvent(_))));
}

#[test]
fn zakai_is_linear_and_tracks_the_normalized_filter() {
    let model = driven_qubit();
    let p = DensityGrid::new(grid2(), vec![0.4, 0.6], true).unwrap();
    let f0 = HybridOperator::product(&p, &qubit_state(0.8, 0.2));
    let stepper = HybridStepper::new(&model, 1e-4).unwrap();
    let mut f3 = f0.clone();
    f3.scale(3.0);
    for dn in [0, 1] {
        let a = stepper.forward_step(&f0, &[dn], &[]).unwrap();
        let mut b = stepper.forward_step(&f3, &[dn], &[]).unwrap();
        b.scale(1.0 / 3.0);
        assert!(a.l1_distance(&b) < 1e-14);
    }
    let rec = random_record(10_000, 1e-4, 1, 1.0, 17);
    assert!(rec.total_counts(0) > 0);
    let (mut fs, mut fz) = (f0.clone(), f0.clone());
    let mut worst: f64 = 0.0;
    for dn in &rec.counts {
        fs = stepper.snyder_step(&fs, dn, &[]).unwrap();
        fz = stepper.forward_step(&fz, dn, &[]).unwrap();
        fz.normalize().unwrap();
        worst = worst.max(fs.l1_distance(&fz));
        assert!((fs.hybrid_trace() - 1.0).abs() < 1e-9);
        assert!(fs.hermiticity_deviation() <= 1e-10);
        assert!(fs.min_eigenvalue() >= -1e-7, "{}", fs.min_eigenvalue());
    }
    assert!(worst <= 1e-3, "L1 {worst}");
}

#[test]
fn identity_effect_is_fixed_without_information() {
    let model = HybridModel::builder(ClassicalModel::trivial(grid2()), 2)
        .hamiltonian(&ops::sigma_x() + &ops::sigma_y().scale(0.4.into()))
        .jump_channel("flat", PointOp::Shared(CMatrix::identity(2)))
        .build()
        .unwrap();
    let g = HybridOperator::identity(grid2(), 2);
    let b = effect_backward_step(&g, &model, &[0], 1e-3).unwrap();
    for m in &b.mats {
        assert!(m.max_abs_diff(&CMatrix::identity(2)) < 1e-14);
    }
}

#[test]
fn terminal_projector_gives_born_rule_retrodiction() {
    // Static field x ∈ {0,1} sets the precession axis; a final σ_z measurement
    // returned "up". P(x | up) ∝ p(x)·⟨0|U_x ρ U_x†|0⟩.
    let model = HybridModel::builder(ClassicalModel::trivial(grid2()), 2)
        .coupling(|x| ops::sigma_x().scale((0.4 + 1.1 * x[0]).into()))
        .build()
        .unwrap();
    let p = DensityGrid::new(grid2(), vec![0.35, 0.65], true).unwrap();
    let rho = qubit_state(0.3, 0.0);
    let (dt, n) = (1e-3, 800);
    let rec = MeasurementRecord::silent(0.0, dt, n, vec![]);
    let proj = CMatrix::from_real_diag(&[1.0, 0.0]);
    let terminal = HybridOperator::new(grid2(), vec![proj.clone(), proj.clone()]).unwrap();
    let bwd = backward_sweep(&model, &rec, Some(&terminal), n).unwrap();
    let h = smooth_density(&HybridOperator::product(&p, &rho), &bwd.states[0]).unwrap();
    let t = dt * n as f64;
    let born: Vec<f64> = (0..2)
        .map(|i| {
            let u = ops::sigma_x().scale(C64::new(0.0, -(0.4 + 1.1 * i as f64) * t)).expm().unwrap();
            p.values[i] * rho.sandwich(&u, &u.adjoint())[(0, 0)].re
        })
        .collect();
    let z: f64 = born.iter().sum();
    for i in 0..2 {
        assert!((h.values[i] - born[i] / z).abs() < 1e-8);
    }
}

fn gaussian_model() -> HybridModel {
    let c = &ops::sigma_z() + &ops::sigma_minus().scale(0.5.into());
    HybridModel::builder(chain(0.8, 1.2), 2)
        .hamiltonian(ops::sigma_x().scale(0.5.into()))
        .coupling(|x| ops::sigma_z().scale((0.9 * x[0]).into()))
        .dissipator(ops::sigma_z().scale(0.3.into()))
        .jump_channel("decay", PointOp::Shared(ops::sigma_minus().scale(1.2.into())))
        .gaussian_channel("homodyne", PointOp::Shared(c))
        .gaussian_channel("field", PointOp::PerPoint(vec![CMatrix::identity(2).scale(0.2.into()), ops::sigma_x()]))
        .noise_covariance(vec![vec![1.0, 0.2], vec![0.2, 0.5]])
        .build()
        .unwrap()
}

fn mixed_record(model: &HybridModel, n: usize, dt: f64, seed: u64) -> MeasurementRecord {
    let mut rec = random_record(n, dt, model.channels().len(), 1.5, seed);
    let mut rng = RngStream::new(seed, 1);
    let means = vec![vec![0.3, -0.2]; n];
    let r = model.gaussian().unwrap().r.clone();
    add_gaussian_channels(&mut rec, vec!["homodyne".into(), "field".into()], &means, r, &mut rng).unwrap();
    rec
}

#[test]
fn pairing_is_conserved_along_mixed_records() {
    let model = gaussian_model();
    let rec = mixed_record(&model, 10_000, 1e-4, 2);
    let p = DensityGrid::new(grid2(), vec![0.4, 0.6], true).unwrap();
    let f0 = HybridOperator::product(&p, &qubit_state(0.6, 0.9));
    let fwd = forward_sweep(&model, &f0, &rec, HybridForwardKind::Zakai, 100).unwrap();
    let bwd = backward_sweep(&model, &rec, None, 100).unwrap();
    assert!(pairing_deviation(&fwd, &bwd) < 1e-5);

    let plain = HybridModel::builder(chain(0.8, 1.2), 2)
        .hamiltonian(ops::sigma_x())
        .jump_channel("decay", PointOp::Shared(ops::sigma_minus()))
        .build()
        .unwrap();
    let rec = random_record(10_000, 1e-4, 1, 1.0, 3);
    let fwd = forward_sweep(&plain, &f0, &rec, HybridForwardKind::Zakai, 100).unwrap();
    let bwd = backward_sweep(&plain, &rec, None, 100).unwrap();
    assert!(pairing_deviation(&fwd, &bwd) < 1e-5);
}

#[test]
fn without_gaussian_channels_combined_steps_are_the_poisson_steps() {
    let model = driven_qubit();
    let p = DensityGrid::new(grid2(), vec![0.4, 0.6], true).unwrap();
    let f = HybridOperator::product(&p, &qubit_state(0.6, 0.9));
    for dn in [0, 1] {
        let a = combined_step_forward(&f, &model, &[dn], &[], 1e-3).unwrap();
        let b = quantum_zakai_step(&f, &model, &[dn], 1e-3).unwrap();
        assert_eq!(a, b);
        let a = combined_step_backward(&f, &model, &[dn], &[], 1e-3).unwrap();
        let b = effect_backward_step(&f, &model, &[dn], 1e-3).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn hermitian_gaussian_channel_on_diagonal_states_is_the_classical_zakai_update() {
    // Ĉ = c·x̂ on a static grid: f(x) picks up exp(R⁻¹cx·dy − ½R⁻¹c²x²dt).
    let g = ClassicalGrid::one_dim(Axis::new("x", -1.0, 1.0, 5).unwrap());
    let (c, r, dt) = (0.8, 0.5, 1e-4);
    let model = HybridModel::builder(ClassicalModel::trivial(g.clone()), 1)
        .gaussian_channel("y", PointOp::tabulate(&g, |x| CMatrix::from_real_diag(&[c * x[0]])))
        .noise_covariance(vec![vec![r]])
        .build()
        .unwrap();
    let p = DensityGrid::uniform(g.clone());
    let f = HybridOperator::product(&p, &CMatrix::identity(1));
    let dy = (r * dt).sqrt();
    let mut out = combined_step_forward(&f, &model, &[], &[dy], dt).unwrap();
    out.normalize().unwrap();
    let w: Vec<f64> = (0..5)
        .map(|i| {
            let x = g.point(i)[0];
            (c * x * dy / r - 0.5 * c * c * x * x * dt / r).exp()
        })
        .collect();
    let z: f64 = w.iter().sum::<f64>() * g.cell_volume();
    for (i, m) in out.mats.iter().enumerate() {
        assert!((m[(0, 0)].re - w[i] / z).abs() < 10.0 * dt.powf(1.5));
    }
}

#[test]
fn flipping_channel_and_record_signs_changes_nothing() {
    let model = gaussian_model();
    let g = model.gaussian().unwrap();
    let flipped = HybridModel::builder(chain(0.8, 1.2), 2)
        .hamiltonian(ops::sigma_x().scale(0.5.into()))
        .coupling(|x| ops::sigma_z().scale((0.9 * x[0]).into()))
        .dissipator(ops::sigma_z().scale(0.3.into()))
        .jump_channel("decay", PointOp::Shared(ops::sigma_minus().scale(1.2.into())))
        .gaussian_channel("homodyne", PointOp::Shared(g.ops[0].at(0).scale((-1.0).into())))
        .gaussian_channel(
            "field",
            PointOp::PerPoint(vec![g.ops[1].at(0).scale((-1.0).into()), g.ops[1].at(1).scale((-1.0).into())]),
        )
        .noise_covariance(g.r.clone())
        .build()
        .unwrap();
    let p = DensityGrid::new(grid2(), vec![0.4, 0.6], true).unwrap();
    let f = HybridOperator::product(&p, &qubit_state(0.6, 0.9));
    let dy = [0.013, -0.004];
    let a = combined_step_forward(&f, &model, &[0], &dy, 1e-3).unwrap();
    let b = combined_step_forward(&f, &flipped, &[0], &[-dy[0], -dy[1]], 1e-3).unwrap();
    assert!(a.l1_distance(&b) < 1e-15);
}

#[test]
fn anti_hermitian_gaussian_channel_keeps_identity_effect() {
    let model = HybridModel::builder(ClassicalModel::trivial(grid2()), 2)
        .gaussian_channel("a", PointOp::Shared(ops::sigma_x().scale(C64::new(0.0, 1.0))))
        .noise_covariance(vec![vec![1.0]])
        .build()
        .unwrap();
    let g = HybridOperator::identity(grid2(), 2);
    let b = combined_step_backward(&g, &model, &[], &[0.03], 1e-3).unwrap();
    for m in &b.mats {
        assert!(m.max_abs_diff(&CMatrix::identity(2)) < 1e-15);
    }
}

#[test]
fn innovation_trivial_cases() {
    let g = ClassicalGrid::one_dim(Axis::new("x", 0.0, 1.0, 2).unwrap());
    let model = HybridModel::builder(ClassicalModel::trivial(g.clone()), 2)
        .gaussian_channel("z", PointOp::Shared(ops::sigma_z()))
        .noise_covariance(vec![vec![1.0]])
        .build()
        .unwrap();
    let p = DensityGrid::uniform(g);
    let mixed = HybridOperator::product(&p, &CMatrix::identity(2).scale(0.5.into()));
    assert_eq!(filtered_gaussian_innovation(&mixed, &model, &[0.07], 1e-3).unwrap(), vec![0.07]);
    let up = HybridOperator::product(&p, &CMatrix::from_real_diag(&[0.8, 0.2]));
    let dy = 1e-3 * 0.6;
    assert!(filtered_gaussian_innovation(&up, &model, &[dy], 1e-3).unwrap()[0].abs() < 1e-18);
}

#[test]
fn innovations_are_white_with_covariance_r() {
    // The record is generated from the filter's own prediction, which is the
    // faithful record of a single-point hybrid system.
    let g = ClassicalGrid::one_dim(Axis::new("x", 0.0, 1.0, 2).unwrap());
    let r = 0.7;
    let model = HybridModel::builder(ClassicalModel::trivial(g.clone()), 2)
        .hamiltonian(ops::sigma_x())
        .gaussian_channel("z", PointOp::Shared(ops::sigma_z()))
        .noise_covariance(vec![vec![r]])
        .build()
        .unwrap();
    let dt = 1e-3;
    let stepper = HybridStepper::new(&model, dt).unwrap();
    let mut f = HybridOperator::product(&DensityGrid::uniform(g), &qubit_state(0.3, 0.0));
    let mut rng = RngStream::new(99, 0);
    let n = 100_000;
    let (mut s1, mut s2, mut lag) = (0.0, 0.0, 0.0);
    let mut prev = 0.0;
    for _ in 0..n {
        let mean = f.expectation(&ops::sigma_z());
        let dy = mean * dt + (r * dt).sqrt() * rng.normal();
        let deta = filtered_gaussian_innovation(&f, &model, &[dy], dt).unwrap()[0] / dt.sqrt();
        s1 += deta;
        s2 += deta * deta;
        lag += deta * prev;
        prev = deta;
        f = stepper.snyder_step(&f, &[], &[dy]).unwrap();
    }
    let nf = n as f64;
    let var = s2 / nf - (s1 / nf).powi(2);
    assert!((var / r - 1.0).abs() < 0.05, "variance {var}");
    assert!((lag / nf).abs() < 0.05 * r);
}

#[test]
fn smoothing_density_edge_cases() {
    let model = driven_qubit();
    let p = DensityGrid::new(grid2(), vec![0.4, 0.6], true).unwrap();
    let f = HybridOperator::product(&p, &qubit_state(0.6, 0.9));
    let g = HybridOperator::identity(grid2(), 2);
    let h = smooth_density(&f, &g).unwrap();
    assert!(h.l1_distance(&p) < 1e-14);
    let delta = HybridOperator::new(grid2(), vec![CMatrix::zeros(2), qubit_state(0.1, 0.0)]).unwrap();
    let mut gg = HybridOperator::identity(grid2(), 2);
    gg = effect_backward_step(&gg, &model, &[0], 1e-3).unwrap();
    assert_eq!(smooth_density(&delta, &gg).unwrap().values, vec![0.0, 1.0]);
    let zero = HybridOperator::new(grid2(), vec![CMatrix::zeros(2), CMatrix::zeros(2)]).unwrap();
    assert!(matches!(smooth_density(&f, &zero), Err(Error::DegenerateRecord(_))));
}

#[test]
fn smoother_output_is_consistent() {
    let model = gaussian_model();
    let rec = mixed_record(&model, 2000, 1e-3, 4);
    let p = DensityGrid::new(grid2(), vec![0.4, 0.6], true).unwrap();
    let f0 = HybridOperator::product(&p, &qubit_state(0.6, 0.9));
    let opts = HybridSmootherOptions {
        stride: 10,
        observables: vec![("sz".into(), ops::sigma_z())],
        ..Default::default()
    };
    let out = smooth(&model, &f0, &rec, &opts).unwrap();
    assert_eq!(out.times.len(), 201);
    assert!(out.pairing_deviation.unwrap() < 1e-9);
    let last = out.times.len() - 1;
    assert!((out.smooth_mean[last][0] - out.filter_mean[last][0]).abs() < 1e-12);
    assert_eq!(out.filter_expectations.len(), out.times.len());
    assert!(out.filter_expectations.iter().all(|e| e[0].is_finite()));
}

#[test]
fn decay_trajectory_clicks_at_most_once() {
    let model = HybridModel::builder(chain(0.0, 0.0), 2)
        .jump_channel("decay", PointOp::Shared(ops::sigma_minus().scale(3.0.into())))
        .build()
        .unwrap();
    let excited = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let mut rng = RngStream::new(8, 0);
    let tr = sample_trajectory(&model, 1, &excited, 2000, 1e-3, &mut rng).unwrap();
    assert!(tr.path.iter().all(|&x| x == 1));
    assert!(tr.record.total_counts(0) <= 1);
    let last = tr.states.last().unwrap();
    if tr.record.total_counts(0) == 1 {
        assert!((last[0].norm() - 1.0).abs() < 1e-12);
    }
    assert_eq!(tr.states.len(), 2001);
}

#[test]
fn trajectory_click_rate_matches_filter_prediction() {
    let model = driven_qubit();
    let psi = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let (dt, n) = (1e-3, 2000);
    let mut total = 0u64;
    let mut expected = 0.0;
    for seed in 0..40 {
        let tr = sample_trajectory(&model, 0, &psi, n, dt, &mut RngStream::new(3, seed)).unwrap();
        total += tr.record.total_counts(0);
        for (k, s) in tr.states[..n].iter().enumerate() {
            let l = model.channels()[0].op.at(tr.path[k]).apply(s);
            expected += l.iter().map(|z| z.norm_sqr()).sum::<f64>() * dt;
        }
    }
    let sd = expected.sqrt();
    assert!((total as f64 - expected).abs() < 4.0 * sd, "{total} vs {expected}");
}

#[test]
fn classical_path_follows_chain_occupation() {
    let model = chain(0.8, 1.2);
    let mut rng = RngStream::new(5, 0);
    let path = crate::classical::sample_path(&model, 0, 200_000, 1e-2, &mut rng).unwrap();
    let up = path.iter().filter(|&&x| x == 1).count() as f64 / path.len() as f64;
    assert!((up - 0.4).abs() < 0.02, "{up}");
}
