//! One-step updates of the classical densities.
//!
//! Within a step the measurement update for `dN` comes first, followed by the
//! generator. The click in step k is therefore conditioned on the state at
//! the start of the step, and the backward step is the exact transpose of the
//! forward step taken in reverse order.

use super::model::ClassicalModel;
use crate::error::{Error, Result};
use crate::grid::DensityGrid;

fn check(model: &ClassicalModel, d: &DensityGrid, dn: &[u8], dt: f64) -> Result<()> {
    if d.grid != *model.grid() {
        return Err(Error::Dimension("density and model grids differ".into()));
    }
    if dn.len() != model.num_channels() {
        return Err(Error::Dimension(format!(
            "model has {} channels, record step has {}",
            model.num_channels(),
            dn.len()
        )));
    }
    if dn.iter().any(|&c| c > 1) {
        return Err(Error::InvalidArgument("dN must be 0 or 1".into()));
    }
    for mu in 0..model.num_channels() {
        let max = model.intensity(mu).iter().cloned().fold(0.0, f64::max);
        if max * dt > 1.0 {
            return Err(Error::StepSize(format!("lambda*dt = {} > 1 on channel {mu}", max * dt)));
        }
    }
    model.generator().check_step(dt)
}

fn clamp_negative(values: &mut [f64]) {
    for v in values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn finish(model: &ClassicalModel, values: Vec<f64>, normalized: bool) -> Result<DensityGrid> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite density after step".into()));
    }
    let mut d = DensityGrid {
        grid: model.grid().clone(),
        values,
        normalized: false,
    };
    if normalized {
        d.normalize()?;
    }
    Ok(d)
}

/// Prior propagation P ← P + dt·G·P.
pub fn ck_step(p: &DensityGrid, model: &ClassicalModel, dt: f64) -> Result<DensityGrid> {
    model.generator().check_step(dt)?;
    if p.grid != *model.grid() {
        return Err(Error::Dimension("density and model grids differ".into()));
    }
    let mut v = model.generator().step_forward(&p.values, dt);
    clamp_negative(&mut v);
    finish(model, v, p.normalized)
}

/// Mean of `lambda` under the (not necessarily normalized) weights `w`.
pub(crate) fn expectation(lambda: &[f64], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    lambda.iter().zip(w).map(|(l, x)| l * x).sum::<f64>() / total
}

/// Normalized filter update for Poisson observations.
pub fn snyder_step(f: &DensityGrid, model: &ClassicalModel, dn: &[u8], dt: f64) -> Result<DensityGrid> {
    check(model, f, dn, dt)?;
    let mut v = f.values.clone();
    for (mu, &click) in dn.iter().enumerate() {
        let lam = model.intensity(mu);
        let e = expectation(lam, &v);
        if click == 1 && !(e > 0.0) {
            return Err(Error::ImpossibleEvent(format!(
                "click on channel '{}' whose expected intensity is zero",
                model.channels()[mu]
            )));
        }
        for (x, l) in v.iter_mut().zip(lam) {
            *x *= (-dt * (l - e)).exp();
        }
    }
    for (mu, _) in dn.iter().enumerate().filter(|(_, &c)| c == 1) {
        let lam = model.intensity(mu);
        let e = expectation(lam, &v);
        for (x, l) in v.iter_mut().zip(lam) {
            *x *= l / e;
        }
    }
    let mut v = model.generator().step_forward(&v, dt);
    clamp_negative(&mut v);
    finish(model, v, true)
}

/// Applies the linear (reference rate 1) measurement factors in place.
pub(crate) fn apply_linear_measurement(model: &ClassicalModel, dn: &[u8], dt: f64, v: &mut [f64]) {
    for (mu, &click) in dn.iter().enumerate() {
        let lam = model.intensity(mu);
        for (x, l) in v.iter_mut().zip(lam) {
            let mut w = (-dt * (l - 1.0)).exp();
            if click == 1 {
                w *= l;
            }
            *x *= w;
        }
    }
}

/// Unnormalized linear forward update.
pub fn pardoux_forward_step(f: &DensityGrid, model: &ClassicalModel, dn: &[u8], dt: f64) -> Result<DensityGrid> {
    check(model, f, dn, dt)?;
    let mut v = f.values.clone();
    apply_linear_measurement(model, dn, dt, &mut v);
    let v = model.generator().step_forward(&v, dt);
    finish(model, v, false)
}

/// One step of the retrodictive likelihood, from t_{k+1} back to t_k.
pub fn retrodictive_backward_step(
    g: &DensityGrid,
    model: &ClassicalModel,
    dn: &[u8],
    dt: f64,
) -> Result<DensityGrid> {
    check(model, g, dn, dt)?;
    let mut v = model.generator().step_adjoint(&g.values, dt);
    apply_linear_measurement(model, dn, dt, &mut v);
    finish(model, v, false)
}

/// h = g·f / ∫ g·f.
pub fn combine_smooth(f: &DensityGrid, g: &DensityGrid) -> Result<DensityGrid> {
    if f.grid != g.grid {
        return Err(Error::Dimension("f and g live on different grids".into()));
    }
    let values: Vec<f64> = f.values.iter().zip(&g.values).map(|(a, b)| a * b).collect();
    let total: f64 = values.iter().sum::<f64>() * f.grid.cell_volume();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateRecord(format!("forward/backward overlap is {total}")));
    }
    let mut h = DensityGrid {
        grid: f.grid.clone(),
        values,
        normalized: false,
    };
    h.normalize()?;
    Ok(h)
}

/// Σ g·f·ΔV
pub fn pairing(f: &DensityGrid, g: &DensityGrid) -> f64 {
    f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum::<f64>() * f.grid.cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::JumpKernel;
    use crate::grid::{Axis, ClassicalGrid};
    use crate::linalg::CMatrix;

    fn two_state_grid() -> ClassicalGrid {
        ClassicalGrid::one_dim(Axis::new("x", 0.0, 1.0, 2).unwrap())
    }

    /// Two-state chain with rates 0→1 = a, 1→0 = b and λ(x) = lam[x].
    fn two_state(a: f64, b: f64, lam: [f64; 2]) -> ClassicalModel {
        ClassicalModel::builder(two_state_grid())
            .jump(JumpKernel::Dense(vec![vec![0.0, b], vec![a, 0.0]]))
            .channel_table("1", lam.to_vec())
            .build()
            .unwrap()
    }

    fn density(v: Vec<f64>, normalized: bool) -> DensityGrid {
        DensityGrid::new(two_state_grid(), v, normalized).unwrap()
    }

    fn l1(a: &DensityGrid, b: &DensityGrid) -> f64 {
        a.l1_distance(b)
    }

    #[test]
    fn zero_generator_leaves_density_unchanged() {
        let g = ClassicalGrid::one_dim(Axis::new("x", -1.0, 1.0, 21).unwrap());
        let m = ClassicalModel::trivial(g.clone());
        let p = DensityGrid::from_fn(g, |x| (-x[0] * x[0]).exp(), true).unwrap();
        let q = ck_step(&p, &m, 0.1).unwrap();
        assert!(q.l1_distance(&p) < 1e-15);
    }

    #[test]
    fn ou_stationary_density_is_preserved() {
        // A = −γx, B = σ², stationary variance σ²/(2γ); grid ±6 sd.
        let (gamma, sigma2): (f64, f64) = (1.0, 2.0);
        let sd = (sigma2 / (2.0 * gamma)).sqrt();
        let g = ClassicalGrid::one_dim(Axis::new("b", -6.0 * sd, 6.0 * sd, 481).unwrap());
        let m = ClassicalModel::builder(g.clone())
            .drift(0, |x| -gamma * x[0])
            .diffusion(0, |_| sigma2)
            .build()
            .unwrap();
        let p0 = DensityGrid::from_fn(g, |x| (-0.5 * x[0] * x[0] / (sd * sd)).exp(), true).unwrap();
        let mut p = p0.clone();
        for _ in 0..10_000 {
            p = ck_step(&p, &m, 1e-4).unwrap();
        }
        let d = p.l1_distance(&p0);
        assert!(d < 1e-4, "L1 drift {d}");
    }

    #[test]
    fn two_state_prior_matches_matrix_exponential() {
        let (a, b) = (0.7, 1.3);
        let m = two_state(a, b, [1.0, 1.0]);
        let gen = CMatrix::from_real_rows(&[vec![-a, b], vec![a, -b]]).unwrap();
        let exact = gen.expm().unwrap();
        let mut p = density(vec![0.9, 0.1], true);
        let dt = 1e-6;
        for _ in 0..1_000_000 {
            p = ck_step(&p, &m, dt).unwrap();
        }
        let p_exact = exact.apply(&[0.9.into(), 0.1.into()]);
        for i in 0..2 {
            assert!((p.values[i] - p_exact[i].re).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_intensity_leaves_only_the_prior() {
        let m = two_state(0.5, 0.5, [3.0, 3.0]);
        let f = density(vec![0.2, 0.8], true);
        for dn in [0, 1] {
            let s = snyder_step(&f, &m, &[dn], 1e-3).unwrap();
            let c = ck_step(&f, &m, 1e-3).unwrap();
            assert!(l1(&s, &c) < 1e-14);
        }
    }

    #[test]
    fn click_moves_all_mass_to_the_emitting_state() {
        let m = two_state(0.0, 0.0, [0.0, 1.0]);
        let f = density(vec![0.5, 0.5], true);
        let s = snyder_step(&f, &m, &[1], 1e-3).unwrap();
        assert_eq!(s.values[0], 0.0);
        assert!((s.values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn click_with_zero_expected_intensity_is_impossible() {
        let m = two_state(0.0, 0.0, [0.0, 1.0]);
        let f = density(vec![1.0, 0.0], true);
        assert!(matches!(snyder_step(&f, &m, &[1], 1e-3), Err(Error::ImpossibleEvent(_))));
    }

    #[test]
    fn silent_static_record_shifts_odds_by_exp_tau() {
        // λ(x) ∈ {1, 2}; after τ without clicks the odds change by e^{τ}.
        let m = two_state(0.0, 0.0, [1.0, 2.0]);
        let (dt, tau): (f64, f64) = (1e-5, 0.5);
        let mut f = density(vec![0.5, 0.5], true);
        for _ in 0..(tau / dt).round() as usize {
            f = snyder_step(&f, &m, &[0], dt).unwrap();
        }
        let odds = f.values[0] / f.values[1];
        assert!((odds / tau.exp() - 1.0).abs() < 1e-5, "odds {odds}");
    }

    #[test]
    fn pardoux_with_unit_intensity_is_the_prior() {
        let m = two_state(0.4, 0.9, [1.0, 1.0]);
        let f = density(vec![0.3, 0.7], false);
        let p = pardoux_forward_step(&f, &m, &[0], 1e-3).unwrap();
        let c = ck_step(&f, &m, 1e-3).unwrap();
        assert!(l1(&p, &c) < 1e-15);
    }

    #[test]
    fn pardoux_and_backward_steps_are_linear() {
        let m = two_state(0.4, 0.9, [0.5, 2.0]);
        let f = density(vec![0.3, 0.7], false);
        let mut f3 = f.clone();
        f3.values.iter_mut().for_each(|v| *v *= 3.0);
        for dn in [0, 1] {
            let a = pardoux_forward_step(&f, &m, &[dn], 1e-3).unwrap();
            let b = pardoux_forward_step(&f3, &m, &[dn], 1e-3).unwrap();
            let c = retrodictive_backward_step(&f, &m, &[dn], 1e-3).unwrap();
            let d = retrodictive_backward_step(&f3, &m, &[dn], 1e-3).unwrap();
            for i in 0..2 {
                assert!((3.0 * a.values[i] - b.values[i]).abs() < 1e-15);
                assert!((3.0 * c.values[i] - d.values[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_likelihood_stays_uniform_without_information() {
        let m = two_state(0.4, 0.9, [1.0, 1.0]);
        let g = DensityGrid::ones(two_state_grid());
        let b = retrodictive_backward_step(&g, &m, &[0], 1e-3).unwrap();
        assert!(b.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn pairing_is_conserved_step_by_step() {
        let m = two_state(0.4, 0.9, [0.5, 2.0]);
        let f = density(vec![0.3, 0.7], false);
        let g = density(vec![1.7, 0.2], false);
        for dn in [0, 1] {
            let f1 = pardoux_forward_step(&f, &m, &[dn], 1e-3).unwrap();
            let g0 = retrodictive_backward_step(&g, &m, &[dn], 1e-3).unwrap();
            let (a, b) = (pairing(&f1, &g), pairing(&f, &g0));
            assert!((a - b).abs() < 1e-14 * a);
        }
    }

    #[test]
    fn uniform_g_gives_the_filter() {
        let f = density(vec![0.3, 0.9], false);
        let h = combine_smooth(&f, &DensityGrid::ones(two_state_grid())).unwrap();
        assert!(l1(&h, &f.normalized_copy().unwrap()) < 1e-15);
    }

    #[test]
    fn delta_f_gives_delta_h() {
        let f = density(vec![0.0, 2.0], false);
        let g = density(vec![5.0, 0.1], false);
        let h = combine_smooth(&f, &g).unwrap();
        assert_eq!(h.values, vec![0.0, 1.0]);
    }

    #[test]
    fn zero_overlap_is_degenerate() {
        let f = density(vec![0.0, 1.0], false);
        let g = density(vec![1.0, 0.0], false);
        assert!(matches!(combine_smooth(&f, &g), Err(Error::DegenerateRecord(_))));
    }
}
