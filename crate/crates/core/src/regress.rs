//! Acceptance checks with independent oracles, shared by the test suite and
//! the `regress` subcommand.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::classical::{self, ClassicalModel, ForwardKind, JumpKernel, SmootherOptions};
use crate::error::Result;
use crate::grid::{Axis, ClassicalGrid, DensityGrid};
use crate::hardy::{self, Detector, DetectorOutcome};
use crate::hybrid::{self, HybridForwardKind, HybridModel, HybridOperator, HybridStepper, PointOp};
use crate::linalg::{ops, CMatrix, C64};
use crate::magnetometer::{self, FieldModel, GridConfig, MagnetometerConfig};
use crate::record::MeasurementRecord;
use crate::rng::RngStream;
use crate::weakmeas::{self, WeakMeasConfig};
use crate::wigner::{self, HbIndexing, WignerTable};

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] criterion {:>2} {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub criteria: Vec<CriterionResult>,
    pub passed: usize,
    pub failed: usize,
    pub all_passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

/// Fault injection for checking that the suite is sensitive.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SuiteOptions {
    /// Added to f₂(0,0,0,0) before comparing with the golden table.
    pub hardy_f2_perturbation: f64,
}

pub const CRITERIA: [(u32, &str); 12] = [
    (1, "hardy golden matrices"),
    (2, "hardy probabilities"),
    (3, "wigner overlap identity"),
    (4, "jump kernel"),
    (5, "classical enumeration oracle"),
    (6, "quantum-classical reduction"),
    (7, "duality conservation"),
    (8, "smoothing beats filtering"),
    (9, "mfp covariance order"),
    (10, "weak-measurement convolution identity"),
    (11, "deconvolution pipeline"),
    (12, "exact hybrid enumeration oracle"),
];

pub fn run_criterion(id: u32, opts: &SuiteOptions) -> CriterionResult {
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map_or("unknown", |c| c.1)
        .to_string();
    let t = Instant::now();
    let res = match id {
        1 => hardy_matrices(opts),
        2 => hardy_probabilities(),
        3 => overlap_identity(),
        4 => jump_kernel_check(),
        5 => classical_oracle(),
        6 => reduction(),
        7 => duality(),
        8 => smoothing_benchmark(),
        9 => mfp_order(),
        10 => convolution_identity(),
        11 => deconvolution_pipeline(),
        12 => exact_hybrid_oracle(),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let seconds = t.elapsed().as_secs_f64();
    let (mut passed, mut detail) = res.unwrap_or_else(|e| (false, format!("error: {e}")));
    if let Some(limit) = time_limit(id) {
        if seconds > limit {
            passed = false;
            detail.push_str(&format!("; runtime {seconds:.1} s exceeds {limit} s"));
        }
    }
    CriterionResult {
        id,
        name,
        passed,
        detail,
        seconds,
    }
}

fn time_limit(id: u32) -> Option<f64> {
    match id {
        1 => Some(1.0),
        5 => Some(30.0),
        8 => Some(300.0),
        11 => Some(120.0),
        _ => None,
    }
}

pub fn regression_suite(opts: &SuiteOptions) -> SuiteReport {
    let ids: Vec<u32> = CRITERIA.iter().map(|c| c.0).collect();
    run_criteria(&ids, opts)
}

/// Runs the listed criteria in order.
pub fn run_criteria(ids: &[u32], opts: &SuiteOptions) -> SuiteReport {
    let criteria: Vec<CriterionResult> = ids.iter().map(|&id| run_criterion(id, opts)).collect();
    let passed = criteria.iter().filter(|c| c.passed).count();
    SuiteReport {
        failed: criteria.len() - passed,
        all_passed: passed == criteria.len(),
        passed,
        criteria,
        fault: (opts.hardy_f2_perturbation != 0.0).then(|| format!("f2 perturbed by {:e}", opts.hardy_f2_perturbation)),
    }
}

type Check = Result<(bool, String)>;

fn table_err(t: &WignerTable, want: [[f64; 4]; 4], scale: f64) -> f64 {
    let mut e: f64 = 0.0;
    for r in 0..4 {
        for c in 0..4 {
            e = e.max((t.values[r][c] - want[r][c] * scale).abs());
        }
    }
    e
}

fn vec_err(v: &[f64], want: [f64; 4], scale: f64) -> f64 {
    v.iter().zip(want).map(|(a, b)| (a - b * scale).abs()).fold(0.0, f64::max)
}

fn column(c: usize) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    m.iter_mut().for_each(|r| r[c] = 1.0);
    m
}

fn hardy_matrices(opts: &SuiteOptions) -> Check {
    let dd = DetectorOutcome::new(Detector::D, Detector::D);
    let cd = DetectorOutcome::new(Detector::C, Detector::D);
    let f0 = hardy::predictive_wigner(&hardy::build_stage(0)?)?;
    let f1 = hardy::predictive_wigner(&hardy::build_stage(1)?)?;
    let mut f2 = hardy::predictive_wigner(&hardy::build_stage(2)?)?;
    f2.values[0][0] += opts.hardy_f2_perturbation;
    let mut first_row = [[0.0; 4]; 4];
    first_row[0] = [1.0; 4];
    let f2_want = [
        [4.0, 0.0, 0.0, 0.0],
        [2.0, 0.0, 2.0, 0.0],
        [2.0, 2.0, 0.0, 0.0],
        [1.0, -1.0, -1.0, 1.0],
    ];
    let h_dd = hardy::smoothing_table(dd)?;
    let h_cd = hardy::smoothing_table(cd)?;
    let mut dd_want = [[0.0; 4]; 4];
    dd_want[3][3] = 1.0;
    let mut cd_want = [[0.0; 4]; 4];
    cd_want[2][1] = 2.0;
    cd_want[3][1] = -1.0;
    let errs = [
        ("f0", table_err(&f0, first_row, 0.25)),
        ("f1", table_err(&f1, column(0), 0.25)),
        ("f2", table_err(&f2, f2_want, 1.0 / 12.0)),
        ("g2(DD)", table_err(&hardy::retrodictive_wigner(dd)?, column(3), 0.25)),
        ("g2(CD)", table_err(&hardy::retrodictive_wigner(cd)?, column(1), 0.25)),
        ("h2(DD)", table_err(&h_dd.table, dd_want, 1.0)),
        ("h2(CD)", table_err(&h_cd.table, cd_want, 1.0)),
        ("f0 marginal", vec_err(&hardy::position_marginal(&f0), [1.0, 0.0, 0.0, 0.0], 1.0)),
        ("f1 marginal", vec_err(&hardy::position_marginal(&f1), [1.0; 4], 0.25)),
        ("f2 marginal", vec_err(&hardy::position_marginal(&f2), [1.0, 1.0, 1.0, 0.0], 1.0 / 3.0)),
        ("h2(DD) marginal", vec_err(&h_dd.position_marginal, [0.0, 0.0, 0.0, 1.0], 1.0)),
        ("h2(CD) marginal", vec_err(&h_cd.position_marginal, [0.0, 0.0, 2.0, -1.0], 1.0)),
    ];
    let (worst, e) = errs.iter().fold(("", 0.0f64), |a, b| if b.1 > a.1 { *b } else { a });
    Ok((e <= 1e-12, format!("max |error| = {e:.2e} (worst {worst}), tolerance 1e-12")))
}

fn hardy_probabilities() -> Check {
    let p = hardy::outcome_probabilities()?;
    let dd = p.joint(DetectorOutcome::new(Detector::D, Detector::D));
    let ok = (dd - 1.0 / 16.0).abs() < 1e-15 && (p.annihilation - 0.25).abs() < 1e-15 && (p.total() - 1.0).abs() < 1e-14;
    Ok((
        ok,
        format!("P(DD) = {dd:.17}, P(annihilation) = {:.17}, total = {:.17}", p.annihilation, p.total()),
    ))
}

fn random_hermitian(n: usize, rng: &mut RngStream) -> CMatrix {
    let mut a = CMatrix::zeros(n);
    for r in 0..n {
        for c in 0..n {
            a[(r, c)] = C64::new(rng.normal(), rng.normal());
        }
    }
    let mut h = &a + &a.adjoint();
    h.scale_real_mut(0.5);
    h
}

fn random_psd(n: usize, rng: &mut RngStream) -> CMatrix {
    let a = random_hermitian(n, rng);
    let mut p = a.try_mul(&a).expect("square");
    let t = p.trace().re;
    p.scale_real_mut(1.0 / t);
    p
}

fn overlap_identity() -> Check {
    let mut rng = RngStream::new(2718, 3);
    let mut worst: f64 = 0.0;
    for n in [2, 3, 5] {
        for _ in 0..100 {
            let f = random_hermitian(n, &mut rng);
            let g = random_hermitian(n, &mut rng);
            let tr = g.trace_product(&f).re;
            let fw = wigner::fw_wigner(&f, n)?;
            let gw = wigner::fw_wigner(&g, n)?;
            let s_fw: f64 = fw.values.iter().flatten().zip(gw.values.iter().flatten()).map(|(a, b)| a * b).sum();
            let hf = wigner::hb_wigner_with(&f, n, HbIndexing::Bounded)?;
            let hg = wigner::hb_wigner_with(&g, n, HbIndexing::Bounded)?;
            let s_hb: f64 = hf.values.iter().flatten().zip(hg.values.iter().flatten()).map(|(a, b)| a * b).sum();
            let scale = tr.abs().max(1.0);
            worst = worst.max((tr - n as f64 * s_fw).abs() / scale);
            worst = worst.max((tr - 2.0 * n as f64 * s_hb).abs() / scale);
        }
    }
    Ok((worst <= 1e-10, format!("max |tr[gf] - overlap| = {worst:.2e} over 300 pairs per kind, tolerance 1e-10")))
}

fn jump_kernel_check() -> Check {
    let mut delta_err: f64 = 0.0;
    for n in 2..=9 {
        for mu in 1..n {
            let t = magnetometer::jump_kernel_table(n, std::f64::consts::PI * mu as f64 / n as f64);
            for k in 0..2 * n {
                let want = if k == mu || k == 2 * n - mu { 0.5 } else { 0.0 };
                delta_err = delta_err.max((t.values[k] - want).abs());
            }
        }
    }
    let mut sum_err: f64 = 0.0;
    let mut negative = 0;
    for j in 0..20 {
        let kappa = 0.05 + 0.147 * j as f64 + 0.0123 * (j * j) as f64;
        for n in [3, 5] {
            let t = magnetometer::jump_kernel_table(n, kappa);
            sum_err = sum_err.max((t.sum() - 1.0).abs());
            negative += t.has_negative() as usize;
        }
    }
    let ok = delta_err <= 1e-12 && sum_err <= 1e-10 && negative > 0;
    Ok((
        ok,
        format!("delta-form error {delta_err:.1e}, max |ΣJ-1| = {sum_err:.1e}, {negative}/40 generic kernels negative"),
    ))
}

// ---- classical enumeration oracle ----

fn expm_real(g: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let n = g.len();
    let m = DMatrix::from_fn(n, n, |i, j| g[i][j] * dt).exp();
    (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect()
}

/// Exact Bayes over all paths of a finite chain observed through one Poisson
/// channel: returns (filter_k, smooth_k) for k = 0..=n.
fn enumerate_chain(
    p0: &[f64],
    trans: &[Vec<f64>],
    lambda: &[f64],
    counts: &[u8],
    dt: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let s = p0.len();
    let n = counts.len();
    let mut filt = vec![vec![0.0; s]; n + 1];
    let mut smooth = vec![vec![0.0; s]; n + 1];
    let mut path = vec![0usize; n + 1];
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        k: usize,
        w: f64,
        path: &mut [usize],
        trans: &[Vec<f64>],
        lambda: &[f64],
        counts: &[u8],
        dt: f64,
        filt: &mut [Vec<f64>],
        smooth: &mut [Vec<f64>],
    ) {
        let x = path[k];
        filt[k][x] += w;
        let n = counts.len();
        if k == n {
            for (j, &xj) in path.iter().enumerate() {
                smooth[j][xj] += w;
            }
            return;
        }
        let l = lambda[x] * dt;
        let like = (-l).exp() * if counts[k] == 1 { l } else { 1.0 };
        for y in 0..trans.len() {
            path[k + 1] = y;
            dfs(k + 1, w * like * trans[y][x], path, trans, lambda, counts, dt, filt, smooth);
        }
    }
    for x in 0..s {
        path[0] = x;
        dfs(0, p0[x], &mut path, trans, lambda, counts, dt, &mut filt, &mut smooth);
    }
    for row in filt.iter_mut().chain(smooth.iter_mut()) {
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= z);
    }
    (filt, smooth)
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn probabilities(d: &DensityGrid) -> Vec<f64> {
    let z: f64 = d.values.iter().sum();
    d.values.iter().map(|v| v / z).collect()
}

fn chain_records() -> Vec<Vec<u8>> {
    let mut recs = vec![
        {
            let mut r = vec![0u8; 20];
            for k in [3, 4, 11, 17] {
                r[k] = 1;
            }
            r
        },
        vec![0u8; 16],
    ];
    let mut rng = RngStream::new(99, 5);
    recs.push((0..18).map(|_| rng.bernoulli(0.3) as u8).collect());
    recs
}

fn chain_error(dt: f64) -> Result<f64> {
    let grid = ClassicalGrid::one_dim(Axis::new("x", 0.0, 1.0, 2)?);
    let (a, b) = (0.8, 1.2);
    let lambda = [5.0, 40.0];
    let model = ClassicalModel::builder(grid.clone())
        .jump(JumpKernel::Dense(vec![vec![0.0, b], vec![a, 0.0]]))
        .channel_table("click", lambda.to_vec())
        .build()?;
    let g = vec![vec![-a, b], vec![a, -b]];
    let trans = expm_real(&g, dt);
    let p0 = [0.35, 0.65];
    let mut worst: f64 = 0.0;
    for counts in chain_records() {
        let (of, os) = enumerate_chain(&p0, &trans, &lambda, &counts, dt);
        let rec = MeasurementRecord::from_counts(0.0, dt, vec!["click".into()], counts.iter().map(|&c| vec![c]).collect())?;
        let prior = DensityGrid::new(grid.clone(), p0.to_vec(), true)?;
        let fwd = classical::forward_sweep(&model, &prior, &rec, ForwardKind::Snyder, 1)?;
        let hs = classical::smoothing_densities(&model, &prior, &rec, ForwardKind::Snyder)?;
        for k in 0..=counts.len() {
            worst = worst.max(l1(&probabilities(&fwd.states[k]), &of[k]));
            worst = worst.max(l1(&probabilities(&hs[k]), &os[k]));
        }
    }
    Ok(worst)
}

fn classical_oracle() -> Check {
    let coarse = chain_error(1e-3)?;
    let fine = chain_error(1e-4)?;
    Ok((
        coarse <= 1e-4 && fine <= 1e-6,
        format!("max L1 vs enumeration: {coarse:.2e} at dt=1e-3 (tol 1e-4), {fine:.2e} at dt=1e-4 (tol 1e-6)"),
    ))
}

// ---- quantum-classical reduction ----

fn reduction() -> Check {
    let dt = 1e-3;
    let x_axis = Axis::new("x", -1.0, 1.0, 9)?;
    let level = Axis::new("level", 0.0, 1.0, 2)?;
    let lam = |j: usize, x: f64, l: usize| match j {
        0 => 2.0 + 1.5 * x + 3.0 * l as f64,
        _ => 4.0 - 2.0 * x * l as f64 + 0.5 * x * x,
    };
    let cgrid = ClassicalGrid::new(vec![x_axis.clone(), level])?;
    let classical_model = ClassicalModel::builder(cgrid.clone())
        .drift(0, |x| -0.8 * x[0])
        .diffusion(0, |_| 0.3)
        .channel("a", move |x| lam(0, x[0], x[1] as usize))
        .channel("b", move |x| lam(1, x[0], x[1] as usize))
        .build()?;
    let hgrid = ClassicalGrid::one_dim(x_axis);
    let xmodel = ClassicalModel::builder(hgrid.clone())
        .drift(0, |x| -0.8 * x[0])
        .diffusion(0, |_| 0.3)
        .build()?;
    let diag_op = move |j: usize| {
        move |x: &[f64]| CMatrix::from_real_diag(&[lam(j, x[0], 0).sqrt(), lam(j, x[0], 1).sqrt()])
    };
    let model = HybridModel::builder(xmodel, 2)
        .hamiltonian(CMatrix::from_real_diag(&[0.4, -0.4]))
        .coupling(|x| CMatrix::from_real_diag(&[x[0], 0.3 * x[0]]))
        .dissipator(CMatrix::from_real_diag(&[0.7, 0.2]))
        .jump_channel_fn("a", diag_op(0))
        .jump_channel_fn("b", diag_op(1))
        .build()?;
    let w = [0.3, 0.7];
    let px = DensityGrid::from_fn(hgrid.clone(), |x| (-(x[0] - 0.2).powi(2) / 0.3).exp(), true)?;
    let pc = DensityGrid::new(
        cgrid.clone(),
        (0..cgrid.len())
            .map(|i| {
                let ix = cgrid.axis_index(i, 0);
                px.values[ix] * w[cgrid.axis_index(i, 1)]
            })
            .collect(),
        true,
    )?;
    let f0 = HybridOperator::product(&px, &CMatrix::from_real_diag(&w));
    let mut rng = RngStream::new(17, 0);
    let counts: Vec<Vec<u8>> = (0..300)
        .map(|_| (0..2).map(|_| rng.bernoulli(5.0 * dt) as u8).collect())
        .collect();
    let rec = MeasurementRecord::from_counts(0.0, dt, vec!["a".into(), "b".into()], counts)?;

    // Both sides are compared after scaling to unit total weight.
    let diag_vs = |h: &HybridOperator, c: &DensityGrid| -> f64 {
        let ht: f64 = h.trace_density().iter().sum();
        let ct: f64 = c.values.iter().sum();
        let mut e: f64 = 0.0;
        for (ix, m) in h.mats.iter().enumerate() {
            for l in 0..2 {
                let cv = c.values[cgrid.flat_index(&[ix, l])];
                e = e.max((m[(l, l)].re / ht - cv / ct).abs());
            }
            e = e.max(m[(0, 1)].norm() / ht);
        }
        e
    };
    let stepper = HybridStepper::new(&model, dt)?;
    let (mut fs, mut fz, mut cs, mut cz) = (f0.clone(), f0.clone(), pc.clone(), pc.clone());
    let mut worst: f64 = 0.0;
    for dn in &rec.counts {
        fs = stepper.snyder_step(&fs, dn, &[])?;
        fz = stepper.forward_step(&fz, dn, &[])?;
        cs = classical::snyder_step(&cs, &classical_model, dn, dt)?;
        cz = classical::pardoux_forward_step(&cz, &classical_model, dn, dt)?;
        worst = worst.max(diag_vs(&fs, &cs)).max(diag_vs(&fz, &cz));
    }
    let mut g = HybridOperator::identity(hgrid.clone(), 2);
    let mut gc = DensityGrid::ones(cgrid.clone());
    for dn in rec.counts.iter().rev() {
        g = stepper.backward_step(&g, dn, &[])?;
        gc = classical::retrodictive_backward_step(&gc, &classical_model, dn, dt)?;
    }
    worst = worst.max(diag_vs(&g, &gc));
    let hq = hybrid::smooth_density(&f0, &g)?;
    let hc = classical::combine_smooth(&pc, &gc)?;
    let hc_x = hc.marginal(0);
    let (sq, sc): (f64, f64) = (hq.values.iter().sum(), hc_x.iter().sum());
    worst = worst.max(hq.values.iter().zip(&hc_x).map(|(a, b)| (a / sq - b / sc).abs()).fold(0.0, f64::max));

    let hopts = hybrid::HybridSmootherOptions {
        forward: HybridForwardKind::Zakai,
        stride: 10,
        ..Default::default()
    };
    let ho = hybrid::smooth(&model, &f0, &rec, &hopts)?;
    let copts = SmootherOptions {
        forward: ForwardKind::Pardoux,
        stride: 10,
        keep_densities: false,
    };
    let co = classical::smooth(&classical_model, &pc, &rec, &copts)?;
    for k in 0..ho.times.len() {
        worst = worst
            .max((ho.filter_mean[k][0] - co.filter_mean[k][0]).abs())
            .max((ho.smooth_mean[k][0] - co.smooth_mean[k][0]).abs())
            .max((ho.smooth_var[k][0] - co.smooth_var[k][0]).abs());
    }
    Ok((worst <= 1e-8, format!("max deviation {worst:.2e} over filter, Zakai, effect and smoother, tolerance 1e-8")))
}

// ---- duality ----

fn duality() -> Check {
    let dt = 1e-4;
    let n = 10_000;
    let grid = ClassicalGrid::one_dim(Axis::new("x", -2.0, 2.0, 21)?);
    let cm = ClassicalModel::builder(grid.clone())
        .drift(0, |x| -x[0])
        .diffusion(0, |_| 0.5)
        .channel("c", |x| 3.0 + 2.0 * x[0].tanh())
        .build()?;
    let mut rng = RngStream::new(23, 0);
    let counts: Vec<Vec<u8>> = (0..n).map(|_| vec![rng.bernoulli(3.0 * dt) as u8]).collect();
    let rec = MeasurementRecord::from_counts(0.0, dt, vec!["c".into()], counts)?;
    let prior = DensityGrid::from_fn(grid.clone(), |x| (-x[0] * x[0]).exp(), true)?;
    let fwd = classical::forward_sweep(&cm, &prior, &rec, ForwardKind::Pardoux, 100)?;
    let bwd = classical::backward_sweep(&cm, &rec, 100)?;
    let dc = classical::pairing_deviation(&fwd, &bwd);

    let g2 = ClassicalGrid::one_dim(Axis::new("x", 0.0, 1.0, 2)?);
    let chain = ClassicalModel::builder(g2.clone())
        .jump(JumpKernel::Dense(vec![vec![0.0, 1.2], vec![0.8, 0.0]]))
        .build()?;
    let hm = HybridModel::builder(chain, 2)
        .hamiltonian(ops::sigma_x())
        .coupling(|x| ops::sigma_z().scale((0.9 * x[0]).into()))
        .jump_channel("decay", PointOp::Shared(ops::sigma_minus().scale(1.5.into())))
        .build()?;
    let counts: Vec<Vec<u8>> = (0..n).map(|_| vec![rng.bernoulli(1.0 * dt) as u8]).collect();
    let hrec = MeasurementRecord::from_counts(0.0, dt, vec!["decay".into()], counts)?;
    let p = DensityGrid::new(g2, vec![0.4, 0.6], true)?;
    let ket = [C64::new(0.6, 0.0), C64::from_polar(0.8, 0.4)];
    let f0 = HybridOperator::product(&p, &CMatrix::pure_state(&ket));
    let hf = hybrid::forward_sweep(&hm, &f0, &hrec, HybridForwardKind::Zakai, 100)?;
    let hb = hybrid::backward_sweep(&hm, &hrec, None, 100)?;
    let dq = hybrid::pairing_deviation(&hf, &hb);
    Ok((
        dc <= 1e-5 && dq <= 1e-5,
        format!("relative drift of Σgf {dc:.2e}, of ∫tr[gf] {dq:.2e} over {n} steps at dt=1e-4, tolerance 1e-5"),
    ))
}

// ---- magnetometer benchmark ----

fn smoothing_benchmark() -> Check {
    let cfg = MagnetometerConfig::benchmark_default();
    let s = magnetometer::benchmark(&cfg, 20_240_601)?;
    let ok = s.mid_mse_smooth < s.mid_mse_filter && s.z_score >= 3.0;
    Ok((
        ok,
        format!(
            "{} seeds, T = {} ({} correlation times): mid MSE filter {:.4}, smooth {:.4}, paired z = {:.2} (need >= 3)",
            s.trials,
            cfg.t_end,
            cfg.t_end * cfg.field.gamma,
            s.mid_mse_filter,
            s.mid_mse_smooth,
            s.z_score
        ),
    ))
}

fn mfp_order() -> Check {
    let mut cfg = MagnetometerConfig::benchmark_default();
    cfg.stride = 1;
    cfg.t_end = 2.0;
    let mut worst: f64 = 0.0;
    let runs = 20;
    for seed in 0..runs {
        let (_, rec) = magnetometer::simulate_truth_and_record(&cfg, &mut RngStream::new(404, seed))?;
        let run = magnetometer::kalman_mfp(&cfg, &rec, &magnetometer::KalmanOptions::default())?;
        worst = worst.max(run.order_violation());
    }
    Ok((
        worst <= 1e-9,
        format!("largest relative PSD-order violation {worst:.2e} over {runs} runs at every step, tolerance 1e-9"),
    ))
}

// ---- weak measurement ----

fn convolution_identity() -> Check {
    let mut rng = RngStream::new(31, 4);
    let mut worst: f64 = 0.0;
    for n in [2, 3, 5] {
        for eps in [0.05, 0.5] {
            let cfg = WeakMeasConfig::new(n, eps)?;
            for _ in 0..10 {
                let f = random_psd(n, &mut rng);
                let g = random_psd(n, &mut rng);
                worst = worst.max(weakmeas::convolution_identity_check(&f, &g, &cfg)?);
            }
        }
    }
    let epss = [0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001];
    let mut slopes = Vec::new();
    for n in [2, 3, 5] {
        let f = random_psd(n, &mut rng);
        let g = random_psd(n, &mut rng);
        let hf = wigner::hb_wigner_with(&f, n, HbIndexing::Periodic)?.values;
        let hg = wigner::hb_wigner_with(&g, n, HbIndexing::Periodic)?.values;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for eps in epss {
            let cfg = WeakMeasConfig::new(n, eps)?;
            let e = (0..2 * n)
                .map(|y| {
                    weakmeas::max_abs_diff(&weakmeas::deformed_forward(&f, &cfg, y), &hf)
                        .max(weakmeas::max_abs_diff(&weakmeas::deformed_backward(&g, &cfg, y), &hg))
                })
                .fold(0.0, f64::max);
            xs.push(eps.ln());
            ys.push(e.ln());
        }
        slopes.push(fit_slope(&xs, &ys));
    }
    let ok = worst <= 1e-10 && slopes.iter().all(|s| (s - 1.0).abs() <= 0.2);
    Ok((
        ok,
        format!(
            "identity residual {worst:.2e} (tol 1e-10); fitted exponents {:?} for N = 2, 3, 5 (need 1.0 ± 0.2)",
            slopes.iter().map(|s| (s * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    ))
}

fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn deconvolution_pipeline() -> Check {
    let eps = 0.02;
    let cfg = WeakMeasConfig::new(2, eps)?;
    let (f, g) = weakmeas::qubit_pair();
    let exact = weakmeas::joint_distribution(&f, &g, &cfg)?;
    let direct = weakmeas::direct_smoothing(&f, &g, &cfg)?;
    let recon = weakmeas::deconvolve_smoothing(&exact, &cfg)?;
    let err = weakmeas::max_abs_diff(&recon, &direct);
    let a_ok = err <= 2.0 * eps;

    let shots = 1_000_000;
    let t = weakmeas::sampled_tomography(&f, &g, &cfg, shots, &RngStream::new(1_000_003, 0))?;
    let mut worst_p: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    for i in 0..cfg.side() {
        for j in 0..cfg.side() {
            worst_p = worst_p.max((t.empirical[i][j] - exact[i][j]).abs() / t.empirical_se[i][j].max(1e-300));
            worst_h = worst_h.max((t.reconstructed[i][j] - recon[i][j]).abs() / t.reconstructed_se[i][j].max(1e-300));
        }
    }
    let b_ok = worst_p <= 4.0 && worst_h <= 4.0;
    Ok((
        a_ok && b_ok,
        format!(
            "exact-P reconstruction error {err:.3} vs 2ε = {:.2} ({}); {shots} shots: max |P̂-P|/SE = {worst_p:.2}, max |ĥ-h|/SE = {worst_h:.2} ({})",
            2.0 * eps,
            if a_ok { "ok" } else { "FAIL" },
            if b_ok { "ok" } else { "FAIL" }
        ),
    ))
}

// ---- exact hybrid enumeration oracle ----

fn oracle_cfg() -> MagnetometerConfig {
    MagnetometerConfig {
        s: 0.5,
        kappa: 0.8,
        a: 50f64.sqrt(),
        gamma_g: 20.0,
        field: FieldModel {
            gamma: 1.0,
            q: 2.0,
            b0: None,
            prior_var: Some(1.5),
        },
        dt: 1e-3,
        t_end: 0.016,
        estimator: magnetometer::Estimator::ExactHybrid,
        phi_rate: Default::default(),
        m0: 0.0,
        phi0: 0.0,
        m_prior_var: None,
        phi_prior_var: None,
        grid: GridConfig {
            b_points: 2,
            b_range: Some([-1.0, 1.0]),
            ..Default::default()
        },
        stride: 1,
        trials: 2,
        tau_fraction: 0.5,
    }
}

/// Enumerates every field path on the grid, carrying the unnormalized spin
/// state through the click likelihoods, exact transitions and exact unitaries.
fn enumerate_hybrid(
    cfg: &MagnetometerConfig,
    model: &HybridModel,
    prior: &HybridOperator,
    counts: &[Vec<u8>],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let dt = cfg.dt;
    let bs = model.grid().axes()[0].coordinates();
    let trans = expm_real(&model.classical().generator().to_dense(), dt);
    let us: Vec<CMatrix> = bs
        .iter()
        .map(|&b| magnetometer::larmor_hamiltonian(cfg, b).scale(C64::new(0.0, -dt)).expm())
        .collect::<Result<_>>()?;
    let ls = magnetometer::measurement_channels(cfg);
    let no_click: Vec<CMatrix> = ls
        .iter()
        .map(|l| (&l.adjoint() * l).scale(C64::new(-0.5 * dt, 0.0)).expm())
        .collect::<Result<_>>()?;
    let n = counts.len();
    let s = bs.len();
    let mut filt = vec![vec![0.0; s]; n + 1];
    let mut smooth = vec![vec![0.0; s]; n + 1];
    let mut path = vec![0usize; n + 1];

    struct Ctx<'a> {
        trans: &'a [Vec<f64>],
        us: &'a [CMatrix],
        ls: &'a [CMatrix],
        no_click: &'a [CMatrix],
        counts: &'a [Vec<u8>],
    }
    fn dfs(k: usize, w: f64, rho: CMatrix, path: &mut [usize], c: &Ctx, filt: &mut [Vec<f64>], smooth: &mut [Vec<f64>]) {
        let x = path[k];
        let tr = w * rho.trace().re;
        filt[k][x] += tr;
        if k == c.counts.len() {
            for (j, &xj) in path.iter().enumerate() {
                smooth[j][xj] += tr;
            }
            return;
        }
        let mut r = rho;
        for m in c.no_click {
            r = r.sandwich(m, m);
        }
        for (l, &dn) in c.ls.iter().zip(&c.counts[k]) {
            if dn == 1 {
                r = r.sandwich(l, &l.adjoint());
            }
        }
        for y in 0..c.trans.len() {
            path[k + 1] = y;
            let u = &c.us[y];
            dfs(k + 1, w * c.trans[y][x], r.sandwich(u, &u.adjoint()), path, c, filt, smooth);
        }
    }
    let ctx = Ctx {
        trans: &trans,
        us: &us,
        ls: &ls,
        no_click: &no_click,
        counts,
    };
    for x in 0..s {
        path[0] = x;
        dfs(0, 1.0, prior.mats[x].clone(), &mut path, &ctx, &mut filt, &mut smooth);
    }
    for row in filt.iter_mut().chain(smooth.iter_mut()) {
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= z);
    }
    Ok((filt, smooth))
}

fn exact_hybrid_oracle() -> Check {
    let cfg = oracle_cfg();
    let model = magnetometer::exact_hybrid_model(&cfg)?;
    let prior = magnetometer::exact_hybrid_prior(&cfg, &model)?;
    let n = cfg.steps();
    let mut records: Vec<Vec<Vec<u8>>> = Vec::new();
    let mut fixed = vec![vec![0u8, 0]; n];
    fixed[2] = vec![1, 0];
    fixed[5] = vec![0, 1];
    fixed[6] = vec![1, 0];
    fixed[11] = vec![1, 1];
    records.push(fixed);
    records.push(vec![vec![0u8, 0]; n]);
    let mut rng = RngStream::new(12, 0);
    records.push((0..n).map(|_| vec![rng.bernoulli(0.2) as u8, rng.bernoulli(0.2) as u8]).collect());
    let (_, sampled) = magnetometer::simulate_quantum_truth(&cfg, &mut RngStream::new(12, 1))?;
    records.push(sampled.counts);

    let bs = model.grid().axes()[0].coordinates();
    let mut worst: f64 = 0.0;
    for counts in &records {
        let (of, os) = enumerate_hybrid(&cfg, &model, &prior, counts)?;
        let rec = MeasurementRecord::from_counts(0.0, cfg.dt, vec!["plus".into(), "minus".into()], counts.clone())?;
        let out = magnetometer::run_exact_hybrid(&cfg, &rec)?;
        for k in 0..=n {
            // On two points the mean fixes the distribution.
            let p_hi = |mean: f64| (mean - bs[0]) / (bs[1] - bs[0]);
            worst = worst.max((p_hi(out.filter_mean[k][0]) - of[k][1]).abs());
            worst = worst.max((p_hi(out.smooth_mean[k][0]) - os[k][1]).abs());
        }
    }
    Ok((
        worst <= 1e-4,
        format!("max |h - enumeration| = {worst:.2e} over {} records of {n} steps, tolerance 1e-4", records.len()),
    ))
}
