use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use qsmooth::classical::{self, ClassicalModel, ClassicalModelBuilder, JumpKernel, SmootherOptions};
use qsmooth::hardy::{self, DetectorOutcome};
use qsmooth::hybrid::{self, HybridModel, HybridOperator, HybridSmootherOptions, PointOp};
use qsmooth::linalg::{ops, CMatrix, C64};
use qsmooth::magnetometer::{self, Estimator, KalmanOptions, MagnetometerConfig};
use qsmooth::output::{write_output, RunManifest, SmootherOutput};
use qsmooth::record::{sample_poisson_record, step_count};
use qsmooth::regress::{self, SuiteOptions};
use qsmooth::weakmeas::{self, Table, WeakMeasConfig};
use qsmooth::wigner::WignerTable;
use qsmooth::{Axis, ClassicalGrid, DensityGrid, MeasurementRecord, RngStream};

use crate::config::*;
use crate::error::{CliError, CliResult};

/// Tolerance on the relative drift of the forward/backward pairing.
const PAIRING_TOL: f64 = 1e-5;
const ORDER_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn at_most(name: &str, value: f64, tol: f64) -> Self {
        Self::new(name, value <= tol, format!("{value:.3e} (tolerance {tol:e})"))
    }
}

/// Files written and checks evaluated by one experiment.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<String>,
    pub checks: Vec<Check>,
}

pub struct Ctx {
    pub out: PathBuf,
    pub seed: u64,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        let p = self.path(name);
        File::create(&p).map(BufWriter::new).map_err(|e| CliError::io(&p, e))
    }

    fn write_json(&self, o: &mut Outcome, name: &str, value: &impl Serialize) -> CliResult<()> {
        serde_json::to_writer_pretty(self.create(name)?, value)?;
        o.files.push(name.into());
        Ok(())
    }

    fn write_record(&self, o: &mut Outcome, rec: &MeasurementRecord) -> CliResult<()> {
        rec.write_files(&self.out, "record")?;
        o.files.extend(["record.csv".into(), "record.json".into()]);
        Ok(())
    }

    fn write_smoother(&self, o: &mut Outcome, stem: &str, out: &SmootherOutput, manifest: &mut RunManifest) -> CliResult<()> {
        write_output(&self.out, stem, out, manifest, out.densities.is_some())?;
        o.files.extend([format!("{stem}.csv"), format!("{stem}.manifest.json")]);
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

fn read_record(dir: &Path) -> CliResult<MeasurementRecord> {
    if !dir.join("record.json").exists() {
        return Err(CliError::io(&dir.join("record.json"), "record header not found"));
    }
    Ok(MeasurementRecord::read_files(dir, "record")?)
}

fn positive(v: f64, what: &str) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Schema(format!("{what} must be positive, got {v}")))
    }
}

// ---- classical signal ----

fn process_builder(spec: &ProcessSpec) -> CliResult<ClassicalModelBuilder> {
    Ok(match *spec {
        ProcessSpec::Ou { gamma, q, points, range } => {
            let gamma = positive(gamma, "process.gamma")?;
            let q = positive(q, "process.Q")?;
            let sd = (q / (2.0 * gamma)).sqrt();
            let [lo, hi] = range.unwrap_or([-6.0 * sd, 6.0 * sd]);
            let grid = ClassicalGrid::one_dim(Axis::new("x", lo, hi, points)?);
            ClassicalModel::builder(grid)
                .drift(0, move |x| -gamma * x[0])
                .diffusion(0, move |_| q)
        }
        ProcessSpec::Telegraph { up, down } => {
            if !(up >= 0.0 && down >= 0.0) {
                return Err(CliError::Schema("telegraph rates must be nonnegative".into()));
            }
            let grid = ClassicalGrid::one_dim(Axis::new("x", 0.0, 1.0, 2)?);
            ClassicalModel::builder(grid).jump(JumpKernel::Dense(vec![vec![0.0, down], vec![up, 0.0]]))
        }
    })
}

fn prior_density(spec: &ProcessSpec, prior: Option<&PriorSpec>, grid: &ClassicalGrid) -> CliResult<DensityGrid> {
    let gaussian = |mean: f64, var: f64| -> CliResult<DensityGrid> {
        let var = positive(var, "prior.var")?;
        Ok(DensityGrid::from_fn(grid.clone(), |x| (-(x[0] - mean).powi(2) / (2.0 * var)).exp(), true)?)
    };
    match (prior, spec) {
        (Some(p), _) => gaussian(p.mean, p.var),
        (None, ProcessSpec::Ou { gamma, q, .. }) => gaussian(0.0, q / (2.0 * gamma)),
        (None, ProcessSpec::Telegraph { up, down }) => {
            let z = up + down;
            let w = if z > 0.0 { vec![down / z, up / z] } else { vec![0.5, 0.5] };
            Ok(DensityGrid::new(grid.clone(), w, true)?)
        }
    }
}

/// Grid index of the truth at t = 0: nearest to `x0`, or drawn from the prior.
fn start_index(grid: &ClassicalGrid, x0: Option<f64>, prior: &DensityGrid, rng: &mut RngStream) -> usize {
    let xs = grid.axes()[0].coordinates();
    match x0 {
        Some(x) => (0..xs.len())
            .min_by(|&a, &b| (xs[a] - x).abs().total_cmp(&(xs[b] - x).abs()))
            .unwrap_or(0),
        None => {
            let total: f64 = prior.values.iter().sum();
            let mut u = rng.uniform() * total;
            for (i, v) in prior.values.iter().enumerate() {
                u -= v;
                if u < 0.0 {
                    return i;
                }
            }
            xs.len() - 1
        }
    }
}

fn polynomial(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

fn write_truth(ctx: &Ctx, o: &mut Outcome, head: &[String], rows: impl Iterator<Item = Vec<f64>>) -> CliResult<()> {
    let mut wr = csv::Writer::from_writer(ctx.create("truth.csv")?);
    wr.write_record(head)?;
    for r in rows {
        wr.write_record(r.into_iter().map(fmt))?;
    }
    wr.flush()?;
    o.files.push("truth.csv".into());
    Ok(())
}

fn pairing_check(out: &SmootherOutput) -> Option<Check> {
    out.pairing_deviation
        .map(|d| Check::at_most("forward/backward pairing conserved", d, PAIRING_TOL))
}

pub fn classical(params: &ClassicalParams, ctx: &Ctx) -> CliResult<Outcome> {
    let mut builder = process_builder(&params.process)?;
    for ch in &params.channels {
        let c = ch.coefficients.clone();
        builder = builder.channel(ch.name.clone(), move |x| polynomial(&c, x[0]));
    }
    let model = builder.build()?;
    let grid = model.grid().clone();
    let prior = prior_density(&params.process, params.prior.as_ref(), &grid)?;
    let mut o = Outcome::default();
    let record = match &params.record {
        Some(dir) => read_record(dir)?,
        None => {
            let dt = positive(params.dt, "dt")?;
            let steps = step_count(0.0, params.t_end, dt);
            let mut rng = RngStream::new(ctx.seed, 0);
            let start = start_index(&grid, params.x0, &prior, &mut rng);
            let path = classical::sample_path(&model, start, steps, dt, &mut rng.fork(1))?;
            let rec = sample_poisson_record(
                &classical::path_intensities(&model, &path),
                model.channels().to_vec(),
                0.0,
                dt,
                &mut rng.fork(2),
            )?;
            let xs = grid.axes()[0].coordinates();
            write_truth(
                ctx,
                &mut o,
                &["t".into(), "x".into()],
                path.iter().enumerate().map(|(k, &i)| vec![k as f64 * dt, xs[i]]),
            )?;
            ctx.write_record(&mut o, &rec)?;
            rec
        }
    };
    let opts = SmootherOptions {
        forward: params.forward,
        stride: params.stride,
        keep_densities: params.keep_densities,
    };
    let out = classical::smooth(&model, &prior, &record, &opts)?;
    let mut manifest = RunManifest::new(&out.estimator, params, Some(grid), record.dt, Some(ctx.seed));
    ctx.write_smoother(&mut o, "smoother", &out, &mut manifest)?;
    o.checks.extend(pairing_check(&out));
    Ok(o)
}

// ---- hybrid ----

fn spin_op(op: SpinOp, two_s: usize) -> CMatrix {
    let (sx, sy, sz) = ops::spin_operators(two_s);
    let iy = sy.scale(C64::new(0.0, 1.0));
    match op {
        SpinOp::Sx => sx,
        SpinOp::Sy => sy,
        SpinOp::Sz => sz,
        SpinOp::Splus => &sx + &iy,
        SpinOp::Sminus => &sx - &iy,
        SpinOp::Identity => CMatrix::identity(two_s + 1),
    }
}

fn op_name(op: SpinOp) -> String {
    serde_json::to_value(op)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn hybrid(params: &HybridParams, ctx: &Ctx) -> CliResult<Outcome> {
    let two = 2.0 * params.spin;
    if !(two >= 1.0 && (two - two.round()).abs() < 1e-12) {
        return Err(CliError::Schema(format!("spin must be a positive half-integer, got {}", params.spin)));
    }
    let two_s = two.round() as usize;
    let dim = two_s + 1;
    let classical_model = process_builder(&params.process)?.build()?;
    let grid = classical_model.grid().clone();
    let mut h0 = CMatrix::zeros(dim);
    let mut coupled = Vec::new();
    for t in &params.hamiltonian {
        let op = spin_op(t.op, two_s);
        if t.x_power == 0 {
            h0.axpy_real(t.coefficient, &op);
        } else {
            coupled.push((t.coefficient, t.x_power as i32, op));
        }
    }
    let mut builder = HybridModel::builder(classical_model, dim).hamiltonian(h0);
    if !coupled.is_empty() {
        builder = builder.coupling(move |x| {
            let mut h = CMatrix::zeros(dim);
            for (c, p, op) in &coupled {
                h.axpy_real(c * x[0].powi(*p), op);
            }
            h
        });
    }
    for ch in &params.channels {
        if !(ch.rate >= 0.0) {
            return Err(CliError::Schema(format!("channel '{}' rate must be nonnegative", ch.name)));
        }
        let l = spin_op(ch.op, two_s).scale(C64::new(ch.rate.sqrt(), 0.0));
        builder = builder.jump_channel(ch.name.clone(), PointOp::Shared(l));
    }
    for d in &params.dissipators {
        if !(d.rate >= 0.0) {
            return Err(CliError::Schema("dissipator rate must be nonnegative".into()));
        }
        builder = builder.dissipator(spin_op(d.op, two_s).scale(C64::new(d.rate.sqrt(), 0.0)));
    }
    let model = builder.build()?;
    let psi = match params.initial {
        InitialSpin::Up => basis(dim, dim - 1),
        InitialSpin::Down => basis(dim, 0),
        InitialSpin::X => magnetometer::coherent_state_x(two_s),
    };
    let density = prior_density(&params.process, params.prior.as_ref(), &grid)?;
    let prior = HybridOperator::product(&density, &CMatrix::pure_state(&psi));
    let observables: Vec<(String, CMatrix)> =
        params.observables.iter().map(|&op| (op_name(op), spin_op(op, two_s))).collect();

    let mut o = Outcome::default();
    let record = match &params.record {
        Some(dir) => read_record(dir)?,
        None => {
            let dt = positive(params.dt, "dt")?;
            let steps = step_count(0.0, params.t_end, dt);
            let mut rng = RngStream::new(ctx.seed, 0);
            let start = start_index(&grid, params.x0, &density, &mut rng);
            let tr = hybrid::sample_trajectory(&model, start, &psi, steps, dt, &mut rng.fork(1))?;
            let xs = grid.axes()[0].coordinates();
            let mut head = vec!["t".to_string(), "x".to_string()];
            head.extend(observables.iter().map(|(n, _)| n.clone()));
            let rows = tr.path.iter().zip(&tr.states).enumerate().map(|(k, (&i, s))| {
                let mut r = vec![k as f64 * dt, xs[i]];
                r.extend(observables.iter().map(|(_, a)| {
                    let v = a.apply(s);
                    s.iter().zip(&v).map(|(p, q)| (p.conj() * q).re).sum::<f64>()
                }));
                r
            });
            write_truth(ctx, &mut o, &head, rows)?;
            ctx.write_record(&mut o, &tr.record)?;
            tr.record
        }
    };
    let opts = HybridSmootherOptions {
        forward: params.forward,
        stride: params.stride,
        keep_densities: params.keep_densities,
        observables,
    };
    let out = hybrid::smooth(&model, &prior, &record, &opts)?;
    let mut manifest = RunManifest::new(&out.estimator, params, Some(grid), record.dt, Some(ctx.seed));
    ctx.write_smoother(&mut o, "smoother", &out, &mut manifest)?;
    o.checks.extend(pairing_check(&out));
    Ok(o)
}

fn basis(dim: usize, i: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[i] = C64::new(1.0, 0.0);
    v
}

// ---- magnetometer ----

fn simulate_magnetometer(cfg: &MagnetometerConfig, ctx: &Ctx, o: &mut Outcome) -> CliResult<MeasurementRecord> {
    let mut rng = RngStream::new(ctx.seed, 0);
    let (truth, rec) = match cfg.estimator {
        Estimator::ExactHybrid => magnetometer::simulate_quantum_truth(cfg, &mut rng)?,
        _ => magnetometer::simulate_truth_and_record(cfg, &mut rng)?,
    };
    truth.write_csv(ctx.create("truth.csv")?)?;
    o.files.push("truth.csv".into());
    ctx.write_record(o, &rec)?;
    Ok(rec)
}

pub fn magnetometer(params: &MagnetometerParams, ctx: &Ctx) -> CliResult<Outcome> {
    let cfg = &params.model;
    cfg.validate()?;
    if cfg.estimator == Estimator::PhaseSpaceClassical {
        for w in magnetometer::phase_space_validity(cfg) {
            log::warn!("{w}");
        }
    }
    let mut o = Outcome::default();
    match params.action {
        MagnetometerAction::Simulate => {
            simulate_magnetometer(cfg, ctx, &mut o)?;
        }
        MagnetometerAction::Estimate => {
            let record = match &params.record {
                Some(dir) => read_record(dir)?,
                None => simulate_magnetometer(cfg, ctx, &mut o)?,
            };
            let out = match cfg.estimator {
                Estimator::KalmanMfp => {
                    let run = magnetometer::kalman_mfp(cfg, &record, &KalmanOptions::default())?;
                    o.checks.push(Check::at_most(
                        "smoothed covariance below both one-sided covariances",
                        run.order_violation(),
                        ORDER_TOL,
                    ));
                    run.output
                }
                _ => magnetometer::run_estimator(cfg, &record)?,
            };
            o.checks.extend(pairing_check(&out));
            let mut manifest = RunManifest::new(&out.estimator, cfg, None, record.dt, Some(ctx.seed));
            ctx.write_smoother(&mut o, cfg.estimator.name(), &out, &mut manifest)?;
        }
        MagnetometerAction::Benchmark => {
            let s = magnetometer::benchmark(cfg, ctx.seed)?;
            log::info!(
                "mid-record MSE filter {:.4}, smooth {:.4}, z = {:.2}",
                s.mid_mse_filter,
                s.mid_mse_smooth,
                s.z_score
            );
            if let Some(v) = s.max_order_violation {
                o.checks.push(Check::at_most("smoothed covariance below both one-sided covariances", v, ORDER_TOL));
            }
            let mut wr = csv::Writer::from_writer(ctx.create("benchmark.csv")?);
            wr.write_record(["tau", "mse_filter", "mse_smooth"])?;
            for k in 0..s.tau.len() {
                wr.write_record([s.tau[k], s.mse_filter[k], s.mse_smooth[k]].map(fmt))?;
            }
            wr.flush()?;
            o.files.push("benchmark.csv".into());
            ctx.write_json(&mut o, "benchmark.json", &s)?;
        }
    }
    Ok(o)
}

// ---- hardy ----

fn write_table(ctx: &Ctx, o: &mut Outcome, name: &str, t: &WignerTable) -> CliResult<()> {
    t.write_csv(ctx.create(name)?)?;
    o.files.push(name.into());
    Ok(())
}

pub fn hardy(params: &HardyParams, ctx: &Ctx) -> CliResult<Outcome> {
    let outcomes: Vec<DetectorOutcome> = match &params.outcome {
        Some(s) => vec![s.parse()?],
        None => DetectorOutcome::ALL.to_vec(),
    };
    let mut o = Outcome::default();
    for label in 0..3 {
        let f = hardy::predictive_wigner(&hardy::build_stage(label)?)?;
        write_table(ctx, &mut o, &format!("f{label}.csv"), &f)?;
    }
    for &oc in &outcomes {
        write_table(ctx, &mut o, &format!("g2_{oc}.csv"), &hardy::retrodictive_wigner(oc)?)?;
        let h = hardy::smoothing_table(oc)?;
        write_table(ctx, &mut o, &format!("h2_{oc}.csv"), &h.table)?;
        ctx.write_json(&mut o, &format!("h2_{oc}.json"), &h)?;
    }
    let p = hardy::outcome_probabilities()?;
    ctx.write_json(&mut o, "probabilities.json", &p)?;
    let report = hardy::paradox_report()?;
    ctx.write_json(&mut o, "paradox.json", &report)?;
    o.checks
        .extend(report.assertions.iter().map(|a| Check::new(a.name.clone(), a.passed, a.detail.clone())));
    for id in [1, 2] {
        let r = regress::run_criterion(id, &SuiteOptions::default());
        o.checks.push(Check::new(r.name, r.passed, r.detail));
    }
    Ok(o)
}

// ---- weak measurement ----

fn lattice_label(i: usize) -> String {
    if i % 2 == 0 {
        (i / 2).to_string()
    } else {
        format!("{}.5", i / 2)
    }
}

fn write_grid(ctx: &Ctx, o: &mut Outcome, name: &str, t: &Table) -> CliResult<()> {
    let mut wr = csv::Writer::from_writer(ctx.create(name)?);
    let mut head = vec!["yq\\yp".to_string()];
    head.extend((0..t.len()).map(lattice_label));
    wr.write_record(&head)?;
    for (i, row) in t.iter().enumerate() {
        let mut r = vec![lattice_label(i)];
        r.extend(row.iter().map(|v| format!("{v:.15e}")));
        wr.write_record(&r)?;
    }
    wr.flush()?;
    o.files.push(name.into());
    Ok(())
}

fn random_psd(n: usize, rng: &mut RngStream) -> CMatrix {
    let mut a = CMatrix::zeros(n);
    for r in 0..n {
        for c in 0..n {
            a[(r, c)] = C64::new(rng.normal(), rng.normal());
        }
    }
    let mut p = &a * &a.adjoint();
    let t = p.trace().re;
    p.scale_real_mut(1.0 / t);
    p
}

fn weak_pair(pair: &str, n: usize, seed: u64) -> CliResult<(CMatrix, CMatrix)> {
    if pair == "random" {
        let mut rng = RngStream::new(seed, 1);
        return Ok((random_psd(n, &mut rng), random_psd(n, &mut rng)));
    }
    let Some(outcome) = pair.strip_prefix("hardy:") else {
        return Err(CliError::Schema(format!("pair must be 'hardy:<outcome>' or 'random', got '{pair}'")));
    };
    if n != 4 {
        return Err(CliError::Schema(format!("the Hardy pair lives in dimension 4, got N = {n}")));
    }
    let oc: DetectorOutcome = outcome.parse()?;
    Ok((hardy::build_stage(2)?.state, oc.effect()))
}

#[derive(Serialize)]
struct WeakSummary {
    #[serde(rename = "N")]
    n: usize,
    eps: f64,
    shots: u64,
    pair: String,
    seed: u64,
    completeness_deviation: f64,
    convolution_identity_residual: f64,
    exact_reconstruction_max_error: f64,
    sampled_reconstruction_max_error: f64,
    empirical_max_z: f64,
    direct_map_cell: (usize, usize),
    reconstructed_map_cell: (usize, usize),
}

pub fn weakmeas(params: &WeakmeasParams, ctx: &Ctx) -> CliResult<Outcome> {
    let cfg = WeakMeasConfig::new(params.n, params.eps)?;
    let (f, g) = weak_pair(&params.pair, params.n, ctx.seed)?;
    let exact = weakmeas::joint_distribution(&f, &g, &cfg)?;
    let direct = weakmeas::direct_smoothing(&f, &g, &cfg)?;
    let recon_exact = weakmeas::deconvolve_smoothing(&exact, &cfg)?;
    let tomo = weakmeas::sampled_tomography(&f, &g, &cfg, params.shots, &RngStream::new(ctx.seed, 0))?;
    let identity = weakmeas::convolution_identity_check(&f, &g, &cfg)?;
    let completeness = weakmeas::weak_operators(&cfg).completeness_deviation();
    let mut zmax: f64 = 0.0;
    for (i, row) in exact.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            let se = tomo.empirical_se[i][j];
            if se > 0.0 {
                zmax = zmax.max((tomo.empirical[i][j] - p).abs() / se);
            }
        }
    }
    let mut o = Outcome::default();
    write_grid(ctx, &mut o, "exact_p.csv", &exact)?;
    write_grid(ctx, &mut o, "empirical_p.csv", &tomo.empirical)?;
    write_grid(ctx, &mut o, "reconstructed_h.csv", &tomo.reconstructed)?;
    write_grid(ctx, &mut o, "reconstructed_se.csv", &tomo.reconstructed_se)?;
    write_grid(ctx, &mut o, "direct_h.csv", &direct)?;
    let summary = WeakSummary {
        n: params.n,
        eps: params.eps,
        shots: params.shots,
        pair: params.pair.clone(),
        seed: ctx.seed,
        completeness_deviation: completeness,
        convolution_identity_residual: identity,
        exact_reconstruction_max_error: weakmeas::max_abs_diff(&recon_exact, &direct),
        sampled_reconstruction_max_error: weakmeas::max_abs_diff(&tomo.reconstructed, &direct),
        empirical_max_z: zmax,
        direct_map_cell: weakmeas::argmax(&direct),
        reconstructed_map_cell: weakmeas::argmax(&tomo.reconstructed),
    };
    ctx.write_json(&mut o, "summary.json", &summary)?;
    o.checks.push(Check::at_most("weak-operator completeness", completeness, 1e-12));
    o.checks.push(Check::at_most("convolution identity", identity, 1e-10));
    Ok(o)
}

// ---- regression suite ----

pub fn regress(opts: &SuiteOptions, only: &[u32], ctx: &Ctx) -> CliResult<Outcome> {
    let report = if only.is_empty() {
        regress::regression_suite(opts)
    } else {
        regress::run_criteria(only, opts)
    };
    for c in &report.criteria {
        println!("{c}");
    }
    let mut o = Outcome::default();
    ctx.write_json(&mut o, "regress.json", &report)?;
    o.checks = report
        .criteria
        .iter()
        .map(|c| Check::new(format!("criterion {} {}", c.id, c.name), c.passed, c.detail.clone()))
        .collect();
    Ok(o)
}
