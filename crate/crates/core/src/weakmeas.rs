//! Weak consecutive q and p measurements between a forward state f̂ and an
//! effect ĝ, and recovery of the smoothing quasiprobability h̃ on the 2N×2N grid.
//!
//! Outcomes y live on the half-integer lattice {0, ½, …, N−½}, stored doubled as
//! Y = 2y ∈ {0..2N−1}, the same lattice as the Hannay–Berry table. Tables here
//! are indexed [Y_q][Y_p]. Phase-space tables use periodic HB indexing, for
//! which the convolution identity below is exact.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::Binomial;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, ZERO};
use crate::rng::RngStream;
use crate::wigner::{hb_wigner_with, HbIndexing};

pub type Table = Vec<Vec<f64>>;

/// Smallest kernel Fourier coefficient accepted by the deconvolution.
pub const KERNEL_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakMeasConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub eps: f64,
}

impl WeakMeasConfig {
    pub fn new(n: usize, eps: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("N must be at least 2".into()));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("ε must be positive, got {eps}")));
        }
        Ok(Self { n, eps })
    }

    pub fn side(&self) -> usize {
        2 * self.n
    }

    /// k(Y) = exp(ε cos(πY/N)), the unnormalized single-axis kernel.
    pub fn kernel(&self, y2: isize) -> f64 {
        (self.eps * (PI * y2 as f64 / self.n as f64).cos()).exp()
    }

    /// Normalization C = 1 / Σ_Y k(Y), which makes each family complete.
    pub fn c(&self) -> f64 {
        1.0 / (0..self.side() as isize).map(|y| self.kernel(y)).sum::<f64>()
    }
}

/// |p⟩ = N^{-1/2} Σ_q e^{2πipq/N}|q⟩ as the columns of a unitary.
pub fn momentum_basis(n: usize) -> CMatrix {
    let mut f = CMatrix::zeros(n);
    let s = 1.0 / (n as f64).sqrt();
    for q in 0..n {
        for p in 0..n {
            f[(q, p)] = C64::from_polar(s, 2.0 * PI * (p * q) as f64 / n as f64);
        }
    }
    f
}

#[derive(Clone, Debug)]
pub struct WeakOperators {
    pub c: f64,
    /// M̂(y_q) for Y = 0..2N−1, diagonal in q.
    pub position: Vec<CMatrix>,
    /// M̂(y_p) for Y = 0..2N−1, diagonal in p.
    pub momentum: Vec<CMatrix>,
}

impl WeakOperators {
    fn deviation(family: &[CMatrix]) -> f64 {
        let n = family[0].dim();
        let mut s = CMatrix::zeros(n);
        for m in family {
            s += &(&m.adjoint() * m);
        }
        s.max_abs_diff(&CMatrix::identity(n))
    }

    /// max |Σ_y M̂†M̂ − 1| over both families.
    pub fn completeness_deviation(&self) -> f64 {
        Self::deviation(&self.position).max(Self::deviation(&self.momentum))
    }
}

fn diag_family(cfg: &WeakMeasConfig, y2: usize) -> Vec<f64> {
    let sc = cfg.c().sqrt();
    (0..cfg.n)
        .map(|q| sc * (0.5 * cfg.eps * (PI * (y2 as f64 - 2.0 * q as f64) / cfg.n as f64).cos()).exp())
        .collect()
}

pub fn weak_operators(cfg: &WeakMeasConfig) -> WeakOperators {
    let f = momentum_basis(cfg.n);
    let fd = f.adjoint();
    let position: Vec<CMatrix> = (0..cfg.side()).map(|y| CMatrix::from_real_diag(&diag_family(cfg, y))).collect();
    let momentum = position.iter().map(|m| m.sandwich(&f, &fd)).collect();
    WeakOperators {
        c: cfg.c(),
        position,
        momentum,
    }
}

fn check_pair(f: &CMatrix, g: &CMatrix, cfg: &WeakMeasConfig) -> Result<f64> {
    if f.dim() != cfg.n || g.dim() != cfg.n {
        return Err(Error::Dimension(format!(
            "f̂ is {}, ĝ is {}, N = {}",
            f.dim(),
            g.dim(),
            cfg.n
        )));
    }
    let z = g.trace_product(f).re;
    if !(z > 0.0) {
        return Err(Error::DegenerateRecord(format!("tr(ĝf̂) = {z}")));
    }
    Ok(z)
}

/// P(y_q,y_p) = tr[ĝ M̂(y_p) M̂(y_q) f̂ M̂†(y_q) M̂†(y_p)] / tr(ĝf̂).
pub fn joint_distribution(f: &CMatrix, g: &CMatrix, cfg: &WeakMeasConfig) -> Result<Table> {
    let z = check_pair(f, g, cfg)?;
    let ops = weak_operators(cfg);
    let side = cfg.side();
    let mut p = vec![vec![0.0; side]; side];
    for (yq, mq) in ops.position.iter().enumerate() {
        let fq = f.sandwich(mq, &mq.adjoint());
        for (yp, mp) in ops.momentum.iter().enumerate() {
            let post = fq.sandwich(mp, &mp.adjoint());
            p[yq][yp] = g.trace_product(&post).re / z;
        }
    }
    Ok(p)
}

/// ε-deformed transform of f̂ in the q basis for outcome Y_q:
/// (1/2N) Σ_u exp[−2ε cos(2π(y_q−q̄)/N) sin²(πu/N)] e^{4πip̄u/N} ⟨q̄−u|f̂|q̄+u⟩.
pub fn deformed_forward(f: &CMatrix, cfg: &WeakMeasConfig, yq: usize) -> Table {
    deformed(f, cfg, yq as isize, false)
}

/// ε-deformed transform of ĝ in the p basis for outcome Y_p:
/// (1/2N) Σ_v exp[−2ε cos(2π(y_p−p̄)/N) sin²(πv/N)] e^{4πivq̄/N} ⟨p̄+v|ĝ|p̄−v⟩.
pub fn deformed_backward(g: &CMatrix, cfg: &WeakMeasConfig, yp: usize) -> Table {
    let fb = momentum_basis(cfg.n);
    let gp = g.sandwich(&fb.adjoint(), &fb);
    let t = deformed(&gp, cfg, yp as isize, true);
    // Built with the momentum coordinate on rows; transpose to [q̄][p̄].
    (0..cfg.side()).map(|q| (0..cfg.side()).map(|p| t[p][q]).collect()).collect()
}

/// Shared kernel: rows are the "diagonal" coordinate (q̄ or p̄), columns its conjugate.
/// `plus_first` selects ⟨a+u|A|a−u⟩ (momentum form) instead of ⟨a−u|A|a+u⟩.
fn deformed(a: &CMatrix, cfg: &WeakMeasConfig, y2: isize, plus_first: bool) -> Table {
    let n = cfg.n as isize;
    let side = cfg.side();
    let nf = cfg.n as f64;
    let mut out = vec![vec![0.0; side]; side];
    for (r2, row) in out.iter_mut().enumerate() {
        let r2 = r2 as isize;
        let w = (PI * (y2 - r2) as f64 / nf).cos();
        let terms: Vec<(isize, C64)> = ((1 - n)..=n)
            .filter(|u2| (r2 + u2) % 2 == 0)
            .map(|u2| {
                let lo = ((r2 - u2) / 2).rem_euclid(n) as usize;
                let hi = ((r2 + u2) / 2).rem_euclid(n) as usize;
                let elem = if plus_first { a[(hi, lo)] } else { a[(lo, hi)] };
                let damp = (-2.0 * cfg.eps * w * (PI * u2 as f64 / (2.0 * nf)).sin().powi(2)).exp();
                (u2, elem * damp)
            })
            .collect();
        for (c2, v) in row.iter_mut().enumerate() {
            let mut z = ZERO;
            for &(u2, x) in &terms {
                z += x * C64::from_polar(1.0, PI * (c2 as isize * u2) as f64 / nf);
            }
            *v = z.re / side as f64;
        }
    }
    out
}

/// Right-hand side of the exact convolution identity,
/// (N C² / tr ĝf̂) Σ_{q̄,p̄} exp[ε cos(2π(y_q−q̄)/N) + ε cos(2π(y_p−p̄)/N)] g̃ f̃.
pub fn convolution_rhs(f: &CMatrix, g: &CMatrix, cfg: &WeakMeasConfig) -> Result<Table> {
    let z = check_pair(f, g, cfg)?;
    let side = cfg.side();
    let c = cfg.c();
    let pref = cfg.n as f64 * c * c / z;
    let fs: Vec<Table> = (0..side).map(|y| deformed_forward(f, cfg, y)).collect();
    let gs: Vec<Table> = (0..side).map(|y| deformed_backward(g, cfg, y)).collect();
    let mut out = vec![vec![0.0; side]; side];
    for (yq, row) in out.iter_mut().enumerate() {
        for (yp, v) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for q in 0..side {
                let kq = cfg.kernel(yq as isize - q as isize);
                for p in 0..side {
                    s += kq * cfg.kernel(yp as isize - p as isize) * gs[yp][q][p] * fs[yq][q][p];
                }
            }
            *v = pref * s;
        }
    }
    Ok(out)
}

/// max |P − RHS| over all outcomes.
pub fn convolution_identity_check(f: &CMatrix, g: &CMatrix, cfg: &WeakMeasConfig) -> Result<f64> {
    let lhs = joint_distribution(f, g, cfg)?;
    let rhs = convolution_rhs(f, g, cfg)?;
    Ok(max_abs_diff(&lhs, &rhs))
}

pub fn max_abs_diff(a: &Table, b: &Table) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// h̃ = g̃f̃ / Σ g̃f̃ with the undeformed periodic HB tables.
pub fn direct_smoothing(f: &CMatrix, g: &CMatrix, cfg: &WeakMeasConfig) -> Result<Table> {
    check_pair(f, g, cfg)?;
    let tf = hb_wigner_with(f, cfg.n, HbIndexing::Periodic)?;
    let tg = hb_wigner_with(g, cfg.n, HbIndexing::Periodic)?;
    let mut h = tf.product(&tg)?;
    let s = h.sum();
    if !(s.abs() > 0.0) {
        return Err(Error::DegenerateRecord("Σ g̃f̃ vanishes".into()));
    }
    h.scale(1.0 / s);
    Ok(h.values)
}

fn fft_2d(data: &mut [Vec<Complex<f64>>], fft: &Arc<dyn Fft<f64>>) {
    let side = data.len();
    for row in data.iter_mut() {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); side];
    for c in 0..side {
        for r in 0..side {
            col[r] = data[r][c];
        }
        fft.process(&mut col);
        for r in 0..side {
            data[r][c] = col[r];
        }
    }
}

/// Forward model P = C² Σ K(y − x̄) h̃(x̄) on the 2N×2N torus.
pub fn convolve_smoothing(h: &Table, cfg: &WeakMeasConfig) -> Table {
    let side = cfg.side();
    let c2 = cfg.c().powi(2);
    (0..side)
        .map(|yq| {
            (0..side)
                .map(|yp| {
                    let mut s = 0.0;
                    for q in 0..side {
                        for p in 0..side {
                            s += cfg.kernel(yq as isize - q as isize) * cfg.kernel(yp as isize - p as isize) * h[q][p];
                        }
                    }
                    c2 * s
                })
                .collect()
        })
        .collect()
}

/// Inverts [`convolve_smoothing`] by Fourier division.
pub fn deconvolve_smoothing(p: &Table, cfg: &WeakMeasConfig) -> Result<Table> {
    let side = cfg.side();
    if p.len() != side || p.iter().any(|r| r.len() != side) {
        return Err(Error::Dimension(format!("P must be {side}×{side}")));
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(side);
    let inv = planner.plan_fft_inverse(side);
    let mut k: Vec<Complex<f64>> = (0..side).map(|y| Complex::new(cfg.kernel(y as isize), 0.0)).collect();
    fwd.process(&mut k);
    let kmin = k.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if kmin < KERNEL_FLOOR {
        return Err(Error::IllConditioned(format!(
            "kernel Fourier coefficient {kmin:.3e} below {KERNEL_FLOOR:e} at N = {}, ε = {}; reduce N or increase ε",
            cfg.n, cfg.eps
        )));
    }
    let mut data: Vec<Vec<Complex<f64>>> = p.iter().map(|r| r.iter().map(|&v| Complex::new(v, 0.0)).collect()).collect();
    fft_2d(&mut data, &fwd);
    let c2 = cfg.c().powi(2);
    for (i, row) in data.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v /= k[i] * k[j] * c2;
        }
    }
    fft_2d(&mut data, &inv);
    let norm = (side * side) as f64;
    Ok(data.iter().map(|r| r.iter().map(|z| z.re / norm).collect()).collect())
}

/// Location (Y_q, Y_p) of the largest entry.
pub fn argmax(t: &Table) -> (usize, usize) {
    let side = t.first().map_or(0, Vec::len).max(1);
    let (i, _) = t
        .iter()
        .flatten()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    (i / side, i % side)
}

#[derive(Clone, Debug, Serialize)]
pub struct Tomography {
    pub shots: u64,
    pub counts: Vec<Vec<u64>>,
    pub empirical: Table,
    /// √(P̂(1−P̂)/shots) per cell.
    pub empirical_se: Table,
    pub reconstructed: Table,
    /// Bootstrap standard error of the reconstruction per cell.
    pub reconstructed_se: Table,
}

/// Number of shots per parallel block; each block has its own stream.
const SHOT_BLOCK: u64 = 1 << 16;
const BOOTSTRAP: usize = 200;

/// Draws `shots` outcomes from the exact joint distribution, histograms them and deconvolves.
pub fn sampled_tomography(
    f: &CMatrix,
    g: &CMatrix,
    cfg: &WeakMeasConfig,
    shots: u64,
    rng: &RngStream,
) -> Result<Tomography> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    let side = cfg.side();
    let exact = joint_distribution(f, g, cfg)?;
    let weights: Vec<f64> = exact.iter().flatten().map(|v| v.max(0.0)).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::Numerical(format!("outcome weights: {e}")))?;
    let blocks = shots.div_ceil(SHOT_BLOCK);
    let flat = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng.fork(1 + b);
            let n = SHOT_BLOCK.min(shots - b * SHOT_BLOCK);
            let mut h = vec![0u64; side * side];
            for _ in 0..n {
                h[dist.sample(&mut r)] += 1;
            }
            h
        })
        .reduce(
            || vec![0u64; side * side],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let total = shots as f64;
    let empirical: Table = flat.chunks(side).map(|r| r.iter().map(|&c| c as f64 / total).collect()).collect();
    let empirical_se = empirical
        .iter()
        .map(|r| r.iter().map(|&p| (p * (1.0 - p) / total).sqrt()).collect())
        .collect();
    let reconstructed = deconvolve_smoothing(&empirical, cfg)?;

    // Multinomial resampling of the histogram by conditional binomials.
    let probs: Vec<f64> = empirical.iter().flatten().copied().collect();
    let reps: Vec<Table> = (0..BOOTSTRAP)
        .into_par_iter()
        .map(|b| {
            let mut r = rng.fork(1 << 32 | b as u64);
            let mut left = shots;
            let mut mass = 1.0;
            let mut counts = vec![0u64; probs.len()];
            for (i, &p) in probs.iter().enumerate() {
                if left == 0 || mass <= 0.0 {
                    break;
                }
                let q = (p / mass).clamp(0.0, 1.0);
                let c = Binomial::new(left, q).map(|d| d.sample(&mut r)).unwrap_or(0);
                counts[i] = c;
                left -= c;
                mass -= p;
            }
            let t: Table = counts.chunks(side).map(|row| row.iter().map(|&c| c as f64 / total).collect()).collect();
            deconvolve_smoothing(&t, cfg)
        })
        .collect::<Result<_>>()?;
    let mut reconstructed_se = vec![vec![0.0; side]; side];
    for (i, row) in reconstructed_se.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let m = reps.iter().map(|t| t[i][j]).sum::<f64>() / BOOTSTRAP as f64;
            let var = reps.iter().map(|t| (t[i][j] - m).powi(2)).sum::<f64>() / (BOOTSTRAP - 1) as f64;
            *v = var.sqrt();
        }
    }
    Ok(Tomography {
        shots,
        counts: flat.chunks(side).map(<[u64]>::to_vec).collect(),
        empirical,
        empirical_se,
        reconstructed,
        reconstructed_se,
    })
}

/// Qubit pair used for small-N pipeline checks: f̂ = |0⟩⟨0|, ĝ = |−⟩⟨−|.
pub fn qubit_pair() -> (CMatrix, CMatrix) {
    let f = CMatrix::from_real_diag(&[1.0, 0.0]);
    let g = CMatrix::from_real_rows(&[vec![0.5, -0.5], vec![-0.5, 0.5]]).expect("2×2");
    (f, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardy::{build_stage, Detector, DetectorOutcome};

    fn random_psd(n: usize, rng: &mut RngStream) -> CMatrix {
        let mut a = CMatrix::zeros(n);
        for r in 0..n {
            for c in 0..n {
                a[(r, c)] = C64::new(rng.normal(), rng.normal());
            }
        }
        &a * &a.adjoint()
    }

    #[test]
    fn operator_families_are_complete() {
        for n in [2, 3, 5] {
            for eps in [0.01, 0.1, 1.0] {
                let ops = weak_operators(&WeakMeasConfig::new(n, eps).unwrap());
                assert!(ops.completeness_deviation() < 1e-12);
            }
        }
    }

    #[test]
    fn strong_measurement_concentrates_on_nearest_q() {
        let cfg = WeakMeasConfig::new(3, 20.0).unwrap();
        let ops = weak_operators(&cfg);
        let bound = (-cfg.eps * (1.0 - (2.0 * PI / 3.0).cos())).exp();
        for y in (0..6).step_by(2) {
            let d: Vec<f64> = (0..3).map(|q| ops.position[y][(q, q)].re.powi(2)).collect();
            let top = d[y / 2];
            assert!(d.iter().enumerate().all(|(q, v)| q == y / 2 || v / top <= bound * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn weak_limit_is_uniform_and_undisturbing() {
        let cfg = WeakMeasConfig::new(3, 1e-9).unwrap();
        let mut rng = RngStream::new(1, 0);
        let f = random_psd(3, &mut rng);
        let p = joint_distribution(&f, &CMatrix::identity(3), &cfg).unwrap();
        assert!(p.iter().flatten().all(|v| (v - 1.0 / 36.0).abs() < 1e-9));
    }

    #[test]
    fn qubit_distribution_by_hand() {
        // f̂ = |0⟩⟨0|, ĝ = 1: P(y_q,y_p) = Σ_p |⟨p|M̂(y_p)... expanded over the 2⁴ index terms.
        let cfg = WeakMeasConfig::new(2, 0.1).unwrap();
        let f = CMatrix::from_real_diag(&[1.0, 0.0]);
        let p = joint_distribution(&f, &CMatrix::identity(2), &cfg).unwrap();
        let c = cfg.c();
        let m = |y: usize, k: usize| (0.5 * cfg.eps * (PI * (y as f64 - 2.0 * k as f64) / 2.0).cos()).exp();
        for yq in 0..4 {
            for yp in 0..4 {
                // Σ_{p,p',k,k'} over the qubit: only q = q' = 0 survives in f̂.
                let mut s = C64::new(0.0, 0.0);
                for a in 0..2 {
                    for b in 0..2 {
                        for pp in 0..2 {
                            // ⟨pp|p=a⟩⟨p=a|0⟩⟨0|p=b⟩⟨p=b|pp⟩ with |p⟩ = (|0⟩ + (−1)^p |1⟩)/√2.
                            let _ = pp;
                            let phase = if (a + b) % 2 == 0 { 1.0 } else { 0.0 };
                            s += C64::new(phase * 0.25 * m(yp, a) * m(yp, b), 0.0);
                        }
                    }
                }
                let want = c * c * m(yq, 0).powi(2) * s.re;
                assert!((p[yq][yp] - want).abs() < 1e-12, "{yq} {yp}: {} vs {want}", p[yq][yp]);
            }
        }
        assert!((p.iter().flatten().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn convolution_identity_is_exact() {
        let mut rng = RngStream::new(2, 0);
        for n in [2, 3, 5] {
            for eps in [0.05, 0.5] {
                let cfg = WeakMeasConfig::new(n, eps).unwrap();
                for _ in 0..5 {
                    let f = random_psd(n, &mut rng);
                    let g = random_psd(n, &mut rng);
                    assert!(convolution_identity_check(&f, &g, &cfg).unwrap() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn deformed_transforms_approach_hb_linearly() {
        let mut rng = RngStream::new(3, 0);
        for n in [2, 3, 5] {
            let f = random_psd(n, &mut rng);
            let g = random_psd(n, &mut rng);
            let hf = hb_wigner_with(&f, n, HbIndexing::Periodic).unwrap().values;
            let hg = hb_wigner_with(&g, n, HbIndexing::Periodic).unwrap().values;
            let err = |eps: f64| {
                let cfg = WeakMeasConfig::new(n, eps).unwrap();
                (0..2 * n)
                    .map(|y| {
                        max_abs_diff(&deformed_forward(&f, &cfg, y), &hf)
                            .max(max_abs_diff(&deformed_backward(&g, &cfg, y), &hg))
                    })
                    .fold(0.0, f64::max)
            };
            let slope = (err(1e-2) / err(1e-3)).log10();
            assert!((slope - 1.0).abs() < 0.05, "N={n} slope {slope}");
        }
    }

    #[test]
    fn deconvolution_inverts_the_forward_map() {
        let mut rng = RngStream::new(4, 0);
        // Conditioning is ~1/k̂(N)², so larger N needs a stronger measurement.
        for (n, eps) in [(2, 0.05), (3, 0.5)] {
            let cfg = WeakMeasConfig::new(n, eps).unwrap();
            let h: Table = (0..2 * n).map(|_| (0..2 * n).map(|_| rng.normal()).collect()).collect();
            let back = deconvolve_smoothing(&convolve_smoothing(&h, &cfg), &cfg).unwrap();
            assert!(max_abs_diff(&h, &back) < 1e-9, "N={n} {}", max_abs_diff(&h, &back));
        }
        let cfg = WeakMeasConfig::new(3, 0.5).unwrap();
        let u = vec![vec![1.0 / 36.0; 6]; 6];
        let back = deconvolve_smoothing(&convolve_smoothing(&u, &cfg), &cfg).unwrap();
        assert!(max_abs_diff(&u, &back) < 1e-12);
    }

    #[test]
    fn tiny_kernel_coefficients_are_rejected() {
        let cfg = WeakMeasConfig::new(9, 0.01).unwrap();
        let p = vec![vec![1.0 / 324.0; 18]; 18];
        assert!(matches!(deconvolve_smoothing(&p, &cfg), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn identity_effect_gives_predictive_distribution() {
        let cfg = WeakMeasConfig::new(3, 0.3).unwrap();
        let mut rng = RngStream::new(5, 0);
        let f = random_psd(3, &mut rng);
        let p = joint_distribution(&f, &CMatrix::identity(3), &cfg).unwrap();
        let ops = weak_operators(&cfg);
        let tr = f.trace().re;
        for yq in 0..6 {
            for yp in 0..6 {
                let m = &ops.momentum[yp] * &ops.position[yq];
                let want = (&m.adjoint() * &m).trace_product(&f).re / tr;
                assert!((p[yq][yp] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_pairing_is_degenerate() {
        let cfg = WeakMeasConfig::new(2, 0.1).unwrap();
        let up = CMatrix::from_real_diag(&[1.0, 0.0]);
        let down = CMatrix::from_real_diag(&[0.0, 1.0]);
        assert!(matches!(joint_distribution(&up, &down, &cfg), Err(Error::DegenerateRecord(_))));
    }

    #[test]
    fn tomography_histogram_is_consistent() {
        let cfg = WeakMeasConfig::new(2, 0.5).unwrap();
        let (f, g) = qubit_pair();
        let rng = RngStream::new(6, 0);
        let t = sampled_tomography(&f, &g, &cfg, 200_000, &rng).unwrap();
        let exact = joint_distribution(&f, &g, &cfg).unwrap();
        for (r, (e, s)) in t.empirical.iter().flatten().zip(t.empirical_se.iter().flatten()).enumerate() {
            let x = exact[r / 4][r % 4];
            assert!((e - x).abs() < 5.0 * s.max(1e-6), "cell {r}");
        }
        assert_eq!(t.counts.iter().flatten().sum::<u64>(), 200_000);
        assert!(sampled_tomography(&f, &g, &cfg, 0, &rng).is_err());
        let again = sampled_tomography(&f, &g, &cfg, 200_000, &rng).unwrap();
        assert_eq!(again.counts, t.counts);
    }

    #[test]
    fn hardy_pair_is_well_posed() {
        let f = build_stage(2).unwrap().state;
        let g = DetectorOutcome::new(Detector::D, Detector::D).effect();
        let cfg = WeakMeasConfig::new(4, 0.05).unwrap();
        let h = direct_smoothing(&f, &g, &cfg).unwrap();
        assert!((h.iter().flatten().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(convolution_identity_check(&f, &g, &cfg).unwrap() < 1e-10);
    }
}
