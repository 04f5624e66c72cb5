//! Discrete Wigner distributions.
//!
//! Two phase spaces are supported:
//!
//! * Feynman–Wootters (`FW`): an N×N table over q, p ∈ {0..N−1}, defined for
//!   prime N and, with an explicit prime factorization, for products of primes.
//! * Hannay–Berry (`HB`): a 2N×2N table over q, p ∈ {0, ½, …, N−½}, defined for
//!   any N ≥ 2. Half-integer coordinates are stored as doubled integers, so table
//!   row `i` is q = i/2.
//!
//! Tables are row-major with q on rows and p on columns. Composite FW tables use
//! tuple indices (q₁, …, q_k) flattened with the first factor most significant,
//! matching the order of [`CMatrix::kron`].

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::hybrid::HybridOperator;
use crate::linalg::{ops, CMatrix, C64, ZERO};

/// Imaginary parts above this (relative to the largest entry) mean the source was not Hermitian.
const IMAG_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WignerKind {
    FW,
    HB,
}

/// How HB matrix indices q ± u are treated outside {0..N−1}.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HbIndexing {
    /// Out-of-range indices give zero matrix elements; tr[ĝf̂] = 2N·Σg̃f̃.
    #[default]
    Bounded,
    /// Indices taken mod N; tr[ĝf̂] = N·Σg̃f̃.
    Periodic,
}

impl HbIndexing {
    fn is_bounded(&self) -> bool {
        *self == HbIndexing::Bounded
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerTable {
    pub kind: WignerKind,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "HbIndexing::is_bounded")]
    pub indexing: HbIndexing,
    /// values[row][col]; for HB, row/col are doubled coordinates.
    pub values: Vec<Vec<f64>>,
}

pub fn is_prime(n: usize) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

fn check_square(a: &CMatrix, n: usize) -> Result<()> {
    if a.dim() != n {
        return Err(Error::Dimension(format!("matrix is {}×{}, expected N = {n}", a.dim(), a.dim())));
    }
    Ok(())
}

fn real_part(z: C64, scale: f64) -> Result<f64> {
    if z.im.abs() > IMAG_TOL * scale.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "Wigner value has imaginary part {:e}; the source is not Hermitian",
            z.im
        )));
    }
    Ok(z.re)
}

/// Phase-point operator Ŵ(q,p) for prime N.
pub fn fw_operator(n: usize, q: usize, p: usize) -> CMatrix {
    if n == 2 {
        let sign = |k: usize| if k % 2 == 0 { 1.0 } else { -1.0 };
        let mut w = CMatrix::identity(2);
        w.axpy_real(sign(q), &ops::sigma_z());
        w.axpy_real(sign(p), &ops::sigma_x());
        w.axpy_real(sign(q + p), &ops::sigma_y());
        w.scale_real_mut(0.5);
        return w;
    }
    let mut w = CMatrix::zeros(n);
    for q1 in 0..n {
        let q2 = (2 * q + n - q1) % n;
        let k = (p * ((q1 + n - q2) % n)) % n;
        w[(q1, q2)] = C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64);
    }
    w
}

/// ⊗ᵢ Ŵᵢ(qᵢ,pᵢ) for tuple indices flattened first-factor-major.
pub fn fw_composite_operator(factors: &[usize], q: usize, p: usize) -> CMatrix {
    let qs = split_index(factors, q);
    let ps = split_index(factors, p);
    let mut w = CMatrix::identity(1);
    for ((&n, qi), pi) in factors.iter().zip(qs).zip(ps) {
        w = w.kron(&fw_operator(n, qi, pi));
    }
    w
}

fn split_index(factors: &[usize], mut flat: usize) -> Vec<usize> {
    let mut out = vec![0; factors.len()];
    for (slot, &n) in out.iter_mut().zip(factors).rev() {
        *slot = flat % n;
        flat /= n;
    }
    out
}

/// f(q,p) = (1/N) tr[A Ŵ(q,p)] for prime N.
pub fn fw_wigner(a: &CMatrix, n: usize) -> Result<WignerTable> {
    check_square(a, n)?;
    if !is_prime(n) {
        return Err(Error::InvalidArgument(format!(
            "N = {n} is not prime; supply its prime factors"
        )));
    }
    build_fw(a, n, None, |q, p| fw_operator(n, q, p))
}

/// Composite FW table over subsystems with the given prime dimensions.
pub fn fw_wigner_composite(a: &CMatrix, factors: &[usize]) -> Result<WignerTable> {
    if factors.is_empty() || factors.iter().any(|&f| !is_prime(f)) {
        return Err(Error::InvalidArgument(format!("factors {factors:?} must all be prime")));
    }
    let n: usize = factors.iter().product();
    check_square(a, n)?;
    build_fw(a, n, Some(factors.to_vec()), |q, p| fw_composite_operator(factors, q, p))
}

fn build_fw(
    a: &CMatrix,
    n: usize,
    factors: Option<Vec<usize>>,
    op: impl Fn(usize, usize) -> CMatrix,
) -> Result<WignerTable> {
    let scale = a.max_abs();
    let mut values = vec![vec![0.0; n]; n];
    for (q, row) in values.iter_mut().enumerate() {
        for (p, v) in row.iter_mut().enumerate() {
            *v = real_part(a.trace_product(&op(q, p)) / n as f64, scale)?;
        }
    }
    Ok(WignerTable {
        kind: WignerKind::FW,
        n,
        factors,
        indexing: HbIndexing::Bounded,
        values,
    })
}

fn hb_index(n: usize, twice: isize, indexing: HbIndexing) -> Option<usize> {
    if twice % 2 != 0 {
        return None;
    }
    let i = twice / 2;
    match indexing {
        HbIndexing::Bounded => (0..n as isize).contains(&i).then_some(i as usize),
        HbIndexing::Periodic => Some(i.rem_euclid(n as isize) as usize),
    }
}

/// Phase-point operator ŵ(q,p) = Σ_u e^{4πipu/N}|q+u⟩⟨q−u| with q = q2/2, p = p2/2.
pub fn hb_operator(n: usize, q2: usize, p2: usize, indexing: HbIndexing) -> CMatrix {
    let mut w = CMatrix::zeros(n);
    let ni = n as isize;
    for u2 in (1 - ni)..=ni {
        let (Some(r), Some(c)) = (
            hb_index(n, q2 as isize + u2, indexing),
            hb_index(n, q2 as isize - u2, indexing),
        ) else {
            continue;
        };
        w[(r, c)] += C64::from_polar(1.0, PI * (p2 as isize * u2) as f64 / n as f64);
    }
    w
}

/// f̃(q,p) = (1/2N) tr[A ŵ(q,p)] with bounded indexing.
pub fn hb_wigner(a: &CMatrix, n: usize) -> Result<WignerTable> {
    hb_wigner_with(a, n, HbIndexing::Bounded)
}

pub fn hb_wigner_with(a: &CMatrix, n: usize, indexing: HbIndexing) -> Result<WignerTable> {
    check_square(a, n)?;
    if n < 2 {
        return Err(Error::InvalidArgument("HB tables need N ≥ 2".into()));
    }
    let scale = a.max_abs();
    let side = 2 * n;
    let ni = n as isize;
    let mut values = vec![vec![0.0; side]; side];
    for (q2, row) in values.iter_mut().enumerate() {
        // Only u with q ± u integral contribute; collect them once per row.
        let terms: Vec<(isize, C64)> = ((1 - ni)..=ni)
            .filter_map(|u2| {
                let r = hb_index(n, q2 as isize + u2, indexing)?;
                let c = hb_index(n, q2 as isize - u2, indexing)?;
                Some((u2, a[(c, r)]))
            })
            .collect();
        for (p2, v) in row.iter_mut().enumerate() {
            let mut z = ZERO;
            for &(u2, x) in &terms {
                z += x * C64::from_polar(1.0, PI * (p2 as isize * u2) as f64 / n as f64);
            }
            *v = real_part(z / side as f64, scale)?;
        }
    }
    Ok(WignerTable {
        kind: WignerKind::HB,
        n,
        factors: None,
        indexing,
        values,
    })
}

impl WignerTable {
    /// Number of rows (and columns): N for FW, 2N for HB.
    pub fn side(&self) -> usize {
        self.values.len()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().flatten().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Constant c with tr[ĝf̂] = c·Σ g·f.
    pub fn overlap_factor(&self) -> f64 {
        match (self.kind, self.indexing) {
            (WignerKind::HB, HbIndexing::Bounded) => 2.0 * self.n as f64,
            _ => self.n as f64,
        }
    }

    fn same_space(&self, other: &Self) -> Result<()> {
        if self.kind != other.kind
            || self.n != other.n
            || self.factors != other.factors
            || self.indexing != other.indexing
        {
            return Err(Error::Dimension(format!(
                "tables differ: {:?} N={} vs {:?} N={}",
                self.kind, self.n, other.kind, other.n
            )));
        }
        Ok(())
    }

    /// Elementwise product, used by the smoothing quasiprobability.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        let mut out = self.clone();
        for (r, o) in out.values.iter_mut().zip(&other.values) {
            for (a, b) in r.iter_mut().zip(o) {
                *a *= b;
            }
        }
        Ok(out)
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().flatten().for_each(|v| *v *= s);
    }

    /// Position and momentum distributions ⟨q|ρ|q⟩ and ⟨p|ρ|p⟩ over q, p ∈ {0..N−1},
    /// with |p⟩ = N^{-1/2} Σ_q e^{2πipq/N}|q⟩. For HB these are the integer rows
    /// and columns; bounded tables put half the momentum weight on half-integer p.
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let row_sums: Vec<f64> = self.values.iter().map(|r| r.iter().sum()).collect();
        let col_sums: Vec<f64> = (0..self.side()).map(|c| self.values.iter().map(|r| r[c]).sum()).collect();
        match self.kind {
            WignerKind::FW => (row_sums, col_sums),
            WignerKind::HB => {
                let w = if self.indexing.is_bounded() { 2.0 } else { 1.0 };
                (
                    row_sums.into_iter().step_by(2).collect(),
                    col_sums.into_iter().step_by(2).map(|v| w * v).collect(),
                )
            }
        }
    }

    /// Σ f(q,p) Ŵ(q,p), the inverse of the FW transform.
    pub fn reconstruct(&self) -> Result<CMatrix> {
        if self.kind != WignerKind::FW {
            return Err(Error::InvalidArgument("only FW tables can be inverted".into()));
        }
        let mut a = CMatrix::zeros(self.n);
        for (q, row) in self.values.iter().enumerate() {
            for (p, &v) in row.iter().enumerate() {
                let w = match &self.factors {
                    Some(f) => fw_composite_operator(f, q, p),
                    None => fw_operator(self.n, q, p),
                };
                a.axpy_real(v, &w);
            }
        }
        Ok(a)
    }

    /// Row or column label: "2", "1.5", or "(0,1)" for composite tuples.
    pub fn label(&self, i: usize) -> String {
        match (self.kind, &self.factors) {
            (WignerKind::HB, _) if i % 2 == 0 => (i / 2).to_string(),
            (WignerKind::HB, _) => format!("{}.5", i / 2),
            (WignerKind::FW, Some(f)) => {
                let parts: Vec<String> = split_index(f, i).iter().map(|x| x.to_string()).collect();
                format!("({})", parts.join(","))
            }
            (WignerKind::FW, None) => i.to_string(),
        }
    }

    /// CSV with a header row of p labels and one row per q.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["q\\p".to_string()];
        header.extend((0..self.side()).map(|i| self.label(i)));
        wr.write_record(&header)?;
        for (i, row) in self.values.iter().enumerate() {
            let mut rec = vec![self.label(i)];
            rec.extend(row.iter().map(|v| format!("{v:.15e}")));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)?;
        let side = match t.kind {
            WignerKind::FW => t.n,
            WignerKind::HB => 2 * t.n,
        };
        if t.values.len() != side || t.values.iter().any(|r| r.len() != side) {
            return Err(Error::Dimension(format!("expected a {side}×{side} table")));
        }
        if let Some(f) = &t.factors {
            if f.iter().product::<usize>() != t.n || f.iter().any(|&p| !is_prime(p)) {
                return Err(Error::InvalidArgument(format!("factors {f:?} do not multiply to N = {}", t.n)));
            }
        }
        Ok(t)
    }
}

impl fmt::Display for WignerTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.values {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>9.5}")).collect();
            writeln!(f, "{}", cells.join(" "))?;
        }
        Ok(())
    }
}

/// tr[ĝf̂] from the tables: N·Σgf (FW, periodic HB) or 2N·Σgf (bounded HB).
pub fn overlap(f: &WignerTable, g: &WignerTable) -> Result<f64> {
    let h = f.product(g)?;
    Ok(f.overlap_factor() * h.sum())
}

/// Transform of a hybrid operator at every grid point.
pub fn hybrid_tables(op: &HybridOperator, transform: impl Fn(&CMatrix) -> Result<WignerTable>) -> Result<Vec<WignerTable>> {
    op.mats.iter().map(transform).collect()
}

/// Smoothing quasiprobability h(q,p,x) over a classical grid with cell volume ΔV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiDensity {
    pub tables: Vec<WignerTable>,
    pub cell_volume: f64,
}

impl QuasiDensity {
    /// Σ_{q,p} h(q,p,x) at each grid point.
    pub fn marginal_x(&self) -> Vec<f64> {
        self.tables.iter().map(WignerTable::sum).collect()
    }

    /// ∫dx h(q,p,x) as a single table.
    pub fn marginal_qp(&self) -> WignerTable {
        let mut out = self.tables[0].clone();
        out.scale(0.0);
        for t in &self.tables {
            for (r, o) in out.values.iter_mut().zip(&t.values) {
                for (a, b) in r.iter_mut().zip(o) {
                    *a += b * self.cell_volume;
                }
            }
        }
        out
    }

    pub fn min(&self) -> f64 {
        self.tables.iter().map(WignerTable::min).fold(f64::INFINITY, f64::min)
    }

    pub fn as_density(&self, grid: crate::grid::ClassicalGrid) -> Result<DensityGrid> {
        DensityGrid::new(grid, self.marginal_x(), false)
    }
}

/// h(q,p,x) = g·f / (∫dx Σ_{q,p} g·f).
pub fn smoothing_quasiprob(f: &[WignerTable], g: &[WignerTable], cell_volume: f64) -> Result<QuasiDensity> {
    if f.len() != g.len() || f.is_empty() {
        return Err(Error::Dimension(format!("{} forward vs {} backward tables", f.len(), g.len())));
    }
    let mut tables = f.iter().zip(g).map(|(a, b)| a.product(b)).collect::<Result<Vec<_>>>()?;
    let z: f64 = tables.iter().map(WignerTable::sum).sum::<f64>() * cell_volume;
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::DegenerateRecord(format!("total phase-space overlap is {z}")));
    }
    tables.iter_mut().for_each(|t| t.scale(1.0 / z));
    Ok(QuasiDensity { tables, cell_volume })
}
