//! Dense complex matrices for the quantum factor of hybrid operators.
//!
//! Matrices are square and stored row-major. Quantum dimensions in this crate
//! are small (a spin-s multiplet or a few qubits), so everything is dense.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Largest dimension accepted by [`CMatrix::expm`].
pub const EXPM_MAX_DIM: usize = 64;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("matrix is not square".into()));
        }
        Self::from_vec(dim, rows.concat())
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    /// The rank-one projector |ψ⟩⟨ψ| (ψ is not normalized here).
    pub fn outer(ket: &[C64]) -> Self {
        let dim = ket.len();
        let mut m = Self::zeros(dim);
        for r in 0..dim {
            for c in 0..dim {
                m[(r, c)] = ket[r] * ket[c].conj();
            }
        }
        m
    }

    /// |ψ⟩⟨ψ| / ⟨ψ|ψ⟩.
    pub fn pure_state(ket: &[C64]) -> Self {
        let norm: f64 = ket.iter().map(|z| z.norm_sqr()).sum();
        let mut m = Self::outer(ket);
        m.scale_mut(C64::new(1.0 / norm, 0.0));
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.dim, self.dim, other.dim, other.dim
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(self + other)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(self * other)
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = self.clone();
        m.scale_mut(s);
        m
    }

    pub fn scale_mut(&mut self, s: C64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    pub fn scale_real_mut(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: C64, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (z, &o) in self.data.iter_mut().zip(&other.data) {
            *z += a * o;
        }
    }

    /// `self += a * other` with a real coefficient.
    pub fn axpy_real(&mut self, a: f64, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (z, &o) in self.data.iter_mut().zip(&other.data) {
            z.re += a * o.re;
            z.im += a * o.im;
        }
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut m = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                m.data[c * n + r] = self.data[r * n + c].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// tr(self · other) without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut acc = ZERO;
        for r in 0..n {
            for k in 0..n {
                acc += self.data[r * n + k] * other.data[k * n + r];
            }
        }
        acc
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (a, b) = (self.dim, other.dim);
        let n = a * b;
        let mut m = Self::zeros(n);
        for r1 in 0..a {
            for c1 in 0..a {
                let s = self.data[r1 * a + c1];
                if s == ZERO {
                    continue;
                }
                for r2 in 0..b {
                    for c2 in 0..b {
                        m.data[(r1 * b + r2) * n + c1 * b + c2] = s * other.data[r2 * b + c2];
                    }
                }
            }
        }
        m
    }

    /// [self, other] = self·other − other·self.
    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// {self, other} = self·other + other·self.
    pub fn anticommutator(&self, other: &Self) -> Self {
        &(self * other) + &(other * self)
    }

    /// `a · self · b`.
    pub fn sandwich(&self, a: &Self, b: &Self) -> Self {
        &(a * self) * b
    }

    /// max |A − A†| entrywise.
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim;
        let mut dev: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                let d = self.data[r * n + c] - self.data[c * n + r].conj();
                dev = dev.max(d.norm());
            }
        }
        dev
    }

    /// (A + A†)/2 in place.
    pub fn symmetrize(&mut self) {
        let n = self.dim;
        for r in 0..n {
            let d = &mut self.data[r * n + r];
            d.im = 0.0;
            for c in (r + 1)..n {
                let avg = (self.data[r * n + c] + self.data[c * n + r].conj()) * 0.5;
                self.data[r * n + c] = avg;
                self.data[c * n + r] = avg.conj();
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Sum of absolute values of all entries.
    pub fn entrywise_l1(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).sum()
    }

    fn one_norm(&self) -> f64 {
        let n = self.dim;
        (0..n)
            .map(|c| (0..n).map(|r| self.data[r * n + c].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Matrix exponential by scaling and squaring with a truncated Taylor series.
    pub fn expm(&self) -> Result<Self> {
        if self.dim > EXPM_MAX_DIM {
            return Err(Error::Dimension(format!(
                "expm supports dim <= {EXPM_MAX_DIM}, got {}",
                self.dim
            )));
        }
        if !self.is_finite() {
            return Err(Error::Numerical("expm of a non-finite matrix".into()));
        }
        let norm = self.one_norm();
        let mut squarings = 0u32;
        if norm > 0.5 {
            squarings = (norm / 0.5).log2().ceil() as u32;
        }
        let scaled = self.scale(C64::new(0.5f64.powi(squarings as i32), 0.0));
        // ‖X‖ ≤ 1/2, so 20 terms leave a remainder below 1e-25.
        let mut result = Self::identity(self.dim);
        let mut term = Self::identity(self.dim);
        for k in 1..=20 {
            term = &term * &scaled;
            term.scale_real_mut(1.0 / k as f64);
            result += &term;
            if term.max_abs() < 1e-18 * result.max_abs() {
                break;
            }
        }
        for _ in 0..squarings {
            result = &result * &result;
        }
        Ok(result)
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let mut h = self.clone();
        h.symmetrize();
        let mut ev: Vec<f64> = h.to_nalgebra().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.hermitian_eigenvalues()[0]
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim;
        (0..n)
            .map(|r| (0..n).map(|c| self.data[r * n + c] * v[c]).sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).collect()
    }

    /// max |A − B| entrywise.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in add");
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in sub");
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        CMatrix {
            dim: self.dim,
            data: self.data.iter().map(|a| -a).collect(),
        }
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in add_assign");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in mul");
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for r in 0..n {
            let row = &mut out[r * n..(r + 1) * n];
            for k in 0..n {
                let a = self.data[r * n + k];
                if a == ZERO {
                    continue;
                }
                let rrow = &rhs.data[k * n..(k + 1) * n];
                for (o, &b) in row.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        CMatrix { dim: n, data: out }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{})", self.dim, self.dim)?;
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|c| {
                    let z = self[(r, c)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Pauli matrices and spin operators.
pub mod ops {
    use super::*;

    pub fn sigma_x() -> CMatrix {
        CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    pub fn sigma_y() -> CMatrix {
        CMatrix::from_rows(&[vec![ZERO, -I], vec![I, ZERO]]).unwrap()
    }

    pub fn sigma_z() -> CMatrix {
        CMatrix::from_real_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap()
    }

    /// σ₋ = |0⟩⟨1|, lowering |1⟩ to |0⟩.
    pub fn sigma_minus() -> CMatrix {
        CMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap()
    }

    /// Spin-s operators (S_x, S_y, S_z) with ħ = 1 in the basis m = −s, …, s
    /// (index q = m + s).
    pub fn spin_operators(two_s: usize) -> (CMatrix, CMatrix, CMatrix) {
        let dim = two_s + 1;
        let s = two_s as f64 / 2.0;
        let mut raise = CMatrix::zeros(dim);
        for q in 0..dim - 1 {
            let m = q as f64 - s;
            raise[(q + 1, q)] = C64::new((s * (s + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
        let lower = raise.adjoint();
        let sx = (&raise + &lower).scale(C64::new(0.5, 0.0));
        let sy = (&raise - &lower).scale(C64::new(0.0, -0.5));
        let sz = CMatrix::from_real_diag(&(0..dim).map(|q| q as f64 - s).collect::<Vec<_>>());
        (sx, sy, sz)
    }
}

#[cfg(test)]
mod tests {
    use super::ops::*;
    use super::*;
    use proptest::prelude::*;

    fn random_matrix(dim: usize, seed: u64) -> CMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dim * dim)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        CMatrix::from_vec(dim, data).unwrap()
    }

    #[test]
    fn trace_of_identity() {
        assert_eq!(CMatrix::identity(4).trace(), C64::new(4.0, 0.0));
    }

    #[test]
    fn kron_sigma_z_identity_diagonal() {
        let k = sigma_z().kron(&CMatrix::identity(2));
        let d: Vec<f64> = k.diagonal().iter().map(|z| z.re).collect();
        assert_eq!(d, vec![1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn expm_of_zero_is_identity() {
        assert_eq!(CMatrix::zeros(3).expm().unwrap(), CMatrix::identity(3));
    }

    #[test]
    fn expm_of_rotation_generator() {
        // exp(-iθσ_y/2) rotates |0⟩ into cos(θ/2)|0⟩ + sin(θ/2)|1⟩.
        let theta = 1.3;
        let u = sigma_y().scale(C64::new(0.0, -theta / 2.0)).expm().unwrap();
        let psi = u.apply(&[ONE, ZERO]);
        assert!((psi[0].re - (theta / 2.0).cos()).abs() < 1e-14);
        assert!((psi[1].re - (theta / 2.0).sin()).abs() < 1e-14);
    }

    #[test]
    fn expm_rejects_large_dims() {
        assert!(matches!(CMatrix::zeros(65).expm(), Err(Error::Dimension(_))));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = CMatrix::identity(2);
        let b = CMatrix::identity(3);
        assert!(matches!(a.try_mul(&b), Err(Error::Dimension(_))));
        assert!(matches!(a.try_add(&b), Err(Error::Dimension(_))));
    }

    #[test]
    fn spin_half_operators_are_half_paulis() {
        let (sx, sy, sz) = spin_operators(1);
        // basis ordered m = -1/2, +1/2, so S_z = diag(-1/2, 1/2).
        assert!((sz[(0, 0)].re + 0.5).abs() < 1e-15);
        assert!(sx.max_abs_diff(&sigma_x().scale(C64::new(0.5, 0.0))) < 1e-15);
        let comm = sx.commutator(&sy);
        assert!(comm.max_abs_diff(&sz.scale(I)) < 1e-14);
    }

    #[test]
    fn spin_casimir() {
        for two_s in 1..6 {
            let (sx, sy, sz) = spin_operators(two_s);
            let s = two_s as f64 / 2.0;
            let c = &(&(&sx * &sx) + &(&sy * &sy)) + &(&sz * &sz);
            let expect = CMatrix::identity(two_s + 1).scale(C64::new(s * (s + 1.0), 0.0));
            assert!(c.max_abs_diff(&expect) < 1e-12);
        }
    }

    #[test]
    fn min_eigenvalue_of_projector() {
        let p = CMatrix::pure_state(&[ONE, ONE]);
        assert!(p.min_eigenvalue().abs() < 1e-14);
        assert!((p.hermitian_eigenvalues()[1] - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn adjoint_is_an_involution(seed in any::<u64>(), dim in 1usize..8) {
            let a = random_matrix(dim, seed);
            prop_assert_eq!(a.adjoint().adjoint(), a);
        }

        #[test]
        fn trace_is_cyclic(seed in any::<u64>(), dim in 1usize..=16) {
            let a = random_matrix(dim, seed);
            let b = random_matrix(dim, seed.wrapping_add(1));
            let ab = (&a * &b).trace();
            let ba = (&b * &a).trace();
            prop_assert!((ab - ba).norm() < 1e-12);
            prop_assert!((a.trace_product(&b) - ab).norm() < 1e-12);
        }

        #[test]
        fn expm_of_antihermitian_is_unitary(seed in any::<u64>(), dim in 1usize..6) {
            let a = random_matrix(dim, seed);
            let h = &a + &a.adjoint();
            let u = h.scale(C64::new(0.0, -0.7)).expm().unwrap();
            let uu = &u * &u.adjoint();
            prop_assert!(uu.max_abs_diff(&CMatrix::identity(dim)) < 1e-12);
        }
    }
}
