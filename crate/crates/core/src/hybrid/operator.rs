use serde::{Deserialize, Serialize};

use crate::classical::Accumulate;
use crate::error::{Error, Result};
use crate::grid::{ClassicalGrid, DensityGrid};
use crate::linalg::CMatrix;

/// One matrix per classical grid point: ρ̂(x), f̂(x) or ĝ(x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridOperator {
    pub grid: ClassicalGrid,
    pub mats: Vec<CMatrix>,
}

impl HybridOperator {
    pub fn new(grid: ClassicalGrid, mats: Vec<CMatrix>) -> Result<Self> {
        if mats.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "grid has {} points, got {} matrices",
                grid.len(),
                mats.len()
            )));
        }
        let dim = mats.first().map_or(0, CMatrix::dim);
        if mats.iter().any(|m| m.dim() != dim) {
            return Err(Error::Dimension("matrices of different dimension".into()));
        }
        if mats.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numerical("non-finite matrix entry".into()));
        }
        Ok(Self { grid, mats })
    }

    /// p(x)·ρ̂ with one quantum state shared by all grid points.
    pub fn product(p: &DensityGrid, state: &CMatrix) -> Self {
        let mats = p
            .values
            .iter()
            .map(|&v| {
                let mut m = state.clone();
                m.scale_real_mut(v);
                m
            })
            .collect();
        Self {
            grid: p.grid.clone(),
            mats,
        }
    }

    /// 1̂ at every grid point, the terminal condition of the effect equation.
    pub fn identity(grid: ClassicalGrid, dim: usize) -> Self {
        let n = grid.len();
        Self {
            grid,
            mats: vec![CMatrix::identity(dim); n],
        }
    }

    /// Diagonal matrices diag(d(x)) from per-point diagonals.
    pub fn from_diagonals(grid: ClassicalGrid, diags: &[Vec<f64>]) -> Result<Self> {
        Self::new(grid, diags.iter().map(|d| CMatrix::from_real_diag(d)).collect())
    }

    pub fn dim(&self) -> usize {
        self.mats.first().map_or(0, CMatrix::dim)
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    /// Re tr f̂(x) at every grid point.
    pub fn trace_density(&self) -> Vec<f64> {
        self.mats.iter().map(|m| m.trace().re).collect()
    }

    /// ∫dx tr f̂(x).
    pub fn hybrid_trace(&self) -> f64 {
        self.trace_density().iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Classical marginal as a density grid (negative roundoff clamped).
    pub fn marginal(&self) -> Result<DensityGrid> {
        let v = self.trace_density().into_iter().map(|t| t.max(0.0)).collect();
        DensityGrid::new(self.grid.clone(), v, false)
    }

    pub fn normalize(&mut self) -> Result<f64> {
        let t = self.hybrid_trace();
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Numerical(format!("cannot normalize hybrid trace {t}")));
        }
        self.scale(1.0 / t);
        Ok(t)
    }

    pub fn scale(&mut self, s: f64) {
        for m in &mut self.mats {
            m.scale_real_mut(s);
        }
    }

    pub fn symmetrize(&mut self) {
        for m in &mut self.mats {
            m.symmetrize();
        }
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        self.mats.iter().map(CMatrix::hermiticity_deviation).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.mats.iter().map(CMatrix::min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    /// max over x of |tr f̂(x)|, used to rescale effects.
    pub fn max_trace(&self) -> f64 {
        self.mats.iter().map(|m| m.trace().norm()).fold(0.0, f64::max)
    }

    /// ∫dx tr[Â f̂(x)] for an observable shared by all grid points.
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        self.mats.iter().map(|m| op.trace_product(m).re).sum::<f64>() * self.grid.cell_volume()
    }

    /// ∫dx tr[ĝ(x) f̂(x)].
    pub fn pairing(&self, g: &Self) -> f64 {
        self.mats
            .iter()
            .zip(&g.mats)
            .map(|(f, g)| g.trace_product(f).re)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Sum over grid points of the entrywise L¹ distance, weighted by ΔV.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| (a - b).entrywise_l1())
            .sum::<f64>()
            * self.grid.cell_volume()
    }
}

/// Lets the classical generator act entrywise on operator-valued densities.
impl Accumulate for HybridOperator {
    fn add_scaled(&mut self, a: f64, other: &Self) {
        for (m, o) in self.mats.iter_mut().zip(&other.mats) {
            m.axpy_real(a, o);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;
    use crate::linalg::ops;

    #[test]
    fn product_state_has_unit_trace() {
        let g = ClassicalGrid::one_dim(Axis::new("x", 0.0, 1.0, 11).unwrap());
        let p = DensityGrid::uniform(g);
        let rho = CMatrix::from_real_diag(&[0.25, 0.75]);
        let f = HybridOperator::product(&p, &rho);
        assert!((f.hybrid_trace() - 1.0).abs() < 1e-12);
        assert!((f.expectation(&ops::sigma_z()) + 0.5).abs() < 1e-12);
        let m = f.marginal().unwrap();
        assert!((m.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let g = ClassicalGrid::one_dim(Axis::new("x", 0.0, 1.0, 2).unwrap());
        assert!(HybridOperator::new(g, vec![CMatrix::identity(2), CMatrix::identity(3)]).is_err());
    }
}
