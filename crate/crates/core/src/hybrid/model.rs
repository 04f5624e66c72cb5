use crate::classical::ClassicalModel;
use crate::error::{Error, Result};
use crate::grid::ClassicalGrid;
use crate::linalg::CMatrix;
use crate::record::check_spd;

/// An operator that is either the same at every grid point or tabulated per point.
#[derive(Clone, Debug, PartialEq)]
pub enum PointOp {
    Shared(CMatrix),
    PerPoint(Vec<CMatrix>),
}

impl PointOp {
    #[inline]
    pub fn at(&self, i: usize) -> &CMatrix {
        match self {
            PointOp::Shared(m) => m,
            PointOp::PerPoint(v) => &v[i],
        }
    }

    pub fn tabulate(grid: &ClassicalGrid, f: impl Fn(&[f64]) -> CMatrix) -> Self {
        PointOp::PerPoint((0..grid.len()).map(|i| f(&grid.point(i))).collect())
    }

    pub(crate) fn map(&self, mut f: impl FnMut(&CMatrix) -> CMatrix) -> Self {
        match self {
            PointOp::Shared(m) => PointOp::Shared(f(m)),
            PointOp::PerPoint(v) => PointOp::PerPoint(v.iter().map(&mut f).collect()),
        }
    }

    fn iter_all(&self) -> Box<dyn Iterator<Item = &CMatrix> + '_> {
        match self {
            PointOp::Shared(m) => Box::new(std::iter::once(m)),
            PointOp::PerPoint(v) => Box::new(v.iter()),
        }
    }

    fn check(&self, grid: &ClassicalGrid, dim: usize, what: &str) -> Result<()> {
        if let PointOp::PerPoint(v) = self {
            if v.len() != grid.len() {
                return Err(Error::Dimension(format!("{what}: one matrix per grid point is required")));
            }
        }
        if self.iter_all().any(|m| m.dim() != dim) {
            return Err(Error::Dimension(format!("{what}: quantum dimension must be {dim}")));
        }
        if self.iter_all().any(|m| !m.is_finite()) {
            return Err(Error::Model(format!("{what}: non-finite entries")));
        }
        Ok(())
    }
}

/// Poisson channel: L̂_μ(x) and the precomputed L̂†L̂.
#[derive(Clone, Debug)]
pub struct JumpChannel {
    pub name: String,
    pub op: PointOp,
    pub(crate) effect: PointOp,
}

/// Gaussian channels Ĉ_j(x) with covariance rate R.
#[derive(Clone, Debug)]
pub struct GaussianChannels {
    pub names: Vec<String>,
    pub ops: Vec<PointOp>,
    pub r: Vec<Vec<f64>>,
    pub(crate) rinv: Vec<Vec<f64>>,
    pub(crate) adjoints: Vec<PointOp>,
}

/// No-click and click Kraus operators of one channel at one grid point.
#[derive(Clone, Debug)]
pub struct MeasurementOperatorSet {
    pub no_click: CMatrix,
    pub click: CMatrix,
}

impl MeasurementOperatorSet {
    pub fn new(l: &CMatrix, dt: f64) -> Self {
        let mut no_click = CMatrix::identity(l.dim());
        no_click.axpy_real(-0.5 * dt, &(&l.adjoint() * l));
        let mut click = l.clone();
        click.scale_real_mut(dt.sqrt());
        Self { no_click, click }
    }

    /// max |Σ M†M − 1| entrywise.
    pub fn completeness_deviation(&self) -> f64 {
        let s = &(&self.no_click.adjoint() * &self.no_click) + &(&self.click.adjoint() * &self.click);
        s.max_abs_diff(&CMatrix::identity(s.dim()))
    }
}

/// Hybrid model: classical generator, quantum Hamiltonian H(x) = H₀ + H_I(x),
/// fixed Lindblad dissipators, Poisson channels L̂_μ(x) and Gaussian channels Ĉ_j(x).
#[derive(Clone, Debug)]
pub struct HybridModel {
    classical: ClassicalModel,
    dim: usize,
    hamiltonian: PointOp,
    dissipators: Vec<CMatrix>,
    channels: Vec<JumpChannel>,
    gaussian: Option<GaussianChannels>,
}

impl HybridModel {
    pub fn builder(classical: ClassicalModel, dim: usize) -> HybridModelBuilder {
        HybridModelBuilder {
            classical,
            dim,
            h0: None,
            coupling: None,
            dissipators: Vec::new(),
            channels: Vec::new(),
            gaussian_names: Vec::new(),
            gaussian_ops: Vec::new(),
            r: None,
        }
    }

    pub fn classical(&self) -> &ClassicalModel {
        &self.classical
    }

    pub fn grid(&self) -> &ClassicalGrid {
        self.classical.grid()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &PointOp {
        &self.hamiltonian
    }

    pub fn dissipators(&self) -> &[CMatrix] {
        &self.dissipators
    }

    pub fn channels(&self) -> &[JumpChannel] {
        &self.channels
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }

    pub fn gaussian(&self) -> Option<&GaussianChannels> {
        self.gaussian.as_ref()
    }

    pub fn num_gaussian(&self) -> usize {
        self.gaussian.as_ref().map_or(0, |g| g.names.len())
    }

    pub fn measurement_operators(&self, channel: usize, point: usize, dt: f64) -> MeasurementOperatorSet {
        MeasurementOperatorSet::new(self.channels[channel].op.at(point), dt)
    }

    /// Largest eigenvalue of L̂†L̂ over all points, per channel.
    pub fn max_intensity(&self, channel: usize) -> f64 {
        self.channels[channel]
            .effect
            .iter_all()
            .map(|m| m.hermitian_eigenvalues().into_iter().fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }
}

pub struct HybridModelBuilder {
    classical: ClassicalModel,
    dim: usize,
    h0: Option<CMatrix>,
    coupling: Option<PointOp>,
    dissipators: Vec<CMatrix>,
    channels: Vec<(String, PointOp)>,
    gaussian_names: Vec<String>,
    gaussian_ops: Vec<PointOp>,
    r: Option<Vec<Vec<f64>>>,
}

impl HybridModelBuilder {
    /// Shared Hamiltonian H₀ (ħ = 1).
    pub fn hamiltonian(mut self, h: CMatrix) -> Self {
        self.h0 = Some(h);
        self
    }

    /// Classically conditioned Hamiltonian H_I(x).
    pub fn coupling(mut self, f: impl Fn(&[f64]) -> CMatrix) -> Self {
        self.coupling = Some(PointOp::tabulate(self.classical.grid(), f));
        self
    }

    pub fn dissipator(mut self, d: CMatrix) -> Self {
        self.dissipators.push(d);
        self
    }

    pub fn jump_channel(mut self, name: impl Into<String>, op: PointOp) -> Self {
        self.channels.push((name.into(), op));
        self
    }

    pub fn jump_channel_fn(self, name: impl Into<String>, f: impl Fn(&[f64]) -> CMatrix) -> Self {
        let op = PointOp::tabulate(self.classical.grid(), f);
        self.jump_channel(name, op)
    }

    pub fn gaussian_channel(mut self, name: impl Into<String>, op: PointOp) -> Self {
        self.gaussian_names.push(name.into());
        self.gaussian_ops.push(op);
        self
    }

    /// Covariance-rate matrix R of the Gaussian channels.
    pub fn noise_covariance(mut self, r: Vec<Vec<f64>>) -> Self {
        self.r = Some(r);
        self
    }

    pub fn build(self) -> Result<HybridModel> {
        let grid = self.classical.grid().clone();
        let dim = self.dim;
        if dim == 0 {
            return Err(Error::InvalidArgument("quantum dimension must be at least 1".into()));
        }
        if self.classical.num_channels() != 0 {
            return Err(Error::Model(
                "hybrid observation channels are quantum operators; the classical part must have none".into(),
            ));
        }
        let h0 = self.h0.unwrap_or_else(|| CMatrix::zeros(dim));
        PointOp::Shared(h0.clone()).check(&grid, dim, "hamiltonian")?;
        let hamiltonian = match self.coupling {
            None => PointOp::Shared(h0),
            Some(c) => {
                c.check(&grid, dim, "coupling")?;
                c.map(|hi| &h0 + hi)
            }
        };
        if hamiltonian.iter_all().any(|h| h.hermiticity_deviation() > 1e-10) {
            return Err(Error::Model("Hamiltonian is not Hermitian".into()));
        }
        for d in &self.dissipators {
            PointOp::Shared(d.clone()).check(&grid, dim, "dissipator")?;
        }
        let mut channels = Vec::new();
        for (name, op) in self.channels {
            op.check(&grid, dim, &name)?;
            let effect = op.map(|l| &l.adjoint() * l);
            channels.push(JumpChannel { name, op, effect });
        }
        let gaussian = if self.gaussian_ops.is_empty() {
            None
        } else {
            let m = self.gaussian_ops.len();
            let r = self
                .r
                .ok_or_else(|| Error::Model("Gaussian channels need a covariance R".into()))?;
            check_spd(&r, m)?;
            for (name, op) in self.gaussian_names.iter().zip(&self.gaussian_ops) {
                op.check(&grid, dim, name)?;
            }
            let rinv = nalgebra::DMatrix::from_fn(m, m, |i, j| r[i][j])
                .try_inverse()
                .ok_or_else(|| Error::Singular("R is singular".into()))?;
            let rinv = (0..m).map(|i| (0..m).map(|j| rinv[(i, j)]).collect()).collect();
            let adjoints = self.gaussian_ops.iter().map(|o| o.map(CMatrix::adjoint)).collect();
            Some(GaussianChannels {
                names: self.gaussian_names,
                ops: self.gaussian_ops,
                r,
                rinv,
                adjoints,
            })
        };
        Ok(HybridModel {
            classical: self.classical,
            dim,
            hamiltonian,
            dissipators: self.dissipators,
            channels,
            gaussian,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;
    use crate::linalg::ops;

    #[test]
    fn measurement_operators_are_complete_to_second_order() {
        let l = &ops::sigma_minus() + &ops::sigma_x().scale(0.3.into());
        for dt in [1e-2, 1e-3, 1e-4] {
            let set = MeasurementOperatorSet::new(&l, dt);
            let ltl = (&l.adjoint() * &l).max_abs();
            assert!(set.completeness_deviation() <= 2.0 * (ltl * dt).powi(2));
        }
    }

    #[test]
    fn non_hermitian_hamiltonian_is_rejected() {
        let g = ClassicalGrid::one_dim(Axis::new("x", 0.0, 1.0, 2).unwrap());
        let r = HybridModel::builder(ClassicalModel::trivial(g), 2)
            .hamiltonian(ops::sigma_minus())
            .build();
        assert!(matches!(r, Err(Error::Model(_))));
    }

    #[test]
    fn gaussian_channels_need_spd_r() {
        let g = ClassicalGrid::one_dim(Axis::new("x", 0.0, 1.0, 2).unwrap());
        let r = HybridModel::builder(ClassicalModel::trivial(g), 2)
            .gaussian_channel("h", PointOp::Shared(ops::sigma_z()))
            .noise_covariance(vec![vec![-1.0]])
            .build();
        assert!(r.is_err());
    }
}
