use serde::Serialize;

use super::generator::Generator;
use crate::error::{Error, Result};
use crate::grid::ClassicalGrid;

/// Discretization of the first-derivative drift term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftScheme {
    /// First-order upwind everywhere.
    Upwind,
    /// Central differences where |A|Δx ≤ B, upwind elsewhere.
    #[default]
    Hybrid,
}

/// A tabulated jump kernel.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum JumpKernel {
    /// `rates[to][from]`, the rate of jumping from grid point `from` to `to`.
    Dense(Vec<Vec<f64>>),
    /// Translation along one axis: from every point, jumps by `offset` cells
    /// happen at rate `rate · weight`. Periodic axes wrap; bounded axes drop
    /// jumps that would leave the grid.
    Axis {
        axis: usize,
        rate: f64,
        weights: Vec<(isize, f64)>,
    },
}

/// A classical Markov model on a grid: drift, diagonal diffusion, jumps, and
/// Poisson observation intensities, all tabulated at the grid points.
#[derive(Clone, Debug, Serialize)]
pub struct ClassicalModel {
    grid: ClassicalGrid,
    drift: Vec<Vec<f64>>,
    diffusion: Vec<Vec<f64>>,
    jumps: Vec<JumpKernel>,
    channels: Vec<String>,
    intensities: Vec<Vec<f64>>,
    scheme: DriftScheme,
    #[serde(skip)]
    generator: Generator,
}

impl ClassicalModel {
    pub fn builder(grid: ClassicalGrid) -> ClassicalModelBuilder {
        ClassicalModelBuilder::new(grid)
    }

    /// The model with a zero generator and no channels.
    pub fn trivial(grid: ClassicalGrid) -> Self {
        Self::builder(grid).build().expect("an empty model is valid")
    }

    pub fn grid(&self) -> &ClassicalGrid {
        &self.grid
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// λ_μ at every grid point.
    pub fn intensity(&self, channel: usize) -> &[f64] {
        &self.intensities[channel]
    }

    pub fn drift(&self, axis: usize) -> &[f64] {
        &self.drift[axis]
    }

    pub fn diffusion(&self, axis: usize) -> &[f64] {
        &self.diffusion[axis]
    }

    pub fn scheme(&self) -> DriftScheme {
        self.scheme
    }

    /// Same dynamics with a different set of observation channels.
    pub fn with_channels(&self, channels: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut m = self.clone();
        m.channels = channels.iter().map(|(n, _)| n.clone()).collect();
        m.intensities = channels.into_iter().map(|(_, v)| v).collect();
        m.validate_intensities()?;
        Ok(m)
    }

    fn validate_intensities(&self) -> Result<()> {
        for (name, lam) in self.channels.iter().zip(&self.intensities) {
            if lam.len() != self.grid.len() {
                return Err(Error::Dimension(format!("intensity table for '{name}' has wrong length")));
            }
            if let Some(v) = lam.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::Model(format!("channel '{name}' has intensity {v}")));
            }
        }
        Ok(())
    }
}

pub struct ClassicalModelBuilder {
    grid: ClassicalGrid,
    drift: Vec<Vec<f64>>,
    diffusion: Vec<Vec<f64>>,
    jumps: Vec<JumpKernel>,
    channels: Vec<String>,
    intensities: Vec<Vec<f64>>,
    scheme: DriftScheme,
    errors: Vec<Error>,
}

impl ClassicalModelBuilder {
    fn new(grid: ClassicalGrid) -> Self {
        let (d, n) = (grid.ndim(), grid.len());
        Self {
            drift: vec![vec![0.0; n]; d],
            diffusion: vec![vec![0.0; n]; d],
            grid,
            jumps: Vec::new(),
            channels: Vec::new(),
            intensities: Vec::new(),
            scheme: DriftScheme::default(),
            errors: Vec::new(),
        }
    }

    fn tabulate(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.grid.len()).map(|i| f(&self.grid.point(i))).collect()
    }

    fn check_axis(&mut self, axis: usize) -> bool {
        if axis >= self.grid.ndim() {
            self.errors
                .push(Error::InvalidArgument(format!("axis {axis} out of range")));
            false
        } else {
            true
        }
    }

    /// A_axis(x).
    pub fn drift(mut self, axis: usize, f: impl Fn(&[f64]) -> f64) -> Self {
        if self.check_axis(axis) {
            self.drift[axis] = self.tabulate(f);
        }
        self
    }

    /// B_{axis,axis}(x).
    pub fn diffusion(mut self, axis: usize, f: impl Fn(&[f64]) -> f64) -> Self {
        if self.check_axis(axis) {
            self.diffusion[axis] = self.tabulate(f);
        }
        self
    }

    /// Full B(x); only diagonal matrices are accepted.
    pub fn diffusion_matrix(mut self, f: impl Fn(&[f64]) -> Vec<Vec<f64>>) -> Self {
        let d = self.grid.ndim();
        for i in 0..self.grid.len() {
            let b = f(&self.grid.point(i));
            if b.len() != d || b.iter().any(|r| r.len() != d) {
                self.errors.push(Error::Dimension(format!("B must be {d}x{d}")));
                return self;
            }
            for (r, row) in b.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    if r != c && v != 0.0 {
                        self.errors.push(Error::Model(
                            "off-diagonal diffusion is not supported".into(),
                        ));
                        return self;
                    }
                }
                self.diffusion[r][i] = row[r];
            }
        }
        self
    }

    pub fn jump(mut self, kernel: JumpKernel) -> Self {
        self.jumps.push(kernel);
        self
    }

    pub fn channel(mut self, name: impl Into<String>, f: impl Fn(&[f64]) -> f64) -> Self {
        let t = self.tabulate(f);
        self.channels.push(name.into());
        self.intensities.push(t);
        self
    }

    pub fn channel_table(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.channels.push(name.into());
        self.intensities.push(values);
        self
    }

    pub fn scheme(mut self, scheme: DriftScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn build(mut self) -> Result<ClassicalModel> {
        if let Some(e) = self.errors.pop() {
            return Err(e);
        }
        for (axis, b) in self.diffusion.iter().enumerate() {
            if let Some(v) = b.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::Model(format!("diffusion on axis {axis} is {v}")));
            }
        }
        for (axis, a) in self.drift.iter().enumerate() {
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model(format!("non-finite drift on axis {axis}")));
            }
        }
        let n = self.grid.len();
        for k in &self.jumps {
            match k {
                JumpKernel::Dense(r) => {
                    if r.len() != n || r.iter().any(|row| row.len() != n) {
                        return Err(Error::Dimension(format!("dense jump kernel must be {n}x{n}")));
                    }
                    if r.iter().flatten().any(|v| !(*v >= 0.0 && v.is_finite())) {
                        return Err(Error::Model("jump rates must be nonnegative".into()));
                    }
                }
                JumpKernel::Axis { axis, rate, weights } => {
                    if *axis >= self.grid.ndim() {
                        return Err(Error::InvalidArgument(format!("jump axis {axis} out of range")));
                    }
                    if !(*rate >= 0.0) || weights.iter().any(|(_, w)| !(*w >= 0.0 && w.is_finite())) {
                        return Err(Error::Model("jump kernel must be nonnegative".into()));
                    }
                }
            }
        }
        let generator = Generator::assemble(&self.grid, &self.drift, &self.diffusion, &self.jumps, self.scheme);
        let m = ClassicalModel {
            grid: self.grid,
            drift: self.drift,
            diffusion: self.diffusion,
            jumps: self.jumps,
            channels: self.channels,
            intensities: self.intensities,
            scheme: self.scheme,
            generator,
        };
        m.validate_intensities()?;
        Ok(m)
    }
}
