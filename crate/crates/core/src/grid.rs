//! Discretized classical state spaces and densities over them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One axis of a classical grid.
///
/// Bounded axes include both end points, so `spacing = (upper − lower)/(size − 1)`.
/// Periodic axes identify `upper` with `lower` and hold `size` points with
/// `spacing = (upper − lower)/size`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub size: usize,
    #[serde(default)]
    pub periodic: bool,
}

impl Axis {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, size: usize) -> Result<Self> {
        Self::build(name.into(), lower, upper, size, false)
    }

    pub fn periodic(name: impl Into<String>, lower: f64, upper: f64, size: usize) -> Result<Self> {
        Self::build(name.into(), lower, upper, size, true)
    }

    fn build(name: String, lower: f64, upper: f64, size: usize, periodic: bool) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidArgument(format!(
                "axis '{name}' needs at least 2 points, got {size}"
            )));
        }
        if !(lower.is_finite() && upper.is_finite() && upper > lower) {
            return Err(Error::InvalidArgument(format!(
                "axis '{name}' needs finite bounds with upper > lower"
            )));
        }
        Ok(Self {
            name,
            lower,
            upper,
            size,
            periodic,
        })
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.upper - self.lower) / self.size as f64
        } else {
            (self.upper - self.lower) / (self.size - 1) as f64
        }
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        self.lower + i as f64 * self.spacing()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.size).map(|i| self.coordinate(i)).collect()
    }
}

/// Tensor-product grid; flat indices are row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalGrid {
    axes: Vec<Axis>,
}

impl ClassicalGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("grid needs at least one axis".into()));
        }
        Ok(Self { axes })
    }

    pub fn one_dim(axis: Axis) -> Self {
        Self { axes: vec![axis] }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.size).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// ∏Δx, the weight of one grid point in ∫dx.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    /// Distance in flat index between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.axes[axis + 1..].iter().map(|a| a.size).product()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.axes.len());
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.size + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            idx[k] = flat % a.size;
            flat /= a.size;
        }
        idx
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.coordinate(i))
            .collect()
    }

    /// Index along `axis` of the given flat index.
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.axes[axis].size
    }

    /// Flat index of the neighbour at `offset` along `axis`, or `None` when it
    /// leaves a bounded axis.
    pub fn neighbour(&self, flat: usize, axis: usize, offset: isize) -> Option<usize> {
        let a = &self.axes[axis];
        let i = self.axis_index(flat, axis) as isize;
        let size = a.size as isize;
        let j = i + offset;
        let j = if a.periodic {
            j.rem_euclid(size)
        } else if (0..size).contains(&j) {
            j
        } else {
            return None;
        };
        let stride = self.stride(axis) as isize;
        Some((flat as isize + (j - i) * stride) as usize)
    }
}

/// Nonnegative values over a grid: a probability density when `normalized`,
/// otherwise an unnormalized density or likelihood.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub grid: ClassicalGrid,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl DensityGrid {
    pub fn new(grid: ClassicalGrid, values: Vec<f64>, normalized: bool) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "grid has {} points, got {} values",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "density values must be finite and nonnegative".into(),
            ));
        }
        let mut d = Self {
            grid,
            values,
            normalized: false,
        };
        if normalized {
            d.normalize()?;
        }
        Ok(d)
    }

    /// Unnormalized constant function (the terminal condition of a retrodictive sweep).
    pub fn ones(grid: ClassicalGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![1.0; n],
            normalized: false,
        }
    }

    pub fn uniform(grid: ClassicalGrid) -> Self {
        let mut d = Self::ones(grid);
        d.normalize().expect("uniform density has positive mass");
        d
    }

    pub fn from_fn(grid: ClassicalGrid, f: impl Fn(&[f64]) -> f64, normalized: bool) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::new(grid, values, normalized)
    }

    /// ∫dx values.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn normalize(&mut self) -> Result<f64> {
        let mass = self.mass();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Numerical(format!("cannot normalize a density of mass {mass}")));
        }
        for v in &mut self.values {
            *v /= mass;
        }
        self.normalized = true;
        Ok(mass)
    }

    pub fn normalized_copy(&self) -> Result<Self> {
        let mut d = self.clone();
        d.normalize()?;
        Ok(d)
    }

    /// Marginal density along one axis (integrated over the others).
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let size = self.grid.axes()[axis].size;
        let w = self.grid.cell_volume() / self.grid.axes()[axis].spacing();
        let mut out = vec![0.0; size];
        for (i, &v) in self.values.iter().enumerate() {
            out[self.grid.axis_index(i, axis)] += v * w;
        }
        out
    }

    /// Mean and variance of one coordinate under the normalized density.
    pub fn moments(&self, axis: usize) -> (f64, f64) {
        let a = &self.grid.axes()[axis];
        let marg = self.marginal(axis);
        let total: f64 = marg.iter().sum::<f64>() * a.spacing();
        let mut mean = 0.0;
        for (i, &p) in marg.iter().enumerate() {
            mean += a.coordinate(i) * p;
        }
        mean *= a.spacing() / total;
        let mut var = 0.0;
        for (i, &p) in marg.iter().enumerate() {
            var += (a.coordinate(i) - mean).powi(2) * p;
        }
        var *= a.spacing() / total;
        (mean, var)
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Mass in the outermost cells of bounded axes; a truncation diagnostic.
    pub fn boundary_mass(&self) -> f64 {
        let vol = self.grid.cell_volume();
        let mut m = 0.0;
        for (i, &v) in self.values.iter().enumerate() {
            let on_edge = self.grid.axes().iter().enumerate().any(|(k, a)| {
                let j = self.grid.axis_index(i, k);
                !a.periodic && (j == 0 || j + 1 == a.size)
            });
            if on_edge {
                m += v * vol;
            }
        }
        m
    }
}
