//! The discrete Chapman–Kolmogorov generator as a sparse Markov rate matrix.

use super::model::{DriftScheme, JumpKernel};
use crate::error::{Error, Result};
use crate::grid::ClassicalGrid;
use crate::linalg::CMatrix;

/// Values the generator can act on: plain densities, or operator-valued
/// densities where it acts entrywise.
pub trait Accumulate {
    /// self += a · other
    fn add_scaled(&mut self, a: f64, other: &Self);
}

impl Accumulate for f64 {
    fn add_scaled(&mut self, a: f64, other: &Self) {
        *self += a * other;
    }
}

impl Accumulate for CMatrix {
    fn add_scaled(&mut self, a: f64, other: &Self) {
        self.axpy_real(a, other);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Edge {
    from: u32,
    to: u32,
    rate: f64,
}

/// G with (G p)_i = Σ_j rate(j→i) p_j − out_rate(i) p_i.
///
/// Columns sum to zero, so the forward step conserves mass exactly and the
/// transpose annihilates constants.
#[derive(Clone, Debug, Default)]
pub struct Generator {
    n: usize,
    edges: Vec<Edge>,
    out_rate: Vec<f64>,
    courant: Vec<f64>,
    diffusion_number: Vec<f64>,
    max_out_rate: f64,
}

impl Generator {
    pub(crate) fn assemble(
        grid: &ClassicalGrid,
        drift: &[Vec<f64>],
        diffusion: &[Vec<f64>],
        jumps: &[JumpKernel],
        scheme: DriftScheme,
    ) -> Self {
        let n = grid.len();
        let d = grid.ndim();
        let mut edges = Vec::new();
        let mut courant = vec![0.0f64; d];
        let mut diffusion_number = vec![0.0f64; d];
        let push = |from: usize, to: Option<usize>, rate: f64, edges: &mut Vec<Edge>| {
            if let Some(to) = to {
                if rate > 0.0 && to != from {
                    edges.push(Edge {
                        from: from as u32,
                        to: to as u32,
                        rate,
                    });
                }
            }
        };
        for (axis, spec) in grid.axes().iter().enumerate() {
            let dx = spec.spacing();
            for i in 0..n {
                let a = drift[axis][i];
                let b = diffusion[axis][i];
                courant[axis] = courant[axis].max(a.abs() / dx);
                diffusion_number[axis] = diffusion_number[axis].max(b / (dx * dx));
                let half_diff = b / (2.0 * dx * dx);
                let central = scheme == DriftScheme::Hybrid && a.abs() * dx <= b;
                let (up, down) = if central {
                    (half_diff + a / (2.0 * dx), half_diff - a / (2.0 * dx))
                } else {
                    (half_diff + a.max(0.0) / dx, half_diff + (-a).max(0.0) / dx)
                };
                push(i, grid.neighbour(i, axis, 1), up, &mut edges);
                push(i, grid.neighbour(i, axis, -1), down, &mut edges);
            }
        }
        for k in jumps {
            match k {
                JumpKernel::Dense(rates) => {
                    for (to, row) in rates.iter().enumerate() {
                        for (from, &r) in row.iter().enumerate() {
                            push(from, Some(to), r, &mut edges);
                        }
                    }
                }
                JumpKernel::Axis { axis, rate, weights } => {
                    for i in 0..n {
                        for &(off, w) in weights {
                            if off != 0 {
                                push(i, grid.neighbour(i, *axis, off), rate * w, &mut edges);
                            }
                        }
                    }
                }
            }
        }
        edges.sort_by_key(|e| (e.to, e.from));
        let mut out_rate = vec![0.0; n];
        for e in &edges {
            out_rate[e.from as usize] += e.rate;
        }
        let max_out_rate = out_rate.iter().cloned().fold(0.0, f64::max);
        Self {
            n,
            edges,
            out_rate,
            courant,
            diffusion_number,
            max_out_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_zero(&self) -> bool {
        self.edges.is_empty()
    }

    /// Checks the explicit-step stability conditions for `dt`.
    pub fn check_step(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        for (axis, c) in self.courant.iter().enumerate() {
            if c * dt > 1.0 {
                return Err(Error::StepSize(format!(
                    "CFL violated on axis {axis}: |A|dt/dx = {}",
                    c * dt
                )));
            }
        }
        for (axis, c) in self.diffusion_number.iter().enumerate() {
            if c * dt > 0.5 {
                return Err(Error::StepSize(format!(
                    "CFL violated on axis {axis}: B dt/dx^2 = {}",
                    c * dt
                )));
            }
        }
        if self.max_out_rate * dt > 1.0 {
            return Err(Error::StepSize(format!(
                "total escape rate times dt = {} exceeds 1",
                self.max_out_rate * dt
            )));
        }
        Ok(())
    }

    /// out += dt · G x
    pub fn forward_into<T: Accumulate>(&self, x: &[T], dt: f64, out: &mut [T]) {
        for e in &self.edges {
            out[e.to as usize].add_scaled(dt * e.rate, &x[e.from as usize]);
        }
        for (i, &r) in self.out_rate.iter().enumerate() {
            if r != 0.0 {
                out[i].add_scaled(-dt * r, &x[i]);
            }
        }
    }

    /// out += dt · Gᵀ x
    pub fn adjoint_into<T: Accumulate>(&self, x: &[T], dt: f64, out: &mut [T]) {
        for e in &self.edges {
            out[e.from as usize].add_scaled(dt * e.rate, &x[e.to as usize]);
        }
        for (i, &r) in self.out_rate.iter().enumerate() {
            if r != 0.0 {
                out[i].add_scaled(-dt * r, &x[i]);
            }
        }
    }

    /// x + dt · G x
    pub fn step_forward<T: Accumulate + Clone>(&self, x: &[T], dt: f64) -> Vec<T> {
        let mut out = x.to_vec();
        self.forward_into(x, dt, &mut out);
        out
    }

    /// x + dt · Gᵀ x
    pub fn step_adjoint<T: Accumulate + Clone>(&self, x: &[T], dt: f64) -> Vec<T> {
        let mut out = x.to_vec();
        self.adjoint_into(x, dt, &mut out);
        out
    }

    /// Dense G, `g[to][from]`.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; self.n]; self.n];
        for e in &self.edges {
            g[e.to as usize][e.from as usize] += e.rate;
        }
        for (i, &r) in self.out_rate.iter().enumerate() {
            g[i][i] -= r;
        }
        g
    }
}
