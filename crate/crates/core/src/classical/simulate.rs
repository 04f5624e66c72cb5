//! Truth paths of the discretized classical process.

use super::ClassicalModel;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Draws a grid path x_0..x_n from the Markov chain I + dt·G, starting at flat
/// index `start`.
pub fn sample_path(model: &ClassicalModel, start: usize, steps: usize, dt: f64, rng: &mut RngStream) -> Result<Vec<usize>> {
    let n = model.grid().len();
    if start >= n {
        return Err(Error::InvalidArgument(format!("start index {start} outside a grid of {n} points")));
    }
    let gen = model.generator();
    gen.check_step(dt)?;
    // Cumulative transition probabilities out of each point.
    let dense = gen.to_dense();
    let cumulative: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|from| {
            let mut acc = 0.0;
            (0..n)
                .filter_map(|to| {
                    let p = dt * dense[to][from] + if to == from { 1.0 } else { 0.0 };
                    (p > 0.0).then(|| {
                        acc += p;
                        (to, acc)
                    })
                })
                .collect()
        })
        .collect();
    let mut path = Vec::with_capacity(steps + 1);
    let mut x = start;
    path.push(x);
    for _ in 0..steps {
        let row = &cumulative[x];
        let u = rng.uniform() * row.last().map_or(1.0, |r| r.1);
        x = row.iter().find(|r| u < r.1).map_or(x, |r| r.0);
        path.push(x);
    }
    Ok(path)
}

/// Intensities λ_μ along a grid path, one row per step (the last point is unused).
pub fn path_intensities(model: &ClassicalModel, path: &[usize]) -> Vec<Vec<f64>> {
    path[..path.len().saturating_sub(1)]
        .iter()
        .map(|&i| (0..model.num_channels()).map(|mu| model.intensity(mu)[i]).collect())
        .collect()
}
