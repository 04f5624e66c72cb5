//! Measurement records: per-step Poisson counts and optional Gaussian increments.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Above this value of λ·dt a warning is logged.
pub const RATE_DT_WARN: f64 = 0.1;

/// A discretized measurement record on `[t0, t_end)` with fixed step `dt`.
///
/// `counts[k][μ]` is the click indicator dN_μ for step k, covering
/// `[t0 + k·dt, t0 + (k+1)·dt)`. `gaussians[k][j]` is the increment dy_j for the
/// same step and is empty when no Gaussian channel is configured.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub channels: Vec<String>,
    pub counts: Vec<Vec<u8>>,
    pub gaussian_channels: Vec<String>,
    pub gaussians: Vec<Vec<f64>>,
    /// Covariance-rate matrix of the Gaussian channels.
    pub r: Option<Vec<Vec<f64>>>,
    /// Process-noise rate matrix of the simulated truth, kept for provenance.
    pub q: Option<Vec<Vec<f64>>>,
    pub seed: Option<u64>,
}

/// JSON header written next to the CSV body.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RecordHeader {
    pub t0: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    pub channels: Vec<String>,
    #[serde(default)]
    pub gaussian_channels: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, rename = "R")]
    pub r: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "Q")]
    pub q: Option<Vec<Vec<f64>>>,
}

pub fn step_count(t0: f64, t_end: f64, dt: f64) -> usize {
    ((t_end - t0) / dt).round() as usize
}

impl MeasurementRecord {
    /// A record with no clicks on any channel.
    pub fn silent(t0: f64, dt: f64, steps: usize, channels: Vec<String>) -> Self {
        let k = channels.len();
        Self {
            t0,
            t_end: t0 + steps as f64 * dt,
            dt,
            channels,
            counts: vec![vec![0; k]; steps],
            gaussian_channels: Vec::new(),
            gaussians: Vec::new(),
            r: None,
            q: None,
            seed: None,
        }
    }

    /// Builds a Poisson-only record from explicit click indicators.
    pub fn from_counts(t0: f64, dt: f64, channels: Vec<String>, counts: Vec<Vec<u8>>) -> Result<Self> {
        let rec = Self {
            t0,
            t_end: t0 + counts.len() as f64 * dt,
            dt,
            channels,
            counts,
            gaussian_channels: Vec::new(),
            gaussians: Vec::new(),
            r: None,
            q: None,
            seed: None,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn steps(&self) -> usize {
        self.counts.len()
    }

    pub fn time(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    pub fn has_gaussian(&self) -> bool {
        !self.gaussian_channels.is_empty()
    }

    /// Gaussian increments of step k, or an empty slice.
    pub fn dy(&self, step: usize) -> &[f64] {
        if self.gaussians.is_empty() {
            &[]
        } else {
            &self.gaussians[step]
        }
    }

    pub fn total_counts(&self, channel: usize) -> u64 {
        self.counts.iter().map(|c| c[channel] as u64).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument("record dt must be positive".into()));
        }
        let n = step_count(self.t0, self.t_end, self.dt);
        if n != self.counts.len() {
            return Err(Error::InvalidArgument(format!(
                "record spans {n} steps but holds {} count rows",
                self.counts.len()
            )));
        }
        for row in &self.counts {
            if row.len() != self.channels.len() {
                return Err(Error::Dimension("count row width != channel count".into()));
            }
            if row.iter().any(|&c| c > 1) {
                return Err(Error::InvalidArgument("counts must be 0 or 1 per step".into()));
            }
        }
        if self.has_gaussian() {
            if self.gaussians.len() != n {
                return Err(Error::Dimension("gaussian rows != step count".into()));
            }
            let m = self.gaussian_channels.len();
            if self.gaussians.iter().any(|r| r.len() != m || r.iter().any(|v| !v.is_finite())) {
                return Err(Error::InvalidArgument("gaussian rows must be finite with one entry per channel".into()));
            }
            match &self.r {
                Some(r) => check_spd(r, m)?,
                None => return Err(Error::InvalidArgument("gaussian channels need R".into())),
            }
        }
        Ok(())
    }

    pub fn header(&self) -> RecordHeader {
        RecordHeader {
            t0: self.t0,
            t_end: self.t_end,
            dt: self.dt,
            channels: self.channels.clone(),
            gaussian_channels: self.gaussian_channels.clone(),
            seed: self.seed,
            r: self.r.clone(),
            q: self.q.clone(),
        }
    }

    /// CSV body with columns `t, dN_1..dN_k, dy_1..dy_m`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut head = vec!["t".to_string()];
        head.extend(self.channels.iter().map(|c| format!("dN_{c}")));
        head.extend(self.gaussian_channels.iter().map(|c| format!("dy_{c}")));
        wr.write_record(&head)?;
        for k in 0..self.steps() {
            let mut row = vec![format!("{}", self.time(k))];
            row.extend(self.counts[k].iter().map(|c| c.to_string()));
            row.extend(self.dy(k).iter().map(|v| format!("{v:e}")));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut f = File::create(dir.join(format!("{stem}.csv")))?;
        self.write_csv(&mut f)?;
        let h = File::create(dir.join(format!("{stem}.json")))?;
        serde_json::to_writer_pretty(h, &self.header())?;
        Ok(())
    }

    pub fn read_files(dir: &Path, stem: &str) -> Result<Self> {
        let header: RecordHeader =
            serde_json::from_reader(BufReader::new(File::open(dir.join(format!("{stem}.json")))?))?;
        let body = File::open(dir.join(format!("{stem}.csv")))?;
        Self::from_csv(header, body)
    }

    pub fn from_csv<R: Read>(header: RecordHeader, body: R) -> Result<Self> {
        let k = header.channels.len();
        let m = header.gaussian_channels.len();
        let mut rd = csv::Reader::from_reader(body);
        let mut counts = Vec::new();
        let mut gaussians = Vec::new();
        for row in rd.records() {
            let row = row?;
            if row.len() != 1 + k + m {
                return Err(Error::Dimension(format!(
                    "csv row has {} columns, expected {}",
                    row.len(),
                    1 + k + m
                )));
            }
            let parse_err = |e: std::num::ParseIntError| Error::InvalidArgument(e.to_string());
            let c = (1..=k)
                .map(|i| row[i].parse::<u8>().map_err(parse_err))
                .collect::<Result<Vec<u8>>>()?;
            counts.push(c);
            if m > 0 {
                let g = (1 + k..1 + k + m)
                    .map(|i| row[i].parse::<f64>().map_err(|e| Error::InvalidArgument(e.to_string())))
                    .collect::<Result<Vec<f64>>>()?;
                gaussians.push(g);
            }
        }
        let rec = Self {
            t0: header.t0,
            t_end: header.t_end,
            dt: header.dt,
            channels: header.channels,
            counts,
            gaussian_channels: header.gaussian_channels,
            gaussians,
            r: header.r,
            q: header.q,
            seed: header.seed,
        };
        rec.validate()?;
        Ok(rec)
    }
}

/// Checks that `r` is an `m×m` symmetric positive-definite matrix.
pub fn check_spd(r: &[Vec<f64>], m: usize) -> Result<()> {
    if r.len() != m || r.iter().any(|row| row.len() != m) {
        return Err(Error::Dimension(format!("R must be {m}x{m}")));
    }
    for i in 0..m {
        for j in 0..m {
            if (r[i][j] - r[j][i]).abs() > 1e-12 * (1.0 + r[i][j].abs()) {
                return Err(Error::Singular("R is not symmetric".into()));
            }
        }
    }
    let mat = nalgebra::DMatrix::from_fn(m, m, |i, j| r[i][j]);
    if mat.cholesky().is_none() {
        return Err(Error::Singular("R is not positive definite".into()));
    }
    Ok(())
}

/// Draws per-step clicks with probability λ_μ·dt.
///
/// `intensities[k][μ]` is λ_μ(x_{t_k}, t_k) evaluated along the trajectory.
pub fn sample_poisson_record(
    intensities: &[Vec<f64>],
    channels: Vec<String>,
    t0: f64,
    dt: f64,
    rng: &mut RngStream,
) -> Result<MeasurementRecord> {
    let k = channels.len();
    let mut counts = Vec::with_capacity(intensities.len());
    let mut warned = false;
    for (step, rates) in intensities.iter().enumerate() {
        if rates.len() != k {
            return Err(Error::Dimension("intensity row width != channel count".into()));
        }
        let mut row = Vec::with_capacity(k);
        for (mu, &lambda) in rates.iter().enumerate() {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(Error::Model(format!(
                    "negative or non-finite intensity {lambda} on channel {mu} at step {step}"
                )));
            }
            let p = lambda * dt;
            if p > 1.0 {
                return Err(Error::StepSize(format!(
                    "lambda*dt = {p} > 1 on channel {mu} at step {step}"
                )));
            }
            if p > RATE_DT_WARN && !warned {
                log::warn!("lambda*dt = {p:.3} exceeds {RATE_DT_WARN}; the per-step click model is coarse");
                warned = true;
            }
            row.push(rng.bernoulli(p) as u8);
        }
        counts.push(row);
    }
    let mut rec = MeasurementRecord::from_counts(t0, dt, channels, counts)?;
    rec.seed = Some(rng.seed());
    Ok(rec)
}

/// Adds Gaussian increments dy = mean·dt + noise with covariance R·dt.
///
/// `means[k][j]` is the conditional drift of channel j at step k, i.e.
/// ½⟨Ĉ_j + Ĉ_j†⟩ along the simulated truth.
pub fn add_gaussian_channels(
    record: &mut MeasurementRecord,
    names: Vec<String>,
    means: &[Vec<f64>],
    r: Vec<Vec<f64>>,
    rng: &mut RngStream,
) -> Result<()> {
    let m = names.len();
    check_spd(&r, m)?;
    if means.len() != record.steps() {
        return Err(Error::Dimension("one mean row per step is required".into()));
    }
    let chol = nalgebra::DMatrix::from_fn(m, m, |i, j| r[i][j])
        .cholesky()
        .ok_or_else(|| Error::Singular("R is not positive definite".into()))?
        .l();
    let sdt = record.dt.sqrt();
    let mut out = Vec::with_capacity(means.len());
    for row in means {
        if row.len() != m {
            return Err(Error::Dimension("mean row width != channel count".into()));
        }
        let xi: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        let dy = (0..m)
            .map(|i| row[i] * record.dt + sdt * (0..=i).map(|j| chol[(i, j)] * xi[j]).sum::<f64>())
            .collect();
        out.push(dy);
    }
    record.gaussian_channels = names;
    record.gaussians = out;
    record.r = Some(r);
    record.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (1..=k).map(|i| i.to_string()).collect()
    }

    #[test]
    fn zero_intensity_never_clicks() {
        let mut rng = RngStream::new(1, 0);
        let rec = sample_poisson_record(&vec![vec![0.0, 0.0]; 5000], names(2), 0.0, 0.01, &mut rng).unwrap();
        assert_eq!(rec.total_counts(0) + rec.total_counts(1), 0);
    }

    #[test]
    fn rate_dt_above_one_is_a_step_size_error() {
        let mut rng = RngStream::new(1, 0);
        let mut rates = vec![vec![1.0]; 10];
        rates[4][0] = 1500.0;
        let err = sample_poisson_record(&rates, names(1), 0.0, 0.001, &mut rng).unwrap_err();
        assert!(matches!(err, Error::StepSize(_)));
    }

    #[test]
    fn negative_intensity_is_a_model_error() {
        let mut rng = RngStream::new(1, 0);
        let err = sample_poisson_record(&[vec![-1.0]], names(1), 0.0, 0.001, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
    }

    #[test]
    fn click_frequency_matches_rate() {
        // ≥ 1e5 steps, within 3 standard errors of λ·dt.
        let (lambda, dt, n) = (2.0, 0.01, 200_000);
        let mut rng = RngStream::new(11, 0);
        let rec = sample_poisson_record(&vec![vec![lambda]; n], names(1), 0.0, dt, &mut rng).unwrap();
        let p = lambda * dt;
        let freq = rec.total_counts(0) as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "freq {freq} vs {p} (se {se})");
    }

    #[test]
    fn same_seed_gives_identical_csv() {
        let make = || {
            let mut rng = RngStream::new(5, 2);
            let mut rec = sample_poisson_record(&vec![vec![3.0, 1.0]; 1000], names(2), 0.0, 0.01, &mut rng).unwrap();
            add_gaussian_channels(&mut rec, vec!["x".into()], &vec![vec![0.3]; 1000], vec![vec![2.0]], &mut rng).unwrap();
            let mut buf = Vec::new();
            rec.write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = RngStream::new(9, 0);
        let mut rec = sample_poisson_record(&vec![vec![5.0]; 200], names(1), 0.5, 0.01, &mut rng).unwrap();
        add_gaussian_channels(&mut rec, vec!["h".into()], &vec![vec![-1.0]; 200], vec![vec![0.5]], &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        rec.write_files(dir.path(), "record").unwrap();
        let back = MeasurementRecord::read_files(dir.path(), "record").unwrap();
        assert_eq!(back.counts, rec.counts);
        assert_eq!(back.steps(), 200);
        for (a, b) in back.gaussians.iter().zip(&rec.gaussians) {
            assert!((a[0] - b[0]).abs() <= 1e-15 * b[0].abs().max(1.0));
        }
    }

    #[test]
    fn non_spd_r_is_rejected() {
        assert!(check_spd(&[vec![1.0, 2.0], vec![2.0, 1.0]], 2).is_err());
        assert!(check_spd(&[vec![2.0, 1.0], vec![1.0, 2.0]], 2).is_ok());
    }
}
