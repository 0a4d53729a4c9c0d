//! Reproducible N-dimensional Brownian paths β = (β₁, …, β_N) on a uniform
//! time grid, with Brownian-bridge refinement for step-size studies.
//!
//! Reproducibility contract: a path is a pure function of
//! (seed, N, T, dt, refinement history). Draws come from ChaCha8 with the
//! stream id encoding the refinement level, so refining a path consumes
//! fresh randomness without disturbing the draws that produced the coarse
//! points — the pathwise convergence studies compare solvers along the
//! *same* noise realization at every resolution.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("invalid path parameter: {0}")]
    InvalidParameter(String),
    #[error("horizon {t} is not an integer multiple of the step {dt}")]
    NonIntegralStepCount { t: f64, dt: f64 },
    #[error("CSV parse error at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One realization of an N-dimensional Brownian motion sampled at
/// t_k = k·dt, k = 0..=steps, with β(0) = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub seed: u64,
    pub dt: f64,
    pub t_final: f64,
    /// number of completed halvings since the base sample (stream id salt)
    level: u32,
    /// values[i][k] = β_i(t_k); values[i][0] = 0
    values: Vec<Vec<f64>>,
}

fn integral_steps(t: f64, dt: f64) -> Result<usize, NoiseError> {
    let ratio = t / dt;
    let steps = ratio.round();
    if steps < 1.0 || (ratio - steps).abs() > 1e-9 * steps.max(1.0) {
        return Err(NoiseError::NonIntegralStepCount { t, dt });
    }
    Ok(steps as usize)
}

fn stream_rng(seed: u64, level: u32, factor: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // distinct stream per (refinement level, subdivision arity); the base
    // sample uses stream 0
    rng.set_stream(level as u64 | (factor << 32));
    rng
}

/// Draw a fresh path: independent N(0, dt) increments for every component
/// and step, in time-major order (a longer horizon with the same seed
/// extends the same draw sequence).
pub fn sample_path(seed: u64, dims: usize, t_final: f64, dt: f64) -> Result<BrownianPath, NoiseError> {
    if dims < 1 {
        return Err(NoiseError::InvalidParameter(format!(
            "need at least one component, got {dims}"
        )));
    }
    if !(dt.is_finite() && dt > 0.0 && t_final.is_finite() && t_final > 0.0) {
        return Err(NoiseError::InvalidParameter(format!(
            "horizon and step must be positive, got T={t_final}, dt={dt}"
        )));
    }
    let steps = integral_steps(t_final, dt)?;
    let mut rng = stream_rng(seed, 0, 0);
    let sqrt_dt = dt.sqrt();
    let mut values = vec![vec![0.0; steps + 1]; dims];
    for k in 0..steps {
        for component in values.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            component[k + 1] = component[k] + sqrt_dt * z;
        }
    }
    Ok(BrownianPath {
        seed,
        dt,
        t_final,
        level: 0,
        values,
    })
}

/// The degenerate path β ≡ 0 (for deterministic runs on the same time
/// grid as the stochastic ones).
pub fn zero_path(dims: usize, t_final: f64, dt: f64) -> Result<BrownianPath, NoiseError> {
    if dims < 1 {
        return Err(NoiseError::InvalidParameter(format!(
            "need at least one component, got {dims}"
        )));
    }
    if !(dt.is_finite() && dt > 0.0 && t_final.is_finite() && t_final > 0.0) {
        return Err(NoiseError::InvalidParameter(format!(
            "horizon and step must be positive, got T={t_final}, dt={dt}"
        )));
    }
    let steps = integral_steps(t_final, dt)?;
    Ok(BrownianPath {
        seed: 0,
        dt,
        t_final,
        level: 0,
        values: vec![vec![0.0; steps + 1]; dims],
    })
}

/// Brownian-bridge refinement by an integer factor ≥ 2.
///
/// Coarse-time values are carried over bitwise; interior points are drawn
/// sequentially from the exact conditional law of the bridge. Factors of
/// two are peeled off one halving at a time, each consuming its own
/// ChaCha stream, so `refine(p, 4)` and `refine(refine(p, 2), 2)` produce
/// identical arrays.
pub fn refine_path(path: &BrownianPath, factor: usize) -> Result<BrownianPath, NoiseError> {
    if factor < 2 {
        return Err(NoiseError::InvalidParameter(format!(
            "refinement factor must be ≥ 2, got {factor}"
        )));
    }
    let mut current = path.clone();
    let mut remaining = factor;
    while remaining % 2 == 0 {
        current = subdivide(&current, 2);
        remaining /= 2;
    }
    if remaining > 1 {
        current = subdivide(&current, remaining);
    }
    Ok(current)
}

/// One subdivision pass: every interval of `path` gains m−1 interior
/// bridge points.
fn subdivide(path: &BrownianPath, m: usize) -> BrownianPath {
    let coarse_steps = path.steps();
    let fine_dt = path.dt / m as f64;
    let mut rng = stream_rng(path.seed, path.level + 1, m as u64);
    let mut values = vec![vec![0.0; coarse_steps * m + 1]; path.values.len()];
    for k in 0..coarse_steps {
        for (src, dst) in path.values.iter().zip(values.iter_mut()) {
            let right = src[k + 1];
            dst[k * m] = src[k];
            let mut left = src[k];
            // sequential bridge: given the value at τ and the pinned right
            // endpoint at distance `gap`, the next point δ later is
            // N(left + (right−left)·δ/gap, δ·(gap−δ)/gap)
            for sub in 1..m {
                let gap = (m - sub + 1) as f64 * fine_dt;
                let delta = fine_dt;
                let mean = left + (right - left) * delta / gap;
                let var = delta * (gap - delta) / gap;
                let z: f64 = rng.sample(StandardNormal);
                left = mean + var.sqrt() * z;
                dst[k * m + sub] = left;
            }
            dst[(k + 1) * m] = right;
        }
    }
    BrownianPath {
        seed: path.seed,
        dt: fine_dt,
        t_final: path.t_final,
        level: path.level + 1,
        values,
    }
}

impl BrownianPath {
    /// Number of time steps (values per component = steps + 1).
    pub fn steps(&self) -> usize {
        self.values[0].len() - 1
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// β_i sampled at all grid times.
    pub fn component(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Increment β_i(t_{k+1}) − β_i(t_k).
    #[inline]
    pub fn increment(&self, i: usize, k: usize) -> f64 {
        self.values[i][k + 1] - self.values[i][k]
    }

    /// All component values at step k.
    pub fn at(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|c| c[k]).collect()
    }

    /// Write as CSV with header `t,beta1,…,betaN`; floats are printed in
    /// shortest-roundtrip form so import reproduces the exact values.
    pub fn to_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "t")?;
        for i in 1..=self.dims() {
            write!(w, ",beta{i}")?;
        }
        w.write_all(b"\r\n")?;
        for k in 0..=self.steps() {
            write!(w, "{}", self.time(k))?;
            for component in &self.values {
                write!(w, ",{}", component[k])?;
            }
            w.write_all(b"\r\n")?;
        }
        Ok(())
    }

    /// Parse a path written by [`BrownianPath::to_csv`]. The time column
    /// must be uniform and start at 0; metadata that CSV cannot carry
    /// (seed, refinement level) is reset to 0.
    pub fn from_csv(r: impl BufRead) -> Result<BrownianPath, NoiseError> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| NoiseError::Csv {
                line: 1,
                message: "empty file".into(),
            })
            .and_then(|(k, l)| Ok((k, l?)))?;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(NoiseError::Csv {
                line: 1,
                message: format!("expected header t,beta1,…, got {header:?}"),
            });
        }
        let dims = cols.len() - 1;
        let mut times = Vec::new();
        let mut values = vec![Vec::new(); dims];
        for (idx, line) in lines {
            let line = line?;
            let row = line.trim_end();
            if row.is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != dims + 1 {
                return Err(NoiseError::Csv {
                    line: idx + 1,
                    message: format!("expected {} fields, got {}", dims + 1, fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64, NoiseError> {
                s.parse().map_err(|_| NoiseError::Csv {
                    line: idx + 1,
                    message: format!("not a number: {s:?}"),
                })
            };
            times.push(parse(fields[0])?);
            for (component, field) in values.iter_mut().zip(&fields[1..]) {
                component.push(parse(field)?);
            }
        }
        if times.len() < 2 {
            return Err(NoiseError::Csv {
                line: 2,
                message: "need at least two time points".into(),
            });
        }
        let dt = times[1] - times[0];
        if times[0] != 0.0 || dt <= 0.0 {
            return Err(NoiseError::Csv {
                line: 2,
                message: "time column must start at 0 and increase".into(),
            });
        }
        for (k, &t) in times.iter().enumerate() {
            if (t - k as f64 * dt).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(NoiseError::Csv {
                    line: k + 2,
                    message: format!("non-uniform time grid at t={t}"),
                });
            }
        }
        for component in &values {
            if component[0] != 0.0 {
                return Err(NoiseError::Csv {
                    line: 2,
                    message: "paths must start at 0".into(),
                });
            }
        }
        Ok(BrownianPath {
            seed: 0,
            dt,
            t_final: *times.last().unwrap(),
            level: 0,
            values,
        })
    }
}
