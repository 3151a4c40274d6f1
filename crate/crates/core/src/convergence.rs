//! Log-log rate fits and Richardson extrapolation.

use std::fmt;

use crate::error::{Error, Result};

pub const DEFAULT_NOISE_FLOOR: f64 = 1e-10;

/// Least-squares line through `(x, y)`: `(slope, intercept, rms residual)`.
/// Needs at least two distinct abscissae.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Some((slope, intercept, (ss / nf).sqrt()))
}

/// Rows `(ε, error)` with ε strictly decreasing, plus the fitted log-log slope
/// over rows above the noise floor.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    rows: Vec<(f64, f64)>,
    noise_floor: f64,
    slope: Option<f64>,
    residual: Option<f64>,
}

impl ConvergenceTable {
    pub fn new(rows: Vec<(f64, f64)>) -> Result<Self> {
        Self::with_noise_floor(rows, DEFAULT_NOISE_FLOOR)
    }

    pub fn with_noise_floor(rows: Vec<(f64, f64)>, noise_floor: f64) -> Result<Self> {
        for w in rows.windows(2) {
            if !(w[1].0 < w[0].0) {
                return Err(Error::InvalidArgument(
                    "eps values must be strictly decreasing".into(),
                ));
            }
        }
        for &(eps, err) in &rows {
            if !(eps > 0.0) || !(err >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "bad row eps={eps} error={err}"
                )));
            }
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.1 > noise_floor)
            .map(|&(e, v)| (e.ln(), v.ln()))
            .unzip();
        let fit = least_squares(&xs, &ys);
        Ok(ConvergenceTable {
            rows,
            noise_floor,
            slope: fit.map(|f| f.0),
            residual: fit.map(|f| f.2),
        })
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    pub fn noise_floor(&self) -> f64 {
        self.noise_floor
    }

    /// `None` when fewer than two rows sit above the noise floor.
    pub fn slope(&self) -> Option<f64> {
        self.slope
    }

    pub fn residual(&self) -> Option<f64> {
        self.residual
    }

    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.1).fold(0.0, f64::max)
    }

    pub fn is_monotone_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].1 < w[0].1)
    }

    pub fn all_below(&self, threshold: f64) -> bool {
        self.rows.iter().all(|r| r.1 < threshold)
    }
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "eps,error")?;
        for (e, v) in &self.rows {
            writeln!(f, "{e:e},{v:e}")?;
        }
        match (self.slope, self.residual) {
            (Some(s), Some(r)) => write!(f, "# slope={s:.6} residual={r:.3e}"),
            _ => write!(f, "# slope=nan residual=nan"),
        }
    }
}

/// Richardson tableau for a sequence sampled at `h, h/ratio, h/ratio², …`
/// assuming an error expansion in integer powers of `h`. Row `k` holds the
/// extrapolants that use samples `0..=k`; the diagonal is the best estimate.
pub fn richardson_tableau(samples: &[f64], ratio: f64) -> Vec<Vec<f64>> {
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(samples.len());
    for (k, &s) in samples.iter().enumerate() {
        let mut row = vec![s];
        for j in 1..=k {
            let f = ratio.powi(j as i32);
            let prev = &table[k - 1];
            let v = row[j - 1] + (row[j - 1] - prev[j - 1]) / (f - 1.0);
            row.push(v);
        }
        table.push(row);
    }
    table
}

/// Extrapolated limit using at most `levels` trailing samples.
pub fn richardson_limit(samples: &[f64], ratio: f64, levels: usize) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let start = samples.len().saturating_sub(levels.max(1));
    let t = richardson_tableau(&samples[start..], ratio);
    t.last().and_then(|r| r.last().copied())
}
