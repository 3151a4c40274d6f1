//! `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::CliError;

/// Every key with its default, in file order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("group", "heisenberg", "built-in group id or path to a group definition file"),
    ("map", "contact_shear", "test map id, e.g. dilation(2) or left_translation(0.1,0,0)"),
    ("kernel_rate", "1", "a in exp(-a|z|^2)"),
    ("plateau_inner", "0.4", "x cut-off equals 1 on [-inner, inner]^n"),
    ("plateau_outer", "0.5", "x cut-off vanishes outside [-outer, outer]^n"),
    ("eps", "2^-2..2^-6", "eps schedule: a dyadic range 2^-a..2^-b or a comma list"),
    ("probe_eps", "2^-1..2^-10", "schedule for pansu-probe"),
    ("x_half", "1", "x grid is [-x_half, x_half]^n"),
    ("x_points", "16", "x grid nodes per axis"),
    ("z_method", "trapezoid", "`trapezoid` or `halton`"),
    ("z_points", "32", "trapezoid nodes per axis"),
    ("z_count", "8192", "halton node count"),
    ("seed", "7", "seed for halton shifts"),
    ("bank_size", "5", "number of test functions, 1 to 5"),
    ("tol", "1e-6", "filtration verdict tolerance"),
    ("min_slope", "0.8", "invariance: smallest accepted log-log slope"),
    ("bound_slack", "1e-3", "quantize: relative slack on the L2 bound"),
    ("slack", "true", "invariance: estimate quadrature slack with a coarser z rule"),
    ("workers", "1", "worker threads"),
    ("x", "", "base point, comma separated; empty picks a fixed generic point"),
    ("z", "", "probe direction, comma separated; empty picks a fixed generic vector"),
    ("output", "", "CSV path; empty writes to stdout"),
    ("grid_output", "", "quantize: path for the first Op_eps f grid function"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub group: String,
    pub map: String,
    pub kernel_rate: f64,
    pub plateau_inner: f64,
    pub plateau_outer: f64,
    pub eps: Vec<f64>,
    pub probe_eps: Vec<f64>,
    pub x_half: f64,
    pub x_points: usize,
    pub z_method: String,
    pub z_points: usize,
    pub z_count: usize,
    pub seed: u64,
    pub bank_size: usize,
    pub tol: f64,
    pub min_slope: f64,
    pub bound_slack: f64,
    pub slack: bool,
    pub workers: usize,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub output: Option<PathBuf>,
    pub grid_output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut c = ExperimentConfig {
            group: String::new(),
            map: String::new(),
            kernel_rate: 0.0,
            plateau_inner: 0.0,
            plateau_outer: 0.0,
            eps: Vec::new(),
            probe_eps: Vec::new(),
            x_half: 0.0,
            x_points: 0,
            z_method: String::new(),
            z_points: 0,
            z_count: 0,
            seed: 0,
            bank_size: 0,
            tol: 0.0,
            min_slope: 0.0,
            bound_slack: 0.0,
            slack: false,
            workers: 0,
            x: Vec::new(),
            z: Vec::new(),
            output: None,
            grid_output: None,
        };
        for (k, v, _) in KEYS {
            c.set(k, v).expect("defaults parse");
        }
        c
    }
}

fn bad(key: &str, value: &str, why: &str) -> CliError {
    CliError::Config(format!("`{key} = {value}`: {why}"))
}

fn number(key: &str, value: &str) -> Result<f64, CliError> {
    let v = match value.split_once('^') {
        Some((b, e)) => {
            let b: f64 = b.trim().parse().map_err(|_| bad(key, value, "not a number"))?;
            let e: i32 = e.trim().parse().map_err(|_| bad(key, value, "bad exponent"))?;
            b.powi(e)
        }
        None => value.parse().map_err(|_| bad(key, value, "not a number"))?,
    };
    if !v.is_finite() {
        return Err(bad(key, value, "not finite"));
    }
    Ok(v)
}

fn count(key: &str, value: &str) -> Result<usize, CliError> {
    value.parse().map_err(|_| bad(key, value, "not a nonnegative integer"))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|s| number(key, s.trim())).collect()
}

/// `2^-a..2^-b` or a comma list of numbers.
pub fn parse_schedule(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    let out = if let Some((lo, hi)) = value.split_once("..") {
        let exp = |s: &str| -> Result<i32, CliError> {
            s.trim()
                .strip_prefix("2^")
                .and_then(|e| e.parse().ok())
                .ok_or_else(|| bad(key, value, "range ends must look like 2^-k"))
        };
        let (a, b) = (exp(lo)?, exp(hi)?);
        if b > a {
            return Err(bad(key, value, "range must run towards smaller eps"));
        }
        (b..=a).rev().map(|k| 2f64.powi(k)).collect()
    } else {
        list(key, value)?
    };
    if out.is_empty() {
        return Err(bad(key, value, "empty schedule"));
    }
    if out.windows(2).any(|w| w[1] >= w[0]) || out.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err(bad(key, value, "eps must be strictly decreasing in (0, 1]"));
    }
    Ok(out)
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "group" => self.group = value.to_string(),
            "map" => self.map = value.to_string(),
            "kernel_rate" => self.kernel_rate = number(key, value)?,
            "plateau_inner" => self.plateau_inner = number(key, value)?,
            "plateau_outer" => self.plateau_outer = number(key, value)?,
            "eps" => self.eps = parse_schedule(key, value)?,
            "probe_eps" => self.probe_eps = parse_schedule(key, value)?,
            "x_half" => self.x_half = number(key, value)?,
            "x_points" => self.x_points = count(key, value)?,
            "z_method" => match value {
                "trapezoid" | "halton" => self.z_method = value.to_string(),
                _ => return Err(bad(key, value, "expected `trapezoid` or `halton`")),
            },
            "z_points" => self.z_points = count(key, value)?,
            "z_count" => self.z_count = count(key, value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value, "not an integer"))?,
            "bank_size" => {
                let n = count(key, value)?;
                if !(1..=5).contains(&n) {
                    return Err(bad(key, value, "must be between 1 and 5"));
                }
                self.bank_size = n;
            }
            "tol" => self.tol = number(key, value)?,
            "min_slope" => self.min_slope = number(key, value)?,
            "bound_slack" => self.bound_slack = number(key, value)?,
            "slack" => {
                self.slack = value.parse().map_err(|_| bad(key, value, "expected true or false"))?
            }
            "workers" => self.workers = count(key, value)?.max(1),
            "x" => self.x = list(key, value)?,
            "z" => self.z = list(key, value)?,
            "output" => self.output = path(value),
            "grid_output" => self.grid_output = path(value),
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Apply a `key = value` file on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| CliError::Config(format!("line {}: {}", i + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// The default file, one commented key per line.
    pub fn defaults_text() -> String {
        let mut out = String::new();
        for (k, v, doc) in KEYS {
            let _ = writeln!(out, "# {doc}\n{k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(c.eps, vec![0.25, 0.125, 0.0625, 0.03125, 0.015625]);
        assert_eq!(c.probe_eps.len(), 10);
        assert_eq!(c.workers, 1);
        assert_eq!(ExperimentConfig::from_text(&ExperimentConfig::defaults_text()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(ExperimentConfig::from_text("colour = red"), Err(CliError::Config(_))));
        assert!(ExperimentConfig::from_text("x_points 3").is_err());
        assert!(ExperimentConfig::from_text("eps = 0.1,0.2").is_err());
        assert!(ExperimentConfig::from_text("bank_size = 9").is_err());
        let c = ExperimentConfig::from_text("eps = 2^-1, 0.3 # comment\nmap = dilation(2)").unwrap();
        assert_eq!(c.eps, vec![0.5, 0.3]);
        assert_eq!(c.map, "dilation(2)");
    }
}
