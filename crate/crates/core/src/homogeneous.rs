//! Dilations, the canonical quasi-norm and the homogeneous dimension.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::group_law::Group;
use crate::scalar::{rat_int, Rational, Scalar};

/// The one-parameter family `δ_r`, scaling coordinate `i` by `r^{υ_i}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dilation {
    weights: Vec<u32>,
}

impl Dilation {
    pub fn new(weights: &[u32]) -> Self {
        Dilation {
            weights: weights.to_vec(),
        }
    }

    pub fn of(group: &Group) -> Self {
        Dilation::new(group.weights())
    }

    pub fn apply(&self, r: f64, x: &[f64]) -> Result<Vec<f64>> {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dilation factor must be positive, got {r}"
            )));
        }
        check_dim(self.weights.len(), x.len())?;
        Ok(self.apply_unchecked(r, x))
    }

    /// `δ_r x` without validating `r` or the length.
    pub fn apply_unchecked(&self, r: f64, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.weights)
            .map(|(v, &w)| v * r.powi(w as i32))
            .collect()
    }

    pub fn apply_exact(&self, r: &Rational, x: &[Rational]) -> Result<Vec<Rational>> {
        if *r <= rat_int(0) {
            return Err(Error::InvalidArgument(
                "dilation factor must be positive".into(),
            ));
        }
        check_dim(self.weights.len(), x.len())?;
        Ok(x.iter()
            .zip(&self.weights)
            .map(|(v, &w)| v * Scalar::pow(r, w))
            .collect())
    }

    /// Diagonal of `δ_r` as a matrix.
    pub fn diagonal(&self, r: f64) -> Vec<f64> {
        self.weights.iter().map(|&w| r.powi(w as i32)).collect()
    }
}

pub fn dilate(group: &Group, r: f64, x: &[f64]) -> Result<Vec<f64>> {
    Dilation::of(group).apply(r, x)
}

/// `|x| = Σ |x_i|^{1/υ_i}`: homogeneous of degree one, zero only at the origin.
pub fn quasi_norm_weights(weights: &[u32], x: &[f64]) -> f64 {
    x.iter()
        .zip(weights)
        .map(|(v, &w)| match w {
            1 => v.abs(),
            2 => v.abs().sqrt(),
            _ => v.abs().powf(1.0 / w as f64),
        })
        .sum()
}

pub fn quasi_norm(group: &Group, x: &[f64]) -> f64 {
    quasi_norm_weights(group.weights(), x)
}

/// `|xy| / (|x| + |y|)` for one pair; `None` for the degenerate pair `(0, 0)`.
pub fn triangle_ratio(group: &Group, x: &[f64], y: &[f64]) -> Option<f64> {
    let denom = quasi_norm(group, x) + quasi_norm(group, y);
    if denom == 0.0 {
        return None;
    }
    Some(quasi_norm(group, &group.mul(x, y)) / denom)
}

/// Largest ratio over the given pairs; degenerate pairs are skipped and an
/// empty (or fully degenerate) input gives 0.
pub fn triangle_constant_from_pairs(group: &Group, pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    pairs
        .iter()
        .filter_map(|(x, y)| triangle_ratio(group, x, y))
        .fold(0.0, f64::max)
}

/// Empirical lower bound for the quasi-triangle constant `C` from random pairs
/// with coordinates uniform in `[-1, 1]`.
pub fn triangle_constant_estimate(group: &Group, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = group.dim();
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Some(r) = triangle_ratio(group, &x, &y) {
            best = best.max(r);
        }
    }
    Ok(best)
}
