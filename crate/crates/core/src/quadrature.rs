//! Tensor trapezoid and shifted Halton rules on axis-aligned boxes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Closed box `[lo_i, hi_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidArgument("box bounds length mismatch".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument(format!(
                "box needs lo < hi on every axis, got {lo:?} {hi:?}"
            )));
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn cube(dim: usize, half: f64) -> Self {
        BoxDomain {
            lo: vec![-half; dim],
            hi: vec![half; dim],
        }
    }

    pub fn symmetric(half: &[f64]) -> Self {
        BoxDomain {
            lo: half.iter().map(|h| -h).collect(),
            hi: half.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn contains_box(&self, other: &BoxDomain) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &BoxDomain) -> BoxDomain {
        BoxDomain {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }
}

/// Nodes and weights of the composite trapezoid rule with `n ≥ 2` points.
pub fn trapezoid_1d(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / (n - 1) as f64;
    let nodes = (0..n).map(|i| a + h * i as f64).collect();
    let weights = (0..n)
        .map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h })
        .collect();
    (nodes, weights)
}

/// A flat list of nodes with weights.
#[derive(Clone, Debug)]
pub struct Rule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    /// Push every node through the linear map `m` and scale the weights by `|det m|`.
    pub fn linear_image(&self, m: &nalgebra::DMatrix<f64>) -> Rule {
        let det = m.determinant().abs();
        let rows = m.nrows();
        let mut points = Vec::with_capacity(self.len() * rows);
        for (z, _) in self.iter() {
            for r in 0..rows {
                points.push((0..self.dim).map(|c| m[(r, c)] * z[c]).sum());
            }
        }
        Rule {
            dim: rows,
            points,
            weights: self.weights.iter().map(|w| w * det).collect(),
        }
    }

    pub fn tensor_trapezoid(domain: &BoxDomain, resolution: &[usize]) -> Result<Rule> {
        let dim = domain.dim();
        if resolution.len() != dim || resolution.iter().any(|&r| r < 2) {
            return Err(Error::InvalidArgument(
                "resolution must be at least 2 on every axis".into(),
            ));
        }
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..dim)
            .map(|i| trapezoid_1d(domain.lo[i], domain.hi[i], resolution[i]))
            .collect();
        let count: usize = resolution.iter().product();
        let mut points = Vec::with_capacity(count * dim);
        let mut weights = Vec::with_capacity(count);
        let mut idx = vec![0usize; dim];
        for _ in 0..count {
            let mut w = 1.0;
            for d in 0..dim {
                points.push(axes[d].0[idx[d]]);
                w *= axes[d].1[idx[d]];
            }
            weights.push(w);
            // Last axis varies fastest.
            for d in (0..dim).rev() {
                idx[d] += 1;
                if idx[d] < resolution[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(Rule {
            dim,
            points,
            weights,
        })
    }

    /// Equal-weight Halton rule with a seeded Cranley–Patterson rotation.
    pub fn halton(domain: &BoxDomain, count: usize, seed: u64) -> Result<Rule> {
        let dim = domain.dim();
        if dim > PRIMES.len() {
            return Err(Error::InvalidArgument(format!(
                "halton rule supports at most {} dimensions",
                PRIMES.len()
            )));
        }
        if count == 0 {
            return Err(Error::InvalidArgument("halton count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        let w = domain.volume() / count as f64;
        let mut points = Vec::with_capacity(count * dim);
        for i in 0..count {
            for d in 0..dim {
                let u = (radical_inverse(i as u64 + 1, PRIMES[d]) + shift[d]).fract();
                points.push(domain.lo[d] + u * (domain.hi[d] - domain.lo[d]));
            }
        }
        Ok(Rule {
            dim,
            points,
            weights: vec![w; count],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(p, w)| w * f(p)).sum()
    }
}

pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}
