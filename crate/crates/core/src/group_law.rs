//! The group law in exponential coordinates of the first kind.
//!
//! A group point is its Lie algebra coordinate vector, so `exp` and `ln` are
//! the identity on coordinates and `x * y = ln(exp X exp Y)` is given by the
//! Dynkin series, which terminates because the algebra is nilpotent. The
//! series is expanded once over formal variables to get an exact polynomial
//! law; [`dynkin_star`] evaluates the same series directly at given points.

use nalgebra::DMatrix;
use num_traits::{One, Zero};

use crate::algebra::{builtin, GradedLieAlgebra};
use crate::error::{check_dim, Error, Result};
use crate::poly::{Monomial, Poly};
use crate::scalar::{Rational, Scalar};

/// How far the Dynkin series is summed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Truncation {
    /// Stop at total degree `step` and skip the terms that vanish by convention.
    /// Every dropped term is zero in a nilpotent algebra.
    Step,
    /// Sum every composition up to the given total degree, including the
    /// degenerate ones, computing each bracket explicitly.
    Unpruned(u32),
}

fn factorial(k: u32) -> Rational {
    let mut acc = Rational::one();
    for i in 2..=k {
        acc *= Rational::from_integer(i.into());
    }
    acc
}

/// All sequences `((r_1,s_1),…,(r_l,s_l))` with `r_i + s_i > 0` and total
/// degree at most `max_degree`.
fn compositions(max_degree: u32) -> Vec<Vec<(u32, u32)>> {
    fn extend(
        prefix: &mut Vec<(u32, u32)>,
        remaining: u32,
        out: &mut Vec<Vec<(u32, u32)>>,
    ) {
        for total in 1..=remaining {
            for r in 0..=total {
                prefix.push((r, total - r));
                out.push(prefix.clone());
                extend(prefix, remaining - total, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), max_degree, &mut out);
    out
}

fn ad_power<T: Scalar>(alg: &GradedLieAlgebra, by: &[T], times: u32, v: Vec<T>) -> Vec<T> {
    let mut v = v;
    for _ in 0..times {
        v = alg.bracket_in(by, &v);
    }
    v
}

/// `ad^{r_1}X ad^{s_1}Y … ad^{r_l}X ad^{s_l - 1}Y (Y)`, with
/// `ad^{r}X ad^{-1}Y (Y)` read as `ad^{r-1}X (X)`.
fn dynkin_word<T: Scalar>(alg: &GradedLieAlgebra, x: &[T], y: &[T], word: &[(u32, u32)]) -> Vec<T> {
    let &(r_last, s_last) = word.last().expect("nonempty word");
    let mut v = if s_last == 0 {
        ad_power(alg, x, r_last - 1, x.to_vec())
    } else {
        let inner = ad_power(alg, y, s_last - 1, y.to_vec());
        ad_power(alg, x, r_last, inner)
    };
    for &(r, s) in word[..word.len() - 1].iter().rev() {
        v = ad_power(alg, y, s, v);
        v = ad_power(alg, x, r, v);
    }
    v
}

fn dynkin_coefficient(word: &[(u32, u32)]) -> Rational {
    let l = word.len() as i64;
    let total: u32 = word.iter().map(|(r, s)| r + s).sum();
    let mut denom = Rational::from_integer(total.into());
    for &(r, s) in word {
        denom *= factorial(r) * factorial(s);
    }
    let sign = if l % 2 == 1 { 1 } else { -1 };
    Rational::new(sign.into(), l.into()) / denom
}

/// `X * Y` by summing the Dynkin series, truncated at the step.
pub fn dynkin_star<T: Scalar>(alg: &GradedLieAlgebra, x: &[T], y: &[T]) -> Result<Vec<T>> {
    dynkin_star_with(alg, x, y, Truncation::Step)
}

pub fn dynkin_star_with<T: Scalar>(
    alg: &GradedLieAlgebra,
    x: &[T],
    y: &[T],
    truncation: Truncation,
) -> Result<Vec<T>> {
    check_dim(alg.dim(), x.len())?;
    check_dim(alg.dim(), y.len())?;
    let (max_degree, prune) = match truncation {
        Truncation::Step => (alg.step(), true),
        Truncation::Unpruned(d) => (d, false),
    };
    let mut out = vec![T::zero_val(); alg.dim()];
    for word in compositions(max_degree) {
        let &(r_last, s_last) = word.last().unwrap();
        if prune && (s_last > 1 || (s_last == 0 && r_last > 1)) {
            continue;
        }
        let term = dynkin_word(alg, x, y, &word);
        if term.iter().all(|c| c.is_zero_val()) {
            continue;
        }
        let c = dynkin_coefficient(&word);
        for (o, t) in out.iter_mut().zip(&term) {
            o.add_assign(&t.scale(&c));
        }
    }
    Ok(out)
}

pub fn inverse<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|c| c.neg()).collect()
}

#[derive(Clone, Debug)]
struct CompiledTerm {
    coefficient: f64,
    factors: Vec<(usize, u32)>,
}

fn compile(p: &Poly) -> Vec<CompiledTerm> {
    p.terms()
        .map(|(m, c)| CompiledTerm {
            coefficient: crate::scalar::rat_to_f64(c),
            factors: m
                .exponents()
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| (i, e))
                .collect(),
        })
        .collect()
}

fn eval_compiled(terms: &[CompiledTerm], vars: &dyn Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for t in terms {
        let mut v = t.coefficient;
        for &(i, e) in &t.factors {
            let b = vars(i);
            v *= if e == 1 { b } else { b.powi(e as i32) };
        }
        acc += v;
    }
    acc
}

/// The exact polynomial group law: coordinate `k` of `x * y` as a polynomial
/// in `x_1..x_n` (variables `0..n`) and `y_1..y_n` (variables `n..2n`).
#[derive(Clone, Debug)]
pub struct GroupLaw {
    weights: Vec<u32>,
    coords: Vec<Poly>,
    /// Entry `(k, j)`: coefficient of `y_j` in coordinate `k`, a polynomial in `x`.
    tau: Vec<Vec<Poly>>,
    compiled: Vec<Vec<CompiledTerm>>,
    compiled_tau: Vec<Vec<Vec<CompiledTerm>>>,
    /// `d_x[k][j]` = ∂(x*y)_k/∂x_j, likewise `d_y`; polynomials in all 2n variables.
    d_x: Vec<Vec<Vec<CompiledTerm>>>,
    d_y: Vec<Vec<Vec<CompiledTerm>>>,
}

impl GroupLaw {
    pub fn synthesize(alg: &GradedLieAlgebra) -> Result<Self> {
        let n = alg.dim();
        let x: Vec<Poly> = (0..n).map(Poly::var).collect();
        let y: Vec<Poly> = (0..n).map(|i| Poly::var(n + i)).collect();
        let coords = dynkin_star(alg, &x, &y)?;
        let mut tau = vec![vec![Poly::zero(); n]; n];
        for (k, poly) in coords.iter().enumerate() {
            for (m, c) in poly.terms() {
                let y_degree: u32 = (n..2 * n).map(|v| m.exponent(v)).sum();
                if y_degree != 1 {
                    continue;
                }
                let j = (n..2 * n).find(|&v| m.exponent(v) == 1).unwrap() - n;
                let x_part = Monomial::new((0..n).map(|v| m.exponent(v)).collect());
                tau[k][j].add_term(x_part, c.clone());
            }
        }
        let compiled = coords.iter().map(compile).collect();
        let compiled_tau = tau
            .iter()
            .map(|row| row.iter().map(compile).collect())
            .collect();
        let partials = |offset: usize| -> Vec<Vec<Vec<CompiledTerm>>> {
            coords
                .iter()
                .map(|p| (0..n).map(|j| compile(&p.derivative(offset + j))).collect())
                .collect()
        };
        let d_x = partials(0);
        let d_y = partials(n);
        Ok(GroupLaw {
            weights: alg.weights().to_vec(),
            coords,
            tau,
            compiled,
            compiled_tau,
            d_x,
            d_y,
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn coordinate(&self, k: usize) -> &Poly {
        &self.coords[k]
    }

    pub fn coordinates(&self) -> &[Poly] {
        &self.coords
    }

    /// Variable names `x1..xn, y1..yn` for display.
    pub fn variable_names(&self) -> Vec<String> {
        let n = self.dim();
        (1..=n)
            .map(|i| format!("x{i}"))
            .chain((1..=n).map(|i| format!("y{i}")))
            .collect()
    }

    /// Exact (or generic) evaluation of the polynomial law.
    pub fn mul<T: Scalar>(&self, x: &[T], y: &[T]) -> Vec<T> {
        let vars: Vec<T> = x.iter().chain(y.iter()).cloned().collect();
        self.coords.iter().map(|p| p.eval(&vars)).collect()
    }

    /// Floating-point evaluation through the precompiled monomial lists.
    pub fn mul_f64(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.mul_into(x, y, &mut out);
        out
    }

    pub fn mul_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let vars = |i: usize| if i < n { x[i] } else { y[i - n] };
        for (o, terms) in out.iter_mut().zip(&self.compiled) {
            *o = eval_compiled(terms, &vars);
        }
    }

    /// Exact differential of `y ↦ x * y` at `y = 0`.
    pub fn tau_exact(&self, x: &[Rational]) -> Vec<Vec<Rational>> {
        self.tau
            .iter()
            .map(|row| row.iter().map(|p| p.eval(x)).collect())
            .collect()
    }

    pub fn tau(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let vars = |i: usize| x[i];
        DMatrix::from_fn(n, n, |k, j| eval_compiled(&self.compiled_tau[k][j], &vars))
    }

    /// Jacobian of `x ↦ x * y`.
    pub fn left_differential(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        self.partial_matrix(&self.d_x, x, y)
    }

    /// Jacobian of `y ↦ x * y`.
    pub fn right_differential(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        self.partial_matrix(&self.d_y, x, y)
    }

    fn partial_matrix(&self, d: &[Vec<Vec<CompiledTerm>>], x: &[f64], y: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let vars = |i: usize| if i < n { x[i] } else { y[i - n] };
        DMatrix::from_fn(n, n, |k, j| eval_compiled(&d[k][j], &vars))
    }

    /// Every monomial of coordinate `k` has weighted degree `υ_k`, with `x_i`
    /// and `y_i` both weighted `υ_i`.
    pub fn is_weighted_homogeneous(&self) -> bool {
        let doubled: Vec<u32> = self.weights.iter().chain(self.weights.iter()).copied().collect();
        self.coords.iter().enumerate().all(|(k, p)| {
            p.terms()
                .all(|(m, _)| m.weighted_degree(&doubled) == self.weights[k])
        })
    }
}

/// A graded group: the algebra together with its synthesized law.
#[derive(Clone, Debug)]
pub struct Group {
    algebra: GradedLieAlgebra,
    law: GroupLaw,
}

impl Group {
    /// Validates the algebra, then synthesizes the law.
    pub fn new(algebra: GradedLieAlgebra) -> Result<Self> {
        let report = algebra.validate();
        if !report.is_valid() {
            return Err(Error::InvalidAlgebra {
                name: algebra.name().to_string(),
                report,
            });
        }
        let law = GroupLaw::synthesize(&algebra)?;
        Ok(Group { algebra, law })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        Group::new(builtin(name)?)
    }

    pub fn algebra(&self) -> &GradedLieAlgebra {
        &self.algebra
    }

    pub fn law(&self) -> &GroupLaw {
        &self.law
    }

    pub fn name(&self) -> &str {
        self.algebra.name()
    }

    pub fn dim(&self) -> usize {
        self.algebra.dim()
    }

    pub fn weights(&self) -> &[u32] {
        self.algebra.weights()
    }

    pub fn homogeneous_dimension(&self) -> u32 {
        self.algebra.homogeneous_dimension()
    }

    pub fn mul(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.law.mul_f64(x, y)
    }

    pub fn mul_exact(&self, x: &[Rational], y: &[Rational]) -> Vec<Rational> {
        self.law.mul(x, y)
    }

    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        inverse(x)
    }

    /// `x * y⁻¹`.
    pub fn mul_inv(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.law.mul_f64(x, &inverse(y))
    }

    /// `x⁻¹ * y`.
    pub fn inv_mul(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.law.mul_f64(&inverse(x), y)
    }

    pub fn tau(&self, x: &[f64]) -> DMatrix<f64> {
        self.law.tau(x)
    }

    pub fn identity(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    /// Whether `other` has the same weights and structure constants.
    pub fn same_structure(&self, other: &Group) -> bool {
        self.weights() == other.weights() && self.algebra.terms() == other.algebra.terms()
    }
}

/// Exact determinant by Gaussian elimination over the rationals.
pub fn det_exact(m: &[Vec<Rational>]) -> Rational {
    let n = m.len();
    let mut a: Vec<Vec<Rational>> = m.to_vec();
    let mut det = Rational::one();
    for col in 0..n {
        let Some(pivot) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return Rational::zero();
        };
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        let p = a[col][col].clone();
        det *= &p;
        for r in (col + 1)..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &p;
            for c in col..n {
                let sub = &factor * &a[col][c];
                a[r][c] -= sub;
            }
        }
    }
    det
}
