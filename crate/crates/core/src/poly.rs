//! Sparse multivariate polynomials with exact rational coefficients.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::scalar::{format_rational, Rational, Scalar};

/// Exponent vector. Trailing zeros are trimmed so that equal monomials compare
/// equal regardless of how many variables are in scope.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(mut exps: Vec<u32>) -> Self {
        while exps.last() == Some(&0) {
            exps.pop();
        }
        Monomial(exps)
    }

    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(index: usize) -> Self {
        let mut e = vec![0; index + 1];
        e[index] = 1;
        Monomial(e)
    }

    pub fn exponent(&self, var: usize) -> u32 {
        self.0.get(var).copied().unwrap_or(0)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Sum of `weights[var] * exponent`; variables beyond `weights` are an error
    /// of the caller and panic.
    pub fn weighted_degree(&self, weights: &[u32]) -> u32 {
        self.0.iter().enumerate().map(|(i, e)| weights[i] * e).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let len = self.0.len().max(other.0.len());
        let e = (0..len)
            .map(|i| self.exponent(i) + other.exponent(i))
            .collect();
        Monomial::new(e)
    }

    pub fn eval<T: Scalar>(&self, values: &[T]) -> T {
        let mut acc = T::one_val();
        for (i, &e) in self.0.iter().enumerate() {
            if e > 0 {
                acc = acc.mul(&values[i].pow(e));
            }
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: Rational) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn var(index: usize) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::var(index), Rational::one());
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> Rational {
        self.terms.get(m).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn eval<T: Scalar>(&self, values: &[T]) -> T {
        let mut acc = T::zero_val();
        for (m, c) in &self.terms {
            acc = acc.add(&m.eval(values).mul(&T::from_rational(c)));
        }
        acc
    }

    pub fn derivative(&self, var: usize) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let e = m.exponent(var);
            if e == 0 {
                continue;
            }
            let mut exps: Vec<u32> = m.exponents().to_vec();
            exps[var] -= 1;
            out.add_term(Monomial::new(exps), c * Rational::from_integer(e.into()));
        }
        out
    }

    /// Render with variable names, monomials in descending lexicographic order
    /// of their exponent vectors (so `x1` terms come first).
    pub fn display_with<'a>(&'a self, names: &'a [String]) -> PolyDisplay<'a> {
        PolyDisplay { poly: self, names }
    }
}

pub struct PolyDisplay<'a> {
    poly: &'a Poly,
    names: &'a [String],
}

impl fmt::Display for PolyDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_empty() {
            return write!(f, "0");
        }
        // Pad exponent vectors so lexicographic comparison sees all variables.
        let width = self.names.len();
        let mut terms: Vec<_> = self.poly.terms().collect();
        terms.sort_by(|(a, _), (b, _)| {
            let pa: Vec<u32> = (0..width).map(|i| a.exponent(i)).collect();
            let pb: Vec<u32> = (0..width).map(|i| b.exponent(i)).collect();
            pb.cmp(&pa)
        });
        for (idx, (m, c)) in terms.iter().enumerate() {
            let negative = c.is_negative();
            let mag = c.abs();
            if idx == 0 {
                if negative {
                    write!(f, "-")?;
                }
            } else if negative {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mut factors: Vec<String> = Vec::new();
            for (var, &e) in m.exponents().iter().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(self.names[var].clone()),
                    _ => factors.push(format!("{}^{}", self.names[var], e)),
                }
            }
            if factors.is_empty() {
                write!(f, "{}", format_rational(&mag))?;
            } else if mag.is_one() {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{}*{}", format_rational(&mag), factors.join("*"))?;
            }
        }
        Ok(())
    }
}

impl Scalar for Poly {
    fn zero_val() -> Self {
        Poly::zero()
    }
    fn one_val() -> Self {
        Poly::constant(Rational::one())
    }
    fn is_zero_val(&self) -> bool {
        self.terms.is_empty()
    }
    fn from_rational(r: &Rational) -> Self {
        Poly::constant(r.clone())
    }
    fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
    fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
    fn mul(&self, other: &Self) -> Self {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
    fn neg(&self) -> Self {
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), -c.clone()))
                .collect(),
        }
    }
    fn scale(&self, r: &Rational) -> Self {
        if r.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c * r))
                .collect(),
        }
    }
    fn add_assign(&mut self, other: &Self) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c.clone());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    #[test]
    fn cancellation_removes_terms() {
        let x = Poly::var(0);
        let y = Poly::var(1);
        let p = x.mul(&y).sub(&y.mul(&x));
        assert!(p.is_empty());
    }

    #[test]
    fn monomials_ignore_trailing_zeros() {
        assert_eq!(Monomial::new(vec![1, 0, 0]), Monomial::new(vec![1]));
        assert_eq!(Monomial::var(2).weighted_degree(&[1, 1, 2]), 2);
    }

    #[test]
    fn display_orders_lexicographically() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let p = Poly::var(2)
            .add(&Poly::var(0).mul(&Poly::var(1)).scale(&rat(-1, 2)))
            .add(&Poly::constant(rat(3, 1)));
        assert_eq!(p.display_with(&names).to_string(), "-1/2*a*b + c + 3");
    }

    #[test]
    fn derivative_of_product() {
        let p = Poly::var(0).pow(3).mul(&Poly::var(1)).scale(&rat(1, 6));
        let d = p.derivative(0);
        assert_eq!(d.coefficient(&Monomial::new(vec![2, 1])), rat(1, 2));
        assert!(p.derivative(2).is_empty());
    }

    #[test]
    fn eval_matches_expansion() {
        let x = Poly::var(0);
        let p = x.add(&Poly::one_val()).pow(3);
        let v: f64 = p.eval(&[2.0]);
        assert_eq!(v, 27.0);
    }
}
