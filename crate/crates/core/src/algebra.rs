//! Graded nilpotent Lie algebras given by rational structure constants.
//!
//! A basis `X_1..X_n` adapted to the gradation is fixed, each `X_i` carrying a
//! weight `υ_i` (the index of its stratum). Brackets are stored sparsely for
//! `i < j` only; `[X_j, X_i] = -[X_i, X_j]` is synthesized.
//!
//! Indices are 0-based in the API and 1-based in text (file format, reports).

use std::collections::BTreeMap;
use std::fmt;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::scalar::{format_rational, parse_rational, rat_int, Rational, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// `weights[index] < weights[index - 1]`.
    WeightsNotNondecreasing { index: usize },
    /// The two orientations of a bracket disagree, or `[X_i, X_i] != 0`.
    Antisymmetry { i: usize, j: usize, k: usize },
    /// `c_{ij}^k != 0` while `υ_k != υ_i + υ_j`.
    Grading { i: usize, j: usize, k: usize },
    /// Component `component` of the Jacobi sum for `(X_i, X_j, X_k)` is nonzero.
    Jacobi {
        i: usize,
        j: usize,
        k: usize,
        component: usize,
        residual: Rational,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WeightsNotNondecreasing { index } => {
                write!(f, "weights decrease at position {}", index + 1)
            }
            Violation::Antisymmetry { i, j, k } => write!(
                f,
                "antisymmetry fails at (i,j,k)=({},{},{})",
                i + 1,
                j + 1,
                k + 1
            ),
            Violation::Grading { i, j, k } => write!(
                f,
                "grading fails at (i,j,k)=({},{},{})",
                i + 1,
                j + 1,
                k + 1
            ),
            Violation::Jacobi {
                i,
                j,
                k,
                component,
                residual,
            } => write!(
                f,
                "Jacobi fails for (X{},X{},X{}) in component {}: residual {}",
                i + 1,
                j + 1,
                k + 1,
                component + 1,
                format_rational(residual)
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// One bracket coefficient `[X_i, X_j] ∋ c X_k`, 0-based.
#[derive(Clone, Debug, PartialEq)]
pub struct BracketTerm {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub coefficient: Rational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradedLieAlgebra {
    name: String,
    weights: Vec<u32>,
    /// `(i, j)` with `i < j` to the nonzero components of `[X_i, X_j]`.
    brackets: BTreeMap<(usize, usize), BTreeMap<usize, Rational>>,
    /// Antisymmetry defects detected while canonicalizing the input.
    skew_defects: Vec<Violation>,
}

impl GradedLieAlgebra {
    /// Build from 0-based bracket triples. Triples with `i > j` are folded onto
    /// `(j, i)` with a sign flip; a conflicting pair or a nonzero `[X_i, X_i]` is
    /// kept as an antisymmetry defect for [`validate`](Self::validate).
    pub fn from_constants<I>(name: impl Into<String>, weights: Vec<u32>, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = BracketTerm>,
    {
        let name = name.into();
        let n = weights.len();
        if n == 0 {
            return Err(Error::Format("algebra must have at least one basis vector".into()));
        }
        if let Some(pos) = weights.iter().position(|&w| w == 0) {
            return Err(Error::Format(format!(
                "weight at position {} is zero; weights are positive integers",
                pos + 1
            )));
        }
        let mut canonical: BTreeMap<(usize, usize), BTreeMap<usize, Rational>> = BTreeMap::new();
        let mut transposed: Vec<BracketTerm> = Vec::new();
        let mut skew_defects = Vec::new();
        for t in terms {
            for (label, idx) in [("i", t.i), ("j", t.j), ("k", t.k)] {
                if idx >= n {
                    return Err(Error::Format(format!(
                        "bracket index {label}={} out of range 1..{n}",
                        idx + 1
                    )));
                }
            }
            if t.coefficient.is_zero() {
                continue;
            }
            if t.i == t.j {
                skew_defects.push(Violation::Antisymmetry {
                    i: t.i,
                    j: t.j,
                    k: t.k,
                });
            } else if t.i < t.j {
                let slot = canonical.entry((t.i, t.j)).or_default();
                let c = slot.entry(t.k).or_insert_with(Rational::zero);
                *c += &t.coefficient;
            } else {
                transposed.push(t);
            }
        }
        // A transposed entry is fine when it restates the canonical one with
        // the opposite sign, or when it is the only one given.
        let explicit: BTreeMap<(usize, usize, usize), Rational> = canonical
            .iter()
            .flat_map(|(&(i, j), row)| row.iter().map(move |(&k, c)| ((i, j, k), c.clone())))
            .collect();
        for t in transposed {
            let key = (t.j, t.i, t.k);
            match explicit.get(&key) {
                Some(c) => {
                    if *c != -t.coefficient.clone() {
                        skew_defects.push(Violation::Antisymmetry {
                            i: t.i,
                            j: t.j,
                            k: t.k,
                        });
                    }
                }
                None => {
                    let slot = canonical.entry((t.j, t.i)).or_default();
                    let c = slot.entry(t.k).or_insert_with(Rational::zero);
                    *c -= &t.coefficient;
                }
            }
        }
        for row in canonical.values_mut() {
            row.retain(|_, c| !c.is_zero());
        }
        canonical.retain(|_, row| !row.is_empty());
        Ok(GradedLieAlgebra {
            name,
            weights,
            brackets: canonical,
            skew_defects,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    /// The step `n_G`: the largest weight.
    pub fn step(&self) -> u32 {
        self.weights.iter().copied().max().unwrap_or(0)
    }

    /// Homogeneous dimension `Q = υ_1 + … + υ_n`.
    pub fn homogeneous_dimension(&self) -> u32 {
        self.weights.iter().sum()
    }

    /// Distinct weights in increasing order (the nontrivial strata).
    pub fn strata(&self) -> Vec<u32> {
        let mut s = self.weights.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// `c_{ij}^k` for any orientation.
    pub fn constant(&self, i: usize, j: usize, k: usize) -> Rational {
        use std::cmp::Ordering;
        match i.cmp(&j) {
            Ordering::Equal => Rational::zero(),
            Ordering::Less => self
                .brackets
                .get(&(i, j))
                .and_then(|row| row.get(&k))
                .cloned()
                .unwrap_or_else(Rational::zero),
            Ordering::Greater => -self.constant(j, i, k),
        }
    }

    /// All nonzero canonical (`i < j`) bracket coefficients.
    pub fn terms(&self) -> Vec<BracketTerm> {
        self.brackets
            .iter()
            .flat_map(|(&(i, j), row)| {
                row.iter().map(move |(&k, c)| BracketTerm {
                    i,
                    j,
                    k,
                    coefficient: c.clone(),
                })
            })
            .collect()
    }

    pub fn is_abelian(&self) -> bool {
        self.brackets.is_empty()
    }

    /// Bilinear extension of the structure constants to coefficient vectors
    /// over any ring (floats, rationals, formal polynomials).
    pub fn bracket_in<T: Scalar>(&self, x: &[T], y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero_val(); self.dim()];
        for (&(i, j), row) in &self.brackets {
            let xi_yj = x[i].mul(&y[j]);
            let xj_yi = x[j].mul(&y[i]);
            let coeff = xi_yj.sub(&xj_yi);
            if coeff.is_zero_val() {
                continue;
            }
            for (&k, c) in row {
                out[k].add_assign(&coeff.scale(c));
            }
        }
        out
    }

    pub fn bracket<T: Scalar>(&self, x: &[T], y: &[T]) -> Result<Vec<T>> {
        crate::error::check_dim(self.dim(), x.len())?;
        crate::error::check_dim(self.dim(), y.len())?;
        Ok(self.bracket_in(x, y))
    }

    pub fn basis_vector<T: Scalar>(&self, i: usize) -> Vec<T> {
        let mut v = vec![T::zero_val(); self.dim()];
        v[i] = T::one_val();
        v
    }

    /// Check every axiom; the report is empty iff the algebra is a graded Lie
    /// algebra in an adapted basis.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for idx in 1..self.weights.len() {
            if self.weights[idx] < self.weights[idx - 1] {
                violations.push(Violation::WeightsNotNondecreasing { index: idx });
            }
        }
        violations.extend(self.skew_defects.iter().cloned());
        for t in self.terms() {
            if self.weights[t.k] != self.weights[t.i] + self.weights[t.j] {
                violations.push(Violation::Grading {
                    i: t.i,
                    j: t.j,
                    k: t.k,
                });
            }
        }
        let n = self.dim();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let residual = self.jacobi_residual(i, j, k);
                    for (component, r) in residual.into_iter().enumerate() {
                        if !r.is_zero() {
                            violations.push(Violation::Jacobi {
                                i,
                                j,
                                k,
                                component,
                                residual: r,
                            });
                        }
                    }
                }
            }
        }
        ValidationReport { violations }
    }

    /// `[[X_i,X_j],X_k] + [[X_j,X_k],X_i] + [[X_k,X_i],X_j]` over the rationals.
    pub fn jacobi_residual(&self, i: usize, j: usize, k: usize) -> Vec<Rational> {
        let e = |a: usize| self.basis_vector::<Rational>(a);
        let (xi, xj, xk) = (e(i), e(j), e(k));
        let a = self.bracket_in(&self.bracket_in(&xi, &xj), &xk);
        let b = self.bracket_in(&self.bracket_in(&xj, &xk), &xi);
        let c = self.bracket_in(&self.bracket_in(&xk, &xi), &xj);
        a.iter()
            .zip(&b)
            .zip(&c)
            .map(|((a, b), c)| a + b + c)
            .collect()
    }

    /// True when every right-nested bracket of `depth` basis vectors vanishes.
    pub fn nested_brackets_vanish(&self, depth: usize) -> bool {
        let n = self.dim();
        let mut layer: Vec<Vec<Rational>> = (0..n).map(|i| self.basis_vector(i)).collect();
        for _ in 1..depth {
            let mut next = Vec::new();
            for v in &layer {
                for i in 0..n {
                    let w = self.bracket_in(&self.basis_vector(i), v);
                    if w.iter().any(|c| !c.is_zero()) {
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                return true;
            }
            layer = next;
        }
        layer.is_empty()
    }

    /// Parse the group-definition text format:
    ///
    /// ```text
    /// n step
    /// w_1 ... w_n
    /// i j k p/q        (one bracket coefficient per line, 1-based, i < j)
    /// ```
    ///
    /// Blank lines and `#` comments are ignored.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::Format("empty group definition".into()))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 2 {
            return Err(Error::Format(format!(
                "line {}: header must be `n step`",
                hline + 1
            )));
        }
        let n: usize = head[0]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad dimension", hline + 1)))?;
        let step: u32 = head[1]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad step", hline + 1)))?;
        let (wline, wtext) = lines
            .next()
            .ok_or_else(|| Error::Format("missing weights line".into()))?;
        let weights = wtext
            .split_whitespace()
            .map(|w| w.parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Format(format!("line {}: bad weight", wline + 1)))?;
        if weights.len() != n {
            return Err(Error::Format(format!(
                "line {}: expected {n} weights, found {}",
                wline + 1,
                weights.len()
            )));
        }
        let mut terms = Vec::new();
        for (lno, line) in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(Error::Format(format!(
                    "line {}: expected `i j k p/q`",
                    lno + 1
                )));
            }
            let idx = |s: &str| -> Result<usize> {
                let v: usize = s
                    .parse()
                    .map_err(|_| Error::Format(format!("line {}: bad index `{s}`", lno + 1)))?;
                if v == 0 || v > n {
                    return Err(Error::Format(format!(
                        "line {}: index {v} out of range 1..{n}",
                        lno + 1
                    )));
                }
                Ok(v - 1)
            };
            let coefficient = parse_rational(parts[3])
                .map_err(|e| Error::Format(format!("line {}: {e}", lno + 1)))?;
            terms.push(BracketTerm {
                i: idx(parts[0])?,
                j: idx(parts[1])?,
                k: idx(parts[2])?,
                coefficient,
            });
        }
        let algebra = GradedLieAlgebra::from_constants(name, weights, terms)?;
        if algebra.step() != step {
            return Err(Error::Format(format!(
                "header step {step} does not match the largest weight {}",
                algebra.step()
            )));
        }
        Ok(algebra)
    }

    /// Inverse of [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.dim(), self.step());
        let w: Vec<String> = self.weights.iter().map(|w| w.to_string()).collect();
        out.push_str(&w.join(" "));
        out.push('\n');
        for t in self.terms() {
            out.push_str(&format!(
                "{} {} {} {}\n",
                t.i + 1,
                t.j + 1,
                t.k + 1,
                format_rational(&t.coefficient)
            ));
        }
        out
    }
}

/// The built-in test corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Builtin {
    Abelian { weights: Vec<u32> },
    Heisenberg { d: usize },
    Engel,
    /// Free nilpotent algebra of rank 2 and step 3.
    FreeNilpotent23,
}

impl Builtin {
    /// Accepted spellings: `heisenberg`, `heisenberg(d)`, `engel`,
    /// `free_nilpotent(2,3)`, `abelian(n)`, `abelian(n;w_1,...,w_n)`.
    pub fn parse(spec: &str) -> Result<Self> {
        let s: String = spec.chars().filter(|c| !c.is_whitespace()).collect();
        let unknown = || Error::UnknownGroup(spec.to_string());
        let (head, args) = match s.split_once('(') {
            Some((h, rest)) => {
                let inner = rest.strip_suffix(')').ok_or_else(unknown)?;
                (h.to_string(), Some(inner.to_string()))
            }
            None => (s.clone(), None),
        };
        match (head.as_str(), args) {
            ("heisenberg", None) => Ok(Builtin::Heisenberg { d: 1 }),
            ("heisenberg", Some(a)) => {
                let d: usize = a.parse().map_err(|_| unknown())?;
                if d == 0 {
                    return Err(unknown());
                }
                Ok(Builtin::Heisenberg { d })
            }
            ("engel", None) => Ok(Builtin::Engel),
            ("free_nilpotent", Some(a)) if a == "2,3" => Ok(Builtin::FreeNilpotent23),
            ("abelian", Some(a)) => {
                let (n, weights) = match a.split_once(';') {
                    Some((n, w)) => {
                        let n: usize = n.parse().map_err(|_| unknown())?;
                        let w: Vec<u32> = w
                            .split(',')
                            .map(|v| v.parse())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| unknown())?;
                        (n, w)
                    }
                    None => {
                        let n: usize = a.parse().map_err(|_| unknown())?;
                        (n, vec![1; n])
                    }
                };
                if n == 0 || weights.len() != n {
                    return Err(unknown());
                }
                Ok(Builtin::Abelian { weights })
            }
            _ => Err(unknown()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Builtin::Abelian { weights } => {
                let w: Vec<String> = weights.iter().map(|w| w.to_string()).collect();
                format!("abelian({};{})", weights.len(), w.join(","))
            }
            Builtin::Heisenberg { d } => format!("heisenberg({d})"),
            Builtin::Engel => "engel".into(),
            Builtin::FreeNilpotent23 => "free_nilpotent(2,3)".into(),
        }
    }

    pub fn algebra(&self) -> Result<GradedLieAlgebra> {
        let one = || rat_int(1);
        let term = |i, j, k| BracketTerm {
            i,
            j,
            k,
            coefficient: one(),
        };
        let (weights, terms) = match self {
            Builtin::Abelian { weights } => (weights.clone(), vec![]),
            Builtin::Heisenberg { d } => {
                let d = *d;
                let mut w = vec![1; 2 * d];
                w.push(2);
                let terms = (0..d).map(|i| term(i, d + i, 2 * d)).collect();
                (w, terms)
            }
            Builtin::Engel => (
                vec![1, 1, 2, 3],
                vec![term(0, 1, 2), term(0, 2, 3)],
            ),
            Builtin::FreeNilpotent23 => (
                vec![1, 1, 2, 3, 3],
                vec![term(0, 1, 2), term(0, 2, 3), term(1, 2, 4)],
            ),
        };
        let algebra = GradedLieAlgebra::from_constants(self.label(), weights, terms)?;
        let report = algebra.validate();
        if !report.is_valid() {
            return Err(Error::InvalidAlgebra {
                name: algebra.name().to_string(),
                report,
            });
        }
        Ok(algebra)
    }
}

/// Look up a built-in algebra by name.
pub fn builtin(name: &str) -> Result<GradedLieAlgebra> {
    Builtin::parse(name)?.algebra()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    fn e(alg: &GradedLieAlgebra, i: usize) -> Vec<Rational> {
        alg.basis_vector(i)
    }

    #[test]
    fn heisenberg_is_valid_with_q4() {
        let h = builtin("heisenberg(1)").unwrap();
        assert!(h.validate().is_valid());
        assert_eq!(h.dim(), 3);
        assert_eq!(h.weights(), &[1, 1, 2]);
        assert_eq!(h.homogeneous_dimension(), 4);
        assert_eq!(h.step(), 2);
        assert_eq!(h.bracket(&e(&h, 0), &e(&h, 1)).unwrap(), e(&h, 2));
    }

    #[test]
    fn abelian_examples() {
        let a = builtin("abelian(3;1,1,2)").unwrap();
        assert!(a.validate().is_valid());
        assert!(a.is_abelian());
        assert_eq!(builtin("abelian(3)").unwrap().homogeneous_dimension(), 3);
    }

    #[test]
    fn engel_and_free_tables() {
        let g = builtin("engel").unwrap();
        assert!(g.validate().is_valid());
        assert_eq!(g.bracket(&e(&g, 0), &e(&g, 2)).unwrap(), e(&g, 3));
        let f = builtin("free_nilpotent(2,3)").unwrap();
        assert_eq!(f.dim(), 5);
        assert_eq!(f.weights(), &[1, 1, 2, 3, 3]);
        assert!(f.validate().is_valid());
    }

    #[test]
    fn grading_violation_is_reported_with_witness() {
        let h = builtin("heisenberg(1)").unwrap();
        let mut terms = h.terms();
        terms.push(BracketTerm {
            i: 0,
            j: 2,
            k: 1,
            coefficient: rat(1, 1),
        });
        let bad = GradedLieAlgebra::from_constants("bad", h.weights().to_vec(), terms).unwrap();
        let report = bad.validate();
        assert!(report
            .violations
            .contains(&Violation::Grading { i: 0, j: 2, k: 1 }));
        assert!(report.to_string().contains("(i,j,k)=(1,3,2)"));
    }

    #[test]
    fn antisymmetry_defects() {
        let terms = vec![
            BracketTerm { i: 0, j: 1, k: 2, coefficient: rat(1, 1) },
            BracketTerm { i: 1, j: 0, k: 2, coefficient: rat(1, 1) },
        ];
        let a = GradedLieAlgebra::from_constants("skew", vec![1, 1, 2], terms).unwrap();
        assert!(matches!(
            a.validate().violations[..],
            [Violation::Antisymmetry { i: 1, j: 0, k: 2 }]
        ));
        // A consistent restatement is accepted.
        let terms = vec![
            BracketTerm { i: 0, j: 1, k: 2, coefficient: rat(1, 1) },
            BracketTerm { i: 1, j: 0, k: 2, coefficient: rat(-1, 1) },
        ];
        let a = GradedLieAlgebra::from_constants("ok", vec![1, 1, 2], terms).unwrap();
        assert!(a.validate().is_valid());
        let diag = vec![BracketTerm { i: 0, j: 0, k: 1, coefficient: rat(1, 1) }];
        let a = GradedLieAlgebra::from_constants("diag", vec![1, 2], diag).unwrap();
        assert!(!a.validate().is_valid());
    }

    #[test]
    fn jacobi_violation_detected() {
        // [X1,X5] = X7 on top of a free step-2 layer breaks Jacobi for (X1,X2,X3).
        let w = vec![1, 1, 1, 2, 2, 2, 3];
        let t = |i, j, k, c| BracketTerm { i, j, k, coefficient: rat(c, 1) };
        let terms = vec![
            t(0, 1, 3, 1),
            t(1, 2, 4, 1),
            t(0, 2, 5, 1),
            t(0, 4, 6, 1),
        ];
        let a = GradedLieAlgebra::from_constants("nojacobi", w, terms).unwrap();
        let report = a.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Jacobi { i: 0, j: 1, k: 2, .. })));
    }

    #[test]
    fn format_errors_are_distinct() {
        assert!(matches!(
            GradedLieAlgebra::parse("x", "3 2\n1 1 2\n1 2 4 1\n"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            GradedLieAlgebra::parse("x", "3 2\n1 1 2\n1 2 3 1/0\n"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            GradedLieAlgebra::parse("x", "3 3\n1 1 2\n"),
            Err(Error::Format(_))
        ));
        // Axiom violations parse fine and show up in the report instead.
        let a = GradedLieAlgebra::parse("x", "3 2\n1 1 2\n1 3 2 1\n").unwrap();
        assert!(!a.validate().is_valid());
    }

    #[test]
    fn text_round_trip() {
        let f = builtin("free_nilpotent(2,3)").unwrap();
        let back = GradedLieAlgebra::parse(f.name(), &f.to_text()).unwrap();
        assert_eq!(back.terms(), f.terms());
        assert_eq!(back.weights(), f.weights());
    }

    #[test]
    fn trivial_stratum_is_allowed() {
        // weights (1,1,3): the weight-2 stratum is trivial.
        let a = GradedLieAlgebra::parse("gap", "3 3\n1 1 3\n").unwrap();
        assert!(a.validate().is_valid());
        assert_eq!(a.homogeneous_dimension(), 5);
        assert_eq!(a.strata(), vec![1, 3]);
        // A bracket into the weight-3 vector from two weight-1 vectors violates grading.
        let b = GradedLieAlgebra::parse("gap", "3 3\n1 1 3\n1 2 3 1\n").unwrap();
        assert_eq!(
            b.validate().violations,
            vec![Violation::Grading { i: 0, j: 1, k: 2 }]
        );
    }

    #[test]
    fn builtin_rejects_unknown_names() {
        assert!(matches!(builtin("sl2"), Err(Error::UnknownGroup(_))));
        assert!(matches!(builtin("heisenberg(0)"), Err(Error::UnknownGroup(_))));
        assert!(matches!(builtin("abelian(2;1)"), Err(Error::UnknownGroup(_))));
    }

    #[test]
    fn nilpotency_of_builtins() {
        for name in ["heisenberg(1)", "heisenberg(2)", "engel", "free_nilpotent(2,3)"] {
            let a = builtin(name).unwrap();
            let step = a.step() as usize;
            assert!(a.nested_brackets_vanish(step + 1), "{name}");
            assert!(!a.nested_brackets_vanish(step), "{name} step is sharp");
        }
    }
}
