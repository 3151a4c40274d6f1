//! Smooth maps between open boxes of graded groups, and the registry of test maps.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::group_law::Group;
use crate::homogeneous::Dilation;
use crate::quadrature::BoxDomain;

pub type VecFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type MatFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Default half-width of the box domain of registered polynomial maps.
pub const DEFAULT_DOMAIN_HALF_WIDTH: f64 = 100.0;

#[derive(Clone)]
struct Branch {
    eval: VecFn,
    jacobian: Option<MatFn>,
    det: Option<ScalarFn>,
    domain: BoxDomain,
}

impl Branch {
    fn new(eval: VecFn, jacobian: Option<MatFn>, domain: BoxDomain) -> Self {
        Branch {
            eval,
            jacobian,
            det: None,
            domain,
        }
    }

    fn abs_det(&self, x: &[f64], m: usize) -> f64 {
        match &self.det {
            Some(d) => d(x).abs(),
            None => match &self.jacobian {
                Some(j) => j(x).determinant().abs(),
                None => fd_jacobian(&*self.eval, x, m).determinant().abs(),
            },
        }
    }
}

#[derive(Clone)]
pub struct SmoothMap {
    name: String,
    source: Arc<Group>,
    target: Arc<Group>,
    forward: Branch,
    inverse: Option<Branch>,
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothMap")
            .field("name", &self.name)
            .field("source", &self.source.name())
            .field("target", &self.target.name())
            .field("domain", &self.forward.domain)
            .field("analytic_jacobian", &self.forward.jacobian.is_some())
            .field("invertible", &self.inverse.is_some())
            .finish()
    }
}

impl SmoothMap {
    pub fn new(
        name: impl Into<String>,
        source: Arc<Group>,
        target: Arc<Group>,
        domain: BoxDomain,
        eval: VecFn,
    ) -> Result<Self> {
        check_dim(source.dim(), domain.dim())?;
        Ok(SmoothMap {
            name: name.into(),
            source,
            target,
            forward: Branch::new(eval, None, domain),
            inverse: None,
        })
    }

    pub fn with_jacobian(mut self, jacobian: MatFn) -> Self {
        self.forward.jacobian = Some(jacobian);
        self
    }

    /// Closed-form `det D_xΦ`, and optionally that of the inverse.
    pub fn with_determinants(mut self, det: ScalarFn, inverse_det: Option<ScalarFn>) -> Self {
        self.forward.det = Some(det);
        if let (Some(b), Some(d)) = (self.inverse.as_mut(), inverse_det) {
            b.det = Some(d);
        }
        self
    }

    /// Attach the inverse, defined on `domain` in the target group.
    pub fn with_inverse(mut self, domain: BoxDomain, eval: VecFn, jacobian: Option<MatFn>) -> Self {
        self.inverse = Some(Branch::new(eval, jacobian, domain));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &Arc<Group> {
        &self.source
    }

    pub fn target(&self) -> &Arc<Group> {
        &self.target
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.forward.domain
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.forward.jacobian.is_some()
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.forward.domain.contains(x)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        check_dim(self.source.dim(), x.len())?;
        if !self.in_domain(x) {
            return Err(Error::Domain(format!(
                "{x:?} lies outside the domain of `{}`",
                self.name
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let y = (self.forward.eval)(x);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("`{}` is not finite at {x:?}", self.name)));
        }
        Ok(y)
    }

    /// Evaluation without the domain check, for inner loops whose nodes were
    /// validated up front.
    pub fn eval_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (self.forward.eval)(x)
    }

    /// `D_xΦ`: the analytic Jacobian if one is attached, else finite differences.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        Ok(match &self.forward.jacobian {
            Some(j) => j(x),
            None => fd_jacobian(&*self.forward.eval, x, self.target.dim()),
        })
    }

    pub fn fd_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        Ok(fd_jacobian(&*self.forward.eval, x, self.target.dim()))
    }

    /// `J_Φ(x) = |det D_xΦ|` (Lebesgue measure is Haar measure on both sides).
    pub fn jacobian_determinant(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        if self.source.dim() != self.target.dim() {
            return Err(Error::InvalidArgument(format!(
                "`{}` maps between groups of different dimension",
                self.name
            )));
        }
        Ok(self.jacobian_determinant_unchecked(x))
    }

    pub fn jacobian_determinant_unchecked(&self, x: &[f64]) -> f64 {
        self.forward.abs_det(x, self.target.dim())
    }

    pub fn is_invertible(&self) -> bool {
        self.inverse.is_some()
    }

    pub fn inverse_map(&self) -> Option<SmoothMap> {
        let inv = self.inverse.clone()?;
        Some(SmoothMap {
            name: format!("inverse({})", self.name),
            source: self.target.clone(),
            target: self.source.clone(),
            forward: inv,
            inverse: Some(self.forward.clone()),
        })
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &SmoothMap) -> Result<SmoothMap> {
        if !inner.target.same_structure(&self.source) {
            return Err(Error::InvalidArgument(format!(
                "cannot compose `{}` after `{}`: group mismatch",
                self.name, inner.name
            )));
        }
        let (outer_a, inner_a) = (self.clone(), inner.clone());
        let eval: VecFn = Arc::new(move |x| outer_a.eval_unchecked(&inner_a.eval_unchecked(x)));
        let (outer_b, inner_b) = (self.clone(), inner.clone());
        let jac: MatFn = Arc::new(move |x| {
            let y = inner_b.eval_unchecked(x);
            let jo = match &outer_b.forward.jacobian {
                Some(j) => j(&y),
                None => fd_jacobian(&*outer_b.forward.eval, &y, outer_b.target.dim()),
            };
            let ji = match &inner_b.forward.jacobian {
                Some(j) => j(x),
                None => fd_jacobian(&*inner_b.forward.eval, x, inner_b.target.dim()),
            };
            jo * ji
        });
        let mut out = SmoothMap::new(
            format!("{}∘{}", self.name, inner.name),
            inner.source.clone(),
            self.target.clone(),
            inner.forward.domain.clone(),
            eval,
        )?
        .with_jacobian(jac);
        if self.forward.det.is_some() && inner.forward.det.is_some() {
            let (o, i) = (self.clone(), inner.clone());
            out.forward.det = Some(Arc::new(move |x| {
                let d_inner = (i.forward.det.as_ref().unwrap())(x);
                d_inner * (o.forward.det.as_ref().unwrap())(&i.eval_unchecked(x))
            }));
        }
        if let (Some(a), Some(b)) = (self.inverse_map(), inner.inverse_map()) {
            let eval: VecFn = Arc::new(move |x| b.eval_unchecked(&a.eval_unchecked(x)));
            out.inverse = Some(Branch::new(eval, None, self.target_domain_hint()));
        }
        Ok(out)
    }

    fn target_domain_hint(&self) -> BoxDomain {
        match &self.inverse {
            Some(b) => b.domain.clone(),
            None => default_domain(self.target.dim()),
        }
    }
}

/// Central differences with step `h = 1e-5 (1 + |x_i|)` and one Richardson level.
pub fn fd_jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], m: usize) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 1e-5 * (1.0 + x[j].abs());
        let central = |xp: &mut Vec<f64>, h: f64| -> Vec<f64> {
            xp[j] = x[j] + h;
            let fp = f(xp);
            xp[j] = x[j] - h;
            let fm = f(xp);
            xp[j] = x[j];
            fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        };
        let d1 = central(&mut xp, h);
        let d2 = central(&mut xp, h / 2.0);
        for i in 0..m {
            jac[(i, j)] = (4.0 * d2[i] - d1[i]) / 3.0;
        }
    }
    jac
}

fn default_domain(dim: usize) -> BoxDomain {
    BoxDomain::cube(dim, DEFAULT_DOMAIN_HALF_WIDTH)
}

fn require_heisenberg(group: &Group, id: &str) -> Result<()> {
    let h = Group::builtin("heisenberg(1)")?;
    if group.same_structure(&h) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "map `{id}` is defined on heisenberg(1) only, not on `{}`",
            group.name()
        )))
    }
}

pub fn identity(group: Arc<Group>) -> SmoothMap {
    let n = group.dim();
    let d = default_domain(n);
    SmoothMap::new("identity", group.clone(), group, d.clone(), Arc::new(|x| x.to_vec()))
        .expect("dimensions agree")
        .with_jacobian(Arc::new(move |_| DMatrix::identity(n, n)))
        .with_inverse(d, Arc::new(|x| x.to_vec()), Some(Arc::new(move |_| DMatrix::identity(n, n))))
        .with_determinants(one(), Some(one()))
}

fn one() -> ScalarFn {
    Arc::new(|_| 1.0)
}

/// `L_a(x) = a x`.
pub fn left_translation(group: Arc<Group>, a: Vec<f64>) -> Result<SmoothMap> {
    check_dim(group.dim(), a.len())?;
    let a_inv = group.inverse(&a);
    let d = default_domain(group.dim());
    let (g1, g2, g3, g4) = (group.clone(), group.clone(), group.clone(), group.clone());
    let (a1, a2, b1, b2) = (a.clone(), a.clone(), a_inv.clone(), a_inv);
    Ok(SmoothMap::new(
        format!("left_translation({})", join(&a)),
        group.clone(),
        group,
        d.clone(),
        Arc::new(move |x| g1.mul(&a1, x)),
    )?
    .with_jacobian(Arc::new(move |x| g2.law().right_differential(&a2, x)))
    .with_inverse(
        d,
        Arc::new(move |x| g3.mul(&b1, x)),
        Some(Arc::new(move |x| g4.law().right_differential(&b2, x))),
    )
    .with_determinants(one(), Some(one())))
}

pub fn dilation(group: Arc<Group>, r: f64) -> Result<SmoothMap> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dilation factor must be positive, got {r}"
        )));
    }
    let dil = Dilation::of(&group);
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(dil.diagonal(r)));
    let diag_inv = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(dil.diagonal(1.0 / r)));
    let d = default_domain(group.dim());
    let det = r.powi(group.homogeneous_dimension() as i32);
    let dil2 = dil.clone();
    Ok(SmoothMap::new(
        format!("dilation({r})"),
        group.clone(),
        group,
        d.clone(),
        Arc::new(move |x| dil.apply_unchecked(r, x)),
    )?
    .with_jacobian(Arc::new(move |_| diag.clone()))
    .with_inverse(
        d,
        Arc::new(move |x| dil2.apply_unchecked(1.0 / r, x)),
        Some(Arc::new(move |_| diag_inv.clone())),
    )
    .with_determinants(Arc::new(move |_| det), Some(Arc::new(move |_| 1.0 / det))))
}

/// `(p, q, t) ↦ (p, q + p², t + p³/6)` on heisenberg(1).
pub fn contact_shear(group: Arc<Group>) -> Result<SmoothMap> {
    require_heisenberg(&group, "contact_shear")?;
    let shear = |s: f64| -> VecFn {
        Arc::new(move |x: &[f64]| {
            let p = x[0];
            vec![p, x[1] + s * p * p, x[2] + s * p * p * p / 6.0]
        })
    };
    let jac = |s: f64| -> MatFn {
        Arc::new(move |x: &[f64]| {
            let p = x[0];
            DMatrix::from_row_slice(
                3,
                3,
                &[1.0, 0.0, 0.0, 2.0 * s * p, 1.0, 0.0, s * p * p / 2.0, 0.0, 1.0],
            )
        })
    };
    let d = default_domain(3);
    Ok(
        SmoothMap::new("contact_shear", group.clone(), group, d.clone(), shear(1.0))?
            .with_jacobian(jac(1.0))
            .with_inverse(d, shear(-1.0), Some(jac(-1.0)))
            .with_determinants(one(), Some(one())),
    )
}

/// `(p, q, t) ↦ (p, q + c p, t)`: a linear automorphism of heisenberg(1).
pub fn symplectic_shear(group: Arc<Group>, c: f64) -> Result<SmoothMap> {
    require_heisenberg(&group, "symplectic_shear")?;
    let lin = |s: f64| -> VecFn { Arc::new(move |x: &[f64]| vec![x[0], x[1] + s * x[0], x[2]]) };
    let mat = |s: f64| -> MatFn {
        Arc::new(move |_: &[f64]| {
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, s, 1.0, 0.0, 0.0, 0.0, 1.0])
        })
    };
    let d = default_domain(3);
    Ok(SmoothMap::new(
        format!("symplectic_shear({c})"),
        group.clone(),
        group,
        d.clone(),
        lin(c),
    )?
    .with_jacobian(mat(c))
    .with_inverse(d, lin(-c), Some(mat(-c)))
    .with_determinants(one(), Some(one())))
}

/// `(p, q, t) ↦ (p, t, q)`.
pub fn coord_swap(group: Arc<Group>) -> Result<SmoothMap> {
    require_heisenberg(&group, "coord_swap")?;
    let swap: VecFn = Arc::new(|x: &[f64]| vec![x[0], x[2], x[1]]);
    let p: MatFn = Arc::new(|_: &[f64]| {
        DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0])
    });
    let d = default_domain(3);
    Ok(
        SmoothMap::new("coord_swap", group.clone(), group, d.clone(), swap.clone())?
            .with_jacobian(p.clone())
            .with_inverse(d, swap, Some(p))
            .with_determinants(one(), Some(one())),
    )
}

/// The coordinate identity from heisenberg(1) to the abelian group with weights (1,1,2).
pub fn heis_to_abelian_identity(group: Arc<Group>) -> Result<SmoothMap> {
    require_heisenberg(&group, "heis_to_abelian_identity")?;
    let target = Arc::new(Group::builtin("abelian(3;1,1,2)")?);
    let id = || -> MatFn { Arc::new(|_: &[f64]| DMatrix::identity(3, 3)) };
    let d = default_domain(3);
    Ok(SmoothMap::new(
        "heis_to_abelian_identity",
        group,
        target,
        d.clone(),
        Arc::new(|x| x.to_vec()),
    )?
    .with_jacobian(id())
    .with_inverse(d, Arc::new(|x| x.to_vec()), Some(id()))
    .with_determinants(one(), Some(one())))
}

/// Ids accepted by [`test_map`].
pub const MAP_IDS: &[&str] = &[
    "identity",
    "left_translation(a1,...,an)",
    "dilation(r)",
    "contact_shear",
    "symplectic_shear(c)",
    "coord_swap",
    "heis_to_abelian_identity",
];

/// Look up a registered test map by id, e.g. `dilation(2)` or
/// `left_translation(0.1,0.2,0.3)`.
pub fn test_map(id: &str, group: Arc<Group>) -> Result<SmoothMap> {
    let id = id.trim();
    let (head, args) = match id.split_once('(') {
        Some((h, rest)) => {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| Error::UnknownMap(id.to_string()))?;
            let vals = inner
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidArgument(format!("bad map parameter `{s}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            (h.trim(), Some(vals))
        }
        None => (id, None),
    };
    let single = |args: Option<Vec<f64>>| -> Result<f64> {
        match args.as_deref() {
            Some([v]) => Ok(*v),
            _ => Err(Error::InvalidArgument(format!("`{head}` takes one parameter"))),
        }
    };
    match (head, args) {
        ("identity", None) => Ok(identity(group)),
        ("left_translation", Some(a)) => left_translation(group, a),
        ("dilation", a) => dilation(group, single(a)?),
        ("contact_shear", None) => contact_shear(group),
        ("symplectic_shear", a) => symplectic_shear(group, single(a)?),
        ("coord_swap", None) => coord_swap(group),
        ("heis_to_abelian_identity", None) => heis_to_abelian_identity(group),
        _ => Err(Error::UnknownMap(id.to_string())),
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
