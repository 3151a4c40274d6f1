//! Unitary and kernel pull-backs along filtration-preserving maps, and the
//! conjugation experiment `U_Φ Op_ε(κ) U_Φ⁻¹` versus `Op_ε(𝓘_Φ κ)`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::convergence::ConvergenceTable;
use crate::error::{check_dim, Error, Result};
use crate::group_law::Group;
use crate::homogeneous::Dilation;
use crate::maps::SmoothMap;
use crate::pansu::{fmt_point, pansu_derivative};
use crate::quadrature::{BoxDomain, Rule};
use crate::quantize::{
    check_eps, convolve_at, l2_norm, par_map, sample_section, DiagonalCutoff, Field, GridFunction,
    GridSpec, Kernel, OpOptions, Section, ZQuadrature,
};

/// Smallest slack reported by [`invariance_experiment`].
pub const SLACK_FLOOR: f64 = 1e-10;

/// `(U_Φ f)(x) = J_Φ(x)^{1/2} f(Φ(x))`.
pub struct PulledBackField<F> {
    map: SmoothMap,
    f: F,
}

impl<F: Field> Field for PulledBackField<F> {
    fn eval(&self, x: &[f64]) -> f64 {
        let j = self.map.jacobian_determinant_unchecked(x);
        j.sqrt() * self.f.eval(&self.map.eval_unchecked(x))
    }
}

pub fn pullback_unitary<F: Field>(map: &SmoothMap, f: F) -> PulledBackField<F> {
    PulledBackField {
        map: map.clone(),
        f,
    }
}

/// `U_Φ⁻¹ f = U_{Φ⁻¹} f`.
pub fn inverse_pullback<F: Field>(map: &SmoothMap, f: F) -> Result<PulledBackField<F>> {
    let inv = map
        .inverse_map()
        .ok_or_else(|| Error::InvalidArgument(format!("`{}` has no inverse", map.name())))?;
    Ok(pullback_unitary(&inv, f))
}

/// `U_Φ f` sampled on `grid`, for `f` given on a grid of its own. Every image
/// node must land inside `f`'s box.
pub fn pullback_unitary_grid(map: &SmoothMap, f: &GridFunction, grid: &GridSpec) -> Result<GridFunction> {
    check_dim(map.source().dim(), grid.dim())?;
    check_dim(map.target().dim(), f.spec().dim())?;
    let rule = grid.rule();
    let mut bad = Vec::new();
    let mut values = Vec::with_capacity(rule.len());
    for (i, (x, _)) in rule.iter().enumerate() {
        let y = map.eval(x)?;
        if !f.spec().domain.contains(&y) {
            bad.push(i);
            values.push(0.0);
            continue;
        }
        values.push(map.jacobian_determinant(x)?.sqrt() * f.eval(&y));
    }
    if !bad.is_empty() {
        let shown: Vec<String> = bad.iter().take(8).map(|i| fmt_point(rule.point(*i))).collect();
        return Err(Error::Domain(format!(
            "{} grid nodes map outside the box of f, e.g. {}",
            bad.len(),
            shown.join(" ")
        )));
    }
    GridFunction::new(grid.clone(), values)
}

/// `(𝓘_Φ κ)_x(z) = J_Φ(x) κ_{Φ(x)}(PD_xΦ(z))`.
pub struct PulledBackKernel {
    map: SmoothMap,
    kernel: Arc<dyn Kernel>,
    support: BoxDomain,
    extent: Vec<f64>,
}

impl PulledBackKernel {
    pub fn map(&self) -> &SmoothMap {
        &self.map
    }

    pub fn base(&self) -> &Arc<dyn Kernel> {
        &self.kernel
    }
}

impl Kernel for PulledBackKernel {
    fn group(&self) -> &Arc<Group> {
        self.map.source()
    }

    fn x_support(&self) -> BoxDomain {
        self.support.clone()
    }

    fn z_extent(&self) -> Vec<f64> {
        self.extent.clone()
    }

    fn section(&self, x: &[f64]) -> Option<Section<'_>> {
        if !self.support.contains(x) || !self.map.in_domain(x) {
            return None;
        }
        let y = self.map.eval_unchecked(x);
        let s = self.kernel.section(&y)?;
        let pd = pansu_derivative(&self.map, x).ok()?;
        let j = self.map.jacobian_determinant_unchecked(x);
        let m = pd.matrix().clone();
        let n = m.ncols();
        Some(Box::new(move |z| {
            let mut w = vec![0.0; m.nrows()];
            for (r, wr) in w.iter_mut().enumerate() {
                for c in 0..n {
                    *wr += m[(r, c)] * z[c];
                }
            }
            j * s(&w)
        }))
    }

    fn name(&self) -> String {
        format!("pullback({}, {})", self.map.name(), self.kernel.name())
    }
}

fn box_samples(b: &BoxDomain, per_axis: usize) -> Vec<Vec<f64>> {
    let rule = Rule::tensor_trapezoid(b, &vec![per_axis; b.dim()]).expect("valid box");
    rule.iter().map(|(p, _)| p.to_vec()).collect()
}

/// Points on the faces of `b`, `per_axis` per face direction.
fn face_samples(b: &BoxDomain, per_axis: usize) -> Vec<Vec<f64>> {
    let n = b.dim();
    let mut out = Vec::new();
    for fixed in 0..n {
        for side in [b.lo[fixed], b.hi[fixed]] {
            if n == 1 {
                out.push(vec![side]);
                continue;
            }
            let lo: Vec<f64> = (0..n).filter(|&i| i != fixed).map(|i| b.lo[i]).collect();
            let hi: Vec<f64> = (0..n).filter(|&i| i != fixed).map(|i| b.hi[i]).collect();
            let face = BoxDomain::new(lo, hi).expect("valid face");
            for p in box_samples(&face, per_axis) {
                let mut q = p.clone();
                q.insert(fixed, side);
                out.push(q);
            }
        }
    }
    out
}

/// Build `𝓘_Φ κ`. Refuses when Φ fails the filtration test anywhere on a
/// sample of `Φ⁻¹(supp κ)`.
pub fn pullback_kernel(map: &SmoothMap, kernel: Arc<dyn Kernel>) -> Result<PulledBackKernel> {
    if !kernel.group().same_structure(map.target()) {
        return Err(Error::InvalidArgument(format!(
            "kernel lives on `{}` but `{}` maps into `{}`",
            kernel.group().name(),
            map.name(),
            map.target().name()
        )));
    }
    let inv = map.inverse_map().ok_or_else(|| {
        Error::InvalidArgument(format!("`{}` has no inverse; cannot pull back", map.name()))
    })?;
    let target_support = kernel.x_support();
    let n = map.source().dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for y in face_samples(&target_support, 17) {
        let x = inv.eval(&y)?;
        for d in 0..n {
            lo[d] = lo[d].min(x[d]);
            hi[d] = hi[d].max(x[d]);
        }
    }
    for d in 0..n {
        let pad = 0.02 * (hi[d] - lo[d]) + 1e-9;
        lo[d] -= pad;
        hi[d] += pad;
    }
    let support = BoxDomain::new(lo, hi)?;
    let base_extent = kernel.z_extent();
    let mut extent = vec![0.0f64; n];
    for y in box_samples(&target_support, 5) {
        let x = inv.eval(&y)?;
        let pd = pansu_derivative(map, &x)?;
        let pinv: DMatrix<f64> = pd
            .inverse()
            .ok_or_else(|| Error::Internal(format!("Pansu derivative of `{}` is singular", map.name())))?;
        for (i, e) in extent.iter_mut().enumerate() {
            let reach: f64 = (0..n).map(|j| pinv[(i, j)].abs() * base_extent[j]).sum();
            *e = e.max(reach);
        }
    }
    for e in &mut extent {
        *e *= 1.02;
    }
    Ok(PulledBackKernel {
        map: map.clone(),
        kernel,
        support,
        extent,
    })
}

#[derive(Clone, Debug)]
pub struct InvarianceConfig {
    pub x_grid: GridSpec,
    pub schedule: Vec<f64>,
    pub opts: OpOptions,
    /// Rerun with a coarser z rule to estimate quadrature slack.
    pub estimate_slack: bool,
    /// Evaluate the conjugated side on the nodes `PD_xΦ(z)` of the pulled-back
    /// rule, so both sides share one node set.
    pub paired_nodes: bool,
}

impl InvarianceConfig {
    /// 16³ x nodes on `[-1, 1]³`, 32³ z nodes, ε ∈ {2⁻², …, 2⁻⁶}.
    pub fn standard(dim: usize) -> Result<Self> {
        Ok(InvarianceConfig {
            x_grid: GridSpec::cube(dim, 1.0, 16)?,
            schedule: (2..=6).map(|k| 0.5f64.powi(k)).collect(),
            opts: OpOptions::default(),
            estimate_slack: true,
            paired_nodes: false,
        })
    }
}

#[derive(Clone, Debug)]
pub struct InvarianceOutcome {
    /// `errors[e][k]`: relative error for ε = `schedule[e]` and test function `k`.
    pub errors: Vec<Vec<f64>>,
    pub table: ConvergenceTable,
    pub slack: Option<f64>,
    pub f_norms: Vec<f64>,
}

impl InvarianceOutcome {
    pub fn max_errors(&self) -> Vec<f64> {
        self.errors
            .iter()
            .map(|row| row.iter().copied().fold(0.0, f64::max))
            .collect()
    }
}

struct Sides {
    lhs: Vec<Vec<Vec<f64>>>,
    rhs: Vec<Vec<Vec<f64>>>,
}

fn evaluate_sides(
    map: &SmoothMap,
    kernel: &dyn Kernel,
    pulled: &PulledBackKernel,
    fs: &[&dyn Field],
    gs: &[&dyn Field],
    eps: &[f64],
    grid: &GridSpec,
    z: &ZQuadrature,
    workers: usize,
    paired: bool,
) -> Result<Sides> {
    let rule_l = z.rule(&kernel.z_extent())?;
    let rule_r = z.rule(&pulled.z_extent())?;
    let xr = grid.rule();
    let g = map.source().clone();
    let h = map.target().clone();
    let zeros = vec![vec![0.0; fs.len()]; eps.len()];
    let per_node = par_map(workers, xr.len(), |i| {
        let x = xr.point(i);
        let rhs = match pulled.section(x) {
            Some(s) => convolve_at(&g, x, eps, fs, &rule_r, &sample_section(&*s, &rule_r)),
            None => zeros.clone(),
        };
        let y = map.eval_unchecked(x);
        let lhs = match kernel.section(&y) {
            Some(s) => {
                let j = map.jacobian_determinant_unchecked(x).sqrt();
                let paired_rule = if paired {
                    pansu_derivative(map, x).ok().map(|pd| rule_r.linear_image(pd.matrix()))
                } else {
                    None
                };
                let rule = paired_rule.as_ref().unwrap_or(&rule_l);
                let mut v = convolve_at(&h, &y, eps, gs, rule, &sample_section(&*s, rule));
                v.iter_mut().flatten().for_each(|c| *c *= j);
                v
            }
            None => zeros.clone(),
        };
        (lhs, rhs)
    })?;
    let collect = |side: usize| -> Vec<Vec<Vec<f64>>> {
        (0..eps.len())
            .map(|e| {
                (0..fs.len())
                    .map(|k| {
                        per_node
                            .iter()
                            .map(|p| if side == 0 { p.0[e][k] } else { p.1[e][k] })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    };
    Ok(Sides {
        lhs: collect(0),
        rhs: collect(1),
    })
}

fn grid_norm(grid: &GridSpec, v: &[f64]) -> f64 {
    l2_norm(&GridFunction::new(grid.clone(), v.to_vec()).expect("grid length"))
}

fn diff_norm(grid: &GridSpec, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
    grid_norm(grid, &d)
}

/// Checks that every product `x δ_ε z⁻¹` reached by the quadrature stays in
/// the domain of the map (and `Φ(x) δ_ε w⁻¹` in that of its inverse).
fn check_margins(
    map: &SmoothMap,
    kernel: &dyn Kernel,
    pulled: &PulledBackKernel,
    eps_max: f64,
) -> Result<()> {
    let inv = map.inverse_map().expect("checked by pullback_kernel");
    let corners = |b: &BoxDomain| box_samples(b, 2);
    let reach = |group: &Group, xs: &BoxDomain, ext: &[f64], dom: &SmoothMap| -> Result<()> {
        let dil = Dilation::of(group);
        for x in corners(xs) {
            for z in corners(&BoxDomain::symmetric(ext)) {
                let p = group.mul_inv(&x, &dil.apply_unchecked(eps_max, &z));
                if !dom.in_domain(&p) {
                    return Err(Error::Domain(format!(
                        "quadrature reaches {} outside the domain of `{}`; shrink the supports",
                        fmt_point(&p),
                        dom.name()
                    )));
                }
            }
        }
        Ok(())
    };
    reach(map.source(), &pulled.x_support(), &pulled.z_extent(), map)?;
    reach(map.target(), &kernel.x_support(), &kernel.z_extent(), &inv)
}

/// For each ε, `max_k ‖U_Φ Op_ε(κ) U_Φ⁻¹ f_k − Op_ε(𝓘_Φ κ) f_k‖ / ‖f_k‖` on the x grid.
pub fn invariance_experiment(
    map: &SmoothMap,
    kernel: Arc<dyn Kernel>,
    bank: &[&dyn Field],
    cfg: &InvarianceConfig,
) -> Result<InvarianceOutcome> {
    if bank.is_empty() {
        return Err(Error::InvalidArgument("empty test-function bank".into()));
    }
    for &e in &cfg.schedule {
        check_eps(e)?;
    }
    check_dim(map.source().dim(), cfg.x_grid.dim())?;
    let pulled = pullback_kernel(map, kernel.clone())?;
    if !cfg.x_grid.domain.contains_box(&pulled.x_support()) {
        return Err(Error::Coverage(format!(
            "x grid {:?} does not cover the pulled-back support {:?}",
            cfg.x_grid.domain,
            pulled.x_support()
        )));
    }
    let eps_max = cfg.schedule.iter().copied().fold(0.0, f64::max);
    check_margins(map, &*kernel, &pulled, eps_max)?;
    let inv_fields: Vec<_> = bank
        .iter()
        .map(|&f| inverse_pullback(map, move |y: &[f64]| f.eval(y)))
        .collect::<Result<_>>()?;
    let gs: Vec<&dyn Field> = inv_fields.iter().map(|f| f as &dyn Field).collect();
    let f_norms: Vec<f64> = bank
        .iter()
        .map(|f| l2_norm(&GridFunction::sample(&cfg.x_grid, *f)))
        .collect();
    if f_norms.contains(&0.0) {
        return Err(Error::InvalidArgument("test function vanishes on the x grid".into()));
    }
    let sides = evaluate_sides(
        map,
        &*kernel,
        &pulled,
        bank,
        &gs,
        &cfg.schedule,
        &cfg.x_grid,
        &cfg.opts.z,
        cfg.opts.workers,
        cfg.paired_nodes,
    )?;
    let errors: Vec<Vec<f64>> = (0..cfg.schedule.len())
        .map(|e| {
            (0..bank.len())
                .map(|k| diff_norm(&cfg.x_grid, &sides.lhs[e][k], &sides.rhs[e][k]) / f_norms[k])
                .collect()
        })
        .collect();
    let rows = cfg
        .schedule
        .iter()
        .zip(&errors)
        .map(|(&e, row)| (e, row.iter().copied().fold(0.0, f64::max)))
        .collect();
    let table = ConvergenceTable::new(rows)?;
    let slack = if cfg.estimate_slack {
        let n = cfg.schedule.len();
        let picks: Vec<usize> = if n > 1 { vec![0, n - 1] } else { vec![0] };
        let eps: Vec<f64> = picks.iter().map(|&i| cfg.schedule[i]).collect();
        let coarse = evaluate_sides(
            map,
            &*kernel,
            &pulled,
            bank,
            &gs,
            &eps,
            &cfg.x_grid,
            &cfg.opts.z.scaled(0.75),
            cfg.opts.workers,
            cfg.paired_nodes,
        )?;
        let mut s: f64 = 0.0;
        for (c, &i) in picks.iter().enumerate() {
            for k in 0..bank.len() {
                s = s.max(diff_norm(&cfg.x_grid, &sides.lhs[i][k], &coarse.lhs[c][k]) / f_norms[k]);
                s = s.max(diff_norm(&cfg.x_grid, &sides.rhs[i][k], &coarse.rhs[c][k]) / f_norms[k]);
            }
        }
        Some(s.max(SLACK_FLOOR))
    } else {
        None
    };
    Ok(InvarianceOutcome {
        errors,
        table,
        slack,
        f_norms,
    })
}

/// The two terms bounding the conjugation error at kernel level:
/// `I₁ = ∫ sup_x |J(x δ_ε z⁻¹)^{1/2} − J(x)^{1/2}| J(x)^{1/2} |κ_{Φ(x)}(PD_x z)| χ̃ dz` and
/// `I₂ = C₂ ∫ sup_x |κ_{Φ(x)}(w_ε(z)) − κ_{Φ(x)}(PD_x z)| χ̃ dz`, with
/// `w_ε(z) = δ_{1/ε}(Φ(x δ_ε z⁻¹)⁻¹ Φ(x))`; the sup runs over the nodes of `x_grid`.
pub fn error_decomposition(
    map: &SmoothMap,
    kernel: Arc<dyn Kernel>,
    eps: f64,
    x_grid: &GridSpec,
    z: &ZQuadrature,
    cutoff: Option<&DiagonalCutoff>,
) -> Result<(f64, f64)> {
    check_eps(eps)?;
    let pulled = pullback_kernel(map, kernel.clone())?;
    let rule = z.rule(&pulled.z_extent())?;
    let g = map.source();
    let h = map.target();
    let dil_g = Dilation::of(g);
    let dil_h = Dilation::of(h);
    let mut sup1 = vec![0.0f64; rule.len()];
    let mut sup2 = vec![0.0f64; rule.len()];
    let mut j_here: f64 = 0.0;
    let mut j_near: f64 = 0.0;
    for (x, _) in x_grid.rule().iter() {
        if !pulled.x_support().contains(x) {
            continue;
        }
        let y = map.eval(x)?;
        let Some(s) = kernel.section(&y) else {
            continue;
        };
        let pd = pansu_derivative(map, x)?;
        let jx = map.jacobian_determinant(x)?.sqrt();
        j_here = j_here.max(jx);
        for (i, (zz, _)) in rule.iter().enumerate() {
            let xp = g.mul_inv(x, &dil_g.apply_unchecked(eps, zz));
            let yp = map.eval(&xp)?;
            let w = dil_h.apply_unchecked(1.0 / eps, &h.inv_mul(&yp, &y));
            let cut = match cutoff {
                Some(c) => c.eval(&dil_h.apply_unchecked(eps, &w)),
                None => 1.0,
            };
            if cut == 0.0 {
                continue;
            }
            let jp = map.jacobian_determinant(&xp)?.sqrt();
            j_near = j_near.max(jp);
            let k_pd = s(&pd.apply(zz));
            let k_w = s(&w);
            sup1[i] = sup1[i].max((jp - jx).abs() * jx * k_pd.abs() * cut);
            sup2[i] = sup2[i].max((k_w - k_pd).abs() * cut);
        }
    }
    let i1: f64 = sup1.iter().zip(rule.iter()).map(|(v, (_, w))| v * w).sum();
    let i2: f64 = sup2.iter().zip(rule.iter()).map(|(v, (_, w))| v * w).sum();
    Ok((i1, j_here * j_near * i2))
}
