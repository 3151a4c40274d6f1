//! Kernel-side quantization `Op_ε`, grid functions and the L² machinery.
//!
//! Integrals are written in the rescaled variable: with `y = x δ_ε(z)⁻¹`,
//! `Op_ε f(x) = ∫ f(x δ_ε(z)⁻¹) κ_x(z) dz`, so quadrature nodes do not depend on ε.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::group_law::Group;
use crate::homogeneous::{quasi_norm_weights, Dilation};
use crate::quadrature::{BoxDomain, Rule};

pub type Section<'a> = Box<dyn Fn(&[f64]) -> f64 + Send + Sync + 'a>;

/// A compactly x-supported family `x ↦ κ_x` of rapidly decaying functions.
pub trait Kernel: Send + Sync {
    fn group(&self) -> &Arc<Group>;

    /// κ_x vanishes for x outside this box.
    fn x_support(&self) -> BoxDomain;

    /// Half-widths of a z box outside which every κ_x has relative tail mass below 1e-8.
    fn z_extent(&self) -> Vec<f64>;

    /// `z ↦ κ_x(z)`, or `None` where κ_x is identically zero.
    fn section(&self, x: &[f64]) -> Option<Section<'_>>;

    fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        self.section(x).map_or(0.0, |s| s(z))
    }

    fn name(&self) -> String {
        "kernel".into()
    }
}

pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Product of one-dimensional plateaus: 1 within `inner` of `center` on every
/// axis, 0 beyond `outer`, smooth in between.
#[derive(Clone, Debug, PartialEq)]
pub struct Plateau {
    pub center: Vec<f64>,
    pub inner: Vec<f64>,
    pub outer: Vec<f64>,
}

impl Plateau {
    pub fn new(center: Vec<f64>, inner: Vec<f64>, outer: Vec<f64>) -> Result<Self> {
        if center.len() != inner.len() || center.len() != outer.len() {
            return Err(Error::InvalidArgument("plateau length mismatch".into()));
        }
        if inner.iter().zip(&outer).any(|(i, o)| !(0.0 <= *i && i < o)) {
            return Err(Error::InvalidArgument(
                "plateau needs 0 <= inner < outer on every axis".into(),
            ));
        }
        Ok(Plateau { center, inner, outer })
    }

    pub fn cube(dim: usize, inner: f64, outer: f64) -> Result<Self> {
        Plateau::new(vec![0.0; dim], vec![inner; dim], vec![outer; dim])
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = 1.0;
        for i in 0..self.center.len() {
            let d = (x[i] - self.center[i]).abs();
            if d >= self.outer[i] {
                return 0.0;
            }
            if d > self.inner[i] {
                v *= 1.0 - smooth_step((d - self.inner[i]) / (self.outer[i] - self.inner[i]));
            }
        }
        v
    }

    pub fn support(&self) -> BoxDomain {
        BoxDomain {
            lo: self.center.iter().zip(&self.outer).map(|(c, o)| c - o).collect(),
            hi: self.center.iter().zip(&self.outer).map(|(c, o)| c + o).collect(),
        }
    }
}

/// `κ_x(z) = χ(x) · P(z) · exp(−a |z|²)`.
#[derive(Clone, Debug)]
pub struct GaussianKernel {
    group: Arc<Group>,
    chi: Plateau,
    a: f64,
    /// Monomials `(exponents, coefficient)` of `P`.
    poly: Vec<(Vec<u32>, f64)>,
    extent: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(group: Arc<Group>, chi: Plateau, a: f64, poly: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        let n = group.dim();
        check_dim(n, chi.center.len())?;
        if !(a > 0.0) {
            return Err(Error::InvalidArgument(format!("envelope rate must be positive, got {a}")));
        }
        if poly.is_empty() {
            return Err(Error::InvalidArgument("kernel polynomial has no terms".into()));
        }
        for (e, _) in &poly {
            check_dim(n, e.len())?;
        }
        let degree = poly.iter().flat_map(|(e, _)| e.iter()).copied().max().unwrap_or(0);
        let r = tail_radius(a, degree, n);
        Ok(GaussianKernel {
            group,
            chi,
            a,
            poly,
            extent: vec![r; n],
        })
    }

    /// Unit-mass Gaussian (`P` constant) with a plateau that is 1 on
    /// `[-0.4, 0.4]ⁿ` and vanishes outside `[-0.5, 0.5]ⁿ`.
    pub fn standard(group: Arc<Group>) -> Result<Self> {
        let chi = Plateau::cube(group.dim(), 0.4, 0.5)?;
        Self::normalized(group, chi, 1.0)
    }

    pub fn normalized(group: Arc<Group>, chi: Plateau, a: f64) -> Result<Self> {
        let n = group.dim();
        let c = (a / std::f64::consts::PI).powf(n as f64 / 2.0);
        Self::new(group, chi, a, vec![(vec![0; n], c)])
    }

    pub fn chi(&self) -> &Plateau {
        &self.chi
    }

    pub fn rate(&self) -> f64 {
        self.a
    }

    pub fn profile(&self, z: &[f64]) -> f64 {
        let p: f64 = self
            .poly
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(z)
                    .map(|(&k, v)| v.powi(k as i32))
                    .product::<f64>()
            })
            .sum();
        let r2: f64 = z.iter().map(|v| v * v).sum();
        p * (-self.a * r2).exp()
    }
}

impl Kernel for GaussianKernel {
    fn group(&self) -> &Arc<Group> {
        &self.group
    }

    fn x_support(&self) -> BoxDomain {
        self.chi.support()
    }

    fn z_extent(&self) -> Vec<f64> {
        self.extent.clone()
    }

    fn section(&self, x: &[f64]) -> Option<Section<'_>> {
        let c = self.chi.eval(x);
        if c == 0.0 {
            return None;
        }
        Some(Box::new(move |z| c * self.profile(z)))
    }

    fn name(&self) -> String {
        format!("gaussian(a={})", self.a)
    }
}

/// Smallest radius `R` (rounded up to 0.05) with `n · T(R) < 1e-8`, where `T`
/// is the two-sided tail fraction of `(1+|t|)^d exp(−a t²)`.
fn tail_radius(a: f64, degree: u32, n: usize) -> f64 {
    let w = |t: f64| (1.0 + t).powi(degree as i32) * (-a * t * t).exp();
    let top = 1.0 + 40.0 / a.sqrt();
    let steps = 20_000;
    let h = top / steps as f64;
    // Cumulative integral from the top down, so tails are accurate.
    let mut tail = vec![0.0; steps + 1];
    for i in (0..steps).rev() {
        let t0 = i as f64 * h;
        tail[i] = tail[i + 1] + 0.5 * h * (w(t0) + w(t0 + h));
    }
    let total = tail[0];
    let target = 1e-8 / n as f64;
    let idx = (0..=steps).find(|&i| tail[i] / total < target).unwrap_or(steps);
    let r = idx as f64 * h;
    (r / 0.05).ceil() * 0.05
}

/// A function on the group that can be sampled anywhere.
pub trait Field: Send + Sync {
    fn eval(&self, y: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Field for F {
    fn eval(&self, y: &[f64]) -> f64 {
        self(y)
    }
}

/// `exp(−|y − c|² / (2 s²)) · cos(ω · (y − c))`.
#[derive(Clone, Debug, PartialEq)]
pub struct WavePacket {
    pub center: Vec<f64>,
    pub width: f64,
    pub frequency: Vec<f64>,
}

impl Field for WavePacket {
    fn eval(&self, y: &[f64]) -> f64 {
        let mut r2 = 0.0;
        let mut phase = 0.0;
        for i in 0..self.center.len() {
            let d = y[i] - self.center[i];
            r2 += d * d;
            phase += self.frequency[i] * d;
        }
        let g = (-r2 / (2.0 * self.width * self.width)).exp();
        if g == 0.0 {
            0.0
        } else {
            g * phase.cos()
        }
    }
}

/// Five smooth test functions with centres in `[-0.3, 0.3]ⁿ`, widths near 0.2
/// and frequencies from 0 to about 3.
pub fn test_bank(n: usize) -> Vec<WavePacket> {
    (0..5)
        .map(|k| {
            let center = (0..n)
                .map(|i| if k == 0 { 0.0 } else { 0.3 * ((1.3 * k as f64 + 2.1 * i as f64).sin()) })
                .collect();
            let frequency = (0..n)
                .map(|i| if k == 0 { 0.0 } else { 3.0 * (0.7 * k as f64 + 1.9 * i as f64).cos() })
                .collect();
            WavePacket {
                center,
                width: 0.2 + 0.02 * (k as f64 - 2.0),
                frequency,
            }
        })
        .collect()
}

/// Tensor grid: trapezoid nodes on `domain`, last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub domain: BoxDomain,
    pub resolution: Vec<usize>,
}

impl GridSpec {
    pub fn new(domain: BoxDomain, resolution: Vec<usize>) -> Result<Self> {
        check_dim(domain.dim(), resolution.len())?;
        if resolution.iter().any(|&r| r < 2) {
            return Err(Error::InvalidArgument(
                "grid resolution must be at least 2 per axis".into(),
            ));
        }
        Ok(GridSpec { domain, resolution })
    }

    pub fn cube(dim: usize, half: f64, points: usize) -> Result<Self> {
        GridSpec::new(BoxDomain::cube(dim, half), vec![points; dim])
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| (self.domain.hi[i] - self.domain.lo[i]) / (self.resolution[i] - 1) as f64)
            .collect()
    }

    pub fn rule(&self) -> Rule {
        Rule::tensor_trapezoid(&self.domain, &self.resolution).expect("validated grid")
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            idx[d] = flat % self.resolution[d];
            flat /= self.resolution[d];
        }
        idx
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        check_dim(spec.len(), values.len())?;
        Ok(GridFunction { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        let n = spec.len();
        GridFunction {
            spec,
            values: vec![0.0; n],
        }
    }

    pub fn sample(spec: &GridSpec, f: &dyn Field) -> Self {
        let rule = spec.rule();
        let values = rule.iter().map(|(p, _)| f.eval(p)).collect();
        GridFunction {
            spec: spec.clone(),
            values,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        if self.spec != other.spec {
            return Err(Error::InvalidArgument("grid functions live on different grids".into()));
        }
        Ok(GridFunction {
            spec: self.spec.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    /// CSV `i1,...,in,value` with 0-based indices and a trailing `#` line
    /// describing the grid.
    pub fn to_csv(&self) -> String {
        let n = self.spec.dim();
        let mut s = String::new();
        let head: Vec<String> = (1..=n).map(|i| format!("i{i}")).collect();
        s.push_str(&head.join(","));
        s.push_str(",value\n");
        for (flat, v) in self.values.iter().enumerate() {
            for i in self.spec.multi_index(flat) {
                s.push_str(&format!("{i},"));
            }
            s.push_str(&format!("{v:e}\n"));
        }
        s.push_str(&format!("# {}\n", self.spec_line()));
        s
    }

    fn spec_line(&self) -> String {
        let j = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";");
        let r = self
            .spec
            .resolution
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(";");
        format!(
            "grid lo={} hi={} resolution={}",
            j(&self.spec.domain.lo),
            j(&self.spec.domain.hi),
            r
        )
    }

    pub fn from_csv(text: &str) -> Result<GridFunction> {
        let bad = |m: &str| Error::Format(format!("grid csv: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty input"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.last() != Some(&"value") || cols.len() < 2 {
            return Err(bad("header must end with `value`"));
        }
        let n = cols.len() - 1;
        let mut rows: Vec<(Vec<usize>, f64)> = Vec::new();
        let mut spec: Option<GridSpec> = None;
        for line in lines {
            if let Some(rest) = line.trim().strip_prefix('#') {
                if let Some(g) = rest.trim().strip_prefix("grid ") {
                    spec = Some(parse_spec_line(g, n).map_err(|m| bad(&m))?);
                }
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != n + 1 {
                return Err(bad(&format!("row `{line}` has {} fields", f.len())));
            }
            let idx = f[..n]
                .iter()
                .map(|s| s.parse::<usize>().map_err(|_| bad(&format!("bad index `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            let v = f[n].parse::<f64>().map_err(|_| bad(&format!("bad value `{}`", f[n])))?;
            rows.push((idx, v));
        }
        let spec = spec.ok_or_else(|| bad("missing `# grid` line"))?;
        let mut values = vec![f64::NAN; spec.len()];
        for (idx, v) in rows {
            let mut flat = 0;
            for d in 0..n {
                if idx[d] >= spec.resolution[d] {
                    return Err(bad("index out of range"));
                }
                flat = flat * spec.resolution[d] + idx[d];
            }
            values[flat] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(bad("missing grid values"));
        }
        GridFunction::new(spec, values)
    }
}

fn parse_spec_line(s: &str, n: usize) -> std::result::Result<GridSpec, String> {
    let mut lo = None;
    let mut hi = None;
    let mut res = None;
    for part in s.split_whitespace() {
        let (k, v) = part.split_once('=').ok_or("bad grid field")?;
        let floats = || -> std::result::Result<Vec<f64>, String> {
            v.split(';').map(|x| x.parse::<f64>().map_err(|e| e.to_string())).collect()
        };
        match k {
            "lo" => lo = Some(floats()?),
            "hi" => hi = Some(floats()?),
            "resolution" => {
                res = Some(
                    v.split(';')
                        .map(|x| x.parse::<usize>().map_err(|e| e.to_string()))
                        .collect::<std::result::Result<Vec<_>, _>>()?,
                )
            }
            _ => return Err(format!("unknown grid field `{k}`")),
        }
    }
    let (lo, hi, res) = (
        lo.ok_or("missing lo")?,
        hi.ok_or("missing hi")?,
        res.ok_or("missing resolution")?,
    );
    if lo.len() != n || hi.len() != n || res.len() != n {
        return Err("grid dimension does not match header".into());
    }
    let domain = BoxDomain::new(lo, hi).map_err(|e| e.to_string())?;
    GridSpec::new(domain, res).map_err(|e| e.to_string())
}

impl Field for GridFunction {
    /// Multilinear interpolation; zero outside the grid box.
    fn eval(&self, y: &[f64]) -> f64 {
        let spec = &self.spec;
        let n = spec.dim();
        if !spec.domain.contains(y) {
            return 0.0;
        }
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for d in 0..n {
            let h = (spec.domain.hi[d] - spec.domain.lo[d]) / (spec.resolution[d] - 1) as f64;
            let t = (y[d] - spec.domain.lo[d]) / h;
            let i = (t.floor() as usize).min(spec.resolution[d] - 2);
            base[d] = i;
            frac[d] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut flat = 0;
            for d in 0..n {
                let bit = (corner >> d) & 1;
                w *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
                flat = flat * spec.resolution[d] + base[d] + bit;
            }
            if w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ZMethod {
    Trapezoid { resolution: usize },
    Halton { count: usize, seed: u64 },
}

/// Quadrature over the rescaled variable `z`. The box defaults to the
/// kernel's `z_extent`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZQuadrature {
    pub method: ZMethod,
    pub domain: Option<BoxDomain>,
}

impl ZQuadrature {
    pub fn trapezoid(resolution: usize) -> Self {
        ZQuadrature {
            method: ZMethod::Trapezoid { resolution },
            domain: None,
        }
    }

    pub fn halton(count: usize, seed: u64) -> Self {
        ZQuadrature {
            method: ZMethod::Halton { count, seed },
            domain: None,
        }
    }

    pub fn with_domain(mut self, domain: BoxDomain) -> Self {
        self.domain = Some(domain);
        self
    }

    /// Rule on the explicit box, or on the box spanned by `extent`. An
    /// explicit box that does not cover `extent` is a coverage error.
    pub fn rule(&self, extent: &[f64]) -> Result<Rule> {
        let natural = BoxDomain::symmetric(extent);
        let domain = match &self.domain {
            Some(d) => {
                if !d.contains_box(&natural) {
                    return Err(Error::Coverage(format!(
                        "z box {d:?} does not cover the kernel's effective support {natural:?}"
                    )));
                }
                d.clone()
            }
            None => natural,
        };
        match self.method {
            ZMethod::Trapezoid { resolution } => {
                Rule::tensor_trapezoid(&domain, &vec![resolution; domain.dim()])
            }
            ZMethod::Halton { count, seed } => Rule::halton(&domain, count, seed),
        }
    }

    /// Same method at a different density, for refinement studies.
    pub fn scaled(&self, factor: f64) -> Self {
        let method = match self.method {
            ZMethod::Trapezoid { resolution } => ZMethod::Trapezoid {
                resolution: (((resolution - 1) as f64 * factor).round() as usize + 1).max(2),
            },
            ZMethod::Halton { count, seed } => ZMethod::Halton {
                count: ((count as f64 * factor.powi(3)).round() as usize).max(1),
                seed: seed.wrapping_add(1),
            },
        };
        ZQuadrature {
            method,
            domain: self.domain.clone(),
        }
    }
}

impl fmt::Display for ZQuadrature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.method {
            ZMethod::Trapezoid { resolution } => write!(f, "trapezoid({resolution})"),
            ZMethod::Halton { count, seed } => write!(f, "halton({count},seed={seed})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpOptions {
    pub z: ZQuadrature,
    pub workers: usize,
}

impl Default for OpOptions {
    fn default() -> Self {
        OpOptions {
            z: ZQuadrature::trapezoid(32),
            workers: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OpOutput {
    pub values: GridFunction,
    pub warnings: Vec<String>,
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")));
    }
    Ok(())
}

/// Map `f` over `0..n` on `workers` threads; output order follows the index.
pub(crate) fn par_map<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    if workers <= 1 {
        return Ok((0..n).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

/// Kernel values of one section on the quadrature nodes, keeping only the
/// non-negligible ones.
pub(crate) struct SectionSamples {
    pub idx: Vec<u32>,
    pub vals: Vec<f64>,
}

pub(crate) fn sample_section(section: &dyn Fn(&[f64]) -> f64, rule: &Rule) -> SectionSamples {
    let raw: Vec<f64> = rule.iter().map(|(z, w)| w * section(z)).collect();
    let top = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = top * 1e-17;
    let mut idx = Vec::new();
    let mut vals = Vec::new();
    for (i, v) in raw.into_iter().enumerate() {
        if v.abs() > cut {
            idx.push(i as u32);
            vals.push(v);
        }
    }
    SectionSamples { idx, vals }
}

/// `Σ_z w_z κ(z) f_k(base δ_ε(z)⁻¹)` for every ε and every field; indexed `[ε][k]`.
pub(crate) fn convolve_at(
    group: &Group,
    base: &[f64],
    eps: &[f64],
    fields: &[&dyn Field],
    rule: &Rule,
    samples: &SectionSamples,
) -> Vec<Vec<f64>> {
    let n = group.dim();
    let law = group.law();
    let weights = group.weights();
    let mut u = vec![0.0; n];
    let mut y = vec![0.0; n];
    eps.iter()
        .map(|&e| {
            let scale: Vec<f64> = weights.iter().map(|&w| -e.powi(w as i32)).collect();
            let mut acc = vec![0.0; fields.len()];
            for (&i, &kv) in samples.idx.iter().zip(&samples.vals) {
                let z = rule.point(i as usize);
                for d in 0..n {
                    u[d] = scale[d] * z[d];
                }
                law.mul_into(base, &u, &mut y);
                for (a, f) in acc.iter_mut().zip(fields) {
                    *a += kv * f.eval(&y);
                }
            }
            acc
        })
        .collect()
}

fn check_kernel_grid(kernel: &dyn Kernel, n: usize) -> Result<()> {
    check_dim(kernel.group().dim(), n)
}

/// `ε^{−Q} κ_x(δ_{1/ε} z)`.
pub fn rescale_kernel(kernel: &dyn Kernel, eps: f64, x: &[f64], z: &[f64]) -> Result<f64> {
    check_eps(eps)?;
    let g = kernel.group();
    check_dim(g.dim(), x.len())?;
    check_dim(g.dim(), z.len())?;
    let q = g.homogeneous_dimension() as i32;
    let w = Dilation::of(g).apply_unchecked(1.0 / eps, z);
    Ok(eps.powi(-q) * kernel.eval(x, &w))
}

/// `Op_ε f` on the nodes of `grid`, for several fields and ε at once; indexed
/// `[ε][k]`.
pub fn op_apply_many(
    kernel: &dyn Kernel,
    eps: &[f64],
    fields: &[&dyn Field],
    grid: &GridSpec,
    opts: &OpOptions,
) -> Result<Vec<Vec<GridFunction>>> {
    for &e in eps {
        check_eps(e)?;
    }
    check_kernel_grid(kernel, grid.dim())?;
    let rule = opts.z.rule(&kernel.z_extent())?;
    let xr = grid.rule();
    let group = kernel.group().clone();
    let per_node = par_map(opts.workers, xr.len(), |i| {
        let x = xr.point(i);
        match kernel.section(x) {
            None => vec![vec![0.0; fields.len()]; eps.len()],
            Some(s) => {
                let samples = sample_section(&*s, &rule);
                convolve_at(&group, x, eps, fields, &rule, &samples)
            }
        }
    })?;
    Ok((0..eps.len())
        .map(|e| {
            (0..fields.len())
                .map(|k| GridFunction {
                    spec: grid.clone(),
                    values: per_node.iter().map(|v| v[e][k]).collect(),
                })
                .collect()
        })
        .collect())
}

pub fn op_apply(
    kernel: &dyn Kernel,
    eps: f64,
    f: &dyn Field,
    grid: &GridSpec,
    opts: &OpOptions,
) -> Result<OpOutput> {
    let mut out = op_apply_many(kernel, &[eps], &[f], grid, opts)?;
    Ok(OpOutput {
        values: out.remove(0).remove(0),
        warnings: Vec::new(),
    })
}

/// `Op_ε f(x) = Σ_y w_y f(y) ε^{−Q} κ_x(δ_{1/ε}(y⁻¹ x))` over the nodes of
/// `f`'s own grid. Warns when the rescaled kernel spans fewer than two cells.
pub fn op_apply_direct(
    kernel: &dyn Kernel,
    eps: f64,
    f: &GridFunction,
    grid: &GridSpec,
    workers: usize,
) -> Result<OpOutput> {
    check_eps(eps)?;
    check_kernel_grid(kernel, grid.dim())?;
    check_kernel_grid(kernel, f.spec.dim())?;
    let g = kernel.group().clone();
    let n = g.dim();
    let mut warnings = Vec::new();
    let h = f.spec.spacing();
    let extent = kernel.z_extent();
    for d in 0..n {
        let width = eps.powi(g.weights()[d] as i32) * extent[d] / 4.0;
        if width < 2.0 * h[d] {
            warnings.push(format!(
                "under-resolved: rescaled kernel width {width:.3e} on axis {} is below two cells ({:.3e})",
                d + 1,
                2.0 * h[d]
            ));
        }
    }
    let q = g.homogeneous_dimension() as i32;
    let dil = Dilation::of(&g);
    let yr = f.spec.rule();
    let xr = grid.rule();
    let scale = eps.powi(-q);
    let vals = par_map(workers, xr.len(), |i| {
        let x = xr.point(i);
        let Some(s) = kernel.section(x) else {
            return 0.0;
        };
        let mut acc = 0.0;
        for ((y, w), fy) in yr.iter().zip(&f.values) {
            if *fy == 0.0 {
                continue;
            }
            let z = dil.apply_unchecked(1.0 / eps, &g.inv_mul(y, x));
            acc += w * fy * s(&z);
        }
        acc * scale
    })?;
    Ok(OpOutput {
        values: GridFunction {
            spec: grid.clone(),
            values: vals,
        },
        warnings,
    })
}

/// `∫ max_x |κ_x(z)| dz` with the max over the nodes of `x_grid`.
pub fn a0_seminorm(kernel: &dyn Kernel, z: &ZQuadrature, x_grid: &GridSpec) -> Result<f64> {
    check_kernel_grid(kernel, x_grid.dim())?;
    let support = kernel.x_support();
    if !x_grid.domain.contains_box(&support) {
        return Err(Error::Coverage(format!(
            "x grid {:?} does not cover the kernel's x-support {support:?}",
            x_grid.domain
        )));
    }
    let rule = z.rule(&kernel.z_extent())?;
    let mut sup = vec![0.0f64; rule.len()];
    for (x, _) in x_grid.rule().iter() {
        if let Some(s) = kernel.section(x) {
            for (m, (zz, _)) in sup.iter_mut().zip(rule.iter()) {
                *m = m.max(s(zz).abs());
            }
        }
    }
    Ok(sup.iter().zip(rule.iter()).map(|(m, (_, w))| m * w).sum())
}

pub fn l2_inner(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    if f.spec != g.spec {
        return Err(Error::InvalidArgument("grid functions live on different grids".into()));
    }
    Ok(f.spec
        .rule()
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|((_, w), (a, b))| w * a * b)
        .sum())
}

pub fn l2_norm(f: &GridFunction) -> f64 {
    l2_inner(f, f).expect("same grid").max(0.0).sqrt()
}

/// `(Op_ε u, u)` on the grid.
pub fn ell_epsilon(
    kernel: &dyn Kernel,
    eps: f64,
    u: &dyn Field,
    grid: &GridSpec,
    opts: &OpOptions,
) -> Result<f64> {
    let op = op_apply(kernel, eps, u, grid, opts)?.values;
    l2_inner(&op, &GridFunction::sample(grid, u))
}

/// `χ₁(w)`: 1 for `|w| ≤ r₁`, 0 for `|w| ≥ r₀` in the quasi-norm.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalCutoff {
    pub r1: f64,
    pub r0: f64,
    weights: Vec<u32>,
}

impl DiagonalCutoff {
    pub fn new(group: &Group, r1: f64, r0: f64) -> Result<Self> {
        if !(r1 > 0.0 && r1 < r0) {
            return Err(Error::InvalidArgument(format!(
                "cut-off radii need 0 < r1 < r0, got r1={r1} r0={r0}"
            )));
        }
        Ok(DiagonalCutoff {
            r1,
            r0,
            weights: group.weights().to_vec(),
        })
    }

    pub fn eval(&self, w: &[f64]) -> f64 {
        let r = quasi_norm_weights(&self.weights, w);
        1.0 - smooth_step((r - self.r1) / (self.r0 - self.r1))
    }
}

/// `‖Op_ε f − Op_ε^χ f‖`, where the truncated operator multiplies the
/// kernel by `χ₁(y⁻¹ x)`.
pub fn diagonal_truncation_residual(
    kernel: &dyn Kernel,
    eps: f64,
    f: &dyn Field,
    cutoff: &DiagonalCutoff,
    grid: &GridSpec,
    opts: &OpOptions,
) -> Result<f64> {
    let dil = Dilation::of(kernel.group());
    let outside = TruncatedComplement {
        kernel,
        cutoff,
        dil,
        eps,
    };
    check_eps(eps)?;
    Ok(l2_norm(&op_apply(&outside, eps, f, grid, opts)?.values))
}

/// `κ_x(z) (1 − χ₁(δ_ε z))`: the part of the kernel the cut-off removes.
struct TruncatedComplement<'a> {
    kernel: &'a dyn Kernel,
    cutoff: &'a DiagonalCutoff,
    dil: Dilation,
    eps: f64,
}

impl Kernel for TruncatedComplement<'_> {
    fn group(&self) -> &Arc<Group> {
        self.kernel.group()
    }
    fn x_support(&self) -> BoxDomain {
        self.kernel.x_support()
    }
    fn z_extent(&self) -> Vec<f64> {
        self.kernel.z_extent()
    }
    fn section(&self, x: &[f64]) -> Option<Section<'_>> {
        let s = self.kernel.section(x)?;
        Some(Box::new(move |z| {
            let c = 1.0 - self.cutoff.eval(&self.dil.apply_unchecked(self.eps, z));
            if c == 0.0 {
                0.0
            } else {
                c * s(z)
            }
        }))
    }
}
