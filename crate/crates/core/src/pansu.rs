//! Abstract differentials, stratum blocks, and Pansu derivatives of smooth maps.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::convergence::{least_squares, richardson_limit, ConvergenceTable};
use crate::error::{check_dim, Error, Result};
use crate::homogeneous::Dilation;
use crate::maps::SmoothMap;

pub const DEFAULT_TOL: f64 = 1e-6;

/// Default probe schedule `ε_k = 2^{-k}`, `k = 1..10`.
pub fn default_schedule() -> Vec<f64> {
    (1..=10).map(|k| 0.5f64.powi(k)).collect()
}

/// Schedule `2^{-lo} … 2^{-hi}`.
pub fn dyadic_schedule(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 0.5f64.powi(k)).collect()
}

/// A dense matrix whose rows are partitioned by target weights and columns by
/// source weights. Block `(i, j)` maps weight-`j` coordinates to weight-`i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    matrix: DMatrix<f64>,
    row_weights: Vec<u32>,
    col_weights: Vec<u32>,
}

impl BlockMatrix {
    pub fn new(matrix: DMatrix<f64>, row_weights: &[u32], col_weights: &[u32]) -> Result<Self> {
        check_dim(row_weights.len(), matrix.nrows())?;
        check_dim(col_weights.len(), matrix.ncols())?;
        Ok(BlockMatrix {
            matrix,
            row_weights: row_weights.to_vec(),
            col_weights: col_weights.to_vec(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn row_weights(&self) -> &[u32] {
        &self.row_weights
    }

    pub fn col_weights(&self) -> &[u32] {
        &self.col_weights
    }

    pub fn block(&self, i: u32, j: u32) -> DMatrix<f64> {
        let rows: Vec<usize> = (0..self.row_weights.len())
            .filter(|&r| self.row_weights[r] == i)
            .collect();
        let cols: Vec<usize> = (0..self.col_weights.len())
            .filter(|&c| self.col_weights[c] == j)
            .collect();
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.matrix[(rows[a], cols[b])])
    }

    /// Largest absolute entry over blocks with target weight above source
    /// weight, with the block that attains it.
    pub fn below_diagonal_max(&self) -> (f64, Option<(u32, u32)>) {
        let mut best = (0.0, None);
        for (r, &wi) in self.row_weights.iter().enumerate() {
            for (c, &wj) in self.col_weights.iter().enumerate() {
                if wi > wj {
                    let v = self.matrix[(r, c)].abs();
                    if best.1.is_none() || v > best.0 {
                        best = (v, Some((wi, wj)));
                    }
                }
            }
        }
        best
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Zero every entry outside the diagonal blocks.
    pub fn block_diagonal(&self) -> BlockMatrix {
        let m = DMatrix::from_fn(self.matrix.nrows(), self.matrix.ncols(), |r, c| {
            if self.row_weights[r] == self.col_weights[c] {
                self.matrix[(r, c)]
            } else {
                0.0
            }
        });
        BlockMatrix {
            matrix: m,
            row_weights: self.row_weights.clone(),
            col_weights: self.col_weights.clone(),
        }
    }
}

/// `𝔡ₓΦ = τ_H(Φ(x))⁻¹ · D_xΦ · τ_G(x)`.
pub fn abstract_differential(map: &SmoothMap, x: &[f64]) -> Result<DMatrix<f64>> {
    let y = map.eval(x)?;
    let d = map.jacobian(x)?;
    let tau_h = map.target().tau(&y);
    let tau_h_inv = tau_h
        .try_inverse()
        .ok_or_else(|| Error::Internal("left-translation differential is singular".into()))?;
    Ok(tau_h_inv * d * map.source().tau(x))
}

fn block_matrix(map: &SmoothMap, m: DMatrix<f64>) -> Result<BlockMatrix> {
    BlockMatrix::new(m, map.target().weights(), map.source().weights())
}

#[derive(Clone, Debug)]
pub struct PansuReport {
    pub map: String,
    pub x: Vec<f64>,
    pub m: BlockMatrix,
    pub below_diag_norm: f64,
    /// Block `(i, j)` attaining `below_diag_norm`.
    pub witness: Option<(u32, u32)>,
    pub tol: f64,
    pub verdict: bool,
    pub pm: BlockMatrix,
    /// Morphism defect of `PM` on two fixed probe vectors (filtration-preserving maps only).
    pub morphism_residual: Option<f64>,
    pub jacobian_residual: Option<f64>,
}

impl PansuReport {
    pub fn threshold(&self) -> f64 {
        self.tol * (1.0 + self.m.max_abs())
    }
}

fn fmt_matrix(f: &mut fmt::Formatter<'_>, m: &DMatrix<f64>) -> fmt::Result {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.9}", m[(r, c)])).collect();
        writeln!(f, "  [{}]", row.join(", "))?;
    }
    Ok(())
}

impl fmt::Display for PansuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "map={}", self.map)?;
        writeln!(f, "x={}", fmt_point(&self.x))?;
        writeln!(f, "M=")?;
        fmt_matrix(f, self.m.matrix())?;
        writeln!(f, "below_diag_norm={:e}", self.below_diag_norm)?;
        if let Some((i, j)) = self.witness {
            writeln!(f, "witness_block=({i},{j})")?;
        }
        writeln!(f, "threshold={:e}", self.threshold())?;
        writeln!(f, "verdict={}", self.verdict)?;
        if self.verdict {
            writeln!(f, "PM=")?;
            fmt_matrix(f, self.pm.matrix())?;
        }
        if let Some(r) = self.morphism_residual {
            writeln!(f, "morphism_residual={r:e}")?;
        }
        if let Some(r) = self.jacobian_residual {
            writeln!(f, "jacobian_residual={r:e}")?;
        }
        Ok(())
    }
}

pub(crate) fn fmt_point(x: &[f64]) -> String {
    let v: Vec<String> = x.iter().map(|c| c.to_string()).collect();
    format!("({})", v.join(","))
}

pub fn check_filtration_preserving(map: &SmoothMap, x: &[f64], tol: f64) -> Result<PansuReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let m = block_matrix(map, abstract_differential(map, x)?)?;
    let (below, witness) = m.below_diagonal_max();
    let verdict = below < tol * (1.0 + m.max_abs());
    let pm = m.block_diagonal();
    let mut report = PansuReport {
        map: map.name().to_string(),
        x: x.to_vec(),
        m,
        below_diag_norm: below,
        witness,
        tol,
        verdict,
        pm,
        morphism_residual: None,
        jacobian_residual: None,
    };
    if verdict {
        let n = map.source().dim();
        let z1: Vec<f64> = (0..n).map(|i| 0.5 - 0.3 * i as f64).collect();
        let z2: Vec<f64> = (0..n).map(|i| -0.4 + 0.7 * ((i * 3 % 5) as f64 / 5.0)).collect();
        let pd = PansuDerivative::from_report(&report, map);
        report.morphism_residual = Some(pd.morphism_defect(&z1, &z2));
        let j = map.jacobian_determinant(x)?;
        report.jacobian_residual = Some((j - pd.determinant().abs()).abs());
    }
    Ok(report)
}

/// The Pansu derivative at a point: the block-diagonal part `PM` of the
/// abstract differential, which in exponential coordinates is both the Lie
/// algebra morphism and the group morphism.
#[derive(Clone, Debug)]
pub struct PansuDerivative {
    pm: BlockMatrix,
    target: std::sync::Arc<crate::group_law::Group>,
    source: std::sync::Arc<crate::group_law::Group>,
}

impl PansuDerivative {
    fn from_report(report: &PansuReport, map: &SmoothMap) -> Self {
        PansuDerivative {
            pm: report.pm.clone(),
            target: map.target().clone(),
            source: map.source().clone(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.pm.matrix()
    }

    pub fn blocks(&self) -> &BlockMatrix {
        &self.pm
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let m = self.pm.matrix();
        (0..m.nrows())
            .map(|r| (0..m.ncols()).map(|c| m[(r, c)] * z[c]).sum())
            .collect()
    }

    pub fn determinant(&self) -> f64 {
        let m = self.pm.matrix();
        if m.is_square() {
            m.determinant()
        } else {
            0.0
        }
    }

    pub fn inverse(&self) -> Option<DMatrix<f64>> {
        self.pm.matrix().clone().try_inverse()
    }

    /// `max |PD(z₁ z₂) − PD(z₁) PD(z₂)|`.
    pub fn morphism_defect(&self, z1: &[f64], z2: &[f64]) -> f64 {
        let lhs = self.apply(&self.source.mul(z1, z2));
        let rhs = self.target.mul(&self.apply(z1), &self.apply(z2));
        max_abs_diff(&lhs, &rhs)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

fn euclid_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// `PD_xΦ`, refusing maps that are not filtration preserving at `x`.
pub fn pansu_derivative(map: &SmoothMap, x: &[f64]) -> Result<PansuDerivative> {
    pansu_derivative_tol(map, x, DEFAULT_TOL)
}

pub fn pansu_derivative_tol(map: &SmoothMap, x: &[f64], tol: f64) -> Result<PansuDerivative> {
    let report = check_filtration_preserving(map, x, tol)?;
    if !report.verdict {
        return Err(Error::NotFiltrationPreserving {
            map: map.name().to_string(),
            at: fmt_point(x),
            block: report.witness.unwrap_or((0, 0)),
            value: report.below_diag_norm,
        });
    }
    Ok(PansuDerivative::from_report(&report, map))
}

/// `δ_{1/ε}(Φ(x)⁻¹ Φ(x δ_ε z))`.
pub fn difference_quotient(map: &SmoothMap, x: &[f64], z: &[f64], eps: f64) -> Result<Vec<f64>> {
    let src = map.source();
    let tgt = map.target();
    let xz = src.mul(x, &Dilation::of(src).apply(eps, z)?);
    let w = tgt.inv_mul(&map.eval(x)?, &map.eval(&xz)?);
    Dilation::of(tgt).apply(1.0 / eps, &w)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Diagnosis {
    Converged { limit: Vec<f64>, rate: Option<f64> },
    Diverged { rate: f64 },
}

#[derive(Clone, Debug)]
pub struct LimitProbe {
    /// `(ε, δ_{1/ε}(Φ(x)⁻¹ Φ(x δ_ε z)))` for every ε that stayed in the domain.
    pub rows: Vec<(f64, Vec<f64>)>,
    /// Max-norm Cauchy gap between consecutive rows; `gaps[k]` belongs to `rows[k + 1]`.
    pub gaps: Vec<f64>,
    /// Per-coordinate Cauchy-gap rates (`None` when the coordinate never moves).
    pub coordinate_rates: Vec<Option<f64>>,
    pub diagnosis: Diagnosis,
    pub warnings: Vec<String>,
}

impl LimitProbe {
    pub fn converged(&self) -> bool {
        matches!(self.diagnosis, Diagnosis::Converged { .. })
    }

    pub fn limit(&self) -> Option<&[f64]> {
        match &self.diagnosis {
            Diagnosis::Converged { limit, .. } => Some(limit),
            Diagnosis::Diverged { .. } => None,
        }
    }

    pub fn rate(&self) -> Option<f64> {
        match &self.diagnosis {
            Diagnosis::Converged { rate, .. } => *rate,
            Diagnosis::Diverged { rate } => Some(*rate),
        }
    }
}

fn gap_floor(scale: f64) -> f64 {
    1e-9 * (1.0 + scale)
}

fn rate_fit(eps: &[f64], gaps: &[f64], floor: f64) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(gaps)
        .filter(|(_, &g)| g > floor)
        .map(|(e, g)| (e.ln(), g.ln()))
        .unzip();
    least_squares(&xs, &ys).map(|f| f.0)
}

/// Samples the Pansu difference quotient along `schedule` (strictly
/// decreasing) and diagnoses convergence from the Cauchy gaps.
pub fn pansu_limit_probe(
    map: &SmoothMap,
    x: &[f64],
    z: &[f64],
    schedule: &[f64],
) -> Result<LimitProbe> {
    check_dim(map.source().dim(), z.len())?;
    if schedule.windows(2).any(|w| !(w[1] < w[0])) || schedule.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument(
            "schedule must be positive and strictly decreasing".into(),
        ));
    }
    map.eval(x)?;
    let n_t = map.target().dim();
    let mut warnings = Vec::new();
    if z.iter().all(|&c| c == 0.0) {
        return Ok(LimitProbe {
            rows: schedule.iter().map(|&e| (e, vec![0.0; n_t])).collect(),
            gaps: vec![0.0; schedule.len().saturating_sub(1)],
            coordinate_rates: vec![None; n_t],
            diagnosis: Diagnosis::Converged {
                limit: vec![0.0; n_t],
                rate: None,
            },
            warnings,
        });
    }
    let src = map.source();
    let dil = Dilation::of(src);
    let mut rows = Vec::new();
    for &eps in schedule {
        let xz = src.mul(x, &dil.apply_unchecked(eps, z));
        if !map.in_domain(&xz) {
            warnings.push(format!(
                "x·δ_ε z leaves the domain at eps={eps:e}; schedule truncated"
            ));
            break;
        }
        rows.push((eps, difference_quotient(map, x, z, eps)?));
    }
    if rows.len() < 2 {
        return Err(Error::Domain(
            "fewer than two schedule points stay inside the domain".into(),
        ));
    }
    let scale = rows
        .iter()
        .flat_map(|r| r.1.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = gap_floor(scale);
    let gap_eps: Vec<f64> = rows[1..].iter().map(|r| r.0).collect();
    let gaps: Vec<f64> = rows
        .windows(2)
        .map(|w| max_abs_diff(&w[0].1, &w[1].1))
        .collect();
    let coordinate_rates = (0..n_t)
        .map(|k| {
            let g: Vec<f64> = rows.windows(2).map(|w| (w[0].1[k] - w[1].1[k]).abs()).collect();
            rate_fit(&gap_eps, &g, floor)
        })
        .collect();
    let rate = rate_fit(&gap_eps, &gaps, floor);
    let tail = &gaps[gaps.len().saturating_sub(3)..];
    let shrinking = tail.len() == 3
        && tail
            .windows(2)
            .all(|w| w[1] <= floor || w[1] * 1.5 <= w[0]);
    let settled = tail.iter().all(|&g| g <= floor);
    let diagnosis = if settled || shrinking {
        let ratio = rows[0].0 / rows[1].0;
        let limit = (0..n_t)
            .map(|k| {
                let s: Vec<f64> = rows.iter().map(|r| r.1[k]).collect();
                richardson_limit(&s, ratio, 5).unwrap_or(s[s.len() - 1])
            })
            .collect();
        Diagnosis::Converged { limit, rate }
    } else {
        Diagnosis::Diverged {
            rate: rate.unwrap_or(f64::NAN),
        }
    };
    Ok(LimitProbe {
        rows,
        gaps,
        coordinate_rates,
        diagnosis,
        warnings,
    })
}

/// `max |PD(z₁ z₂) − PD(z₁) PD(z₂)|` at `x`.
pub fn morphism_residual(map: &SmoothMap, x: &[f64], z1: &[f64], z2: &[f64]) -> Result<f64> {
    let n = map.source().dim();
    check_dim(n, z1.len())?;
    check_dim(n, z2.len())?;
    Ok(pansu_derivative(map, x)?.morphism_defect(z1, z2))
}

/// `|J_Φ(x) − |det PM||`.
pub fn jacobian_consistency(map: &SmoothMap, x: &[f64]) -> Result<f64> {
    let pd = pansu_derivative(map, x)?;
    Ok((map.jacobian_determinant(x)? - pd.determinant().abs()).abs())
}

/// `max |PD_w(Φ∘Ψ)(z) − PD_{Ψ(w)}Φ(PD_wΨ(z))|`.
pub fn composition_check(phi: &SmoothMap, psi: &SmoothMap, w: &[f64], z: &[f64]) -> Result<f64> {
    let composed = phi.compose(psi)?;
    let psi_w = psi.eval(w)?;
    if !phi.in_domain(&psi_w) {
        return Err(Error::Domain(format!(
            "Ψ(w) = {} is outside the domain of `{}`",
            fmt_point(&psi_w),
            phi.name()
        )));
    }
    let lhs = pansu_derivative(&composed, w)?.apply(z);
    let inner = pansu_derivative(psi, w)?.apply(z);
    let rhs = pansu_derivative(phi, &psi_w)?.apply(&inner);
    Ok(max_abs_diff(&lhs, &rhs))
}

/// Euclidean size of `δ_{1/ε} ln Φ_x(exp δ_ε V) − PM V` along the schedule,
/// where `Φ_x(y) = Φ(x)⁻¹ Φ(x y)`.
pub fn remainder_rate(map: &SmoothMap, x: &[f64], v: &[f64], schedule: &[f64]) -> Result<ConvergenceTable> {
    let pd = pansu_derivative(map, x)?;
    check_dim(map.source().dim(), v.len())?;
    let target = pd.apply(v);
    let dil = Dilation::of(map.source());
    let mut rows = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        let xv = map.source().mul(x, &dil.apply(eps, v)?);
        if !map.in_domain(&xv) {
            return Err(Error::Domain(format!("x·δ_ε V leaves the domain at eps={eps:e}")));
        }
        let w = difference_quotient(map, x, v, eps)?;
        rows.push((eps, euclid_diff(&w, &target)));
    }
    ConvergenceTable::new(rows)
}

/// `PM · diag(δ_r) − diag(δ_r) · PM`, which vanishes for block-diagonal `PM`.
pub fn homogeneity_defect(pd: &PansuDerivative, r: f64) -> f64 {
    let src = DMatrix::from_diagonal(&DVector::from_vec(Dilation::of(&pd.source).diagonal(r)));
    let tgt = DMatrix::from_diagonal(&DVector::from_vec(Dilation::of(&pd.target).diagonal(r)));
    (pd.matrix() * src - tgt * pd.matrix()).abs().max()
}
