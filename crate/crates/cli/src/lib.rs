//! Command-line front end: group inspection, group laws, Pansu analysis,
//! quantization runs and invariance experiments.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use pansu::invariance::{invariance_experiment, InvarianceConfig};
use pansu::pansu::{check_filtration_preserving, pansu_limit_probe, Diagnosis};
use pansu::quantize::{
    a0_seminorm, l2_norm, op_apply_many, test_bank, Field, GaussianKernel, GridFunction, GridSpec,
    Kernel, OpOptions, Plateau, ZQuadrature,
};
use pansu::{test_map, GradedLieAlgebra, Group};
use thiserror::Error;

pub use config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_REFUSED: i32 = 3;
pub const EXIT_GATE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Lib(#[from] pansu::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// A numerical acceptance gate failed; the artifacts were still written.
    #[error("gate failed: {0}")]
    Gate(String),
    /// Precondition failure detected by the CLI itself.
    #[error("refused: {0}")]
    Refused(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use pansu::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Lib(E::UnknownGroup(_) | E::UnknownMap(_) | E::Format(_)) => EXIT_CONFIG,
            CliError::Lib(E::Internal(_)) | CliError::Io(_) => 1,
            CliError::Lib(_) | CliError::Refused(_) => EXIT_REFUSED,
            CliError::Gate(_) => EXIT_GATE,
        }
    }

    pub(crate) fn message(&self) -> String {
        match self {
            CliError::Config(m) => m.clone(),
            other => other.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "pansu", version, about = "Graded groups, Pansu derivatives and quantization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dimension, weights, homogeneous dimension and axiom check of a group.
    GroupInfo { group: String },
    /// The group law polynomials.
    Law { group: String },
    /// Filtration test and Pansu matrix of a map at a point.
    PansuCheck(Common),
    /// Difference quotients along an eps schedule, as CSV.
    PansuProbe(Common),
    /// ‖Op_ε f‖ / ‖f‖ for the test bank against the L² bound, as CSV.
    Quantize(Common),
    /// Conjugation error of Op_ε under a map, as CSV.
    Invariance(Common),
    /// Print the default configuration file.
    Defaults,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// Override one key, `KEY=VALUE`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    map: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    z: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = ExperimentConfig::default();
        if let Some(p) = &self.config {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            c.apply_text(&text)?;
        }
        let flags = [
            ("group", &self.group),
            ("map", &self.map),
            ("eps", &self.eps),
            ("x", &self.x),
            ("z", &self.z),
            ("workers", &self.workers),
            ("output", &self.out),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                c.set(k, v)?;
            }
        }
        for s in &self.sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
            c.set(k.trim(), v)?;
        }
        Ok(c)
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "pansu: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::GroupInfo { group } => group_info(&group, out),
        Command::Law { group } => law(&group, out),
        Command::PansuCheck(c) => pansu_check(&c.resolve()?, out),
        Command::PansuProbe(c) => pansu_probe(&c.resolve()?, out, err),
        Command::Quantize(c) => quantize(&c.resolve()?, out, err),
        Command::Invariance(c) => invariance(&c.resolve()?, out, err),
        Command::Defaults => Ok(write!(out, "{}", ExperimentConfig::defaults_text())?),
    }
}

fn load_algebra(spec: &str) -> Result<GradedLieAlgebra, CliError> {
    match pansu::algebra::Builtin::parse(spec) {
        Ok(b) => Ok(b.algebra()?),
        Err(unknown) => {
            let p = Path::new(spec);
            if !p.is_file() {
                return Err(unknown.into());
            }
            let text = std::fs::read_to_string(p)?;
            let name = p.file_stem().map_or(spec.into(), |s| s.to_string_lossy().into_owned());
            Ok(GradedLieAlgebra::parse(name, &text)?)
        }
    }
}

fn load_group(spec: &str) -> Result<Arc<Group>, CliError> {
    Ok(Arc::new(Group::new(load_algebra(spec)?)?))
}

fn num(v: f64) -> String {
    format!("{v:.10e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |v| format!("{v:.4}"))
}

fn group_info(spec: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let alg = load_algebra(spec)?;
    let report = alg.validate();
    let w: Vec<String> = alg.weights().iter().map(|w| w.to_string()).collect();
    writeln!(out, "group={}", alg.name())?;
    writeln!(out, "n={}", alg.dim())?;
    writeln!(out, "weights={}", w.join(" "))?;
    writeln!(out, "step={}", alg.step())?;
    writeln!(out, "Q={}", alg.homogeneous_dimension())?;
    writeln!(out, "valid={}", report.is_valid())?;
    for t in alg.terms() {
        writeln!(
            out,
            "[X{},X{}] = {} X{}",
            t.i + 1,
            t.j + 1,
            pansu::scalar::format_rational(&t.coefficient),
            t.k + 1
        )?;
    }
    for v in &report.violations {
        writeln!(out, "violation: {v}")?;
    }
    if report.is_valid() {
        Ok(())
    } else {
        Err(CliError::Refused(format!("`{}` is not a graded Lie algebra", alg.name())))
    }
}

fn law(spec: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let g = load_group(spec)?;
    let names = g.law().variable_names();
    for (k, p) in g.law().coordinates().iter().enumerate() {
        writeln!(out, "z{} = {}", k + 1, p.display_with(&names))?;
    }
    Ok(())
}

fn default_point(n: usize, seed: f64) -> Vec<f64> {
    (0..n).map(|i| (seed * (i as f64 + 1.0)).sin() * 0.5).collect()
}

fn point_or_default(given: &[f64], n: usize, seed: f64, what: &str) -> Result<Vec<f64>, CliError> {
    if given.is_empty() {
        return Ok(default_point(n, seed));
    }
    if given.len() != n {
        return Err(CliError::Config(format!("{what} has {} coordinates, the group has {n}", given.len())));
    }
    Ok(given.to_vec())
}

fn pansu_check(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let g = load_group(&cfg.group)?;
    let map = test_map(&cfg.map, g.clone())?;
    let x = point_or_default(&cfg.x, g.dim(), 0.7, "x")?;
    let report = check_filtration_preserving(&map, &x, cfg.tol)?;
    write!(out, "{report}")?;
    if report.verdict {
        Ok(())
    } else {
        Err(CliError::Refused(format!(
            "`{}` is not filtration preserving at the given point",
            map.name()
        )))
    }
}

/// Writes `body` to the configured output, or to `out` when none is set.
fn emit(cfg: &ExperimentConfig, body: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match &cfg.output {
        Some(p) => std::fs::write(p, body)?,
        None => out.write_all(body.as_bytes())?,
    }
    Ok(())
}

fn pansu_probe(cfg: &ExperimentConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let g = load_group(&cfg.group)?;
    let map = test_map(&cfg.map, g.clone())?;
    let n = g.dim();
    let x = point_or_default(&cfg.x, n, 0.7, "x")?;
    let z = point_or_default(&cfg.z, n, 1.3, "z")?;
    let probe = pansu_limit_probe(&map, &x, &z, &cfg.probe_eps)?;
    for w in &probe.warnings {
        writeln!(err, "warning: {w}")?;
    }
    let m = map.target().dim();
    let mut csv = String::from("eps");
    for k in 1..=m {
        let _ = write!(csv, ",coord_{k}");
    }
    csv.push_str(",error\n");
    for (i, (eps, w)) in probe.rows.iter().enumerate() {
        let gap = if i == 0 { f64::NAN } else { probe.gaps[i - 1] };
        let cells: Vec<String> = w.iter().map(|v| num(*v)).collect();
        let _ = writeln!(csv, "{},{},{}", num(*eps), cells.join(","), num(gap));
    }
    let rates: Vec<String> = probe.coordinate_rates.iter().map(|r| opt_num(*r)).collect();
    match &probe.diagnosis {
        Diagnosis::Converged { limit, rate } => {
            let l: Vec<String> = limit.iter().map(|v| num(*v)).collect();
            let _ = writeln!(
                csv,
                "# diagnosis=converged limit={} rate={} coordinate_rates={}",
                l.join(";"),
                opt_num(*rate),
                rates.join(";")
            );
        }
        Diagnosis::Diverged { rate } => {
            let _ = writeln!(
                csv,
                "# diagnosis=diverged rate={} coordinate_rates={}",
                opt_num(Some(*rate)),
                rates.join(";")
            );
        }
    }
    emit(cfg, &csv, out)
}

fn build_kernel(cfg: &ExperimentConfig, group: Arc<Group>) -> Result<Arc<dyn Kernel>, CliError> {
    let chi = Plateau::cube(group.dim(), cfg.plateau_inner, cfg.plateau_outer)?;
    Ok(Arc::new(GaussianKernel::normalized(group, chi, cfg.kernel_rate)?))
}

fn z_rule(cfg: &ExperimentConfig) -> ZQuadrature {
    match cfg.z_method.as_str() {
        "halton" => ZQuadrature::halton(cfg.z_count, cfg.seed),
        _ => ZQuadrature::trapezoid(cfg.z_points),
    }
}

fn x_grid(cfg: &ExperimentConfig, n: usize) -> Result<GridSpec, CliError> {
    Ok(GridSpec::cube(n, cfg.x_half, cfg.x_points)?)
}

fn bank_header(prefix: &str, k: usize, last: &str) -> String {
    let mut h = String::from("eps");
    for i in 1..=k {
        let _ = write!(h, ",{prefix}_f{i}");
    }
    let _ = writeln!(h, ",{last}");
    h
}

fn quantize(cfg: &ExperimentConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let g = load_group(&cfg.group)?;
    let kernel = build_kernel(cfg, g.clone())?;
    let grid = x_grid(cfg, g.dim())?;
    let opts = OpOptions {
        z: z_rule(cfg),
        workers: cfg.workers,
    };
    let bank: Vec<_> = test_bank(g.dim()).into_iter().take(cfg.bank_size).collect();
    let fields: Vec<&dyn Field> = bank.iter().map(|f| f as &dyn Field).collect();
    let a0 = a0_seminorm(&*kernel, &opts.z, &grid)?;
    let norms: Vec<f64> = bank.iter().map(|f| l2_norm(&GridFunction::sample(&grid, f))).collect();
    let outs = op_apply_many(&*kernel, &cfg.eps, &fields, &grid, &opts)?;
    let mut csv = bank_header("ratio", bank.len(), "max_ratio");
    let mut worst: f64 = 0.0;
    for (eps, row) in cfg.eps.iter().zip(&outs) {
        let ratios: Vec<f64> = row.iter().zip(&norms).map(|(o, n)| l2_norm(o) / n).collect();
        let m = ratios.iter().copied().fold(0.0, f64::max);
        worst = worst.max(m);
        let cells: Vec<String> = ratios.iter().map(|r| num(*r)).collect();
        let _ = writeln!(csv, "{},{},{}", num(*eps), cells.join(","), num(m));
    }
    let pass = worst <= a0 * (1.0 + cfg.bound_slack);
    let _ = writeln!(
        csv,
        "# a0={} max_ratio={} bound={}",
        num(a0),
        num(worst),
        if pass { "pass" } else { "fail" }
    );
    if let Some(p) = &cfg.grid_output {
        std::fs::write(p, outs[0][0].to_csv())?;
        writeln!(err, "wrote {}", p.display())?;
    }
    emit(cfg, &csv, out)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Gate(format!("max ratio {worst:e} exceeds a0 = {a0:e}")))
    }
}

fn invariance(cfg: &ExperimentConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let g = load_group(&cfg.group)?;
    let map = test_map(&cfg.map, g.clone())?;
    let kernel = build_kernel(cfg, map.target().clone())?;
    let halton = cfg.z_method == "halton";
    let icfg = InvarianceConfig {
        x_grid: x_grid(cfg, g.dim())?,
        schedule: cfg.eps.clone(),
        opts: OpOptions {
            z: z_rule(cfg),
            workers: cfg.workers,
        },
        estimate_slack: cfg.slack && !halton,
        paired_nodes: halton,
    };
    let bank: Vec<_> = test_bank(g.dim()).into_iter().take(cfg.bank_size).collect();
    let fields: Vec<&dyn Field> = bank.iter().map(|f| f as &dyn Field).collect();
    let res = invariance_experiment(&map, kernel, &fields, &icfg)?;
    let mut csv = bank_header("error", bank.len(), "max_error");
    for (eps, row) in cfg.eps.iter().zip(&res.errors) {
        let cells: Vec<String> = row.iter().map(|e| num(*e)).collect();
        let m = row.iter().copied().fold(0.0, f64::max);
        let _ = writeln!(csv, "{},{},{}", num(*eps), cells.join(","), num(m));
    }
    let slope = res.table.slope();
    let rate_ok = res.table.is_monotone_decreasing() && slope.is_some_and(|s| s >= cfg.min_slope);
    let exact_ok = res.slack.is_some_and(|s| res.table.max_error() < 10.0 * s);
    let pass = rate_ok || exact_ok;
    let _ = writeln!(
        csv,
        "# slope={} residual={} verdict={} slack={}",
        opt_num(slope),
        opt_num(res.table.residual()),
        if pass { "pass" } else { "fail" },
        res.slack.map_or_else(|| "nan".into(), num)
    );
    emit(cfg, &csv, out)?;
    if !pass {
        writeln!(err, "errors neither decay at slope >= {} nor sit within 10x slack", cfg.min_slope)?;
        return Err(CliError::Gate("invariance verdict fail".into()));
    }
    Ok(())
}
