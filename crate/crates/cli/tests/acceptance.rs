//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_traits::Zero;
use pansu::convergence::ConvergenceTable;
use pansu::group_law::inverse;
use pansu::invariance::{invariance_experiment, pullback_kernel, InvarianceConfig, InvarianceOutcome};
use pansu::maps::{self, SmoothMap};
use pansu::pansu::{
    check_filtration_preserving, composition_check, default_schedule, dyadic_schedule, jacobian_consistency,
    morphism_residual, pansu_derivative, pansu_limit_probe, remainder_rate, DEFAULT_TOL,
};
use pansu::quantize::{
    a0_seminorm, diagonal_truncation_residual, l2_norm, op_apply_many, test_bank, DiagonalCutoff, Field,
    GaussianKernel, GridFunction, GridSpec, Kernel, OpOptions, ZQuadrature,
};
use pansu::scalar::rat;
use pansu::{Group, Rational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn heis() -> Arc<Group> {
    Arc::new(Group::builtin("heisenberg(1)").unwrap())
}

fn kernel(g: &Arc<Group>) -> Arc<dyn Kernel> {
    Arc::new(GaussianKernel::standard(g.clone()).unwrap())
}

fn within(start: Instant, budget: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t < budget, format!("{:.1}s of {}s", t.as_secs_f64(), budget.as_secs()))
}

fn rational_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<Rational> {
    (0..n).map(|_| rat(rng.gen_range(-12..=12), rng.gen_range(1..=7))).collect()
}

fn exact_group_law() -> Outcome {
    let start = Instant::now();
    let g = heis();
    let names = g.law().variable_names();
    let third = g.law().coordinate(2).display_with(&names).to_string();
    let mut ok = third == "1/2*x1*y2 - 1/2*x2*y1 + x3 + y3";
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut failures = Vec::new();
    for name in ["heisenberg(1)", "engel", "free_nilpotent(2,3)"] {
        let g = Group::builtin(name).unwrap();
        let n = g.dim();
        let zero = vec![Rational::zero(); n];
        for _ in 0..100 {
            let x = rational_point(&mut rng, n);
            let y = rational_point(&mut rng, n);
            let z = rational_point(&mut rng, n);
            let assoc = g.mul_exact(&g.mul_exact(&x, &y), &z) == g.mul_exact(&x, &g.mul_exact(&y, &z));
            let ident = g.mul_exact(&x, &zero) == x && g.mul_exact(&zero, &x) == x;
            let inv = g.mul_exact(&x, &inverse(&x)) == zero && g.mul_exact(&inverse(&x), &x) == zero;
            if !(assoc && ident && inv) {
                failures.push(name);
                ok = false;
                break;
            }
        }
    }
    let (fast, t) = within(start, Duration::from_secs(10));
    check(ok && fast, format!("z3 = {third}; axiom failures {failures:?}; {t}"))
}

fn counterexample() -> Outcome {
    let start = Instant::now();
    let phi = maps::heis_to_abelian_identity(heis()).unwrap();
    let z = [0.5, 0.7, -0.1];
    let off = pansu_limit_probe(&phi, &[0.4, -0.3, 0.2], &z, &default_schedule()).unwrap();
    let rate = off.coordinate_rates[2];
    let at0 = pansu_limit_probe(&phi, &[0.0; 3], &z, &default_schedule()).unwrap();
    let ok = !off.converged() && rate.is_some_and(|r| (r + 1.0).abs() <= 0.05) && at0.converged();
    let (fast, t) = within(start, Duration::from_secs(1));
    check(
        ok && fast,
        format!("third-coordinate rate {rate:?}, converged at origin {}; {t}", at0.converged()),
    )
}

fn shear_structure() -> Outcome {
    let start = Instant::now();
    let phi = maps::contact_shear(heis()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut pt = |h: f64| -> Vec<f64> { (0..3).map(|_| rng.gen_range(-h..h)).collect() };
    let (mut below, mut probe_gap, mut morph, mut jac) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut min_slope = f64::INFINITY;
    let mut offdiag_zero = true;
    for _ in 0..20 {
        let x = pt(1.5);
        let report = check_filtration_preserving(&phi, &x, DEFAULT_TOL).unwrap();
        below = below.max(report.below_diag_norm);
        let pd = pansu_derivative(&phi, &x).unwrap();
        let w = pd.blocks().row_weights().to_vec();
        for r in 0..3 {
            for c in 0..3 {
                if w[r] != w[c] && pd.matrix()[(r, c)] != 0.0 {
                    offdiag_zero = false;
                }
            }
        }
        let z = pt(1.0);
        let probe = pansu_limit_probe(&phi, &x, &z, &default_schedule()).unwrap();
        let pz = pd.apply(&z);
        match probe.limit() {
            Some(l) => {
                for k in 0..3 {
                    probe_gap = probe_gap.max((l[k] - pz[k]).abs());
                }
            }
            None => probe_gap = f64::INFINITY,
        }
        morph = morph.max(morphism_residual(&phi, &x, &pt(1.0), &pt(1.0)).unwrap());
        jac = jac.max(jacobian_consistency(&phi, &x).unwrap());
        let t = remainder_rate(&phi, &x, &[1.0, 0.0, 0.0], &dyadic_schedule(2, 8)).unwrap();
        min_slope = min_slope.min(t.slope().unwrap_or(f64::NEG_INFINITY));
    }
    let ok = below < 1e-6 && offdiag_zero && probe_gap < 1e-6 && morph < 1e-8 && jac < 1e-8 && min_slope >= 0.9;
    let (fast, t) = within(start, Duration::from_secs(30));
    check(
        ok && fast,
        format!(
            "below-diag {below:.1e}, probe gap {probe_gap:.1e}, morphism {morph:.1e}, |J-det| {jac:.1e}, \
             remainder slope {min_slope:.3}; {t}"
        ),
    )
}

fn l2_bound() -> Outcome {
    let start = Instant::now();
    let g = heis();
    let k = kernel(&g);
    let grid = GridSpec::cube(3, 1.0, 16).unwrap();
    let opts = OpOptions { z: ZQuadrature::trapezoid(32), workers: 1 };
    let bank = test_bank(3);
    let fields: Vec<&dyn Field> = bank.iter().map(|f| f as &dyn Field).collect();
    let a0 = a0_seminorm(&*k, &opts.z, &grid).unwrap();
    let eps = [1.0, 0.5, 0.25, 0.125];
    let outs = op_apply_many(&*k, &eps, &fields, &grid, &opts).unwrap();
    let mut worst: f64 = 0.0;
    for row in &outs {
        for (o, f) in row.iter().zip(&bank) {
            worst = worst.max(l2_norm(o) / l2_norm(&GridFunction::sample(&grid, f)));
        }
    }
    let ok = bank.len() == 5 && worst <= a0 * (1.0 + 1e-3);
    let (fast, t) = within(start, Duration::from_secs(300));
    check(ok && fast, format!("max ratio {worst:.6} vs a0 {a0:.6} over 5 functions x 4 eps; {t}"))
}

fn run_invariance(m: &SmoothMap, cfg: &InvarianceConfig) -> InvarianceOutcome {
    let bank = test_bank(3);
    let fields: Vec<&dyn Field> = bank.iter().map(|f| f as &dyn Field).collect();
    invariance_experiment(m, kernel(m.target()), &fields, cfg).unwrap()
}

fn conjugation_invariance() -> Outcome {
    let g = heis();
    let shear = maps::contact_shear(g.clone()).unwrap();
    let exact = [
        maps::left_translation(g.clone(), vec![0.1, -0.05, 0.08]).unwrap(),
        maps::dilation(g.clone(), 1.25).unwrap(),
    ];

    let start = Instant::now();
    let cfg = InvarianceConfig::standard(3).unwrap();
    let s = run_invariance(&shear, &InvarianceConfig { estimate_slack: false, ..cfg.clone() });
    let rate_ok = s.table.is_monotone_decreasing() && s.table.slope().is_some_and(|v| v >= 0.8);
    let mut exact_ok = true;
    let mut exact_detail = Vec::new();
    for m in &exact {
        let out = run_invariance(m, &cfg);
        let slack = out.slack.unwrap();
        let e = out.table.max_error();
        exact_ok &= e < 10.0 * slack;
        exact_detail.push(format!("{} {e:.1e}/slack {slack:.1e}", m.name()));
    }
    let (fast, t) = within(start, Duration::from_secs(900));

    let qmc_start = Instant::now();
    let qmc_cfg = InvarianceConfig {
        opts: OpOptions { z: ZQuadrature::halton(8192, 7), workers: 1 },
        estimate_slack: false,
        paired_nodes: true,
        ..cfg.clone()
    };
    let q = run_invariance(&shear, &qmc_cfg);
    let qmc_rate_ok = q.table.is_monotone_decreasing() && q.table.slope().is_some_and(|v| v >= 0.8);
    let (qmc_fast, qt) = within(qmc_start, Duration::from_secs(120));

    check(
        rate_ok && exact_ok && fast && qmc_rate_ok && qmc_fast,
        format!(
            "shear slope {:.3} monotone {}; {}; {t}; qmc slope {:.3} monotone {} in {qt}",
            s.table.slope().unwrap_or(f64::NAN),
            s.table.is_monotone_decreasing(),
            exact_detail.join(", "),
            q.table.slope().unwrap_or(f64::NAN),
            q.table.is_monotone_decreasing(),
        ),
    )
}

fn diagonal_cutoff() -> Outcome {
    let start = Instant::now();
    let g = heis();
    let k = kernel(&g);
    let grid = GridSpec::cube(3, 1.0, 16).unwrap();
    let opts = OpOptions { z: ZQuadrature::trapezoid(32), workers: 1 };
    let cut = DiagonalCutoff::new(&g, 0.25, 0.5).unwrap();
    let schedule = dyadic_schedule(2, 6);
    let mut min_slope = f64::INFINITY;
    let mut fitted = usize::MAX;
    for f in test_bank(3) {
        let rows = schedule
            .iter()
            .map(|&e| (e, diagonal_truncation_residual(&*k, e, &f, &cut, &grid, &opts).unwrap()))
            .collect();
        let t = ConvergenceTable::new(rows).unwrap();
        fitted = fitted.min(t.rows().iter().filter(|r| r.1 > t.noise_floor()).count());
        min_slope = min_slope.min(t.slope().unwrap_or(f64::NEG_INFINITY));
    }
    let (fast, t) = within(start, Duration::from_secs(300));
    check(
        min_slope >= 3.0 && fast,
        format!("min slope {min_slope:.2} over 5 functions, at least {fitted} rows above the noise floor; {t}"),
    )
}

fn cli_exit(args: &[&str]) -> Option<i32> {
    Command::new(env!("CARGO_BIN_EXE_pansu")).args(args).output().ok()?.status.code()
}

fn refusal() -> Outcome {
    let g = heis();
    let x = [0.3, -0.2, 0.4];
    let z = [0.1, 0.5, -0.3];
    let shear = maps::contact_shear(g.clone()).unwrap();
    let mut failures = Vec::new();
    for m in [maps::coord_swap(g.clone()).unwrap(), maps::heis_to_abelian_identity(g.clone()).unwrap()] {
        let name = m.name().to_string();
        let mut refused = vec![
            ("pansu_derivative", pansu_derivative(&m, &x).err()),
            ("morphism_residual", morphism_residual(&m, &x, &z, &z).err()),
            ("jacobian_consistency", jacobian_consistency(&m, &x).err()),
            ("remainder_rate", remainder_rate(&m, &x, &z, &default_schedule()).err()),
            ("pullback_kernel", pullback_kernel(&m, kernel(m.target())).err()),
        ];
        if m.target().same_structure(&g) {
            refused.push(("composition_check", composition_check(&m, &shear, &x, &z).err()));
            let cfg = InvarianceConfig { schedule: vec![0.25], ..InvarianceConfig::standard(3).unwrap() };
            let bank = test_bank(3);
            refused.push(("invariance_experiment", invariance_experiment(&m, kernel(&g), &[&bank[0]], &cfg).err()));
        }
        for (op, e) in refused {
            if !e.is_some_and(|e| e.is_refusal()) {
                failures.push(format!("{op}({name})"));
            }
        }
        if check_filtration_preserving(&m, &x, DEFAULT_TOL).unwrap().verdict {
            failures.push(format!("check_filtration_preserving({name})"));
        }
        for cmd in ["pansu-check", "invariance"] {
            let code = cli_exit(&[cmd, "--map", &name, "--x", "0.3,-0.2,0.4"]);
            if code != Some(3) {
                failures.push(format!("cli {cmd} {name} exit {code:?}"));
            }
        }
    }
    check(failures.is_empty(), format!("unexpected acceptance by {failures:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("exact group law", exact_group_law),
        ("counterexample probe", counterexample),
        ("contact shear structure", shear_structure),
        ("L2 bound", l2_bound),
        ("conjugation invariance", conjugation_invariance),
        ("diagonal cut-off", diagonal_cutoff),
        ("refusal", refusal),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {name}: {tag} ({})", i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
