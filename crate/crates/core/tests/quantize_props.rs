use std::sync::Arc;

use pansu::convergence::ConvergenceTable;
use pansu::quadrature::Rule;
use pansu::quantize::*;
use pansu::Group;

fn group(name: &str) -> Arc<Group> {
    Arc::new(Group::builtin(name).unwrap())
}

fn gaussian(s: f64) -> impl Fn(&[f64]) -> f64 + Send + Sync {
    move |y: &[f64]| (-y.iter().map(|v| v * v).sum::<f64>() / (2.0 * s * s)).exp()
}

/// Kernel that is 1 in x on a wide box: `κ_x(z) = (a/π)^{n/2} exp(−a|z|²)`.
fn flat_kernel(g: Arc<Group>, a: f64) -> GaussianKernel {
    let n = g.dim();
    GaussianKernel::normalized(g, Plateau::cube(n, 5.0, 6.0).unwrap(), a).unwrap()
}

#[test]
fn abelian_mollification_matches_closed_form() {
    // Gaussian ∗ Gaussian: variances add.
    let g = group("abelian(2)");
    let a = 2.0;
    let k = flat_kernel(g.clone(), a);
    let s: f64 = 0.3;
    let f = gaussian(s);
    let grid = GridSpec::cube(2, 1.0, 11).unwrap();
    let opts = OpOptions { z: ZQuadrature::trapezoid(48), workers: 1 };
    for eps in [0.5, 0.25, 0.1] {
        let v = eps * eps / (2.0 * a);
        let exact = |x: &[f64]| (s * s / (s * s + v)) * gaussian((s * s + v).sqrt())(x);
        let out = op_apply(&k, eps, &f, &grid, &opts).unwrap().values;
        for ((x, _), got) in grid.rule().iter().zip(out.values()) {
            // The z box drops tail mass below 1e-8.
            assert!((got - exact(x)).abs() < 1e-8, "eps={eps} x={x:?}");
        }
    }
}

#[test]
fn direct_convolution_agrees_with_z_form() {
    let g = group("abelian(2)");
    let k = flat_kernel(g, 1.0);
    let s = 0.3;
    let f = gaussian(s);
    let fine = GridSpec::cube(2, 2.5, 201).unwrap();
    let fg = GridFunction::sample(&fine, &f);
    let grid = GridSpec::cube(2, 1.0, 9).unwrap();
    let eps = 0.5;
    let direct = op_apply_direct(&k, eps, &fg, &grid, 1).unwrap();
    assert!(direct.warnings.is_empty());
    let z = op_apply(&k, eps, &f, &grid, &OpOptions::default()).unwrap().values;
    let diff = direct.values.sub(&z).unwrap().max_abs();
    assert!(diff < 1e-6, "diff {diff}");
    let coarse = GridFunction::sample(&GridSpec::cube(2, 2.5, 11).unwrap(), &f);
    let warned = op_apply_direct(&k, 0.05, &coarse, &grid, 1).unwrap();
    assert!(warned.warnings.iter().any(|w| w.contains("under-resolved")));
}

#[test]
fn approximate_identity_on_heisenberg() {
    let g = group("heisenberg(1)");
    let k = GaussianKernel::standard(g).unwrap();
    let f = gaussian(0.25);
    let grid = GridSpec::cube(3, 0.35, 6).unwrap();
    let eps = [0.4, 0.2, 0.1, 0.05];
    let outs = op_apply_many(&k, &eps, &[&f], &grid, &OpOptions::default()).unwrap();
    let target = GridFunction::sample(&grid, &|x: &[f64]| k.chi().eval(x) * f(x));
    let rows = eps
        .iter()
        .zip(&outs)
        .map(|(&e, o)| (e, o[0].sub(&target).unwrap().max_abs()))
        .collect();
    let t = ConvergenceTable::new(rows).unwrap();
    assert!(t.is_monotone_decreasing());
    assert!(t.slope().unwrap() >= 0.9, "{t}");
}

#[test]
fn rescaled_kernel_keeps_its_mass() {
    let g = group("heisenberg(1)");
    let k = GaussianKernel::standard(g).unwrap();
    let x = [0.1, 0.0, -0.2];
    let z = [0.3, -0.1, 0.4];
    assert_eq!(rescale_kernel(&k, 1.0, &x, &z).unwrap(), k.eval(&x, &z));
    let eps: f64 = 0.5;
    assert!((rescale_kernel(&k, eps, &x, &[0.0; 3]).unwrap() - eps.powi(-4) * k.eval(&x, &[0.0; 3])).abs() < 1e-12);
    let r = k.z_extent();
    let dom = pansu::quadrature::BoxDomain::symmetric(&[eps * r[0], eps * r[1], eps * eps * r[2]]);
    let rule = Rule::tensor_trapezoid(&dom, &[41, 41, 41]).unwrap();
    let scaled = rule.integrate(|y| rescale_kernel(&k, eps, &x, y).unwrap());
    let unit = Rule::tensor_trapezoid(&pansu::quadrature::BoxDomain::symmetric(&r), &[41, 41, 41])
        .unwrap()
        .integrate(|y| k.eval(&x, y));
    assert!((scaled - unit).abs() < 1e-10);
    assert!((unit - 1.0).abs() < 1e-7);
}

#[test]
fn a0_seminorm_values() {
    let g = group("heisenberg(1)");
    let k = GaussianKernel::standard(g.clone()).unwrap();
    let coarse = a0_seminorm(&k, &ZQuadrature::trapezoid(32), &GridSpec::cube(3, 1.0, 9).unwrap()).unwrap();
    let fine = a0_seminorm(&k, &ZQuadrature::trapezoid(64), &GridSpec::cube(3, 1.0, 17).unwrap()).unwrap();
    assert!((coarse - fine).abs() < 1e-4, "{coarse} vs {fine}");
    let flat = flat_kernel(g.clone(), 1.5);
    let v = a0_seminorm(&flat, &ZQuadrature::trapezoid(32), &GridSpec::cube(3, 6.0, 5).unwrap()).unwrap();
    assert!((v - 1.0).abs() < 1e-6);
    let zero = GaussianKernel::new(g, Plateau::cube(3, 0.4, 0.5).unwrap(), 1.0, vec![(vec![0, 0, 0], 0.0)]).unwrap();
    assert_eq!(a0_seminorm(&zero, &ZQuadrature::trapezoid(8), &GridSpec::cube(3, 1.0, 5).unwrap()).unwrap(), 0.0);
    let small = GridSpec::cube(3, 0.2, 5).unwrap();
    assert!(matches!(
        a0_seminorm(&k, &ZQuadrature::trapezoid(8), &small),
        Err(pansu::Error::Coverage(_))
    ));
}

#[test]
fn l2_of_a_bump_matches_its_integral() {
    let grid = GridSpec::cube(3, 1.0, 41).unwrap();
    let s: f64 = 0.2;
    let f = GridFunction::sample(&grid, &gaussian(s));
    // ∫ exp(−|y|²/s²) over ℝ³.
    let exact = (s * s * std::f64::consts::PI).powf(1.5);
    let n2 = l2_norm(&f).powi(2);
    assert!((n2 - exact).abs() < 1e-6 * exact);
    assert!((l2_inner(&f, &f).unwrap() - n2).abs() < 1e-15);
    assert_eq!(l2_norm(&GridFunction::zeros(grid)), 0.0);
}

#[test]
fn ell_functional_bounds_and_limit() {
    let g = group("heisenberg(1)");
    let k = GaussianKernel::standard(g.clone()).unwrap();
    let grid = GridSpec::cube(3, 1.0, 10).unwrap();
    let opts = OpOptions { z: ZQuadrature::trapezoid(24), workers: 1 };
    let a0 = a0_seminorm(&k, &opts.z, &grid).unwrap();
    let bank = test_bank(3);
    for f in &bank {
        let u2 = l2_norm(&GridFunction::sample(&grid, f)).powi(2);
        for eps in [0.5, 0.2] {
            let l = ell_epsilon(&k, eps, f, &grid, &opts).unwrap();
            assert!(l.abs() <= a0 * u2 * (1.0 + 1e-3));
        }
    }
    assert_eq!(ell_epsilon(&k, 0.3, &|_: &[f64]| 0.0, &grid, &opts).unwrap(), 0.0);
    let flat = flat_kernel(g, 1.0);
    let u = gaussian(0.3);
    let grid = GridSpec::cube(3, 1.5, 12).unwrap();
    let u2 = l2_norm(&GridFunction::sample(&grid, &u)).powi(2);
    let rows = [0.4, 0.2, 0.1]
        .iter()
        .map(|&e| (e, (ell_epsilon(&flat, e, &u, &grid, &opts).unwrap() - u2).abs()))
        .collect();
    let t = ConvergenceTable::new(rows).unwrap();
    assert!(t.is_monotone_decreasing(), "{t}");
}

#[test]
fn truncation_residual_examples() {
    let g = group("heisenberg(1)");
    let k = GaussianKernel::standard(g.clone()).unwrap();
    let grid = GridSpec::cube(3, 0.6, 6).unwrap();
    let opts = OpOptions { z: ZQuadrature::trapezoid(20), workers: 1 };
    let f = gaussian(0.3);
    let wide = DiagonalCutoff::new(&g, 50.0, 100.0).unwrap();
    assert!(diagonal_truncation_residual(&k, 1.0, &f, &wide, &grid, &opts).unwrap() < 1e-14);
    let tight = DiagonalCutoff::new(&g, 0.25, 0.5).unwrap();
    assert_eq!(diagonal_truncation_residual(&k, 0.5, &|_: &[f64]| 0.0, &tight, &grid, &opts).unwrap(), 0.0);
    let r1 = diagonal_truncation_residual(&k, 0.25, &f, &tight, &grid, &opts).unwrap();
    let r2 = diagonal_truncation_residual(&k, 0.125, &f, &tight, &grid, &opts).unwrap();
    assert!(r1 > 0.0 && r2 < r1 / 8.0);
}

#[test]
fn quasi_monte_carlo_agrees_with_trapezoid() {
    let g = group("heisenberg(1)");
    let k = GaussianKernel::standard(g).unwrap();
    let grid = GridSpec::cube(3, 0.5, 5).unwrap();
    let f = test_bank(3).remove(2);
    let t = op_apply(&k, 0.25, &f, &grid, &OpOptions::default()).unwrap().values;
    let q = op_apply(&k, 0.25, &f, &grid, &OpOptions { z: ZQuadrature::halton(40_000, 3), workers: 1 }).unwrap().values;
    let scale = t.max_abs();
    assert!(q.sub(&t).unwrap().max_abs() < 5e-3 * scale);
}

#[test]
fn parallel_and_serial_runs_agree() {
    let g = group("heisenberg(1)");
    let k = GaussianKernel::standard(g).unwrap();
    let grid = GridSpec::cube(3, 0.5, 5).unwrap();
    let f = test_bank(3).remove(1);
    let opts = OpOptions { z: ZQuadrature::trapezoid(16), workers: 1 };
    let a = op_apply(&k, 0.3, &f, &grid, &opts).unwrap().values;
    let b = op_apply(&k, 0.3, &f, &grid, &OpOptions { workers: 3, ..opts }).unwrap().values;
    assert_eq!(a, b);
}
