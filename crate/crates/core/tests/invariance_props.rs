use std::sync::Arc;

use pansu::invariance::*;
use pansu::maps::{self, SmoothMap};
use pansu::quadrature::{BoxDomain, Rule};
use pansu::quantize::*;
use pansu::{Error, Group};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn heis() -> Arc<Group> {
    Arc::new(Group::builtin("heisenberg(1)").unwrap())
}

fn kernel(g: &Arc<Group>) -> Arc<dyn Kernel> {
    Arc::new(GaussianKernel::standard(g.clone()).unwrap())
}

fn bump(y: &[f64]) -> f64 {
    (-(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]) / 0.08).exp() * (1.0 + 0.5 * y[0])
}

fn sq_integral(f: &dyn Field, half: f64) -> f64 {
    Rule::tensor_trapezoid(&BoxDomain::cube(3, half), &[121, 121, 121])
        .unwrap()
        .integrate(|y| f.eval(y).powi(2))
}

#[test]
fn unitary_pullback_preserves_l2() {
    let g = heis();
    let base = sq_integral(&bump, 1.2);
    for m in [maps::contact_shear(g.clone()).unwrap(), maps::dilation(g.clone(), 2.0).unwrap()] {
        let u = pullback_unitary(&m, bump);
        let got = sq_integral(&u, 1.2);
        assert!((got - base).abs() < 1e-6 * base, "{}: {got} vs {base}", m.name());
        let back = inverse_pullback(&m, u).unwrap();
        let x = [0.1, -0.2, 0.05];
        assert!((back.eval(&x) - bump(&x)).abs() < 1e-12);
    }
    let d2 = maps::dilation(g.clone(), 2.0).unwrap();
    assert_eq!(d2.jacobian_determinant(&[0.3, 0.1, 0.2]).unwrap(), 16.0);
}

#[test]
fn grid_pullback_matches_field_pullback() {
    let g = heis();
    let m = maps::contact_shear(g).unwrap();
    let src = GridSpec::cube(3, 2.0, 81).unwrap();
    let f = GridFunction::sample(&src, &bump);
    let grid = GridSpec::cube(3, 0.8, 9).unwrap();
    let from_grid = pullback_unitary_grid(&m, &f, &grid).unwrap();
    let from_field = GridFunction::sample(&grid, &pullback_unitary(&m, bump));
    assert!(from_grid.sub(&from_field).unwrap().max_abs() < 1e-2);
    let id = maps::identity(heis());
    let same = pullback_unitary_grid(&id, &f, &src).unwrap();
    assert!(same.sub(&f).unwrap().max_abs() < 1e-12);
}

#[test]
fn mass_is_transported() {
    let g = heis();
    let k = kernel(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for m in [maps::contact_shear(g.clone()).unwrap(), maps::dilation(g.clone(), 1.3).unwrap()] {
        let p = pullback_kernel(&m, k.clone()).unwrap();
        let rule_p = ZQuadrature::trapezoid(40).rule(&p.z_extent()).unwrap();
        let rule_k = ZQuadrature::trapezoid(40).rule(&k.z_extent()).unwrap();
        let sup = p.x_support();
        for _ in 0..5 {
            let x: Vec<f64> = (0..3).map(|d| rng.gen_range(sup.lo[d]..sup.hi[d])).collect();
            let y = m.eval(&x).unwrap();
            let lhs = rule_p.integrate(|z| p.eval(&x, z));
            let rhs = rule_k.integrate(|w| k.eval(&y, w));
            assert!((lhs - rhs).abs() < 1e-4, "{}: {lhs} vs {rhs}", m.name());
        }
    }
}

#[test]
fn pullback_is_functorial() {
    let g = heis();
    let k = kernel(&g);
    let shear = maps::contact_shear(g.clone()).unwrap();
    let la = maps::left_translation(g.clone(), vec![0.1, -0.05, 0.02]).unwrap();
    let d = maps::dilation(g.clone(), 1.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for (phi, psi) in [(&shear, &la), (&shear, &shear), (&d, &shear)] {
        let direct = pullback_kernel(&phi.compose(psi).unwrap(), k.clone()).unwrap();
        let inner: Arc<dyn Kernel> = Arc::new(pullback_kernel(phi, k.clone()).unwrap());
        let nested = pullback_kernel(psi, inner).unwrap();
        let sup = direct.x_support();
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|d| rng.gen_range(sup.lo[d]..sup.hi[d])).collect();
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            assert!((direct.eval(&x, &z) - nested.eval(&x, &z)).abs() < 1e-6);
        }
    }
}

#[test]
fn error_terms_for_the_shear() {
    let g = heis();
    let k = kernel(&g);
    let shear = maps::contact_shear(g.clone()).unwrap();
    let grid = GridSpec::cube(3, 1.0, 12).unwrap();
    let z = ZQuadrature::trapezoid(16);
    let mut ratios = Vec::new();
    for eps in [0.25, 0.125, 0.0625] {
        let (i1, i2) = error_decomposition(&shear, k.clone(), eps, &grid, &z, None).unwrap();
        assert_eq!(i1, 0.0);
        assert!(i2 > 0.0);
        ratios.push(i2 / eps);
    }
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi < 2.0 * lo, "{ratios:?}");
    let cut = DiagonalCutoff::new(&g, 0.5, 1.0).unwrap();
    let (_, i2c) = error_decomposition(&shear, k, 0.25, &grid, &z, Some(&cut)).unwrap();
    assert!(i2c <= ratios[0] * 0.25 * (1.0 + 1e-12));
}

#[test]
fn dilation_has_a_nonzero_jacobian_term_only_through_the_kernel() {
    let g = heis();
    let d = maps::dilation(g.clone(), 1.2).unwrap();
    let grid = GridSpec::cube(3, 1.0, 8).unwrap();
    let (i1, i2) = error_decomposition(&d, kernel(&g), 0.25, &grid, &ZQuadrature::trapezoid(12), None).unwrap();
    assert_eq!(i1, 0.0);
    assert!(i2 < 1e-12);
}

fn quick_config() -> InvarianceConfig {
    InvarianceConfig {
        x_grid: GridSpec::cube(3, 1.0, 8).unwrap(),
        schedule: vec![0.25, 0.125],
        opts: OpOptions { z: ZQuadrature::trapezoid(20), workers: 1 },
        estimate_slack: true,
        paired_nodes: false,
    }
}

#[test]
fn exact_maps_conjugate_exactly_on_coarse_grids() {
    let g = heis();
    let bank = test_bank(3);
    let refs: Vec<&dyn Field> = bank.iter().take(2).map(|f| f as &dyn Field).collect();
    for m in [
        maps::left_translation(g.clone(), vec![0.1, -0.05, 0.08]).unwrap(),
        maps::dilation(g.clone(), 1.25).unwrap(),
        maps::symplectic_shear(g.clone(), 0.5).unwrap(),
    ] {
        let out = invariance_experiment(&m, kernel(&g), &refs, &quick_config()).unwrap();
        let slack = out.slack.unwrap();
        assert!(out.table.max_error() < 10.0 * slack, "{}: {:?} slack {slack}", m.name(), out.max_errors());
    }
}

#[test]
fn shear_errors_shrink_on_coarse_grids() {
    let g = heis();
    let bank = test_bank(3);
    let refs: Vec<&dyn Field> = bank.iter().take(2).map(|f| f as &dyn Field).collect();
    let mut cfg = quick_config();
    cfg.estimate_slack = false;
    let shear = maps::contact_shear(g.clone()).unwrap();
    let out = invariance_experiment(&shear, kernel(&g), &refs, &cfg).unwrap();
    let e = out.max_errors();
    assert!(e[1] < 0.75 * e[0], "{e:?}");
    assert!(out.slack.is_none());
    cfg.paired_nodes = true;
    cfg.opts.z = ZQuadrature::halton(2048, 5);
    let paired = invariance_experiment(&shear, kernel(&g), &refs, &cfg).unwrap();
    for (a, b) in paired.max_errors().iter().zip(&e) {
        assert!((a - b).abs() < 0.2 * b);
    }
}

#[test]
fn invariance_preconditions() {
    let g = heis();
    let bank = test_bank(3);
    let refs: Vec<&dyn Field> = vec![&bank[0]];
    let swap = maps::coord_swap(g.clone()).unwrap();
    let e = invariance_experiment(&swap, kernel(&g), &refs, &quick_config()).unwrap_err();
    assert!(e.is_refusal());
    let abel = maps::heis_to_abelian_identity(g.clone()).unwrap();
    let k_abel: Arc<dyn Kernel> = Arc::new(GaussianKernel::standard(abel.target().clone()).unwrap());
    assert!(pullback_kernel(&abel, k_abel).err().unwrap().is_refusal());

    let mut cfg = quick_config();
    cfg.x_grid = GridSpec::cube(3, 0.45, 8).unwrap();
    let la = maps::left_translation(g.clone(), vec![0.0; 3]).unwrap();
    assert!(matches!(invariance_experiment(&la, kernel(&g), &refs, &cfg), Err(Error::Coverage(_))));

    // Identity defined only on a small box: the quadrature reaches outside it.
    let small = BoxDomain::cube(3, 0.8);
    let tight = SmoothMap::new("tight_identity", g.clone(), g.clone(), small.clone(), Arc::new(|x: &[f64]| x.to_vec()))
        .unwrap()
        .with_inverse(small, Arc::new(|x: &[f64]| x.to_vec()), None);
    assert!(matches!(invariance_experiment(&tight, kernel(&g), &refs, &quick_config()), Err(Error::Domain(_))));
    assert!(invariance_experiment(&la, kernel(&g), &[], &quick_config()).is_err());
}
