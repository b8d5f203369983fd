//! Kernel recursion against independent oracles.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use ntkae::activation::Activation;
use ntkae::data::Dataset;
use ntkae::kernels::closed_form::closed_form_ntk_2layer;
use ntkae::kernels::{ntk_recursion, ntk_recursion_with, t_operator, CovPair, Kernel, KernelSystem};
use ntkae::quadrature::Quadrature;
use ntkae::regression::{f_infinity, jacobian_infinity, InitSurrogate};
use ntkae::rng::stream;

fn gaussian(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `E[f(u) g(v)]` by a composite trapezoid rule on a `[-12, 12]²` grid in the
/// whitened coordinates.
fn trapezoid_expectation(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, qa: f64, qab: f64, qb: f64) -> f64 {
    let l11 = qa.sqrt();
    let l21 = if l11 > 0.0 { qab / l11 } else { 0.0 };
    let l22 = (qb - l21 * l21).max(0.0).sqrt();
    let n = 2400;
    let h = 24.0 / n as f64;
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut total = 0.0;
    for i in 0..=n {
        let z1 = -12.0 + i as f64 * h;
        let w1 = if i == 0 || i == n { 0.5 } else { 1.0 };
        let fu = f(l11 * z1);
        let mut inner = 0.0;
        for j in 0..=n {
            let z2 = -12.0 + j as f64 * h;
            let w2 = if j == 0 || j == n { 0.5 } else { 1.0 };
            inner += w2 * phi(z2) * g(l21 * z1 + l22 * z2);
        }
        total += w1 * phi(z1) * fu * inner;
    }
    total * h * h
}

#[test]
fn t_operator_matches_trapezoid_oracle() {
    let covs = [(1.0, 0.3, 2.0), (9.0, -4.0, 4.0), (0.2, 0.19, 0.2), (25.0, 10.0, 16.0)];
    for act in [Activation::Sigmoid, Activation::Tanh] {
        for &(a, b, c) in &covs {
            let cov = CovPair::new(a, b, c);
            let sig = |x: f64| act.eval(0, x);
            let dsig = |x: f64| act.eval(1, x);
            let t00 = trapezoid_expectation(sig, sig, a, b, c);
            let t11 = trapezoid_expectation(dsig, dsig, a, b, c);
            assert!((t_operator(cov, 0, 0, act).unwrap() - t00).abs() < 1e-9, "{act} {a} {b} {c}");
            assert!((t_operator(cov, 1, 1, act).unwrap() - t11).abs() < 1e-9, "{act} {a} {b} {c}");
        }
    }
}

#[test]
fn closed_form_matches_recursion_over_pairs() {
    let mut rng = stream(11, &[]);
    for _ in 0..100 {
        let n0 = rng.random_range(2..20);
        let a = gaussian(n0, &mut rng) * 10f64.powf(rng.random_range(-1.0..1.5));
        let b = gaussian(n0, &mut rng) * 10f64.powf(rng.random_range(-1.0..1.5));
        let cf = closed_form_ntk_2layer(&a, &b).unwrap();
        let rec = ntk_recursion(&a, &b, 2, Activation::ErfScaledSigmoid).unwrap().theta();
        assert!((cf - rec).abs() < 1e-9, "{cf} vs {rec}");
    }
}

#[test]
fn quadrature_doubling_is_stable() {
    let base = Quadrature::default();
    let fine = base.doubled();
    let mut rng = stream(12, &[]);
    for _ in 0..12 {
        let a = gaussian(8, &mut rng) * 10f64.powf(rng.random_range(-1.0..2.5));
        let b = gaussian(8, &mut rng) * 10f64.powf(rng.random_range(-1.0..2.5));
        for depth in 2..=4 {
            let x = ntk_recursion_with(&base, &a, &b, depth, Activation::Sigmoid).unwrap().theta();
            let y = ntk_recursion_with(&fine, &a, &b, depth, Activation::Sigmoid).unwrap().theta();
            assert!((x - y).abs() < 1e-9 * y.abs().max(1.0), "depth {depth}: {x} vs {y}");
        }
    }
}

#[test]
fn cauchy_schwarz_for_sigmoid_recursion() {
    let mut rng = stream(13, &[]);
    for _ in 0..20 {
        let a = gaussian(6, &mut rng) * rng.random_range(0.1..30.0);
        let b = gaussian(6, &mut rng) * rng.random_range(0.1..30.0);
        for depth in [2, 3] {
            let ab = ntk_recursion(&a, &b, depth, Activation::Sigmoid).unwrap().theta();
            let aa = ntk_recursion(&a, &a, depth, Activation::Sigmoid).unwrap().theta();
            let bb = ntk_recursion(&b, &b, depth, Activation::Sigmoid).unwrap().theta();
            assert!(ab * ab <= aa * bb * (1.0 + 1e-12));
        }
    }
}

#[test]
fn diagonal_lower_bound_with_full_recursion() {
    let mut rng = stream(14, &[]);
    for _ in 0..30 {
        let x = gaussian(5, &mut rng) * 10f64.powf(rng.random_range(-3.0..2.0));
        for depth in 2..=5 {
            assert!(ntk_recursion(&x, &x, depth, Activation::Sigmoid).unwrap().theta() >= 0.25 - 1e-9);
        }
    }
}

#[test]
fn regression_interpolates_with_surrogate() {
    let data = Dataset::random_sphere(6, 4, 3.0, &mut stream(15, &[])).unwrap();
    let ks = KernelSystem::new(&data, Kernel::new(3, Activation::Sigmoid)).unwrap();
    let init = InitSurrogate::finite_width(6, 300, 3, Activation::Sigmoid, 15).unwrap();
    for i in 0..4 {
        let x = data.column(i);
        assert!((f_infinity(&data, &ks, &init, &x).unwrap() - &x).amax() < 1e-8);
    }
}

#[test]
fn large_radius_approximation_improves_with_r() {
    let base = Dataset::random_sphere(8, 4, 1.0, &mut stream(16, &[])).unwrap();
    let init = InitSurrogate::finite_width(8, 500, 2, Activation::ErfScaledSigmoid, 16).unwrap();
    let rel = |r: f64| {
        let data = base.rescaled(r).unwrap();
        let ks = KernelSystem::new(&data, Kernel::ErfScaledTwoLayer).unwrap();
        let x = data.column(0);
        let exact = jacobian_infinity(&data, &ks, &init, &x, false).unwrap();
        let approx = jacobian_infinity(&data, &ks, &init, &x, true).unwrap();
        (exact - &approx).norm() / approx.norm()
    };
    let (near, far) = (rel(10.0), rel(1000.0));
    assert!(far < near, "{far} vs {near}");
    assert!(far < 1e-2, "{far}");
}
