//! Gaussian expectations of smooth, saturating scalar functions.
//!
//! Narrow Gaussians use tensorised Gauss–Hermite rules. Once a standard
//! deviation exceeds [`Quadrature::gh_std_limit`], a step function carrying the
//! tail limits is integrated in closed form and the compactly supported residual
//! is integrated with composite Gauss–Legendre panels; the outer dimension of a
//! bivariate expectation is then handled by adaptive Gauss–Kronrod on the
//! standardised variable.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, Mutex, OnceLock};

use crate::activation::Profile;

/// Nodes and weights of a one-dimensional rule.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Hermite rule for `E[h(z)]`, `z ~ N(0, 1)`; weights sum to one.
pub fn gauss_hermite(n: usize) -> GaussRule {
    assert!(n >= 1);
    // Newton iteration on orthonormal Hermite functions (weight e^{-x^2}).
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let norm = PI.sqrt();
    let nodes = x.iter().map(|v| v * SQRT_2).collect();
    let weights = w.iter().map(|v| v / norm).collect();
    GaussRule { nodes, weights }
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> GaussRule {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    GaussRule { nodes: x, weights: w }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) over consecutive breakpoints.
pub fn adaptive_gk<F: Fn(f64) -> f64>(f: &F, breaks: &[f64], tol: f64, max_intervals: usize) -> f64 {
    let mut parts: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(max_intervals + breaks.len());
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (v, e) = gk15(f, w[0], w[1]);
            parts.push((w[0], w[1], v, e));
        }
    }
    while parts.len() < max_intervals {
        let total_err: f64 = parts.iter().map(|p| p.3).sum();
        if total_err <= tol {
            break;
        }
        let (idx, _) = parts.iter().enumerate().max_by(|x, y| x.1 .3.total_cmp(&y.1 .3)).expect("non-empty");
        let (a, b, _, _) = parts.swap_remove(idx);
        let m = 0.5 * (a + b);
        let (v1, e1) = gk15(f, a, m);
        let (v2, e2) = gk15(f, m, b);
        parts.push((a, m, v1, e1));
        parts.push((m, b, v2, e2));
    }
    // sum in a fixed order so results do not depend on refinement history
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    parts.iter().map(|p| p.2).sum()
}

/// Standard normal CDF.
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

type RuleCache = Mutex<HashMap<(bool, usize), Arc<GaussRule>>>;

fn rule_cache() -> &'static RuleCache {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached_rule(hermite: bool, n: usize) -> Arc<GaussRule> {
    let mut cache = rule_cache().lock().expect("rule cache poisoned");
    cache
        .entry((hermite, n))
        .or_insert_with(|| Arc::new(if hermite { gauss_hermite(n) } else { gauss_legendre(n) }))
        .clone()
}

/// Quadrature settings shared by every kernel evaluation.
#[derive(Debug, Clone)]
pub struct Quadrature {
    gh: Arc<GaussRule>,
    gl: Arc<GaussRule>,
    /// Standard deviations at or below this use plain Gauss–Hermite.
    pub gh_std_limit: f64,
    /// For functions with complex poles, Gauss–Hermite is also limited to
    /// `std ≤ pole_fraction * pole distance`.
    pub pole_fraction: f64,
    /// Width of the Gauss–Legendre panels on the residual.
    pub panel_width: f64,
    /// Gaussian mass beyond this many standard deviations is dropped.
    pub tail_sigmas: f64,
    pub adaptive_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::new(80)
    }
}

impl Quadrature {
    /// `gh_nodes` Gauss–Hermite nodes per dimension; the other settings scale with it.
    pub fn new(gh_nodes: usize) -> Self {
        let scale = (gh_nodes as f64 / 80.0).max(0.25);
        Quadrature {
            gh: cached_rule(true, gh_nodes),
            gl: cached_rule(false, ((16.0 * scale).round() as usize).max(4)),
            gh_std_limit: 1.5,
            pole_fraction: 0.15,
            panel_width: 4.0 / scale,
            tail_sigmas: (9.0 * scale.sqrt()).min(14.0),
            adaptive_tol: 1e-12 / (scale * scale),
            max_intervals: (400.0 * scale) as usize,
        }
    }

    /// The same scheme at twice the resolution, for convergence checks.
    pub fn doubled(&self) -> Self {
        Quadrature::new(self.gh.len() * 2)
    }

    pub fn gh_nodes(&self) -> usize {
        self.gh.len()
    }

    pub fn hermite(&self) -> &GaussRule {
        &self.gh
    }

    fn hermite_ok(&self, profile: Profile, std: f64) -> bool {
        profile.radius.is_none()
            || (std <= self.gh_std_limit && profile.pole.is_none_or(|d| std <= self.pole_fraction * d))
    }

    /// `E[h(mean + std * z)]` for `z ~ N(0, 1)`.
    pub fn expect_1d<H: Fn(f64) -> f64>(&self, h: &H, profile: Profile, mean: f64, std: f64) -> f64 {
        if std <= 0.0 {
            return h(mean);
        }
        let radius = match profile.radius {
            Some(r) if !self.hermite_ok(profile, std) => r,
            _ => {
                return self.gh.nodes.iter().zip(&self.gh.weights).map(|(z, w)| w * h(mean + std * z)).sum();
            }
        };
        let step = profile.lo * normal_cdf(-mean / std) + profile.hi * normal_cdf(mean / std);
        let lo = (-radius).max(mean - self.tail_sigmas * std);
        let hi = radius.min(mean + self.tail_sigmas * std);
        if hi <= lo {
            return step;
        }
        let residual = |y: f64| {
            let limit = if y < 0.0 { profile.lo } else { profile.hi };
            (h(y) - limit) * normal_pdf((y - mean) / std) / std
        };
        let width = self
            .panel_width
            .min(2.0 * std)
            .min(profile.pole.map_or(f64::INFINITY, |d| 1.3 * d * self.panel_width / 4.0));
        let mut total = step;
        if lo < 0.0 && hi > 0.0 {
            total += self.panels(&residual, lo, 0.0, width);
            total += self.panels(&residual, 0.0, hi, width);
        } else {
            total += self.panels(&residual, lo, hi, width);
        }
        total
    }

    fn panels<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64, max_width: f64) -> f64 {
        let count = ((b - a) / max_width).ceil().max(1.0) as usize;
        let width = (b - a) / count as f64;
        let mut acc = 0.0;
        for k in 0..count {
            let left = a + width * k as f64;
            let half = 0.5 * width;
            let mid = left + half;
            let mut s = 0.0;
            for (x, w) in self.gl.nodes.iter().zip(&self.gl.weights) {
                s += w * f(mid + half * x);
            }
            acc += s * half;
        }
        acc
    }

    /// `E[f(u) g(v)]` for `(u, v) ~ N(0, [[a, b], [b, c]])`.
    ///
    /// The covariance must already be PSD; `b` is clamped into the feasible range.
    #[allow(clippy::too_many_arguments)]
    pub fn expect_2d<F, G>(&self, f: &F, pf: Profile, g: &G, pg: Profile, a: f64, b: f64, c: f64) -> f64
    where
        F: Fn(f64) -> f64,
        G: Fn(f64) -> f64,
    {
        const DEGENERATE: f64 = 1e-14;
        let a = a.max(0.0);
        let c = c.max(0.0);
        if a < DEGENERATE && c < DEGENERATE {
            return f(0.0) * g(0.0);
        }
        if a < DEGENERATE {
            return f(0.0) * self.expect_1d(g, pg, 0.0, c.sqrt());
        }
        if c < DEGENERATE {
            return g(0.0) * self.expect_1d(f, pf, 0.0, a.sqrt());
        }
        let bound = (a * c).sqrt();
        let b = b.clamp(-bound, bound);

        let hermite = (pf.radius.is_none() && pg.radius.is_none())
            || (self.hermite_ok(pf, a.sqrt())
                && self.hermite_ok(pg, a.sqrt())
                && self.hermite_ok(pf, c.sqrt())
                && self.hermite_ok(pg, c.sqrt()));
        if hermite {
            let sa = a.sqrt();
            let l21 = b / sa;
            let tau = (c - l21 * l21).max(0.0).sqrt();
            let rule = &self.gh;
            let mut total = 0.0;
            for (z1, w1) in rule.nodes.iter().zip(&rule.weights) {
                let fu = f(sa * z1);
                let mut inner = 0.0;
                for (z2, w2) in rule.nodes.iter().zip(&rule.weights) {
                    inner += w2 * g(l21 * z1 + tau * z2);
                }
                total += w1 * fu * inner;
            }
            return total;
        }

        // outer variable is the wider one
        if c > a {
            return self.expect_2d(g, pg, f, pf, c, b, a);
        }
        let sa = a.sqrt();
        let beta = b / a;
        let tau = (c - b * beta).max(0.0).sqrt();
        let zmax = self.tail_sigmas;
        let integrand = |z: f64| {
            let u = sa * z;
            let fu = f(u);
            if fu == 0.0 {
                return 0.0;
            }
            normal_pdf(z) * fu * self.expect_1d(g, pg, beta * u, tau)
        };
        let mut breaks = vec![-zmax, 0.0, zmax];
        let yf = pf.radius.unwrap_or(f64::INFINITY);
        let yg = pg.radius.unwrap_or(f64::INFINITY);
        breaks.push(yf / sa);
        breaks.push(-yf / sa);
        if beta != 0.0 {
            for edge in [yg / beta.abs(), (yg + zmax * tau) / beta.abs()] {
                breaks.push(edge / sa);
                breaks.push(-edge / sa);
            }
        }
        breaks.retain(|z| z.is_finite() && z.abs() <= zmax);
        breaks.sort_by(|x, y| x.total_cmp(y));
        breaks.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        adaptive_gk(&integrand, &breaks, self.adaptive_tol, self.max_intervals)
    }
}
