//! Element-wise activations with exact derivatives up to third order.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::NtkError;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Activation family. `Linear` is the affine map `slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    /// `erf(x / 2) / 2 + 1 / 2`, the erf surrogate of the logistic sigmoid.
    ErfScaledSigmoid,
    Erf,
    Tanh,
    Linear {
        slope: f64,
        intercept: f64,
    },
}

/// Behaviour of `σ^(k)` far from the origin, used by the quadrature to split off
/// the saturated tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    /// Limit as `x → -∞`.
    pub lo: f64,
    /// Limit as `x → +∞`.
    pub hi: f64,
    /// Beyond `|x| > radius` the function equals its limit to ~1e-17.
    /// `None` means the function never saturates (affine).
    pub radius: Option<f64>,
    /// Distance from the real axis to the nearest complex singularity;
    /// `None` for entire functions.
    pub pole: Option<f64>,
}

impl Activation {
    pub fn linear(slope: f64, intercept: f64) -> Self {
        Activation::Linear { slope, intercept }
    }

    /// The linear-region surrogate of the sigmoid: `x / 4 + 1 / 2`.
    pub fn sigmoid_linearized() -> Self {
        Activation::Linear { slope: 0.25, intercept: 0.5 }
    }

    /// `σ^(order)(x)` for `order ∈ {0, 1, 2, 3}`.
    ///
    /// Panics on any other order.
    pub fn eval(&self, order: u8, x: f64) -> f64 {
        assert!(order <= 3, "activation derivative order {order} is not supported (0..=3)");
        match *self {
            Activation::Sigmoid => {
                // e = exp(-|x|) keeps every branch overflow free
                let e = (-x.abs()).exp();
                let s = if x >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
                let d1 = e / ((1.0 + e) * (1.0 + e));
                match order {
                    0 => s,
                    1 => d1,
                    2 => d1 * (1.0 - 2.0 * s),
                    _ => d1 * (1.0 - 6.0 * d1),
                }
            }
            Activation::ErfScaledSigmoid => {
                let d1 = 0.5 * FRAC_1_SQRT_PI * (-0.25 * x * x).exp();
                match order {
                    0 => 0.5 * libm::erf(0.5 * x) + 0.5,
                    _ if d1 == 0.0 => 0.0,
                    1 => d1,
                    2 => -0.5 * x * d1,
                    _ => (0.25 * x * x - 0.5) * d1,
                }
            }
            Activation::Erf => {
                let d1 = 2.0 * FRAC_1_SQRT_PI * (-x * x).exp();
                match order {
                    0 => libm::erf(x),
                    _ if d1 == 0.0 => 0.0,
                    1 => d1,
                    2 => -2.0 * x * d1,
                    _ => (4.0 * x * x - 2.0) * d1,
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                let d1 = 1.0 - t * t;
                match order {
                    0 => t,
                    1 => d1,
                    2 => -2.0 * t * d1,
                    _ => d1 * (6.0 * t * t - 2.0),
                }
            }
            Activation::Linear { slope, intercept } => match order {
                0 => slope * x + intercept,
                1 => slope,
                _ => 0.0,
            },
        }
    }

    /// Tail behaviour of `σ^(order)`.
    pub fn profile(&self, order: u8) -> Profile {
        let (lo, hi) = match (self, order) {
            (Activation::Sigmoid | Activation::ErfScaledSigmoid, 0) => (0.0, 1.0),
            (Activation::Erf | Activation::Tanh, 0) => (-1.0, 1.0),
            _ => (0.0, 0.0),
        };
        let radius = match self {
            Activation::Sigmoid => Some(42.0),
            Activation::ErfScaledSigmoid => Some(18.0),
            Activation::Erf => Some(9.0),
            Activation::Tanh => Some(22.0),
            Activation::Linear { .. } => None,
        };
        let pole = match self {
            Activation::Sigmoid => Some(PI),
            Activation::Tanh => Some(0.5 * PI),
            _ => None,
        };
        Profile { lo, hi, radius, pole }
    }

    /// Slope at the origin, `σ'(0)`.
    pub fn slope_at_zero(&self) -> f64 {
        self.eval(1, 0.0)
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Activation::Linear { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::ErfScaledSigmoid => "erf_scaled_sigmoid",
            Activation::Erf => "erf",
            Activation::Tanh => "tanh",
            Activation::Linear { .. } => "linear",
        }
    }

    pub(crate) fn tag(&self) -> u32 {
        match self {
            Activation::Sigmoid => 0,
            Activation::ErfScaledSigmoid => 1,
            Activation::Erf => 2,
            Activation::Tanh => 3,
            Activation::Linear { .. } => 4,
        }
    }

    pub(crate) fn from_tag(tag: u32, slope: f64, intercept: f64) -> Option<Self> {
        Some(match tag {
            0 => Activation::Sigmoid,
            1 => Activation::ErfScaledSigmoid,
            2 => Activation::Erf,
            3 => Activation::Tanh,
            4 => Activation::Linear { slope, intercept },
            _ => return None,
        })
    }

    pub(crate) fn affine_params(&self) -> (f64, f64) {
        match *self {
            Activation::Linear { slope, intercept } => (slope, intercept),
            _ => (0.0, 0.0),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Linear { slope, intercept } => write!(f, "linear({slope},{intercept})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Activation {
    type Err = NtkError;

    /// Accepts `sigmoid`, `erf_scaled_sigmoid`, `erf`, `tanh`, `linear`,
    /// `linear(slope,intercept)` and `sigmoid_linearized`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "sigmoid" => return Ok(Activation::Sigmoid),
            "erf_scaled_sigmoid" | "erf_sigmoid" => return Ok(Activation::ErfScaledSigmoid),
            "erf" => return Ok(Activation::Erf),
            "tanh" => return Ok(Activation::Tanh),
            "linear" => return Ok(Activation::linear(1.0, 0.0)),
            "sigmoid_linearized" => return Ok(Activation::sigmoid_linearized()),
            _ => {}
        }
        if let Some(args) = s.strip_prefix("linear(").and_then(|r| r.strip_suffix(')')) {
            let parts: Vec<&str> = args.split(',').collect();
            if parts.len() == 2 {
                let slope = parts[0].trim().parse::<f64>();
                let intercept = parts[1].trim().parse::<f64>();
                if let (Ok(slope), Ok(intercept)) = (slope, intercept) {
                    return Ok(Activation::linear(slope, intercept));
                }
            }
        }
        Err(NtkError::InvalidArgument(format!("unknown activation '{s}'")))
    }
}

/// `1 / (2π)`, a constant that shows up in every erf closed form.
pub(crate) const FRAC_1_2PI: f64 = 1.0 / (2.0 * PI);

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [Activation; 5] = [
        Activation::Sigmoid,
        Activation::ErfScaledSigmoid,
        Activation::Erf,
        Activation::Tanh,
        Activation::Linear { slope: 0.25, intercept: 0.5 },
    ];

    #[test]
    fn sigmoid_at_origin() {
        assert_eq!(Activation::Sigmoid.eval(0, 0.0), 0.5);
        assert_eq!(Activation::Sigmoid.eval(1, 0.0), 0.25);
    }

    #[test]
    fn affine_higher_derivatives_vanish() {
        let act = Activation::linear(0.25, 0.5);
        assert_eq!(act.eval(2, 3.7), 0.0);
        assert_eq!(act.eval(3, -1.0), 0.0);
    }

    #[test]
    #[should_panic]
    fn order_four_is_rejected() {
        Activation::Tanh.eval(4, 0.1);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for act in ALL {
            for &x in &[-3.1, -0.7, 0.0, 0.4, 2.2, 5.0] {
                for order in 1..=3u8 {
                    let fd = (act.eval(order - 1, x + h) - act.eval(order - 1, x - h)) / (2.0 * h);
                    let exact = act.eval(order, x);
                    assert!(
                        (fd - exact).abs() < 1e-8 * (1.0 + exact.abs()),
                        "{act} order {order} at {x}: fd {fd} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn finite_for_extreme_inputs() {
        for act in ALL {
            for &x in &[-1e300, -800.0, 800.0, 1e300] {
                for order in 0..=3u8 {
                    let v = act.eval(order, x);
                    if !act.is_linear() {
                        assert!(v.is_finite(), "{act} order {order} at {x} = {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn profiles_match_far_field() {
        for act in ALL.iter().filter(|a| !a.is_linear()) {
            for order in 0..=3u8 {
                let p = act.profile(order);
                let r = p.radius.unwrap();
                assert!((act.eval(order, r) - p.hi).abs() < 1e-15, "{act} {order}");
                assert!((act.eval(order, -r) - p.lo).abs() < 1e-15, "{act} {order}");
            }
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("sigmoid".parse::<Activation>().unwrap(), Activation::Sigmoid);
        assert_eq!("linear(0.25, 0.5)".parse::<Activation>().unwrap(), Activation::linear(0.25, 0.5));
        assert!("relu".parse::<Activation>().is_err());
    }

    proptest::proptest! {
        #[test]
        fn sigmoid_slope_is_bounded(x in -1e6f64..1e6) {
            let d = Activation::Sigmoid.eval(1, x);
            proptest::prop_assert!((0.0..=0.25).contains(&d));
        }
    }
}
