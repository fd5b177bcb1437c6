//! Scalar abstraction for the numeric core.
//!
//! Every model computation is generic over [`Scalar`], so the same code runs
//! in `f32` or `f64`. The crate-root aliases pin the default precision used
//! by the CLI and the bundled experiments.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the model layer.
///
/// Implemented for `f32` and `f64`. Beyond the arithmetic supplied by
/// `num_traits::Float`, models need the log-gamma function (closed-form
/// moments of Weibull-type utilities) and the Euler–Mascheroni constant
/// (Gumbel-type utilities).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Natural log of the gamma function at `self`.
    fn ln_gamma(self) -> Self;

    /// Euler–Mascheroni constant γ.
    fn euler_gamma() -> Self;

    /// Lossy conversion from `f64`; panics only for values outside the
    /// target type's range, which never occurs for the constants used here.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    /// Lossy widening to `f64`.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f64 {
    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(self)
    }

    fn euler_gamma() -> Self {
        statrs::consts::EULER_MASCHERONI
    }
}

impl Scalar for f32 {
    // No f32 log-gamma in the ecosystem; evaluate in f64 and round once.
    fn ln_gamma(self) -> Self {
        statrs::function::gamma::ln_gamma(self as f64) as f32
    }

    fn euler_gamma() -> Self {
        statrs::consts::EULER_MASCHERONI as f32
    }
}

/// Numerically stable `ln(sum(exp(x_i)))`.
///
/// Returns negative infinity on an empty slice.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let mut max = T::neg_infinity();
    for &x in xs {
        if x > max {
            max = x;
        }
    }
    if max.is_infinite() && max < T::zero() {
        return T::neg_infinity();
    }
    let sum = xs.iter().map(|&x| (x - max).exp()).sum::<T>();
    max + sum.ln()
}

/// Two-argument log-sum-exp, the inner recursion of the pairwise models.
pub fn log_add_exp<T: Scalar>(a: T, b: T) -> T {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi.is_infinite() && hi < T::zero() {
        return T::neg_infinity();
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Softmax of `xs`, computed from log-weights and renormalized so the sum
/// is one to machine precision even for very large log-weight magnitudes.
pub fn softmax<T: Scalar>(xs: &[T]) -> Vec<T> {
    let lse = log_sum_exp(xs);
    let mut out: Vec<T> = xs.iter().map(|&x| (x - lse).exp()).collect();
    let total: T = out.iter().copied().sum();
    for v in &mut out {
        *v = *v / total;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_naive_on_moderate_input() {
        let xs = [0.1f64, -1.3, 2.7, 0.0];
        let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - naive).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_survives_large_magnitudes() {
        let xs = [1000.0f64, 1000.0];
        assert!((log_sum_exp(&xs) - (1000.0 + 2.0f64.ln())).abs() < 1e-12);
        let xs = [-1000.0f64, -1000.0];
        assert!((log_sum_exp(&xs) - (-1000.0 + 2.0f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[3.0f64, -2.0, 700.0, 699.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn ln_gamma_reference_values() {
        // Γ(2) = 1, Γ(3) = 2, Γ(1.5) = √π/2.
        assert!((2.0f64.ln_gamma()).abs() < 1e-14);
        assert!((3.0f64.ln_gamma() - 2.0f64.ln()).abs() < 1e-14);
        let half = (std::f64::consts::PI.sqrt() / 2.0).ln();
        assert!((1.5f64.ln_gamma() - half).abs() < 1e-14);
    }
}
