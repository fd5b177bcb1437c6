//! Closed-form moments of the model utilities: per-route expected value and
//! variance, plus the expected maximum utility, for the additive (Gumbel
//! marginals) and multiplicative (reversed-Weibull marginals) families, and
//! the per-route conditional moments of the reference-route models.
//!
//! No closed form exists for the covariances, nor for the expected maximum
//! in the reference-route case; those stay out of scope.

use rand::Rng;
use rand_distr::{Distribution, Gumbel, Weibull};

use crate::error::{Error, Result};
use crate::model::{GeneratingFunction, UtilitySpec};
use crate::network::RouteSet;
use crate::scalar::Scalar;

/// Per-route means and variances together with the expected maximum utility.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport<T> {
    pub means: Vec<T>,
    pub variances: Vec<T>,
    pub expected_max: T,
}

/// Moments under the additive utility formula.
///
/// `E[U_r] = V_r + (ln G(1_r) + γ)/μ`, the variance is `π²/(6μ²)` for every
/// route, and the expected maximum is `(ln G(e^{V_1},…) + γ)/μ` — the
/// classic log-sum for the multinomial function.
pub fn additive_moments<T: Scalar>(
    g: &GeneratingFunction<T>,
    rs: &RouteSet<T>,
    u: &UtilitySpec<T>,
) -> Result<MomentReport<T>> {
    let mu = g.mu();
    let gamma = T::euler_gamma();
    let v = u.utilities(rs);
    let means = v
        .iter()
        .enumerate()
        .map(|(r, &vr)| vr + (g.ln_value_at_unit(r) + gamma) / mu)
        .collect();
    let pi = T::from_f64_lossy(std::f64::consts::PI);
    let var = pi * pi / (T::from_f64_lossy(6.0) * mu * mu);
    let expected_max = (g.ln_value(&v)? + gamma) / mu;
    Ok(MomentReport {
        means,
        variances: vec![var; v.len()],
        expected_max,
    })
}

/// Moments under the multiplicative utility formula (all `V_r < 0`).
///
/// `E[U_r] = V_r Γ(1+1/μ) / G(1_r)^{1/μ}`, the variance is quadratic in
/// `V_r`, and the expected maximum is `−G(−1/V_1,…)^{−1/μ} Γ(1+1/μ)`.
pub fn multiplicative_moments<T: Scalar>(
    g: &GeneratingFunction<T>,
    rs: &RouteSet<T>,
    u: &UtilitySpec<T>,
) -> Result<MomentReport<T>> {
    u.require_negative(rs)?;
    let mu = g.mu();
    let v = u.utilities(rs);
    let means = v
        .iter()
        .enumerate()
        .map(|(r, &vr)| vr * mean_factor(g, mu, r))
        .collect();
    let variances = v
        .iter()
        .enumerate()
        .map(|(r, &vr)| vr * vr * variance_factor(g, mu, r))
        .collect();
    let ln_y: Vec<T> = v.iter().map(|&vr| -(-vr).ln()).collect();
    let expected_max =
        -((-g.ln_value(&ln_y)? / mu) + (T::one() + T::one() / mu).ln_gamma()).exp();
    Ok(MomentReport {
        means,
        variances,
        expected_max,
    })
}

/// `Γ(1 + 1/μ) / G(1_r)^{1/μ}`, evaluated in log space.
fn mean_factor<T: Scalar>(g: &GeneratingFunction<T>, mu: T, r: usize) -> T {
    ((T::one() + T::one() / mu).ln_gamma() - g.ln_value_at_unit(r) / mu).exp()
}

/// `(Γ(1 + 2/μ) − Γ(1 + 1/μ)²) / G(1_r)^{2/μ}`, evaluated in log space so
/// the gamma difference survives small scales.
fn variance_factor<T: Scalar>(g: &GeneratingFunction<T>, mu: T, r: usize) -> T {
    let two = T::from_f64_lossy(2.0);
    let a = (T::one() + two / mu).ln_gamma();
    let b = two * (T::one() + T::one() / mu).ln_gamma();
    // ln(e^a − e^b) = a + ln(1 − e^{b−a}); a > b since the variance is positive.
    let ln_diff = a + (-((b - a).exp())).ln_1p();
    (ln_diff - two * g.ln_value_at_unit(r) / mu).exp()
}

/// Per-route conditional means and variances of the reference-route
/// utilities for a given reference. The reference route's own utility keeps
/// its full multiplicative moments; any other route splits into its
/// non-overlapping part (with its own error and constant) plus the part
/// shared with the reference (driven by the reference's error).
pub fn md_conditional_moments<T: Scalar>(
    g: &GeneratingFunction<T>,
    rs: &RouteSet<T>,
    u: &UtilitySpec<T>,
    reference: &str,
) -> Result<(Vec<T>, Vec<T>)> {
    u.require_negative(rs)?;
    let ref_idx = rs.route_position(reference)?;
    let mu = g.mu();
    let n = rs.n_routes();
    let v = u.utilities(rs);
    let mut means = Vec::with_capacity(n);
    let mut vars = Vec::with_capacity(n);
    for p in 0..n {
        if p == ref_idx {
            means.push(v[p] * mean_factor(g, mu, p));
            vars.push(v[p] * v[p] * variance_factor(g, mu, p));
            continue;
        }
        let own_cost = rs.non_overlap_cost_at(p, ref_idx);
        let shared_cost = rs.overlap_cost_at(p, ref_idx);
        if shared_cost > T::zero() && !(own_cost > T::zero()) {
            return Err(Error::DegeneratePair {
                a: rs.routes()[ref_idx].id.clone(),
                b: rs.routes()[p].id.clone(),
            });
        }
        let own = u.c - own_cost;
        let shared = -shared_cost;
        means.push(own * mean_factor(g, mu, p) + shared * mean_factor(g, mu, ref_idx));
        vars.push(
            own * own * variance_factor(g, mu, p)
                + shared * shared * variance_factor(g, mu, ref_idx),
        );
    }
    Ok((means, vars))
}

// ---------------------------------------------------------------------------
// Samplers for the independent (multinomial) marginals
// ---------------------------------------------------------------------------

/// One joint draw of additive multinomial utilities: `V_r` plus independent
/// Gumbel noise with scale `1/μ`.
pub fn sample_additive_mn<R: Rng + ?Sized>(v: &[f64], mu: f64, rng: &mut R) -> Vec<f64> {
    let noise = Gumbel::new(0.0, 1.0 / mu).expect("positive gumbel scale");
    v.iter().map(|&vr| vr + noise.sample(rng)).collect()
}

/// One joint draw of multiplicative multinomial utilities: `−U_r` is Weibull
/// with shape `μ` and scale `−V_r` (all `V_r < 0`).
pub fn sample_multiplicative_mn<R: Rng + ?Sized>(
    v: &[f64],
    mu: f64,
    rng: &mut R,
) -> Vec<f64> {
    v.iter()
        .map(|&vr| {
            let w = Weibull::new(-vr, mu).expect("positive weibull scale");
            -w.sample(rng)
        })
        .collect()
}
