//! Generating functions, generating vectors, and the closed-form choice
//! probability they induce.
//!
//! Every model in the family is the same formula
//!
//! ```text
//! P_r = y_r G_r(y) / Σ_p y_p G_p(y)
//! ```
//!
//! specialized by a μ-homogeneous generating function `G` (multinomial,
//! path-size, paired-combinatorial, or link-nested) and a strictly positive
//! generating vector `y` (additive, multiplicative, reference-route, or
//! hybrid). All evaluation happens in log space: scale parameters in the
//! hundreds and utilities in the tens are routine here, and `exp(μ·V)` would
//! overflow long before the probabilities stop being well defined.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::RouteSet;
use crate::scalar::{log_add_exp, log_sum_exp, softmax, Scalar};

// ---------------------------------------------------------------------------
// Generating functions
// ---------------------------------------------------------------------------

/// A μ-homogeneous generating function over route weights.
///
/// The variant fixes how overlap enters the joint error distribution; the
/// structure vectors/matrices (path-size factors, similarity indices,
/// inclusion coefficients) are precomputed from a route set, or supplied
/// directly for synthetic cases.
#[derive(Debug, Clone)]
pub enum GeneratingFunction<T> {
    /// Independent errors: `G(z) = Σ_r z_r^μ`.
    Multinomial { mu: T },
    /// Path-size weights: `G(z) = Σ_r ps_r^β z_r^μ`.
    PathSize { mu: T, beta: T, ps: Vec<T> },
    /// A nest per route pair with similarity-driven scales:
    /// `G(z) = Σ_r Σ_{p≠r} (z_r^{μ/(1−φ_rp)} + z_p^{μ/(1−φ_rp)})^{1−φ_rp}`.
    PairedCombinatorial { mu: T, phi: Matrix<T> },
    /// A nest per link with inclusion coefficients:
    /// `G(z) = Σ_l (Σ_r α_lr z_r^{μ_l})^{μ/μ_l}`.
    LinkNested {
        mu: T,
        nest_scales: Vec<T>,
        alpha: Matrix<T>,
    },
}

impl<T: Scalar> GeneratingFunction<T> {
    pub fn multinomial(mu: T) -> Result<Self> {
        check_scale(mu)?;
        Ok(Self::Multinomial { mu })
    }

    /// Path-size function with factors taken from the route set.
    pub fn path_size(mu: T, beta: T, rs: &RouteSet<T>) -> Result<Self> {
        Self::path_size_raw(mu, beta, rs.path_size_factors())
    }

    pub fn path_size_raw(mu: T, beta: T, ps: Vec<T>) -> Result<Self> {
        check_scale(mu)?;
        if let Some(bad) = ps.iter().find(|&&p| !(p > T::zero()) || p > T::one()) {
            return Err(Error::InvalidParameter(format!(
                "path-size factor {bad} outside (0, 1]"
            )));
        }
        Ok(Self::PathSize { mu, beta, ps })
    }

    /// Paired-combinatorial function with similarity indices from the route
    /// set.
    pub fn paired_combinatorial(mu: T, rs: &RouteSet<T>) -> Result<Self> {
        Self::paired_combinatorial_raw(mu, rs.similarity_matrix()?)
    }

    pub fn paired_combinatorial_raw(mu: T, phi: Matrix<T>) -> Result<Self> {
        check_scale(mu)?;
        if phi.rows() != phi.cols() || phi.rows() < 2 {
            return Err(Error::TooFewRoutes {
                required: 2,
                got: phi.rows(),
            });
        }
        let ceiling = T::one() - T::from_f64_lossy(crate::network::SIMILARITY_CLAMP / 2.0);
        for r in 0..phi.rows() {
            for p in 0..phi.cols() {
                if r == p {
                    continue;
                }
                let v = phi.get(r, p);
                if v < T::zero() || v > ceiling {
                    return Err(Error::InvalidParameter(format!(
                        "similarity index {v} outside [0, 1)"
                    )));
                }
            }
        }
        Ok(Self::PairedCombinatorial { mu, phi })
    }

    /// Link-nested function with inclusion coefficients from the route set
    /// and per-link scales from `scales` (links absent from the map collapse
    /// to `mu`). Scales below `mu` are rejected unless `allow_low_scales` is
    /// set; the joint distribution is only known to be well defined for
    /// `μ_l ≥ μ`.
    pub fn link_nested(
        mu: T,
        scales: &BTreeMap<String, T>,
        rs: &RouteSet<T>,
        allow_low_scales: bool,
    ) -> Result<Self> {
        let mut nest_scales = vec![mu; rs.n_links()];
        for (id, &scale) in scales {
            nest_scales[rs.link_position(id)?] = scale;
        }
        Self::link_nested_raw(mu, nest_scales, rs.inclusion_matrix(), allow_low_scales)
    }

    pub fn link_nested_raw(
        mu: T,
        nest_scales: Vec<T>,
        alpha: Matrix<T>,
        allow_low_scales: bool,
    ) -> Result<Self> {
        check_scale(mu)?;
        if nest_scales.len() != alpha.rows() {
            return Err(Error::DimensionMismatch {
                expected: alpha.rows(),
                got: nest_scales.len(),
            });
        }
        for &s in &nest_scales {
            if !(s > T::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "nest scale {s} must be positive"
                )));
            }
            if s < mu && !allow_low_scales {
                return Err(Error::InvalidParameter(format!(
                    "nest scale {s} below the global scale {mu}; pass \
                     allow_low_scales to override"
                )));
            }
        }
        Ok(Self::LinkNested {
            mu,
            nest_scales,
            alpha,
        })
    }

    /// The homogeneity degree μ.
    pub fn mu(&self) -> T {
        match self {
            Self::Multinomial { mu }
            | Self::PathSize { mu, .. }
            | Self::PairedCombinatorial { mu, .. }
            | Self::LinkNested { mu, .. } => *mu,
        }
    }

    /// Number of routes the function is built for, when its structure pins
    /// one (the multinomial function accepts any dimension).
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Self::Multinomial { .. } => None,
            Self::PathSize { ps, .. } => Some(ps.len()),
            Self::PairedCombinatorial { phi, .. } => Some(phi.rows()),
            Self::LinkNested { alpha, .. } => Some(alpha.cols()),
        }
    }

    fn check_dimension(&self, n: usize) -> Result<()> {
        match self.dimension() {
            Some(d) if d != n => Err(Error::DimensionMismatch {
                expected: d,
                got: n,
            }),
            _ => Ok(()),
        }
    }

    /// `ln G(z)` from `ln z`. The core evaluation path.
    pub fn ln_value(&self, ln_z: &[T]) -> Result<T> {
        self.check_dimension(ln_z.len())?;
        match self {
            Self::Multinomial { mu } => {
                let terms: Vec<T> = ln_z.iter().map(|&lz| *mu * lz).collect();
                Ok(log_sum_exp(&terms))
            }
            Self::PathSize { mu, beta, ps } => {
                let terms: Vec<T> = ln_z
                    .iter()
                    .zip(ps)
                    .map(|(&lz, &p)| *beta * p.ln() + *mu * lz)
                    .collect();
                Ok(log_sum_exp(&terms))
            }
            Self::PairedCombinatorial { mu, phi } => {
                let n = ln_z.len();
                let mut terms = Vec::with_capacity(n * (n - 1) / 2);
                for r in 0..n {
                    for p in (r + 1)..n {
                        let one_minus = T::one() - phi.get(r, p);
                        let a = *mu / one_minus;
                        let ln_nest = log_add_exp(a * ln_z[r], a * ln_z[p]);
                        terms.push(one_minus * ln_nest);
                    }
                }
                // Ordered pairs double every unordered term.
                Ok(T::from_f64_lossy(2.0).ln() + log_sum_exp(&terms))
            }
            Self::LinkNested {
                mu,
                nest_scales,
                alpha,
            } => {
                let ln_nests = self.ln_link_nests(ln_z, nest_scales, alpha);
                let terms: Vec<T> = ln_nests
                    .iter()
                    .zip(nest_scales)
                    .filter(|(ln_s, _)| ln_s.is_finite())
                    .map(|(&ln_s, &mu_l)| (*mu / mu_l) * ln_s)
                    .collect();
                Ok(log_sum_exp(&terms))
            }
        }
    }

    /// `ln G_r(z)` for every route, from `ln z`.
    pub fn ln_grad(&self, ln_z: &[T]) -> Result<Vec<T>> {
        self.check_dimension(ln_z.len())?;
        let n = ln_z.len();
        match self {
            Self::Multinomial { mu } => Ok(ln_z
                .iter()
                .map(|&lz| mu.ln() + (*mu - T::one()) * lz)
                .collect()),
            Self::PathSize { mu, beta, ps } => Ok(ln_z
                .iter()
                .zip(ps)
                .map(|(&lz, &p)| mu.ln() + *beta * p.ln() + (*mu - T::one()) * lz)
                .collect()),
            Self::PairedCombinatorial { mu, phi } => {
                let two = T::from_f64_lossy(2.0);
                let mut out = Vec::with_capacity(n);
                for r in 0..n {
                    let mut terms = Vec::with_capacity(n - 1);
                    for p in 0..n {
                        if p == r {
                            continue;
                        }
                        let f = phi.get(r, p);
                        let a = *mu / (T::one() - f);
                        let ln_nest = log_add_exp(a * ln_z[r], a * ln_z[p]);
                        terms.push((a - T::one()) * ln_z[r] - f * ln_nest);
                    }
                    out.push(two.ln() + mu.ln() + log_sum_exp(&terms));
                }
                Ok(out)
            }
            Self::LinkNested {
                mu,
                nest_scales,
                alpha,
            } => {
                let ln_nests = self.ln_link_nests(ln_z, nest_scales, alpha);
                let mut out = Vec::with_capacity(n);
                for r in 0..n {
                    let mut terms = Vec::new();
                    for l in 0..alpha.rows() {
                        let a = alpha.get(l, r);
                        if a <= T::zero() {
                            continue;
                        }
                        let mu_l = nest_scales[l];
                        terms.push(
                            a.ln()
                                + (mu_l - T::one()) * ln_z[r]
                                + (*mu / mu_l - T::one()) * ln_nests[l],
                        );
                    }
                    out.push(mu.ln() + log_sum_exp(&terms));
                }
                Ok(out)
            }
        }
    }

    fn ln_link_nests(&self, ln_z: &[T], nest_scales: &[T], alpha: &Matrix<T>) -> Vec<T> {
        (0..alpha.rows())
            .map(|l| {
                let terms: Vec<T> = (0..alpha.cols())
                    .filter(|&r| alpha.get(l, r) > T::zero())
                    .map(|r| alpha.get(l, r).ln() + nest_scales[l] * ln_z[r])
                    .collect();
                log_sum_exp(&terms)
            })
            .collect()
    }

    /// `G(z)` for strictly positive `z`.
    pub fn value(&self, z: &[T]) -> Result<T> {
        Ok(self.ln_value(&ln_checked(z)?)?.exp())
    }

    /// Analytic partial derivatives `(∂G/∂z_1, …)` for strictly positive `z`.
    pub fn grad(&self, z: &[T]) -> Result<Vec<T>> {
        Ok(self
            .ln_grad(&ln_checked(z)?)?
            .into_iter()
            .map(|g| g.exp())
            .collect())
    }

    /// `ln G(1_r)`: the function at the unit vector of route `r`. Needed by
    /// the closed-form moments, where zeros in the argument put the generic
    /// log-space path out of reach.
    pub fn ln_value_at_unit(&self, r: usize) -> T {
        match self {
            Self::Multinomial { .. } => T::zero(),
            Self::PathSize { beta, ps, .. } => *beta * ps[r].ln(),
            Self::PairedCombinatorial { phi, .. } => {
                // Every ordered pair containing r contributes (1+0)^(1−φ) = 1.
                T::from_f64_lossy(2.0 * (phi.rows() as f64 - 1.0)).ln()
            }
            Self::LinkNested {
                mu,
                nest_scales,
                alpha,
            } => {
                let terms: Vec<T> = (0..alpha.rows())
                    .filter(|&l| alpha.get(l, r) > T::zero())
                    .map(|l| (*mu / nest_scales[l]) * alpha.get(l, r).ln())
                    .collect();
                log_sum_exp(&terms)
            }
        }
    }
}

fn check_scale<T: Scalar>(mu: T) -> Result<()> {
    if mu > T::zero() && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "scale parameter {mu} must be positive and finite"
        )))
    }
}

fn ln_checked<T: Scalar>(z: &[T]) -> Result<Vec<T>> {
    z.iter()
        .enumerate()
        .map(|(i, &v)| {
            if v > T::zero() && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::NonPositiveEntry {
                    index: i,
                    value: v.to_f64_lossy(),
                })
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Utilities and generating vectors
// ---------------------------------------------------------------------------

/// Systematic route utilities `V_r = c − cost_r`.
///
/// The travel-cost coefficient is normalized to −1; the constant `c` is the
/// one extra degree of freedom the multiplicative families admit. Additive
/// models require `c = 0` (only utility differences matter there, so the
/// constant is not identified).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilitySpec<T> {
    pub c: T,
}

impl<T: Scalar> UtilitySpec<T> {
    /// The additive normalization, `c = 0`.
    pub fn additive() -> Self {
        Self { c: T::zero() }
    }

    pub fn with_constant(c: T) -> Self {
        Self { c }
    }

    /// `V_r = c − cost_r` for every route.
    pub fn utilities(&self, rs: &RouteSet<T>) -> Vec<T> {
        rs.route_costs().iter().map(|&cost| self.c - cost).collect()
    }

    /// Errors unless every utility is strictly negative, naming the first
    /// offending route.
    pub fn require_negative(&self, rs: &RouteSet<T>) -> Result<()> {
        for (route, &cost) in rs.routes().iter().zip(rs.route_costs()) {
            let v = self.c - cost;
            if !(v < T::zero()) {
                return Err(Error::InvalidUtility {
                    route: route.id.clone(),
                    value: v.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }

    pub fn require_additive(&self) -> Result<()> {
        if self.c == T::zero() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "additive vectors fix the constant at 0, got c = {}",
                self.c
            )))
        }
    }
}

/// How the generating vector is built from utilities.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratingVectorKind<T> {
    /// `y_r = e^{V_r}`.
    Additive,
    /// `y_r = −1/V_r`, requiring `V_r < 0`.
    Multiplicative,
    /// Reference-route differences: `y_ref = 1`, `y_p` the ratio of
    /// non-overlapping utility sums. See the `refroute` module.
    MultiplicativeDelta { reference: String },
    /// `y_r = e^{V_r} / (−V_r)^ρ`: an additive model with a multiplicative
    /// correction of relative scale ρ.
    HybridAdditive { rho: T },
    /// `y_r = e^{V_r/ρ} / (−V_r)`: a multiplicative model with an additive
    /// correction of relative scale ρ.
    HybridMultiplicative { rho: T },
}

impl<T: Scalar> GeneratingVectorKind<T> {
    fn check_rho(rho: T) -> Result<()> {
        if rho > T::zero() && rho.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "hybrid scale ratio {rho} must be positive"
            )))
        }
    }
}

/// `ln y` for the requested vector kind.
///
/// Reference-route vectors are built in the `refroute` module; this function
/// delegates to it so callers can stay kind-agnostic.
pub fn ln_gen_vector<T: Scalar>(
    kind: &GeneratingVectorKind<T>,
    rs: &RouteSet<T>,
    u: &UtilitySpec<T>,
) -> Result<Vec<T>> {
    match kind {
        GeneratingVectorKind::Additive => {
            u.require_additive()?;
            Ok(u.utilities(rs))
        }
        GeneratingVectorKind::Multiplicative => {
            u.require_negative(rs)?;
            Ok(u.utilities(rs).iter().map(|&v| -(-v).ln()).collect())
        }
        GeneratingVectorKind::MultiplicativeDelta { reference } => {
            let idx = rs.route_position(reference)?;
            crate::refroute::ln_md_gen_vector_at(rs, u, idx)
        }
        GeneratingVectorKind::HybridAdditive { rho } => {
            GeneratingVectorKind::check_rho(*rho)?;
            u.require_negative(rs)?;
            Ok(u.utilities(rs)
                .iter()
                .map(|&v| v - *rho * (-v).ln())
                .collect())
        }
        GeneratingVectorKind::HybridMultiplicative { rho } => {
            GeneratingVectorKind::check_rho(*rho)?;
            u.require_negative(rs)?;
            Ok(u.utilities(rs)
                .iter()
                .map(|&v| v / *rho - (-v).ln())
                .collect())
        }
    }
}

/// The generating vector itself; strictly positive.
pub fn gen_vector<T: Scalar>(
    kind: &GeneratingVectorKind<T>,
    rs: &RouteSet<T>,
    u: &UtilitySpec<T>,
) -> Result<Vec<T>> {
    Ok(ln_gen_vector(kind, rs, u)?
        .into_iter()
        .map(|l| l.exp())
        .collect())
}

// ---------------------------------------------------------------------------
// Choice probabilities
// ---------------------------------------------------------------------------

/// `P_r = y_r G_r(y) / Σ_p y_p G_p(y)` from log-weights.
pub fn choice_probabilities_ln<T: Scalar>(
    g: &GeneratingFunction<T>,
    ln_y: &[T],
) -> Result<Vec<T>> {
    let ln_grad = g.ln_grad(ln_y)?;
    let logits: Vec<T> = ln_y
        .iter()
        .zip(&ln_grad)
        .map(|(&ly, &lg)| ly + lg)
        .collect();
    Ok(softmax(&logits))
}

/// `P_r = y_r G_r(y) / Σ_p y_p G_p(y)` for a strictly positive vector `y`.
pub fn choice_probabilities<T: Scalar>(
    g: &GeneratingFunction<T>,
    y: &[T],
) -> Result<Vec<T>> {
    choice_probabilities_ln(g, &ln_checked(y)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::simple_network;

    fn ln(z: &[f64]) -> Vec<f64> {
        z.iter().map(|x| x.ln()).collect()
    }

    #[test]
    fn multinomial_value_and_grad() {
        let g = GeneratingFunction::multinomial(1.0f64).unwrap();
        assert!((g.value(&[1.0, 1.0, 1.0]).unwrap() - 3.0).abs() < 1e-12);

        let g = GeneratingFunction::multinomial(2.0f64).unwrap();
        let grad = g.grad(&[3.0, 4.0]).unwrap();
        assert!((grad[0] - 6.0).abs() < 1e-12);
        assert!((grad[1] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn path_size_value() {
        let g = GeneratingFunction::path_size_raw(1.0f64, 1.0, vec![0.5, 1.0]).unwrap();
        assert!((g.value(&[2.0, 2.0]).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn paired_combinatorial_zero_similarity_grad() {
        let phi = Matrix::<f64>::zeros(3, 3);
        let g = GeneratingFunction::paired_combinatorial_raw(1.0, phi).unwrap();
        let grad = g.grad(&[1.0, 1.0, 1.0]).unwrap();
        for v in grad {
            assert!((v - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn link_nested_with_uniform_scales_collapses_to_multinomial() {
        let rs = simple_network::<f64>();
        let mu = 1.7;
        let g = GeneratingFunction::link_nested(mu, &BTreeMap::new(), &rs, false).unwrap();
        let mn = GeneratingFunction::multinomial(mu).unwrap();
        let z = [0.7, 1.3, 2.1];
        assert!((g.value(&z).unwrap() - mn.value(&z).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn link_nested_rejects_low_scales_without_override() {
        let rs = simple_network::<f64>();
        let scales: BTreeMap<String, f64> = [("a".to_string(), 0.5)].into();
        assert!(GeneratingFunction::link_nested(1.0, &scales, &rs, false).is_err());
        assert!(GeneratingFunction::link_nested(1.0, &scales, &rs, true).is_ok());
    }

    #[test]
    fn value_rejects_nonpositive_input() {
        let g = GeneratingFunction::multinomial(1.0).unwrap();
        assert!(matches!(
            g.value(&[1.0, 0.0]),
            Err(Error::NonPositiveEntry { index: 1, .. })
        ));
    }

    #[test]
    fn dimension_mismatch_detected() {
        let g = GeneratingFunction::path_size_raw(1.0, 1.0, vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            g.value(&[1.0, 1.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn additive_vector_examples() {
        let rs = RouteSet::<f64>::new(
            vec![("a".into(), 1.0), ("b".into(), 1.0)],
            vec![
                ("r".into(), vec!["a".into()]),
                ("s".into(), vec!["b".into()]),
            ],
        )
        .unwrap();
        // V = (−1, −1) shifted to (0, 0) is not representable with c = 0, so
        // check the definition directly: y = e^V.
        let y = gen_vector(&GeneratingVectorKind::Additive, &rs, &UtilitySpec::additive())
            .unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn multiplicative_vector_on_costs() {
        let rs = simple_network::<f64>();
        let y = gen_vector(
            &GeneratingVectorKind::Multiplicative,
            &rs,
            &UtilitySpec::additive(),
        )
        .unwrap();
        assert!((y[0] - 0.25).abs() < 1e-15);
        assert!((y[1] - 0.2).abs() < 1e-15);
        assert!((y[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn multiplicative_vector_rejects_nonnegative_utility() {
        let rs = simple_network::<f64>();
        let u = UtilitySpec::with_constant(4.0); // V_upper = 0
        assert!(matches!(
            gen_vector(&GeneratingVectorKind::Multiplicative, &rs, &u),
            Err(Error::InvalidUtility { .. })
        ));
    }

    #[test]
    fn hybrid_additive_example() {
        let rs = RouteSet::<f64>::new(
            vec![("a".into(), 1.0)],
            vec![("r".into(), vec!["a".into()])],
        )
        .unwrap();
        let y = gen_vector(
            &GeneratingVectorKind::HybridAdditive { rho: 1.0 },
            &rs,
            &UtilitySpec::additive(),
        )
        .unwrap();
        // V = −1: e^{−1} / 1.
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn additive_multinomial_probabilities_on_simple_network() {
        let rs = simple_network::<f64>();
        let g = GeneratingFunction::multinomial(1.0).unwrap();
        let ln_y = ln_gen_vector(&GeneratingVectorKind::Additive, &rs, &UtilitySpec::additive())
            .unwrap();
        let p = choice_probabilities_ln(&g, &ln_y).unwrap();
        // e^{-4}, e^{-5}, e^{-4} normalized.
        assert!((p[0] - 0.42231879).abs() < 1e-7);
        assert!((p[1] - 0.15536242).abs() < 1e-7);
        assert!((p[2] - 0.42231879).abs() < 1e-7);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multiplicative_multinomial_probabilities_on_simple_network() {
        let rs = simple_network::<f64>();
        let g = GeneratingFunction::multinomial(1.0).unwrap();
        let ln_y = ln_gen_vector(
            &GeneratingVectorKind::Multiplicative,
            &rs,
            &UtilitySpec::additive(),
        )
        .unwrap();
        let p = choice_probabilities_ln(&g, &ln_y).unwrap();
        assert!((p[0] - 5.0 / 14.0).abs() < 1e-12);
        assert!((p[1] - 4.0 / 14.0).abs() < 1e-12);
        assert!((p[2] - 5.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn equal_utilities_give_uniform_probabilities() {
        let g = GeneratingFunction::multinomial(3.7f64).unwrap();
        let p = choice_probabilities(&g, &[2.0, 2.0, 2.0, 2.0]).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn probabilities_stable_under_extreme_scales() {
        // μ·V around −7500·5: hopeless in linear space, fine in log space.
        let rs = simple_network::<f64>();
        let g = GeneratingFunction::multinomial(7500.0).unwrap();
        let ln_y = ln_gen_vector(&GeneratingVectorKind::Additive, &rs, &UtilitySpec::additive())
            .unwrap();
        let p = choice_probabilities_ln(&g, &ln_y).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[1] < 1e-300 || p[1] == 0.0);
        assert!((p[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn works_in_f32_too() {
        let rs = simple_network::<f32>();
        let g = GeneratingFunction::multinomial(1.0f32).unwrap();
        let ln_y = ln_gen_vector(
            &GeneratingVectorKind::Multiplicative,
            &rs,
            &UtilitySpec::additive(),
        )
        .unwrap();
        let p = choice_probabilities_ln(&g, &ln_y).unwrap();
        assert!((p[1] - 4.0 / 14.0).abs() < 1e-6);
    }
}
