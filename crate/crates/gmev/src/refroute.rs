//! Reference-route models: travellers compare alternatives against a
//! reference route, so only the non-overlapping parts of each pair enter the
//! choice. The per-reference conditional probabilities reuse the generic
//! probability formula with a reference-specific generating vector; a
//! reference policy then mixes the conditionals into final probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{choice_probabilities_ln, GeneratingFunction, UtilitySpec};
use crate::network::RouteSet;
use crate::scalar::Scalar;

/// How the reference-route distribution is determined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum ReferencePolicy {
    /// Every route is the reference with equal probability.
    Equal,
    /// Reference probabilities equal the choice probabilities themselves:
    /// the stationary distribution of the conditional-probability matrix.
    #[serde(rename = "markov")]
    MarkovChain {
        #[serde(rename = "tol", default = "default_markov_tol")]
        tolerance: f64,
        #[serde(rename = "max_iter", default = "default_markov_iters")]
        max_iterations: usize,
    },
    /// One route is always the reference (en-route and day-to-day settings).
    Fixed {
        #[serde(rename = "ref")]
        reference: String,
    },
}

fn default_markov_tol() -> f64 {
    1e-10
}

fn default_markov_iters() -> usize {
    10_000
}

impl ReferencePolicy {
    pub fn markov() -> Self {
        Self::MarkovChain {
            tolerance: default_markov_tol(),
            max_iterations: default_markov_iters(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::MarkovChain {
                tolerance,
                max_iterations,
            } => {
                if !(*tolerance > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "markov tolerance {tolerance} must be positive"
                    )));
                }
                if *max_iterations == 0 {
                    return Err(Error::InvalidParameter(
                        "markov max_iterations must be at least 1".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Square matrix whose row `r` holds the conditional choice probabilities
/// given reference route `r`. Rows are strictly positive and sum to one.
#[derive(Debug, Clone)]
pub struct ConditionalMatrix<T> {
    route_ids: Vec<String>,
    m: Matrix<T>,
}

impl<T: Scalar> ConditionalMatrix<T> {
    pub fn new(route_ids: Vec<String>, m: Matrix<T>) -> Result<Self> {
        if m.rows() != m.cols() || m.rows() != route_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: route_ids.len(),
                got: m.rows(),
            });
        }
        let tol = T::from_f64_lossy(1e-9);
        for r in 0..m.rows() {
            let mut sum = T::zero();
            for p in 0..m.cols() {
                let v = m.get(r, p);
                if !(v > T::zero()) {
                    return Err(Error::InvalidParameter(format!(
                        "conditional probability ({r},{p}) = {v} must be strictly positive"
                    )));
                }
                sum = sum + v;
            }
            if (sum - T::one()).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "conditional row {r} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { route_ids, m })
    }

    pub fn route_ids(&self) -> &[String] {
        &self.route_ids
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.m
    }

    pub fn row(&self, r: usize) -> &[T] {
        self.m.row(r)
    }
}

/// Log of the reference-route generating vector for reference index `r`:
/// the entry for the reference is 1 and the entry for `p ≠ r` is the ratio
/// of non-overlapping utility sums. The route constant `c` joins each
/// route's own non-overlapping part — it is route-specific, so it never
/// cancels against the reference.
pub fn ln_md_gen_vector_at<T: Scalar>(
    rs: &RouteSet<T>,
    u: &UtilitySpec<T>,
    reference: usize,
) -> Result<Vec<T>> {
    u.require_negative(rs)?;
    let n = rs.n_routes();
    let mut out = vec![T::zero(); n];
    for p in 0..n {
        if p == reference {
            continue;
        }
        let ref_part = rs.non_overlap_cost_at(reference, p);
        let p_part = rs.non_overlap_cost_at(p, reference);
        if !(ref_part > T::zero()) || !(p_part > T::zero()) {
            return Err(Error::DegeneratePair {
                a: rs.routes()[reference].id.clone(),
                b: rs.routes()[p].id.clone(),
            });
        }
        // Utility sums are c − cost; the ratio flips to positive costs.
        let num = ref_part - u.c;
        let den = p_part - u.c;
        if !(num > T::zero()) || !(den > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "constant c = {} exceeds a non-overlap cost of pair `{}`/`{}`",
                u.c,
                rs.routes()[reference].id,
                rs.routes()[p].id
            )));
        }
        out[p] = num.ln() - den.ln();
    }
    Ok(out)
}

/// The reference-route generating vector by route id.
pub fn md_gen_vector<T: Scalar>(
    rs: &RouteSet<T>,
    u: &UtilitySpec<T>,
    reference: &str,
) -> Result<Vec<T>> {
    let idx = rs.route_position(reference)?;
    Ok(ln_md_gen_vector_at(rs, u, idx)?
        .into_iter()
        .map(|l| l.exp())
        .collect())
}

/// Conditional choice probabilities given a reference route.
pub fn conditional_probabilities<T: Scalar>(
    g: &GeneratingFunction<T>,
    rs: &RouteSet<T>,
    u: &UtilitySpec<T>,
    reference: &str,
) -> Result<Vec<T>> {
    let idx = rs.route_position(reference)?;
    let ln_y = ln_md_gen_vector_at(rs, u, idx)?;
    choice_probabilities_ln(g, &ln_y)
}

/// All conditional rows, one per reference route, sharing a single
/// generating function.
pub fn conditional_matrix<T: Scalar>(
    g: &GeneratingFunction<T>,
    rs: &RouteSet<T>,
    u: &UtilitySpec<T>,
) -> Result<ConditionalMatrix<T>> {
    conditional_matrix_with(&mut |_| Ok(g.clone()), rs, u)
}

/// As [`conditional_matrix`], but with a per-reference generating function —
/// the hook for reference-specific path-size factors.
pub fn conditional_matrix_with<T: Scalar>(
    g_for_reference: &mut dyn FnMut(usize) -> Result<GeneratingFunction<T>>,
    rs: &RouteSet<T>,
    u: &UtilitySpec<T>,
) -> Result<ConditionalMatrix<T>> {
    let n = rs.n_routes();
    let mut rows = Vec::with_capacity(n);
    for r in 0..n {
        let g = g_for_reference(r)?;
        let ln_y = ln_md_gen_vector_at(rs, u, r)?;
        rows.push(choice_probabilities_ln(&g, &ln_y)?);
    }
    ConditionalMatrix::new(
        rs.route_ids().map(str::to_owned).collect(),
        Matrix::from_rows(rows),
    )
}

/// Reference-route distribution under a policy.
///
/// The Markov policy returns the stationary row vector `π = π M`, found by
/// power iteration from the uniform start; a strictly positive conditional
/// matrix makes that limit exist and be unique.
pub fn reference_distribution<T: Scalar>(
    policy: &ReferencePolicy,
    m: &ConditionalMatrix<T>,
) -> Result<Vec<T>> {
    policy.validate()?;
    let n = m.route_ids().len();
    match policy {
        ReferencePolicy::Equal => {
            Ok(vec![T::one() / T::from_f64_lossy(n as f64); n])
        }
        ReferencePolicy::Fixed { reference } => {
            let idx = m
                .route_ids()
                .iter()
                .position(|id| id == reference)
                .ok_or_else(|| Error::UnknownRoute(reference.clone()))?;
            let mut out = vec![T::zero(); n];
            out[idx] = T::one();
            Ok(out)
        }
        ReferencePolicy::MarkovChain {
            tolerance,
            max_iterations,
        } => {
            let tol = T::from_f64_lossy(*tolerance);
            let mut pi = vec![T::one() / T::from_f64_lossy(n as f64); n];
            let mut residual = T::infinity();
            for _ in 0..*max_iterations {
                let next = m.matrix().row_vec_mul(&pi);
                residual = pi
                    .iter()
                    .zip(&next)
                    .map(|(&a, &b)| (a - b).abs())
                    .fold(T::zero(), T::max);
                pi = next;
                // Renormalize against rounding drift.
                let sum: T = pi.iter().copied().sum();
                for v in &mut pi {
                    *v = *v / sum;
                }
                if residual <= tol {
                    return Ok(pi);
                }
            }
            Err(Error::NonConvergence {
                what: "markov reference distribution".into(),
                iterations: *max_iterations,
                residual: residual.to_f64_lossy(),
            })
        }
    }
}

/// Final reference-route choice probabilities: the policy mixture of the
/// conditional rows.
pub fn md_probabilities<T: Scalar>(
    g: &GeneratingFunction<T>,
    rs: &RouteSet<T>,
    u: &UtilitySpec<T>,
    policy: &ReferencePolicy,
) -> Result<Vec<T>> {
    md_probabilities_with(&mut |_| Ok(g.clone()), rs, u, policy)
}

/// As [`md_probabilities`], with a per-reference generating function.
pub fn md_probabilities_with<T: Scalar>(
    g_for_reference: &mut dyn FnMut(usize) -> Result<GeneratingFunction<T>>,
    rs: &RouteSet<T>,
    u: &UtilitySpec<T>,
    policy: &ReferencePolicy,
) -> Result<Vec<T>> {
    // A fixed reference needs only its own row.
    if let ReferencePolicy::Fixed { reference } = policy {
        let idx = rs.route_position(reference)?;
        let g = g_for_reference(idx)?;
        let ln_y = ln_md_gen_vector_at(rs, u, idx)?;
        return choice_probabilities_ln(&g, &ln_y);
    }
    let m = conditional_matrix_with(g_for_reference, rs, u)?;
    let pi = reference_distribution(policy, &m)?;
    Ok(m.matrix().row_vec_mul(&pi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ln_gen_vector, GeneratingVectorKind};
    use crate::network::simple_network;

    fn mn1() -> GeneratingFunction<f64> {
        GeneratingFunction::multinomial(1.0).unwrap()
    }

    #[test]
    fn md_vector_on_simple_network() {
        let rs = simple_network::<f64>();
        let u = UtilitySpec::additive();
        let y = md_gen_vector(&rs, &u, "upper").unwrap();
        assert!((y[0] - 1.0).abs() < 1e-15);
        assert!((y[1] - 0.5).abs() < 1e-15);
        assert!((y[2] - 1.0).abs() < 1e-15);
        let y = md_gen_vector(&rs, &u, "middle").unwrap();
        assert!((y[0] - 2.0).abs() < 1e-15);
        assert!((y[1] - 1.0).abs() < 1e-15);
        assert!((y[2] - 1.25).abs() < 1e-15);
    }

    #[test]
    fn md_vector_for_disjoint_routes_is_cost_ratio() {
        let rs = RouteSet::<f64>::new(
            vec![("a".into(), 3.0), ("b".into(), 5.0)],
            vec![
                ("r1".into(), vec!["a".into()]),
                ("r2".into(), vec!["b".into()]),
            ],
        )
        .unwrap();
        let y = md_gen_vector(&rs, &UtilitySpec::additive(), "r1").unwrap();
        assert!((y[1] - 3.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn md_vector_rejects_contained_pair() {
        let rs = RouteSet::<f64>::new(
            vec![("a".into(), 1.0), ("b".into(), 2.0)],
            vec![
                ("small".into(), vec!["a".into()]),
                ("big".into(), vec!["a".into(), "b".into()]),
            ],
        )
        .unwrap();
        assert!(matches!(
            md_gen_vector(&rs, &UtilitySpec::additive(), "big"),
            Err(Error::DegeneratePair { .. })
        ));
    }

    #[test]
    fn conditional_probabilities_match_hand_values() {
        let rs = simple_network::<f64>();
        let u = UtilitySpec::additive();
        let g = mn1();
        let p = conditional_probabilities(&g, &rs, &u, "upper").unwrap();
        assert!((p[0] - 2.0 / 5.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 5.0).abs() < 1e-12);
        assert!((p[2] - 2.0 / 5.0).abs() < 1e-12);
        let p = conditional_probabilities(&g, &rs, &u, "middle").unwrap();
        assert!((p[0] - 8.0 / 17.0).abs() < 1e-12);
        assert!((p[1] - 4.0 / 17.0).abs() < 1e-12);
        assert!((p[2] - 5.0 / 17.0).abs() < 1e-12);
        let p = conditional_probabilities(&g, &rs, &u, "lower").unwrap();
        assert!((p[0] - 5.0 / 14.0).abs() < 1e-12);
        assert!((p[1] - 4.0 / 14.0).abs() < 1e-12);
        assert!((p[2] - 5.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn reference_row_closed_form() {
        // For the multinomial function the self-probability collapses to
        // 1 / (1 + Σ_{p≠r} y_p^μ).
        let rs = simple_network::<f64>();
        let u = UtilitySpec::additive();
        for mu in [0.5, 1.0, 2.5] {
            let g = GeneratingFunction::multinomial(mu).unwrap();
            for (r, id) in ["upper", "middle", "lower"].iter().enumerate() {
                let y = md_gen_vector(&rs, &u, id).unwrap();
                let closed = 1.0
                    / (1.0
                        + y.iter()
                            .enumerate()
                            .filter(|&(p, _)| p != r)
                            .map(|(_, &v)| v.powf(mu))
                            .sum::<f64>());
                let p = conditional_probabilities(&g, &rs, &u, id).unwrap();
                assert!((p[r] - closed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equal_and_fixed_policies() {
        let rs = simple_network::<f64>();
        let m = conditional_matrix(&mn1(), &rs, &UtilitySpec::additive()).unwrap();
        let eq = reference_distribution(&ReferencePolicy::Equal, &m).unwrap();
        assert!(eq.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        let fixed = reference_distribution(
            &ReferencePolicy::Fixed {
                reference: "middle".into(),
            },
            &m,
        )
        .unwrap();
        assert_eq!(fixed, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn markov_stationary_on_simple_network() {
        let rs = simple_network::<f64>();
        let m = conditional_matrix(&mn1(), &rs, &UtilitySpec::additive()).unwrap();
        let pi = reference_distribution(&ReferencePolicy::markov(), &m).unwrap();
        assert!((pi[0] - 0.401).abs() < 1e-3);
        assert!((pi[1] - 0.239).abs() < 1e-3);
        assert!((pi[2] - 0.359).abs() < 1e-3);
        // Stationarity.
        let next = m.matrix().row_vec_mul(&pi);
        for (a, b) in pi.iter().zip(&next) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn markov_cap_reports_nonconvergence() {
        let rs = simple_network::<f64>();
        let m = conditional_matrix(&mn1(), &rs, &UtilitySpec::additive()).unwrap();
        let policy = ReferencePolicy::MarkovChain {
            tolerance: 1e-16,
            max_iterations: 2,
        };
        assert!(matches!(
            reference_distribution(&policy, &m),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn mixture_probabilities_match_table_values() {
        let rs = simple_network::<f64>();
        let u = UtilitySpec::additive();
        let p = md_probabilities(&mn1(), &rs, &u, &ReferencePolicy::Equal).unwrap();
        assert!((p[0] - 0.409).abs() < 5e-4);
        assert!((p[1] - 0.240).abs() < 5e-4);
        assert!((p[2] - 0.350).abs() < 5e-4);
        let p = md_probabilities(&mn1(), &rs, &u, &ReferencePolicy::markov()).unwrap();
        assert!((p[0] - 0.401).abs() < 1e-3);
        assert!((p[1] - 0.239).abs() < 1e-3);
        assert!((p[2] - 0.359).abs() < 1e-3);
    }

    #[test]
    fn disjoint_routes_collapse_to_multiplicative_model() {
        let rs = RouteSet::<f64>::new(
            vec![
                ("a".into(), 3.0),
                ("b".into(), 5.0),
                ("c".into(), 4.0),
            ],
            vec![
                ("r1".into(), vec!["a".into()]),
                ("r2".into(), vec!["b".into()]),
                ("r3".into(), vec!["c".into()]),
            ],
        )
        .unwrap();
        let u = UtilitySpec::with_constant(-1.5);
        let g = GeneratingFunction::multinomial(1.8).unwrap();
        let m_probs = choice_probabilities_ln(
            &g,
            &ln_gen_vector(&GeneratingVectorKind::Multiplicative, &rs, &u).unwrap(),
        )
        .unwrap();
        for policy in [
            ReferencePolicy::Equal,
            ReferencePolicy::markov(),
            ReferencePolicy::Fixed {
                reference: "r2".into(),
            },
        ] {
            let p = md_probabilities(&g, &rs, &u, &policy).unwrap();
            for (a, b) in p.iter().zip(&m_probs) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn policy_json_round_trip() {
        let texts = [
            r#"{"policy":"equal"}"#,
            r#"{"policy":"markov","tol":1e-10,"max_iter":10000}"#,
            r#"{"policy":"fixed","ref":"upper"}"#,
        ];
        for t in texts {
            let p: ReferencePolicy = serde_json::from_str(t).unwrap();
            let back = serde_json::to_string(&p).unwrap();
            let p2: ReferencePolicy = serde_json::from_str(&back).unwrap();
            assert_eq!(p, p2);
        }
        // Defaults fill in.
        let p: ReferencePolicy = serde_json::from_str(r#"{"policy":"markov"}"#).unwrap();
        assert_eq!(p, ReferencePolicy::markov());
    }
}
