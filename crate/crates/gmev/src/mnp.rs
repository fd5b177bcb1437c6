//! Ground-truth multinomial probit simulator.
//!
//! Route utilities are joint normal: means are the systematic utilities,
//! foreseen-time standard deviations scale with the time estimate
//! (`σ_r = θ·τ̂_r`), overlap induces one of two covariance forms, and i.i.d.
//! analyst noise adds `σ_ε²` to the diagonal. Probabilities have no closed
//! form, so they are estimated as argmax frequencies over Monte Carlo draws.
//!
//! Sampling is deterministic for a given seed regardless of thread count:
//! draws are split into fixed-size blocks, each block owns its own counter
//! stream of the ChaCha generator, and block counts are combined by exact
//! integer addition.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::RouteSet;

/// Overlap covariance form: scaled by the geometric or the arithmetic mean
/// of the two routes' time estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    Geometric,
    Arithmetic,
}

/// What to do when the assembled covariance is not positive semidefinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdPolicy {
    /// Fail with a diagnostic.
    Error,
    /// Clip negative eigenvalues to zero and continue.
    Clip,
}

/// Ground-truth simulator configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MnpSpec {
    /// Analyst travel-time estimates per route (minutes), strictly positive.
    pub tau_hat: Vec<f64>,
    /// Proportionality constant of the foreseen-time standard deviation.
    pub theta: f64,
    /// Analyst-error standard deviation (minutes-equivalent utility).
    pub sigma_eps: f64,
    pub cov_kind: CovarianceKind,
    /// Systematic utility apart from travel time.
    pub v0: Vec<f64>,
    /// Travel-time coefficient.
    pub beta: f64,
}

impl MnpSpec {
    pub fn new(tau_hat: Vec<f64>, theta: f64, sigma_eps: f64, cov_kind: CovarianceKind) -> Result<Self> {
        if let Some(&bad) = tau_hat.iter().find(|&&t| !(t > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "travel-time estimate {bad} must be positive"
            )));
        }
        if theta < 0.0 || sigma_eps < 0.0 {
            return Err(Error::InvalidParameter(
                "theta and sigma_eps must be nonnegative".into(),
            ));
        }
        let n = tau_hat.len();
        Ok(Self {
            tau_hat,
            theta,
            sigma_eps,
            cov_kind,
            v0: vec![0.0; n],
            beta: -1.0,
        })
    }

    /// Mean utilities `V⁰_r + β τ̂_r`.
    pub fn mean_utilities(&self) -> Vec<f64> {
        self.v0
            .iter()
            .zip(&self.tau_hat)
            .map(|(&v0, &t)| v0 + self.beta * t)
            .collect()
    }
}

/// Utility covariance matrix from the route overlap structure:
/// `θ²τ̂_r²` on the diagonal, the chosen overlap form off it, and analyst
/// noise `σ_ε²` added to the diagonal. Overlap times are read off the route
/// set's cost attribute.
pub fn build_covariance(rs: &RouteSet<f64>, spec: &MnpSpec) -> Result<Matrix<f64>> {
    build_covariance_with(rs, spec, PsdPolicy::Error)
}

pub fn build_covariance_with(
    rs: &RouteSet<f64>,
    spec: &MnpSpec,
    policy: PsdPolicy,
) -> Result<Matrix<f64>> {
    let n = rs.n_routes();
    if spec.tau_hat.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: spec.tau_hat.len(),
        });
    }
    let th2 = spec.theta * spec.theta;
    let mut cov = Matrix::zeros(n, n);
    for r in 0..n {
        cov.set(r, r, th2 * spec.tau_hat[r] * spec.tau_hat[r] + spec.sigma_eps * spec.sigma_eps);
        for s in (r + 1)..n {
            let shared = rs.overlap_cost_at(r, s);
            let pair = match spec.cov_kind {
                CovarianceKind::Geometric => (spec.tau_hat[r] * spec.tau_hat[s]).sqrt(),
                CovarianceKind::Arithmetic => (spec.tau_hat[r] + spec.tau_hat[s]) / 2.0,
            };
            let value = th2 * shared * pair;
            cov.set(r, s, value);
            cov.set(s, r, value);
        }
    }
    validate_psd(cov, policy)
}

/// Checks positive semidefiniteness by eigenvalue, clipping or rejecting
/// negative modes per the policy.
fn validate_psd(cov: Matrix<f64>, policy: PsdPolicy) -> Result<Matrix<f64>> {
    let n = cov.rows();
    let m = DMatrix::from_fn(n, n, |r, c| cov.get(r, c));
    let eig = m.symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-12 * max_eig.max(1.0);
    let (worst_idx, worst) = eig
        .eigenvalues
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if worst >= -tol {
        return Ok(cov);
    }
    match policy {
        PsdPolicy::Error => Err(Error::NotPositiveSemidefinite {
            pivot: worst_idx,
            value: worst,
        }),
        PsdPolicy::Clip => {
            let clipped = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0)));
            let repaired = &eig.eigenvectors * clipped * eig.eigenvectors.transpose();
            let mut out = Matrix::zeros(n, n);
            for r in 0..n {
                for c in 0..n {
                    // Restore exact symmetry lost to rounding.
                    out.set(r, c, (repaired[(r, c)] + repaired[(c, r)]) / 2.0);
                }
            }
            Ok(out)
        }
    }
}

/// A factor `A` with `A Aᵀ = cov`: Cholesky when the matrix is positive
/// definite, otherwise an eigenvalue square root with tiny negative modes
/// flattened to zero.
fn factorize(cov: &Matrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.rows();
    let m = DMatrix::from_fn(n, n, |r, c| cov.get(r, c));
    if let Some(chol) = nalgebra::Cholesky::new(m.clone()) {
        return Ok(chol.unpack());
    }
    let eig = m.symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-12 * max_eig.max(1.0);
    let (worst_idx, worst) = eig
        .eigenvalues
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if worst < -tol {
        return Err(Error::NotPositiveSemidefinite {
            pivot: worst_idx,
            value: worst,
        });
    }
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * sqrt)
}

/// Monte Carlo estimate of argmax probabilities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationResult {
    pub probabilities: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub n: u64,
    pub seed: u64,
}

/// Draws per counter stream; fixed so results do not depend on the number
/// of worker threads.
const BLOCK: u64 = 32_768;

/// Estimates choice probabilities by drawing `n` joint-normal utility
/// vectors and counting argmax wins. Bit-reproducible for a given
/// `(mean, cov, n, seed)` across thread counts.
pub fn simulate_probabilities(
    mean: &[f64],
    cov: &Matrix<f64>,
    n: u64,
    seed: u64,
) -> Result<SimulationResult> {
    let d = mean.len();
    if cov.rows() != d || cov.cols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: cov.rows(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let factor = factorize(cov)?;
    let blocks = n.div_ceil(BLOCK);
    let counts = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let len = BLOCK.min(n - start);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b + 1);
            let mut local = vec![0u64; d];
            let mut z = vec![0.0f64; d];
            for _ in 0..len {
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                let mut best = 0usize;
                let mut best_u = f64::NEG_INFINITY;
                for r in 0..d {
                    let mut u = mean[r];
                    for (j, &zj) in z.iter().enumerate() {
                        u += factor[(r, j)] * zj;
                    }
                    if u > best_u {
                        best_u = u;
                        best = r;
                    }
                }
                local[best] += 1;
            }
            local
        })
        .reduce(
            || vec![0u64; d],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
        );
    let nf = n as f64;
    let probabilities: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
    let standard_errors = probabilities
        .iter()
        .map(|&p| (p * (1.0 - p) / nf).sqrt())
        .collect();
    Ok(SimulationResult {
        probabilities,
        standard_errors,
        n,
        seed,
    })
}

/// Mixes a salt (e.g. a scenario index) into a base seed, so each scenario
/// of an experiment owns an independent, reproducible stream.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer over seed ^ golden-ratio-scaled salt.
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The bundled three-route benchmark network at congestion parameter `x`:
/// five links timed `(x, 1.05x+12, 10, 0.95x+8, x)`, routes
/// upper = {1,2}, middle = {1,3,5}, lower = {4,5}, so upper/middle share
/// link 1 and middle/lower share link 5. Returns the network (costs are the
/// time attribute) and the matching simulator spec with θ = 0.2,
/// σ_ε = 10, β = −1.
///
/// At `x = 0` the variable links have zero time and are omitted, which is
/// the exact limit of every overlap quantity and keeps link costs positive.
pub fn generate_example_network(x: f64) -> (RouteSet<f64>, MnpSpec) {
    assert!(x >= 0.0 && x.is_finite(), "x must be nonnegative");
    let mut links: Vec<(String, f64)> = vec![
        ("2".into(), 1.05 * x + 12.0),
        ("3".into(), 10.0),
        ("4".into(), 0.95 * x + 8.0),
    ];
    let mut upper = vec!["2".to_string()];
    let mut middle = vec!["3".to_string()];
    let mut lower = vec!["4".to_string()];
    if x > 0.0 {
        links.push(("1".into(), x));
        links.push(("5".into(), x));
        upper.insert(0, "1".into());
        middle.insert(0, "1".into());
        middle.push("5".into());
        lower.push("5".into());
    }
    let rs = RouteSet::new(
        links,
        vec![
            ("upper".into(), upper),
            ("middle".into(), middle),
            ("lower".into(), lower),
        ],
    )
    .expect("benchmark network is valid");
    let spec = MnpSpec::new(
        rs.route_costs().to_vec(),
        0.2,
        10.0,
        CovarianceKind::Arithmetic,
    )
    .expect("benchmark spec is valid");
    (rs, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_zero_gives_pure_noise_diagonal() {
        let (rs, mut spec) = generate_example_network(10.0);
        spec.theta = 0.0;
        let cov = build_covariance(&rs, &spec).unwrap();
        for r in 0..3 {
            for s in 0..3 {
                let expected = if r == s { 100.0 } else { 0.0 };
                assert!((cov.get(r, s) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn disjoint_routes_give_diagonal_covariance() {
        let (rs, spec) = generate_example_network(0.0);
        let cov = build_covariance(&rs, &spec).unwrap();
        assert!((cov.get(0, 0) - 105.76).abs() < 1e-10);
        assert!((cov.get(1, 1) - 104.0).abs() < 1e-10);
        assert!((cov.get(2, 2) - 102.56).abs() < 1e-10);
        assert_eq!(cov.get(0, 1), 0.0);
        assert_eq!(cov.get(1, 2), 0.0);
    }

    #[test]
    fn benchmark_covariance_matches_published_entries() {
        for x in [5.0, 17.0, 40.0] {
            let (rs, spec) = generate_example_network(x);
            let cov = build_covariance(&rs, &spec).unwrap();
            let f = 0.2f64 * 0.2;
            assert!((cov.get(0, 1) - f * (2.025 * x * x + 11.0 * x)).abs() < 1e-9);
            assert!((cov.get(1, 2) - f * (1.975 * x * x + 9.0 * x)).abs() < 1e-9);
            assert_eq!(cov.get(0, 2), 0.0);
            assert!((cov.get(0, 0) - (f * (2.05 * x + 12.0).powi(2) + 100.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn geometric_never_exceeds_arithmetic() {
        for x in [1.0, 8.0, 33.0] {
            let (rs, spec) = generate_example_network(x);
            let mut geo_spec = spec.clone();
            geo_spec.cov_kind = CovarianceKind::Geometric;
            let ari = build_covariance(&rs, &spec).unwrap();
            let geo = build_covariance(&rs, &geo_spec).unwrap();
            for r in 0..3 {
                for s in 0..3 {
                    if r != s {
                        assert!(ari.get(r, s) - geo.get(r, s) >= -1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn route_times_at_benchmark_points() {
        let (rs, _) = generate_example_network(0.0);
        assert_eq!(rs.route_costs(), &[12.0, 10.0, 8.0]);
        let (rs, _) = generate_example_network(40.0);
        assert_eq!(rs.route_costs(), &[94.0, 90.0, 86.0]);
        let (rs, _) = generate_example_network(10.0);
        assert_eq!(rs.overlap_cost("upper", "middle").unwrap(), 10.0);
        assert_eq!(rs.overlap_cost("middle", "lower").unwrap(), 10.0);
        assert_eq!(rs.overlap_cost("upper", "lower").unwrap(), 0.0);
    }

    #[test]
    fn foreseen_variance_share_at_benchmark_points() {
        // Middle route: 4/104 at x = 0, 324/424 at x = 40.
        let (_, spec) = generate_example_network(0.0);
        let share = |spec: &MnpSpec, r: usize| {
            let fv = spec.theta.powi(2) * spec.tau_hat[r].powi(2);
            fv / (fv + spec.sigma_eps.powi(2))
        };
        assert!((share(&spec, 1) - 0.038).abs() < 5e-4);
        let (_, spec) = generate_example_network(40.0);
        assert!((share(&spec, 1) - 0.764).abs() < 5e-4);
    }

    #[test]
    fn symmetric_routes_split_evenly() {
        let cov = Matrix::from_rows(vec![vec![2.0, 0.5], vec![0.5, 2.0]]);
        let res = simulate_probabilities(&[-1.0, -1.0], &cov, 200_000, 11).unwrap();
        let se = res.standard_errors[0];
        assert!((res.probabilities[0] - 0.5).abs() < 3.0 * se);
        assert!(se <= 0.5 / (res.n as f64).sqrt());
    }

    #[test]
    fn three_exchangeable_routes_are_uniform() {
        let mut cov = Matrix::zeros(3, 3);
        for r in 0..3 {
            for s in 0..3 {
                cov.set(r, s, if r == s { 3.0 } else { 1.0 });
            }
        }
        let res = simulate_probabilities(&[0.0, 0.0, 0.0], &cov, 300_000, 5).unwrap();
        for (p, se) in res.probabilities.iter().zip(&res.standard_errors) {
            assert!((p - 1.0 / 3.0).abs() < 3.0 * se);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cov = Matrix::from_rows(vec![vec![2.0, 0.3], vec![0.3, 1.0]]);
        let a = simulate_probabilities(&[0.0, -0.1], &cov, 100_000, 123).unwrap();
        let b = simulate_probabilities(&[0.0, -0.1], &cov, 100_000, 123).unwrap();
        assert_eq!(a.probabilities, b.probabilities);
        let c = simulate_probabilities(&[0.0, -0.1], &cov, 100_000, 124).unwrap();
        assert_ne!(a.probabilities, c.probabilities);
    }

    #[test]
    fn non_psd_rejected_and_repairable() {
        let mut cov = Matrix::zeros(2, 2);
        cov.set(0, 0, 1.0);
        cov.set(1, 1, 1.0);
        cov.set(0, 1, 2.0);
        cov.set(1, 0, 2.0);
        assert!(matches!(
            validate_psd(cov.clone(), PsdPolicy::Error),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
        let repaired = validate_psd(cov, PsdPolicy::Clip).unwrap();
        // Repaired matrix factorizes.
        assert!(factorize(&repaired).is_ok());
    }

    #[test]
    fn singular_psd_covariance_still_simulates() {
        // Rank-one covariance: perfectly correlated utilities.
        let cov = Matrix::from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        let res = simulate_probabilities(&[0.0, -0.5], &cov, 10_000, 3).unwrap();
        // Equal noise on both routes: the higher mean always wins.
        assert_eq!(res.probabilities, vec![1.0, 0.0]);
    }
}
