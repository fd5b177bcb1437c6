//! Maximum-likelihood estimation of any model in the family on
//! choice-frequency datasets, plus cross-dataset validation.
//!
//! Scale-type parameters are log-reparameterized, the constant is kept
//! strictly negative through `c = −e^b` (its boundary optimum at zero is
//! reported as a pin), and link nest scales stay above the global scale via
//! `μ_l = μ(1 + e^t)`. The optimizer is a multi-start simplex search over a
//! documented start box per parameter.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::RouteSet;
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::scalar::Scalar;
use crate::spec::{FunctionKind, ModelParams, ModelSpec, VectorFamily};

/// One choice situation: a route set and observed (possibly fractional)
/// choice counts per route. Fractional counts let simulated probability
/// shares stand in for millions of individual observations.
#[derive(Debug, Clone)]
pub struct Scenario<T> {
    pub key: String,
    pub route_set: RouteSet<T>,
    pub counts: Vec<T>,
}

/// A collection of scenarios estimated jointly.
#[derive(Debug, Clone)]
pub struct ChoiceDataset<T> {
    scenarios: Vec<Scenario<T>>,
}

impl<T: Scalar> ChoiceDataset<T> {
    pub fn new(scenarios: Vec<Scenario<T>>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::Dataset("dataset has no scenarios".into()));
        }
        for s in &scenarios {
            if s.counts.len() != s.route_set.n_routes() {
                return Err(Error::Dataset(format!(
                    "scenario `{}` has {} counts for {} routes",
                    s.key,
                    s.counts.len(),
                    s.route_set.n_routes()
                )));
            }
            if s.counts.iter().any(|&c| c < T::zero() || !c.is_finite()) {
                return Err(Error::Dataset(format!(
                    "scenario `{}` has a negative or non-finite count",
                    s.key
                )));
            }
            let total = s.counts.iter().copied().sum::<T>();
            if total < T::one() - T::from_f64_lossy(1e-9) {
                return Err(Error::Dataset(format!(
                    "scenario `{}` has total count below 1",
                    s.key
                )));
            }
        }
        Ok(Self { scenarios })
    }

    pub fn scenarios(&self) -> &[Scenario<T>] {
        &self.scenarios
    }

    pub fn total_count(&self) -> T {
        self.scenarios
            .iter()
            .map(|s| s.counts.iter().copied().sum::<T>())
            .sum()
    }

    /// Smallest route cost across all scenarios; the utility constant must
    /// stay below it.
    pub fn min_route_cost(&self) -> T {
        self.scenarios
            .iter()
            .flat_map(|s| s.route_set.route_costs().iter().copied())
            .fold(T::infinity(), T::min)
    }

    /// Links used by at least two routes in at least one scenario — the
    /// links whose nest scales are worth estimating. All other nests hold a
    /// single route and collapse to the global scale.
    pub fn shared_links(&self) -> Vec<String> {
        let mut out = BTreeSet::new();
        for s in &self.scenarios {
            for (l, &count) in s.route_set.usage_counts().iter().enumerate() {
                if count >= 2 {
                    out.insert(s.route_set.links()[l].id.clone());
                }
            }
        }
        out.into_iter().collect()
    }

    /// Writes `scenario_key,route_id,count` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["scenario_key", "route_id", "count"])
            .map_err(|e| Error::Dataset(e.to_string()))?;
        for s in &self.scenarios {
            for (route, &count) in s.route_set.routes().iter().zip(&s.counts) {
                w.write_record([
                    s.key.as_str(),
                    route.id.as_str(),
                    &format!("{}", count.to_f64_lossy()),
                ])
                .map_err(|e| Error::Dataset(e.to_string()))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `scenario_key,route_id,count` rows, resolving each scenario's
    /// route set through `network_for` (e.g. a fixed network, or the bundled
    /// benchmark generator keyed on x). Comment lines starting with `#` are
    /// skipped.
    pub fn read_csv<R: Read>(
        reader: R,
        mut network_for: impl FnMut(&str) -> Result<RouteSet<T>>,
    ) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = r
            .headers()
            .map_err(|e| Error::Dataset(e.to_string()))?
            .clone();
        let expected = ["scenario_key", "route_id", "count"];
        if headers.iter().ne(expected) {
            return Err(Error::Dataset(format!(
                "expected header `{}`, got `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        // Preserve first-appearance order of scenarios.
        let mut order: Vec<String> = Vec::new();
        let mut rows: Vec<(String, String, f64)> = Vec::new();
        for record in r.records() {
            let record = record.map_err(|e| Error::Dataset(e.to_string()))?;
            let key = record.get(0).unwrap_or_default().to_owned();
            let route = record.get(1).unwrap_or_default().to_owned();
            let count: f64 = record
                .get(2)
                .unwrap_or_default()
                .parse()
                .map_err(|e| Error::Dataset(format!("bad count for `{key}`: {e}")))?;
            if !order.contains(&key) {
                order.push(key.clone());
            }
            rows.push((key, route, count));
        }
        let mut scenarios = Vec::with_capacity(order.len());
        for key in order {
            let rs = network_for(&key)?;
            let mut counts = vec![T::zero(); rs.n_routes()];
            for (k, route, count) in rows.iter().filter(|(k, _, _)| *k == key) {
                let idx = rs.route_position(route).map_err(|_| {
                    Error::Dataset(format!(
                        "scenario `{k}` references unknown route `{route}`"
                    ))
                })?;
                counts[idx] = counts[idx] + T::from_f64_lossy(*count);
            }
            scenarios.push(Scenario {
                key,
                route_set: rs,
                counts,
            });
        }
        Self::new(scenarios)
    }
}

/// Estimator configuration. The defaults match the documented start boxes
/// and a five-start search.
#[derive(Debug, Clone)]
pub struct EstimationConfig {
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            starts: 5,
            seed: 0,
            max_iterations: 4000,
        }
    }
}

/// Fitted parameters with diagnostics.
#[derive(Debug, Clone)]
pub struct EstimationResult<T> {
    pub params: ModelParams<T>,
    /// Total log-likelihood at the optimum.
    pub log_likelihood: T,
    /// Log-likelihood per observation (total divided by the count mass).
    pub per_observation_ll: T,
    pub converged: bool,
    pub iterations: usize,
    pub validation_log_likelihood: Option<T>,
    /// Parameters that ended on their boundary (e.g. `c` at 0), mirroring
    /// the "=0"-style reporting convention.
    pub pinned: Vec<String>,
    /// Reserved; standard errors are not computed.
    pub standard_errors: Option<Vec<T>>,
}

/// Log-likelihood of a model instance on a dataset:
/// `Σ_scenarios Σ_r count_r · ln P_r`.
pub fn log_likelihood<T: Scalar>(
    spec: &ModelSpec<T>,
    params: &ModelParams<T>,
    data: &ChoiceDataset<T>,
) -> Result<T> {
    let spec = with_params(spec, params.clone());
    let mut total = T::zero();
    for s in data.scenarios() {
        let p = spec.probabilities(&s.route_set)?;
        for (&count, &prob) in s.counts.iter().zip(&p) {
            if count > T::zero() {
                total = total + count * prob.ln();
            }
        }
    }
    Ok(total)
}

/// Evaluates fitted parameters on another dataset without refitting.
pub fn validate<T: Scalar>(
    spec: &ModelSpec<T>,
    params: &ModelParams<T>,
    data: &ChoiceDataset<T>,
) -> Result<T> {
    log_likelihood(spec, params, data)
}

fn with_params<T: Scalar>(spec: &ModelSpec<T>, params: ModelParams<T>) -> ModelSpec<T> {
    let mut out = spec.clone();
    out.params = params;
    out
}

// ---------------------------------------------------------------------------
// Parameter packing
// ---------------------------------------------------------------------------

/// Maps between the model's constrained parameters and the unconstrained
/// optimizer space.
struct Packing {
    function: FunctionKind,
    vector: VectorFamily,
    nest_links: Vec<String>,
    /// Barrier: c must stay below this minus a small margin.
    min_cost: f64,
}

impl Packing {
    fn dim(&self) -> usize {
        let mut d = 1; // ln μ
        if self.vector.is_multiplicative_family() {
            d += 1; // ln(−c)
        }
        if self.function == FunctionKind::PathSize {
            d += 1; // β
        }
        if matches!(
            self.vector,
            VectorFamily::HybridAdditive | VectorFamily::HybridMultiplicative
        ) {
            d += 1; // ln ρ
        }
        if self.function == FunctionKind::LinkNested {
            d += self.nest_links.len(); // ln(μ_l/μ − 1)
        }
        d
    }

    fn unpack<T: Scalar>(&self, theta: &[f64]) -> Option<ModelParams<T>> {
        let mut it = theta.iter().copied();
        let mu = it.next()?.exp();
        let mut params = ModelParams::new(T::from_f64_lossy(mu));
        if self.vector.is_multiplicative_family() {
            let c = -it.next()?.exp();
            if !(c < self.min_cost - 1e-6) {
                return None;
            }
            params.c = T::from_f64_lossy(c);
        }
        if self.function == FunctionKind::PathSize {
            params.beta = Some(T::from_f64_lossy(it.next()?));
        }
        if matches!(
            self.vector,
            VectorFamily::HybridAdditive | VectorFamily::HybridMultiplicative
        ) {
            params.rho = Some(T::from_f64_lossy(it.next()?.exp()));
        }
        if self.function == FunctionKind::LinkNested {
            for link in &self.nest_links {
                let ratio = 1.0 + it.next()?.exp();
                params
                    .nest_scales
                    .insert(link.clone(), T::from_f64_lossy(mu * ratio));
            }
        }
        if !mu.is_finite() || mu <= 0.0 {
            return None;
        }
        Some(params)
    }

    /// A start point: the box center first, then seeded uniform draws from
    /// the documented boxes (μ in [1e-3, 50] additive / [0.1, 200]
    /// multiplicative, −c in [1e-4, 200], β in [−2, 5], ρ in [0.1, 10],
    /// μ_l/μ − 1 in [1e-6, 1e4], scales log-uniform).
    fn start(&self, which: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let center = which == 0;
        let mut theta = Vec::with_capacity(self.dim());
        let log_uniform = |lo: f64, hi: f64, center: bool, rng: &mut ChaCha8Rng| {
            if center {
                (lo.ln() + hi.ln()) / 2.0
            } else {
                rng.random_range(lo.ln()..hi.ln())
            }
        };
        let (mu_lo, mu_hi) = if self.vector.is_multiplicative_family() {
            (0.1, 200.0)
        } else {
            (1e-3, 50.0)
        };
        theta.push(log_uniform(mu_lo, mu_hi, center, rng));
        if self.vector.is_multiplicative_family() {
            theta.push(log_uniform(1e-4, 200.0, center, rng));
        }
        if self.function == FunctionKind::PathSize {
            theta.push(if center {
                1.5
            } else {
                rng.random_range(-2.0..5.0)
            });
        }
        if matches!(
            self.vector,
            VectorFamily::HybridAdditive | VectorFamily::HybridMultiplicative
        ) {
            theta.push(log_uniform(0.1, 10.0, center, rng));
        }
        for _ in &self.nest_links {
            theta.push(log_uniform(1e-6, 1e4, center, rng));
        }
        theta
    }
}

/// Fits the free parameters of `spec`'s model form on `data` by maximum
/// likelihood (multi-start simplex over reparameterized space). The
/// parameters carried by `spec` itself are ignored; its function, vector,
/// and policy define the form.
pub fn estimate<T: Scalar>(
    spec: &ModelSpec<T>,
    data: &ChoiceDataset<T>,
    config: &EstimationConfig,
) -> Result<EstimationResult<T>> {
    let packing = Packing {
        function: spec.function,
        vector: spec.vector,
        nest_links: if spec.function == FunctionKind::LinkNested {
            data.shared_links()
        } else {
            Vec::new()
        },
        min_cost: data.min_route_cost().to_f64_lossy(),
    };

    let objective = |theta: &[f64]| -> f64 {
        let Some(params) = packing.unpack::<T>(theta) else {
            return f64::INFINITY;
        };
        match log_likelihood(spec, &params, data) {
            Ok(ll) => {
                let v = -ll.to_f64_lossy();
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            }
            Err(_) => f64::INFINITY,
        }
    };

    let nm_cfg = NelderMeadConfig::<f64> {
        max_iterations: config.max_iterations,
        ..NelderMeadConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<crate::optim::Minimum<f64>> = None;
    for which in 0..config.starts.max(1) {
        let x0 = packing.start(which, &mut rng);
        let m = nelder_mead(objective, &x0, &nm_cfg);
        if m.value.is_finite() && best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.ok_or_else(|| {
        Error::EstimationFailed(format!(
            "no start produced a finite log-likelihood for {} over {} scenarios",
            spec.name(),
            data.scenarios().len()
        ))
    })?;

    let params = packing
        .unpack::<T>(&best.x)
        .expect("optimum satisfies the constraints it was searched under");
    let mut pinned = Vec::new();
    if spec.vector.is_multiplicative_family() && params.c.to_f64_lossy() > -1e-3 {
        pinned.push("c".to_string());
    }
    for (link, &scale) in &params.nest_scales {
        if (scale / params.mu).to_f64_lossy() - 1.0 < 1e-3 {
            pinned.push(format!("mu_{link}"));
        }
    }
    let ll = T::from_f64_lossy(-best.value);
    Ok(EstimationResult {
        per_observation_ll: ll / data.total_count(),
        params,
        log_likelihood: ll,
        converged: best.converged,
        iterations: best.iterations,
        validation_log_likelihood: None,
        pinned,
        standard_errors: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mnp::generate_example_network;
    use crate::network::simple_network;

    fn amn() -> ModelSpec<f64> {
        ModelSpec::new(
            FunctionKind::Multinomial,
            VectorFamily::Additive,
            ModelParams::new(1.0),
        )
    }

    fn exact_amn_dataset(mu0: f64, weight: f64) -> ChoiceDataset<f64> {
        let scenarios = (5..=15)
            .map(|x| {
                let (rs, _) = generate_example_network(x as f64);
                let spec = with_params(&amn(), ModelParams::new(mu0));
                let p = spec.probabilities(&rs).unwrap();
                Scenario {
                    key: x.to_string(),
                    route_set: rs,
                    counts: p.iter().map(|&v| v * weight).collect(),
                }
            })
            .collect();
        ChoiceDataset::new(scenarios).unwrap()
    }

    #[test]
    fn single_route_likelihood_is_zero() {
        let rs = RouteSet::new(
            vec![("l".into(), 2.0)],
            vec![("r".into(), vec!["l".into()])],
        )
        .unwrap();
        let data = ChoiceDataset::new(vec![Scenario {
            key: "only".into(),
            route_set: rs,
            counts: vec![10.0],
        }])
        .unwrap();
        let ll = log_likelihood(&amn(), &ModelParams::new(0.7), &data).unwrap();
        assert!(ll.abs() < 1e-12);
    }

    #[test]
    fn symmetric_two_route_likelihood() {
        let rs = RouteSet::new(
            vec![("a".into(), 3.0), ("b".into(), 3.0)],
            vec![
                ("r1".into(), vec!["a".into()]),
                ("r2".into(), vec!["b".into()]),
            ],
        )
        .unwrap();
        let data = ChoiceDataset::new(vec![Scenario {
            key: "s".into(),
            route_set: rs,
            counts: vec![50.0, 50.0],
        }])
        .unwrap();
        for mu in [0.3, 1.0, 4.0] {
            let ll = log_likelihood(&amn(), &ModelParams::new(mu), &data).unwrap();
            assert!((ll - 100.0 * 0.5f64.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn likelihood_scales_with_counts() {
        let data1 = exact_amn_dataset(0.2, 1.0);
        let data3 = exact_amn_dataset(0.2, 3.0);
        let p = ModelParams::new(0.31);
        let a = log_likelihood(&amn(), &p, &data1).unwrap();
        let b = log_likelihood(&amn(), &p, &data3).unwrap();
        assert!((b - 3.0 * a).abs() < 1e-8 * a.abs());
    }

    #[test]
    fn recovers_generating_scale_from_exact_shares() {
        let data = exact_amn_dataset(0.2, 1e6);
        let result = estimate(&amn(), &data, &EstimationConfig::default()).unwrap();
        assert!(
            (result.params.mu - 0.2).abs() < 0.2 * 0.02,
            "recovered {} from mu0 = 0.2",
            result.params.mu
        );
        assert!(result.log_likelihood <= 0.0);
        assert!(result.per_observation_ll <= 0.0);
    }

    #[test]
    fn saturated_two_route_case_reproduces_shares() {
        let rs = RouteSet::new(
            vec![("a".into(), 1.0), ("b".into(), 2.0)],
            vec![
                ("r1".into(), vec!["a".into()]),
                ("r2".into(), vec!["b".into()]),
            ],
        )
        .unwrap();
        let data = ChoiceDataset::new(vec![Scenario {
            key: "s".into(),
            route_set: rs.clone(),
            counts: vec![700.0, 300.0],
        }])
        .unwrap();
        let result = estimate(&amn(), &data, &EstimationConfig::default()).unwrap();
        let fitted = with_params(&amn(), result.params.clone())
            .probabilities(&rs)
            .unwrap();
        assert!((fitted[0] - 0.7).abs() < 1e-6);
        assert!((fitted[1] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn validation_on_training_data_returns_training_ll() {
        let data = exact_amn_dataset(0.2, 100.0);
        let result = estimate(&amn(), &data, &EstimationConfig::default()).unwrap();
        let again = validate(&amn(), &result.params, &data).unwrap();
        assert!((again - result.log_likelihood).abs() < 1e-9 * result.log_likelihood.abs());
    }

    #[test]
    fn csv_round_trip_via_benchmark_keys() {
        let data = exact_amn_dataset(0.2, 10.0);
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = ChoiceDataset::<f64>::read_csv(buf.as_slice(), |key| {
            let x: f64 = key
                .parse()
                .map_err(|_| Error::Dataset(format!("bad key {key}")))?;
            Ok(generate_example_network(x).0)
        })
        .unwrap();
        assert_eq!(back.scenarios().len(), data.scenarios().len());
        for (a, b) in back.scenarios().iter().zip(data.scenarios()) {
            assert_eq!(a.key, b.key);
            for (x, y) in a.counts.iter().zip(&b.counts) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dataset_validation_rejects_bad_shapes() {
        let rs = simple_network::<f64>();
        assert!(ChoiceDataset::new(vec![Scenario {
            key: "s".into(),
            route_set: rs.clone(),
            counts: vec![1.0, 2.0],
        }])
        .is_err());
        assert!(ChoiceDataset::new(vec![Scenario {
            key: "s".into(),
            route_set: rs,
            counts: vec![0.1, 0.2, 0.3],
        }])
        .is_err());
    }

    #[test]
    fn shared_links_found_across_scenarios() {
        let (rs, _) = generate_example_network(10.0);
        let data = ChoiceDataset::new(vec![Scenario {
            key: "10".into(),
            route_set: rs,
            counts: vec![1.0, 1.0, 1.0],
        }])
        .unwrap();
        assert_eq!(data.shared_links(), vec!["1".to_string(), "5".to_string()]);
    }
}
