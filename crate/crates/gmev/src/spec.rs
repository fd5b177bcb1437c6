//! Complete model specifications: a generating-function family, a
//! generating-vector family, their parameters, and (for reference-route
//! vectors) a reference policy. This is the unit the CLI, the estimator, and
//! the equilibrium solver all consume, and it round-trips through JSON.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    choice_probabilities_ln, ln_gen_vector, GeneratingFunction, GeneratingVectorKind,
    UtilitySpec,
};
use crate::network::RouteSet;
use crate::refroute::{md_probabilities_with, ReferencePolicy};
use crate::scalar::Scalar;

/// The overlap structure of the error distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FunctionKind {
    #[serde(rename = "MN")]
    Multinomial,
    #[serde(rename = "PS")]
    PathSize,
    #[serde(rename = "PC")]
    PairedCombinatorial,
    #[serde(rename = "LN")]
    LinkNested,
}

impl FunctionKind {
    pub const ALL: [FunctionKind; 4] = [
        FunctionKind::Multinomial,
        FunctionKind::PathSize,
        FunctionKind::PairedCombinatorial,
        FunctionKind::LinkNested,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            Self::Multinomial => "MN",
            Self::PathSize => "PS",
            Self::PairedCombinatorial => "PC",
            Self::LinkNested => "LN",
        }
    }
}

/// The utility formula encoded by the generating vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VectorFamily {
    #[serde(rename = "A")]
    Additive,
    #[serde(rename = "M")]
    Multiplicative,
    /// Multiplicative differences against a reference route.
    #[serde(rename = "MD")]
    ReferenceRoute,
    #[serde(rename = "HA")]
    HybridAdditive,
    #[serde(rename = "HM")]
    HybridMultiplicative,
}

impl VectorFamily {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Additive => "A",
            Self::Multiplicative => "M",
            Self::ReferenceRoute => "MD",
            Self::HybridAdditive => "HA",
            Self::HybridMultiplicative => "HM",
        }
    }

    /// Whether the family uses the multiplicative utility formula and hence
    /// admits (and restricts the sign of) the constant `c`.
    pub fn is_multiplicative_family(&self) -> bool {
        !matches!(self, Self::Additive)
    }
}

/// Free parameters of a model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    /// Scale of the generating function.
    pub mu: T,
    /// Path-size exponent (path-size function only).
    pub beta: Option<T>,
    /// Hybrid scale ratio (hybrid vectors only).
    pub rho: Option<T>,
    /// Utility constant; fixed at zero for additive vectors.
    pub c: T,
    /// Per-link nest scales (link-nested function only); links absent from
    /// the map collapse to `mu`.
    pub nest_scales: BTreeMap<String, T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(mu: T) -> Self {
        Self {
            mu,
            beta: None,
            rho: None,
            c: T::zero(),
            nest_scales: BTreeMap::new(),
        }
    }

    pub fn with_beta(mut self, beta: T) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn with_rho(mut self, rho: T) -> Self {
        self.rho = Some(rho);
        self
    }

    pub fn with_c(mut self, c: T) -> Self {
        self.c = c;
        self
    }

    pub fn with_nest_scale(mut self, link: &str, scale: T) -> Self {
        self.nest_scales.insert(link.to_owned(), scale);
        self
    }
}

/// A fully specified model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec<T> {
    pub function: FunctionKind,
    pub vector: VectorFamily,
    pub params: ModelParams<T>,
    /// Required when `vector` is the reference-route family.
    pub reference_policy: Option<ReferencePolicy>,
    /// Use reference-specific path-size factors instead of the global ones
    /// for reference-route path-size models.
    pub reference_path_size: bool,
    /// Permit link nest scales below the global scale.
    pub allow_low_nest_scales: bool,
}

impl<T: Scalar> ModelSpec<T> {
    pub fn new(function: FunctionKind, vector: VectorFamily, params: ModelParams<T>) -> Self {
        Self {
            function,
            vector,
            params,
            reference_policy: None,
            reference_path_size: false,
            allow_low_nest_scales: false,
        }
    }

    pub fn with_policy(mut self, policy: ReferencePolicy) -> Self {
        self.reference_policy = Some(policy);
        self
    }

    /// Short name like `A-MN` or `MD-PS`.
    pub fn name(&self) -> String {
        format!("{}-{}", self.vector.code(), self.function.code())
    }

    pub fn utility(&self) -> UtilitySpec<T> {
        UtilitySpec::with_constant(self.params.c)
    }

    /// The generating function over the supplied route set.
    pub fn generating_function(&self, rs: &RouteSet<T>) -> Result<GeneratingFunction<T>> {
        let mu = self.params.mu;
        match self.function {
            FunctionKind::Multinomial => GeneratingFunction::multinomial(mu),
            FunctionKind::PathSize => {
                let beta = self.params.beta.ok_or_else(|| {
                    Error::InvalidParameter("path-size function requires beta".into())
                })?;
                GeneratingFunction::path_size(mu, beta, rs)
            }
            FunctionKind::PairedCombinatorial => {
                GeneratingFunction::paired_combinatorial(mu, rs)
            }
            FunctionKind::LinkNested => GeneratingFunction::link_nested(
                mu,
                &self.params.nest_scales,
                rs,
                self.allow_low_nest_scales,
            ),
        }
    }

    fn vector_kind(&self) -> Result<Option<GeneratingVectorKind<T>>> {
        Ok(Some(match self.vector {
            VectorFamily::Additive => GeneratingVectorKind::Additive,
            VectorFamily::Multiplicative => GeneratingVectorKind::Multiplicative,
            VectorFamily::ReferenceRoute => return Ok(None),
            VectorFamily::HybridAdditive => GeneratingVectorKind::HybridAdditive {
                rho: self.params.rho.ok_or_else(|| {
                    Error::InvalidParameter("hybrid vector requires rho".into())
                })?,
            },
            VectorFamily::HybridMultiplicative => GeneratingVectorKind::HybridMultiplicative {
                rho: self.params.rho.ok_or_else(|| {
                    Error::InvalidParameter("hybrid vector requires rho".into())
                })?,
            },
        }))
    }

    /// Choice probabilities of the specified model on a route set.
    pub fn probabilities(&self, rs: &RouteSet<T>) -> Result<Vec<T>> {
        let u = self.utility();
        match self.vector_kind()? {
            Some(kind) => {
                let g = self.generating_function(rs)?;
                let ln_y = ln_gen_vector(&kind, rs, &u)?;
                choice_probabilities_ln(&g, &ln_y)
            }
            None => {
                let policy = self.reference_policy.clone().ok_or_else(|| {
                    Error::InvalidParameter(
                        "reference-route vector requires a reference policy".into(),
                    )
                })?;
                let mut builder = self.reference_function_builder(rs)?;
                md_probabilities_with(&mut *builder, rs, &u, &policy)
            }
        }
    }

    /// Per-reference generating-function builder honouring the
    /// reference-specific path-size option.
    pub fn reference_function_builder<'a>(
        &'a self,
        rs: &'a RouteSet<T>,
    ) -> Result<Box<dyn FnMut(usize) -> Result<GeneratingFunction<T>> + 'a>> {
        if self.reference_path_size && self.function == FunctionKind::PathSize {
            let beta = self.params.beta.ok_or_else(|| {
                Error::InvalidParameter("path-size function requires beta".into())
            })?;
            let mu = self.params.mu;
            let ids: Vec<String> = rs.route_ids().map(str::to_owned).collect();
            Ok(Box::new(move |r: usize| {
                let ps = rs.ref_path_size_factors(&ids[r])?;
                GeneratingFunction::path_size_raw(mu, beta, ps)
            }))
        } else {
            let g = self.generating_function(rs)?;
            Ok(Box::new(move |_| Ok(g.clone())))
        }
    }
}

impl<T: Scalar> fmt::Display for ModelSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

/// On-disk model format:
/// `{"function":"MN|PS|PC|LN","vector":"A|M|MD|HA|HM","mu":..,"beta":..?,
///   "rho":..?,"c":..?,"nest_scales":{..}?,"reference_policy":{..}?}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpecFile {
    pub function: FunctionKind,
    pub vector: VectorFamily,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nest_scales: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_policy: Option<ReferencePolicy>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reference_path_size: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_low_nest_scales: bool,
}

impl ModelSpecFile {
    pub fn into_spec<T: Scalar>(self) -> Result<ModelSpec<T>> {
        let params = ModelParams {
            mu: T::from_f64_lossy(self.mu),
            beta: self.beta.map(T::from_f64_lossy),
            rho: self.rho.map(T::from_f64_lossy),
            c: T::from_f64_lossy(self.c.unwrap_or(0.0)),
            nest_scales: self
                .nest_scales
                .unwrap_or_default()
                .into_iter()
                .map(|(k, v)| (k, T::from_f64_lossy(v)))
                .collect(),
        };
        Ok(ModelSpec {
            function: self.function,
            vector: self.vector,
            params,
            reference_policy: self.reference_policy,
            reference_path_size: self.reference_path_size,
            allow_low_nest_scales: self.allow_low_nest_scales,
        })
    }

    pub fn from_spec<T: Scalar>(spec: &ModelSpec<T>) -> Self {
        Self {
            function: spec.function,
            vector: spec.vector,
            mu: spec.params.mu.to_f64_lossy(),
            beta: spec.params.beta.map(Scalar::to_f64_lossy),
            rho: spec.params.rho.map(Scalar::to_f64_lossy),
            c: if spec.params.c == T::zero() {
                None
            } else {
                Some(spec.params.c.to_f64_lossy())
            },
            nest_scales: if spec.params.nest_scales.is_empty() {
                None
            } else {
                Some(
                    spec.params
                        .nest_scales
                        .iter()
                        .map(|(k, v)| (k.clone(), v.to_f64_lossy()))
                        .collect(),
                )
            },
            reference_policy: spec.reference_policy.clone(),
            reference_path_size: spec.reference_path_size,
            allow_low_nest_scales: spec.allow_low_nest_scales,
        }
    }
}

/// Parses a model specification from JSON text.
pub fn model_spec_from_json<T: Scalar>(text: &str) -> Result<ModelSpec<T>> {
    let file: ModelSpecFile =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    file.into_spec()
}

/// Serializes a model specification to JSON.
pub fn model_spec_to_json<T: Scalar>(spec: &ModelSpec<T>) -> String {
    serde_json::to_string_pretty(&ModelSpecFile::from_spec(spec))
        .expect("model spec serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::simple_network;

    #[test]
    fn path_size_with_zero_beta_equals_multinomial() {
        let rs = simple_network::<f64>();
        let mn = ModelSpec::new(
            FunctionKind::Multinomial,
            VectorFamily::Additive,
            ModelParams::new(1.3),
        );
        let ps = ModelSpec::new(
            FunctionKind::PathSize,
            VectorFamily::Additive,
            ModelParams::new(1.3).with_beta(0.0),
        );
        let a = mn.probabilities(&rs).unwrap();
        let b = ps.probabilities(&rs).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn reference_route_requires_policy() {
        let rs = simple_network::<f64>();
        let spec = ModelSpec::new(
            FunctionKind::Multinomial,
            VectorFamily::ReferenceRoute,
            ModelParams::new(1.0),
        );
        assert!(spec.probabilities(&rs).is_err());
        let spec = spec.with_policy(ReferencePolicy::Equal);
        assert!(spec.probabilities(&rs).is_ok());
    }

    #[test]
    fn reference_path_size_option_changes_factors() {
        let rs = simple_network::<f64>();
        let base = ModelSpec::new(
            FunctionKind::PathSize,
            VectorFamily::ReferenceRoute,
            ModelParams::new(1.0).with_beta(1.0),
        )
        .with_policy(ReferencePolicy::Equal);
        let global = base.probabilities(&rs).unwrap();
        let mut with_ref = base.clone();
        with_ref.reference_path_size = true;
        let specific = with_ref.probabilities(&rs).unwrap();
        assert!(global
            .iter()
            .zip(&specific)
            .any(|(a, b)| (a - b).abs() > 1e-6));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{
            "function": "LN",
            "vector": "M",
            "mu": 0.49,
            "c": -142.935,
            "nest_scales": {"1": 73.916, "5": 1175.47}
        }"#;
        let spec: ModelSpec<f64> = model_spec_from_json(text).unwrap();
        assert_eq!(spec.name(), "M-LN");
        let back = model_spec_to_json(&spec);
        let spec2: ModelSpec<f64> = model_spec_from_json(&back).unwrap();
        assert_eq!(spec, spec2);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"function":"MN","vector":"A","mu":1.0,"nope":3}"#;
        assert!(model_spec_from_json::<f64>(text).is_err());
    }

    #[test]
    fn md_spec_json_matches_hand_probabilities() {
        let text = r#"{
            "function": "MN",
            "vector": "MD",
            "mu": 1.0,
            "reference_policy": {"policy": "markov"}
        }"#;
        let spec: ModelSpec<f64> = model_spec_from_json(text).unwrap();
        let p = spec.probabilities(&simple_network()).unwrap();
        assert!((p[0] - 0.401).abs() < 1e-3);
    }
}
