//! Stochastic user equilibrium: find route flows whose shares equal the
//! model's choice probabilities under flow-dependent link costs.
//!
//! The equilibrium is the fixed point `f = D·P(f)`; the solver is the
//! method of successive averages started from the free-flow assignment.
//! Convergence is reported through the normalized duality gap of the
//! generalized stochastic costs `c_r(f) = −ln(y_r(f)·G_r(y(f))) + ln f_r`,
//! which are all equal exactly at equilibrium.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ln_gen_vector, GeneratingVectorKind};
use crate::network::RouteSet;
use crate::refroute::{ln_md_gen_vector_at, ReferencePolicy};
use crate::scalar::Scalar;
use crate::spec::{ModelSpec, VectorFamily};

/// Flow-dependent link travel cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LinkCostFunction<T> {
    Constant { t0: T },
    Affine { t0: T, slope: T },
    /// `t0 · (1 + a · (flow/capacity)^b)`.
    Bpr { t0: T, capacity: T, a: T, b: T },
}

impl<T: Scalar> LinkCostFunction<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Constant { t0 } => *t0 > T::zero(),
            Self::Affine { t0, slope } => *t0 > T::zero() && *slope >= T::zero(),
            Self::Bpr { t0, capacity, a, b } => {
                *t0 > T::zero() && *capacity > T::zero() && *a >= T::zero() && *b >= T::one()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "link cost function out of domain: {self:?}"
            )))
        }
    }

    pub fn eval(&self, flow: T) -> T {
        match self {
            Self::Constant { t0 } => *t0,
            Self::Affine { t0, slope } => *t0 + *slope * flow,
            Self::Bpr { t0, capacity, a, b } => {
                *t0 * (T::one() + *a * (flow / *capacity).powf(*b))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SueConfig {
    pub max_iterations: usize,
    pub gap_tolerance: f64,
    /// Also require `max_r |f_r/D − P_r(f)|` below this before stopping, so
    /// a returned solution is a genuine fixed point and not just flat-cost.
    pub residual_tolerance: f64,
}

impl Default for SueConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            gap_tolerance: 1e-6,
            residual_tolerance: 1e-6,
        }
    }
}

/// A single-OD equilibrium problem: route set, demand, per-link cost
/// functions (aligned with the route set's link order), and a model.
#[derive(Debug, Clone)]
pub struct SueProblem<T> {
    pub route_set: RouteSet<T>,
    pub demand: T,
    pub link_costs: Vec<LinkCostFunction<T>>,
    pub model: ModelSpec<T>,
    pub config: SueConfig,
}

impl<T: Scalar> SueProblem<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.demand > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "demand {} must be positive",
                self.demand
            )));
        }
        if self.link_costs.len() != self.route_set.n_links() {
            return Err(Error::DimensionMismatch {
                expected: self.route_set.n_links(),
                got: self.link_costs.len(),
            });
        }
        for c in &self.link_costs {
            c.validate()?;
        }
        Ok(())
    }

    /// Link flows implied by route flows.
    pub fn link_flows(&self, f: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.route_set.n_links()];
        for (route, &fr) in self.route_set.routes().iter().zip(f) {
            for &l in route.link_indices() {
                out[l] = out[l] + fr;
            }
        }
        out
    }

    /// The route set re-priced at the link costs induced by `f`.
    pub fn loaded_route_set(&self, f: &[T]) -> Result<RouteSet<T>> {
        let link_flows = self.link_flows(f);
        let costs: Vec<T> = self
            .link_costs
            .iter()
            .zip(&link_flows)
            .map(|(c, &fl)| c.eval(fl))
            .collect();
        self.route_set.with_costs(&costs)
    }

    /// Model probabilities under the flow-loaded costs.
    pub fn probabilities(&self, f: &[T]) -> Result<Vec<T>> {
        self.model.probabilities(&self.loaded_route_set(f)?)
    }

    /// Whether the model is a single generating-vector instance, for which
    /// the generalized cost has its exact form. Reference-route mixtures
    /// (equal/markov policies) are admitted experimentally: their cost uses
    /// the mixture probability instead of `y_r G_r`.
    pub fn is_mixture(&self) -> bool {
        self.model.vector == VectorFamily::ReferenceRoute
            && !matches!(
                self.model.reference_policy,
                Some(ReferencePolicy::Fixed { .. })
            )
    }
}

/// Generalized stochastic route costs under flow `f`; equal across routes
/// exactly at equilibrium.
pub fn generalized_cost<T: Scalar>(problem: &SueProblem<T>, f: &[T]) -> Result<Vec<T>> {
    if f.len() != problem.route_set.n_routes() {
        return Err(Error::DimensionMismatch {
            expected: problem.route_set.n_routes(),
            got: f.len(),
        });
    }
    if let Some((i, &bad)) = f.iter().enumerate().find(|(_, &v)| !(v > T::zero())) {
        return Err(Error::NonPositiveEntry {
            index: i,
            value: bad.to_f64_lossy(),
        });
    }
    let loaded = problem.loaded_route_set(f)?;
    let u = problem.model.utility();
    let ln_yg: Vec<T> = if problem.is_mixture() {
        // Mixtures have no single y·G_r; use ln P_r, which shares the
        // equal-at-equilibrium property up to a route-independent shift.
        problem
            .model
            .probabilities(&loaded)?
            .iter()
            .map(|&p| p.ln())
            .collect()
    } else {
        let ln_y = match problem.model.vector {
            VectorFamily::ReferenceRoute => {
                let Some(ReferencePolicy::Fixed { ref reference }) =
                    problem.model.reference_policy
                else {
                    unreachable!("non-fixed policies take the mixture branch");
                };
                ln_md_gen_vector_at(&loaded, &u, loaded.route_position(reference)?)?
            }
            VectorFamily::Additive => {
                ln_gen_vector(&GeneratingVectorKind::Additive, &loaded, &u)?
            }
            VectorFamily::Multiplicative => {
                ln_gen_vector(&GeneratingVectorKind::Multiplicative, &loaded, &u)?
            }
            VectorFamily::HybridAdditive => ln_gen_vector(
                &GeneratingVectorKind::HybridAdditive {
                    rho: problem.model.params.rho.ok_or_else(|| {
                        Error::InvalidParameter("hybrid vector requires rho".into())
                    })?,
                },
                &loaded,
                &u,
            )?,
            VectorFamily::HybridMultiplicative => ln_gen_vector(
                &GeneratingVectorKind::HybridMultiplicative {
                    rho: problem.model.params.rho.ok_or_else(|| {
                        Error::InvalidParameter("hybrid vector requires rho".into())
                    })?,
                },
                &loaded,
                &u,
            )?,
        };
        let g = if problem.model.vector == VectorFamily::ReferenceRoute {
            let Some(ReferencePolicy::Fixed { ref reference }) = problem.model.reference_policy
            else {
                unreachable!()
            };
            let idx = loaded.route_position(reference)?;
            problem.model.reference_function_builder(&loaded)?(idx)?
        } else {
            problem.model.generating_function(&loaded)?
        };
        let ln_grad = g.ln_grad(&ln_y)?;
        ln_y.iter().zip(&ln_grad).map(|(&a, &b)| a + b).collect()
    };
    Ok(ln_yg
        .iter()
        .zip(f)
        .map(|(&lyg, &fr)| -lyg + fr.ln())
        .collect())
}

/// Normalized duality gap at `f`. Falls back to the absolute (unnormalized)
/// gap when the denominator degenerates, reporting that through
/// `normalized = false`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GapReport<T> {
    pub value: T,
    pub normalized: bool,
}

pub fn duality_gap<T: Scalar>(problem: &SueProblem<T>, f: &[T]) -> Result<GapReport<T>> {
    let costs = generalized_cost(problem, f)?;
    let min = costs.iter().copied().fold(T::infinity(), T::min);
    let excess: T = costs
        .iter()
        .zip(f)
        .map(|(&c, &fr)| fr * (c - min))
        .sum::<T>()
        .max(T::zero());
    let denom = f.iter().copied().sum::<T>() * min;
    if denom.abs() < T::from_f64_lossy(1e-12) {
        Ok(GapReport {
            value: excess,
            normalized: false,
        })
    } else {
        Ok(GapReport {
            value: excess / denom.abs(),
            normalized: true,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SueSolution<T> {
    pub flows: Vec<T>,
    pub generalized_costs: Vec<T>,
    pub duality_gap: T,
    pub iterations: usize,
    pub converged: bool,
    /// Gap after each averaging step.
    pub gap_trajectory: Vec<T>,
    /// Set when the model is a reference-route mixture, whose equilibrium
    /// formulation is heuristic rather than exact.
    pub experimental_mixture: bool,
}

/// Solves the equilibrium by successive averages:
/// `f ← f + (D·P(f) − f)/(k+1)`, starting at the free-flow assignment.
/// Stops when both the duality gap and the fixed-point residual are within
/// tolerance; at the iteration cap the best iterate seen is returned,
/// flagged unconverged.
pub fn solve_sue<T: Scalar>(problem: &SueProblem<T>) -> Result<SueSolution<T>> {
    problem.validate()?;
    let d = problem.demand;
    let n = problem.route_set.n_routes();

    let free_flow = problem.probabilities(&vec![T::zero(); n])?;
    let mut f: Vec<T> = free_flow.iter().map(|&p| p * d).collect();
    let gap_tol = T::from_f64_lossy(problem.config.gap_tolerance);
    let res_tol = T::from_f64_lossy(problem.config.residual_tolerance);

    let mut trajectory = Vec::new();
    let mut best: Option<(Vec<T>, T)> = None;
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=problem.config.max_iterations {
        iterations = k;
        let p = problem.probabilities(&f)?;
        let step = T::one() / T::from_f64_lossy((k + 1) as f64);
        let mut residual = T::zero();
        for (fr, &pr) in f.iter_mut().zip(&p) {
            *fr = *fr + step * (d * pr - *fr);
        }
        renormalize(&mut f, d);
        let p_new = problem.probabilities(&f)?;
        for (fr, &pr) in f.iter().zip(&p_new) {
            residual = residual.max((*fr / d - pr).abs());
        }
        let gap = duality_gap(problem, &f)?.value;
        trajectory.push(gap);
        if best.as_ref().is_none_or(|(_, g)| gap < *g) {
            best = Some((f.clone(), gap));
        }
        if gap <= gap_tol && residual <= res_tol {
            converged = true;
            break;
        }
    }

    let (flows, gap) = if converged {
        let g = *trajectory.last().expect("at least one iteration ran");
        (f, g)
    } else {
        best.expect("at least one iteration ran")
    };
    let generalized_costs = generalized_cost(problem, &flows)?;
    Ok(SueSolution {
        duality_gap: gap,
        generalized_costs,
        iterations,
        converged,
        gap_trajectory: trajectory,
        experimental_mixture: problem.is_mixture(),
        flows,
    })
}

/// Clamps flows positive and rescales their sum to the demand exactly.
fn renormalize<T: Scalar>(f: &mut [T], demand: T) {
    let floor = T::from_f64_lossy(1e-300);
    for v in f.iter_mut() {
        if !(*v > floor) {
            *v = floor;
        }
    }
    let sum: T = f.iter().copied().sum();
    for v in f.iter_mut() {
        *v = *v * demand / sum;
    }
}
