//! Links, routes, and the overlap-derived quantities every model consumes:
//! path-size factors, similarity indices, and inclusion coefficients.
//!
//! Costs are stored as positive generalized costs (e.g. minutes). All overlap
//! formulas are ratios of cost sums, so the sign of utility cancels and the
//! factors land in their documented ranges: path-size in (0,1], similarity in
//! [0, 1−ε), inclusion columns summing to one.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Clamp ceiling for similarity indices. Identical or near-identical routes
/// would otherwise drive the pairwise nest exponent μ/(1−φ) to infinity.
pub const SIMILARITY_CLAMP: f64 = 1e-6;

/// A network link with a strictly positive generalized cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Link<T> {
    pub id: String,
    pub cost: T,
}

/// An ordered sequence of distinct links.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub id: String,
    links: Vec<usize>,
}

impl Route {
    /// Link indices into the owning route set, in traversal order.
    pub fn link_indices(&self) -> &[usize] {
        &self.links
    }
}

/// A validated set of routes over a common link universe, with cached route
/// costs, pairwise overlap costs, and link usage counts.
#[derive(Debug, Clone)]
pub struct RouteSet<T> {
    links: Vec<Link<T>>,
    routes: Vec<Route>,
    link_index: HashMap<String, usize>,
    route_index: HashMap<String, usize>,
    route_costs: Vec<T>,
    overlap: Matrix<T>,
    usage: Vec<usize>,
}

impl<T: Scalar> RouteSet<T> {
    /// Validates and builds a route set. Reports the first violation with the
    /// offending route/link ids.
    pub fn new(
        links: Vec<(String, T)>,
        routes: Vec<(String, Vec<String>)>,
    ) -> Result<Self> {
        let mut link_index = HashMap::new();
        let mut link_vec = Vec::with_capacity(links.len());
        for (id, cost) in links {
            if !(cost > T::zero()) || !cost.is_finite() {
                return Err(Error::NonPositiveCost(id, cost.to_f64_lossy()));
            }
            if link_index.insert(id.clone(), link_vec.len()).is_some() {
                return Err(Error::Schema(format!("duplicate link id `{id}`")));
            }
            link_vec.push(Link { id, cost });
        }

        if routes.is_empty() {
            return Err(Error::NoRoutes);
        }

        let mut route_index = HashMap::new();
        let mut route_vec: Vec<Route> = Vec::with_capacity(routes.len());
        let mut seen_sets: Vec<(BTreeSet<usize>, String)> = Vec::new();
        for (id, link_ids) in routes {
            if link_ids.is_empty() {
                return Err(Error::EmptyRoute(id));
            }
            let mut indices = Vec::with_capacity(link_ids.len());
            let mut seen = BTreeSet::new();
            for lid in &link_ids {
                let &idx = link_index
                    .get(lid)
                    .ok_or_else(|| Error::UnknownLink(lid.clone()))?;
                if !seen.insert(idx) {
                    return Err(Error::RepeatedLink {
                        route: id.clone(),
                        link: lid.clone(),
                    });
                }
                indices.push(idx);
            }
            if let Some((_, other)) = seen_sets.iter().find(|(set, _)| *set == seen) {
                return Err(Error::DuplicateRoute(other.clone(), id));
            }
            seen_sets.push((seen, id.clone()));
            if route_index.insert(id.clone(), route_vec.len()).is_some() {
                return Err(Error::Schema(format!("duplicate route id `{id}`")));
            }
            route_vec.push(Route { id, links: indices });
        }

        let n = route_vec.len();
        let route_costs: Vec<T> = route_vec
            .iter()
            .map(|r| r.links.iter().map(|&l| link_vec[l].cost).sum())
            .collect();

        let mut usage = vec![0usize; link_vec.len()];
        for r in &route_vec {
            for &l in &r.links {
                usage[l] += 1;
            }
        }

        let mut overlap = Matrix::zeros(n, n);
        for i in 0..n {
            let set_i: BTreeSet<usize> = route_vec[i].links.iter().copied().collect();
            for j in i..n {
                let shared: T = route_vec[j]
                    .links
                    .iter()
                    .filter(|l| set_i.contains(l))
                    .map(|&l| link_vec[l].cost)
                    .sum();
                overlap.set(i, j, shared);
                overlap.set(j, i, shared);
            }
        }

        Ok(Self {
            links: link_vec,
            routes: route_vec,
            link_index,
            route_index,
            route_costs,
            overlap,
            usage,
        })
    }

    /// Same structure with new link costs, re-deriving every cached quantity.
    /// Used by the equilibrium solver where costs depend on flow.
    pub fn with_costs(&self, costs: &[T]) -> Result<Self> {
        if costs.len() != self.links.len() {
            return Err(Error::DimensionMismatch {
                expected: self.links.len(),
                got: costs.len(),
            });
        }
        let links = self
            .links
            .iter()
            .zip(costs)
            .map(|(l, &c)| (l.id.clone(), c))
            .collect();
        let routes = self
            .routes
            .iter()
            .map(|r| {
                (
                    r.id.clone(),
                    r.links.iter().map(|&l| self.links[l].id.clone()).collect(),
                )
            })
            .collect();
        Self::new(links, routes)
    }

    pub fn n_routes(&self) -> usize {
        self.routes.len()
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link<T>] {
        &self.links
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn route_ids(&self) -> impl Iterator<Item = &str> {
        self.routes.iter().map(|r| r.id.as_str())
    }

    pub fn route_position(&self, id: &str) -> Result<usize> {
        self.route_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownRoute(id.to_owned()))
    }

    pub fn link_position(&self, id: &str) -> Result<usize> {
        self.link_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownLink(id.to_owned()))
    }

    /// Number of routes using each link (`#_l`), over this route set only.
    pub fn usage_counts(&self) -> &[usize] {
        &self.usage
    }

    /// Sum of link costs along route `r`.
    pub fn route_cost(&self, r: &str) -> Result<T> {
        Ok(self.route_costs[self.route_position(r)?])
    }

    pub fn route_cost_at(&self, idx: usize) -> T {
        self.route_costs[idx]
    }

    pub fn route_costs(&self) -> &[T] {
        &self.route_costs
    }

    /// Cost of the links shared by `r` and `s`; symmetric, and equal to the
    /// route cost when `r == s`.
    pub fn overlap_cost(&self, r: &str, s: &str) -> Result<T> {
        Ok(self
            .overlap
            .get(self.route_position(r)?, self.route_position(s)?))
    }

    pub fn overlap_cost_at(&self, r: usize, s: usize) -> T {
        self.overlap.get(r, s)
    }

    /// Cost of `r`'s links not shared with `s`.
    pub fn non_overlap_cost_at(&self, r: usize, s: usize) -> T {
        self.route_costs[r] - self.overlap.get(r, s)
    }

    /// Path-size factor per route: Σ_{l∈r} (cost_l / #_l) / cost_r.
    ///
    /// Equals 1 exactly when the route shares no link with any other route,
    /// and tends to 0 as every link becomes heavily shared.
    pub fn path_size_factors(&self) -> Vec<T> {
        self.routes
            .iter()
            .zip(&self.route_costs)
            .map(|(route, &cost)| {
                let weighted: T = route
                    .links
                    .iter()
                    .map(|&l| {
                        self.links[l].cost / T::from_f64_lossy(self.usage[l] as f64)
                    })
                    .sum();
                weighted / cost
            })
            .collect()
    }

    /// Reference-route-specific path-size factors: the factor for `p ≠ ref`
    /// is computed over `p`'s links outside the reference route, and the
    /// reference itself gets factor 1.
    pub fn ref_path_size_factors(&self, reference: &str) -> Result<Vec<T>> {
        let ref_idx = self.route_position(reference)?;
        let ref_links: BTreeSet<usize> =
            self.routes[ref_idx].links.iter().copied().collect();
        self.routes
            .iter()
            .enumerate()
            .map(|(p, route)| {
                if p == ref_idx {
                    return Ok(T::one());
                }
                let mut weighted = T::zero();
                let mut total = T::zero();
                for &l in &route.links {
                    if ref_links.contains(&l) {
                        continue;
                    }
                    let cost = self.links[l].cost;
                    weighted =
                        weighted + cost / T::from_f64_lossy(self.usage[l] as f64);
                    total = total + cost;
                }
                if total <= T::zero() {
                    return Err(Error::DegenerateRoute {
                        route: route.id.clone(),
                        reference: reference.to_owned(),
                    });
                }
                Ok(weighted / total)
            })
            .collect()
    }

    /// Pairwise similarity indices φ_rp = overlap(r,p) / √(cost_r · cost_p),
    /// clamped below 1 to keep the pairwise nest exponents finite. The
    /// diagonal is left at zero; no model reads it.
    pub fn similarity_matrix(&self) -> Result<Matrix<T>> {
        let n = self.n_routes();
        if n < 2 {
            return Err(Error::TooFewRoutes { required: 2, got: n });
        }
        let clamp = T::one() - T::from_f64_lossy(SIMILARITY_CLAMP);
        let mut phi = Matrix::zeros(n, n);
        for r in 0..n {
            for p in (r + 1)..n {
                let raw = self.overlap.get(r, p)
                    / (self.route_costs[r] * self.route_costs[p]).sqrt();
                let v = if raw > clamp { clamp } else { raw };
                phi.set(r, p, v);
                phi.set(p, r, v);
            }
        }
        Ok(phi)
    }

    /// Normalized inclusion coefficients α_lr = cost_l / cost_r for l ∈ r,
    /// as a links × routes matrix. Columns sum to one.
    pub fn inclusion_matrix(&self) -> Matrix<T> {
        let mut alpha = Matrix::zeros(self.n_links(), self.n_routes());
        for (r, route) in self.routes.iter().enumerate() {
            for &l in &route.links {
                alpha.set(l, r, self.links[l].cost / self.route_costs[r]);
            }
        }
        alpha
    }
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct LinkSchema {
    id: String,
    cost: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RouteSchema {
    id: String,
    links: Vec<String>,
}

/// On-disk network format:
/// `{"links":[{"id":..,"cost":..}],"routes":[{"id":..,"links":[..]}]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct NetworkFile {
    links: Vec<LinkSchema>,
    routes: Vec<RouteSchema>,
}

impl NetworkFile {
    pub fn from_route_set<T: Scalar>(rs: &RouteSet<T>) -> Self {
        Self {
            links: rs
                .links()
                .iter()
                .map(|l| LinkSchema {
                    id: l.id.clone(),
                    cost: l.cost.to_f64_lossy(),
                })
                .collect(),
            routes: rs
                .routes()
                .iter()
                .map(|r| RouteSchema {
                    id: r.id.clone(),
                    links: r
                        .link_indices()
                        .iter()
                        .map(|&l| rs.links()[l].id.clone())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn into_route_set<T: Scalar>(self) -> Result<RouteSet<T>> {
        RouteSet::new(
            self.links
                .into_iter()
                .map(|l| (l.id, T::from_f64_lossy(l.cost)))
                .collect(),
            self.routes.into_iter().map(|r| (r.id, r.links)).collect(),
        )
    }
}

/// Parses and validates a network from JSON text.
pub fn route_set_from_json<T: Scalar>(text: &str) -> Result<RouteSet<T>> {
    let file: NetworkFile =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    file.into_route_set()
}

/// Serializes a route set to the JSON schema.
pub fn route_set_to_json<T: Scalar>(rs: &RouteSet<T>) -> String {
    serde_json::to_string_pretty(&NetworkFile::from_route_set(rs))
        .expect("network serialization cannot fail")
}

/// The three-route overlap network used throughout the tests and docs:
/// two routes sharing their first link (costs 3+1 and 3+2) and a disjoint
/// third route of cost 4.
pub fn simple_network<T: Scalar>() -> RouteSet<T> {
    let c = |x: f64| T::from_f64_lossy(x);
    RouteSet::new(
        vec![
            ("a".into(), c(3.0)),
            ("b".into(), c(1.0)),
            ("c".into(), c(2.0)),
            ("d".into(), c(4.0)),
        ],
        vec![
            ("upper".into(), vec!["a".into(), "b".into()]),
            ("middle".into(), vec!["a".into(), "c".into()]),
            ("lower".into(), vec!["d".into()]),
        ],
    )
    .expect("simple network is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rs() -> RouteSet<f64> {
        simple_network()
    }

    #[test]
    fn route_costs_on_simple_network() {
        let rs = rs();
        assert_eq!(rs.route_cost("upper").unwrap(), 4.0);
        assert_eq!(rs.route_cost("middle").unwrap(), 5.0);
        assert_eq!(rs.route_cost("lower").unwrap(), 4.0);
        assert!(matches!(
            rs.route_cost("nope"),
            Err(Error::UnknownRoute(_))
        ));
    }

    #[test]
    fn single_link_route_cost_is_identity() {
        let rs = RouteSet::<f64>::new(
            vec![("l".into(), 4.0)],
            vec![("r".into(), vec!["l".into()])],
        )
        .unwrap();
        assert_eq!(rs.route_cost("r").unwrap(), 4.0);
    }

    #[test]
    fn overlap_costs() {
        let rs = rs();
        assert_eq!(rs.overlap_cost("upper", "middle").unwrap(), 3.0);
        assert_eq!(rs.overlap_cost("middle", "upper").unwrap(), 3.0);
        assert_eq!(rs.overlap_cost("upper", "lower").unwrap(), 0.0);
        // Full self-overlap.
        assert_eq!(rs.overlap_cost("middle", "middle").unwrap(), 5.0);
    }

    #[test]
    fn path_size_factors_on_simple_network() {
        let ps = rs().path_size_factors();
        assert!((ps[0] - 0.625).abs() < 1e-15);
        assert!((ps[1] - 0.7).abs() < 1e-15);
        assert!((ps[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn path_size_is_one_for_disjoint_routes() {
        let rs = RouteSet::<f64>::new(
            vec![("a".into(), 2.0), ("b".into(), 3.0)],
            vec![
                ("r1".into(), vec!["a".into()]),
                ("r2".into(), vec!["b".into()]),
            ],
        )
        .unwrap();
        assert!(rs.path_size_factors().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn path_size_half_when_every_link_shared_by_two() {
        // Two 2-link routes sharing both links is rejected (identical sets),
        // so share each of the two links with a third route instead.
        let rs = RouteSet::<f64>::new(
            vec![
                ("a".into(), 1.0),
                ("b".into(), 1.0),
                ("c".into(), 5.0),
                ("d".into(), 5.0),
            ],
            vec![
                ("r".into(), vec!["a".into(), "b".into()]),
                ("s".into(), vec!["a".into(), "c".into()]),
                ("t".into(), vec!["b".into(), "d".into()]),
            ],
        )
        .unwrap();
        let ps = rs.path_size_factors();
        assert!((ps[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ref_path_size_factors_match_global_for_disjoint_reference() {
        let rs = rs();
        let ps = rs.ref_path_size_factors("lower").unwrap();
        assert!((ps[0] - 0.625).abs() < 1e-15);
        assert!((ps[1] - 0.7).abs() < 1e-15);
        assert_eq!(ps[2], 1.0);
    }

    #[test]
    fn ref_path_size_rejects_contained_route() {
        let rs = RouteSet::<f64>::new(
            vec![("a".into(), 1.0), ("b".into(), 2.0)],
            vec![
                ("small".into(), vec!["a".into()]),
                ("big".into(), vec!["a".into(), "b".into()]),
            ],
        )
        .unwrap();
        assert!(matches!(
            rs.ref_path_size_factors("big"),
            Err(Error::DegenerateRoute { .. })
        ));
    }

    #[test]
    fn similarity_matrix_values() {
        let rs = rs();
        let phi = rs.similarity_matrix().unwrap();
        let expected = 3.0 / 20f64.sqrt();
        assert!((phi.get(0, 1) - expected).abs() < 1e-15);
        assert_eq!(phi.get(0, 2), 0.0);
        assert_eq!(phi.get(1, 2), 0.0);
    }

    #[test]
    fn similarity_clamped_for_near_identical_routes() {
        // Two routes differing only in a negligible link.
        let rs = RouteSet::<f64>::new(
            vec![
                ("a".into(), 100.0),
                ("b".into(), 1e-9),
                ("c".into(), 1e-9),
            ],
            vec![
                ("r".into(), vec!["a".into(), "b".into()]),
                ("s".into(), vec!["a".into(), "c".into()]),
            ],
        )
        .unwrap();
        let phi = rs.similarity_matrix().unwrap();
        assert!(phi.get(0, 1) <= 1.0 - SIMILARITY_CLAMP);
    }

    #[test]
    fn inclusion_matrix_columns_sum_to_one() {
        let rs = rs();
        let alpha = rs.inclusion_matrix();
        assert!((alpha.get(0, 0) - 0.75).abs() < 1e-15);
        assert!((alpha.get(1, 0) - 0.25).abs() < 1e-15);
        for r in 0..rs.n_routes() {
            let sum: f64 = (0..rs.n_links()).map(|l| alpha.get(l, r)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        // Link used by no route: all-zero row.
        let rs2 = RouteSet::<f64>::new(
            vec![("a".into(), 1.0), ("unused".into(), 2.0)],
            vec![("r".into(), vec!["a".into()])],
        )
        .unwrap();
        let alpha2 = rs2.inclusion_matrix();
        assert_eq!(alpha2.get(1, 0), 0.0);
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            RouteSet::<f64>::new(vec![("a".into(), 0.0)], vec![]),
            Err(Error::NonPositiveCost(..))
        ));
        assert!(matches!(
            RouteSet::<f64>::new(vec![("a".into(), 1.0)], vec![]),
            Err(Error::NoRoutes)
        ));
        assert!(matches!(
            RouteSet::<f64>::new(
                vec![("a".into(), 1.0)],
                vec![("r".into(), vec!["a".into(), "a".into()])],
            ),
            Err(Error::RepeatedLink { .. })
        ));
        assert!(matches!(
            RouteSet::<f64>::new(
                vec![("a".into(), 1.0)],
                vec![("r".into(), vec!["zz".into()])],
            ),
            Err(Error::UnknownLink(_))
        ));
        // Identical link sets rejected even with different order.
        assert!(matches!(
            RouteSet::<f64>::new(
                vec![("a".into(), 1.0), ("b".into(), 2.0)],
                vec![
                    ("r".into(), vec!["a".into(), "b".into()]),
                    ("s".into(), vec!["b".into(), "a".into()]),
                ],
            ),
            Err(Error::DuplicateRoute(..))
        ));
    }

    #[test]
    fn json_round_trip() {
        let rs = rs();
        let text = route_set_to_json(&rs);
        let back: RouteSet<f64> = route_set_from_json(&text).unwrap();
        assert_eq!(back.n_routes(), 3);
        assert_eq!(back.route_cost("middle").unwrap(), 5.0);
        assert_eq!(back.overlap_cost("upper", "middle").unwrap(), 3.0);
    }

    #[test]
    fn json_loader_reports_schema_violations() {
        let bad = r#"{"links":[{"id":"a","cost":1.0}],"routes":[{"id":"r","links":["missing"]}]}"#;
        let err = route_set_from_json::<f64>(bad).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }
}
