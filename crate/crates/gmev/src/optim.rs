//! Derivative-free simplex minimizer used by the maximum-likelihood layer.
//! Objectives may return infinity to mark infeasible points; the simplex
//! simply orders them last.

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct NelderMeadConfig<T> {
    pub max_iterations: usize,
    /// Convergence when the simplex value spread falls below this.
    pub f_tolerance: T,
    /// ... and the vertex coordinate spread below this.
    pub x_tolerance: T,
    /// Initial simplex edge length per coordinate.
    pub initial_step: T,
}

impl<T: Scalar> Default for NelderMeadConfig<T> {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            f_tolerance: T::from_f64_lossy(1e-10),
            x_tolerance: T::from_f64_lossy(1e-9),
            initial_step: T::from_f64_lossy(0.5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with the Nelder–Mead reflect/expand/contract/
/// shrink moves and standard coefficients.
pub fn nelder_mead<T: Scalar>(
    mut f: impl FnMut(&[T]) -> T,
    x0: &[T],
    cfg: &NelderMeadConfig<T>,
) -> Minimum<T> {
    let dim = x0.len();
    assert!(dim > 0, "objective must have at least one parameter");
    let (alpha, gamma, rho, sigma) = (
        T::one(),
        T::from_f64_lossy(2.0),
        T::from_f64_lossy(0.5),
        T::from_f64_lossy(0.5),
    );

    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] = x[i] + cfg.initial_step;
        let v = f(&x);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));

        let f_best = simplex[0].1;
        let f_worst = simplex[dim].1;
        let f_spread = (f_worst - f_best).abs();
        let x_spread = (0..dim)
            .map(|i| {
                simplex
                    .iter()
                    .map(|(x, _)| (x[i] - simplex[0].0[i]).abs())
                    .fold(T::zero(), T::max)
            })
            .fold(T::zero(), T::max);
        if f_spread.is_finite() && f_spread <= cfg.f_tolerance && x_spread <= cfg.x_tolerance {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![T::zero(); dim];
        for (x, _) in simplex.iter().take(dim) {
            for (c, &xi) in centroid.iter_mut().zip(x) {
                *c = *c + xi;
            }
        }
        let nd = T::from_f64_lossy(dim as f64);
        for c in centroid.iter_mut() {
            *c = *c / nd;
        }

        let worst = simplex[dim].clone();
        let reflected: Vec<T> = centroid
            .iter()
            .zip(&worst.0)
            .map(|(&c, &w)| c + alpha * (c - w))
            .collect();
        let f_reflected = f(&reflected);

        if f_reflected < simplex[0].1 {
            // Try to go further in the same direction.
            let expanded: Vec<T> = centroid
                .iter()
                .zip(&reflected)
                .map(|(&c, &r)| c + gamma * (r - c))
                .collect();
            let f_expanded = f(&expanded);
            simplex[dim] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
            continue;
        }
        if f_reflected < simplex[dim - 1].1 {
            simplex[dim] = (reflected, f_reflected);
            continue;
        }

        let contracted: Vec<T> = centroid
            .iter()
            .zip(&worst.0)
            .map(|(&c, &w)| c + rho * (w - c))
            .collect();
        let f_contracted = f(&contracted);
        if f_contracted < worst.1 {
            simplex[dim] = (contracted, f_contracted);
            continue;
        }

        // Shrink toward the best vertex.
        let best = simplex[0].0.clone();
        for (x, v) in simplex.iter_mut().skip(1) {
            for (xi, &bi) in x.iter_mut().zip(&best) {
                *xi = bi + sigma * (*xi - bi);
            }
            *v = f(x);
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        converged,
    }
}
