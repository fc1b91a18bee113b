//! Bound-constrained limited-memory quasi-Newton minimizer.
//!
//! Search directions come from the standard L-BFGS two-loop recursion;
//! trial points are projected onto the box during a backtracking Armijo
//! line search. The minimizer is fully deterministic: identical inputs give
//! identical iterates. Any limited-memory quasi-Newton honoring the same
//! contract (objective + gradient + box bounds, non-increasing objective,
//! projected-gradient stopping rule) could be swapped in behind it.

use std::collections::VecDeque;

/// Box constraints, one closed interval per coordinate.
#[derive(Clone, Debug)]
pub struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxBounds {
    pub fn project(&self, x: &mut [f64]) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    fn projected(&self, x: &[f64]) -> Vec<f64> {
        let mut p = x.to_vec();
        self.project(&mut p);
        p
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Stop when the infinity norm of the projected gradient step falls below
    /// this.
    pub grad_tol: f64,
    /// History pairs kept for the two-loop recursion.
    pub memory: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iters: 100,
            grad_tol: 1e-5,
            memory: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_inf_norm: f64,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Minimizes `f` over the box. The objective returns `None` when it cannot be
/// evaluated (for a GP likelihood: a factorization failure); such trial
/// points are rejected by the line search. Returns `None` only when the
/// starting point itself cannot be evaluated.
pub fn minimize_bounded<F>(
    mut objective: F,
    x0: &[f64],
    bounds: &BoxBounds,
    opts: &MinimizeOptions,
) -> Option<MinimizeResult>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = bounds.projected(x0);
    let (mut f, mut g) = objective(&x)?;
    if !f.is_finite() {
        return None;
    }

    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_inf_norm = projected_gradient_norm(&x, &g, bounds);

    for _ in 0..opts.max_iters {
        if grad_inf_norm <= opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut d = two_loop_direction(&g, &s_hist, &y_hist);
        // Descent safeguard: fall back to steepest descent.
        if dot(&d, &g) >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            d = g.iter().map(|v| -v).collect();
        }

        let mut accepted = false;
        // Without curvature history the direction is raw steepest descent;
        // scale the first trial to a unit-ish move instead of a full step.
        let mut step = if s_hist.is_empty() {
            (1.0 / norm(&d).max(1.0)).min(1.0)
        } else {
            1.0
        };
        let slope = dot(&g, &d);
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = (0..n).map(|i| x[i] + step * d[i]).collect();
            bounds.project(&mut trial);
            let displacement: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
            if displacement.iter().all(|v| *v == 0.0) {
                break;
            }
            let trial_eval = objective(&trial);
            if let Some((f_trial, g_trial)) = trial_eval {
                if f_trial.is_finite() && f_trial <= f + ARMIJO_C1 * dot(&g, &displacement) {
                    let y_vec: Vec<f64> = (0..n).map(|i| g_trial[i] - g[i]).collect();
                    let sy = dot(&displacement, &y_vec);
                    if sy > 1e-12 * norm(&displacement) * norm(&y_vec) {
                        if s_hist.len() == opts.memory {
                            s_hist.pop_front();
                            y_hist.pop_front();
                        }
                        s_hist.push_back(displacement);
                        y_hist.push_back(y_vec);
                    }
                    x = trial;
                    f = f_trial;
                    g = g_trial;
                    accepted = true;
                    break;
                }
                // Quadratic-interpolation backtrack using the rejected value;
                // clamped so progress per backtrack stays bounded.
                let denom = 2.0 * (f_trial - f - slope * step);
                let quad = if denom > 0.0 && slope < 0.0 {
                    -slope * step * step / denom
                } else {
                    0.5 * step
                };
                step = quad.clamp(0.1 * step, 0.5 * step);
                continue;
            }
            step *= 0.5;
        }

        if !accepted {
            if s_hist.is_empty() {
                break;
            }
            // A stale quasi-Newton model can block progress; drop it and let
            // the next iteration try steepest descent.
            s_hist.clear();
            y_hist.clear();
        }
        grad_inf_norm = projected_gradient_norm(&x, &g, bounds);
    }

    if grad_inf_norm <= opts.grad_tol {
        converged = true;
    }
    Some(MinimizeResult {
        x,
        f,
        grad: g,
        iterations,
        converged,
        grad_inf_norm,
    })
}

/// Infinity norm of `P(x - g) - x`: zero exactly at a box-constrained
/// stationary point.
fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &BoxBounds) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let moved = (x[i] - g[i]).clamp(bounds.lo[i], bounds.hi[i]);
        worst = worst.max((moved - x[i]).abs());
    }
    worst
}

fn two_loop_direction(g: &[f64], s_hist: &VecDeque<Vec<f64>>, y_hist: &VecDeque<Vec<f64>>) -> Vec<f64> {
    let mut q = g.to_vec();
    if s_hist.is_empty() {
        return q.iter().map(|v| -v).collect();
    }
    let m = s_hist.len();
    let mut alpha = vec![0.0; m];
    let mut rho = vec![0.0; m];
    for i in (0..m).rev() {
        rho[i] = 1.0 / dot(&y_hist[i], &s_hist[i]);
        alpha[i] = rho[i] * dot(&s_hist[i], &q);
        for j in 0..q.len() {
            q[j] -= alpha[i] * y_hist[i][j];
        }
    }
    let last = m - 1;
    let gamma = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for i in 0..m {
        let beta = rho[i] * dot(&y_hist[i], &q);
        for j in 0..q.len() {
            q[j] += (alpha[i] - beta) * s_hist[i][j];
        }
    }
    q.iter().map(|v| -v).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unbounded(n: usize) -> BoxBounds {
        BoxBounds {
            lo: vec![-1e10; n],
            hi: vec![1e10; n],
        }
    }

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| {
            let v = (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
            Some((v, vec![2.0 * (x[0] - 3.0), 4.0 * (x[1] + 1.0)]))
        };
        let r = minimize_bounded(f, &[0.0, 0.0], &unbounded(2), &MinimizeOptions::default())
            .unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-6);
        assert!((r.x[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_converges() {
        let f = |x: &[f64]| {
            let (a, b) = (1.0, 100.0);
            let v = (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2);
            let g = vec![
                -2.0 * (a - x[0]) - 4.0 * b * x[0] * (x[1] - x[0] * x[0]),
                2.0 * b * (x[1] - x[0] * x[0]),
            ];
            Some((v, g))
        };
        let r = minimize_bounded(
            f,
            &[-1.2, 1.0],
            &unbounded(2),
            &MinimizeOptions {
                max_iters: 500,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!((r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn active_bound_is_respected() {
        // Unconstrained optimum at x = 3, box caps it at 2.
        let f = |x: &[f64]| Some(((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]));
        let bounds = BoxBounds {
            lo: vec![-2.0],
            hi: vec![2.0],
        };
        let r = minimize_bounded(f, &[0.0], &bounds, &MinimizeOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.x[0], 2.0);
    }

    #[test]
    fn objective_never_increases_from_start() {
        let f = |x: &[f64]| {
            let v = x[0].powi(4) - 2.0 * x[0] * x[0] + x[1] * x[1];
            Some((v, vec![4.0 * x[0].powi(3) - 4.0 * x[0], 2.0 * x[1]]))
        };
        let start = [0.3, 0.7];
        let f0 = f(&start).unwrap().0;
        let r = minimize_bounded(f, &start, &unbounded(2), &MinimizeOptions::default()).unwrap();
        assert!(r.f <= f0 + 1e-12);
    }

    #[test]
    fn failing_start_returns_none() {
        let f = |_: &[f64]| -> Option<(f64, Vec<f64>)> { None };
        assert!(minimize_bounded(f, &[0.0], &unbounded(1), &MinimizeOptions::default()).is_none());
    }

    #[test]
    fn deterministic_iterates() {
        let f = |x: &[f64]| {
            let v = (x[0] - 0.5).powi(2) * (x[1] + 2.0).powi(2) + x[0].powi(2) + x[1].powi(2);
            let g = vec![
                2.0 * (x[0] - 0.5) * (x[1] + 2.0).powi(2) + 2.0 * x[0],
                2.0 * (x[0] - 0.5).powi(2) * (x[1] + 2.0) + 2.0 * x[1],
            ];
            Some((v, g))
        };
        let a = minimize_bounded(f, &[2.0, 2.0], &unbounded(2), &MinimizeOptions::default())
            .unwrap();
        let b = minimize_bounded(f, &[2.0, 2.0], &unbounded(2), &MinimizeOptions::default())
            .unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.f, b.f);
    }
}
