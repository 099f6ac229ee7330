//! Projected limited-memory BFGS for box-constrained convex minimization.
//!
//! Variables sitting on a bound with the gradient pushing outward are held
//! fixed for the iteration; the two-loop recursion runs on the remaining
//! free variables and the step is projected back onto the box.
//!
//! A step from `x` to `x + s` is accepted when it either satisfies the
//! Armijo condition or, for convex objectives, the end-point directional
//! derivative `g(x + s)^T s` is still nonpositive. The latter certifies
//! `f(x + s) <= f(x)` without comparing function values, which lose all
//! resolution close to the minimizer.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct Options {
    pub max_iterations: usize,
    /// Tolerance on `||x - P(x - g)||_inf`.
    pub gradient_tolerance: f64,
    pub memory: usize,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient: f64,
    /// Objective value of every accepted iterate, starting with `x0`.
    pub history: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Iterations without a new best value or projected gradient before giving up.
const STALL_LIMIT: usize = 25;

pub fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.max(l).min(u);
    }
}

/// `||x - P(x - g)||_inf`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut norm: f64 = 0.0;
    for i in 0..x.len() {
        let target = (x[i] - g[i]).max(lower[i]).min(upper[i]);
        norm = norm.max((x[i] - target).abs());
    }
    norm
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn masked_dot(a: &[f64], b: &[f64], free: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(free)
        .filter(|(_, f)| **f)
        .map(|((x, y), _)| x * y)
        .sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
}

/// `-H g` on the free variables, zero elsewhere.
fn direction(g: &[f64], free: &[bool], memory: &VecDeque<Pair>) -> Vec<f64> {
    let mut q: Vec<f64> = g
        .iter()
        .zip(free)
        .map(|(v, f)| if *f { *v } else { 0.0 })
        .collect();
    let mut alphas = Vec::with_capacity(memory.len());
    let mut gamma = None;
    for p in memory.iter().rev() {
        let sy = masked_dot(&p.s, &p.y, free);
        if sy <= 0.0 {
            alphas.push(None);
            continue;
        }
        if gamma.is_none() {
            gamma = Some(sy / masked_dot(&p.y, &p.y, free));
        }
        let a = masked_dot(&p.s, &q, free) / sy;
        for i in 0..q.len() {
            if free[i] {
                q[i] -= a * p.y[i];
            }
        }
        alphas.push(Some((a, sy)));
    }
    let gamma = gamma.unwrap_or(1.0);
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for (p, a) in memory.iter().zip(alphas.into_iter().rev()) {
        if let Some((a, sy)) = a {
            let b = masked_dot(&p.y, &q, free) / sy;
            for i in 0..q.len() {
                if free[i] {
                    q[i] += (a - b) * p.s[i];
                }
            }
        }
    }
    q.iter().map(|v| -v).collect()
}

struct Trial {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Backtracking search along the projected path `P(x + t d)`.
#[allow(clippy::too_many_arguments)]
fn line_search<E, F>(
    eval: &mut F,
    x: &[f64],
    f: f64,
    g: &[f64],
    d: &[f64],
    t0: f64,
    lower: &[f64],
    upper: &[f64],
) -> Result<Option<Trial>, E>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    let mut t = t0;
    for _ in 0..MAX_BACKTRACKS {
        let mut xn: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        project(&mut xn, lower, upper);
        let s: Vec<f64> = xn.iter().zip(x).map(|(a, b)| a - b).collect();
        // Coordinates near a tiny bound still move by relatively large steps.
        if s.iter().all(|v| *v == 0.0) {
            return Ok(None);
        }
        let slope0 = dot(g, &s);
        if slope0 >= 0.0 {
            t *= 0.5;
            continue;
        }
        let (fn_, gn) = eval(&xn)?;
        if fn_.is_finite() {
            let slope1 = dot(&gn, &s);
            if fn_ <= f + ARMIJO * slope0 || slope1 <= 0.0 {
                return Ok(Some(Trial {
                    x: xn,
                    f: fn_,
                    g: gn,
                }));
            }
            // Shorter of the secant step on the directional derivative and
            // the quadratic interpolation of the values, safeguarded.
            let secant = slope0 / (slope0 - slope1);
            let quadratic = -0.5 * slope0 / (fn_ - f - slope0);
            let ratio = if quadratic > 0.0 {
                secant.min(quadratic)
            } else {
                secant
            };
            t *= ratio.clamp(0.1, 0.9);
        } else {
            t *= 0.1;
        }
    }
    Ok(None)
}

/// Minimizes a convex function over `lower <= x <= upper`.
///
/// `eval` returns the value and a (sub)gradient. Errors from `eval` abort
/// the minimization.
pub fn minimize<E, F>(
    mut eval: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &Options,
) -> Result<Outcome, E>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut f, mut g) = eval(&x)?;
    let mut history = vec![f];
    let mut memory: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let mut pg = projected_gradient_norm(&x, &g, lower, upper);
    let mut converged = pg <= opts.gradient_tolerance;
    let (mut best_f, mut best_pg, mut stalled) = (f, pg, 0);

    while !converged && iterations < opts.max_iterations {
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let steepest: Vec<f64> = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
        let mut d = if memory.is_empty() {
            steepest.clone()
        } else {
            direction(&g, &free, &memory)
        };
        if !(dot(&d, &g) < 0.0) || d.iter().any(|v| !v.is_finite()) {
            memory.clear();
            d = steepest.clone();
        }
        let t0 = if memory.is_empty() {
            (inf_norm(&x).max(1.0) / inf_norm(&d)).min(1.0)
        } else {
            1.0
        };
        let mut trial = line_search(&mut eval, &x, f, &g, &d, t0, lower, upper)?;
        if trial.is_none() && !memory.is_empty() {
            memory.clear();
            let t0 = (inf_norm(&x).max(1.0) / inf_norm(&steepest)).min(1.0);
            trial = line_search(&mut eval, &x, f, &g, &steepest, t0, lower, upper)?;
        }
        let Some(trial) = trial else {
            break;
        };
        iterations += 1;
        let s: Vec<f64> = trial.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = trial.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back(Pair { s, y });
        }
        x = trial.x;
        f = trial.f;
        g = trial.g;
        history.push(f);
        pg = projected_gradient_norm(&x, &g, lower, upper);
        converged = pg <= opts.gradient_tolerance;
        // Near a kink that rounding cannot resolve, iterates cycle between
        // neighbouring floats without improving anything.
        if f < best_f || pg < best_pg {
            best_f = best_f.min(f);
            best_pg = best_pg.min(pg);
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                break;
            }
        }
    }

    Ok(Outcome {
        x,
        f,
        grad: g,
        iterations,
        converged,
        projected_gradient: pg,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn opts(tol: f64) -> Options {
        Options {
            max_iterations: 500,
            gradient_tolerance: tol,
            memory: 10,
        }
    }

    #[test]
    fn unconstrained_quadratic() {
        let diag = [1.0, 10.0, 100.0, 1000.0];
        let eval = |x: &[f64]| -> Result<(f64, Vec<f64>), Infallible> {
            let f = x
                .iter()
                .zip(&diag)
                .map(|(v, d)| 0.5 * d * (v - 1.0).powi(2))
                .sum();
            let g = x.iter().zip(&diag).map(|(v, d)| d * (v - 1.0)).collect();
            Ok((f, g))
        };
        let inf = vec![f64::INFINITY; 4];
        let ninf = vec![f64::NEG_INFINITY; 4];
        let out = minimize(eval, &[0.0; 4], &ninf, &inf, &opts(1e-10)).unwrap();
        assert!(out.converged);
        for v in &out.x {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn active_lower_bounds_are_exact() {
        // Minimum at (-1, 2) with x >= 0: solution (0, 2).
        let eval = |x: &[f64]| -> Result<(f64, Vec<f64>), Infallible> {
            let f = (x[0] + 1.0).powi(2) + 3.0 * (x[1] - 2.0).powi(2) + x[0] * x[1];
            let g = vec![2.0 * (x[0] + 1.0) + x[1], 6.0 * (x[1] - 2.0) + x[0]];
            Ok((f, g))
        };
        let out = minimize(
            eval,
            &[5.0, 5.0],
            &[0.0, 0.0],
            &[f64::INFINITY; 2],
            &opts(1e-12),
        )
        .unwrap();
        assert!(out.converged);
        assert_eq!(out.x[0], 0.0);
        assert!((out.x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rosenbrock_in_box() {
        let eval = |x: &[f64]| -> Result<(f64, Vec<f64>), Infallible> {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Ok((f, g))
        };
        let out = minimize(eval, &[-1.2, 1.0], &[-2.0, -2.0], &[0.5, 2.0], &opts(1e-9)).unwrap();
        assert!(out.converged);
        assert_eq!(out.x[0], 0.5);
        assert!((out.x[1] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn accepted_values_never_increase_on_a_smooth_problem() {
        let eval = |x: &[f64]| -> Result<(f64, Vec<f64>), Infallible> {
            let f = x
                .iter()
                .enumerate()
                .map(|(i, v)| (v - i as f64).powi(4) + v * v)
                .sum();
            let g = x
                .iter()
                .enumerate()
                .map(|(i, v)| 4.0 * (v - i as f64).powi(3) + 2.0 * v)
                .collect();
            Ok((f, g))
        };
        let out = minimize(eval, &[3.0; 6], &[0.5; 6], &[f64::INFINITY; 6], &opts(1e-8)).unwrap();
        assert!(out.converged);
        for w in out.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15 * w[0].abs());
        }
    }

    #[test]
    fn starts_converged_at_stationary_bound() {
        let mut calls = 0;
        let eval = |x: &[f64]| -> Result<(f64, Vec<f64>), Infallible> {
            calls += 1;
            Ok((x[0], vec![1.0]))
        };
        let out = minimize(eval, &[0.0], &[0.0], &[f64::INFINITY], &opts(1e-8)).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(calls, 1);
    }

    #[test]
    fn stops_early_when_cycling_at_a_kink() {
        let c = 0.1 + 1e-17;
        let eval = |x: &[f64]| -> Result<(f64, Vec<f64>), Infallible> {
            let d = x[0] - c;
            let slope = if d > 0.0 { 1.0 } else { -1e-3 };
            Ok((slope * d, vec![slope]))
        };
        let out = minimize(eval, &[2.0], &[0.0], &[f64::INFINITY], &opts(1e-6)).unwrap();
        assert!(!out.converged);
        assert!(out.iterations < 200, "{}", out.iterations);
        assert!((out.x[0] - c).abs() < 1e-9, "{}", out.x[0]);
    }

    #[test]
    fn errors_propagate() {
        let eval = |_: &[f64]| -> Result<(f64, Vec<f64>), &'static str> { Err("boom") };
        let err = minimize(eval, &[0.0], &[0.0], &[1.0], &opts(1e-8)).unwrap_err();
        assert_eq!(err, "boom");
    }
}
