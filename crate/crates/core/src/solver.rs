//! Box-constrained smooth minimizer.
//!
//! Projected gradient descent with limited-memory quasi-Newton scaling on
//! the free variables and Armijo backtracking along the projected path.
//! Every iterate lies inside the box and accepted iterates never increase
//! the objective.

use crate::error::Error;
use std::collections::VecDeque;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Tolerance on `||P(u - grad) - u||_inf`.
    pub gtol: f64,
    pub max_iter: usize,
    /// Number of stored correction pairs.
    pub memory: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gtol: 1e-6,
            max_iter: 200,
            memory: 8,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub objective: f64,
    pub iterations: usize,
    pub projected_grad_norm: f64,
    pub converged: bool,
    pub wall_time: Duration,
    /// Objective at the start point and after every accepted step.
    pub trace: Vec<f64>,
}

#[inline]
fn project(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

fn projected_grad_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&xi, &gi), (&l, &h))| (project(xi - gi, l, h) - xi).abs())
        .fold(0.0, f64::max)
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
}

fn masked_dot(a: &[f64], b: &[f64], free: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(free)
        .filter(|(_, &f)| f)
        .map(|((x, y), _)| x * y)
        .sum()
}

/// Two-loop recursion on the free subspace; returns `-H g` (zero on bound
/// variables).
fn quasi_newton_direction(g: &[f64], free: &[bool], mem: &VecDeque<Pair>) -> Vec<f64> {
    let mut q: Vec<f64> = g
        .iter()
        .zip(free)
        .map(|(&gi, &f)| if f { gi } else { 0.0 })
        .collect();
    let mut alphas = Vec::with_capacity(mem.len());
    let mut rhos = Vec::with_capacity(mem.len());
    for pair in mem.iter().rev() {
        let sy = masked_dot(&pair.s, &pair.y, free);
        let rho = if sy > 0.0 { 1.0 / sy } else { 0.0 };
        let a = rho * masked_dot(&pair.s, &q, free);
        for ((qi, yi), f) in q.iter_mut().zip(&pair.y).zip(free) {
            if *f {
                *qi -= a * yi;
            }
        }
        alphas.push(a);
        rhos.push(rho);
    }
    let gamma = mem
        .back()
        .map(|p| {
            let sy = masked_dot(&p.s, &p.y, free);
            let yy = masked_dot(&p.y, &p.y, free);
            if sy > 0.0 && yy > 0.0 {
                sy / yy
            } else {
                1.0
            }
        })
        .unwrap_or(1.0);
    q.iter_mut().for_each(|v| *v *= gamma);
    for ((pair, a), rho) in mem.iter().zip(alphas.iter().rev()).zip(rhos.iter().rev()) {
        let b = rho * masked_dot(&pair.y, &q, free);
        for ((qi, si), f) in q.iter_mut().zip(&pair.s).zip(free) {
            if *f {
                *qi += (a - b) * si;
            }
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `f` over `lo <= u <= hi` from `u0`. `f` returns the objective
/// and writes its gradient into the second argument.
pub fn minimize_box<F>(
    mut f: F,
    lo: &[f64],
    hi: &[f64],
    u0: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveReport), Error>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = u0.len();
    assert_eq!(lo.len(), n);
    assert_eq!(hi.len(), n);
    let start = Instant::now();
    let mut x: Vec<f64> = u0
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(&u, (&l, &h))| project(u, l, h))
        .collect();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    check_finite(fx, &g, &x)?;
    let mut trace = vec![fx];
    let mut mem: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;
    let mut pg = projected_grad_norm(&x, &g, lo, hi);
    let mut converged = pg <= opts.gtol;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();

        let mut steepest = mem.is_empty();
        let mut accepted = None;
        loop {
            let d: Vec<f64> = if steepest {
                g.iter()
                    .zip(&free)
                    .map(|(&gi, &fr)| if fr { -gi } else { 0.0 })
                    .collect()
            } else {
                quasi_newton_direction(&g, &free, &mem)
            };
            if !steepest && masked_dot(&d, &g, &free) >= 0.0 {
                steepest = true;
                mem.clear();
                continue;
            }
            // First steepest step is scaled so the largest move is at most 1.
            let mut alpha = if steepest {
                let gmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if gmax > 1.0 {
                    1.0 / gmax
                } else {
                    1.0
                }
            } else {
                1.0
            };
            for _ in 0..opts.max_backtracks {
                let mut moved = false;
                let mut slope = 0.0;
                for i in 0..n {
                    x_new[i] = project(x[i] + alpha * d[i], lo[i], hi[i]);
                    let dx = x_new[i] - x[i];
                    moved |= dx != 0.0;
                    slope += g[i] * dx;
                }
                if !moved {
                    break;
                }
                if slope < 0.0 {
                    let f_new = f(&x_new, &mut g_new);
                    check_finite(f_new, &g_new, &x_new)?;
                    if f_new <= fx + opts.armijo * slope {
                        accepted = Some(f_new);
                        break;
                    }
                }
                alpha *= opts.backtrack;
            }
            if accepted.is_some() || steepest {
                break;
            }
            // quasi-Newton step failed: restart from steepest descent
            steepest = true;
            mem.clear();
        }

        let Some(f_new) = accepted else {
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > 1e-12 * yy.max(f64::MIN_POSITIVE) && sy > 0.0 {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back(Pair { s, y });
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        trace.push(fx);
        pg = projected_grad_norm(&x, &g, lo, hi);
        converged = pg <= opts.gtol;
    }

    Ok((
        x,
        SolveReport {
            objective: fx,
            iterations,
            projected_grad_norm: pg,
            converged,
            wall_time: start.elapsed(),
            trace,
        },
    ))
}

fn check_finite(f: f64, g: &[f64], x: &[f64]) -> Result<(), Error> {
    if f.is_finite() && g.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::SolverAbort(format!(
            "non-finite objective {f} or gradient at u = {x:?}"
        )))
    }
}

/// Central-difference gradient with step `h`. Test oracle.
pub fn fd_gradient<F>(mut f: F, u: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = u.to_vec();
    (0..u.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let fp = f(&x);
            x[i] = orig - h;
            let fm = f(&x);
            x[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::smax;

    fn quad(c: Vec<f64>) -> impl FnMut(&[f64], &mut [f64]) -> f64 {
        move |u: &[f64], g: &mut [f64]| {
            let mut f = 0.0;
            for i in 0..u.len() {
                g[i] = 2.0 * (u[i] - c[i]);
                f += (u[i] - c[i]).powi(2);
            }
            f
        }
    }

    fn rosenbrock(u: &[f64], g: &mut [f64]) -> f64 {
        let (x, y) = (u[0], u[1]);
        g[0] = -2.0 * (1.0 - x) - 400.0 * x * (y - x * x);
        g[1] = 200.0 * (y - x * x);
        (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2)
    }

    fn is_monotone(trace: &[f64]) -> bool {
        trace.windows(2).all(|w| w[1] <= w[0])
    }

    #[test]
    fn interior_quadratic() {
        let c = vec![0.3, -0.7, 1.1];
        let (u, rep) = minimize_box(
            quad(c.clone()),
            &[-2.0; 3],
            &[2.0; 3],
            &[0.0; 3],
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(rep.converged);
        for (a, b) in u.iter().zip(&c) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(is_monotone(&rep.trace));
    }

    #[test]
    fn clamped_quadratic() {
        let c = vec![3.0, -0.5, -4.0];
        let (u, rep) = minimize_box(
            quad(c),
            &[-2.0; 3],
            &[2.0; 3],
            &[0.0; 3],
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(u[0], 2.0);
        assert!((u[1] + 0.5).abs() < 1e-8);
        assert_eq!(u[2], -2.0);
        assert!(rep.converged);
    }

    #[test]
    fn rosenbrock_on_box() {
        let (u, rep) = minimize_box(
            rosenbrock,
            &[-2.0; 2],
            &[2.0; 2],
            &[-1.2, 1.0],
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(
            (u[0] - 1.0).abs() < 1e-4 && (u[1] - 1.0).abs() < 1e-4,
            "{u:?} {rep:?}"
        );
        assert!(is_monotone(&rep.trace));
    }

    #[test]
    fn start_outside_box_is_projected() {
        let (u, rep) = minimize_box(
            quad(vec![0.0, 0.0]),
            &[1.0; 2],
            &[2.0; 2],
            &[5.0, -5.0],
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(u, vec![1.0, 1.0]);
        assert!(rep.objective <= 2.0);
    }

    #[test]
    fn non_finite_objective_aborts() {
        let r = minimize_box(
            |_: &[f64], g: &mut [f64]| {
                g[0] = 0.0;
                f64::NAN
            },
            &[-1.0],
            &[1.0],
            &[0.0],
            &SolverOptions::default(),
        );
        assert!(matches!(r, Err(Error::SolverAbort(_))));
    }

    #[test]
    fn deterministic() {
        let a = minimize_box(
            rosenbrock,
            &[-2.0; 2],
            &[2.0; 2],
            &[-1.2, 1.0],
            &SolverOptions::default(),
        )
        .unwrap();
        let b = minimize_box(
            rosenbrock,
            &[-2.0; 2],
            &[2.0; 2],
            &[-1.2, 1.0],
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.trace, b.1.trace);
    }

    #[test]
    fn fd_examples() {
        let g = fd_gradient(|u| u[0] * u[0] + u[1] * u[1], &[1.0, 2.0], 1e-5);
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
        let z = fd_gradient(|_| 3.0, &[1.0, 2.0], 1e-5);
        assert_eq!(z, vec![0.0, 0.0]);
        // smax(a * u^2 - 1) chain
        let u0 = 0.9;
        let fd = fd_gradient(|u| smax(u[0] * u[0] - 1.0, 30.0), &[u0], 1e-5)[0];
        let t = 30.0 * (u0 * u0 - 1.0);
        let analytic = 2.0 * u0 / (1.0 + (-t).exp());
        assert!((fd - analytic).abs() < 1e-8);
    }
}
