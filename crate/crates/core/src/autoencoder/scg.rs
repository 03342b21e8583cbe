//! Scaled conjugate gradient minimization (Møller, 1993).
//!
//! A conjugate-gradient method that replaces the line search with a
//! Levenberg-Marquardt style scale `lambda` on a finite-difference estimate of
//! the Hessian-vector product.

use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::dot;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScgOptions {
    pub max_iters: usize,
    /// Step used for the second-order information, divided by `|p|`.
    pub sigma: f64,
    pub lambda_init: f64,
    /// Stop once `|grad| < grad_tol`.
    pub grad_tol: f64,
    /// Stop once the last `cost_window` accepted steps lowered the cost by less than this.
    pub cost_tol: f64,
    pub cost_window: usize,
    /// Consecutive non-finite evaluations tolerated before giving up.
    pub max_failures: usize,
}

impl Default for ScgOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            sigma: 1e-5,
            lambda_init: 1e-7,
            grad_tol: 1e-8,
            cost_tol: 1e-12,
            cost_window: 10,
            max_failures: 50,
        }
    }
}

impl ScgOptions {
    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    GradientTolerance,
    CostStalled,
    /// `lambda` grew without bound: no step along any direction lowers the cost.
    ScaleOverflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScgOutcome {
    pub params: Vec<f64>,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    /// Cost of the current point after every iteration; never increases.
    pub history: Vec<f64>,
    pub stop: StopReason,
}

const LAMBDA_MAX: f64 = 1e100;

/// Minimizes `objective`, which returns the cost at `w` and writes the
/// gradient into its second argument. Non-finite costs (or `None`) count as
/// failed evaluations.
pub fn scg_minimize<F>(mut objective: F, init: Vec<f64>, opts: &ScgOptions) -> Result<ScgOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Option<f64>,
{
    let n = init.len();
    let mut w = init;
    let mut g = vec![0.0; n];
    let mut f = match objective(&w, &mut g) {
        Some(v) if v.is_finite() && g.iter().all(|x| x.is_finite()) => v,
        _ => return Err(Error::NonFiniteObjective),
    };
    let initial_cost = f;
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut p = r.clone();
    let outcome = |w: Vec<f64>, f: f64, iterations: usize, history: Vec<f64>, stop| ScgOutcome {
        params: w,
        cost: f,
        initial_cost,
        iterations,
        history,
        stop,
    };
    if libm::sqrt(dot(&r, &r)) < opts.grad_tol || n == 0 {
        return Ok(outcome(w, f, 0, Vec::new(), StopReason::GradientTolerance));
    }

    let mut lambda = opts.lambda_init;
    let mut lambda_bar = 0.0;
    let mut success = true;
    let mut delta = 0.0;
    let mut failures = 0usize;
    let mut accepted_costs = vec![f];
    let mut history = Vec::new();
    let mut successes_since_restart = 0usize;

    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];

    for k in 1..=opts.max_iters {
        let pp = dot(&p, &p);
        if success {
            // s = (E'(w + sigma_k p) - E'(w)) / sigma_k
            let mut sigma_k = opts.sigma / libm::sqrt(pp);
            let mut attempts = 0;
            loop {
                for ((t, wi), pi) in trial.iter_mut().zip(&w).zip(&p) {
                    *t = wi + sigma_k * pi;
                }
                let ok = objective(&trial, &mut g_trial).is_some_and(f64::is_finite)
                    && g_trial.iter().all(|x| x.is_finite());
                if ok {
                    break;
                }
                attempts += 1;
                if attempts > opts.max_failures {
                    return Err(Error::OptimizerStalled { attempts });
                }
                sigma_k *= 0.1;
            }
            delta = p
                .iter()
                .zip(g_trial.iter().zip(&g))
                .map(|(pi, (gt, g0))| pi * (gt - g0) / sigma_k)
                .sum();
        }

        // scale the Hessian estimate and force it positive definite
        delta += (lambda - lambda_bar) * pp;
        if delta <= 0.0 {
            lambda_bar = 2.0 * (lambda - delta / pp);
            delta = -delta + lambda * pp;
            lambda = lambda_bar;
        }

        let mu = dot(&p, &r);
        let alpha = mu / delta;
        for ((t, wi), pi) in trial.iter_mut().zip(&w).zip(&p) {
            *t = wi + alpha * pi;
        }
        let f_new = objective(&trial, &mut g_trial)
            .filter(|v| v.is_finite() && g_trial.iter().all(|x| x.is_finite()));

        let comparison = match f_new {
            Some(fn_) => 2.0 * delta * (f - fn_) / (mu * mu),
            None => {
                failures += 1;
                if failures > opts.max_failures {
                    return Err(Error::OptimizerStalled { attempts: failures });
                }
                lambda_bar = lambda;
                lambda *= 4.0;
                success = false;
                history.push(f);
                continue;
            }
        };
        failures = 0;

        if comparison >= 0.0 {
            let f_new = f_new.expect("checked above");
            core::mem::swap(&mut w, &mut trial);
            f = f_new;
            let r_old = core::mem::replace(&mut r, g_trial.iter().map(|v| -v).collect());
            core::mem::swap(&mut g, &mut g_trial);
            lambda_bar = 0.0;
            success = true;
            successes_since_restart += 1;
            if successes_since_restart % n == 0 {
                p.copy_from_slice(&r);
            } else {
                let beta = (dot(&r, &r) - dot(&r, &r_old)) / mu;
                for (pi, ri) in p.iter_mut().zip(&r) {
                    *pi = ri + beta * *pi;
                }
            }
            if comparison >= 0.75 {
                lambda *= 0.25;
            }
            accepted_costs.push(f);
        } else {
            lambda_bar = lambda;
            success = false;
        }
        if comparison < 0.25 {
            lambda += delta * (1.0 - comparison) / pp;
        }
        history.push(f);

        if libm::sqrt(dot(&r, &r)) < opts.grad_tol {
            return Ok(outcome(w, f, k, history, StopReason::GradientTolerance));
        }
        let m = accepted_costs.len();
        if success && m > opts.cost_window && accepted_costs[m - 1 - opts.cost_window] - f < opts.cost_tol {
            return Ok(outcome(w, f, k, history, StopReason::CostStalled));
        }
        if !(lambda < LAMBDA_MAX) {
            return Ok(outcome(w, f, k, history, StopReason::ScaleOverflow));
        }
        if dot(&p, &p) == 0.0 || dot(&p, &r) <= 0.0 {
            // lost the descent direction; restart along steepest descent
            p.copy_from_slice(&r);
            successes_since_restart = 0;
        }
    }
    let iters = opts.max_iters;
    Ok(outcome(w, f, iters, history, StopReason::MaxIterations))
}
