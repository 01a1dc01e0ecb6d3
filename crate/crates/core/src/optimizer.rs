//! Limited-memory BFGS with Armijo backtracking.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A differentiable objective. `evaluate` writes the gradient into `grad`
/// and returns the value.
pub trait Objective {
    fn dimension(&self) -> usize;

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Human-readable name of coordinate `index`, used in diagnostics.
    fn coordinate_name(&self, index: usize) -> String {
        format!("x[{index}]")
    }
}

/// Adapts a closure `(x, grad) -> value` into an [`Objective`].
pub struct FnObjective<F> {
    dimension: usize,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    pub fn new(dimension: usize, f: F) -> Self {
        Self { dimension, f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(x, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LineSearch {
    #[default]
    BacktrackingArmijo,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimizerConfig {
    /// Number of curvature pairs kept. Zero gives steepest descent.
    pub memory: usize,
    pub grad_tolerance: f64,
    pub max_iterations: usize,
    pub line_search: LineSearch,
    /// Sufficient-decrease constant.
    pub armijo_c: f64,
    /// Step shrink factor per backtracking trial.
    pub shrink: f64,
    pub max_line_search_steps: usize,
    /// Cap on the infinity-norm of the first trial displacement of each line search.
    pub max_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            grad_tolerance: 1e-5,
            max_iterations: 500,
            line_search: LineSearch::BacktrackingArmijo,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_line_search_steps: 60,
            max_step: 10.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tolerance > 0.0) {
            return Err(Error::InvalidArgument("grad_tolerance must be positive".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidArgument("shrink must lie in (0, 1)".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidArgument("max_step must be positive".into()));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::InvalidArgument("armijo_c must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn check_finite<F: Objective + ?Sized>(f: &F, value: f64, grad: &[f64]) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite {
            what: "objective value",
            index: 0,
            name: String::from("value"),
        });
    }
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: "gradient",
            index,
            name: f.coordinate_name(index),
        });
    }
    Ok(())
}

struct History {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    capacity: usize,
}

impl History {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        if self.capacity == 0 {
            return;
        }
        let sy = dot(&s, &y);
        // Skip pairs that would break positive definiteness.
        if sy <= 1e-12 * libm::sqrt(dot(&s, &s) * dot(&y, &y)) {
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion: returns `-H g`.
    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let Some((s_last, y_last, _)) = self.pairs.back() else {
            let norm = libm::sqrt(dot(grad, grad));
            let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
            return q.iter().map(|g| -g * scale).collect();
        };
        let mut alphas = vec![0.0; self.pairs.len()];
        for (idx, (s, y, rho)) in self.pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &q);
            alphas[idx] = a;
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
        }
        let gamma = dot(s_last, y_last) / dot(y_last, y_last);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for (idx, (s, y, rho)) in self.pairs.iter().enumerate() {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (alphas[idx] - b) * si;
            }
        }
        for qi in q.iter_mut() {
            *qi = -*qi;
        }
        q
    }
}

/// Minimises `f` from `x0`. The returned value never exceeds `f(x0)`.
/// `converged` is true exactly when the gradient infinity-norm dropped to
/// `grad_tolerance` within `max_iterations` iterations.
pub fn minimize<F: Objective + ?Sized>(f: &F, x0: &[f64], cfg: &OptimizerConfig) -> Result<Minimum> {
    cfg.validate()?;
    let n = f.dimension();
    if x0.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut value = f.evaluate(&x, &mut grad);
    check_finite(f, value, &grad)?;

    let mut history = History {
        pairs: VecDeque::with_capacity(cfg.memory),
        capacity: cfg.memory,
    };
    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];

    for iteration in 0..cfg.max_iterations {
        if inf_norm(&grad) <= cfg.grad_tolerance {
            return Ok(Minimum {
                x,
                value,
                iterations: iteration,
                converged: true,
            });
        }

        let mut accepted = false;
        // First attempt uses the quasi-Newton direction; on failure, retry once
        // from steepest descent with the history cleared.
        for attempt in 0..2 {
            if attempt == 1 {
                if history.pairs.is_empty() {
                    break;
                }
                history.pairs.clear();
            }
            let mut dir = history.direction(&grad);
            let mut slope = dot(&grad, &dir);
            if !(slope < 0.0) {
                history.pairs.clear();
                dir = history.direction(&grad);
                slope = dot(&grad, &dir);
            }
            let dir_norm = inf_norm(&dir);
            let mut step = if dir_norm > cfg.max_step { cfg.max_step / dir_norm } else { 1.0 };
            for _ in 0..cfg.max_line_search_steps {
                for ((t, xi), di) in trial.iter_mut().zip(&x).zip(&dir) {
                    *t = xi + step * di;
                }
                let trial_value = f.evaluate(&trial, &mut trial_grad);
                check_finite(f, trial_value, &trial_grad)?;
                if trial_value <= value + cfg.armijo_c * step * slope {
                    let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = trial_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                    history.push(s, y);
                    x.copy_from_slice(&trial);
                    grad.copy_from_slice(&trial_grad);
                    value = trial_value;
                    accepted = true;
                    break;
                }
                step *= cfg.shrink;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            // No descent step is representable; report where we are.
            return Ok(Minimum {
                converged: inf_norm(&grad) <= cfg.grad_tolerance,
                x,
                value,
                iterations: iteration,
            });
        }
    }
    let converged = inf_norm(&grad) <= cfg.grad_tolerance;
    Ok(Minimum {
        x,
        value,
        iterations: cfg.max_iterations,
        converged,
    })
}
