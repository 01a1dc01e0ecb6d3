use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::ResponseMatrix;
use crate::error::{Error, Result};
use crate::link::CorrectnessLink;
use crate::math::{self, Matrix};
use crate::optimizer::{minimize, Objective, OptimizerConfig};

use super::{normalize_log, TruthEstimate, EM_MAX_ROUNDS, EM_TOLERANCE};

const LINK: CorrectnessLink = CorrectnessLink::Glad;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GladPriors {
    /// Symmetric Dirichlet pseudo-count on the class prior.
    pub gamma: f64,
    pub mu_e: f64,
    pub sigma2_e: f64,
    pub mu_d: f64,
    pub sigma2_d: f64,
    pub max_rounds: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for GladPriors {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            mu_e: 1.0,
            sigma2_e: 1.0,
            mu_d: 0.0,
            sigma2_d: 1.0,
            max_rounds: EM_MAX_ROUNDS,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl GladPriors {
    pub fn validate(&self) -> Result<()> {
        let positive = [("gamma", self.gamma), ("sigma2_e", self.sigma2_e), ("sigma2_d", self.sigma2_d)];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite")));
            }
        }
        if !(self.mu_e.is_finite() && self.mu_d.is_finite()) {
            return Err(Error::InvalidArgument("prior means must be finite".into()));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidArgument("max_rounds must be positive".into()));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GladParams {
    pub e: Vec<f64>,
    pub d: Vec<f64>,
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl GladParams {
    /// `P(r = k | l)` for worker `i` on question `j`.
    pub fn correct_prob(&self, i: usize, j: usize) -> f64 {
        LINK.prob(self.e[i], self.d[j])
    }
}

#[derive(Debug, Clone)]
pub struct GladFit {
    pub params: GladParams,
    pub estimate: TruthEstimate,
    /// Log posterior (up to a constant) before each M-step and after the last.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// EM for GLAD: the E-step computes `P(l_j)` from `theta` and the
/// `sigmoid(e / exp(d))` kernel, the M-step runs L-BFGS on `(e, d)` under
/// Normal priors and resets `theta` to the `gamma`-smoothed expected counts.
pub fn glad_fit(data: &ResponseMatrix, priors: &GladPriors) -> Result<GladFit> {
    priors.validate()?;
    let (n_workers, n_questions, k_count) = (data.num_workers(), data.num_questions(), data.num_options());
    let mut params = GladParams {
        e: vec![priors.mu_e; n_workers],
        d: vec![priors.mu_d; n_questions],
        theta: vec![1.0 / k_count as f64; k_count],
        gamma: vec![priors.gamma; k_count],
    };
    let mut trace = Vec::new();
    let mut converged = false;
    let mut posterior = Matrix::zeros(n_questions, k_count);

    for round in 0..=priors.max_rounds {
        let value = e_step(data, &params, priors, &mut posterior);
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: "log posterior",
                index: round,
                name: String::from("glad"),
            });
        }
        let improved = trace.last().map(|&prev| value - prev);
        trace.push(value);
        if improved.is_some_and(|gain| gain < EM_TOLERANCE) {
            converged = true;
            break;
        }
        if round == priors.max_rounds {
            break;
        }
        m_step(data, &mut params, priors, &posterior).map_err(|e| Error::Optimizer {
            round,
            source: Box::new(e),
        })?;
    }

    Ok(GladFit {
        params,
        estimate: TruthEstimate::from_posterior(posterior),
        trace,
        converged,
    })
}

fn e_step(data: &ResponseMatrix, params: &GladParams, priors: &GladPriors, posterior: &mut Matrix) -> f64 {
    let k_count = data.num_options();
    let log_spread = math::ln((k_count - 1) as f64);
    let log_theta: Vec<f64> = params.theta.iter().map(|&t| math::ln(t)).collect();
    let mut total = 0.0;
    for j in 0..data.num_questions() {
        let row = posterior.row_mut(j);
        row.copy_from_slice(&log_theta);
        for &t in data.question_responses(j) {
            let tr = data.triplets()[t];
            let x = LINK.logit(params.e[tr.worker], params.d[j]);
            let (hit, miss) = (math::log_sigmoid(x), math::log_sigmoid(-x) - log_spread);
            for (k, w) in row.iter_mut().enumerate() {
                *w += if k == tr.option { hit } else { miss };
            }
        }
        total += normalize_log(row);
    }
    for &e in &params.e {
        total -= math::normal_neg_log_density(e, priors.mu_e, priors.sigma2_e);
    }
    for &d in &params.d {
        total -= math::normal_neg_log_density(d, priors.mu_d, priors.sigma2_d);
    }
    total + params.gamma.iter().zip(&log_theta).map(|(g, lt)| g * lt).sum::<f64>()
}

fn m_step(data: &ResponseMatrix, params: &mut GladParams, priors: &GladPriors, posterior: &Matrix) -> Result<()> {
    let objective = ExpectedLogJoint {
        data,
        posterior,
        priors,
    };
    let mut x = params.e.clone();
    x.extend_from_slice(&params.d);
    let result = minimize(&objective, &x, &priors.optimizer)?;
    let n_workers = data.num_workers();
    params.e.copy_from_slice(&result.x[..n_workers]);
    params.d.copy_from_slice(&result.x[n_workers..]);

    let mut counts = params.gamma.clone();
    for row in posterior.iter_rows() {
        for (c, p) in counts.iter_mut().zip(row) {
            *c += p;
        }
    }
    let total: f64 = counts.iter().sum();
    for (t, c) in params.theta.iter_mut().zip(&counts) {
        *t = c / total;
    }
    Ok(())
}

/// Negative expected complete-data log-likelihood in `(e, d)` plus the
/// negative log-priors. Coordinates are `[e_0.., d_0..]`.
struct ExpectedLogJoint<'a> {
    data: &'a ResponseMatrix,
    posterior: &'a Matrix,
    priors: &'a GladPriors,
}

impl Objective for ExpectedLogJoint<'_> {
    fn dimension(&self) -> usize {
        self.data.num_workers() + self.data.num_questions()
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let n_workers = self.data.num_workers();
        let (e, d) = x.split_at(n_workers);
        let p = self.priors;
        grad.fill(0.0);
        let mut value = 0.0;
        for (i, &ei) in e.iter().enumerate() {
            value += math::normal_neg_log_density(ei, p.mu_e, p.sigma2_e);
            grad[i] += (ei - p.mu_e) / p.sigma2_e;
        }
        for (j, &dj) in d.iter().enumerate() {
            value += math::normal_neg_log_density(dj, p.mu_d, p.sigma2_d);
            grad[n_workers + j] += (dj - p.mu_d) / p.sigma2_d;
        }
        for tr in self.data.triplets() {
            let (ei, dj) = (e[tr.worker], d[tr.question]);
            let q = self.posterior.get(tr.question, tr.option);
            let xl = LINK.logit(ei, dj);
            value -= q * math::log_sigmoid(xl) + (1.0 - q) * math::log_sigmoid(-xl);
            let dx = math::sigmoid(xl) - q;
            let (de, dd) = LINK.logit_grad(ei, dj);
            grad[tr.worker] += dx * de;
            grad[n_workers + tr.question] += dx * dd;
        }
        value
    }

    fn coordinate_name(&self, index: usize) -> String {
        let n_workers = self.data.num_workers();
        if index < n_workers {
            format!("e[{index}]")
        } else {
            format!("d[{}]", index - n_workers)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::FnObjective;
    use crate::synth::{generate_glad, GladSynthSpec};

    #[test]
    fn m_step_gradient_matches_finite_differences() {
        let (data, _) = generate_glad(&GladSynthSpec::new(6, 9, 3, 4)).unwrap();
        let mut posterior = Matrix::zeros(9, 3);
        for j in 0..9 {
            let row = [0.2 + 0.05 * j as f64, 0.3, 0.5 - 0.05 * j as f64];
            posterior.row_mut(j).copy_from_slice(&row);
        }
        let priors = GladPriors::default();
        let obj = ExpectedLogJoint {
            data: &data,
            posterior: &posterior,
            priors: &priors,
        };
        let x: Vec<f64> = (0..15).map(|k| 0.3 * (k as f64).sin() + 0.5).collect();
        let mut g = vec![0.0; 15];
        obj.evaluate(&x, &mut g);
        let scalar = FnObjective::new(15, |x: &[f64], g: &mut [f64]| obj.evaluate(x, g));
        let h = 1e-6;
        for k in 0..15 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += h;
            xm[k] -= h;
            let mut scratch = vec![0.0; 15];
            let fd = (scalar.evaluate(&xp, &mut scratch) - scalar.evaluate(&xm, &mut scratch)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * (1.0 + g[k].abs()), "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn kernel_value() {
        let p = GladParams {
            e: vec![1.0],
            d: vec![0.0],
            theta: vec![0.5, 0.5],
            gamma: vec![1.0, 1.0],
        };
        assert!((p.correct_prob(0, 0) - 0.731_058_6).abs() < 1e-7);
    }
}
