use alloc::format;
use alloc::vec::Vec;

use crate::dataset::ResponseMatrix;
use crate::error::{Error, Result};
use crate::math::{self, Matrix};

use super::mv::majority_vote;
use super::{normalize_log, TruthEstimate, EM_MAX_ROUNDS, EM_TOLERANCE};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DsConfig {
    /// Pseudo-count added to every confusion cell and class-prior entry.
    pub smoothing: f64,
    pub max_rounds: usize,
}

impl Default for DsConfig {
    fn default() -> Self {
        Self {
            smoothing: 0.01,
            max_rounds: EM_MAX_ROUNDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DsParams {
    /// One row-stochastic `K x K` matrix per worker; row = truth, column = response.
    pub confusion: Vec<Matrix>,
    pub class_prior: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DsFit {
    pub params: DsParams,
    pub estimate: TruthEstimate,
    /// Smoothed log-likelihood after each M-step.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Dawid-Skene EM started from the majority-vote posteriors.
pub fn ds_fit(data: &ResponseMatrix, config: &DsConfig) -> Result<DsFit> {
    if !(config.smoothing > 0.0 && config.smoothing.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "smoothing must be positive and finite, got {}",
            config.smoothing
        )));
    }
    if config.max_rounds == 0 {
        return Err(Error::InvalidArgument("max_rounds must be positive".into()));
    }
    let mut posterior = majority_vote(data).posterior;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut params = m_step(data, &posterior, config.smoothing);
    for round in 0..config.max_rounds {
        let value = e_step(data, &params, config.smoothing, &mut posterior);
        let improved = trace.last().map(|&prev| value - prev);
        trace.push(value);
        if improved.is_some_and(|gain| gain < EM_TOLERANCE) {
            converged = true;
            break;
        }
        if round + 1 < config.max_rounds {
            params = m_step(data, &posterior, config.smoothing);
        }
    }
    Ok(DsFit {
        params,
        estimate: TruthEstimate::from_posterior(posterior),
        trace,
        converged,
    })
}

fn m_step(data: &ResponseMatrix, posterior: &Matrix, smoothing: f64) -> DsParams {
    let k_count = data.num_options();
    let mut class_prior = alloc::vec![smoothing; k_count];
    for row in posterior.iter_rows() {
        for (c, p) in class_prior.iter_mut().zip(row) {
            *c += p;
        }
    }
    let total: f64 = class_prior.iter().sum();
    class_prior.iter_mut().for_each(|c| *c /= total);

    let confusion = (0..data.num_workers())
        .map(|i| {
            let mut m = Matrix::filled(k_count, k_count, smoothing);
            for &t in data.worker_responses(i) {
                let tr = data.triplets()[t];
                for k in 0..k_count {
                    let cell = m.get(k, tr.option) + posterior.get(tr.question, k);
                    m.set(k, tr.option, cell);
                }
            }
            for k in 0..k_count {
                let row = m.row_mut(k);
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= s);
            }
            m
        })
        .collect();
    DsParams { confusion, class_prior }
}

fn e_step(data: &ResponseMatrix, params: &DsParams, smoothing: f64, posterior: &mut Matrix) -> f64 {
    let log_prior: Vec<f64> = params.class_prior.iter().map(|&p| math::ln(p)).collect();
    let mut total = smoothing * log_prior.iter().sum::<f64>();
    for m in &params.confusion {
        total += smoothing * m.as_slice().iter().map(|&x| math::ln(x)).sum::<f64>();
    }
    for j in 0..data.num_questions() {
        let row = posterior.row_mut(j);
        row.copy_from_slice(&log_prior);
        for &t in data.question_responses(j) {
            let tr = data.triplets()[t];
            let conf = &params.confusion[tr.worker];
            for (k, w) in row.iter_mut().enumerate() {
                *w += math::ln(conf.get(k, tr.option));
            }
        }
        total += normalize_log(row);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ResponseRecord;

    fn data(rows: &[(&str, &str, &str)]) -> ResponseMatrix {
        let recs: Vec<_> = rows.iter().map(|&(w, q, o)| ResponseRecord::new(w, q, o)).collect();
        ResponseMatrix::from_records(&recs, None).unwrap()
    }

    #[test]
    fn single_worker_is_believed() {
        let d = data(&[("w", "q1", "A"), ("w", "q2", "B"), ("w", "q3", "B")]);
        // With a lone worker the smoothed objective slowly favours a flat
        // confusion matrix, so this holds for light smoothing only.
        let config = DsConfig {
            smoothing: 1e-6,
            ..DsConfig::default()
        };
        let fit = ds_fit(&d, &config).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.estimate.argmax, alloc::vec![0, 1, 1]);
    }

    #[test]
    fn reliable_workers_have_near_identity_confusion() {
        let mut rows = Vec::new();
        let names = ["w1", "w2", "w3"];
        let qs = ["q1", "q2", "q3", "q4"];
        let ans = ["A", "B", "A", "B"];
        for w in names {
            for (q, a) in qs.iter().zip(ans) {
                rows.push((w, *q, a));
            }
        }
        let fit = ds_fit(&data(&rows), &DsConfig::default()).unwrap();
        for m in &fit.params.confusion {
            for k in 0..2 {
                // Two observations per truth row plus 0.01 smoothing per cell.
                assert!((m.get(k, k) - 2.01 / 2.02).abs() < 1e-6);
            }
        }
    }
}
