use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{ResponseMatrix, Triplet};
use crate::error::{Error, Result};
use crate::link::logistic_correct_prob;
use crate::math;
use crate::optimizer::Objective;

use super::params::{ParamLayout, PreferencePosterior, SdrHyperParams, SdrParams};

/// Distribution of the subjective truth under one preference.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectiveTruthDistribution {
    pub probs: Vec<f64>,
}

/// `softmax_k(u_m[k] * v_j[k])`.
pub fn truth_softmax(u_m: &[f64], v_j: &[f64]) -> SubjectiveTruthDistribution {
    assert_eq!(u_m.len(), v_j.len(), "u_m and v_j must have the same length");
    let logits: Vec<f64> = u_m.iter().zip(v_j).map(|(u, v)| u * v).collect();
    let mut probs = vec![0.0; logits.len()];
    math::softmax_into(&logits, &mut probs);
    SubjectiveTruthDistribution { probs }
}

/// `P(r_ij = r | z_ij = m)` with the subjective truth summed out:
/// `sum_k psi_mk * [f if k == r else (1 - f) / (K - 1)]`.
pub fn response_marginal(i: usize, j: usize, m: usize, r: usize, params: &SdrParams) -> f64 {
    let psi = truth_softmax(params.u.row(m), params.v.row(j));
    let f = logistic_correct_prob(params.e[i], params.d[j]);
    let off = (1.0 - f) / (psi.probs.len() - 1) as f64;
    psi.probs
        .iter()
        .enumerate()
        .map(|(k, p)| p * if k == r { f } else { off })
        .sum()
}

/// Predictive distribution of worker `i`'s answer to question `j`, mixing
/// preferences by `phi_hat[i]`.
pub fn predict_response(
    i: usize,
    j: usize,
    params: &SdrParams,
    phi_hat: &PreferencePosterior,
) -> Vec<f64> {
    let k_count = params.num_options();
    let f = logistic_correct_prob(params.e[i], params.d[j]);
    let off = (1.0 - f) / (k_count - 1) as f64;
    let mut out = vec![0.0; k_count];
    for (m, &weight) in phi_hat.row(i).iter().enumerate() {
        if weight == 0.0 {
            continue;
        }
        let psi = truth_softmax(params.u.row(m), params.v.row(j));
        for (r, o) in out.iter_mut().enumerate() {
            // psi_r * f + (1 - psi_r) * off
            *o += weight * (psi.probs[r] * f + (1.0 - psi.probs[r]) * off);
        }
    }
    out
}

/// The MAP objective in `(e, d, u, v)` for fixed preference assignments `z`
/// (one entry per triplet of `data`): negative log-likelihood with the
/// subjective truths marginalised, plus negative Normal log-priors.
pub struct SdrObjective<'a> {
    triplets: &'a [Triplet],
    z: &'a [usize],
    hp: &'a SdrHyperParams,
    layout: ParamLayout,
}

impl<'a> SdrObjective<'a> {
    pub fn new(data: &'a ResponseMatrix, z: &'a [usize], hp: &'a SdrHyperParams) -> Result<Self> {
        let layout = ParamLayout {
            workers: data.num_workers(),
            questions: data.num_questions(),
            options: data.num_options(),
            preferences: hp.num_preferences,
        };
        Self::with_triplets(layout, data.triplets(), z, hp)
    }

    /// Objective over an explicit response list, which may be empty.
    pub fn with_triplets(
        layout: ParamLayout,
        triplets: &'a [Triplet],
        z: &'a [usize],
        hp: &'a SdrHyperParams,
    ) -> Result<Self> {
        hp.validate()?;
        if layout.preferences != hp.num_preferences {
            return Err(Error::InvalidArgument("layout and hyperparameters disagree on M".into()));
        }
        if layout.options < 2 {
            return Err(Error::TooFewOptions(layout.options));
        }
        if z.len() != triplets.len() {
            return Err(Error::LengthMismatch {
                expected: triplets.len(),
                found: z.len(),
            });
        }
        if let Some(&m) = z.iter().find(|&&m| m >= hp.num_preferences) {
            return Err(Error::InvalidIndex(alloc::format!("preference assignment {m}")));
        }
        if let Some(t) = triplets
            .iter()
            .find(|t| t.worker >= layout.workers || t.question >= layout.questions || t.option >= layout.options)
        {
            return Err(Error::InvalidIndex(alloc::format!("triplet {t:?} outside layout")));
        }
        Ok(Self {
            triplets,
            z,
            hp,
            layout,
        })
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    /// Objective value without the gradient.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.value_and_grad(x, None)
    }

    /// Value and (optionally) gradient at flattened parameters `x`.
    fn value_and_grad(&self, x: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let l = self.layout;
        let k_count = l.options;
        let (e, rest) = x.split_at(l.workers);
        let (d, rest) = rest.split_at(l.questions);
        let (u, v) = rest.split_at(l.preferences * k_count);
        let ln_others = math::ln((k_count - 1) as f64);
        let hp = self.hp;

        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut logits = vec![0.0; k_count];
        let mut rest_logits = Vec::with_capacity(k_count);
        let mut value = 0.0;

        for (t, tr) in self.triplets.iter().enumerate() {
            let (i, j, r, m) = (tr.worker, tr.question, tr.option, self.z[t]);
            let u_m = &u[m * k_count..(m + 1) * k_count];
            let v_j = &v[j * k_count..(j + 1) * k_count];
            for ((s, a), b) in logits.iter_mut().zip(u_m).zip(v_j) {
                *s = a * b;
            }
            let lse = math::log_sum_exp(&logits);
            rest_logits.clear();
            rest_logits.extend(logits.iter().enumerate().filter(|&(k, _)| k != r).map(|(_, s)| *s));
            let log_psi_r = logits[r] - lse;
            let log_not_psi_r = math::log_sum_exp(&rest_logits) - lse;

            let x_ij = e[i] - d[j];
            let log_f = math::log_sigmoid(x_ij);
            let log_off = math::log_sigmoid(-x_ij) - ln_others;
            let log_p = math::log_add_exp(log_psi_r + log_f, log_not_psi_r + log_off);
            value -= log_p;

            if let Some(g) = grad.as_deref_mut() {
                // a: posterior probability that the perceived truth equals the response.
                let a = math::exp(log_psi_r + log_f - log_p);
                let f = math::exp(log_f);
                g[i] += f - a;
                g[l.d_offset() + j] -= f - a;
                // d(-log p)/d logit_k = -(a - b) * (1{k = r} - psi_k) with
                // b = psi_r * off / p. The factors are combined in log space
                // since a - b can overflow where 1{k = r} - psi_k underflows.
                let w = log_psi_r - log_p;
                for k in 0..k_count {
                    let (log_gap, sign) = if k == r {
                        (log_not_psi_r, -1.0)
                    } else {
                        (logits[k] - lse, 1.0)
                    };
                    let ds = sign * (math::exp(w + log_f + log_gap) - math::exp(w + log_off + log_gap));
                    g[l.u_offset() + m * k_count + k] += ds * v_j[k];
                    g[l.v_offset() + j * k_count + k] += ds * u_m[k];
                }
            }
        }

        let blocks = [
            (e, hp.mu_e, hp.sigma2_e, 0),
            (d, hp.mu_d, hp.sigma2_d, l.d_offset()),
            (u, hp.mu_u, hp.sigma2_u, l.u_offset()),
            (v, hp.mu_v, hp.sigma2_v, l.v_offset()),
        ];
        for (xs, mu, s2, offset) in blocks {
            for (idx, &xv) in xs.iter().enumerate() {
                value += math::normal_neg_log_density(xv, mu, s2);
                if let Some(g) = grad.as_deref_mut() {
                    g[offset + idx] += (xv - mu) / s2;
                }
            }
        }
        value
    }
}

impl Objective for SdrObjective<'_> {
    fn dimension(&self) -> usize {
        self.layout.dimension()
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.value_and_grad(x, Some(grad))
    }

    fn coordinate_name(&self, index: usize) -> alloc::string::String {
        self.layout.coordinate_name(index)
    }
}

fn check_shapes(params: &SdrParams, data: &ResponseMatrix, hp: &SdrHyperParams) -> Result<()> {
    let expected = ParamLayout {
        workers: data.num_workers(),
        questions: data.num_questions(),
        options: data.num_options(),
        preferences: hp.num_preferences,
    };
    if params.layout() != expected || params.v.rows() != data.num_questions() {
        return Err(Error::InvalidArgument(alloc::format!(
            "parameter shapes {:?} do not match data {:?}",
            params.layout(),
            expected
        )));
    }
    Ok(())
}

/// Negative log joint of `(e, d, u, v)` and the data given assignments `z`.
pub fn objective_q(params: &SdrParams, z: &[usize], data: &ResponseMatrix, hp: &SdrHyperParams) -> Result<f64> {
    check_shapes(params, data, hp)?;
    let objective = SdrObjective::new(data, z, hp)?;
    let value = objective.value_and_grad(&params.to_flat(), None);
    if !value.is_finite() {
        return Err(Error::NonFinite {
            what: "objective value",
            index: 0,
            name: "Q".into(),
        });
    }
    Ok(value)
}

/// Gradient of [`objective_q`], flattened as `[e, d, u, v]`.
pub fn gradient_q(params: &SdrParams, z: &[usize], data: &ResponseMatrix, hp: &SdrHyperParams) -> Result<Vec<f64>> {
    check_shapes(params, data, hp)?;
    let objective = SdrObjective::new(data, z, hp)?;
    let mut grad = vec![0.0; objective.dimension()];
    objective.value_and_grad(&params.to_flat(), Some(&mut grad));
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: "gradient",
            index,
            name: objective.layout.coordinate_name(index),
        });
    }
    Ok(grad)
}

/// Mixes per-preference truth distributions: `sum_m weights[m] * psi_m(j)`.
pub(crate) fn mixed_truth(params: &SdrParams, j: usize, weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; params.num_options()];
    for (m, &w) in weights.iter().enumerate() {
        let psi = truth_softmax(params.u.row(m), params.v.row(j));
        for (o, p) in out.iter_mut().zip(&psi.probs) {
            *o += w * p;
        }
    }
    out
}
