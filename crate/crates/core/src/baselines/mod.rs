//! Comparison aggregators: majority vote, GLAD and Dawid-Skene.

mod ds;
mod glad;
mod mv;

pub use ds::{ds_fit, DsConfig, DsFit, DsParams};
pub use glad::{glad_fit, GladFit, GladParams, GladPriors};
pub use mv::majority_vote;

use alloc::vec::Vec;

use crate::math::{self, Matrix};

/// Posterior over each question's single truth and its argmax.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TruthEstimate {
    /// `J x K`, row `j` is `P(l_j = k)`.
    pub posterior: Matrix,
    pub argmax: Vec<usize>,
}

impl TruthEstimate {
    /// Takes the argmax of every row, ties to the lowest option index.
    pub fn from_posterior(posterior: Matrix) -> Self {
        let argmax = posterior.iter_rows().map(math::argmax).collect();
        Self { posterior, argmax }
    }

    /// Posterior mass of the chosen option.
    pub fn confidence(&self, question: usize) -> f64 {
        self.posterior.get(question, self.argmax[question])
    }

    pub fn num_questions(&self) -> usize {
        self.argmax.len()
    }
}

/// Converged EM loops stop once the traced objective improves by less than this.
pub const EM_TOLERANCE: f64 = 1e-6;
/// Default cap on EM rounds.
pub const EM_MAX_ROUNDS: usize = 200;

/// Normalises log-weights in place into probabilities and returns the
/// log of their sum.
fn normalize_log(weights: &mut [f64]) -> f64 {
    let lse = math::log_sum_exp(weights);
    for w in weights.iter_mut() {
        *w = math::exp(*w - lse);
    }
    lse
}
