//! Links from (expertise, difficulty) to the probability that a response
//! equals the truth, and the corruption kernel built on them.

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CorrectnessLink {
    /// `sigmoid(e - d)`: difficulty can exceed expertise and push the
    /// probability of a correct response below one half.
    #[default]
    Rasch,
    /// `sigmoid(e / exp(d))`: difficulty only scales expertise toward zero.
    Glad,
}

impl CorrectnessLink {
    /// Argument of the sigmoid.
    #[inline]
    pub fn logit(self, e: f64, d: f64) -> f64 {
        match self {
            Self::Rasch => e - d,
            Self::Glad => e * math::exp(-d),
        }
    }

    /// Partial derivatives of [`Self::logit`] with respect to `(e, d)`.
    #[inline]
    pub fn logit_grad(self, e: f64, d: f64) -> (f64, f64) {
        match self {
            Self::Rasch => (1.0, -1.0),
            Self::Glad => {
                let s = math::exp(-d);
                (s, -e * s)
            }
        }
    }

    #[inline]
    pub fn prob(self, e: f64, d: f64) -> f64 {
        math::sigmoid(self.logit(e, d))
    }
}

/// Probability that a worker with expertise `e` answers a question of
/// difficulty `d` with its perceived truth: `1 / (1 + exp(-(e - d)))`.
#[inline]
pub fn logistic_correct_prob(e: f64, d: f64) -> f64 {
    CorrectnessLink::Rasch.prob(e, d)
}

/// `P(response | truth)`: `f` on the truth, `(1 - f) / (K - 1)` elsewhere.
#[inline]
pub fn corruption_prob(f: f64, num_options: usize, truth: usize, response: usize) -> f64 {
    if truth == response {
        f
    } else {
        (1.0 - f) / (num_options - 1) as f64
    }
}
