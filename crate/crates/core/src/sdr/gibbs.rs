use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::dataset::ResponseMatrix;
use crate::math;
use crate::rng;

use super::model::response_marginal;
use super::params::{SdrHyperParams, SdrParams};

/// Preference assignments, one per triplet of the bound dataset, and the
/// per-worker counts `N^m_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GibbsState {
    z: Vec<usize>,
    counts: Vec<u32>,
    num_preferences: usize,
}

impl GibbsState {
    /// Builds a state from explicit assignments.
    pub fn from_assignments(data: &ResponseMatrix, z: Vec<usize>, num_preferences: usize) -> Self {
        assert_eq!(z.len(), data.num_responses());
        let mut counts = vec![0u32; data.num_workers() * num_preferences];
        for (t, &m) in z.iter().enumerate() {
            assert!(m < num_preferences, "assignment out of range");
            counts[data.triplets()[t].worker * num_preferences + m] += 1;
        }
        Self {
            z,
            counts,
            num_preferences,
        }
    }

    /// Draws every assignment uniformly.
    pub fn random<R: Rng + ?Sized>(data: &ResponseMatrix, num_preferences: usize, rng: &mut R) -> Self {
        let z = (0..data.num_responses())
            .map(|_| rng.random_range(0..num_preferences))
            .collect();
        Self::from_assignments(data, z, num_preferences)
    }

    pub fn assignments(&self) -> &[usize] {
        &self.z
    }

    pub fn num_preferences(&self) -> usize {
        self.num_preferences
    }

    /// `N^m_i`.
    pub fn count(&self, worker: usize, m: usize) -> u32 {
        self.counts[worker * self.num_preferences + m]
    }

    pub fn worker_counts(&self, worker: usize) -> &[u32] {
        &self.counts[worker * self.num_preferences..(worker + 1) * self.num_preferences]
    }

    /// Recounts one worker's row.
    pub fn is_worker_consistent(&self, data: &ResponseMatrix, worker: usize) -> bool {
        let mut row = vec![0u32; self.num_preferences];
        for &t in data.worker_responses(worker) {
            row[self.z[t]] += 1;
        }
        row == self.worker_counts(worker)
    }

    /// True when the counts agree with a fresh recount of `z`.
    pub fn is_consistent(&self, data: &ResponseMatrix) -> bool {
        *self == Self::from_assignments(data, self.z.clone(), self.num_preferences)
    }
}

/// Normalised conditional of the assignment of triplet `t`, with `t`'s own
/// contribution removed from the counts:
/// `P(z = m) ∝ P(r | z = m) * (N^m_{i,-j} + alpha_m) / sum_m' (N^m'_{i,-j} + alpha_m')`.
pub fn gibbs_conditional(
    data: &ResponseMatrix,
    t: usize,
    state: &GibbsState,
    params: &SdrParams,
    hp: &SdrHyperParams,
) -> Vec<f64> {
    let tr = data.triplets()[t];
    let current = state.z[t];
    let counts = state.worker_counts(tr.worker);
    let excluded = |m: usize| f64::from(counts[m]) - if m == current { 1.0 } else { 0.0 };
    let denom: f64 = (0..hp.num_preferences).map(|m| excluded(m) + hp.alpha[m]).sum();
    let mut log_w: Vec<f64> = (0..hp.num_preferences)
        .map(|m| {
            let lik = response_marginal(tr.worker, tr.question, m, tr.option, params);
            math::ln(lik) + math::ln((excluded(m) + hp.alpha[m]) / denom)
        })
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for w in log_w.iter_mut() {
        *w = math::exp(*w - max);
        total += *w;
    }
    for w in log_w.iter_mut() {
        *w /= total;
    }
    log_w
}

/// Resamples the assignment of triplet `t` and returns the new preference.
pub fn gibbs_step<R: Rng + ?Sized>(
    data: &ResponseMatrix,
    t: usize,
    state: &mut GibbsState,
    params: &SdrParams,
    hp: &SdrHyperParams,
    rng: &mut R,
) -> usize {
    if hp.num_preferences == 1 {
        return 0;
    }
    let probs = gibbs_conditional(data, t, state, params, hp);
    let worker = data.triplets()[t].worker;
    let m_old = state.z[t];
    let m_new = rng::categorical(rng, &probs);
    let width = state.num_preferences;
    state.counts[worker * width + m_old] -= 1;
    state.counts[worker * width + m_new] += 1;
    state.z[t] = m_new;
    debug_assert!(state.is_worker_consistent(data, worker));
    m_new
}
