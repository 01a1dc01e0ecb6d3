use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::ResponseMatrix;
use crate::error::{Error, Result};
use crate::math::{self, Matrix};
use crate::optimizer::{minimize, OptimizerConfig};
use crate::rng;

use super::gibbs::{gibbs_step, GibbsState};
use super::model::SdrObjective;
use super::params::{ParamLayout, PreferencePosterior, SdrHyperParams, SdrParams};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitSchedule {
    /// Gibbs-sweep + optimisation rounds.
    pub outer_iterations: usize,
    /// Leading rounds whose counts are not averaged into `phi_hat`.
    pub burn_in: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for FitSchedule {
    fn default() -> Self {
        Self {
            outer_iterations: 50,
            burn_in: 20,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Per-round diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitTrace {
    /// Objective after each optimisation phase.
    pub objective: Vec<f64>,
    /// Objective right before each optimisation phase (after the Gibbs sweep).
    pub objective_before: Vec<f64>,
    pub optimizer_iterations: Vec<usize>,
    pub optimizer_converged: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SdrFit {
    pub params: SdrParams,
    pub phi_hat: PreferencePosterior,
    pub state: GibbsState,
    pub trace: FitTrace,
}

/// Fits the model by alternating one Gibbs sweep over all assignments with
/// a warm-started L-BFGS minimisation of the MAP objective.
pub fn fit(data: &ResponseMatrix, hp: &SdrHyperParams, schedule: &FitSchedule, seed: u64) -> Result<SdrFit> {
    fit_from(data, hp, schedule, seed, None)
}

/// [`fit`] starting from given parameters and assignments instead of the
/// jittered prior means and uniform assignments.
pub fn fit_from(
    data: &ResponseMatrix,
    hp: &SdrHyperParams,
    schedule: &FitSchedule,
    seed: u64,
    init: Option<(SdrParams, Vec<usize>)>,
) -> Result<SdrFit> {
    hp.validate()?;
    if schedule.outer_iterations == 0 {
        return Err(Error::InvalidArgument("outer_iterations must be positive".into()));
    }
    let m_count = hp.num_preferences;
    let layout = ParamLayout {
        workers: data.num_workers(),
        questions: data.num_questions(),
        options: data.num_options(),
        preferences: m_count,
    };

    let mut init_rng = rng::stream(seed, "sdr/init");
    let mut gibbs_rng = rng::stream(seed, "sdr/gibbs");

    let mut params = SdrParams::at_prior_means(layout, hp);
    let jitter = |rng: &mut rng::StreamRng, xs: &mut [f64], variance: f64| {
        let scale = 0.01 * math::sqrt(variance);
        for x in xs.iter_mut() {
            *x += rng::normal(rng, 0.0, scale);
        }
    };
    jitter(&mut init_rng, &mut params.e, hp.sigma2_e);
    jitter(&mut init_rng, &mut params.d, hp.sigma2_d);
    jitter(&mut init_rng, params.u.as_mut_slice(), hp.sigma2_u);
    jitter(&mut init_rng, params.v.as_mut_slice(), hp.sigma2_v);
    let mut state = GibbsState::random(data, m_count, &mut init_rng);
    if let Some((p, z)) = init {
        if p.layout() != layout || z.len() != data.num_responses() || z.iter().any(|&m| m >= m_count) {
            return Err(Error::InvalidArgument("initial state does not match the data".into()));
        }
        params = p;
        state = GibbsState::from_assignments(data, z, m_count);
    }

    let mut x = params.to_flat();
    let mut trace = FitTrace::default();
    let mut count_sums = vec![0.0f64; data.num_workers() * m_count];
    let mut kept = 0usize;

    for round in 0..schedule.outer_iterations {
        for t in 0..data.num_responses() {
            gibbs_step(data, t, &mut state, &params, hp, &mut gibbs_rng);
        }

        let objective = SdrObjective::new(data, state.assignments(), hp)?;
        trace.objective_before.push(objective.value(&x));
        let result = minimize(&objective, &x, &schedule.optimizer).map_err(|e| Error::Optimizer {
            round,
            source: Box::new(e),
        })?;
        x = result.x;
        params = SdrParams::from_flat(layout, &x)?;
        trace.objective.push(result.value);
        trace.optimizer_iterations.push(result.iterations);
        trace.optimizer_converged.push(result.converged);

        if round >= schedule.burn_in {
            kept += 1;
            for i in 0..data.num_workers() {
                for (m, &c) in state.worker_counts(i).iter().enumerate() {
                    count_sums[i * m_count + m] += f64::from(c);
                }
            }
        }
    }

    let phi_hat = posterior_mean(data, hp, &state, &count_sums, kept);
    Ok(SdrFit {
        params,
        phi_hat,
        state,
        trace,
    })
}

/// `(mean post-burn-in N^m_i + alpha_m) / (n_i + sum alpha)`. Falls back to
/// the final sample when no round survived burn-in.
fn posterior_mean(
    data: &ResponseMatrix,
    hp: &SdrHyperParams,
    state: &GibbsState,
    count_sums: &[f64],
    kept: usize,
) -> PreferencePosterior {
    let m_count = hp.num_preferences;
    let mut phi = Matrix::zeros(data.num_workers(), m_count);
    if m_count == 1 {
        phi.as_mut_slice().fill(1.0);
        return PreferencePosterior { phi_hat: phi };
    }
    let alpha_sum = hp.alpha_sum();
    for i in 0..data.num_workers() {
        let n_i = data.worker_responses(i).len() as f64;
        for m in 0..m_count {
            let avg = if kept > 0 {
                count_sums[i * m_count + m] / kept as f64
            } else {
                f64::from(state.count(i, m))
            };
            phi.set(i, m, (avg + hp.alpha[m]) / (n_i + alpha_sum));
        }
    }
    PreferencePosterior { phi_hat: phi }
}
