//! The subjectivity-and-difficulty response model.
//!
//! Each worker `i` carries a mixture `phi_i` over `M` latent preferences.
//! For question `j` the worker adopts preference `z_ij ~ phi_i`, perceives a
//! subjective truth `l_ij ~ softmax_k(u[z_ij][k] * v[j][k])` and reports it
//! with probability `f = sigmoid(e_i - d_j)`, otherwise one of the other
//! `K - 1` options uniformly. Fitting alternates a collapsed Gibbs sweep over
//! the assignments `z` with MAP optimisation of `(e, d, u, v)`.

mod fit;
mod gibbs;
mod model;
mod params;

pub use fit::{fit, fit_from, FitSchedule, FitTrace, SdrFit};
pub(crate) use model::mixed_truth;
pub use gibbs::{gibbs_conditional, gibbs_step, GibbsState};
pub use model::{
    gradient_q, objective_q, predict_response, response_marginal, truth_softmax, SdrObjective,
    SubjectiveTruthDistribution,
};
pub use params::{ParamLayout, PreferencePosterior, SdrHyperParams, SdrParams};
