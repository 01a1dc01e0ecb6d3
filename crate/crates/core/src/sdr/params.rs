use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::Matrix;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SdrHyperParams {
    /// Number of latent preferences `M`.
    pub num_preferences: usize,
    /// Dirichlet concentration over preferences, length `M`.
    pub alpha: Vec<f64>,
    pub mu_e: f64,
    pub sigma2_e: f64,
    pub mu_d: f64,
    pub sigma2_d: f64,
    pub mu_u: f64,
    pub sigma2_u: f64,
    pub mu_v: f64,
    pub sigma2_v: f64,
}

impl SdrHyperParams {
    /// Default priors: `e ~ N(1, 1)`, `d, u, v ~ N(0, 1)`, `alpha = 1`.
    pub fn new(num_preferences: usize) -> Self {
        Self {
            num_preferences,
            alpha: vec![1.0; num_preferences],
            mu_e: 1.0,
            sigma2_e: 1.0,
            mu_d: 0.0,
            sigma2_d: 1.0,
            mu_u: 0.0,
            sigma2_u: 1.0,
            mu_v: 0.0,
            sigma2_v: 1.0,
        }
    }

    /// Sets every component of `alpha` to `value`.
    pub fn with_alpha(mut self, value: f64) -> Self {
        self.alpha = vec![value; self.num_preferences];
        self
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_preferences == 0 {
            return Err(Error::InvalidArgument("at least one preference is required".into()));
        }
        if self.alpha.len() != self.num_preferences {
            return Err(Error::LengthMismatch {
                expected: self.num_preferences,
                found: self.alpha.len(),
            });
        }
        if self.alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidArgument("alpha components must be positive".into()));
        }
        let variances = [
            ("sigma2_e", self.sigma2_e),
            ("sigma2_d", self.sigma2_d),
            ("sigma2_u", self.sigma2_u),
            ("sigma2_v", self.sigma2_v),
        ];
        for (name, v) in variances {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        let means = [self.mu_e, self.mu_d, self.mu_u, self.mu_v];
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("prior means must be finite".into()));
        }
        Ok(())
    }
}

/// Continuous model parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SdrParams {
    /// Worker expertise, length `I`.
    pub e: Vec<f64>,
    /// Question difficulty, length `J`.
    pub d: Vec<f64>,
    /// Preference weights, `M x K`.
    pub u: Matrix,
    /// Question features, `J x K`.
    pub v: Matrix,
}

impl SdrParams {
    /// All parameters at their prior means.
    pub fn at_prior_means(layout: ParamLayout, hp: &SdrHyperParams) -> Self {
        Self {
            e: vec![hp.mu_e; layout.workers],
            d: vec![hp.mu_d; layout.questions],
            u: Matrix::filled(layout.preferences, layout.options, hp.mu_u),
            v: Matrix::filled(layout.questions, layout.options, hp.mu_v),
        }
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout {
            workers: self.e.len(),
            questions: self.d.len(),
            options: self.u.cols(),
            preferences: self.u.rows(),
        }
    }

    pub fn num_preferences(&self) -> usize {
        self.u.rows()
    }

    pub fn num_options(&self) -> usize {
        self.u.cols()
    }

    /// Concatenation `[e, d, u (row-major), v (row-major)]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.layout().dimension());
        x.extend_from_slice(&self.e);
        x.extend_from_slice(&self.d);
        x.extend_from_slice(self.u.as_slice());
        x.extend_from_slice(self.v.as_slice());
        x
    }

    pub fn from_flat(layout: ParamLayout, x: &[f64]) -> Result<Self> {
        if x.len() != layout.dimension() {
            return Err(Error::LengthMismatch {
                expected: layout.dimension(),
                found: x.len(),
            });
        }
        let (e, rest) = x.split_at(layout.workers);
        let (d, rest) = rest.split_at(layout.questions);
        let (u, v) = rest.split_at(layout.preferences * layout.options);
        Ok(Self {
            e: e.to_vec(),
            d: d.to_vec(),
            u: Matrix::from_vec(layout.preferences, layout.options, u.to_vec()),
            v: Matrix::from_vec(layout.questions, layout.options, v.to_vec()),
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        let layout = self.layout();
        if let Some(index) = self.to_flat().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "parameter",
                index,
                name: layout.coordinate_name(index),
            });
        }
        Ok(())
    }
}

/// Shapes of the flattened parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub workers: usize,
    pub questions: usize,
    pub options: usize,
    pub preferences: usize,
}

impl ParamLayout {
    pub fn dimension(&self) -> usize {
        self.workers + self.questions + self.preferences * self.options + self.questions * self.options
    }

    pub fn d_offset(&self) -> usize {
        self.workers
    }

    pub fn u_offset(&self) -> usize {
        self.workers + self.questions
    }

    pub fn v_offset(&self) -> usize {
        self.u_offset() + self.preferences * self.options
    }

    pub fn coordinate_name(&self, index: usize) -> String {
        if index < self.d_offset() {
            format!("e[{index}]")
        } else if index < self.u_offset() {
            format!("d[{}]", index - self.d_offset())
        } else if index < self.v_offset() {
            let r = index - self.u_offset();
            format!("u[{},{}]", r / self.options, r % self.options)
        } else {
            let r = index - self.v_offset();
            format!("v[{},{}]", r / self.options, r % self.options)
        }
    }
}

/// Posterior-mean preference probabilities, one simplex row per worker.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PreferencePosterior {
    pub phi_hat: Matrix,
}

impl PreferencePosterior {
    pub fn row(&self, worker: usize) -> &[f64] {
        self.phi_hat.row(worker)
    }

    pub fn num_workers(&self) -> usize {
        self.phi_hat.rows()
    }

    pub fn num_preferences(&self) -> usize {
        self.phi_hat.cols()
    }
}
