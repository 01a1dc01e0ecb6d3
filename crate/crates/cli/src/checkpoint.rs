//! Fitted models on disk, bound to the dataset they were fitted on.

use std::path::Path;

use crowdtruth_core::baselines::{DsConfig, DsParams, GladParams, GladPriors, TruthEstimate};
use crowdtruth_core::dataset::ResponseMatrix;
use crowdtruth_core::sdr::{FitSchedule, PreferencePosterior, SdrHyperParams, SdrParams};
use serde::{Deserialize, Serialize};

use crate::args::ModelKind;
use crate::error::{CliError, Result};
use crate::io;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Fitted {
    Sdr {
        hp: SdrHyperParams,
        schedule: FitSchedule,
        params: SdrParams,
        phi_hat: PreferencePosterior,
    },
    Mv {
        truth: TruthEstimate,
    },
    Glad {
        priors: GladPriors,
        params: GladParams,
        truth: TruthEstimate,
    },
    Ds {
        config: DsConfig,
        params: DsParams,
        truth: TruthEstimate,
    },
}

impl Fitted {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Sdr { .. } => ModelKind::Sdr,
            Self::Mv { .. } => ModelKind::Mv,
            Self::Glad { .. } => ModelKind::Glad,
            Self::Ds { .. } => ModelKind::Ds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub dataset_sha256: String,
    pub options: Vec<String>,
    pub fitted: Fitted,
}

impl Checkpoint {
    pub fn new(data: &ResponseMatrix, seed: u64, fitted: Fitted) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed,
            dataset_sha256: io::dataset_checksum(data),
            options: data.options().to_vec(),
            fitted,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cp: Self = io::read_json(path)?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(CliError::CheckpointVersion(cp.version));
        }
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    /// Refuses a checkpoint fitted on different responses.
    pub fn verify(&self, data: &ResponseMatrix) -> Result<()> {
        let found = io::dataset_checksum(data);
        if found != self.dataset_sha256 {
            return Err(CliError::ChecksumMismatch {
                expected: self.dataset_sha256.clone(),
                found,
            });
        }
        Ok(())
    }
}
