//! Run configuration files and the translation of settings into model
//! parameters. Flags override the file, the file overrides defaults.

use std::path::Path;

use crowdtruth_core::baselines::{DsConfig, GladPriors};
use crowdtruth_core::evaluation::GridSpec;
use crowdtruth_core::sdr::{FitSchedule, SdrHyperParams};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{
    GridSource, GroupArgs, InputArgs, ModelArgs, ModelKind, RunArgs, SimulateArgs, SubjectivityArgs, ValidateArgs,
};
use crate::error::{CliError, Result};
use crate::io;

/// Repetitions of held-out validation when not configured.
pub const DEFAULT_REPETITIONS: usize = 100;
pub const DEFAULT_SEED: u64 = 0;

/// JSON mirror of the command-line flags; keys are the flag names with
/// underscores.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub input: InputArgs,
    #[serde(flatten)]
    pub model: ModelArgs,
    #[serde(flatten)]
    pub run: RunArgs,
    #[serde(flatten)]
    pub group: GroupArgs,
    #[serde(flatten)]
    pub subjectivity: SubjectivityArgs,
    #[serde(flatten)]
    pub validate: ValidateArgs,
    #[serde(flatten)]
    pub simulate: SimulateArgs,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let value: Value = io::read_json(path)?;
        let Value::Object(object) = &value else {
            return Err(CliError::Invalid(format!("{}: configuration must be a JSON object", path.display())));
        };
        let known = [
            InputArgs::FIELDS,
            ModelArgs::FIELDS,
            RunArgs::FIELDS,
            GroupArgs::FIELDS,
            SubjectivityArgs::FIELDS,
            ValidateArgs::FIELDS,
            SimulateArgs::FIELDS,
        ];
        if let Some(key) = object.keys().find(|k| !known.iter().any(|f| f.contains(&k.as_str()))) {
            return Err(CliError::Invalid(format!("{}: unknown configuration key `{key}`", path.display())));
        }
        serde_json::from_value(value).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_opt(path: Option<&std::path::PathBuf>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), |p| Self::load(p))
    }
}

impl ModelArgs {
    pub fn kind(&self) -> ModelKind {
        self.model.unwrap_or(ModelKind::Sdr)
    }

    /// SDR hyperparameters; `--m` is required.
    pub fn hyper_params(&self) -> Result<SdrHyperParams> {
        let m = self.m.ok_or(CliError::Missing("m"))?;
        self.hyper_params_with(m)
    }

    fn hyper_params_with(&self, m: usize) -> Result<SdrHyperParams> {
        let mut hp = SdrHyperParams::new(m);
        if let Some(a) = self.alpha {
            hp = hp.with_alpha(a);
        }
        let fields = [
            (&mut hp.mu_e, self.mu_e),
            (&mut hp.sigma2_e, self.sigma2_e),
            (&mut hp.mu_d, self.mu_d),
            (&mut hp.sigma2_d, self.sigma2_d),
            (&mut hp.sigma2_u, self.sigma2_u),
            (&mut hp.sigma2_v, self.sigma2_v),
        ];
        for (slot, value) in fields {
            if let Some(v) = value {
                *slot = v;
            }
        }
        hp.validate()?;
        Ok(hp)
    }

    pub fn schedule(&self) -> Result<FitSchedule> {
        let mut s = FitSchedule::default();
        if let Some(n) = self.outer_iters {
            s.outer_iterations = n;
        }
        if let Some(b) = self.burn_in {
            s.burn_in = b;
        }
        if s.outer_iterations == 0 {
            return Err(CliError::Invalid("--outer-iters must be positive".into()));
        }
        Ok(s)
    }

    /// GLAD priors from the shared prior flags; `--alpha` is the truth prior
    /// pseudo-count.
    pub fn glad_priors(&self) -> Result<GladPriors> {
        let d = GladPriors::default();
        let priors = GladPriors {
            gamma: self.alpha.unwrap_or(d.gamma),
            mu_e: self.mu_e.unwrap_or(d.mu_e),
            sigma2_e: self.sigma2_e.unwrap_or(d.sigma2_e),
            mu_d: self.mu_d.unwrap_or(d.mu_d),
            sigma2_d: self.sigma2_d.unwrap_or(d.sigma2_d),
            ..d
        };
        priors.validate()?;
        Ok(priors)
    }

    pub fn ds_config(&self) -> DsConfig {
        DsConfig::default()
    }

    /// The validation grid: keys missing from `grid` take the single value
    /// given by the model flags (or its default).
    pub fn grid(&self, source: Option<&GridSource>, repetitions: usize) -> Result<GridSpec> {
        let object = match source {
            None => serde_json::Map::new(),
            Some(GridSource::Inline(map)) => map.clone(),
            Some(GridSource::Path(p)) => io::read_json(p)?,
        };
        let preferences = match object.get("m").or_else(|| object.get("preferences")) {
            Some(v) => Some(usize_list("m", v)?),
            None => self.m.map(|m| vec![m]),
        };
        let mut lists: Vec<(&str, Option<Vec<f64>>)> = Vec::new();
        for key in ["alpha", "mu_e", "sigma2_e", "mu_d", "sigma2_d", "sigma2_u", "sigma2_v"] {
            lists.push((key, object.get(key).map(|v| f64_list(key, v)).transpose()?));
        }
        if let Some(unknown) = object.keys().find(|k| {
            !matches!(
                k.as_str(),
                "m" | "preferences" | "alpha" | "mu_e" | "sigma2_e" | "mu_d" | "sigma2_d" | "sigma2_u" | "sigma2_v"
            )
        }) {
            return Err(CliError::Invalid(format!("unknown grid key `{unknown}`")));
        }
        let preferences = preferences.ok_or(CliError::Missing("m"))?;
        let first = *preferences
            .first()
            .ok_or_else(|| CliError::Invalid("grid `m` needs at least one value".into()))?;
        let base = self.hyper_params_with(first)?;
        let mut spec = GridSpec::single(&base, repetitions);
        spec.preferences = preferences;
        for (key, list) in lists {
            let Some(list) = list else { continue };
            let slot = match key {
                "alpha" => &mut spec.alpha,
                "mu_e" => &mut spec.mu_e,
                "sigma2_e" => &mut spec.sigma2_e,
                "mu_d" => &mut spec.mu_d,
                "sigma2_d" => &mut spec.sigma2_d,
                "sigma2_u" => &mut spec.sigma2_u,
                _ => &mut spec.sigma2_v,
            };
            *slot = list;
        }
        Ok(spec)
    }
}

fn values<'a>(value: &'a Value) -> Vec<&'a Value> {
    match value {
        Value::Array(items) => items.iter().collect(),
        v => vec![v],
    }
}

fn f64_list(key: &str, value: &Value) -> Result<Vec<f64>> {
    values(value)
        .into_iter()
        .map(|v| v.as_f64().ok_or_else(|| CliError::Invalid(format!("grid `{key}` must hold numbers"))))
        .collect()
}

fn usize_list(key: &str, value: &Value) -> Result<Vec<usize>> {
    values(value)
        .into_iter()
        .map(|v| {
            v.as_u64()
                .filter(|&m| m > 0)
                .map(|m| m as usize)
                .ok_or_else(|| CliError::Invalid(format!("grid `{key}` must hold positive integers")))
        })
        .collect()
}
