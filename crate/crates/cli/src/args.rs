//! Command-line definitions. Every flag group doubles as a section of the
//! JSON run configuration, so a flag and its config key share one name.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crowdtruth_core::clustering::ClusterStrategy;
use crowdtruth_core::evaluation::MaeMode;
use serde::{Deserialize, Serialize};

use crate::io::DataFormat;

macro_rules! settings {
    ($(#[$meta:meta])* pub struct $name:ident {
        $($(#[$fmeta:meta])* pub $field:ident: Option<$ty:ty>,)*
    }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
        pub struct $name {
            $($(#[$fmeta])* #[serde(default, skip_serializing_if = "Option::is_none")] pub $field: Option<$ty>,)*
        }

        impl $name {
            /// Config-file keys of this group.
            pub const FIELDS: &'static [&'static str] = &[$(stringify!($field)),*];

            /// Field-wise `self.or(lower)`.
            pub fn or(self, lower: Self) -> Self {
                Self { $($field: self.$field.or(lower.$field),)* }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sdr,
    Mv,
    Glad,
    Ds,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sdr => "sdr",
            Self::Mv => "mv",
            Self::Glad => "glad",
            Self::Ds => "ds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StrategyArg {
    #[value(name = "largest_group")]
    LargestGroup,
    #[value(name = "highest_expertise")]
    HighestExpertise,
}

impl From<StrategyArg> for ClusterStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::LargestGroup => Self::LargestGroup,
            StrategyArg::HighestExpertise => Self::HighestExpertise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MaeModeArg {
    Ordinal,
    #[value(name = "exact_match")]
    ExactMatch,
}

impl From<MaeModeArg> for MaeMode {
    fn from(m: MaeModeArg) -> Self {
        match m {
            MaeModeArg::Ordinal => Self::Ordinal,
            MaeModeArg::ExactMatch => Self::ExactMatch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Sdr,
    Glad,
}

/// `--grid` value: inline JSON object or a path to a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSource {
    Inline(serde_json::Map<String, serde_json::Value>),
    Path(PathBuf),
}

impl FromStr for GridSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim_start().starts_with('{') {
            serde_json::from_str(s).map(Self::Inline).map_err(|e| format!("invalid grid JSON: {e}"))
        } else {
            Ok(Self::Path(s.into()))
        }
    }
}

settings! {
    pub struct InputArgs {
        /// Response file (`worker,question,response` CSV or JSON lines).
        #[arg(long)]
        pub data: Option<PathBuf>,
        /// Input format; inferred from the extension when omitted.
        #[arg(long, value_enum)]
        pub format: Option<DataFormat>,
        /// Ordered option labels; defaults to the sorted observed labels.
        #[arg(long, value_delimiter = ',')]
        pub options: Option<Vec<String>>,
        /// Gold labels (`question,label` CSV).
        #[arg(long)]
        pub gold: Option<PathBuf>,
        /// Checkpoint written by `fit`; the model is refit when omitted.
        #[arg(long)]
        pub checkpoint: Option<PathBuf>,
    }
}

settings! {
    pub struct ModelArgs {
        #[arg(long, value_enum)]
        pub model: Option<ModelKind>,
        /// Number of latent preferences.
        #[arg(long)]
        pub m: Option<usize>,
        /// Symmetric Dirichlet concentration (GLAD: truth prior pseudo-count).
        #[arg(long)]
        pub alpha: Option<f64>,
        #[arg(long)]
        pub mu_e: Option<f64>,
        #[arg(long)]
        pub sigma2_e: Option<f64>,
        #[arg(long)]
        pub mu_d: Option<f64>,
        #[arg(long)]
        pub sigma2_d: Option<f64>,
        #[arg(long)]
        pub sigma2_u: Option<f64>,
        #[arg(long)]
        pub sigma2_v: Option<f64>,
        #[arg(long)]
        pub outer_iters: Option<usize>,
        #[arg(long)]
        pub burn_in: Option<usize>,
    }
}

settings! {
    pub struct RunArgs {
        #[arg(long)]
        pub seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        pub out: Option<PathBuf>,
    }
}

settings! {
    pub struct GroupArgs {
        /// Worker group whose truths are reported.
        #[arg(long, value_enum)]
        pub strategy: Option<StrategyArg>,
    }
}

settings! {
    pub struct SubjectivityArgs {
        /// Monte Carlo rounds per question.
        #[arg(long)]
        pub t_samples: Option<usize>,
    }
}

settings! {
    pub struct ValidateArgs {
        /// Hyperparameter grid: JSON object of value lists, or a path to one.
        #[arg(long)]
        pub grid: Option<GridSource>,
        /// Held-out repetitions per configuration.
        #[arg(long)]
        pub repetitions: Option<usize>,
        #[arg(long, value_enum)]
        pub mae_mode: Option<MaeModeArg>,
    }
}

settings! {
    pub struct SimulateArgs {
        #[arg(long, value_enum)]
        pub generator: Option<Generator>,
        #[arg(long)]
        pub workers: Option<usize>,
        #[arg(long)]
        pub questions: Option<usize>,
        /// Number of answer options.
        #[arg(long)]
        pub k: Option<usize>,
        #[arg(long)]
        pub responses_per_question: Option<usize>,
        #[arg(long)]
        pub group_separation: Option<f64>,
        /// Redraw preference vectors until every pair of groups disagrees on
        /// at least this fraction of questions.
        #[arg(long)]
        pub min_disagreement: Option<f64>,
        /// Relative sizes of the generator's worker groups.
        #[arg(long, value_delimiter = ',')]
        pub group_weights: Option<Vec<f64>>,
    }
}

#[derive(Debug, Parser)]
#[command(name = "crowdtruth", version, about = "Truth inference for subjective crowdsourced answers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write a checkpoint and its objective trace.
    Fit(FitCmd),
    /// Write the inferred truth of every question.
    PredictTruth(PredictTruthCmd),
    /// Withhold one answer per worker, refit and predict the withheld answers.
    PredictWorker(PredictWorkerCmd),
    /// Generate a synthetic dataset with gold labels and generator truth.
    Simulate(SimulateCmd),
    /// Rank questions by difficulty and subjectivity.
    Subjectivity(SubjectivityCmd),
    /// Held-out grid search over hyperparameters.
    Validate(ValidateCmd),
    /// Score inferred truths against gold labels.
    Evaluate(EvaluateCmd),
}

impl Command {
    pub fn config_path(&self) -> Option<&PathBuf> {
        match self {
            Self::Fit(c) => c.config.as_ref(),
            Self::PredictTruth(c) => c.config.as_ref(),
            Self::PredictWorker(c) => c.config.as_ref(),
            Self::Simulate(c) => c.config.as_ref(),
            Self::Subjectivity(c) => c.config.as_ref(),
            Self::Validate(c) => c.config.as_ref(),
            Self::Evaluate(c) => c.config.as_ref(),
        }
    }
}

#[derive(Debug, Args)]
pub struct FitCmd {
    /// JSON run configuration; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct PredictTruthCmd {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub group: GroupArgs,
}

#[derive(Debug, Args)]
pub struct PredictWorkerCmd {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sim: SimulateArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Format of the written responses.
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
}

#[derive(Debug, Args)]
pub struct SubjectivityCmd {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub group: GroupArgs,
    #[command(flatten)]
    pub subjectivity: SubjectivityArgs,
}

#[derive(Debug, Args)]
pub struct ValidateCmd {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub validate: ValidateArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateCmd {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub group: GroupArgs,
}
