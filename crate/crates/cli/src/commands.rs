//! Command implementations. Each command resolves its settings (flags over
//! config file over defaults), runs the pipeline and writes its exports
//! into the output directory.

use std::path::{Path, PathBuf};

use crowdtruth_core::baselines::{self, TruthEstimate};
use crowdtruth_core::clustering::{ClusterStrategy, ElbowConfig};
use crowdtruth_core::dataset::{split_holdout, ResponseMatrix};
use crowdtruth_core::evaluation::{
    self, evaluate_cell, holdout_splits, repetition_seed, GridSpec, GroupTruths, MaeMode, MetricReport,
    SdrHeldoutModel, ValidationRow,
};
use crowdtruth_core::sdr::{self, FitTrace, SdrHyperParams};
use crowdtruth_core::subjectivity::{self, DEFAULT_SAMPLES};
use crowdtruth_core::synth::{self, GladSynthSpec, SynthSpec};
use crowdtruth_core::{math, rng};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{
    Command, EvaluateCmd, FitCmd, Generator, GroupArgs, InputArgs, ModelArgs, ModelKind, PredictTruthCmd,
    PredictWorkerCmd, RunArgs, SimulateCmd, StrategyArg, SubjectivityCmd, ValidateCmd,
};
use crate::checkpoint::{Checkpoint, Fitted};
use crate::config::{RunConfig, DEFAULT_REPETITIONS, DEFAULT_SEED};
use crate::error::{CliError, Result};
use crate::io::{self, DataFormat};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "CROWDTRUTH_THREADS";

/// What a command wrote and a short human-readable summary.
#[derive(Debug, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub summary: Vec<String>,
}

impl Outcome {
    fn wrote(&mut self, path: PathBuf) {
        self.written.push(path);
    }
}

pub fn run(command: Command) -> Result<Outcome> {
    let config = RunConfig::load_opt(command.config_path())?;
    match command {
        Command::Fit(c) => fit(c, config),
        Command::PredictTruth(c) => predict_truth(c, config),
        Command::PredictWorker(c) => predict_worker(c, config),
        Command::Simulate(c) => simulate(c, config),
        Command::Subjectivity(c) => subjectivity(c, config),
        Command::Validate(c) => validate(c, config),
        Command::Evaluate(c) => evaluate(c, config),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Invalid(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start thread pool: {e}")))
}

fn load_data(input: &InputArgs) -> Result<ResponseMatrix> {
    let path = input.data.as_deref().ok_or(CliError::Missing("data"))?;
    io::load_responses(path, input.format, input.options.as_deref())
}

fn out_dir(run: &RunArgs) -> Result<&Path> {
    run.out.as_deref().ok_or(CliError::Missing("out"))
}

fn strategy(group: &GroupArgs) -> ClusterStrategy {
    group.strategy.unwrap_or(StrategyArg::LargestGroup).into()
}

/// The fitted model and its objective trace.
struct FitOutput {
    fitted: Fitted,
    trace: TraceFile,
}

#[derive(Serialize)]
#[serde(tag = "model", rename_all = "lowercase")]
enum TraceFile {
    Sdr {
        seed: u64,
        #[serde(flatten)]
        trace: FitTrace,
    },
    Mv {
        seed: u64,
    },
    Glad {
        seed: u64,
        objective: Vec<f64>,
        converged: bool,
    },
    Ds {
        seed: u64,
        objective: Vec<f64>,
        converged: bool,
    },
}

fn fit_model(data: &ResponseMatrix, model: &ModelArgs, seed: u64) -> Result<FitOutput> {
    Ok(match model.kind() {
        ModelKind::Sdr => {
            let hp = model.hyper_params()?;
            let schedule = model.schedule()?;
            let fit = sdr::fit(data, &hp, &schedule, rng::derive_seed(seed, "cli/fit"))?;
            FitOutput {
                trace: TraceFile::Sdr { seed, trace: fit.trace },
                fitted: Fitted::Sdr {
                    hp,
                    schedule,
                    params: fit.params,
                    phi_hat: fit.phi_hat,
                },
            }
        }
        ModelKind::Mv => FitOutput {
            trace: TraceFile::Mv { seed },
            fitted: Fitted::Mv {
                truth: baselines::majority_vote(data),
            },
        },
        ModelKind::Glad => {
            let priors = model.glad_priors()?;
            let fit = baselines::glad_fit(data, &priors)?;
            FitOutput {
                trace: TraceFile::Glad {
                    seed,
                    objective: fit.trace,
                    converged: fit.converged,
                },
                fitted: Fitted::Glad {
                    priors,
                    params: fit.params,
                    truth: fit.estimate,
                },
            }
        }
        ModelKind::Ds => {
            let config = model.ds_config();
            let fit = baselines::ds_fit(data, &config)?;
            FitOutput {
                trace: TraceFile::Ds {
                    seed,
                    objective: fit.trace,
                    converged: fit.converged,
                },
                fitted: Fitted::Ds {
                    config,
                    params: fit.params,
                    truth: fit.estimate,
                },
            }
        }
    })
}

/// The model from `--checkpoint` (checked against the data), or a fresh
/// fit. Without `--seed` the checkpoint's seed is reused.
fn resolve_model(data: &ResponseMatrix, input: &InputArgs, model: &ModelArgs, run: &RunArgs) -> Result<(Fitted, u64)> {
    match &input.checkpoint {
        Some(path) => {
            let cp = Checkpoint::load(path)?;
            cp.verify(data)?;
            if let Some(kind) = model.model.filter(|&k| k != cp.fitted.kind()) {
                return Err(CliError::Invalid(format!(
                    "--model {} conflicts with the checkpoint's model {}",
                    kind.name(),
                    cp.fitted.kind().name()
                )));
            }
            Ok((cp.fitted, run.seed.unwrap_or(cp.seed)))
        }
        None => {
            let seed = run.seed.unwrap_or(DEFAULT_SEED);
            Ok((fit_model(data, model, seed)?.fitted, seed))
        }
    }
}

fn group_truths(fitted: &Fitted, strategy: ClusterStrategy, seed: u64) -> Result<Option<GroupTruths>> {
    match fitted {
        Fitted::Sdr { params, phi_hat, .. } => Ok(Some(evaluation::group_truths(
            phi_hat,
            params,
            strategy,
            rng::derive_seed(seed, "cli/groups"),
            &ElbowConfig::default(),
        )?)),
        _ => Ok(None),
    }
}

struct Truths {
    predicted: Vec<usize>,
    confidence: Vec<f64>,
    groups: Option<GroupTruths>,
}

fn infer_truths(fitted: &Fitted, strategy: ClusterStrategy, seed: u64) -> Result<Truths> {
    let from_estimate = |t: &TruthEstimate| Truths {
        predicted: t.argmax.clone(),
        confidence: (0..t.num_questions()).map(|j| t.confidence(j)).collect(),
        groups: None,
    };
    Ok(match fitted {
        Fitted::Sdr { .. } => {
            let groups = group_truths(fitted, strategy, seed)?.expect("sdr model has groups");
            let dist = &groups.truth.dist[groups.selected];
            let predicted = groups.predicted().to_vec();
            let confidence = predicted.iter().enumerate().map(|(j, &k)| dist.get(j, k)).collect();
            Truths {
                predicted,
                confidence,
                groups: Some(groups),
            }
        }
        Fitted::Mv { truth } | Fitted::Glad { truth, .. } | Fitted::Ds { truth, .. } => from_estimate(truth),
    })
}

#[derive(Serialize)]
struct ElbowExport<'a> {
    chosen: usize,
    curve: &'a [f64],
    folds: usize,
    cluster_sizes: &'a [usize],
    centroids: Vec<&'a [f64]>,
    strategy: ClusterStrategy,
    selected_cluster: usize,
}

fn write_groups(out: &Path, data: &ResponseMatrix, groups: &GroupTruths, strategy: ClusterStrategy, outcome: &mut Outcome) -> Result<()> {
    let clusters = out.join("clusters.csv");
    io::write_clusters_csv(&clusters, data, &groups.clusters.assignment)?;
    outcome.wrote(clusters);
    let elbow = out.join("elbow.json");
    io::write_json(
        &elbow,
        &ElbowExport {
            chosen: groups.elbow.chosen,
            curve: &groups.elbow.curve,
            folds: groups.elbow.folds,
            cluster_sizes: &groups.clusters.sizes,
            centroids: groups.clusters.centroids.iter_rows().collect(),
            strategy,
            selected_cluster: groups.selected,
        },
    )?;
    outcome.wrote(elbow);
    outcome.summary.push(format!(
        "{} worker groups; reporting group {} of size {}",
        groups.clusters.num_clusters(),
        groups.selected,
        groups.clusters.sizes[groups.selected]
    ));
    Ok(())
}

fn fit(cmd: FitCmd, config: RunConfig) -> Result<Outcome> {
    let input = cmd.input.or(config.input);
    let model = cmd.model.or(config.model);
    let run = cmd.run.or(config.run);
    let data = load_data(&input)?;
    let out = out_dir(&run)?;
    let seed = run.seed.unwrap_or(DEFAULT_SEED);
    let output = fit_model(&data, &model, seed)?;
    let mut outcome = Outcome::default();
    let checkpoint = out.join("checkpoint.json");
    Checkpoint::new(&data, seed, output.fitted).save(&checkpoint)?;
    outcome.wrote(checkpoint);
    let trace = out.join("trace.json");
    io::write_json(&trace, &output.trace)?;
    outcome.wrote(trace);
    outcome.summary.push(format!(
        "fitted {} on {} workers, {} questions, {} responses",
        model.kind().name(),
        data.num_workers(),
        data.num_questions(),
        data.num_responses()
    ));
    Ok(outcome)
}

fn predict_truth(cmd: PredictTruthCmd, config: RunConfig) -> Result<Outcome> {
    let input = cmd.input.or(config.input);
    let model = cmd.model.or(config.model);
    let run = cmd.run.or(config.run);
    let group = cmd.group.or(config.group);
    let data = load_data(&input)?;
    let out = out_dir(&run)?;
    let (fitted, seed) = resolve_model(&data, &input, &model, &run)?;
    let strategy = strategy(&group);
    let truths = infer_truths(&fitted, strategy, seed)?;
    let mut outcome = Outcome::default();
    let path = out.join("truth.csv");
    io::write_truth_csv(&path, &data, &truths.predicted, &truths.confidence)?;
    outcome.wrote(path);
    if let Some(groups) = &truths.groups {
        write_groups(out, &data, groups, strategy, &mut outcome)?;
    }
    Ok(outcome)
}

/// Predictive distribution over worker `i`'s answer to question `j`.
fn predictive(fitted: &Fitted, i: usize, j: usize) -> Vec<f64> {
    match fitted {
        Fitted::Sdr { params, phi_hat, .. } => sdr::predict_response(i, j, params, phi_hat),
        Fitted::Mv { truth } => truth.posterior.row(j).to_vec(),
        Fitted::Glad { params, truth, .. } => {
            let post = truth.posterior.row(j);
            let k_count = post.len();
            let p = params.correct_prob(i, j);
            let off = (1.0 - p) / (k_count - 1) as f64;
            (0..k_count)
                .map(|r| post.iter().enumerate().map(|(l, &w)| w * if l == r { p } else { off }).sum())
                .collect()
        }
        Fitted::Ds { params, truth, .. } => {
            let post = truth.posterior.row(j);
            let confusion = &params.confusion[i];
            (0..post.len())
                .map(|r| post.iter().enumerate().map(|(l, &w)| w * confusion.get(l, r)).sum())
                .collect()
        }
    }
}

fn predict_worker(cmd: PredictWorkerCmd, config: RunConfig) -> Result<Outcome> {
    let input = cmd.input.or(config.input);
    let model = cmd.model.or(config.model);
    let run = cmd.run.or(config.run);
    let data = load_data(&input)?;
    let out = out_dir(&run)?;
    let seed = run.seed.unwrap_or(DEFAULT_SEED);
    let split = split_holdout(&data, rng::derive_seed(seed, "cli/holdout"))?;
    let fitted = fit_model(&split.train, &model, seed)?.fitted;
    let predicted: Vec<usize> = split
        .heldout_triplets
        .iter()
        .map(|t| math::argmax(&predictive(&fitted, t.worker, t.question)))
        .collect();
    let actual: Vec<usize> = split.heldout_triplets.iter().map(|t| t.option).collect();
    let mut outcome = Outcome::default();
    let path = out.join("predictions.csv");
    io::write_predictions_csv(&path, &data, &split.heldout_triplets, &predicted)?;
    outcome.wrote(path);
    if !actual.is_empty() {
        let score = evaluation::worker_accuracy_1mae(&predicted, &actual, MaeMode::Ordinal)?;
        outcome
            .summary
            .push(format!("held-out 1-MAE {score:.4} over {} responses", actual.len()));
    }
    Ok(outcome)
}

#[derive(Serialize)]
struct GladTruthExport<'a> {
    e: &'a [f64],
    d: &'a [f64],
    theta: &'a [f64],
}

fn simulate(cmd: SimulateCmd, config: RunConfig) -> Result<Outcome> {
    let model = cmd.model.or(config.model);
    let sim = cmd.sim.or(config.simulate);
    let run = cmd.run.or(config.run);
    let format = cmd.format.or(config.input.format).unwrap_or(DataFormat::Csv);
    let out = out_dir(&run)?;
    let seed = run.seed.unwrap_or(DEFAULT_SEED);
    let workers = sim.workers.unwrap_or(100);
    let questions = sim.questions.unwrap_or(200);
    let options = sim.k.unwrap_or(2);

    let responses = out.join(match format {
        DataFormat::Csv => "responses.csv",
        DataFormat::Jsonl => "responses.jsonl",
    });
    let gold_path = out.join("gold.csv");
    let truth_path = out.join("truth.json");
    let data = match sim.generator.unwrap_or(Generator::Sdr) {
        Generator::Sdr => {
            let hp: SdrHyperParams = model.hyper_params()?;
            let mut spec = SynthSpec::new(workers, questions, options, hp, seed);
            if let Some(r) = sim.responses_per_question {
                spec.responses_per_question = r;
            }
            if let Some(s) = sim.group_separation {
                spec.group_separation = s;
            }
            if let Some(d) = sim.min_disagreement {
                spec.min_disagreement = d;
            }
            spec.group_weights = sim.group_weights.clone();
            let (data, truth) = synth::generate_sdr(&spec)?;
            io::write_gold(&gold_path, &data, &truth.gold_labels(&data)?)?;
            io::write_json(&truth_path, &truth)?;
            data
        }
        Generator::Glad => {
            let mut spec = GladSynthSpec::new(workers, questions, options, seed);
            if let Some(a) = model.alpha {
                spec.gamma = vec![a; options];
            }
            spec.mu_e = model.mu_e.unwrap_or(spec.mu_e);
            spec.sigma2_e = model.sigma2_e.unwrap_or(spec.sigma2_e);
            spec.mu_d = model.mu_d.unwrap_or(spec.mu_d);
            spec.sigma2_d = model.sigma2_d.unwrap_or(spec.sigma2_d);
            spec.responses_per_question = sim.responses_per_question;
            let (data, truth) = synth::generate_glad(&spec)?;
            io::write_gold(&gold_path, &data, &truth.gold)?;
            io::write_json(
                &truth_path,
                &GladTruthExport {
                    e: &truth.e,
                    d: &truth.d,
                    theta: &truth.theta,
                },
            )?;
            data
        }
    };
    io::write_responses(&responses, &data, format)?;
    let mut outcome = Outcome::default();
    outcome.written.extend([responses, gold_path, truth_path]);
    outcome.summary.push(format!(
        "generated {} responses from {} workers on {} questions",
        data.num_responses(),
        data.num_workers(),
        data.num_questions()
    ));
    Ok(outcome)
}

fn subjectivity(cmd: SubjectivityCmd, config: RunConfig) -> Result<Outcome> {
    let input = cmd.input.or(config.input);
    let model = cmd.model.or(config.model);
    let run = cmd.run.or(config.run);
    let group = cmd.group.or(config.group);
    let samples = cmd.subjectivity.or(config.subjectivity).t_samples.unwrap_or(DEFAULT_SAMPLES);
    let data = load_data(&input)?;
    let out = out_dir(&run)?;
    let (fitted, seed) = resolve_model(&data, &input, &model, &run)?;
    let Fitted::Sdr { params, .. } = &fitted else {
        return Err(CliError::Invalid("subjectivity needs an sdr model".into()));
    };
    let strategy = strategy(&group);
    let groups = group_truths(&fitted, strategy, seed)?.expect("sdr model has groups");
    let mc_seed = rng::derive_seed(seed, "cli/subjectivity");
    let estimates = thread_pool()?.install(|| {
        (0..data.num_questions())
            .into_par_iter()
            .map(|j| subjectivity::mc_subjectivity(j, &groups.clusters, params, samples, mc_seed))
            .collect::<crowdtruth_core::Result<Vec<_>>>()
    })?;
    let rankings = subjectivity::rank_questions(params, &estimates)?;
    let mut outcome = Outcome::default();
    let path = out.join("rankings.csv");
    io::write_rankings_csv(&path, &data, &params.d, &estimates, &rankings)?;
    outcome.wrote(path);
    write_groups(out, &data, &groups, strategy, &mut outcome)?;
    Ok(outcome)
}

#[derive(Serialize)]
struct BestExport<'a> {
    config_id: &'a str,
    hp: &'a SdrHyperParams,
    mean: f64,
    std: f64,
    repetitions: usize,
}

fn validate(cmd: ValidateCmd, config: RunConfig) -> Result<Outcome> {
    let input = cmd.input.or(config.input);
    let model = cmd.model.or(config.model);
    let run = cmd.run.or(config.run);
    let settings = cmd.validate.or(config.validate);
    if model.kind() != ModelKind::Sdr {
        return Err(CliError::Invalid("validate tunes sdr hyperparameters only".into()));
    }
    let data = load_data(&input)?;
    let out = out_dir(&run)?;
    let seed = run.seed.unwrap_or(DEFAULT_SEED);
    let repetitions = settings.repetitions.unwrap_or(DEFAULT_REPETITIONS);
    let mode: MaeMode = settings.mae_mode.map_or(MaeMode::default(), Into::into);
    let grid: GridSpec = model.grid(settings.grid.as_ref(), repetitions)?;
    let configs = grid.configs()?;
    let heldout = SdrHeldoutModel {
        schedule: model.schedule()?,
    };
    let splits = holdout_splits(&data, repetitions, seed)?;
    let mut flat = thread_pool()?.install(|| {
        (0..configs.len() * repetitions)
            .into_par_iter()
            .map(|cell| {
                let (c, r) = (cell / repetitions, cell % repetitions);
                evaluate_cell(&heldout, &splits[r], &configs[c].hp, repetition_seed(seed, r), mode)
            })
            .collect::<Vec<_>>()
    })
    .into_iter();
    let cells: Vec<Vec<_>> = configs
        .iter()
        .map(|_| flat.by_ref().take(repetitions).collect())
        .collect();
    let ids: Vec<(String, usize)> = configs
        .iter()
        .map(|c| (c.id.clone(), c.hp.num_preferences))
        .collect();
    let table = evaluation::summarize_validation(&ids, cells)?;

    let mut outcome = Outcome::default();
    let results = out.join("results.csv");
    io::write_results_csv(&results, &table)?;
    outcome.wrote(results);
    let row: &ValidationRow = &table.rows[table.best];
    let best = out.join("best.json");
    io::write_json(
        &best,
        &BestExport {
            config_id: &row.config_id,
            hp: &configs[table.best].hp,
            mean: row.mean,
            std: row.std,
            repetitions: row.scores.iter().flatten().count(),
        },
    )?;
    outcome.wrote(best);
    for r in table.rows.iter().filter(|r| r.failed()) {
        log::warn!("configuration {} failed: {}", r.config_id, r.errors.join("; "));
    }
    outcome
        .summary
        .push(format!("best configuration {} (mean 1-MAE {:.4})", row.config_id, row.mean));
    Ok(outcome)
}

fn evaluate(cmd: EvaluateCmd, config: RunConfig) -> Result<Outcome> {
    let input = cmd.input.or(config.input);
    let model = cmd.model.or(config.model);
    let run = cmd.run.or(config.run);
    let group = cmd.group.or(config.group);
    let gold_path = input.gold.clone().ok_or(CliError::Missing("gold"))?;
    let data = load_data(&input)?;
    let out = out_dir(&run)?;
    let gold = io::load_gold(&gold_path, &data)?;
    let (fitted, seed) = resolve_model(&data, &input, &model, &run)?;
    let truths = infer_truths(&fitted, strategy(&group), seed)?;
    let config_id = match &fitted {
        Fitted::Sdr { hp, .. } => GridSpec::single(hp, 1).configs()?.remove(0).id,
        other => other.kind().name().to_string(),
    };
    let report = MetricReport::from_truth(config_id, &truths.predicted, &gold)?;
    let mut outcome = Outcome::default();
    let path = out.join("metrics.json");
    io::write_json(&path, &report)?;
    outcome.wrote(path);
    if let Some(acc) = report.truth_accuracy {
        outcome
            .summary
            .push(format!("truth accuracy {acc:.4} on {} gold questions", gold.len()));
    }
    Ok(outcome)
}
