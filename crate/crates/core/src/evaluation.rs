//! Accuracy metrics, rank and partition agreement, and held-out validation
//! over a hyperparameter grid.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::clustering::{
    cluster_truth, default_max_clusters, elbow_select, kmeans_with, select_cluster, ClusterModel, ClusterStrategy,
    ClusterTruth, ElbowConfig, ElbowReport,
};
use crate::dataset::{split_holdout, GoldLabels, HoldoutSplit, ResponseMatrix, Triplet};
use crate::error::{Error, Result};
use crate::math;
use crate::rng;
use crate::sdr::{self, FitSchedule, PreferencePosterior, SdrHyperParams, SdrParams};

/// Fraction of gold-labelled questions whose prediction matches; questions
/// without gold are skipped.
pub fn truth_accuracy(predicted: &[usize], gold: &GoldLabels) -> Result<f64> {
    let hits = per_question_hits(predicted, gold)?;
    Ok(hits.values().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// Hit or miss for every gold-labelled question.
pub fn per_question_hits(predicted: &[usize], gold: &GoldLabels) -> Result<BTreeMap<usize, bool>> {
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    gold.iter()
        .map(|(j, label)| {
            predicted
                .get(j)
                .map(|&p| (j, p == label))
                .ok_or_else(|| Error::InvalidIndex(format!("gold question {j} has no prediction")))
        })
        .collect()
}

/// How option indices are compared by [`worker_accuracy_1mae`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MaeMode {
    /// `|pred - actual|` on the declared option order.
    #[default]
    Ordinal,
    /// 0 for a match, 1 otherwise.
    ExactMatch,
}

/// `1 - mean |pred - actual|`. Can fall below zero for `K > 2` in ordinal mode.
pub fn worker_accuracy_1mae(predicted: &[usize], actual: &[usize], mode: MaeMode) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch {
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::InvalidArgument("no held-out responses".into()));
    }
    let total: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(&p, &a)| match mode {
            MaeMode::Ordinal => p.abs_diff(a) as f64,
            MaeMode::ExactMatch => f64::from(u8::from(p != a)),
        })
        .sum();
    Ok(1.0 - total / actual.len() as f64)
}

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho between two keyed score lists over the same items:
/// Pearson correlation of their average ranks.
pub fn spearman_rank_correlation<K: Ord>(a: &[(K, f64)], b: &[(K, f64)]) -> Result<f64> {
    let left: BTreeMap<&K, f64> = a.iter().map(|(k, v)| (k, *v)).collect();
    let right: BTreeMap<&K, f64> = b.iter().map(|(k, v)| (k, *v)).collect();
    if left.len() != a.len() || right.len() != b.len() {
        return Err(Error::InvalidArgument("duplicate item in ranking".into()));
    }
    if left.len() != right.len() || left.keys().zip(right.keys()).any(|(x, y)| x != y) {
        return Err(Error::DisjointItems);
    }
    if left.len() < 2 {
        return Err(Error::InvalidArgument("need at least two items".into()));
    }
    let ra = average_ranks(&left.values().copied().collect::<Vec<_>>());
    let rb = average_ranks(&right.values().copied().collect::<Vec<_>>());
    let (ma, mb) = (math::mean(&ra), math::mean(&rb));
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::InvalidArgument("a ranking has no variation".into()));
    }
    Ok(cov / math::sqrt(va * vb))
}

/// Hubert-Arabie adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len();
    let pairs = |x: u64| (x * x.saturating_sub(1) / 2) as f64;
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n as u64);
    let expected = if total > 0.0 { sum_rows * sum_cols / total } else { 0.0 };
    let max = (sum_rows + sum_cols) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Candidate values for every SDR hyperparameter.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    pub preferences: Vec<usize>,
    /// Symmetric Dirichlet concentration.
    pub alpha: Vec<f64>,
    pub mu_e: Vec<f64>,
    pub sigma2_e: Vec<f64>,
    pub mu_d: Vec<f64>,
    pub sigma2_d: Vec<f64>,
    pub sigma2_u: Vec<f64>,
    pub sigma2_v: Vec<f64>,
    pub repetitions: usize,
}

impl GridSpec {
    /// A one-point grid at `hp` (its first alpha entry is used as the
    /// symmetric concentration).
    pub fn single(hp: &SdrHyperParams, repetitions: usize) -> Self {
        Self {
            preferences: vec![hp.num_preferences],
            alpha: vec![hp.alpha[0]],
            mu_e: vec![hp.mu_e],
            sigma2_e: vec![hp.sigma2_e],
            mu_d: vec![hp.mu_d],
            sigma2_d: vec![hp.sigma2_d],
            sigma2_u: vec![hp.sigma2_u],
            sigma2_v: vec![hp.sigma2_v],
            repetitions,
        }
    }

    /// Cartesian product in field order, `preferences` varying slowest.
    pub fn configs(&self) -> Result<Vec<GridConfig>> {
        let lists: [(&str, &[f64]); 7] = [
            ("alpha", &self.alpha),
            ("mu_e", &self.mu_e),
            ("sigma2_e", &self.sigma2_e),
            ("mu_d", &self.mu_d),
            ("sigma2_d", &self.sigma2_d),
            ("sigma2_u", &self.sigma2_u),
            ("sigma2_v", &self.sigma2_v),
        ];
        if self.preferences.is_empty() || lists.iter().any(|(_, l)| l.is_empty()) {
            return Err(Error::InvalidArgument("every grid list needs at least one value".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument("repetitions must be positive".into()));
        }
        let combos: usize = lists.iter().map(|(_, l)| l.len()).product();
        let mut out = Vec::with_capacity(self.preferences.len() * combos);
        for &m in &self.preferences {
            for flat in 0..combos {
                let mut v = [0.0; 7];
                let mut rest = flat;
                for (slot, (_, list)) in v.iter_mut().zip(&lists).rev() {
                    *slot = list[rest % list.len()];
                    rest /= list.len();
                }
                let mut hp = SdrHyperParams::new(m).with_alpha(v[0]);
                hp.mu_e = v[1];
                hp.sigma2_e = v[2];
                hp.mu_d = v[3];
                hp.sigma2_d = v[4];
                hp.sigma2_u = v[5];
                hp.sigma2_v = v[6];
                hp.validate()?;
                let mut id = format!("m={m}");
                for ((name, _), x) in lists.iter().zip(&v) {
                    id.push_str(&format!(",{name}={x}"));
                }
                out.push(GridConfig { id, hp });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridConfig {
    pub id: String,
    pub hp: SdrHyperParams,
}

/// A model that can be trained on a split and asked for the held-out answers.
pub trait HeldoutModel {
    type Config;

    /// Number of latent preferences, used to break ties toward simpler models.
    fn preferences(&self, _config: &Self::Config) -> usize {
        1
    }

    /// Predicted option index for every held-out triplet.
    fn fit_predict(&self, train: &ResponseMatrix, heldout: &[Triplet], config: &Self::Config, seed: u64)
        -> Result<Vec<usize>>;
}

/// SDR with a fixed fit schedule; predictions are the argmax of the
/// preference-mixed predictive distribution.
#[derive(Debug, Clone, Default)]
pub struct SdrHeldoutModel {
    pub schedule: FitSchedule,
}

impl HeldoutModel for SdrHeldoutModel {
    type Config = SdrHyperParams;

    fn preferences(&self, config: &SdrHyperParams) -> usize {
        config.num_preferences
    }

    fn fit_predict(&self, train: &ResponseMatrix, heldout: &[Triplet], hp: &SdrHyperParams, seed: u64) -> Result<Vec<usize>> {
        let fit = sdr::fit(train, hp, &self.schedule, seed)?;
        Ok(heldout
            .iter()
            .map(|t| math::argmax(&sdr::predict_response(t.worker, t.question, &fit.params, &fit.phi_hat)))
            .collect())
    }
}

impl HeldoutModel for &SdrHeldoutModel {
    type Config = SdrHyperParams;

    fn preferences(&self, config: &SdrHyperParams) -> usize {
        config.num_preferences
    }

    fn fit_predict(&self, train: &ResponseMatrix, heldout: &[Triplet], hp: &SdrHyperParams, seed: u64) -> Result<Vec<usize>> {
        (*self).fit_predict(train, heldout, hp, seed)
    }
}

/// The `repetitions` splits shared by every configuration.
pub fn holdout_splits(data: &ResponseMatrix, repetitions: usize, seed: u64) -> Result<Vec<HoldoutSplit>> {
    (0..repetitions)
        .map(|r| split_holdout(data, rng::derive_seed_indexed(seed, "validate/split", r as u64)))
        .collect()
}

/// Fit seed of repetition `r`, shared by every configuration.
pub fn repetition_seed(seed: u64, repetition: usize) -> u64 {
    rng::derive_seed_indexed(seed, "validate/fit", repetition as u64)
}

/// One grid cell: fit on the split's training part and score the held-out answers.
pub fn evaluate_cell<M: HeldoutModel>(
    model: &M,
    split: &HoldoutSplit,
    config: &M::Config,
    seed: u64,
    mode: MaeMode,
) -> Result<f64> {
    let predicted = model.fit_predict(&split.train, &split.heldout_triplets, config, seed)?;
    let actual: Vec<usize> = split.heldout_triplets.iter().map(|t| t.option).collect();
    worker_accuracy_1mae(&predicted, &actual, mode)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationRow {
    pub config_id: String,
    pub preferences: usize,
    /// Per repetition; `None` where the fit failed.
    pub scores: Vec<Option<f64>>,
    pub mean: f64,
    pub std: f64,
    pub errors: Vec<String>,
}

impl ValidationRow {
    pub fn failed(&self) -> bool {
        self.scores.iter().any(Option::is_none)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationTable {
    pub rows: Vec<ValidationRow>,
    /// Row index of the selected configuration.
    pub best: usize,
}

/// Builds the table from per-(config, repetition) results and picks the
/// highest mean; ties go to fewer preferences, then to the earlier config.
/// Configurations with any failed cell are not eligible.
pub fn summarize_validation(configs: &[(String, usize)], cells: Vec<Vec<Result<f64>>>) -> Result<ValidationTable> {
    let rows: Vec<ValidationRow> = configs
        .iter()
        .zip(cells)
        .map(|((id, m), results)| {
            let mut errors = Vec::new();
            let scores: Vec<Option<f64>> = results
                .into_iter()
                .map(|r| r.map_err(|e| errors.push(e.to_string())).ok())
                .collect();
            let ok: Vec<f64> = scores.iter().flatten().copied().collect();
            ValidationRow {
                config_id: id.clone(),
                preferences: *m,
                mean: math::mean(&ok),
                std: math::std_dev(&ok),
                scores,
                errors,
            }
        })
        .collect();
    let mut best: Option<usize> = None;
    for (idx, row) in rows.iter().enumerate() {
        if row.failed() || row.scores.is_empty() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let cur = &rows[b];
                row.mean > cur.mean || (row.mean == cur.mean && row.preferences < cur.preferences)
            }
        };
        if better {
            best = Some(idx);
        }
    }
    let best = best.ok_or(Error::NoValidConfig)?;
    Ok(ValidationTable { rows, best })
}

/// Sequential held-out validation: every configuration is scored on the
/// same `repetitions` splits with the same per-repetition fit seeds.
pub fn holdout_validate<M: HeldoutModel>(
    data: &ResponseMatrix,
    model: &M,
    configs: &[(String, M::Config)],
    repetitions: usize,
    seed: u64,
    mode: MaeMode,
) -> Result<ValidationTable> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("grid is empty".into()));
    }
    let splits = holdout_splits(data, repetitions, seed)?;
    let cells = configs
        .iter()
        .map(|(_, config)| {
            splits
                .iter()
                .enumerate()
                .map(|(r, split)| evaluate_cell(model, split, config, repetition_seed(seed, r), mode))
                .collect()
        })
        .collect();
    let ids: Vec<(String, usize)> = configs.iter().map(|(id, c)| (id.clone(), model.preferences(c))).collect();
    summarize_validation(&ids, cells)
}

/// Worker groups and the truths reported for the chosen group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTruths {
    pub elbow: ElbowReport,
    pub clusters: ClusterModel,
    pub truth: ClusterTruth,
    pub selected: usize,
}

impl GroupTruths {
    /// Predicted truth per question for the selected group.
    pub fn predicted(&self) -> &[usize] {
        &self.truth.argmax[self.selected]
    }
}

/// Elbow-selected K-means on `phi_hat`, group-conditional truths, and the
/// group chosen by `strategy`.
pub fn group_truths(
    phi_hat: &PreferencePosterior,
    params: &SdrParams,
    strategy: ClusterStrategy,
    seed: u64,
    config: &ElbowConfig,
) -> Result<GroupTruths> {
    let points = &phi_hat.phi_hat;
    let (c, elbow) = elbow_select(points, default_max_clusters(points.rows()), seed, config)?;
    let clusters = kmeans_with(points, c, rng::derive_seed(seed, "groups/kmeans"), &config.kmeans)?;
    let truth = cluster_truth(&clusters, params)?;
    let selected = select_cluster(&clusters, params, strategy);
    Ok(GroupTruths {
        elbow,
        clusters,
        truth,
        selected,
    })
}

/// Summary metrics of one run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub config_id: String,
    pub truth_accuracy: Option<f64>,
    pub worker_accuracy_1mae: Option<f64>,
    /// `(question index, hit)` for gold-labelled questions.
    pub per_question_hits: Vec<(usize, bool)>,
}

impl MetricReport {
    pub fn from_truth(config_id: impl Into<String>, predicted: &[usize], gold: &GoldLabels) -> Result<Self> {
        let hits = per_question_hits(predicted, gold)?;
        let acc = hits.values().filter(|&&h| h).count() as f64 / hits.len() as f64;
        Ok(Self {
            config_id: config_id.into(),
            truth_accuracy: Some(acc),
            worker_accuracy_1mae: None,
            per_question_hits: hits.into_iter().collect(),
        })
    }
}
