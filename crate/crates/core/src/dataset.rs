//! Response data: encoding of labelled records into dense indices, gold
//! labels, and the one-response-per-worker held-out split.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng;

/// One labelled response as it appears in an input file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResponseRecord {
    pub worker: String,
    pub question: String,
    #[cfg_attr(feature = "serde", serde(rename = "response"))]
    pub option: String,
}

impl ResponseRecord {
    pub fn new(worker: impl Into<String>, question: impl Into<String>, option: impl Into<String>) -> Self {
        Self {
            worker: worker.into(),
            question: question.into(),
            option: option.into(),
        }
    }
}

/// A response in index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Triplet {
    pub worker: usize,
    pub question: usize,
    pub option: usize,
}

/// Sparse worker x question matrix of categorical responses.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    workers: Vec<String>,
    questions: Vec<String>,
    options: Vec<String>,
    triplets: Vec<Triplet>,
    by_worker: Vec<Vec<usize>>,
    by_question: Vec<Vec<usize>>,
}

impl ResponseMatrix {
    /// Encodes labelled records. Workers and questions are indexed in sorted
    /// identifier order; options follow `options` when given, otherwise the
    /// sorted set of observed labels. Triplets keep the record order.
    pub fn from_records(records: &[ResponseRecord], options: Option<&[String]>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let workers: Vec<String> = records
            .iter()
            .map(|r| r.worker.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let questions: Vec<String> = records
            .iter()
            .map(|r| r.question.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let options: Vec<String> = match options {
            Some(list) => {
                let unique: BTreeSet<&String> = list.iter().collect();
                if unique.len() != list.len() {
                    return Err(Error::InvalidArgument("option list contains duplicates".into()));
                }
                list.to_vec()
            }
            None => records
                .iter()
                .map(|r| r.option.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        };
        if options.len() < 2 {
            return Err(Error::TooFewOptions(options.len()));
        }

        let worker_index = index_map(&workers);
        let question_index = index_map(&questions);
        let option_index = index_map(&options);

        let mut seen = BTreeSet::new();
        let mut triplets = Vec::with_capacity(records.len());
        for r in records {
            let option = *option_index
                .get(r.option.as_str())
                .ok_or_else(|| Error::UnknownOption(r.option.clone()))?;
            let worker = worker_index[r.worker.as_str()];
            let question = question_index[r.question.as_str()];
            if !seen.insert((worker, question)) {
                return Err(Error::DuplicateResponse {
                    worker: r.worker.clone(),
                    question: r.question.clone(),
                });
            }
            triplets.push(Triplet {
                worker,
                question,
                option,
            });
        }
        Self::from_parts(workers, questions, options, triplets)
    }

    /// Builds a matrix directly from index-space parts, validating every invariant.
    pub fn from_parts(
        workers: Vec<String>,
        questions: Vec<String>,
        options: Vec<String>,
        triplets: Vec<Triplet>,
    ) -> Result<Self> {
        if triplets.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if options.len() < 2 {
            return Err(Error::TooFewOptions(options.len()));
        }
        let mut by_worker = vec![Vec::new(); workers.len()];
        let mut by_question = vec![Vec::new(); questions.len()];
        let mut seen = BTreeSet::new();
        for (t, tr) in triplets.iter().enumerate() {
            if tr.worker >= workers.len() || tr.question >= questions.len() || tr.option >= options.len() {
                return Err(Error::InvalidIndex(format!("triplet {t} out of bounds: {tr:?}")));
            }
            if !seen.insert((tr.worker, tr.question)) {
                return Err(Error::DuplicateResponse {
                    worker: workers[tr.worker].clone(),
                    question: questions[tr.question].clone(),
                });
            }
            by_worker[tr.worker].push(t);
            by_question[tr.question].push(t);
        }
        if let Some(i) = by_worker.iter().position(Vec::is_empty) {
            return Err(Error::InvalidIndex(format!("worker `{}` has no responses", workers[i])));
        }
        if let Some(j) = by_question.iter().position(Vec::is_empty) {
            return Err(Error::InvalidIndex(format!("question `{}` has no responses", questions[j])));
        }
        Ok(Self {
            workers,
            questions,
            options,
            triplets,
            by_worker,
            by_question,
        })
    }

    /// Same index sets, different response subset. Used for held-out training sets.
    fn with_triplets(&self, triplets: Vec<Triplet>) -> Result<Self> {
        Self::from_parts(
            self.workers.clone(),
            self.questions.clone(),
            self.options.clone(),
            triplets,
        )
    }

    pub fn num_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn num_questions(&self) -> usize {
        self.questions.len()
    }

    pub fn num_options(&self) -> usize {
        self.options.len()
    }

    pub fn num_responses(&self) -> usize {
        self.triplets.len()
    }

    pub fn workers(&self) -> &[String] {
        &self.workers
    }

    pub fn questions(&self) -> &[String] {
        &self.questions
    }

    pub fn options(&self) -> &[String] {
        &self.options
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    /// Positions in [`Self::triplets`] of worker `i`'s responses.
    pub fn worker_responses(&self, i: usize) -> &[usize] {
        &self.by_worker[i]
    }

    /// Positions in [`Self::triplets`] of the responses to question `j`.
    pub fn question_responses(&self, j: usize) -> &[usize] {
        &self.by_question[j]
    }

    pub fn worker_index(&self, id: &str) -> Option<usize> {
        self.workers.binary_search_by(|w| w.as_str().cmp(id)).ok()
    }

    pub fn question_index(&self, id: &str) -> Option<usize> {
        self.questions.binary_search_by(|q| q.as_str().cmp(id)).ok()
    }

    pub fn option_index(&self, label: &str) -> Option<usize> {
        self.options.iter().position(|o| o == label)
    }

    pub fn decode(&self, t: &Triplet) -> ResponseRecord {
        ResponseRecord::new(
            self.workers[t.worker].clone(),
            self.questions[t.question].clone(),
            self.options[t.option].clone(),
        )
    }

    pub fn encode(&self, r: &ResponseRecord) -> Result<Triplet> {
        let worker = self
            .worker_index(&r.worker)
            .ok_or_else(|| Error::InvalidIndex(format!("unknown worker `{}`", r.worker)))?;
        let question = self
            .question_index(&r.question)
            .ok_or_else(|| Error::InvalidIndex(format!("unknown question `{}`", r.question)))?;
        let option = self
            .option_index(&r.option)
            .ok_or_else(|| Error::UnknownOption(r.option.clone()))?;
        Ok(Triplet {
            worker,
            question,
            option,
        })
    }

    pub fn records(&self) -> Vec<ResponseRecord> {
        self.triplets.iter().map(|t| self.decode(t)).collect()
    }
}

fn index_map(labels: &[String]) -> BTreeMap<&str, usize> {
    labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect()
}

/// Known correct answers keyed by question index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldLabels {
    labels: BTreeMap<usize, usize>,
}

impl GoldLabels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates `(question, option)` index pairs against `data`.
    pub fn from_indices(data: &ResponseMatrix, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut labels = BTreeMap::new();
        for (j, k) in pairs {
            if j >= data.num_questions() {
                return Err(Error::InvalidIndex(format!("gold question index {j}")));
            }
            if k >= data.num_options() {
                return Err(Error::InvalidIndex(format!("gold option index {k}")));
            }
            labels.insert(j, k);
        }
        Ok(Self { labels })
    }

    /// Encodes `(question id, option label)` pairs against `data`.
    pub fn from_labels<'a>(
        data: &ResponseMatrix,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let mut labels = BTreeMap::new();
        for (q, l) in pairs {
            let j = data
                .question_index(q)
                .ok_or_else(|| Error::InvalidIndex(format!("gold question `{q}` not in dataset")))?;
            let k = data.option_index(l).ok_or_else(|| Error::UnknownOption(l.into()))?;
            labels.insert(j, k);
        }
        Ok(Self { labels })
    }

    pub fn get(&self, question: usize) -> Option<usize> {
        self.labels.get(&question).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels.iter().map(|(&j, &k)| (j, k))
    }
}

/// Unchecked construction from `(question, option)` index pairs.
impl FromIterator<(usize, usize)> for GoldLabels {
    fn from_iter<T: IntoIterator<Item = (usize, usize)>>(iter: T) -> Self {
        Self {
            labels: iter.into_iter().collect(),
        }
    }
}

/// Training matrix plus one withheld response per eligible worker.
#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub train: ResponseMatrix,
    pub heldout: Vec<ResponseRecord>,
    /// `heldout` in the index space of `train`.
    pub heldout_triplets: Vec<Triplet>,
    /// Workers that kept all their responses in `train`.
    pub excluded_workers: Vec<usize>,
    pub seed: u64,
}

/// Withholds one random response per worker, never leaving a question
/// without training responses. Workers with a single response, or whose
/// every response is the last one for its question, stay entirely in
/// training and are listed in `excluded_workers`.
pub fn split_holdout(data: &ResponseMatrix, seed: u64) -> Result<HoldoutSplit> {
    if data.num_responses() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = rng::stream(seed, "holdout");
    let mut remaining: Vec<usize> = (0..data.num_questions())
        .map(|j| data.question_responses(j).len())
        .collect();
    let mut withheld = vec![false; data.num_responses()];
    let mut heldout_positions = Vec::new();
    let mut excluded_workers = Vec::new();

    for i in 0..data.num_workers() {
        let responses = data.worker_responses(i);
        if responses.len() < 2 {
            log::warn!(
                "worker `{}` has a single response; kept in training and skipped for holdout",
                data.workers()[i]
            );
            excluded_workers.push(i);
            continue;
        }
        let mut candidates = responses.to_vec();
        rng::shuffle(&mut rng, &mut candidates);
        match candidates
            .into_iter()
            .find(|&t| remaining[data.triplets()[t].question] >= 2)
        {
            Some(t) => {
                remaining[data.triplets()[t].question] -= 1;
                withheld[t] = true;
                heldout_positions.push(t);
            }
            None => {
                log::warn!(
                    "every response of worker `{}` is the last one for its question; skipped for holdout",
                    data.workers()[i]
                );
                excluded_workers.push(i);
            }
        }
    }

    let train_triplets: Vec<Triplet> = data
        .triplets()
        .iter()
        .zip(&withheld)
        .filter(|(_, &w)| !w)
        .map(|(t, _)| *t)
        .collect();
    let heldout_triplets: Vec<Triplet> = heldout_positions.iter().map(|&t| data.triplets()[t]).collect();
    let heldout = heldout_triplets.iter().map(|t| data.decode(t)).collect();
    Ok(HoldoutSplit {
        train: data.with_triplets(train_triplets)?,
        heldout,
        heldout_triplets,
        excluded_workers,
        seed,
    })
}
