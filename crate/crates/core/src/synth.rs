//! Synthetic datasets drawn from the response model and from GLAD, used as
//! ground truth for recovery tests.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{GoldLabels, ResponseMatrix, Triplet};
use crate::error::{Error, Result};
use crate::link::{corruption_prob, CorrectnessLink};
use crate::math::{self, Matrix};
use crate::rng::{self, StreamRng};
use crate::sdr::{truth_softmax, SdrHyperParams, SdrParams};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthSpec {
    pub workers: usize,
    pub questions: usize,
    pub options: usize,
    /// Priors the parameters are drawn from; `hp.num_preferences` is `M`.
    pub hp: SdrHyperParams,
    pub responses_per_question: usize,
    /// Mass added to each worker's dominant preference before renormalising.
    pub group_separation: f64,
    /// Distribution of dominant groups; uniform when `None`.
    pub group_weights: Option<Vec<f64>>,
    /// Redraw `u` until every pair of preferences has different argmax
    /// truths on at least this fraction of questions.
    pub min_disagreement: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(workers: usize, questions: usize, options: usize, hp: SdrHyperParams, seed: u64) -> Self {
        Self {
            workers,
            questions,
            options,
            hp,
            responses_per_question: workers.min(5),
            group_separation: 0.0,
            group_weights: None,
            min_disagreement: 0.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        if self.workers == 0 || self.questions == 0 {
            return Err(Error::InvalidArgument("workers and questions must be positive".into()));
        }
        if self.options < 2 {
            return Err(Error::TooFewOptions(self.options));
        }
        if self.responses_per_question == 0 || self.responses_per_question > self.workers {
            return Err(Error::InvalidArgument(
                "responses_per_question must lie in 1..=workers".into(),
            ));
        }
        if !(self.group_separation >= 0.0) {
            return Err(Error::InvalidArgument("group_separation must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.min_disagreement) {
            return Err(Error::InvalidArgument("min_disagreement must lie in [0, 1]".into()));
        }
        if let Some(w) = &self.group_weights {
            if w.len() != self.hp.num_preferences || w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::InvalidArgument("group_weights must be M non-negative weights".into()));
            }
        }
        Ok(())
    }
}

/// Everything the generator drew, indexed like the returned matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthTruth {
    pub params: SdrParams,
    /// True preference probabilities, `I x M`.
    pub phi: Matrix,
    /// Dominant preference of each worker.
    pub group: Vec<usize>,
    /// Preference assignment per triplet.
    pub assignments: Vec<usize>,
    /// Perceived truth per triplet.
    pub truths: Vec<usize>,
    /// Most common dominant group.
    pub largest_group: usize,
    /// `argmax_k psi_{largest_group, j, k}` for every question.
    pub gold: Vec<usize>,
}

impl SynthTruth {
    pub fn gold_labels(&self, data: &ResponseMatrix) -> Result<GoldLabels> {
        GoldLabels::from_indices(data, self.gold.iter().copied().enumerate())
    }
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    let width = format!("{}", n.saturating_sub(1)).len();
    (0..n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// Option labels `0, 1, ...`, zero-padded so that lexicographic order
/// matches the integer order.
pub fn option_labels(k: usize) -> Vec<String> {
    labels("", k)
}

/// For each question, `per_question` distinct workers, cycling through
/// reshuffled permutations so workloads stay balanced.
fn assign_workers(rng: &mut StreamRng, workers: usize, questions: usize, per_question: usize) -> Vec<Vec<usize>> {
    let mut queue: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(questions);
    for _ in 0..questions {
        let mut chosen: Vec<usize> = Vec::with_capacity(per_question);
        let mut deferred = Vec::new();
        while chosen.len() < per_question {
            if queue.is_empty() {
                let mut perm: Vec<usize> = (0..workers).collect();
                rng::shuffle(rng, &mut perm);
                perm.reverse();
                // Deferred workers go back on top of the fresh permutation.
                queue = perm;
            }
            let w = queue.pop().expect("queue refilled");
            if chosen.contains(&w) {
                deferred.push(w);
            } else {
                chosen.push(w);
            }
        }
        while let Some(w) = deferred.pop() {
            queue.push(w);
        }
        chosen.sort_unstable();
        out.push(chosen);
    }
    out
}

/// Draws a dataset from the response model.
pub fn generate_sdr(spec: &SynthSpec) -> Result<(ResponseMatrix, SynthTruth)> {
    spec.validate()?;
    let hp = &spec.hp;
    let (n_workers, n_questions, k_count, m_count) = (spec.workers, spec.questions, spec.options, hp.num_preferences);

    let mut prng = rng::stream(spec.seed, "synth/params");
    let mut draw = |n: usize, mu: f64, s2: f64| -> Vec<f64> {
        (0..n).map(|_| rng::normal(&mut prng, mu, math::sqrt(s2))).collect()
    };
    let e = draw(n_workers, hp.mu_e, hp.sigma2_e);
    let d = draw(n_questions, hp.mu_d, hp.sigma2_d);
    let v = Matrix::from_vec(n_questions, k_count, draw(n_questions * k_count, hp.mu_v, hp.sigma2_v));
    let mut u = Matrix::from_vec(m_count, k_count, draw(m_count * k_count, hp.mu_u, hp.sigma2_u));
    let mut attempts = 1;
    while min_pairwise_disagreement(&u, &v) < spec.min_disagreement {
        if attempts == MAX_REDRAWS {
            return Err(Error::InvalidArgument(format!(
                "no preference draw reached min_disagreement {} in {MAX_REDRAWS} attempts",
                spec.min_disagreement
            )));
        }
        u = Matrix::from_vec(m_count, k_count, draw(m_count * k_count, hp.mu_u, hp.sigma2_u));
        attempts += 1;
    }

    let mut grng = rng::stream(spec.seed, "synth/groups");
    let uniform = vec![1.0; m_count];
    let group_weights = spec.group_weights.as_deref().unwrap_or(&uniform);
    let mut phi = Matrix::zeros(n_workers, m_count);
    let mut group = Vec::with_capacity(n_workers);
    for i in 0..n_workers {
        let mut row = rng::dirichlet(&mut grng, &hp.alpha);
        let g = rng::categorical(&mut grng, group_weights);
        row[g] += spec.group_separation;
        let total: f64 = row.iter().sum();
        for x in row.iter_mut() {
            *x /= total;
        }
        phi.row_mut(i).copy_from_slice(&row);
        group.push(g);
    }

    let mut arng = rng::stream(spec.seed, "synth/assign");
    let assignment = assign_workers(&mut arng, n_workers, n_questions, spec.responses_per_question);

    let mut rrng = rng::stream(spec.seed, "synth/responses");
    let mut triplets = Vec::new();
    let mut assignments = Vec::new();
    let mut truths = Vec::new();
    let mut kernel = vec![0.0; k_count];
    for (j, chosen) in assignment.iter().enumerate() {
        for &i in chosen {
            let m = rng::categorical(&mut rrng, phi.row(i));
            let psi = truth_softmax(u.row(m), v.row(j));
            let l = rng::categorical(&mut rrng, &psi.probs);
            let f = CorrectnessLink::Rasch.prob(e[i], d[j]);
            for (r, p) in kernel.iter_mut().enumerate() {
                *p = corruption_prob(f, k_count, l, r);
            }
            let r = rng::categorical(&mut rrng, &kernel);
            triplets.push(Triplet {
                worker: i,
                question: j,
                option: r,
            });
            assignments.push(m);
            truths.push(l);
        }
    }

    // Drop workers that were never assigned (only when questions * per_question < workers).
    let used: BTreeSet<usize> = triplets.iter().map(|t| t.worker).collect();
    let mut remap = vec![usize::MAX; n_workers];
    for (new, &old) in used.iter().enumerate() {
        remap[old] = new;
    }
    for t in triplets.iter_mut() {
        t.worker = remap[t.worker];
    }
    let keep = |xs: &[f64]| -> Vec<f64> { used.iter().map(|&i| xs[i]).collect() };
    let worker_ids = labels("w", n_workers);
    let workers: Vec<String> = used.iter().map(|&i| worker_ids[i].clone()).collect();
    let e = keep(&e);
    let phi_rows: Vec<Vec<f64>> = used.iter().map(|&i| phi.row(i).to_vec()).collect();
    let phi = Matrix::from_rows(&phi_rows);
    let group: Vec<usize> = used.iter().map(|&i| group[i]).collect();

    let mut sizes = vec![0usize; m_count];
    for &g in &group {
        sizes[g] += 1;
    }
    let largest_group = (0..m_count).fold(0, |best, m| if sizes[m] > sizes[best] { m } else { best });
    let params = SdrParams { e, d, u, v };
    let gold = (0..n_questions)
        .map(|j| math::argmax(&truth_softmax(params.u.row(largest_group), params.v.row(j)).probs))
        .collect();

    let data = ResponseMatrix::from_parts(workers, labels("q", n_questions), option_labels(k_count), triplets)?;
    Ok((
        data,
        SynthTruth {
            params,
            phi,
            group,
            assignments,
            truths,
            largest_group,
            gold,
        },
    ))
}

const MAX_REDRAWS: usize = 10_000;

/// Smallest fraction of questions on which two preferences' argmax truths
/// differ, over all pairs; 1 for a single preference.
pub fn min_pairwise_disagreement(u: &Matrix, v: &Matrix) -> f64 {
    let argmaxes: Vec<Vec<usize>> = u
        .iter_rows()
        .map(|um| v.iter_rows().map(|vj| math::argmax(&truth_softmax(um, vj).probs)).collect())
        .collect();
    let mut worst = 1.0f64;
    for a in 0..argmaxes.len() {
        for b in a + 1..argmaxes.len() {
            let differ = argmaxes[a].iter().zip(&argmaxes[b]).filter(|(x, y)| x != y).count();
            worst = worst.min(differ as f64 / v.rows() as f64);
        }
    }
    worst
}

/// Settings for single-truth data drawn from GLAD.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GladSynthSpec {
    pub workers: usize,
    pub questions: usize,
    pub options: usize,
    /// Dirichlet parameter of the class prior, length `K`.
    pub gamma: Vec<f64>,
    pub mu_e: f64,
    pub sigma2_e: f64,
    pub mu_d: f64,
    pub sigma2_d: f64,
    /// Responses per question; every worker answers every question when `None`.
    pub responses_per_question: Option<usize>,
    pub seed: u64,
}

impl GladSynthSpec {
    pub fn new(workers: usize, questions: usize, options: usize, seed: u64) -> Self {
        Self {
            workers,
            questions,
            options,
            gamma: vec![1.0; options],
            mu_e: 1.0,
            sigma2_e: 1.0,
            mu_d: 0.0,
            sigma2_d: 1.0,
            responses_per_question: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GladSynthTruth {
    pub e: Vec<f64>,
    pub d: Vec<f64>,
    pub theta: Vec<f64>,
    pub gold: GoldLabels,
}

/// Draws objective single-truth data: `theta ~ Dir(gamma)`, `l_j ~ theta`,
/// responses corrupted with the GLAD link.
pub fn generate_glad(spec: &GladSynthSpec) -> Result<(ResponseMatrix, GladSynthTruth)> {
    if spec.options < 2 {
        return Err(Error::TooFewOptions(spec.options));
    }
    if spec.workers == 0 || spec.questions == 0 {
        return Err(Error::InvalidArgument("workers and questions must be positive".into()));
    }
    if spec.gamma.len() != spec.options || spec.gamma.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidArgument("gamma must hold K positive values".into()));
    }
    let per_question = spec.responses_per_question.unwrap_or(spec.workers);
    if per_question == 0 || per_question > spec.workers {
        return Err(Error::InvalidArgument("responses_per_question must lie in 1..=workers".into()));
    }
    let mut prng = rng::stream(spec.seed, "glad/params");
    let theta = rng::dirichlet(&mut prng, &spec.gamma);
    let e: Vec<f64> = (0..spec.workers)
        .map(|_| rng::normal(&mut prng, spec.mu_e, math::sqrt(spec.sigma2_e)))
        .collect();
    let d: Vec<f64> = (0..spec.questions)
        .map(|_| rng::normal(&mut prng, spec.mu_d, math::sqrt(spec.sigma2_d)))
        .collect();
    let truth: Vec<usize> = (0..spec.questions).map(|_| rng::categorical(&mut prng, &theta)).collect();

    let mut arng = rng::stream(spec.seed, "glad/assign");
    let assignment = if per_question == spec.workers {
        vec![(0..spec.workers).collect::<Vec<_>>(); spec.questions]
    } else {
        assign_workers(&mut arng, spec.workers, spec.questions, per_question)
    };
    let mut rrng = rng::stream(spec.seed, "glad/responses");
    let mut kernel = vec![0.0; spec.options];
    let mut triplets = Vec::new();
    for (j, chosen) in assignment.iter().enumerate() {
        for &i in chosen {
            let f = CorrectnessLink::Glad.prob(e[i], d[j]);
            for (r, p) in kernel.iter_mut().enumerate() {
                *p = corruption_prob(f, spec.options, truth[j], r);
            }
            triplets.push(Triplet {
                worker: i,
                question: j,
                option: rng::categorical(&mut rrng, &kernel),
            });
        }
    }
    let used: BTreeSet<usize> = triplets.iter().map(|t| t.worker).collect();
    let mut remap = vec![usize::MAX; spec.workers];
    for (new, &old) in used.iter().enumerate() {
        remap[old] = new;
    }
    for t in triplets.iter_mut() {
        t.worker = remap[t.worker];
    }
    let ids = labels("w", spec.workers);
    let data = ResponseMatrix::from_parts(
        used.iter().map(|&i| ids[i].clone()).collect(),
        labels("q", spec.questions),
        option_labels(spec.options),
        triplets,
    )?;
    let gold = GoldLabels::from_indices(&data, truth.iter().copied().enumerate())?;
    Ok((
        data,
        GladSynthTruth {
            e: used.iter().map(|&i| e[i]).collect(),
            d,
            theta,
            gold,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_assignment_covers_every_worker() {
        let mut r = rng::stream(1, "t");
        let a = assign_workers(&mut r, 10, 7, 3);
        let mut load = vec![0; 10];
        for q in &a {
            let distinct: BTreeSet<_> = q.iter().collect();
            assert_eq!(distinct.len(), 3);
            for &w in q {
                load[w] += 1;
            }
        }
        assert!(load.iter().all(|&l| l >= 2 && l <= 3), "{load:?}");
    }

    #[test]
    fn labels_sort_numerically() {
        let l = option_labels(12);
        let mut sorted = l.clone();
        sorted.sort();
        assert_eq!(l, sorted);
        assert_eq!(l[3], "03");
    }

    #[test]
    fn sdr_generation_is_reproducible_and_valid() {
        let mut spec = SynthSpec::new(20, 30, 3, SdrHyperParams::new(2), 9);
        spec.group_separation = 5.0;
        let (a, ta) = generate_sdr(&spec).unwrap();
        let (b, tb) = generate_sdr(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(a.num_responses(), 30 * 5);
        assert_eq!(ta.truths.len(), a.num_responses());
        // Round trip through labelled records validates every invariant.
        let again = ResponseMatrix::from_records(&a.records(), Some(a.options())).unwrap();
        assert_eq!(again, a);
    }
}
