//! Question subjectivity as the expected number of distinct truths the
//! worker groups perceive, by Monte Carlo and by exact enumeration.

use alloc::vec;
use alloc::vec::Vec;

use crate::clustering::ClusterModel;
use crate::error::{Error, Result};
use crate::math;
use crate::rng;
use crate::sdr::{truth_softmax, SdrParams};

/// Default Monte Carlo sample count.
pub const DEFAULT_SAMPLES: usize = 50_000;
/// Largest `K^C` that [`exact_subjectivity`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubjectivityEstimate {
    pub value: f64,
    pub samples: usize,
    pub stderr: f64,
}

/// Algorithm: for each of `samples` rounds, every cluster draws a
/// preference from its centroid and then a truth from that preference's
/// softmax for question `j`; the round scores the number of distinct truths.
pub fn mc_subjectivity(
    j: usize,
    model: &ClusterModel,
    params: &SdrParams,
    samples: usize,
    seed: u64,
) -> Result<SubjectivityEstimate> {
    if samples == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    check(j, model, params)?;
    let psi: Vec<Vec<f64>> = (0..params.num_preferences())
        .map(|m| truth_softmax(params.u.row(m), params.v.row(j)).probs)
        .collect();
    let mut rng = rng::stream_indexed(seed, "subjectivity", j as u64);
    let mut seen = vec![false; params.num_options()];
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        seen.fill(false);
        let mut distinct = 0u32;
        for centroid in model.centroids.iter_rows() {
            let m = rng::categorical(&mut rng, centroid);
            let l = rng::categorical(&mut rng, &psi[m]);
            if !seen[l] {
                seen[l] = true;
                distinct += 1;
            }
        }
        let x = f64::from(distinct);
        sum += x;
        sum_sq += x * x;
    }
    let n = samples as f64;
    let value = sum / n;
    let variance = if samples > 1 {
        ((sum_sq - n * value * value) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(SubjectivityEstimate {
        value,
        samples,
        stderr: math::sqrt(variance / n),
    })
}

/// `E[#distinct]` by enumerating every joint outcome of the clusters'
/// truths; cluster `c` perceives `k` with probability
/// `sum_m centroid_c[m] * softmax_k(u_m * v_j)`.
pub fn exact_subjectivity(j: usize, model: &ClusterModel, params: &SdrParams) -> Result<f64> {
    check(j, model, params)?;
    let (k_count, c_count) = (params.num_options(), model.num_clusters());
    let outcomes = (k_count as u128).checked_pow(c_count as u32).unwrap_or(u128::MAX);
    if outcomes > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            outcomes,
            limit: ENUMERATION_LIMIT,
        });
    }
    let marginals: Vec<Vec<f64>> = model
        .centroids
        .iter_rows()
        .map(|centroid| crate::sdr::mixed_truth(params, j, centroid))
        .collect();
    let mut digits = vec![0usize; c_count];
    let mut seen = vec![false; k_count];
    let mut expected = 0.0;
    for _ in 0..outcomes {
        let mut p = 1.0;
        seen.fill(false);
        let mut distinct = 0;
        for (c, &k) in digits.iter().enumerate() {
            p *= marginals[c][k];
            if !seen[k] {
                seen[k] = true;
                distinct += 1;
            }
        }
        expected += p * distinct as f64;
        for d in digits.iter_mut() {
            *d += 1;
            if *d < k_count {
                break;
            }
            *d = 0;
        }
    }
    Ok(expected)
}

fn check(j: usize, model: &ClusterModel, params: &SdrParams) -> Result<()> {
    if j >= params.v.rows() {
        return Err(Error::InvalidIndex(alloc::format!("question {j}")));
    }
    if model.centroids.cols() != params.num_preferences() {
        return Err(Error::LengthMismatch {
            expected: params.num_preferences(),
            found: model.centroids.cols(),
        });
    }
    if model.num_clusters() == 0 {
        return Err(Error::InvalidArgument("cluster model is empty".into()));
    }
    Ok(())
}

/// Question indices ordered for reporting, with 1-based ranks.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuestionRankings {
    /// Questions by descending difficulty.
    pub difficulty: Vec<usize>,
    /// Questions by descending subjectivity.
    pub subjectivity: Vec<usize>,
    pub difficulty_rank: Vec<usize>,
    pub subjectivity_rank: Vec<usize>,
}

/// Sorts questions by descending `d_j` and descending subjectivity. Ties
/// keep question-index order, which is identifier order for a
/// [`crate::dataset::ResponseMatrix`].
pub fn rank_questions(params: &SdrParams, subjectivity: &[SubjectivityEstimate]) -> Result<QuestionRankings> {
    if subjectivity.len() != params.d.len() {
        return Err(Error::LengthMismatch {
            expected: params.d.len(),
            found: subjectivity.len(),
        });
    }
    let order = |key: &dyn Fn(usize) -> f64| {
        let mut idx: Vec<usize> = (0..params.d.len()).collect();
        idx.sort_by(|&a, &b| key(b).total_cmp(&key(a)));
        let mut rank = vec![0; idx.len()];
        for (pos, &q) in idx.iter().enumerate() {
            rank[q] = pos + 1;
        }
        (idx, rank)
    };
    let (difficulty, difficulty_rank) = order(&|q| params.d[q]);
    let (subj, subjectivity_rank) = order(&|q| subjectivity[q].value);
    Ok(QuestionRankings {
        difficulty,
        subjectivity: subj,
        difficulty_rank,
        subjectivity_rank,
    })
}
