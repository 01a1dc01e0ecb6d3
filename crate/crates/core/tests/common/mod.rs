#![allow(dead_code)]

use crowdtruth_core::dataset::{ResponseMatrix, ResponseRecord};
use crowdtruth_core::math::Matrix;
use crowdtruth_core::sdr::{ParamLayout, SdrHyperParams, SdrParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn labels(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("o{i}")).collect()
}

/// Random responses: every worker answers each question with probability
/// `density`, with a diagonal guaranteeing nobody is left out.
pub fn random_data(rng: &mut ChaCha8Rng, workers: usize, questions: usize, options: usize, density: f64) -> ResponseMatrix {
    let mut records = Vec::new();
    for i in 0..workers {
        for j in 0..questions {
            if i == j % workers || j == i % questions || rng.random::<f64>() < density {
                let k = rng.random_range(0..options);
                records.push(ResponseRecord::new(format!("w{i}"), format!("q{j}"), format!("o{k}")));
            }
        }
    }
    ResponseMatrix::from_records(&records, Some(&labels(options))).unwrap()
}

pub fn random_hp(rng: &mut ChaCha8Rng, preferences: usize) -> SdrHyperParams {
    let mut hp = SdrHyperParams::new(preferences);
    hp.alpha = (0..preferences).map(|_| rng.random_range(0.3..2.0)).collect();
    hp.mu_e = rng.random_range(-1.0..2.0);
    hp.sigma2_e = rng.random_range(0.3..3.0);
    hp.mu_d = rng.random_range(-1.0..1.0);
    hp.sigma2_d = rng.random_range(0.3..3.0);
    hp.mu_u = rng.random_range(-0.5..0.5);
    hp.sigma2_u = rng.random_range(0.3..3.0);
    hp.mu_v = rng.random_range(-0.5..0.5);
    hp.sigma2_v = rng.random_range(0.3..3.0);
    hp
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect())
}

pub fn random_params(rng: &mut ChaCha8Rng, layout: ParamLayout, scale: f64) -> SdrParams {
    SdrParams {
        e: (0..layout.workers).map(|_| rng.random_range(-scale..scale)).collect(),
        d: (0..layout.questions).map(|_| rng.random_range(-scale..scale)).collect(),
        u: random_matrix(rng, layout.preferences, layout.options, scale),
        v: random_matrix(rng, layout.questions, layout.options, scale),
    }
}

pub fn layout_of(data: &ResponseMatrix, preferences: usize) -> ParamLayout {
    ParamLayout {
        workers: data.num_workers(),
        questions: data.num_questions(),
        options: data.num_options(),
        preferences,
    }
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Probability that a worker with correctness `f` answers `r` when the
/// truth is `l`.
pub fn kernel(f: f64, k: usize, l: usize, r: usize) -> f64 {
    if l == r {
        f
    } else {
        (1.0 - f) / (k - 1) as f64
    }
}

pub fn sum_close(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x >= 0.0) && (xs.iter().sum::<f64>() - 1.0).abs() < 1e-9
}
