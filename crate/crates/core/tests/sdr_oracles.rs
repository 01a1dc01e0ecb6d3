mod common;

use common::*;
use crowdtruth_core::dataset::Triplet;
use crowdtruth_core::link::logistic_correct_prob;
use crowdtruth_core::sdr::{
    self, gibbs_conditional, gibbs_step, gradient_q, objective_q, predict_response, response_marginal, truth_softmax,
    FitSchedule, GibbsState, PreferencePosterior, SdrHyperParams, SdrObjective, SdrParams,
};
use crowdtruth_core::math::Matrix;
use proptest::prelude::*;
use rand::Rng;

fn neg_log_normal(x: f64, mean: f64, var: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / (2.0 * var)
}

fn prior_term(params: &SdrParams, hp: &SdrHyperParams) -> f64 {
    params.e.iter().map(|&x| neg_log_normal(x, hp.mu_e, hp.sigma2_e)).sum::<f64>()
        + params.d.iter().map(|&x| neg_log_normal(x, hp.mu_d, hp.sigma2_d)).sum::<f64>()
        + params.u.as_slice().iter().map(|&x| neg_log_normal(x, hp.mu_u, hp.sigma2_u)).sum::<f64>()
        + params.v.as_slice().iter().map(|&x| neg_log_normal(x, hp.mu_v, hp.sigma2_v)).sum::<f64>()
}

/// `P(r | z = m)` summing over the perceived truth explicitly.
fn two_stage(params: &SdrParams, i: usize, j: usize, m: usize, r: usize) -> f64 {
    let k = params.num_options();
    let logits: Vec<f64> = (0..k).map(|c| params.u.get(m, c) * params.v.get(j, c)).collect();
    let psi = softmax(&logits);
    let f = sigmoid(params.e[i] - params.d[j]);
    (0..k).map(|l| psi[l] * kernel(f, k, l, r)).sum()
}

fn naive_objective(params: &SdrParams, triplets: &[Triplet], z: &[usize], hp: &SdrHyperParams) -> f64 {
    let data_term: f64 = triplets
        .iter()
        .zip(z)
        .map(|(t, &m)| -two_stage(params, t.worker, t.question, m, t.option).ln())
        .sum();
    data_term + prior_term(params, hp)
}

fn random_z(rng: &mut rand_chacha::ChaCha8Rng, n: usize, m: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..m)).collect()
}

#[test]
fn gradient_matches_central_differences_on_100_instances() {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut rng = rng(seed);
        let data = random_data(&mut rng, 5, 8, 3, 0.6);
        let hp = random_hp(&mut rng, 2);
        let layout = layout_of(&data, 2);
        let params = random_params(&mut rng, layout, 1.5);
        let z = random_z(&mut rng, data.num_responses(), 2);
        let grad = gradient_q(&params, &z, &data, &hp).unwrap();
        let x = params.to_flat();
        for c in 0..x.len() {
            let (mut lo, mut hi) = (x.clone(), x.clone());
            lo[c] -= h;
            hi[c] += h;
            let q_hi = objective_q(&SdrParams::from_flat(layout, &hi).unwrap(), &z, &data, &hp).unwrap();
            let q_lo = objective_q(&SdrParams::from_flat(layout, &lo).unwrap(), &z, &data, &hp).unwrap();
            let fd = (q_hi - q_lo) / (2.0 * h);
            let rel = (grad[c] - fd).abs() / grad[c].abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);
            assert!(rel < 1e-5, "seed {seed} coordinate {}: {} vs {fd}", layout.coordinate_name(c), grad[c]);
        }
    }
    assert!(worst < 1e-5);
}

#[test]
fn objective_matches_independent_evaluation() {
    for seed in 0..30 {
        let mut rng = rng(1000 + seed);
        let m = rng.random_range(1..4);
        let k = rng.random_range(2..5);
        let data = random_data(&mut rng, 4, 6, k, 0.5);
        let hp = random_hp(&mut rng, m);
        let params = random_params(&mut rng, layout_of(&data, m), 2.0);
        let z = random_z(&mut rng, data.num_responses(), m);
        let q = objective_q(&params, &z, &data, &hp).unwrap();
        let oracle = naive_objective(&params, data.triplets(), &z, &hp);
        assert!((q - oracle).abs() <= 1e-10 * oracle.abs().max(1.0), "{q} vs {oracle}");
    }
}

#[test]
fn duplicated_responses_double_the_data_term() {
    let mut rng = rng(7);
    let data = random_data(&mut rng, 4, 5, 3, 0.5);
    let hp = random_hp(&mut rng, 2);
    let layout = layout_of(&data, 2);
    let params = random_params(&mut rng, layout, 1.0);
    let z = random_z(&mut rng, data.num_responses(), 2);
    let doubled: Vec<Triplet> = data.triplets().iter().chain(data.triplets()).copied().collect();
    let z2: Vec<usize> = z.iter().chain(&z).copied().collect();
    let x = params.to_flat();
    let prior = SdrObjective::with_triplets(layout, &[], &[], &hp).unwrap().value(&x);
    let once = SdrObjective::with_triplets(layout, data.triplets(), &z, &hp).unwrap().value(&x) - prior;
    let twice = SdrObjective::with_triplets(layout, &doubled, &z2, &hp).unwrap().value(&x) - prior;
    assert!((twice - 2.0 * once).abs() < 1e-9 * once.abs());
    assert!((prior - prior_term(&params, &hp)).abs() < 1e-9 * prior.abs().max(1.0));
}

#[test]
fn response_marginal_matches_two_stage_enumeration() {
    for seed in 0..50 {
        let mut rng = rng(2000 + seed);
        let k = rng.random_range(2..5);
        let m = rng.random_range(1..4);
        let data = random_data(&mut rng, 3, 4, k, 0.5);
        let params = random_params(&mut rng, layout_of(&data, m), 2.5);
        for i in 0..3 {
            for j in 0..4 {
                for mm in 0..m {
                    for r in 0..k {
                        let got = response_marginal(i, j, mm, r, &params);
                        let want = two_stage(&params, i, j, mm, r);
                        assert!((got - want).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn predict_response_matches_enumeration_over_preferences_and_truths() {
    for seed in 0..50 {
        let mut rng = rng(3000 + seed);
        let k = rng.random_range(2..5);
        let m = rng.random_range(1..4);
        let data = random_data(&mut rng, 3, 4, k, 0.5);
        let params = random_params(&mut rng, layout_of(&data, m), 2.5);
        let rows: Vec<Vec<f64>> = (0..3).map(|_| random_simplex(&mut rng, m)).collect();
        let phi = PreferencePosterior {
            phi_hat: Matrix::from_rows(&rows),
        };
        for i in 0..3 {
            for j in 0..4 {
                let got = predict_response(i, j, &params, &phi);
                for (r, g) in got.iter().enumerate() {
                    let want: f64 = (0..m).map(|mm| rows[i][mm] * two_stage(&params, i, j, mm, r)).sum();
                    assert!((g - want).abs() < 1e-12);
                }
            }
        }
    }
}

/// Log of the collapsed Dirichlet-multinomial probability of one worker's
/// assignment counts.
fn log_dir_mult(counts: &[usize], alpha: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let a: f64 = alpha.iter().sum();
    let mut out = libm::lgamma(a) - libm::lgamma(n as f64 + a);
    for (&c, &al) in counts.iter().zip(alpha) {
        out += libm::lgamma(c as f64 + al) - libm::lgamma(al);
    }
    out
}

/// Conditional of `z_t` by normalising the full joint over its values.
fn brute_force_conditional(
    data: &crowdtruth_core::dataset::ResponseMatrix,
    t: usize,
    z: &[usize],
    params: &SdrParams,
    hp: &SdrHyperParams,
) -> Vec<f64> {
    let m_count = hp.num_preferences;
    let joint: Vec<f64> = (0..m_count)
        .map(|m| {
            let mut zz = z.to_vec();
            zz[t] = m;
            let mut lp = 0.0;
            for (s, tr) in data.triplets().iter().enumerate() {
                lp += two_stage(params, tr.worker, tr.question, zz[s], tr.option).ln();
            }
            for i in 0..data.num_workers() {
                let mut counts = vec![0usize; m_count];
                for (s, tr) in data.triplets().iter().enumerate() {
                    if tr.worker == i {
                        counts[zz[s]] += 1;
                    }
                }
                lp += log_dir_mult(&counts, &hp.alpha);
            }
            lp
        })
        .collect();
    softmax(&joint)
}

#[test]
fn gibbs_conditional_matches_brute_force_joint() {
    for seed in 0..200 {
        let mut rng = rng(4000 + seed);
        let workers = rng.random_range(1..4);
        let questions = rng.random_range(1..5);
        let k = rng.random_range(2..4);
        let m = rng.random_range(1..4);
        let data = random_data(&mut rng, workers, questions, k, 0.6);
        let hp = random_hp(&mut rng, m);
        let params = random_params(&mut rng, layout_of(&data, m), 2.0);
        let z = random_z(&mut rng, data.num_responses(), m);
        let state = GibbsState::from_assignments(&data, z.clone(), m);
        for t in 0..data.num_responses() {
            let got = gibbs_conditional(&data, t, &state, &params, &hp);
            let want = brute_force_conditional(&data, t, &z, &params, &hp);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "seed {seed} triplet {t}: {got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn identical_preferences_with_equal_counts_are_sampled_evenly() {
    let mut rng = rng(11);
    let data = random_data(&mut rng, 2, 3, 2, 1.0);
    let hp = SdrHyperParams::new(2);
    let mut params = random_params(&mut rng, layout_of(&data, 2), 1.0);
    let row = params.u.row(0).to_vec();
    params.u.row_mut(1).copy_from_slice(&row);
    let worker = data.triplets()[0].worker;
    let mut flip = 0;
    let z: Vec<usize> = (0..data.num_responses())
        .map(|t| {
            if t > 0 && data.triplets()[t].worker == worker {
                flip += 1;
                flip % 2
            } else {
                0
            }
        })
        .collect();
    let state = GibbsState::from_assignments(&data, z, 2);
    let counts = state.worker_counts(worker);
    assert_eq!(counts[0] - 1, counts[1]);
    assert!((gibbs_conditional(&data, 0, &state, &params, &hp)[0] - 0.5).abs() < 1e-12);
    let draws = 10_000;
    let hits = (0..draws)
        .filter(|_| gibbs_step(&data, 0, &mut state.clone(), &params, &hp, &mut rng) == 0)
        .count();
    assert!((hits as f64 / draws as f64 - 0.5).abs() < 0.02);
}

#[test]
fn single_preference_fit_has_unit_phi_hat() {
    let mut rng = rng(5);
    let data = random_data(&mut rng, 6, 8, 3, 0.5);
    let schedule = FitSchedule {
        outer_iterations: 4,
        burn_in: 1,
        ..FitSchedule::default()
    };
    let fit = sdr::fit(&data, &SdrHyperParams::new(1), &schedule, 3).unwrap();
    assert!(fit.phi_hat.phi_hat.as_slice().iter().all(|&p| p == 1.0));
}

#[test]
fn fit_is_deterministic_and_optimizer_phase_never_increases_q() {
    let mut rng = rng(6);
    let data = random_data(&mut rng, 8, 10, 3, 0.5);
    let schedule = FitSchedule {
        outer_iterations: 8,
        burn_in: 3,
        ..FitSchedule::default()
    };
    let hp = SdrHyperParams::new(2);
    let a = sdr::fit(&data, &hp, &schedule, 42).unwrap();
    let b = sdr::fit(&data, &hp, &schedule, 42).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.params, b.params);
    for (before, after) in a.trace.objective_before.iter().zip(&a.trace.objective) {
        assert!(after <= before, "{after} > {before}");
    }
    for i in 0..data.num_workers() {
        assert!(sum_close(a.phi_hat.row(i)));
    }
    assert!(a.state.is_consistent(&data));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distributions_are_normalised(seed in any::<u64>(), k in 2usize..6, m in 1usize..4) {
        let mut rng = rng(seed);
        let data = random_data(&mut rng, 3, 4, k, 0.5);
        let hp = random_hp(&mut rng, m);
        let params = random_params(&mut rng, layout_of(&data, m), 4.0);
        let z = random_z(&mut rng, data.num_responses(), m);
        let state = GibbsState::from_assignments(&data, z, m);
        let rows: Vec<Vec<f64>> = (0..3).map(|_| random_simplex(&mut rng, m)).collect();
        let phi = PreferencePosterior { phi_hat: Matrix::from_rows(&rows) };
        for j in 0..4 {
            for mm in 0..m {
                prop_assert!(sum_close(&truth_softmax(params.u.row(mm), params.v.row(j)).probs));
            }
            for i in 0..3 {
                prop_assert!(sum_close(&predict_response(i, j, &params, &phi)));
            }
        }
        for t in 0..data.num_responses() {
            prop_assert!(sum_close(&gibbs_conditional(&data, t, &state, &params, &hp)));
        }
    }

    #[test]
    fn gibbs_counts_stay_consistent(seed in any::<u64>(), m in 1usize..4, steps in 1usize..200) {
        let mut rng = rng(seed);
        let data = random_data(&mut rng, 4, 5, 3, 0.5);
        let hp = random_hp(&mut rng, m);
        let params = random_params(&mut rng, layout_of(&data, m), 2.0);
        let mut state = GibbsState::random(&data, m, &mut rng);
        for s in 0..steps {
            let t = s % data.num_responses();
            let picked = gibbs_step(&data, t, &mut state, &params, &hp, &mut rng);
            prop_assert!(picked < m);
            prop_assert!(state.is_consistent(&data));
        }
    }

    #[test]
    fn correctness_is_antisymmetric(e in -30.0f64..30.0, d in -30.0f64..30.0, c in -10.0f64..10.0) {
        prop_assert!((logistic_correct_prob(e, d) + logistic_correct_prob(d, e) - 1.0).abs() < 1e-12);
        prop_assert!((logistic_correct_prob(e + c, d + c) - logistic_correct_prob(e, d)).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant(u in prop::collection::vec(-3.0f64..3.0, 3), v in prop::collection::vec(-3.0f64..3.0, 3), c in -5.0f64..5.0) {
        // Adding c to every product u_k v_k: scale u so that u_k v_k + c is representable.
        let base = truth_softmax(&u, &v).probs;
        let shifted_u: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a * b + c).collect();
        let shifted = truth_softmax(&shifted_u, &[1.0, 1.0, 1.0]).probs;
        for (x, y) in base.iter().zip(&shifted) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
