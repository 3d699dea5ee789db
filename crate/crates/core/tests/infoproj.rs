mod common;

use std::collections::BTreeMap;

use aot_core::error::Error;
use aot_core::features::ResponseVector;
use aot_core::infoproj::{
    complete_likelihood, estimate_reference, log_likelihood, normalizer, solve_beta, tilted_moments, REFERENCE_BINS,
};
use aot_core::inference::{infer_configuration, matching_score};
use aot_core::model::{Configuration, DataMatrix};
use common::{all_choices, feature, template};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn column_matrix(columns: Vec<Vec<f64>>) -> DataMatrix {
    let n = columns[0].len();
    DataMatrix::from_rows((0..n).map(|i| (format!("r{i}"), columns.iter().map(|c| c[i]).collect())).collect()).unwrap()
}

fn config(s: Vec<bool>) -> Configuration {
    Configuration { s, g: BTreeMap::new() }
}

#[test]
fn constant_column_concentrates_in_its_bin() {
    let q = estimate_reference(&column_matrix(vec![vec![0.5; 200]])).unwrap();
    let h = q.histogram(0);
    assert_eq!(h.len(), REFERENCE_BINS);
    assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((h[16] - 201.0 / 232.0).abs() < 1e-12);
    assert!(h.iter().enumerate().all(|(b, m)| b == 16 || (*m - 1.0 / 232.0).abs() < 1e-12));
}

#[test]
fn uniform_column_gives_a_near_uniform_histogram() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q = estimate_reference(&column_matrix(vec![(0..10_000).map(|_| rng.gen::<f64>()).collect()])).unwrap();
    let max = q.histogram(0).iter().copied().fold(0.0, f64::max);
    assert!(max <= 0.04, "max bin mass {max}");
}

#[test]
fn columns_are_estimated_independently() {
    let joint = estimate_reference(&column_matrix(vec![vec![0.1, 0.2, 0.9], vec![0.7, 0.7, 0.0]])).unwrap();
    let a = estimate_reference(&column_matrix(vec![vec![0.1, 0.2, 0.9]])).unwrap();
    let b = estimate_reference(&column_matrix(vec![vec![0.7, 0.7, 0.0]])).unwrap();
    assert_eq!(joint.histogram(0), a.histogram(0));
    assert_eq!(joint.histogram(1), b.histogram(0));
}

#[test]
fn empty_negatives_are_rejected() {
    // An empty matrix cannot be constructed, so the reference never sees one.
    assert!(matches!(DataMatrix::new(Vec::new(), vec!["c".into()], Vec::new()), Err(Error::InvalidArgument(_))));
}

fn random_histogram(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..REFERENCE_BINS).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|m| m / total).collect()
}

fn brute_z(q: &[f64], beta: f64) -> f64 {
    let mut z = 0.0;
    for (b, mass) in q.iter().enumerate() {
        let r = (2 * b + 1) as f64 / (2 * q.len()) as f64;
        z += mass * (beta * r).exp();
    }
    z
}

/// KL divergence of `p ∝ q exp(beta r)` from `q`, summed over bins.
fn brute_kl(q: &[f64], beta: f64) -> f64 {
    let z = brute_z(q, beta);
    let mut kl = 0.0;
    for (b, mass) in q.iter().enumerate() {
        let r = (2 * b + 1) as f64 / (2 * q.len()) as f64;
        let p = mass * (beta * r).exp() / z;
        kl += p * (p / mass).ln();
    }
    kl
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solved_beta_hits_the_target(seed in any::<u64>(), t in 0.05f64..0.95) {
        let q = random_histogram(seed);
        let sol = solve_beta(&q, t).unwrap();
        prop_assert!((sol.expected_response - t).abs() <= 1e-8);
        prop_assert!((tilted_moments(&q, sol.beta).0 - t).abs() <= 1e-8);
        prop_assert!(sol.z > 0.0);
        prop_assert!((sol.z - brute_z(&q, sol.beta)).abs() <= 1e-12 * sol.z.max(1.0));
        prop_assert!(sol.gain >= -1e-12);
        prop_assert!((sol.gain - brute_kl(&q, sol.beta)).abs() <= 1e-9 * sol.gain.max(1.0));
    }

    #[test]
    fn normalizer_matches_the_direct_sum(seed in any::<u64>(), beta in -40.0f64..40.0) {
        let q = random_histogram(seed);
        let z = normalizer(&q, beta);
        prop_assert!((z - brute_z(&q, beta)).abs() <= 1e-12 * z.max(1.0));
    }

    #[test]
    fn tilted_mean_increases_with_beta(seed in any::<u64>()) {
        let q = random_histogram(seed);
        let mut previous = f64::NEG_INFINITY;
        for i in -30..=30 {
            let m = tilted_moments(&q, f64::from(i)).0;
            prop_assert!(m > previous);
            previous = m;
        }
    }

    #[test]
    fn disjoint_projections_add_their_gains(a in any::<u64>(), b in any::<u64>(), ta in 0.1f64..0.9, tb in 0.1f64..0.9) {
        let (qa, qb) = (random_histogram(a), random_histogram(b));
        let (sa, sb) = (solve_beta(&qa, ta).unwrap(), solve_beta(&qb, tb).unwrap());
        // KL of the two-feature product model against the product reference,
        // by enumeration over the joint bins.
        let (za, zb) = (brute_z(&qa, sa.beta), brute_z(&qb, sb.beta));
        let center = |i: usize| (2 * i + 1) as f64 / (2 * REFERENCE_BINS) as f64;
        let mut kl = 0.0;
        for i in 0..REFERENCE_BINS {
            for j in 0..REFERENCE_BINS {
                let q = qa[i] * qb[j];
                let p = q * (sa.beta * center(i) + sb.beta * center(j)).exp() / (za * zb);
                kl += p * (p / q).ln();
            }
        }
        prop_assert!((kl - (sa.gain + sb.gain)).abs() <= 1e-9 * kl.max(1.0));
    }
}

#[test]
fn saturating_targets_are_errors() {
    let q = random_histogram(3);
    for t in [0.0, 1.0 / 64.0, 63.0 / 64.0, 1.0] {
        assert!(matches!(solve_beta(&q, t), Err(Error::Saturation { .. })), "target {t}");
    }
}

#[test]
fn log_likelihood_hand_values() {
    let t = template(1, &[0.0], vec![vec![(0.0, vec![feature(0, 2.0, 0.3, 0.5)])]]);
    let r = ResponseVector::from_values(vec![0.5]);
    assert_eq!(log_likelihood(&r, &config(vec![false]), &t).unwrap(), 0.0);
    assert!((log_likelihood(&r, &config(vec![true]), &t).unwrap() - 0.7).abs() < 1e-15);
    assert!(log_likelihood(&ResponseVector::from_values(vec![0.5, 0.5]), &config(vec![true]), &t).is_err());
    assert!(log_likelihood(&r, &config(vec![true, false]), &t).is_err());
}

fn toy_four_regions() -> aot_core::model::AndOrTemplate {
    let half = 0.5f64.ln();
    template(
        2,
        &[half; 4],
        (0..4)
            .map(|r| vec![(half, vec![feature(2 * r, 3.0 + r as f64, 1.2, 0.6), feature(2 * r + 1, 1.0, 0.4, 0.5)])])
            .collect(),
    )
}

#[test]
fn log_likelihood_equals_the_matching_score() {
    let t = toy_four_regions();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let r = ResponseVector::from_values((0..8).map(|_| rng.gen()).collect());
        let m = matching_score(&r, &t).unwrap();
        let ll = log_likelihood(&r, &m.configuration, &t).unwrap();
        assert!((ll - m.raw).abs() <= 1e-12);
    }
}

#[test]
fn uniform_priors_sum_over_regions() {
    let t = toy_four_regions();
    let r = ResponseVector::from_values(vec![0.3; 8]);
    let c = complete_likelihood(&r, &config(vec![false; 4]), &t).unwrap();
    assert!((c.log_prior - 4.0 * 0.5f64.ln()).abs() < 1e-12);
    assert_eq!(c.log_likelihood, 0.0);
    assert!(!c.impossible);
}

#[test]
fn inferred_configuration_maximizes_the_complete_likelihood() {
    let t = toy_four_regions();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let r = ResponseVector::from_values((0..8).map(|_| rng.gen()).collect());
        let (best, _) = infer_configuration(&r, &t).unwrap();
        let best_value = complete_likelihood(&r, &best, &t).unwrap().value;
        for choices in all_choices(&t) {
            let other = config(t.structure_for(&choices));
            assert!(best_value >= complete_likelihood(&r, &other, &t).unwrap().value - 1e-12);
        }
    }
}

#[test]
fn zero_probability_branch_is_flagged() {
    let t = template(1, &[f64::NEG_INFINITY], vec![vec![(0.0, vec![feature(0, 1.0, 0.1, 0.5)])]]);
    let c = complete_likelihood(&ResponseVector::from_values(vec![0.2]), &config(vec![false]), &t).unwrap();
    assert!(c.impossible);
    assert_eq!(c.value, f64::NEG_INFINITY);
}
