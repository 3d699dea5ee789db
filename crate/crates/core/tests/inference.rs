mod common;

use aot_core::features::ResponseVector;
use aot_core::infoproj::{estimate_reference, log_likelihood};
use aot_core::inference::{classify, infer_configuration, matching_score, s_max, Candidate};
use aot_core::model::{AndOrTemplate, NodeKind};
use aot_core::pursuit::{pursue, PursuitConfig};
use aot_core::synth::{jaccard, planted_blocks, PlantedSpec};
use common::{all_choices, feature, template};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn planted_template(cfg: &PursuitConfig) -> (AndOrTemplate, aot_core::synth::PlantedBlocks) {
    let p = planted_blocks(&PlantedSpec::default()).unwrap();
    let q = estimate_reference(&p.negatives).unwrap();
    (pursue(&p.matrix, &q, &p.tiling, cfg).unwrap().template, p)
}

/// Part hosting the planted block of each region: the content branch whose
/// training rows best match the planted rows.
fn planted_parts(cfg: &PursuitConfig) -> (AndOrTemplate, aot_core::synth::PlantedBlocks, Vec<usize>) {
    let p = planted_blocks(&PlantedSpec::default()).unwrap();
    let q = estimate_reference(&p.negatives).unwrap();
    let res = pursue(&p.matrix, &q, &p.tiling, cfg).unwrap();
    let parts = (0..res.template.or_nodes.len())
        .map(|r| {
            let rows_of = |k: usize| -> Vec<usize> {
                let (_, b) = res.template.locate_part(k).unwrap();
                (0..p.matrix.n_rows()).filter(|&i| res.assignment[i][r] == b).collect()
            };
            let candidates: Vec<usize> =
                res.template.or_nodes[r].branches.iter().filter_map(|b| b.part).collect();
            *candidates
                .iter()
                .max_by(|a, b| jaccard(&rows_of(**a), &p.planted_rows).total_cmp(&jaccard(&rows_of(**b), &p.planted_rows)))
                .unwrap()
        })
        .collect();
    (res.template, p, parts)
}

#[test]
fn planted_rows_activate_their_block() {
    let (t, p, parts) = planted_parts(&PursuitConfig::default());
    let mut agree = 0;
    let mut total = 0;
    for i in 0..p.matrix.n_rows() {
        let r = ResponseVector::from_values(p.matrix.row(i).to_vec());
        let (config, tree) = infer_configuration(&r, &t).unwrap();
        assert!((tree.root_score - tree.terminal_sum()).abs() <= 1e-9);
        for &k in &parts {
            total += 1;
            if config.s[k] == p.planted_rows.contains(&i) {
                agree += 1;
            }
        }
    }
    assert!(agree as f64 >= 0.95 * total as f64, "{agree}/{total}");
}

#[test]
fn all_zero_responses_choose_off_when_off_dominates() {
    // With one content branch per region the off branch carries the
    // background rows and outweighs every content branch at zero evidence.
    let (t, _) = planted_template(&PursuitConfig { k_or: 1, ..PursuitConfig::default() });
    let (config, tree) = infer_configuration(&ResponseVector::from_values(vec![0.0; t.dimension()]), &t).unwrap();
    assert!(config.s.iter().all(|s| !s));
    assert_eq!(tree.root_score, 0.0);
    assert!(tree.nodes.iter().filter(|n| n.kind == NodeKind::Or).all(|n| n.branch == Some(0)));
}

#[test]
fn tilted_means_score_the_summed_gains() {
    let (t, _) = planted_template(&PursuitConfig { k_or: 1, ..PursuitConfig::default() });
    let mut values = vec![0.0; t.dimension()];
    for pat in &t.terminals {
        for f in &pat.selected {
            values[f.column] = f.mean;
        }
    }
    let (config, tree) = infer_configuration(&ResponseVector::from_values(values), &t).unwrap();
    let gains: f64 = config.active_parts().map(|k| t.terminals[k].total_gain()).sum();
    assert!(config.active_parts().count() > 0);
    assert!((tree.root_score - gains).abs() <= 1e-9);
}

#[test]
fn raw_score_is_the_log_likelihood_of_the_parse() {
    let (t, p) = planted_template(&PursuitConfig::default());
    for i in [0, 7, 25, 39] {
        let r = ResponseVector::from_values(p.matrix.row(i).to_vec());
        let m = matching_score(&r, &t).unwrap();
        assert!((m.raw - log_likelihood(&r, &m.configuration, &t).unwrap()).abs() <= 1e-12);
        assert!((0.0..=1.0).contains(&m.normalized));
    }
    let ones = matching_score(&ResponseVector::from_values(vec![1.0; t.dimension()]), &t).unwrap();
    assert_eq!(ones.normalized, 1.0);
    assert_eq!(ones.raw, s_max(&t));
}

#[test]
fn template_without_parts_scores_zero() {
    let t = template(2, &[0.0, 0.0], vec![Vec::new(), Vec::new()]);
    let m = matching_score(&ResponseVector::from_values(vec![0.7; 4]), &t).unwrap();
    assert_eq!(m.raw, 0.0);
    assert_eq!(m.normalized, 0.0);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let t = template(2, &[0.0], vec![vec![(0.0, vec![feature(0, 1.0, 0.2, 0.6)])]]);
    assert!(infer_configuration(&ResponseVector::from_values(vec![0.5; 3]), &t).is_err());
}

#[test]
fn identical_templates_tie_to_the_smallest_label() {
    let t = template(1, &[0.5f64.ln()], vec![vec![(0.5f64.ln(), vec![feature(0, 2.0, 0.5, 0.7)])]]);
    let r = ResponseVector::from_values(vec![0.8]);
    let c = classify(&[
        Candidate { label: "zeta", template: &t, responses: &r },
        Candidate { label: "alpha", template: &t, responses: &r },
        Candidate { label: "mid", template: &t, responses: &r },
    ])
    .unwrap();
    assert_eq!(c.label, "alpha");
    assert_eq!(c.scores.len(), 3);
    assert!(classify(&[]).is_err());
}

/// Random template with up to 4 regions of up to 2 content branches.
fn random_template(rng: &mut ChaCha8Rng) -> AndOrTemplate {
    let regions = rng.gen_range(1..=4);
    let priors = |rng: &mut ChaCha8Rng, n: usize| {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| (p / total).ln()).collect::<Vec<_>>()
    };
    let mut off = Vec::new();
    let mut parts = Vec::new();
    for r in 0..regions {
        let content = rng.gen_range(0..=2);
        let p = priors(rng, content + 1);
        off.push(p[0]);
        parts.push(
            (0..content)
                .map(|b| {
                    let features = (0..rng.gen_range(1..=3))
                        .map(|j| feature(3 * r + (j + b) % 3, rng.gen_range(0.1..8.0), rng.gen_range(0.0..3.0), 0.5))
                        .collect();
                    (p[b + 1], features)
                })
                .collect(),
        );
    }
    template(3, &off, parts)
}

fn scaled(t: &AndOrTemplate, c: f64) -> AndOrTemplate {
    let mut t = t.clone();
    for node in &mut t.or_nodes {
        for b in &mut node.branches {
            b.log_prob *= c;
        }
    }
    for pat in &mut t.terminals {
        for f in &mut pat.selected {
            f.beta *= c;
            f.log_z *= c;
        }
        pat.log_z *= c;
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn enumeration_matches_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_template(&mut rng);
        let r = ResponseVector::from_values((0..t.dimension()).map(|_| rng.gen()).collect());
        let (config, tree) = infer_configuration(&r, &t).unwrap();
        let value = |choices: &[usize]| -> f64 {
            t.or_nodes.iter().zip(choices).map(|(node, &b)| {
                let branch = &node.branches[b];
                branch.log_prob + branch.part.map_or(0.0, |k| t.terminals[k].score(&r.values))
            }).sum()
        };
        let best = all_choices(&t).iter().map(|c| value(c)).fold(f64::NEG_INFINITY, f64::max);
        let chosen = t.choices(&config).unwrap();
        prop_assert!((value(&chosen) - best).abs() <= 1e-9);
        prop_assert!((tree.root_score + tree.log_prior - best).abs() <= 1e-9);
        prop_assert!((tree.root_score - tree.terminal_sum()).abs() <= 1e-9);
    }

    #[test]
    fn raising_a_selected_response_never_lowers_the_score(seed in any::<u64>(), bump in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_template(&mut rng);
        prop_assume!(t.part_count() > 0);
        let values: Vec<f64> = (0..t.dimension()).map(|_| rng.gen()).collect();
        let r = ResponseVector::from_values(values.clone());
        let (config, _) = infer_configuration(&r, &t).unwrap();
        let before = log_likelihood(&r, &config, &t).unwrap();
        let k = rng.gen_range(0..t.part_count());
        let f = &t.terminals[k].selected[rng.gen_range(0..t.terminals[k].selected.len())];
        let mut raised = values;
        raised[f.column] = (raised[f.column] + bump).min(1.0);
        let after = log_likelihood(&ResponseVector::from_values(raised), &config, &t).unwrap();
        prop_assert!(after >= before - 1e-12);
    }

    #[test]
    fn uniform_scaling_keeps_the_label(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_template(&mut rng);
        let b = random_template(&mut rng);
        prop_assume!(a.dimension() == b.dimension());
        let r = ResponseVector::from_values((0..a.dimension()).map(|_| rng.gen()).collect());
        let (sa, sb) = (scaled(&a, c), scaled(&b, c));
        let plain = classify(&[
            Candidate { label: "a", template: &a, responses: &r },
            Candidate { label: "b", template: &b, responses: &r },
        ]).unwrap();
        let scaled = classify(&[
            Candidate { label: "a", template: &sa, responses: &r },
            Candidate { label: "b", template: &sb, responses: &r },
        ]).unwrap();
        let margin = (plain.scores[0].normalized - plain.scores[1].normalized).abs();
        prop_assume!(margin > 1e-9);
        prop_assert_eq!(plain.label, scaled.label);
    }
}
