use aot_core::error::Error;
use aot_core::infoproj::estimate_reference;
use aot_core::model::{AndOrTemplate, Branch, DataMatrix, Layout, Level, OrNode, SelectedFeature};
use aot_core::pursuit::{block_score, em_objective, pursue, trace_to_string, Block, PursuitConfig, Tiling};
use aot_core::serial::to_json_string;
use aot_core::synth::{jaccard, planted_blocks, PlantedSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn planted_blocks_are_recovered() {
    let p = planted_blocks(&PlantedSpec::default()).unwrap();
    let q = estimate_reference(&p.negatives).unwrap();
    let res = pursue(&p.matrix, &q, &p.tiling, &PursuitConfig::default()).unwrap();
    for (r, planted_cols) in p.planted_columns.iter().enumerate() {
        let best = res
            .blocks
            .iter()
            .filter(|b| b.region == r)
            .map(|b| jaccard(&b.rows, &p.planted_rows))
            .fold(0.0, f64::max);
        assert!(best >= 0.95, "region {r}: row jaccard {best}");
        for b in res.blocks.iter().filter(|b| b.region == r) {
            assert!(b.cols.iter().all(|f| p.tiling.regions[r].columns.contains(&f.column)));
            if jaccard(&b.rows, &p.planted_rows) >= 0.95 {
                let cols: Vec<usize> = b.cols.iter().map(|f| f.column).collect();
                assert!(cols.iter().all(|c| planted_cols.contains(c)), "region {r}: {cols:?}");
            }
        }
    }
}

#[test]
fn learning_invariants_hold_on_the_planted_matrix() {
    let p = planted_blocks(&PlantedSpec::default()).unwrap();
    let q = estimate_reference(&p.negatives).unwrap();
    let cfg = PursuitConfig::default();
    let res = pursue(&p.matrix, &q, &p.tiling, &cfg).unwrap();

    for pair in res.trace.windows(2) {
        assert!(pair[1].objective >= pair[0].objective - 1e-9, "{:?}", res.trace);
        assert!(pair[1].objective >= pair[1].objective_after_e - 1e-9, "{:?}", res.trace);
        assert!(pair[1].objective_after_e >= pair[0].objective - 1e-9, "{:?}", res.trace);
    }
    let last = res.trace.last().unwrap();
    let objective = em_objective(&p.matrix, &res.template, &res.assignment, cfg.epsilon_gain).unwrap();
    assert!((objective - last.objective).abs() <= 1e-9 * objective.abs().max(1.0));
    assert_eq!(objective, em_objective(&p.matrix, &res.template, &res.assignment, cfg.epsilon_gain).unwrap());

    for b in &res.blocks {
        assert!((b.score - block_score(b, &p.matrix).unwrap()).abs() <= 1e-9 * b.score.abs().max(1.0));
        assert!(b.score >= cfg.epsilon_gain);
        assert!(b.cols.len() <= cfg.t_features);
    }
    // One branch per (image, region); blocks of a region partition its rows
    // together with the off branch.
    for row in &res.assignment {
        assert_eq!(row.len(), p.tiling.regions.len());
        for (r, &b) in row.iter().enumerate() {
            assert!(b < res.template.or_nodes[r].branches.len());
        }
    }
    for r in 0..p.tiling.regions.len() {
        let covered: usize = res.blocks.iter().filter(|b| b.region == r).map(|b| b.rows.len()).sum();
        let off = res.assignment.iter().filter(|row| row[r] == 0).count();
        assert_eq!(covered + off, p.matrix.n_rows());
    }
    let text = trace_to_string(&res.trace);
    assert_eq!(text.lines().count(), res.trace.len() + 1);
    assert_eq!(text.lines().nth(1).unwrap().split('\t').count(), 4);
}

#[test]
fn same_seed_gives_identical_templates() {
    let p = planted_blocks(&PlantedSpec::default()).unwrap();
    let q = estimate_reference(&p.negatives).unwrap();
    let a = pursue(&p.matrix, &q, &p.tiling, &PursuitConfig::default()).unwrap();
    let b = pursue(&p.matrix, &q, &p.tiling, &PursuitConfig::default()).unwrap();
    assert_eq!(to_json_string(&a.template).unwrap(), to_json_string(&b.template).unwrap());
    assert_eq!(a.assignment, b.assignment);
}

#[test]
fn single_branch_homogeneous_rows_form_one_block_per_region() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let negatives = DataMatrix::from_rows(
        (0..300).map(|i| (format!("n{i}"), (0..16).map(|_| rng.gen_range(0.0..0.3)).collect())).collect(),
    )
    .unwrap();
    let row: Vec<f64> = (0..16).map(|c| if c % 3 == 0 { 0.85 } else { 0.1 }).collect();
    let matrix = DataMatrix::from_rows((0..12).map(|i| (format!("x{i}"), row.clone())).collect()).unwrap();
    let q = estimate_reference(&negatives).unwrap();
    let cfg = PursuitConfig { k_or: 1, epsilon_gain: 0.0, ..PursuitConfig::default() };
    let res = pursue(&matrix, &q, &Tiling::contiguous(16, 4).unwrap(), &cfg).unwrap();
    assert_eq!(res.blocks.len(), 4);
    for b in &res.blocks {
        assert_eq!(b.rows, (0..12).collect::<Vec<_>>());
    }
}

#[test]
fn all_zero_responses_are_degenerate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let negatives = DataMatrix::from_rows(
        (0..200).map(|i| (format!("n{i}"), (0..8).map(|_| rng.gen::<f64>()).collect())).collect(),
    )
    .unwrap();
    let matrix = DataMatrix::from_rows((0..10).map(|i| (format!("x{i}"), vec![0.0; 8])).collect()).unwrap();
    let q = estimate_reference(&negatives).unwrap();
    let res = pursue(&matrix, &q, &Tiling::contiguous(8, 2).unwrap(), &PursuitConfig::default());
    assert!(matches!(res, Err(Error::DegenerateTemplate(_))));
}

#[test]
fn invalid_configurations_and_tilings_are_rejected() {
    let p = planted_blocks(&PlantedSpec { negatives: 50, ..PlantedSpec::default() }).unwrap();
    let q = estimate_reference(&p.negatives).unwrap();
    for cfg in [
        PursuitConfig { k_or: 0, ..PursuitConfig::default() },
        PursuitConfig { t_features: 0, ..PursuitConfig::default() },
        PursuitConfig { epsilon_gain: -1.0, ..PursuitConfig::default() },
        PursuitConfig { max_target: 1.0, ..PursuitConfig::default() },
    ] {
        assert!(pursue(&p.matrix, &q, &p.tiling, &cfg).is_err());
    }
    assert!(Tiling::contiguous(256, 3).is_err());
    let partial = Tiling::contiguous(128, 4).unwrap();
    assert!(pursue(&p.matrix, &q, &partial, &PursuitConfig::default()).is_err());
}

#[test]
fn prior_only_objective_without_blocks() {
    let matrix = DataMatrix::from_rows(vec![("a".into(), vec![0.4, 0.6]), ("b".into(), vec![0.1, 0.9])]).unwrap();
    let t = AndOrTemplate {
        label: "empty".into(),
        level: Level::Object,
        layout: Layout::Matrix { columns: 2 },
        or_nodes: vec![OrNode {
            region: 0,
            rect: None,
            columns: vec![0, 1],
            branches: vec![Branch { part: None, log_prob: 0.25f64.ln() }],
        }],
        terminals: Vec::new(),
    };
    let value = em_objective(&matrix, &t, &[vec![0], vec![0]], 2.0).unwrap();
    assert!((value - 3.0 * 0.25f64.ln()).abs() < 1e-12);
    assert!(em_objective(&matrix, &t, &[vec![0]], 2.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn block_score_matches_a_naive_sum(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let matrix = DataMatrix::from_rows(
            (0..8).map(|i| (format!("r{i}"), (0..8).map(|_| rng.gen::<f64>()).collect())).collect(),
        )
        .unwrap();
        let rows: Vec<usize> = (0..5).map(|i| i + rng.gen_range(0..=3)).collect();
        let cols: Vec<SelectedFeature> = (0..5)
            .map(|j| {
                let beta = rng.gen_range(-3.0..6.0);
                let log_z = rng.gen_range(0.0..2.0);
                SelectedFeature { column: j + rng.gen_range(0..=3), beta, log_z, mean: 0.5, gain: 0.0 }
            })
            .collect();
        let block = Block { region: 0, rows: rows.clone(), cols: cols.clone(), score: 0.0 };
        // Weighted sum first, normalizers separately.
        let mut weighted = 0.0;
        for f in &cols {
            let column_total: f64 = rows.iter().map(|&i| matrix.get(i, f.column)).sum();
            weighted += f.beta * column_total;
        }
        let normalizers: f64 = cols.iter().map(|f| f.log_z).sum::<f64>() * rows.len() as f64;
        let oracle = weighted - normalizers;
        prop_assert!((block_score(&block, &matrix).unwrap() - oracle).abs() <= 1e-12);
    }
}
