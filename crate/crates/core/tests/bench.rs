use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use soc_causal::bench::{
    cell_seed, distribution_summary, evaluate, median, render_report, run_matrix, split_by_treatment, summarise, BenchConfig,
    BenchData, Method,
};
use soc_causal::config::KeyValues;
use soc_causal::gnn::{GnnConfig, GnnModel, ModelKind};
use soc_causal::discovery::Algorithm;

fn small() -> BenchConfig {
    let mut c = BenchConfig::default();
    c.farm.n_days = 40;
    c.gnn_epochs = 20;
    c.mlp_epochs = 5;
    c.rf_trees = 4;
    c.gbt_rounds = 4;
    c.seeds = 2;
    c
}

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

#[test]
fn split_counts_fields_and_partitions_rows() {
    let data = BenchData::generate(&small()).unwrap();
    let t = &data.prepared.table;
    let split = split_by_treatment(t, &s(&["red", "blue"]), &s(&["green"])).unwrap();
    assert_eq!((split.train_fields, split.test_fields), (15, 7));
    for r in 0..t.n_rows() {
        let tr = t.treatment[r].as_str();
        assert_eq!(split.train_mask[r], tr == "red" || tr == "blue");
        assert_eq!(split.test_mask[r], tr == "green");
        assert!(!(split.train_mask[r] && split.test_mask[r]));
    }
    assert!(split_by_treatment(t, &s(&["red"]), &[]).is_err());
    assert!(split_by_treatment(t, &s(&["red"]), &s(&["red"])).is_err());
    assert!(split_by_treatment(t, &s(&["red"]), &s(&["purple"])).is_err());
}

#[test]
fn evaluate_trivial_and_direct_formula() {
    assert_eq!(evaluate(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
    assert_eq!(evaluate(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), (5.0, 2.0));
    assert!(evaluate(&[], &[]).is_err());
    assert!(evaluate(&[1.0], &[1.0, 2.0]).is_err());
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let p: Vec<f64> = (0..257).map(|_| r.random_range(-5.0..5.0)).collect();
    let y: Vec<f64> = (0..257).map(|_| r.random_range(-5.0..5.0)).collect();
    let mut se = 0.0;
    let mut ae = 0.0;
    for i in 0..p.len() {
        se += (p[i] - y[i]) * (p[i] - y[i]);
        ae += (p[i] - y[i]).abs();
    }
    let (mse, mae) = evaluate(&p, &y).unwrap();
    assert!((mse - se / 257.0).abs() < 1e-12);
    assert!((mae - ae / 257.0).abs() < 1e-12);
}

#[test]
fn histograms() {
    let data = BenchData::generate(&small()).unwrap();
    let raw = &data.raw;
    for col in ["totalC", "plough"] {
        let h = distribution_summary(raw, col, 10).unwrap();
        for g in &h {
            let rows = raw.treatment.iter().filter(|t| **t == g.treatment).count();
            assert_eq!(g.counts.iter().sum::<usize>(), rows);
            assert_eq!(g.edges.len(), g.counts.len() + 1);
        }
    }
    let plough = distribution_summary(raw, "plough", 10).unwrap();
    let green = plough.iter().find(|g| g.treatment == "green").unwrap();
    assert_eq!(green.counts[0], green.counts.iter().sum::<usize>());
    assert_eq!(green.edges[0], 0.0);

    let mut flat = raw.clone();
    let c = flat.schema.require("totalC").unwrap();
    for r in 0..flat.n_rows() {
        flat.set(r, c, 2.5);
    }
    let h = distribution_summary(&flat, "totalC", 10).unwrap();
    assert!(h.iter().all(|g| g.counts.len() == 1));
}

#[test]
fn matrix_shape_order_and_failure_rows() {
    let cfg = small();
    let mut data = BenchData::generate(&cfg).unwrap();
    let out = run_matrix(&data, &cfg).unwrap();
    assert_eq!(out.rows.len(), 10 * cfg.seeds);
    assert_eq!(out.reference.len(), 2 * cfg.seeds);
    let order: Vec<Method> = out.rows.iter().map(|r| r.method).step_by(cfg.seeds).collect();
    assert_eq!(order, Method::matrix());
    assert!(out.rows.iter().all(|r| r.failure.is_none() && r.mse >= 0.0 && r.mae >= 0.0));
    assert_eq!(out.rows.iter().filter(|r| r.method.causal()).count(), 6 * cfg.seeds);

    // Corrupt the tabular design: the three tabular baselines fail, the rest still run.
    data.train_design.y[0] = f64::NAN;
    let bad = run_matrix(&data, &cfg).unwrap();
    assert_eq!(bad.rows.len(), 10 * cfg.seeds);
    for r in &bad.rows {
        let tabular = matches!(r.method, Method::Gbt | Method::Mlp | Method::Rf);
        assert_eq!(r.failure.is_some(), tabular, "{:?}", r.method);
    }
    let report = render_report(&cfg, &data, &bad);
    assert!(report.results_csv.contains("failed: baselines::"));
    assert!(report.markdown.contains("Failed cells"));
}

#[test]
fn report_is_independent_of_worker_count() {
    let mut cfg = small();
    let data = BenchData::generate(&cfg).unwrap();
    let a = render_report(&cfg, &data, &run_matrix(&data, &cfg).unwrap());
    cfg.jobs = 3;
    let b = render_report(&cfg, &data, &run_matrix(&data, &cfg).unwrap());
    assert_eq!(a.results_csv, b.results_csv);
    assert_eq!(a.reference_csv, b.reference_csv);
    assert_eq!(a.audit_csv, b.audit_csv);
    assert_eq!(a.markdown, b.markdown);
    assert!(a.markdown.contains(&cfg.hash()));
    assert!(a.markdown.contains("raw target units"));
}

#[test]
fn cell_seeds_are_distinct() {
    let mut seen = std::collections::BTreeSet::new();
    for m in Method::matrix().into_iter().chain(Method::reference()) {
        for s in 0..5 {
            assert!(seen.insert(cell_seed(0, m, s)));
        }
    }
}

#[test]
fn config_round_trip_and_validation() {
    let c = BenchConfig::default();
    assert_eq!(BenchConfig::from_kv(&c.to_kv()).unwrap(), c);
    let kv = KeyValues::parse("run.seeds = 3\nsplit.test = green\ngnn.batch_size = 64\ngnn.neighbourhood = ancestors").unwrap();
    let d = BenchConfig::from_kv(&kv).unwrap();
    assert_eq!((d.seeds, d.batch_size), (3, Some(64)));
    assert_ne!(d.hash(), c.hash());
    let mut j = c.clone();
    j.jobs = 8;
    assert_eq!(j.hash(), c.hash());
    for bad in ["run.bogus = 1", "run.seeds = 0", "split.test = ", "gnn.hidden = x", "discovery.alpha = 2"] {
        let e = BenchConfig::from_kv(&KeyValues::parse(bad).unwrap()).unwrap_err();
        assert_eq!(e.exit_code(), 2, "{bad}");
    }
}

#[test]
fn gnn_training_loss_halves_on_benchmark_train_split() {
    let cfg = BenchConfig::default();
    let data = BenchData::generate(&cfg).unwrap();
    for kind in [ModelKind::Ecc, ModelKind::Sage] {
        let sk = data
            .skeleton(soc_causal::bench::SkeletonSource::Discovered(Algorithm::Pc), 0, &cfg)
            .unwrap();
        let gc = GnnConfig::new(kind);
        let mut m = GnnModel::new(sk, &gc).unwrap();
        let h = m.train(&data.train_instances, &gc).unwrap().loss_history;
        assert_eq!(h.len(), 500);
        assert!(h[499] <= 0.5 * h[0], "{kind:?}: {} -> {}", h[0], h[499]);
    }
}

#[test]
fn medians_and_summaries() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    assert!(median(&[]).is_nan());
    assert_eq!(median(&[f64::NAN, 1.0]), 1.0);
    assert!(summarise(&[]).is_empty());
}

proptest! {
    #[test]
    fn median_ignores_order(mut v in proptest::collection::vec(-1e6f64..1e6, 1..20), k in 0usize..1000) {
        let m = median(&v);
        let n = v.len();
        v.rotate_left(k % n);
        v.reverse();
        prop_assert_eq!(median(&v), m);
    }
}
