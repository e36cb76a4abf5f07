use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soc-causal"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL: &str = "\
# tiny benchmark for fast runs
benchmark.n_days = 40
gnn.epochs = 5
baselines.mlp_epochs = 3
baselines.rf_trees = 3
baselines.gbt_rounds = 3
run.seeds = 3
";

#[test]
fn usage_errors_exit_2() {
    let t = tempfile::tempdir().unwrap();
    let o = cli(&["bench", "--no-such-flag"], t.path());
    assert_eq!(code(&o), 2);
    let o = cli(&["train", "--input", "x.csv", "--out", "m.bin"], t.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--skeleton"));
    let o = cli(&["frobnicate"], t.path());
    assert_eq!(code(&o), 2);
    fs::write(t.path().join("bad.cfg"), "run.nonsense = 1\n").unwrap();
    let o = cli(&["synth", "--config", "bad.cfg"], t.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn every_subcommand_documents_its_flags() {
    let t = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 8] = [
        ("synth", &["--config", "--out-dir", "--jobs", "--seed", "--days"]),
        ("ingest", &["--input"]),
        ("discover", &["--input", "--algorithm", "--alpha"]),
        ("train", &["--input", "--skeleton", "--model", "--lr", "--epochs", "--hidden", "--seed", "--out"]),
        ("eval", &["--input", "--model"]),
        ("bench", &["--config", "--seeds", "--out-dir", "--jobs", "--master-seed", "--epochs"]),
        ("export-dot", &["--input", "--out"]),
        ("baseline", &["--input", "--model", "--seed"]),
    ];
    for (sub, flags) in cases {
        let o = cli(&[sub, "--help"], t.path());
        assert_eq!(code(&o), 0, "{sub}");
        let text = String::from_utf8_lossy(&o.stdout);
        for f in flags {
            assert!(text.contains(f), "{sub} --help lacks {f}");
        }
    }
}

#[test]
fn flags_override_config_file() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("small.cfg"), SMALL).unwrap();
    let o = cli(&["bench", "--config", "small.cfg", "--seeds", "2", "--out-dir", "run"], t.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let eff = fs::read_to_string(t.path().join("run/effective_config.txt")).unwrap();
    assert!(eff.contains("run.seeds = 2\n"));
    assert!(eff.contains("benchmark.n_days = 40\n"));
    assert!(eff.contains("gnn.epochs = 5\n"));
    let results = fs::read_to_string(t.path().join("run/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 10 * 2);
    for f in ["report.md", "reference.csv", "audit.csv", "version.txt", "run_metadata.txt", "histograms/plough.csv", "graphs/pc.dot"] {
        assert!(t.path().join("run").join(f).exists(), "{f}");
    }
}

#[test]
fn pipeline_runs_end_to_end() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    let ok = |o: Output| {
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8_lossy(&o.stdout).to_string()
    };
    ok(cli(&["synth", "--days", "40", "--out-dir", "data"], p));
    ok(cli(&["ingest", "--input", "data/raw.csv", "--out-dir", "data"], p));
    let d = ok(cli(&["discover", "--input", "data/raw.csv", "--out-dir", "graphs_raw"], p));
    assert!(d.contains("discover gies"));
    ok(cli(&["discover", "--input", "data/prepared.csv", "--algorithm", "pc", "--out-dir", "graphs"], p));
    assert!(p.join("graphs/pc.edges").exists());
    ok(cli(
        &[
            "train", "--input", "data/prepared.csv", "--skeleton", "graphs/pc.edges", "--model", "sage", "--epochs", "5", "--out",
            "model/sage.bin", "--out-dir", "model",
        ],
        p,
    ));
    let eval = ok(cli(&["eval", "--input", "data/prepared.csv", "--model", "model/sage.bin", "--out-dir", "eval"], p));
    assert!(eval.contains("test MSE"));
    assert!(fs::read_to_string(p.join("eval/metrics.txt")).unwrap().contains("mse = "));
    ok(cli(&["export-dot", "--input", "graphs/pc.cpdag", "--out", "graphs/pc_again.dot"], p));
    assert_eq!(
        fs::read_to_string(p.join("graphs/pc_again.dot")).unwrap().matches("->").count(),
        fs::read_to_string(p.join("graphs/pc.dot")).unwrap().matches("->").count()
    );
    ok(cli(&["export-dot", "--input", "data/truth.edges", "--out-dir", "graphs"], p));
    assert!(p.join("graphs/truth.dot").exists());
    for m in ["gbt", "rf"] {
        ok(cli(&["baseline", "--input", "data/prepared.csv", "--model", m, "--out-dir", &format!("b_{m}")], p));
    }
    let o = cli(&["baseline", "--input", "data/prepared.csv", "--model", "svm"], p);
    assert_eq!(code(&o), 2);
}

#[test]
fn data_and_numeric_failures_have_their_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    let o = cli(&["ingest", "--input", "missing.csv"], p);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("tabular_ingest::load_table"));

    assert_eq!(code(&cli(&["synth", "--days", "30", "--out-dir", "d"], p)), 0);
    assert_eq!(code(&cli(&["ingest", "--input", "d/raw.csv", "--out-dir", "d"], p)), 0);
    fs::write(p.join("sk.edges"), "plough\tpH\t1\npH\ttotalC\t1\n").unwrap();
    let o = cli(
        &["train", "--input", "d/prepared.csv", "--skeleton", "sk.edges", "--lr", "1e300", "--epochs", "20", "--out", "m.bin"],
        p,
    );
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("causal_gnn::train"));
    fs::write(p.join("bad.edges"), "plough\tnowhere\t1\n").unwrap();
    let o = cli(&["train", "--input", "d/prepared.csv", "--skeleton", "bad.edges", "--out", "m.bin"], p);
    assert_eq!(code(&o), 3);
}

#[test]
fn identical_runs_give_identical_outputs_except_metadata() {
    let t = tempfile::tempdir().unwrap();
    for d in ["a", "b"] {
        assert_eq!(code(&cli(&["synth", "--days", "20", "--out-dir", d], t.path())), 0);
    }
    let mut names: Vec<String> = fs::read_dir(t.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"effective_config.txt".to_string()) && names.contains(&"version.txt".to_string()));
    for n in names.iter().filter(|n| *n != "run_metadata.txt") {
        assert_eq!(fs::read(t.path().join("a").join(n)).unwrap(), fs::read(t.path().join("b").join(n)).unwrap(), "{n}");
    }
}
