use std::fs;
use std::path::Path;
use std::process::Command;

use mtlrrc::{generate, Case, PenaltyFamily, SimConfig, SolverOptions, SplitSpec};
use mtlrrc_cli::bench::{bench, write_bench, Stat};
use mtlrrc_cli::{grid_search, prepare, GridSpec, Method, Mode, RunConfig, SearchSettings};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mtlrrc"))
}

fn small_sim(seed: u64, kappa: f64, case: Case) -> SimConfig {
    SimConfig {
        n_tasks: 12,
        n_features: 4,
        n_clusters: 2,
        n_samples: 45,
        sigma2: 1.0,
        kappa,
        case,
        sigma_o2: 1.0,
        seed,
    }
}

fn settings(penalty: PenaltyFamily) -> SearchSettings {
    SearchSettings {
        penalty,
        gamma: penalty.default_gamma(),
        k: 3,
        nu: 1.0,
        stl_ridge: 1e-2,
        solver: SolverOptions::default(),
    }
}

fn stderr_json(out: &std::process::Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("JSON on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn simulate_then_fit_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let st = bin()
        .args(["--mode", "simulate", "--tasks", "6", "--features", "3", "--clusters", "2"])
        .args(["--samples", "40", "--kappa", "0.2", "--seed", "4", "--out"])
        .arg(&sim)
        .status()
        .unwrap();
    assert!(st.success());
    assert!(sim.join("truth.json").exists());
    let fit = dir.path().join("fit");
    let out = bin()
        .args(["--mode", "fit", "--data-dir"])
        .arg(sim.join("data"))
        .args(["--lambda1", "0.5,1", "--lambda2", "0.1", "--lambda3", "1,inf", "--k", "2", "--out"])
        .arg(&fit)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "config.json",
        "fit.json",
        "standardizer.json",
        "splits.json",
        "grid.csv",
        "W.csv",
        "U.csv",
        "O.csv",
        "W_raw.csv",
        "intercept_raw.json",
        "graph.csv",
        "metrics.json",
    ] {
        assert!(fit.join(f).exists(), "missing {f}");
    }
    let grid = fs::read_to_string(fit.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 4);
    assert!(grid.contains(",inf,"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(fit.join("fit.json")).unwrap()).unwrap();
    assert_eq!(report["w"].as_array().unwrap().len(), 6);
}

#[test]
fn usage_errors_exit_with_json() {
    let out = bin().args(["--mode", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--mode", "fit", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "config");
}

fn write_task(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn missing_response_column_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    write_task(&data, "a.csv", "x1,y\n1,2\n3,4\n");
    write_task(&data, "b.csv", "x1,z\n1,2\n3,4\n");
    let out = bin()
        .args(["--mode", "fit", "--data-dir"])
        .arg(&data)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "input");
    assert!(err["error"]["message"].as_str().unwrap().contains("b.csv"));
}

#[test]
fn bernoulli_label_outside_zero_one_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_task(dir.path(), "t0.csv", "x1,y\n0.5,1\n-0.5,2\n");
    fs::write(
        dir.path().join("manifest.json"),
        r#"{"family": "bernoulli", "tasks": ["t0.csv"]}"#,
    )
    .unwrap();
    let err = mtlrrc_cli::ingest(dir.path()).unwrap_err();
    assert_eq!(err.kind(), "input");
    let msg = err.to_string();
    assert!(msg.contains("t0.csv") && msg.contains("`y`"), "{msg}");
}

#[test]
fn ingest_round_trips_written_tasks() {
    let (data, _) = generate::<f64>(&small_sim(3, 0.0, Case::Case1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    mtlrrc::io::write_tasks(dir.path(), &data).unwrap();
    let (back, names) = mtlrrc_cli::ingest(dir.path()).unwrap();
    assert_eq!(names.len(), 4);
    for (a, b) in data.tasks().iter().zip(back.tasks()) {
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
    }
}

#[test]
fn selection_is_the_argmin_of_the_table() {
    let (data, _) = generate::<f64>(&small_sim(5, 0.2, Case::Case2)).unwrap();
    let prep = prepare(&data, &SplitSpec::Counts(15, 15, 15), 1).unwrap();
    let grid = GridSpec {
        lambda1: vec![0.3, 1.0],
        lambda2: vec![0.1, 1.0],
        lambda3: vec![0.5, 2.0, f64::INFINITY],
    };
    let out = grid_search(&prep.train, &prep.validation, &settings(PenaltyFamily::GroupScad), &grid).unwrap();
    assert_eq!(out.table.len(), 12);
    let best = out.table[out.best_index].validation_loss.unwrap();
    for row in &out.table {
        assert!(row.validation_loss.unwrap() >= best);
    }
    let first_min = out
        .table
        .iter()
        .position(|r| r.validation_loss.unwrap() == best)
        .unwrap();
    assert_eq!(first_min, out.best_index);
    assert_eq!(out.best.lambda1, out.table[out.best_index].lambda1);
}

#[test]
fn single_point_grid() {
    let (data, _) = generate::<f64>(&small_sim(6, 0.0, Case::Case1)).unwrap();
    let prep = prepare(&data, &SplitSpec::Counts(15, 15, 15), 1).unwrap();
    let grid = GridSpec {
        lambda1: vec![1.0],
        lambda2: vec![0.5],
        lambda3: vec![1.0],
    };
    let out = grid_search(&prep.train, &prep.validation, &settings(PenaltyFamily::GroupLasso), &grid).unwrap();
    assert_eq!(out.table.len(), 1);
    assert_eq!(out.best_index, 0);
}

#[test]
fn structureless_outliers_select_a_finite_lambda3() {
    let mut sim = small_sim(8, 0.0, Case::Case2);
    sim.n_samples = 60;
    let (mut data_gen, _) = generate::<f64>(&sim).unwrap();
    // Plant two tasks with unrelated coefficient vectors.
    let mut tasks = data_gen.tasks().to_vec();
    for (m, w) in [(2, [-15.0, 15.0, -15.0, 15.0]), (9, [15.0, 15.0, 15.0, -15.0])] {
        let t = &tasks[m];
        let w = ndarray::Array1::from(w.to_vec());
        let y = t.x.dot(&w);
        tasks[m] = mtlrrc::TaskDataset::new(t.x.clone(), y, t.family).unwrap();
    }
    data_gen = mtlrrc::MultiTaskData::new(tasks).unwrap();
    let prep = prepare(&data_gen, &SplitSpec::Counts(20, 20, 20), 2).unwrap();
    let grid = GridSpec {
        lambda1: vec![1.0],
        lambda2: vec![3.0],
        lambda3: vec![2.0, f64::INFINITY],
    };
    let out = grid_search(&prep.train, &prep.validation, &settings(PenaltyFamily::GroupScad), &grid).unwrap();
    assert!(out.best.lambda3().is_finite(), "{:?}", out.table);
    assert!(out.fit.outlier_tasks.contains(&2) && out.fit.outlier_tasks.contains(&9));
}

fn bench_config(out: &Path) -> RunConfig {
    RunConfig {
        mode: Mode::Bench,
        out: out.to_path_buf(),
        replicates: 3,
        seed: 11,
        k: 3,
        lambda1: vec![1.0],
        lambda2: vec![0.3, 3.0],
        lambda3: vec![2.0],
        split: SplitSpec::Counts(15, 15, 15),
        sim: small_sim(0, 0.0, Case::Case1),
        methods: vec![Method::MtlrrcGs, Method::Mtlcvx],
        ..RunConfig::default()
    }
}

#[test]
fn infinite_lambda3_reproduces_the_convex_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = bench_config(dir.path());
    cfg.lambda3 = vec![f64::INFINITY];
    let out = bench(&cfg).unwrap();
    for r in 0..cfg.replicates {
        let rows: Vec<_> = out.rows.iter().filter(|x| x.replicate == r).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].nmse, rows[1].nmse);
        assert_eq!(rows[0].rmse, rows[1].rmse);
        assert_eq!(rows[0].n_detected, 0);
    }
}

#[test]
fn summary_means_are_plain_averages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bench_config(dir.path());
    let out = bench(&cfg).unwrap();
    for s in &out.summary {
        let rows: Vec<_> = out.rows.iter().filter(|r| r.method == s.method).collect();
        let mean = rows.iter().map(|r| r.nmse).sum::<f64>() / rows.len() as f64;
        let stat: &Stat = s.nmse.as_ref().unwrap();
        assert!((stat.mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        assert_eq!(stat.n, rows.len());
        if s.method == Method::Mtlcvx {
            assert!(s.tpr.is_none() && s.fpr.is_none());
        }
    }
}

#[test]
fn bench_files_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let cfg = bench_config(d.path());
        let out = bench(&cfg).unwrap();
        write_bench(d.path(), &cfg, &out).unwrap();
    }
    for f in ["replicates.csv", "summary.csv", "table.txt"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}
