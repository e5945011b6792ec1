use std::path::Path;
use std::process::{Command, Output};

use deqgan::training::RunRecord;

fn deqgan(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deqgan"))
        .args(args)
        .env("DEQGAN_CACHE_DIR", cache)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn train_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gan");
    let cache = dir.path().join("cache");
    ok(deqgan(
        &cache,
        &[
            "run",
            "--preset",
            "exp",
            "--loss",
            "gan",
            "--iterations",
            "20",
            "--save-weights",
            "--out",
            out.to_str().unwrap(),
        ],
    ));
    for f in [
        "run.json",
        "curves.csv",
        "solution.csv",
        "generator.json",
        "discriminator.json",
        "experiment.toml",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let rec = RunRecord::load(&out.join("run.json")).unwrap();
    assert!(rec.final_mse.is_finite());
    assert_eq!(rec.iterations_completed, 20);
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 21);
    let solution = std::fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(solution.starts_with("t,pred_0,truth_0,abs_residual_0\n"));
    assert_eq!(solution.lines().count(), 1 + 200);
}

#[test]
fn fixed_seed_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(deqgan(
            &cache,
            &[
                "run",
                "--preset",
                "sho",
                "--loss",
                "l2",
                "--seed",
                "0",
                "--iterations",
                "15",
                "--out",
                out.to_str().unwrap(),
            ],
        ));
        std::fs::read(out.join("curves.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn oracle_mode_solves_poisson() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("pos");
    ok(deqgan(
        &cache,
        &[
            "run",
            "--preset",
            "pos",
            "--mode",
            "oracle",
            "--out",
            out.to_str().unwrap(),
        ],
    ));
    let rec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("oracle.json")).unwrap()).unwrap();
    assert_eq!(rec["method"], "fd");
    let mse = rec["mse"].as_f64().unwrap();
    assert!(mse <= 100.0 * 3e-10, "{mse}");
    assert!(Path::new(rec["cache"].as_str().unwrap()).is_file());
}

#[test]
fn compare_takes_the_minimum_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let runs = dir.path().join("runs");
    ok(deqgan(
        &cache,
        &[
            "run",
            "--preset",
            "exp",
            "--loss",
            "l2",
            "--trials",
            "3",
            "--iterations",
            "25",
            "--out",
            runs.to_str().unwrap(),
        ],
    ));
    let out = ok(deqgan(
        &cache,
        &["compare", runs.to_str().unwrap(), "--out", dir.path().to_str().unwrap()],
    ));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: no result for exp / DEQGAN"));
    let brute = (0..3)
        .map(|i| {
            RunRecord::load(&runs.join(format!("trial-{i}/run.json")))
                .unwrap()
                .final_mse
        })
        .fold(f64::INFINITY, f64::min);
    let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("problem,L1,L2,Huber,DEQGAN,Traditional"));
    let cells: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(cells[0], "exp");
    assert_eq!(cells[2].parse::<f64>().unwrap(), brute);
    assert!(cells[1].is_empty() && cells[4].is_empty());
}

#[test]
fn search_mode_exports_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cfg = dir.path().join("search.toml");
    let out = dir.path().join("search");
    std::fs::write(
        &cfg,
        format!(
            "mode = \"search\"\npreset = \"exp\"\ntrials = 4\nworkers = 2\nout = {:?}\n\n[search]\niterations = 5\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    ok(deqgan(&cache, &["run", "--config", cfg.to_str().unwrap()]));
    let csv = std::fs::read_to_string(out.join("search.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("trial,seed,lr_g,lr_d,log10_mse,passed_filter,status\n"));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "preset = \"exp\"\n[train]\nlearning_rate = 0.1\n").unwrap();
    let out = deqgan(&cache, &["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    let weights = dir.path().join("w");
    ok(deqgan(
        &cache,
        &[
            "run",
            "--preset",
            "nlo",
            "--loss",
            "l2",
            "--iterations",
            "2",
            "--save-weights",
            "--out",
            weights.to_str().unwrap(),
        ],
    ));
    std::fs::remove_dir_all(&cache).unwrap();
    let out = deqgan(
        &cache,
        &[
            "run",
            "--preset",
            "nlo",
            "--mode",
            "evaluate",
            "--load-weights",
            weights.to_str().unwrap(),
            "--out",
            dir.path().join("e").to_str().unwrap(),
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("deqgan oracle --preset nlo"));
}
