use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use deqgan::io::{fmt_f64, write_atomic};
use deqgan::nets::Mlp;
use deqgan::oracles::{
    cache_dir, ensure_ground_truth, ground_truth, mse, traditional_on_mesh, write_cache, CacheHeader,
};
use deqgan::problems::{Mesh, Problem, TruthSource};
use deqgan::search::{export_parallel_coordinates, random_search, TrialStatus};
use deqgan::training::{predict_with_residual, train, RunRecord, TrainConfig, Validation};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode};
use crate::{CliError, Result};

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Best validation MSE across the runs (or the oracle's MSE).
    pub best_mse: Option<f64>,
    pub summary: String,
}

/// Accuracy of the traditional solver, written as `oracle.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleRecord {
    pub problem: String,
    pub method: String,
    pub mesh: Vec<usize>,
    pub mse: f64,
    pub truth: String,
    pub cache: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationRecord {
    pub problem: String,
    pub weights: PathBuf,
    pub mse: f64,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(path: PathBuf, bytes: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    write_atomic(&path, bytes)?;
    files.push(path);
    Ok(())
}

fn meshes(config: &TrainConfig) -> Result<(Problem, Mesh, Mesh)> {
    let problem = config.build_problem()?;
    let mesh = problem.mesh(&config.mesh)?;
    let eval = mesh.refined(config.eval_factor);
    Ok((problem, mesh, eval))
}

/// Evaluation-mesh inputs, prediction, truth and absolute residual per output.
pub fn solution_csv(g: &Mlp, problem: &Problem, mesh: &Mesh, truth: Option<&Array2<f64>>) -> Result<String> {
    let (pred, residual) = predict_with_residual(g, problem, mesh.points())?;
    let coords: &[&str] = if mesh.dims() == 1 { &["t"] } else { &["x", "y"] };
    let outputs = pred.ncols();
    let mut header: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
    for j in 0..outputs {
        header.extend([format!("pred_{j}"), format!("truth_{j}"), format!("abs_residual_{j}")]);
    }
    let mut s = header.join(",");
    s.push('\n');
    for (i, row) in mesh.points().rows().into_iter().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        for j in 0..outputs {
            cells.push(fmt_f64(pred[[i, j]]));
            cells.push(truth.map(|t| fmt_f64(t[[i, j]])).unwrap_or_default());
            cells.push(fmt_f64(residual[[i, j]].abs()));
        }
        let _ = writeln!(s, "{}", cells.join(","));
    }
    Ok(s)
}

#[allow(clippy::too_many_arguments)]
fn save_run(
    dir: &Path,
    record: &RunRecord,
    g: &Mlp,
    d: Option<&Mlp>,
    problem: &Problem,
    eval: &Mesh,
    truth: &Array2<f64>,
    save_weights: bool,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    create_dir(dir)?;
    record.save(dir)?;
    files.extend([dir.join("run.json"), dir.join("curves.csv")]);
    let csv = solution_csv(g, problem, eval, Some(truth))?;
    write(dir.join("solution.csv"), csv.as_bytes(), files)?;
    if save_weights {
        g.save_json(&dir.join("generator.json"))?;
        files.push(dir.join("generator.json"));
        if let Some(d) = d {
            d.save_json(&dir.join("discriminator.json"))?;
            files.push(dir.join("discriminator.json"));
        }
    }
    Ok(())
}

fn run_train(exp: &ExperimentConfig, files: &mut Vec<PathBuf>) -> Result<Outcome> {
    let base = exp.train_config()?;
    let (problem, _, eval) = meshes(&base)?;
    let truth = ensure_ground_truth(&problem, &eval, &cache_dir())?;
    let validation = Validation {
        mesh: &eval,
        truth: &truth,
    };
    let mut best: Option<f64> = None;
    let mut summary = String::new();
    for i in 0..exp.trials.max(1) {
        let config = base.clone().with_seed(exp.seed + i as u64);
        let (trainer, record) = train(&config, Some(validation))?;
        let dir = if exp.trials > 1 {
            exp.out.join(format!("trial-{i}"))
        } else {
            exp.out.clone()
        };
        save_run(
            &dir,
            &record,
            &trainer.generator,
            trainer.discriminator.as_ref(),
            &problem,
            &eval,
            &truth,
            exp.save_weights,
            files,
        )?;
        let _ = write!(
            summary,
            "{} {} seed {}: final MSE {}",
            config.problem,
            config.loss,
            config.seed,
            fmt_f64(record.final_mse)
        );
        if let Some(why) = &record.failure {
            let _ = write!(summary, " (stopped: {why})");
        }
        summary.push('\n');
        if record.final_mse.is_finite() && best.is_none_or(|b| record.final_mse < b) {
            best = Some(record.final_mse);
        }
    }
    Ok(Outcome {
        files: std::mem::take(files),
        best_mse: best,
        summary,
    })
}

fn run_search(exp: &ExperimentConfig, files: &mut Vec<PathBuf>) -> Result<Outcome> {
    let (space, filter) = exp.search_space()?;
    let (problem, _, eval) = meshes(&space.base)?;
    let truth = ensure_ground_truth(&problem, &eval, &cache_dir())?;
    let validation = Validation {
        mesh: &eval,
        truth: &truth,
    };
    let result = random_search(
        &space,
        exp.trials.max(1),
        exp.master_seed,
        exp.workers,
        Some(validation),
    )?;
    create_dir(&exp.out)?;
    let csv = exp.out.join("search.csv");
    export_parallel_coordinates(&result, filter, &csv)?;
    files.push(csv);
    let rows: Vec<serde_json::Value> = result
        .trials
        .iter()
        .map(|t| {
            let (status, reason) = match &t.status {
                TrialStatus::Ok => ("ok", None),
                TrialStatus::Failed(why) => ("failed", Some(why.clone())),
            };
            serde_json::json!({
                "trial": t.index,
                "final_mse": t.final_mse.is_finite().then_some(t.final_mse),
                "status": status,
                "reason": reason,
                "config": t.config,
            })
        })
        .collect();
    let json = serde_json::json!({ "master_seed": result.master_seed, "mse_filter": filter, "trials": rows });
    write(
        exp.out.join("search.json"),
        serde_json::to_string_pretty(&json)?.as_bytes(),
        files,
    )?;
    let passed = result.passing(filter).count();
    let best = result
        .trials
        .iter()
        .map(|t| t.final_mse)
        .filter(|m| m.is_finite())
        .min_by(f64::total_cmp);
    Ok(Outcome {
        files: std::mem::take(files),
        best_mse: best,
        summary: format!(
            "{} trials, {passed} at or below {}, best {}\n",
            result.trials.len(),
            fmt_f64(filter),
            best.map(fmt_f64).unwrap_or_else(|| "none".into())
        ),
    })
}

fn run_oracle(exp: &ExperimentConfig, files: &mut Vec<PathBuf>) -> Result<Outcome> {
    let config = exp.train_config()?;
    let (problem, mesh, eval) = meshes(&config)?;
    let dir = cache_dir();
    let truth_on_mesh = ensure_ground_truth(&problem, &mesh, &dir)?;
    ensure_ground_truth(&problem, &eval, &dir)?;
    let (method, data) = traditional_on_mesh(&problem, &mesh)?;
    let err = mse(&data, &truth_on_mesh);
    let header = CacheHeader::new(&problem, method, 0.0, &mesh);
    let cache = header.path_in(&dir);
    write_cache(&cache, &header, &data)?;
    let record = OracleRecord {
        problem: problem.key.to_string(),
        method: method.into(),
        mesh: config.mesh.clone(),
        mse: err,
        truth: match problem.truth_source() {
            TruthSource::Analytic => "analytic".into(),
            TruthSource::Oracle => "rk45".into(),
        },
        cache: cache.clone(),
    };
    create_dir(&exp.out)?;
    write(
        exp.out.join("oracle.json"),
        serde_json::to_string_pretty(&record)?.as_bytes(),
        files,
    )?;
    files.push(cache);
    Ok(Outcome {
        files: std::mem::take(files),
        best_mse: Some(err),
        summary: format!(
            "{} {method}: MSE {} against {}\n",
            problem.key,
            fmt_f64(err),
            record.truth
        ),
    })
}

fn run_evaluate(exp: &ExperimentConfig, files: &mut Vec<PathBuf>) -> Result<Outcome> {
    let weights = exp
        .load_weights
        .clone()
        .ok_or_else(|| CliError::Usage("evaluate mode needs --load-weights <generator.json>".into()))?;
    let weights = if weights.is_dir() {
        weights.join("generator.json")
    } else {
        weights
    };
    let config = exp.train_config()?;
    let (problem, _, eval) = meshes(&config)?;
    let g = Mlp::load_json(&weights)?;
    let truth = ground_truth(&problem, &eval, &cache_dir())?;
    let (pred, _) = predict_with_residual(&g, &problem, eval.points())?;
    if pred.dim() != truth.dim() {
        return Err(CliError::Usage(format!(
            "weights in {} do not fit {}: {} outputs",
            weights.display(),
            problem.key,
            pred.ncols()
        )));
    }
    let err = mse(&pred, &truth);
    create_dir(&exp.out)?;
    let csv = solution_csv(&g, &problem, &eval, Some(&truth))?;
    write(exp.out.join("solution.csv"), csv.as_bytes(), files)?;
    let record = EvaluationRecord {
        problem: problem.key.to_string(),
        weights,
        mse: err,
    };
    write(
        exp.out.join("evaluation.json"),
        serde_json::to_string_pretty(&record)?.as_bytes(),
        files,
    )?;
    Ok(Outcome {
        files: std::mem::take(files),
        best_mse: Some(err),
        summary: format!("{}: MSE {}\n", problem.key, fmt_f64(err)),
    })
}

/// Executes the experiment's mode and writes its artifacts under `out`.
pub fn run(exp: &ExperimentConfig) -> Result<Outcome> {
    if exp.trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    let mut files = Vec::new();
    let outcome = match exp.mode {
        Mode::Train => run_train(exp, &mut files),
        Mode::Search => run_search(exp, &mut files),
        Mode::Oracle => run_oracle(exp, &mut files),
        Mode::Evaluate => run_evaluate(exp, &mut files),
    }?;
    let path = exp.out.join("experiment.toml");
    write_atomic(&path, exp.to_toml()?.as_bytes())?;
    let mut outcome = outcome;
    outcome.files.push(path);
    Ok(outcome)
}
