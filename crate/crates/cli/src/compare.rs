use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use deqgan::io::{fmt_f64, write_atomic};
use deqgan::problems::ProblemKey;
use deqgan::training::{LossKind, RunRecord};

use crate::run::OracleRecord;
use crate::{CliError, Result};

pub const COLUMNS: [&str; 5] = ["L1", "L2", "Huber", "DEQGAN", "Traditional"];

fn column(loss: LossKind) -> usize {
    match loss {
        LossKind::L1 => 0,
        LossKind::L2 => 1,
        LossKind::Huber => 2,
        LossKind::Gan => 3,
    }
}

/// Minimum final MSE per problem and method.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub rows: BTreeMap<ProblemKey, [Option<f64>; 5]>,
    pub warnings: Vec<String>,
}

impl Table {
    fn offer(&mut self, key: ProblemKey, col: usize, mse: f64) {
        let cell = &mut self.rows.entry(key).or_default()[col];
        if mse.is_finite() && cell.is_none_or(|c| mse < c) {
            *cell = Some(mse);
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("problem,{}\n", COLUMNS.join(","));
        for (key, cells) in &self.rows {
            let cells: Vec<String> = cells.iter().map(|c| c.map(fmt_f64).unwrap_or_default()).collect();
            let _ = writeln!(s, "{key},{}", cells.join(","));
        }
        s
    }
}

fn collect(path: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::io(path, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| CliError::io(path, err)))
            .collect::<Result<_>>()?;
        entries.sort();
        for e in entries {
            collect(&e, found)?;
        }
    } else if matches!(
        path.file_name().and_then(|n| n.to_str()),
        Some("run.json" | "oracle.json")
    ) {
        found.push(path.to_path_buf());
    } else if !path.exists() {
        return Err(CliError::Usage(format!("{} does not exist", path.display())));
    }
    Ok(())
}

/// Builds the comparison table from `run.json` and `oracle.json` files, or
/// directories searched recursively for them, and writes `table.csv` to `out`.
pub fn compare(inputs: &[PathBuf], out: &Path) -> Result<Table> {
    let mut found = Vec::new();
    for p in inputs {
        collect(p, &mut found)?;
    }
    if found.is_empty() {
        return Err(CliError::Usage("no run.json or oracle.json files found".into()));
    }
    let mut table = Table::default();
    for path in &found {
        if path.file_name().is_some_and(|n| n == "oracle.json") {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let rec: OracleRecord = serde_json::from_str(&text)?;
            let key: ProblemKey = rec.problem.parse()?;
            table.offer(key, 4, rec.mse);
        } else {
            let rec = RunRecord::load(path)?;
            table.offer(rec.config.problem, column(rec.config.loss), rec.final_mse);
        }
    }
    for (key, cells) in &table.rows {
        for (name, cell) in COLUMNS.iter().zip(cells) {
            if cell.is_none() {
                table.warnings.push(format!("no result for {key} / {name}"));
            }
        }
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_atomic(&out.join("table.csv"), table.to_csv().as_bytes())?;
    Ok(table)
}
