use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_atomic};

/// Trailing simple moving average; the first `window − 1` entries average
/// whatever prefix is available.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "moving average window must be positive");
    (0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            series[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Linear-interpolated percentile `q ∈ [0, 100]` of `values`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Per-iteration `(median, 25th, 75th)` percentiles across equal-length series.
pub fn percentile_bands(series: &[Vec<f64>]) -> Vec<(f64, f64, f64)> {
    let n = series.iter().map(Vec::len).min().unwrap_or(0);
    (0..n)
        .map(|i| {
            let col: Vec<f64> = series.iter().map(|s| s[i]).collect();
            (percentile(&col, 50.0), percentile(&col, 25.0), percentile(&col, 75.0))
        })
        .collect()
}

/// Per-iteration training series.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Curves {
    pub g_loss: Vec<f64>,
    /// Empty for classical losses.
    pub d_loss: Vec<f64>,
    pub mse: Vec<f64>,
    pub mse_smoothed: Vec<f64>,
}

impl Curves {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,g_loss,d_loss,mse_raw,mse_smoothed\n");
        let opt = |v: &[f64], i: usize| v.get(i).map(|&x| fmt_f64(x)).unwrap_or_default();
        for i in 0..self.g_loss.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                i,
                fmt_f64(self.g_loss[i]),
                opt(&self.d_loss, i),
                opt(&self.mse, i),
                opt(&self.mse_smoothed, i)
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub config: TrainConfig,
    /// Minimum of the smoothed validation MSE; NaN without ground truth.
    #[serde(with = "nan_as_null")]
    pub final_mse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_iteration: Option<usize>,
    #[serde(with = "nan_as_null")]
    pub last_mse: f64,
    pub iterations_completed: usize,
    pub weight_seed: u64,
    pub perturb_seed: u64,
    pub wall_clock_s: f64,
    /// Diagnostic when training aborted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(skip)]
    pub curves: Curves,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(match Option::<Repr>::deserialize(d)? {
            None => f64::NAN,
            Some(Repr::Num(x)) => x,
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                _ => return Err(serde::de::Error::custom(format!("bad number {t:?}"))),
            },
        })
    }
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    /// Recomputes the smoothed series and final metrics from the raw MSE series.
    pub(crate) fn finish_metrics(&mut self) {
        let c = &mut self.curves;
        if c.mse.is_empty() {
            self.final_mse = f64::NAN;
            self.last_mse = f64::NAN;
            self.best_iteration = None;
            return;
        }
        c.mse_smoothed = moving_average(&c.mse, self.config.smoothing_window);
        let best = c
            .mse_smoothed
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .min_by(|a, b| a.1.total_cmp(b.1));
        self.best_iteration = best.map(|(i, _)| i);
        self.final_mse = best.map(|(_, &v)| v).unwrap_or(f64::NAN);
        self.last_mse = *c.mse.last().expect("non-empty");
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("run.json"), serde_json::to_string_pretty(self)?.as_bytes())?;
        write_atomic(&dir.join("curves.csv"), self.curves.to_csv().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
