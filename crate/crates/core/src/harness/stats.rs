//! Metrics rows and the summary statistics computed from them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EpisodeRecord, EventKind};
use crate::error::{Error, Result};

/// Default smoothing window for convergence detection.
pub const CONVERGENCE_WINDOW: usize = 20;

/// One CSV row; field order is the file's column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub method: String,
    pub seed: u64,
    pub episode: usize,
    pub reward: f64,
    pub makespan: f64,
    pub energy: f64,
    pub violations: u32,
    pub qp_iterations_mean: f64,
    pub wallclock_ms: u64,
}

impl MetricsRow {
    pub fn from_record(run_id: &str, method: &str, seed: u64, episode: usize, rec: &EpisodeRecord) -> Self {
        Self {
            run_id: run_id.to_string(),
            method: method.to_string(),
            seed,
            episode,
            reward: rec.total_reward,
            makespan: rec.makespan,
            energy: rec.energy,
            violations: rec.violations,
            qp_iterations_mean: 0.0,
            wallclock_ms: 0,
        }
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    xs.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}

/// First episode from which the smoothed reward stays within 5 % of the
/// smoothed series' span around its final value. Returns the series length
/// when the tail never settles, i.e. the settled stretch is shorter than one
/// window. Smoothed point `i` covers episodes `i..i + window`; the reported
/// episode is the window's last one.
pub fn convergence_episode(series: &[f64], window: usize) -> Result<usize> {
    if window == 0 || series.len() < window {
        return Err(Error::InvalidArgument(format!(
            "series of length {} is shorter than the window {window}",
            series.len()
        )));
    }
    let smooth = moving_average(series, window);
    let last = *smooth.last().unwrap();
    let (lo, hi) = smooth
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let band = 0.05 * (hi - lo);
    if band == 0.0 {
        return Ok(0);
    }
    let mut first = smooth.len();
    for i in (0..smooth.len()).rev() {
        if (smooth[i] - last).abs() > band {
            break;
        }
        first = i;
    }
    if first == 0 {
        return Ok(0);
    }
    if smooth.len() - first < window {
        return Ok(series.len());
    }
    Ok(first + window - 1)
}

/// Mean of the rewards from the convergence episode on.
pub fn post_convergence_mean(series: &[f64], window: usize) -> Result<f64> {
    let e = convergence_episode(series, window)?.min(series.len() - window);
    let tail = &series[e..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Sample standard deviation across seeds.
pub fn reward_std(per_seed: &[f64]) -> Result<f64> {
    if per_seed.len() < 2 {
        return Err(Error::InvalidArgument("need at least two seeds".into()));
    }
    let n = per_seed.len() as f64;
    let mean = per_seed.iter().sum::<f64>() / n;
    Ok((per_seed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub train_min: f64,
    pub train_max: f64,
    pub gen_min: f64,
    pub gen_max: f64,
    pub coverage: f64,
    pub mean_gap: f64,
}

/// Fraction of generalization samples inside the training range, and the
/// absolute difference of the means.
pub fn coverage(train: &[f64], generalization: &[f64]) -> Result<Coverage> {
    if train.is_empty() || generalization.is_empty() {
        return Err(Error::Empty("coverage samples"));
    }
    let range = |xs: &[f64]| xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (train_min, train_max) = range(train);
    let (gen_min, gen_max) = range(generalization);
    let inside = generalization
        .iter()
        .filter(|&&g| train_min <= g && g <= train_max)
        .count();
    Ok(Coverage {
        train_min,
        train_max,
        gen_min,
        gen_max,
        coverage: inside as f64 / generalization.len() as f64,
        mean_gap: (mean(generalization) - mean(train)).abs(),
    })
}

/// Busy time over makespan for each workcell; repairs do not count as busy.
pub fn utilization(rec: &EpisodeRecord, robots: usize) -> Result<Vec<f64>> {
    if !(rec.makespan > 0.0) {
        return Err(Error::InvalidArgument("utilization needs a positive makespan".into()));
    }
    let mut busy = vec![0.0; robots];
    for e in rec.schedule.iter().filter(|e| e.kind == EventKind::Operation) {
        busy[e.robot] += e.end.min(rec.makespan) - e.start;
    }
    Ok(busy.into_iter().map(|b| (b / rec.makespan).clamp(0.0, 1.0)).collect())
}
