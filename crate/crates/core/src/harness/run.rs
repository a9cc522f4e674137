//! Command pipelines. Every command writes into its own subdirectory of the
//! output directory: `metrics.csv`, `summary.json` and, where schedules are
//! produced, `gantt_{run}.svg` with a matching `.txt` table.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{evaluate, Ddpg, Method, Trainer};
use crate::baselines::{dispatch_schedule, plan_for, PlanKind};
use crate::env::{DisturbanceConfig, EpisodeRecord, R2amsEnv};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::gantt::{emit_gantt, schedule_table};
use crate::harness::stats::{
    convergence_episode, coverage, post_convergence_mean, read_metrics, reward_std, write_metrics, Coverage,
    MetricsRow, CONVERGENCE_WINDOW,
};

/// Seed offset separating evaluation episodes from training episodes.
pub const EVAL_SEED_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Evaluate,
    Baseline,
    Ablation,
    Robustness,
    Report,
    Gantt,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Baseline => "baseline",
            Command::Ablation => "ablation",
            Command::Robustness => "robustness",
            Command::Report => "report",
            Command::Gantt => "gantt",
        }
    }

    pub const ALL: [Command; 7] = [
        Command::Train,
        Command::Evaluate,
        Command::Baseline,
        Command::Ablation,
        Command::Robustness,
        Command::Report,
        Command::Gantt,
    ];
}

pub fn run_id(method: &str, cfg: &ExperimentConfig, seed: u64) -> String {
    format!("{method}_{}_a{:02}_s{seed}", cfg.scale.label, (cfg.alpha * 10.0).round() as u32)
}

pub struct TrainedRun {
    pub run_id: String,
    pub rows: Vec<MetricsRow>,
    pub trainer: Trainer,
}

/// Trains one seed to the configured budget, checkpointing into `ckpt_dir`.
pub fn train_seed(cfg: &ExperimentConfig, method: Method, seed: u64, ckpt_dir: Option<&Path>) -> Result<TrainedRun> {
    let env = R2amsEnv::new(cfg.env_config()?, seed)?;
    let mut trainer = Trainer::new(env, cfg.agent.clone(), method, seed)?;
    let id = run_id(method.name(), cfg, seed);
    let mut rows = Vec::with_capacity(cfg.agent.episodes);
    let mut clock = Instant::now();
    let ckpt = ckpt_dir.map(|d| (d, id.as_str()));
    trainer.train(ckpt, |s| {
        let mut row = MetricsRow::from_record(&id, method.name(), seed, s.episode, &s.record);
        row.qp_iterations_mean = s.qp_iterations_mean;
        if cfg.record_wallclock {
            row.wallclock_ms = clock.elapsed().as_millis() as u64;
            clock = Instant::now();
        }
        rows.push(row);
        Ok(())
    })?;
    Ok(TrainedRun { run_id: id, rows, trainer })
}

/// Fixed-velocity baseline schedule on the configured environment.
pub fn baseline_record(cfg: &ExperimentConfig, kind: PlanKind, seed: u64) -> Result<EpisodeRecord> {
    let mut env = R2amsEnv::new(cfg.env_config()?, seed)?;
    let plan = plan_for(kind, &cfg.templates)?;
    dispatch_schedule(&mut env, &plan, cfg.baseline_mode, seed)
}

/// Noise-free evaluation episodes of a trained actor under `disturbance`.
pub fn evaluate_agent(
    cfg: &ExperimentConfig,
    agent: &Ddpg,
    method: Method,
    disturbance: DisturbanceConfig,
    episodes: usize,
) -> Result<Vec<EpisodeRecord>> {
    let mut env_cfg = cfg.env_config()?;
    env_cfg.disturbance = disturbance;
    let mut env = R2amsEnv::new(env_cfg, EVAL_SEED_BASE)?;
    Ok(evaluate(agent, method, &mut env, episodes, EVAL_SEED_BASE)?.records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub method: String,
    pub seed: u64,
    pub episodes: usize,
    pub reward_mean: f64,
    pub makespan_mean: f64,
    pub energy_mean: f64,
    pub violations: u64,
    pub convergence_episode: Option<usize>,
    pub post_convergence_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    /// Mean over runs of the post-convergence reward, or of the plain mean
    /// reward for runs too short to smooth.
    pub reward: f64,
    /// Sample std of the same per-run values; absent with fewer than two runs.
    pub reward_std: Option<f64>,
    pub convergence_episode_mean: Option<f64>,
    pub violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: Vec<RunSummary>,
    pub methods: Vec<MethodSummary>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Summary statistics derived from metrics rows alone, grouped by run id
/// and method in order of first appearance.
pub fn summarize(rows: &[MetricsRow]) -> Result<Summary> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.run_id.as_str()) {
            order.push(&r.run_id);
        }
    }
    let mut runs = Vec::with_capacity(order.len());
    for id in order {
        let rs: Vec<&MetricsRow> = rows.iter().filter(|r| r.run_id == id).collect();
        let rewards: Vec<f64> = rs.iter().map(|r| r.reward).collect();
        let long = rewards.len() >= CONVERGENCE_WINDOW;
        runs.push(RunSummary {
            run_id: id.to_string(),
            method: rs[0].method.clone(),
            seed: rs[0].seed,
            episodes: rs.len(),
            reward_mean: mean(&rewards),
            makespan_mean: mean(&rs.iter().map(|r| r.makespan).collect::<Vec<_>>()),
            energy_mean: mean(&rs.iter().map(|r| r.energy).collect::<Vec<_>>()),
            violations: rs.iter().map(|r| r.violations as u64).sum(),
            convergence_episode: if long { Some(convergence_episode(&rewards, CONVERGENCE_WINDOW)?) } else { None },
            post_convergence_mean: if long { Some(post_convergence_mean(&rewards, CONVERGENCE_WINDOW)?) } else { None },
        });
    }
    let mut methods: Vec<MethodSummary> = Vec::new();
    let mut names: Vec<&str> = Vec::new();
    for r in &runs {
        if !names.contains(&r.method.as_str()) {
            names.push(&r.method);
        }
    }
    for name in names {
        let group: Vec<&RunSummary> = runs.iter().filter(|r| r.method == name).collect();
        let values: Vec<f64> = group.iter().map(|r| r.post_convergence_mean.unwrap_or(r.reward_mean)).collect();
        let conv: Vec<f64> = group.iter().filter_map(|r| r.convergence_episode.map(|e| e as f64)).collect();
        methods.push(MethodSummary {
            method: name.to_string(),
            runs: group.len(),
            reward: mean(&values),
            reward_std: if values.len() >= 2 { Some(reward_std(&values)?) } else { None },
            convergence_episode_mean: if conv.is_empty() { None } else { Some(mean(&conv)) },
            violations: group.iter().map(|r| r.violations).sum(),
        });
    }
    Ok(Summary { runs, methods })
}

/// Writes `metrics.csv` and the `summary.json` derived from it.
pub fn write_outputs(dir: &Path, rows: &[MetricsRow]) -> Result<Summary> {
    fs::create_dir_all(dir)?;
    write_metrics(&dir.join("metrics.csv"), rows)?;
    let summary = summarize(rows)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

fn write_gantt(dir: &Path, run: &str, rec: &EpisodeRecord, robots: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("gantt_{run}.svg")), emit_gantt(rec, robots, run)?)?;
    fs::write(dir.join(format!("gantt_{run}.txt")), schedule_table(rec))?;
    Ok(())
}

fn train_all(cfg: &ExperimentConfig, method: Method, dir: &Path) -> Result<Vec<TrainedRun>> {
    let ckpt = dir.join("checkpoints");
    fs::create_dir_all(&ckpt)?;
    cfg.seeds.par_iter().map(|&s| train_seed(cfg, method, s, Some(&ckpt))).collect()
}

/// Highest-episode checkpoint of a run.
pub fn latest_checkpoint(dir: &Path, run_id: &str) -> Result<PathBuf> {
    let prefix = format!("{run_id}_ep");
    let mut best: Option<(usize, PathBuf)> = None;
    let entries = fs::read_dir(dir).map_err(|e| Error::Checkpoint(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(ep) = name.strip_prefix(&prefix).and_then(|r| r.strip_suffix(".ckpt")) else { continue };
        if let Ok(ep) = ep.parse::<usize>() {
            if best.as_ref().is_none_or(|(b, _)| ep > *b) {
                best = Some((ep, path));
            }
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::Checkpoint(format!("no checkpoint for {run_id} in {}", dir.display())))
}

/// Rebuilds a trained agent from its latest checkpoint.
pub fn load_agent(cfg: &ExperimentConfig, method: Method, seed: u64, ckpt_dir: &Path) -> Result<Trainer> {
    let path = latest_checkpoint(ckpt_dir, &run_id(method.name(), cfg, seed))?;
    let env = R2amsEnv::new(cfg.env_config()?, seed)?;
    let mut trainer = Trainer::new(env, cfg.agent.clone(), method, seed)?;
    let (actor, _) = Ddpg::load_checkpoint(&path)?;
    trainer.agent.set_actor(actor)?;
    Ok(trainer)
}

fn eval_rows(id: &str, method: &str, seed: u64, records: &[EpisodeRecord]) -> Vec<MetricsRow> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| MetricsRow::from_record(id, method, seed, i, r))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessEntry {
    pub kind: String,
    pub level: f64,
    pub makespan: Coverage,
    pub energy: Coverage,
    /// Normalized weighted objective, i.e. the negated episode reward.
    pub weighted: Coverage,
    pub failures_max: u32,
}

/// Coverage of the clean-trained agent's results ("generalization") by the
/// results of an agent trained at the perturbation level ("training").
pub fn robustness_entry(
    kind: &str,
    level: f64,
    train: &[EpisodeRecord],
    generalization: &[EpisodeRecord],
) -> Result<RobustnessEntry> {
    let col = |rs: &[EpisodeRecord], f: fn(&EpisodeRecord) -> f64| rs.iter().map(f).collect::<Vec<_>>();
    Ok(RobustnessEntry {
        kind: kind.to_string(),
        level,
        makespan: coverage(&col(train, |r| r.makespan), &col(generalization, |r| r.makespan))?,
        energy: coverage(&col(train, |r| r.energy), &col(generalization, |r| r.energy))?,
        weighted: coverage(&col(train, |r| -r.total_reward), &col(generalization, |r| -r.total_reward))?,
        failures_max: train.iter().chain(generalization).map(|r| r.failures).max().unwrap_or(0),
    })
}

fn robustness(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let clean = ExperimentConfig { disturbance: DisturbanceConfig::clean(), ..cfg.clone() };
    let base: Vec<TrainedRun> = clean.seeds.par_iter().map(|&s| train_seed(&clean, Method::Lirl, s, None)).collect::<Result<_>>()?;
    let levels: Vec<(&str, DisturbanceConfig, f64)> = cfg
        .robustness
        .noise_levels
        .iter()
        .map(|&l| ("noise", DisturbanceConfig::noise(l), l))
        .chain(cfg.robustness.failure_levels.iter().map(|&l| ("failure", DisturbanceConfig::failures(l), l)))
        .collect();
    let n = cfg.robustness.episodes;
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for (kind, d, level) in levels {
        let perturbed = ExperimentConfig { disturbance: d, ..cfg.clone() };
        let trained: Vec<TrainedRun> =
            perturbed.seeds.par_iter().map(|&s| train_seed(&perturbed, Method::Lirl, s, None)).collect::<Result<_>>()?;
        let mut train_recs = Vec::new();
        let mut gen_recs = Vec::new();
        for (t, g) in trained.iter().zip(&base) {
            let tr = evaluate_agent(cfg, &t.trainer.agent, Method::Lirl, d, n)?;
            let ge = evaluate_agent(cfg, &g.trainer.agent, Method::Lirl, d, n)?;
            rows.extend(eval_rows(&format!("{}_{kind}{level}_train", t.run_id), "lirl", t.trainer.seed, &tr));
            rows.extend(eval_rows(&format!("{}_{kind}{level}_gen", g.run_id), "lirl", g.trainer.seed, &ge));
            train_recs.extend(tr);
            gen_recs.extend(ge);
        }
        entries.push(robustness_entry(kind, level, &train_recs, &gen_recs)?);
    }
    write_outputs(dir, &rows)?;
    fs::write(dir.join("robustness.json"), serde_json::to_string_pretty(&entries)?)?;
    Ok(())
}

/// Runs `command`, writing into `out/{command}` (`report` rewrites the
/// summaries of every subdirectory that holds a metrics file).
pub fn execute(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = out.join(command.name());
    let robots = cfg.scale.robots;
    match command {
        Command::Train => {
            let runs = train_all(cfg, Method::Lirl, &dir)?;
            let rows: Vec<MetricsRow> = runs.iter().flat_map(|r| r.rows.iter().cloned()).collect();
            write_outputs(&dir, &rows)?;
        }
        Command::Ablation => {
            let mut rows = Vec::new();
            for method in [Method::Lirl, Method::Mask] {
                rows.extend(train_all(cfg, method, &dir)?.into_iter().flat_map(|r| r.rows));
            }
            write_outputs(&dir, &rows)?;
        }
        Command::Evaluate => {
            let ckpt = out.join(Command::Train.name()).join("checkpoints");
            let mut rows = Vec::new();
            for &seed in &cfg.seeds {
                let t = load_agent(cfg, Method::Lirl, seed, &ckpt)?;
                let recs = evaluate_agent(cfg, &t.agent, Method::Lirl, cfg.disturbance, cfg.eval_episodes)?;
                rows.extend(eval_rows(&run_id("lirl", cfg, seed), "lirl", seed, &recs));
            }
            write_outputs(&dir, &rows)?;
        }
        Command::Baseline => {
            let mut rows = Vec::new();
            for kind in [PlanKind::EnergyOpt, PlanKind::TimeOpt] {
                for &seed in &cfg.seeds {
                    let rec = baseline_record(cfg, kind, seed)?;
                    let id = run_id(kind.name(), cfg, seed);
                    rows.push(MetricsRow::from_record(&id, kind.name(), seed, 0, &rec));
                }
            }
            write_outputs(&dir, &rows)?;
        }
        Command::Robustness => robustness(cfg, &dir)?,
        Command::Report => {
            let mut any = false;
            for c in Command::ALL {
                let sub = out.join(c.name());
                let csv = sub.join("metrics.csv");
                if csv.is_file() {
                    let summary = write_outputs(&sub, &read_metrics(&csv)?)?;
                    print_summary(c.name(), &summary);
                    any = true;
                }
            }
            if !any {
                return Err(Error::InvalidArgument(format!("no metrics found under {}", out.display())));
            }
        }
        Command::Gantt => {
            let seed = cfg.seeds[0];
            for kind in [PlanKind::EnergyOpt, PlanKind::TimeOpt] {
                let rec = baseline_record(cfg, kind, seed)?;
                write_gantt(&dir, &run_id(kind.name(), cfg, seed), &rec, robots)?;
            }
            let ckpt = out.join(Command::Train.name()).join("checkpoints");
            if ckpt.is_dir() {
                for &s in &cfg.seeds {
                    let t = load_agent(cfg, Method::Lirl, s, &ckpt)?;
                    let rec = evaluate_agent(cfg, &t.agent, Method::Lirl, cfg.disturbance, 1)?.remove(0);
                    write_gantt(&dir, &run_id("lirl", cfg, s), &rec, robots)?;
                }
            }
        }
    }
    Ok(())
}

fn print_summary(name: &str, s: &Summary) {
    println!("[{name}]");
    println!("{:<12} {:>4} {:>10} {:>10} {:>12} {:>10}", "method", "runs", "reward", "std", "convergence", "violations");
    for m in &s.methods {
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<12} {:>4} {:>10.3} {:>10} {:>12} {:>10}",
            m.method,
            m.runs,
            m.reward,
            opt(m.reward_std),
            opt(m.convergence_episode_mean),
            m.violations
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::reference;

    fn tiny() -> ExperimentConfig {
        let mut c = reference().unwrap();
        c.scale = "J2R2".parse().unwrap();
        c.seeds = vec![0, 1];
        c.agent.hidden = vec![8, 8];
        c.agent.episodes = 4;
        c.agent.warmup = 10;
        c.agent.updates_per_step = 1;
        c.agent.batch_size = 8;
        c.agent.checkpoint_every = 2;
        c.eval_episodes = 3;
        c
    }

    #[test]
    fn run_ids_encode_alpha_and_seed() {
        let c = tiny();
        assert_eq!(run_id("lirl", &c, 3), "lirl_J2R2_a05_s3");
    }

    #[test]
    fn summary_groups_by_run_in_order() {
        let row = |id: &str, m: &str, r: f64| MetricsRow {
            run_id: id.into(),
            method: m.into(),
            seed: 0,
            episode: 0,
            reward: r,
            makespan: 1.0,
            energy: 2.0,
            violations: 0,
            qp_iterations_mean: 0.0,
            wallclock_ms: 0,
        };
        let rows = vec![row("b", "x", 1.0), row("a", "y", 2.0), row("b", "x", 3.0), row("c", "x", 4.0)];
        let s = summarize(&rows).unwrap();
        assert_eq!(s.runs.iter().map(|r| r.run_id.as_str()).collect::<Vec<_>>(), ["b", "a", "c"]);
        assert_eq!(s.runs[0].reward_mean, 2.0);
        assert_eq!(s.methods[0].method, "x");
        assert_eq!(s.methods[0].reward, 3.0);
        assert_eq!(s.methods[0].reward_std, Some(2f64.sqrt()));
        assert_eq!(s.methods[1].reward_std, None);
    }

    #[test]
    fn train_evaluate_report_gantt_round_trip() {
        let c = tiny();
        let out = tempfile::tempdir().unwrap();
        execute(Command::Train, &c, out.path()).unwrap();
        let ckpt = out.path().join("train/checkpoints");
        assert!(ckpt.join("lirl_J2R2_a05_s0_ep2.ckpt").is_file());
        assert!(latest_checkpoint(&ckpt, "lirl_J2R2_a05_s1").unwrap().ends_with("lirl_J2R2_a05_s1_ep4.ckpt"));
        let rows = read_metrics(&out.path().join("train/metrics.csv")).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.violations == 0 && r.wallclock_ms == 0));

        execute(Command::Evaluate, &c, out.path()).unwrap();
        assert_eq!(read_metrics(&out.path().join("evaluate/metrics.csv")).unwrap().len(), 6);
        execute(Command::Baseline, &c, out.path()).unwrap();

        let before = fs::read_to_string(out.path().join("train/summary.json")).unwrap();
        execute(Command::Report, &c, out.path()).unwrap();
        assert_eq!(fs::read_to_string(out.path().join("train/summary.json")).unwrap(), before);

        execute(Command::Gantt, &c, out.path()).unwrap();
        let svg = fs::read_to_string(out.path().join("gantt/gantt_time-opt_J2R2_a05_s0.svg")).unwrap();
        assert_eq!(svg.matches(r#"class="op""#).count(), 10);
        assert!(out.path().join("gantt/gantt_lirl_J2R2_a05_s1.svg").is_file());
    }

    #[test]
    fn report_without_metrics_fails() {
        let out = tempfile::tempdir().unwrap();
        assert!(execute(Command::Report, &tiny(), out.path()).is_err());
    }
}
