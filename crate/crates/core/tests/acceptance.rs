//! Acceptance suite: one PASS/FAIL line per criterion. Training-based
//! criteria share one set of runs. With `LIRL_ACCEPTANCE_STRICT=1` any
//! failure makes the process exit non-zero.
//!
//! `LIRL_ACCEPTANCE_EPISODES` shortens every training run for smoke testing;
//! results are then not at the stated settings and the suite says so.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use lirl::agent::Method;
use lirl::baselines::{dispatch_schedule, plan_for, DispatchMode, PlanKind};
use lirl::env::{
    random_episode, DisturbanceConfig, EnergyCoeffs, EpisodeRecord, EventKind, R2amsEnv, StageTemplate,
};
use lirl::harness::config::{reference, ExperimentConfig};
use lirl::harness::run::{baseline_record, evaluate_agent, execute, Command, TrainedRun, train_seed};
use lirl::harness::stats::{convergence_episode, coverage, post_convergence_mean, reward_std, CONVERGENCE_WINDOW};
use lirl::neural::{Activation, Mlp};
use lirl::projection::qp::kkt_residual;
use lirl::projection::{hungarian, project_continuous, DecisionMode, Projector};
use lirl::{HybridAction, Region};
use ndarray::Array2;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(rand_distr::StandardNormal)
}

fn env(scale: &str, alpha: f64, disturbance: DisturbanceConfig) -> R2amsEnv {
    let mut cfg = reference().unwrap();
    cfg.scale = scale.parse().unwrap();
    cfg.alpha = alpha;
    cfg.disturbance = disturbance;
    R2amsEnv::new(cfg.env_config().unwrap(), 0).unwrap()
}

fn feasibility() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut e = env("J10R3", 0.5, DisturbanceConfig::clean());
    let target = 100_000;
    let (mut checked, mut bad, mut worst) = (0usize, 0usize, 0f64);
    let mut episode = 0u64;
    while checked < target {
        let mode = if episode.is_multiple_of(2) { DecisionMode::Single } else { DecisionMode::Batch };
        let projector = Projector::new(e.constraints().clone(), e.config().scale.clone(), mode);
        let dim = projector.latent_dim();
        e.reset(episode);
        let prefix = rng.random_range(1..60);
        let mut step = 0;
        while !e.is_done() && step < prefix && checked < target {
            for _ in 0..25 {
                let spread = [0.5, 2.0, 10.0][rng.random_range(0..3)];
                let z: Vec<f64> = (0..dim).map(|_| spread * normal(&mut rng)).collect();
                let p = projector.project(e.state(), &z).map_err(|err| err.to_string())?;
                let residual = p
                    .action
                    .iter()
                    .map(|(a, k)| e.constraints().regions()[a.op.stage].max_violation(k))
                    .fold(0.0, f64::max);
                worst = worst.max(residual).max(p.max_kkt_residual());
                if !e.constraints().evaluate_phi(e.state(), &p.action) || residual > 1e-6 {
                    bad += 1;
                }
                checked += 1;
            }
            let feasible = e.constraints().feasible_discrete(e.state());
            let pick = feasible[rng.random_range(0..feasible.len())];
            let knots = lirl::env::sample_region(e.constraints().continuous_region(pick.op.stage).unwrap(), &mut rng)
                .unwrap();
            e.step(&HybridAction::single(pick, knots)).unwrap();
            step += 1;
        }
        episode += 1;
    }
    let t = start.elapsed();
    check(
        bad == 0 && t < Duration::from_secs(60),
        format!("{checked} pairs, {bad} infeasible, worst residual {worst:.1e}, {:.1} s", t.as_secs_f64()),
    )
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn assignment_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let perms: Vec<Vec<Vec<usize>>> = (0..=7).map(permutations).collect();
    let mut mismatches = 0;
    for case in 0..1000 {
        let n = 2 + case % 6;
        // integer-valued costs make every permutation sum exact
        let cost: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.random_range(-50..=50) as f64).collect()).collect();
        let (pairs, total) = hungarian(&cost).map_err(|e| e.to_string())?;
        let best = perms[n]
            .iter()
            .map(|p| p.iter().enumerate().map(|(r, &c)| cost[r][c]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let realized: f64 = pairs.iter().map(|&(r, c)| cost[r][c]).sum();
        if total != best || realized != best || pairs.len() != n {
            mismatches += 1;
        }
    }
    let t = start.elapsed();
    check(
        mismatches == 0 && t < Duration::from_secs(10),
        format!("1000 matrices 2x2..7x7, {mismatches} mismatches, {:.2} s", t.as_secs_f64()),
    )
}

fn random_region(rng: &mut ChaCha8Rng, rows: usize) -> Region {
    let p = rng.random_range(2..=5);
    let lower: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..0.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.random_range(0.5..3.0)).collect();
    let center: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| 0.5 * (l + u)).collect();
    let coupling = (0..rows)
        .map(|_| {
            let a: Vec<f64> = (0..p).map(|_| normal(rng)).collect();
            let b = a.iter().zip(&center).map(|(a, c)| a * c).sum::<f64>() + rng.random_range(0.05..1.0);
            lirl::constraint::HalfSpace::new(a, b)
        })
        .collect();
    Region::new(lower, upper, coupling).unwrap()
}

fn qp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_kkt = 0f64;
    for _ in 0..1000 {
        let rows = rng.random_range(0..=4);
        let region = random_region(&mut rng, rows);
        let v: Vec<f64> = (0..region.dim()).map(|_| 3.0 * normal(&mut rng)).collect();
        let sol = project_continuous(&v, &region).map_err(|e| e.to_string())?;
        let (a, b) = region.inequalities();
        worst_kkt = worst_kkt.max(sol.kkt_residual).max(kkt_residual(&v, &a, &b, &sol.x, &sol.duals));
    }
    let mut worst_closed = 0f64;
    for i in 0..1000 {
        let p = rng.random_range(2..=5);
        let v: Vec<f64> = (0..p).map(|_| 4.0 * normal(&mut rng)).collect();
        let (region, expect) = if i % 2 == 0 {
            let lower: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..0.0)).collect();
            let upper: Vec<f64> = lower.iter().map(|l| l + rng.random_range(0.5..3.0)).collect();
            let x: Vec<f64> = v.iter().zip(lower.iter().zip(&upper)).map(|(x, (l, u))| x.clamp(*l, *u)).collect();
            (Region::boxed(lower, upper).unwrap(), x)
        } else {
            // box far away, so only the half-space can be active
            let a: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
            let b = rng.random_range(-1.0..1.0);
            let av: f64 = a.iter().zip(&v).map(|(a, v)| a * v).sum();
            let aa: f64 = a.iter().map(|a| a * a).sum();
            let step = (av - b).max(0.0) / aa;
            let x: Vec<f64> = v.iter().zip(&a).map(|(v, a)| v - step * a).collect();
            let h = lirl::constraint::HalfSpace::new(a, b);
            (Region::new(vec![-1e6; p], vec![1e6; p], vec![h]).unwrap(), x)
        };
        let sol = project_continuous(&v, &region).map_err(|e| e.to_string())?;
        let err = sol.x.iter().zip(&expect).map(|(a, b): (&f64, &f64)| (a - b).abs()).fold(0.0, f64::max);
        worst_closed = worst_closed.max(err);
    }
    let mut worst_ratio = 0f64;
    for _ in 0..10_000 {
        let rows = rng.random_range(0..=3);
        let region = random_region(&mut rng, rows);
        let u: Vec<f64> = (0..region.dim()).map(|_| 3.0 * normal(&mut rng)).collect();
        let w: Vec<f64> = (0..region.dim()).map(|_| 3.0 * normal(&mut rng)).collect();
        let pu = project_continuous(&u, &region).map_err(|e| e.to_string())?.x;
        let pw = project_continuous(&w, &region).map_err(|e| e.to_string())?.x;
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let din = d(&u, &w);
        if din > 0.0 {
            worst_ratio = worst_ratio.max(d(&pu, &pw) / din);
        }
    }
    check(
        worst_kkt <= 1e-6 && worst_closed <= 1e-8 && worst_ratio <= 1.0 + 1e-9,
        format!("max KKT {worst_kkt:.1e}, closed-form error {worst_closed:.1e}, max ratio {worst_ratio:.12}"),
    )
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let acts = [Activation::Tanh, Activation::Relu, Activation::Identity];
    let rel = |a: f64, b: f64| (a - b).abs() / (a.abs() + b.abs()).max(1e-6);
    let mut worst = 0f64;
    for probe in 0..100 {
        let depth = rng.random_range(1..=3);
        let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=6)).collect();
        let hidden = acts[probe % 3];
        let output = if probe % 2 == 0 { Activation::Identity } else { Activation::Tanh };
        let net = Mlp::new(&sizes, hidden, output, &mut rng).unwrap();
        let batch = rng.random_range(1..=4);
        let x = Array2::from_shape_fn((batch, sizes[0]), |_| rng.random_range(-1.0..1.0));
        let c = Array2::from_shape_fn((batch, *sizes.last().unwrap()), |_| rng.random_range(-1.0..1.0));
        let loss = |n: &Mlp, x: &Array2<f64>| (&n.forward_batch(x).unwrap().0 * &c).sum();
        let (_, cache) = net.forward_batch(&x).unwrap();
        let (g, gx) = net.backward(&cache, &c).map_err(|e| e.to_string())?;
        let h = 1e-6;
        for l in 0..net.layers.len() {
            let (r, k) = net.layers[l].w.dim();
            for i in 0..r {
                for j in 0..k {
                    let (mut p, mut m) = (net.clone(), net.clone());
                    p.layers[l].w[[i, j]] += h;
                    m.layers[l].w[[i, j]] -= h;
                    let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
                    worst = worst.max(rel(fd, g.layers[l].w[[i, j]]));
                }
            }
            for j in 0..k {
                let (mut p, mut m) = (net.clone(), net.clone());
                p.layers[l].b[j] += h;
                m.layers[l].b[j] -= h;
                let fd = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
                worst = worst.max(rel(fd, g.layers[l].b[j]));
            }
        }
        for i in 0..batch {
            for j in 0..sizes[0] {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[[i, j]] += h;
                xm[[i, j]] -= h;
                let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
                worst = worst.max(rel(fd, gx[[i, j]]));
            }
        }
    }
    check(worst <= 1e-4, format!("100 probes, worst relative error {worst:.2e}"))
}

fn conservation() -> Outcome {
    let mut worst = 0f64;
    let mut broken = 0;
    let disturbances = [DisturbanceConfig::clean(), DisturbanceConfig::noise(0.3), DisturbanceConfig::failures(0.05)];
    for i in 0..100u64 {
        let alpha = [0.1, 0.3, 0.5, 0.7, 0.9][i as usize % 5];
        let mut e = env(["J1R1", "J3R2", "J10R3"][i as usize % 3], alpha, disturbances[(i / 3) as usize % 3]);
        let rec = random_episode(&mut e, i).map_err(|e| e.to_string())?;
        let sum: f64 = rec.steps.iter().map(|s| s.reward).sum();
        let expect = -e.config().weights.objective(rec.makespan, rec.energy);
        worst = worst.max((sum - expect).abs());
        if !(rec.precedence_holds() && rec.capacity_holds() && rec.completed) {
            broken += 1;
        }
    }
    check(
        worst <= 1e-9 && broken == 0,
        format!("100 episodes, max |sum r + objective| {worst:.1e}, {broken} invariant breaks"),
    )
}

fn exact_vs_greedy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worse = 0;
    let mut margin = f64::INFINITY;
    for _ in 0..20 {
        let mut cfg = reference().unwrap();
        cfg.scale = "J3R2".parse().unwrap();
        cfg.alpha = rng.random_range(1..=9) as f64 / 10.0;
        cfg.templates = StageTemplate::defaults()
            .into_iter()
            .map(|mut t| {
                let s = rng.random_range(0.5..2.0);
                t.base_seg = (0..3).map(|_| rng.random_range(1.0..3.0) * s).collect();
                t.energy = EnergyCoeffs { a: rng.random_range(50.0..400.0) * s * s, b: rng.random_range(1.0..4.0), c: 10.0 * s };
                t
            })
            .collect();
        cfg.norm_stats.clear();
        for kind in [PlanKind::EnergyOpt, PlanKind::TimeOpt] {
            let plan = plan_for(kind, &cfg.templates).map_err(|e| e.to_string())?;
            let objective = |mode| -> Result<f64, String> {
                let mut e = R2amsEnv::new(cfg.env_config().map_err(|e| e.to_string())?, 0).map_err(|e| e.to_string())?;
                let rec = dispatch_schedule(&mut e, &plan, mode, 0).map_err(|e| e.to_string())?;
                Ok(e.config().weights.objective(rec.makespan, rec.energy))
            };
            let (exact, greedy) = (objective(DispatchMode::Exact)?, objective(DispatchMode::Greedy)?);
            if exact > greedy {
                worse += 1;
            }
            margin = margin.min(greedy - exact);
        }
    }
    check(worse == 0, format!("20 configurations x 2 plans, {worse} exact > greedy, min gap {margin:.3e}"))
}

fn determinism(cfg: &ExperimentConfig) -> Outcome {
    let mut small = cfg.clone();
    small.scale = "J3R2".parse().unwrap();
    small.seeds = vec![0, 1];
    small.agent.episodes = 40;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        execute(Command::Train, &small, d.path()).map_err(|e| e.to_string())?;
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("train/metrics.csv")).unwrap();
    let (a, b) = (read(&dirs[0]), read(&dirs[1]));
    check(a == b && !a.is_empty(), format!("J3R2, 2 seeds x 40 episodes, {} bytes, identical: {}", a.len(), a == b))
}

struct Runs {
    lirl: BTreeMap<u32, Vec<TrainedRun>>,
    mask: Vec<TrainedRun>,
    noisy: TrainedRun,
    cfg: ExperimentConfig,
    elapsed_main: Duration,
}

fn with_alpha(cfg: &ExperimentConfig, alpha10: u32) -> ExperimentConfig {
    ExperimentConfig { alpha: alpha10 as f64 / 10.0, ..cfg.clone() }
}

fn train_everything(cfg: &ExperimentConfig) -> Result<Runs, String> {
    let start = Instant::now();
    let jobs: Vec<(u32, u64)> = [1, 5, 9].iter().flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s))).collect();
    let runs: Vec<(u32, TrainedRun)> = jobs
        .par_iter()
        .map(|&(a, s)| train_seed(&with_alpha(cfg, a), Method::Lirl, s, None).map(|r| (a, r)))
        .collect::<lirl::Result<_>>()
        .map_err(|e| e.to_string())?;
    let elapsed_main = start.elapsed();
    let mut lirl = BTreeMap::new();
    for (a, r) in runs {
        lirl.entry(a).or_insert_with(Vec::new).push(r);
    }
    let mask = cfg
        .seeds
        .par_iter()
        .map(|&s| train_seed(cfg, Method::Mask, s, None))
        .collect::<lirl::Result<_>>()
        .map_err(|e| e.to_string())?;
    let noisy_cfg = ExperimentConfig { disturbance: DisturbanceConfig::noise(0.1), ..cfg.clone() };
    let noisy = train_seed(&noisy_cfg, Method::Lirl, cfg.seeds[0], None).map_err(|e| e.to_string())?;
    Ok(Runs { lirl, mask, noisy, cfg: cfg.clone(), elapsed_main })
}

fn rewards(r: &TrainedRun) -> Vec<f64> {
    r.rows.iter().map(|row| row.reward).collect()
}

fn converged(r: &TrainedRun) -> f64 {
    post_convergence_mean(&rewards(r), CONVERGENCE_WINDOW).unwrap()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn zero_violations(runs: &Runs) -> Outcome {
    let total: u64 = runs.lirl.values().flatten().map(|r| r.rows.iter().map(|x| x.violations as u64).sum::<u64>()).sum();
    let episodes: usize = runs.lirl.values().flatten().map(|r| r.rows.len()).sum();
    let near_misses: u64 = runs.mask.iter().map(|r| r.rows.iter().map(|x| x.violations as u64).sum::<u64>()).sum();
    check(
        total == 0,
        format!("{episodes} projection-agent episodes, {total} violations (mask runs: {near_misses} violations)"),
    )
}

fn baseline_reward(cfg: &ExperimentConfig, alpha10: u32, kind: PlanKind) -> f64 {
    baseline_record(&with_alpha(cfg, alpha10), kind, cfg.seeds[0]).unwrap().total_reward
}

fn dominance(runs: &Runs) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (&a, rs) in &runs.lirl {
        let per_seed: Vec<f64> = rs.iter().map(converged).collect();
        let m = mean(&per_seed);
        let se = reward_std(&per_seed).unwrap() / (per_seed.len() as f64).sqrt();
        let (eo, to) = (baseline_reward(&runs.cfg, a, PlanKind::EnergyOpt), baseline_reward(&runs.cfg, a, PlanKind::TimeOpt));
        ok &= m >= eo && m >= to;
        if a == 5 {
            ok &= m - eo.max(to) > se;
        }
        parts.push(format!("a=0.{a}: lirl {m:.3} (se {se:.3}) vs energy-opt {eo:.3}, time-opt {to:.3}"));
    }
    let minutes = runs.elapsed_main.as_secs_f64() / 60.0;
    ok &= minutes < 30.0;
    parts.push(format!("{minutes:.1} min on {} thread(s)", rayon::current_num_threads()));
    check(ok, parts.join("; "))
}

fn weight_robustness(runs: &Runs) -> Outcome {
    let range = |xs: &[f64]| xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let lirl: Vec<f64> = runs.lirl.values().map(|rs| mean(&rs.iter().map(converged).collect::<Vec<_>>())).collect();
    let alphas: Vec<u32> = runs.lirl.keys().copied().collect();
    let eo: Vec<f64> = alphas.iter().map(|&a| baseline_reward(&runs.cfg, a, PlanKind::EnergyOpt)).collect();
    let to: Vec<f64> = alphas.iter().map(|&a| baseline_reward(&runs.cfg, a, PlanKind::TimeOpt)).collect();
    let (rl, re, rt) = (range(&lirl), range(&eo), range(&to));
    check(rl < re && rl < rt, format!("reward range lirl {rl:.3}, energy-opt {re:.3}, time-opt {rt:.3}"))
}

fn ablation(runs: &Runs) -> Outcome {
    let lirl = &runs.lirl[&5];
    let conv = |rs: &[TrainedRun]| mean(&rs.iter().map(|r| convergence_episode(&rewards(r), CONVERGENCE_WINDOW).unwrap() as f64).collect::<Vec<_>>());
    let std = |rs: &[TrainedRun]| reward_std(&rs.iter().map(converged).collect::<Vec<_>>()).unwrap();
    let (cl, cm) = (conv(lirl), conv(&runs.mask));
    let (sl, sm) = (std(lirl), std(&runs.mask));
    check(
        cl <= 0.5 * cm && sl <= sm,
        format!("convergence episode lirl {cl:.1} vs mask {cm:.1}; post-convergence std lirl {sl:.3} vs mask {sm:.3}"),
    )
}

/// Repair length over the nominal duration of the operation that failed.
fn repair_factors(rec: &EpisodeRecord) -> Vec<f64> {
    rec.schedule
        .iter()
        .filter(|e| e.kind == EventKind::Repair)
        .map(|rep| {
            let step = rec
                .steps
                .iter()
                .find(|s| s.clock_before == rep.start && s.assignments.iter().any(|a| a.robot == rep.robot))
                .expect("repair without a dispatch step");
            let i = step.assignments.iter().position(|a| a.robot == rep.robot).unwrap();
            assert!(step.failed[i]);
            (rep.end - rep.start) / step.commanded[i]
        })
        .collect()
}

fn robustness(runs: &Runs) -> Outcome {
    let clean = &runs.lirl[&5][0];
    let n = runs.cfg.robustness.episodes;
    let noise = DisturbanceConfig::noise(0.1);
    let err = |e: lirl::Error| e.to_string();
    let train = evaluate_agent(&runs.cfg, &runs.noisy.trainer.agent, Method::Lirl, noise, n).map_err(err)?;
    let generalization = evaluate_agent(&runs.cfg, &clean.trainer.agent, Method::Lirl, noise, n).map_err(err)?;
    let w = |rs: &[EpisodeRecord]| rs.iter().map(|r| -r.total_reward).collect::<Vec<_>>();
    let c = coverage(&w(&train), &w(&generalization)).map_err(err)?;

    let failures = DisturbanceConfig::failures(0.03);
    let broken = evaluate_agent(&runs.cfg, &clean.trainer.agent, Method::Lirl, failures, n).map_err(err)?;
    let max_failures = broken.iter().map(|r| r.failures).max().unwrap_or(0);
    let factors: Vec<f64> = broken.iter().flat_map(repair_factors).collect();
    let (lo, hi) = failures.repair_factor;
    let in_bounds = factors.iter().all(|f| (lo - 1e-12..=hi + 1e-12).contains(f));
    let counted = broken.iter().all(|r| r.failures as usize == r.schedule.iter().filter(|e| e.kind == EventKind::Repair).count());
    check(
        c.coverage >= 0.8 && c.mean_gap <= 0.15 && max_failures <= failures.max_failures && in_bounds && counted,
        format!(
            "noise 0.1: coverage {:.3}, gap {:.3}; failures 3%: {} repairs, max {max_failures} per episode, factors in [{lo}, {hi}]: {in_bounds}",
            c.coverage,
            c.mean_gap,
            factors.len()
        ),
    )
}

fn main() {
    let mut cfg = reference().unwrap();
    let override_episodes = std::env::var("LIRL_ACCEPTANCE_EPISODES").ok().and_then(|v| v.parse::<usize>().ok());
    if let Some(e) = override_episodes {
        println!("note: LIRL_ACCEPTANCE_EPISODES={e}, training criteria run below the stated budget");
        cfg.agent.episodes = e;
    }
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("PASS {id:>2}. {name}: {d}"),
            Err(d) => println!("FAIL {id:>2}. {name}: {d}"),
        }
        results.push((id, name, outcome));
    };
    report(1, "feasibility", feasibility());
    report(2, "assignment oracle", assignment_oracle());
    report(3, "QP oracle", qp_oracle());
    report(4, "gradient checks", gradient_checks());
    report(5, "environment conservation", conservation());
    report(12, "exact vs greedy baseline", exact_vs_greedy());
    report(11, "determinism", determinism(&cfg));
    match train_everything(&cfg) {
        Ok(runs) => {
            report(6, "zero training violations", zero_violations(&runs));
            report(7, "cross-opt dominance", dominance(&runs));
            report(8, "weight robustness", weight_robustness(&runs));
            report(9, "ablation speedup", ablation(&runs));
            report(10, "robustness coverage", robustness(&runs));
        }
        Err(e) => {
            for (id, name) in [(6, "zero training violations"), (7, "cross-opt dominance"), (8, "weight robustness"), (9, "ablation speedup"), (10, "robustness coverage")] {
                report(id, name, Err(format!("training failed: {e}")));
            }
        }
    }
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 && std::env::var("LIRL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
