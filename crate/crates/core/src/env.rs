//! Discrete-event simulator of the robotic reducer-assembly cell.
//!
//! Each job passes through five stages in order; any idle workcell can run
//! any ready stage. A dispatched operation runs for `Σ base_seg_j / κ_j`
//! seconds (plus optional noise) and consumes `a/t + b·t + c` joules at its
//! commanded duration `t`. After every dispatch the clock jumps to the next
//! instant at which some assignment is feasible again.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::{
    Assignment, ConstraintSystem, HalfSpace, HybridAction, InFlight, ProblemScale, Region,
    RobotStatus, State, LINEAR_TOL, MAX_FAILURES, STAGE_COUNT,
};
use crate::error::{Error, Result};
use crate::projection::{qp, sample_normal};

pub const STAGE_NAMES: [&str; STAGE_COUNT] = [
    "place bottom shell",
    "small gear assembling",
    "large gear assembling",
    "top bottom shell",
    "move reducer to buffer",
];

/// Hard cap on decisions per episode.
pub const DEFAULT_MAX_STEPS: usize = 500;

/// `E(t) = a/t + b·t + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl EnergyCoeffs {
    /// Duration with minimum energy, `sqrt(a/b)`.
    pub fn optimal_duration(&self) -> f64 {
        (self.a / self.b).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTemplate {
    pub name: String,
    /// Segment durations at unit velocity scaling.
    pub base_seg: Vec<f64>,
    pub energy: EnergyCoeffs,
    /// `(κ_min, κ_max)` applied to every knot.
    pub knot_bounds: (f64, f64),
    #[serde(default)]
    pub coupling: Vec<HalfSpace>,
}

impl StageTemplate {
    pub fn region(&self) -> Result<Region> {
        let p = self.base_seg.len();
        Region::new(
            vec![self.knot_bounds.0; p],
            vec![self.knot_bounds.1; p],
            self.coupling.clone(),
        )
    }

    /// Duration range implied by the knot bounds.
    pub fn duration_range(&self) -> (f64, f64) {
        let total: f64 = self.base_seg.iter().sum();
        (total / self.knot_bounds.1, total / self.knot_bounds.0)
    }

    /// Mean nominal duration `t_min + 0.5 (t_max − t_min)`, the noise scale.
    pub fn mean_duration(&self) -> f64 {
        let (lo, hi) = self.duration_range();
        lo + 0.5 * (hi - lo)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("stage `{}`: {msg}", self.name)));
        if self.base_seg.is_empty() || self.base_seg.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("base segment durations must be positive".into());
        }
        let EnergyCoeffs { a, b, c } = self.energy;
        if !(a > 0.0 && b > 0.0 && c >= 0.0) || ![a, b, c].iter().all(|x| x.is_finite()) {
            return bad(format!("energy coefficients need a, b > 0 and c >= 0 (got {a}, {b}, {c})"));
        }
        let (lo, hi) = self.knot_bounds;
        if !(lo > 0.0) {
            return bad(format!("knot lower bound must be positive (got {lo})"));
        }
        if lo >= hi {
            return bad(format!("knot bounds [{lo}, {hi}] give a degenerate duration range"));
        }
        let region = self.region()?;
        if region.strictly_feasible_point(1e-6).is_none() {
            return bad("knot region has no strictly interior point".into());
        }
        Ok(())
    }

    /// Shipped defaults: stage `i` is a scaled copy of a base template, so the
    /// per-stage trade-off curves share one shape.
    pub fn defaults() -> Vec<StageTemplate> {
        const SCALE: [f64; STAGE_COUNT] = [1.0, 1.4, 1.6, 1.2, 0.8];
        STAGE_NAMES
            .iter()
            .zip(SCALE)
            .map(|(name, s)| StageTemplate {
                name: (*name).to_string(),
                base_seg: vec![2.0 * s; 3],
                energy: EnergyCoeffs {
                    a: 200.0 * s * s,
                    b: 2.0,
                    c: 10.0 * s,
                },
                knot_bounds: (0.5, 2.0),
                coupling: vec![HalfSpace::new(vec![1.0, 1.0, 0.0], 3.5)],
            })
            .collect()
    }
}

pub fn constraint_system(templates: &[StageTemplate]) -> Result<ConstraintSystem> {
    let regions = templates.iter().map(StageTemplate::region).collect::<Result<Vec<_>>>()?;
    ConstraintSystem::new(regions)
}

pub fn duration_of(knots: &[f64], tmpl: &StageTemplate) -> Result<f64> {
    if knots.len() != tmpl.base_seg.len() {
        return Err(Error::Shape {
            what: "knot vector",
            expected: tmpl.base_seg.len(),
            got: knots.len(),
        });
    }
    if let Some(k) = knots.iter().find(|&&k| !(k > 0.0)) {
        return Err(Error::InvalidArgument(format!("velocity knot must be positive, got {k}")));
    }
    Ok(tmpl.base_seg.iter().zip(knots).map(|(s, k)| s / k).sum())
}

pub fn energy_of(t: f64, tmpl: &StageTemplate) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("duration must be positive, got {t}")));
    }
    let EnergyCoeffs { a, b, c } = tmpl.energy;
    Ok(a / t + b * t + c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceConfig {
    /// Noise std as a multiple of the stage's mean duration.
    pub noise_sigma_factor: f64,
    /// Breakdown probability per dispatched operation.
    pub failure_prob: f64,
    pub repair_factor: (f64, f64),
    pub max_failures: u32,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self::clean()
    }
}

impl DisturbanceConfig {
    pub fn clean() -> Self {
        Self {
            noise_sigma_factor: 0.0,
            failure_prob: 0.0,
            repair_factor: (1.5, 3.0),
            max_failures: MAX_FAILURES,
        }
    }

    pub fn noise(factor: f64) -> Self {
        Self {
            noise_sigma_factor: factor,
            ..Self::clean()
        }
    }

    pub fn failures(prob: f64) -> Self {
        Self {
            failure_prob: prob,
            ..Self::clean()
        }
    }

    pub fn is_clean(&self) -> bool {
        self.noise_sigma_factor == 0.0 && self.failure_prob == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.failure_prob) {
            return Err(Error::Config(format!(
                "failure probability {} outside [0, 1]",
                self.failure_prob
            )));
        }
        if !(self.noise_sigma_factor >= 0.0 && self.noise_sigma_factor.is_finite()) {
            return Err(Error::Config(format!(
                "noise factor {} must be non-negative",
                self.noise_sigma_factor
            )));
        }
        let (lo, hi) = self.repair_factor;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("repair factor range [{lo}, {hi}] is invalid")));
        }
        if self.max_failures > MAX_FAILURES {
            return Err(Error::Config(format!(
                "max_failures {} exceeds the cap of {MAX_FAILURES}",
                self.max_failures
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStat {
    pub mean: f64,
    pub std: f64,
}

impl NormStat {
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub alpha: f64,
    pub makespan_norm: NormStat,
    pub energy_norm: NormStat,
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.makespan_norm.std > 0.0 && self.energy_norm.std > 0.0) {
            return Err(Error::Config("normalization std must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }

    /// Weighted normalized cost `α·Ĉ + (1 − α)·Ê`; the episodic reward is its negative.
    pub fn objective(&self, makespan: f64, energy: f64) -> f64 {
        self.alpha * self.makespan_norm.normalize(makespan)
            + (1.0 - self.alpha) * self.energy_norm.normalize(energy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Operation,
    Repair,
}

/// Gantt-ready interval on one workcell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEvent {
    pub job: usize,
    pub stage: usize,
    pub robot: usize,
    pub start: f64,
    pub end: f64,
    pub energy: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    pub clock_before: f64,
    pub clock_after: f64,
    pub assignments: Vec<Assignment>,
    pub knots: Vec<Vec<f64>>,
    pub commanded: Vec<f64>,
    pub realized: Vec<f64>,
    pub energy: Vec<f64>,
    pub failed: Vec<bool>,
    pub reward: f64,
    pub violation: bool,
}

/// Per-episode log used for metrics, invariant checks and Gantt output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub steps: Vec<StepRow>,
    pub schedule: Vec<ScheduleEvent>,
    pub violations: u32,
    pub failures: u32,
    pub makespan: f64,
    pub energy: f64,
    pub total_reward: f64,
    pub completed: bool,
}

impl EpisodeRecord {
    pub fn operations(&self) -> impl Iterator<Item = &ScheduleEvent> {
        self.schedule.iter().filter(|e| e.kind == EventKind::Operation)
    }

    pub fn repairs(&self) -> impl Iterator<Item = &ScheduleEvent> {
        self.schedule.iter().filter(|e| e.kind == EventKind::Repair)
    }

    /// Stage j+1 of a job never starts before stage j ends.
    pub fn precedence_holds(&self) -> bool {
        let mut ops: Vec<&ScheduleEvent> = self.operations().collect();
        ops.sort_by_key(|e| (e.job, e.stage));
        ops.windows(2).all(|w| {
            w[0].job != w[1].job || (w[1].stage == w[0].stage + 1 && w[1].start >= w[0].end)
        })
    }

    /// No two intervals (operations or repairs) overlap on one workcell.
    pub fn capacity_holds(&self) -> bool {
        let robots = self.schedule.iter().map(|e| e.robot + 1).max().unwrap_or(0);
        (0..robots).all(|k| {
            let mut iv: Vec<(f64, f64)> = self
                .schedule
                .iter()
                .filter(|e| e.robot == k)
                .map(|e| (e.start, e.end))
                .collect();
            iv.sort_by(|a, b| a.0.total_cmp(&b.0));
            iv.windows(2).all(|w| w[1].0 >= w[0].1)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub row: StepRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub scale: ProblemScale,
    pub templates: Vec<StageTemplate>,
    pub disturbance: DisturbanceConfig,
    pub weights: RewardWeights,
    pub max_steps: usize,
}

/// Single-owner simulator instance.
#[derive(Debug, Clone)]
pub struct R2amsEnv {
    cfg: EnvConfig,
    constraints: ConstraintSystem,
    state: State,
    rng: ChaCha8Rng,
    steps: usize,
    prev_objective: f64,
    done: bool,
    record: EpisodeRecord,
}

impl R2amsEnv {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        if cfg.templates.len() != STAGE_COUNT {
            return Err(Error::Config(format!(
                "expected {STAGE_COUNT} stage templates, got {}",
                cfg.templates.len()
            )));
        }
        let p = cfg.templates[0].base_seg.len();
        for t in &cfg.templates {
            t.validate()?;
            if t.base_seg.len() != p {
                return Err(Error::Config("all stages need the same knot count".into()));
            }
        }
        cfg.disturbance.validate()?;
        cfg.weights.validate()?;
        if cfg.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        let constraints = constraint_system(&cfg.templates)?;
        let state = State::fresh(&cfg.scale);
        let mut env = Self {
            cfg,
            constraints,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
            steps: 0,
            prev_objective: 0.0,
            done: false,
            record: EpisodeRecord::default(),
        };
        env.reset(seed);
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn constraints(&self) -> &ConstraintSystem {
        &self.constraints
    }

    pub fn templates(&self) -> &[StageTemplate] {
        &self.cfg.templates
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn record(&self) -> &EpisodeRecord {
        &self.record
    }

    pub fn take_record(&mut self) -> EpisodeRecord {
        std::mem::take(&mut self.record)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn set_weights(&mut self, weights: RewardWeights) -> Result<()> {
        weights.validate()?;
        self.cfg.weights = weights;
        Ok(())
    }

    pub fn set_disturbance(&mut self, d: DisturbanceConfig) -> Result<()> {
        d.validate()?;
        self.cfg.disturbance = d;
        Ok(())
    }

    /// Starts a new episode: idle cell, all jobs at stage 0, clock 0.
    pub fn reset(&mut self, seed: u64) -> &State {
        self.state = State::fresh(&self.cfg.scale);
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.steps = 0;
        self.prev_objective = 0.0;
        self.done = false;
        self.record = EpisodeRecord::default();
        &self.state
    }

    /// Applies `a`. Infeasible actions are counted and abort the episode.
    pub fn step(&mut self, a: &HybridAction) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::InvalidArgument("step called on a finished episode".into()));
        }
        let clock_before = self.state.clock;
        let mut row = StepRow {
            step: self.steps,
            clock_before,
            clock_after: clock_before,
            assignments: a.discrete.clone(),
            knots: a.continuous.clone(),
            commanded: Vec::new(),
            realized: Vec::new(),
            energy: Vec::new(),
            failed: Vec::new(),
            reward: 0.0,
            violation: false,
        };

        if !self.constraints.evaluate_phi(&self.state, a) {
            row.violation = true;
            self.record.violations += 1;
            self.done = true;
            self.steps += 1;
            self.record.steps.push(row.clone());
            self.finish_record();
            return Ok(StepOutcome {
                reward: 0.0,
                done: true,
                row,
            });
        }

        for (asg, knots) in a.iter() {
            self.dispatch(asg, knots, &mut row)?;
        }
        self.steps += 1;
        self.advance();

        let objective = self
            .cfg
            .weights
            .objective(self.state.makespan_acc, self.state.energy_acc);
        let reward = self.prev_objective - objective;
        self.prev_objective = objective;
        self.done = self.state.all_complete() || self.steps >= self.cfg.max_steps;

        row.clock_after = self.state.clock;
        row.reward = reward;
        self.record.total_reward += reward;
        self.record.steps.push(row.clone());
        if self.done {
            self.finish_record();
        }
        Ok(StepOutcome {
            reward,
            done: self.done,
            row,
        })
    }

    fn dispatch(&mut self, asg: &Assignment, knots: &[f64], row: &mut StepRow) -> Result<()> {
        let tmpl = &self.cfg.templates[asg.op.stage];
        let nominal = duration_of(knots, tmpl)?;
        let d = self.cfg.disturbance;
        let now = self.state.clock;
        row.commanded.push(nominal);

        let fails = d.failure_prob > 0.0
            && self.state.failure_count < d.max_failures
            && self.rng.random::<f64>() < d.failure_prob;
        if fails {
            let (lo, hi) = d.repair_factor;
            let factor = if hi > lo { self.rng.random_range(lo..=hi) } else { lo };
            let until = now + factor * nominal;
            self.state.robots[asg.robot] = RobotStatus::Broken { until };
            self.state.failure_count += 1;
            self.record.failures += 1;
            self.record.schedule.push(ScheduleEvent {
                job: asg.op.job,
                stage: asg.op.stage,
                robot: asg.robot,
                start: now,
                end: until,
                energy: 0.0,
                kind: EventKind::Repair,
            });
            row.realized.push(0.0);
            row.energy.push(0.0);
            row.failed.push(true);
            return Ok(());
        }

        let mut realized = nominal;
        if d.noise_sigma_factor > 0.0 {
            let sigma = d.noise_sigma_factor * tmpl.mean_duration();
            let floor = 0.1 * tmpl.duration_range().0;
            realized = (nominal + sigma * sample_normal(&mut self.rng)).max(floor);
        }
        let energy = energy_of(nominal, tmpl)?;
        let finish = now + realized;
        self.state.robots[asg.robot] = RobotStatus::Busy { until: finish };
        self.state.in_flight[asg.op.job] = Some(InFlight {
            robot: asg.robot,
            finish,
        });
        self.state.energy_acc += energy;
        self.record.schedule.push(ScheduleEvent {
            job: asg.op.job,
            stage: asg.op.stage,
            robot: asg.robot,
            start: now,
            end: finish,
            energy,
            kind: EventKind::Operation,
        });
        row.realized.push(realized);
        row.energy.push(energy);
        row.failed.push(false);
        Ok(())
    }

    /// Moves the clock to the next decision point or to completion.
    fn advance(&mut self) {
        while !self.state.all_complete() && !self.constraints.is_decision_point(&self.state) {
            let Some(t) = self.state.next_event_time() else {
                break;
            };
            self.state.clock = t;
            for k in 0..self.state.robot_count() {
                match self.state.robots[k] {
                    RobotStatus::Busy { until } if until <= t => {
                        if let Some(job) = self
                            .state
                            .in_flight
                            .iter()
                            .position(|f| f.is_some_and(|f| f.robot == k))
                        {
                            self.state.in_flight[job] = None;
                            self.state.job_stage[job] += 1;
                        }
                        self.state.robots[k] = RobotStatus::Idle;
                    }
                    RobotStatus::Broken { until } if until <= t => {
                        self.state.robots[k] = RobotStatus::Idle;
                    }
                    _ => {}
                }
            }
        }
        self.state.makespan_acc = self.state.clock;
    }

    fn finish_record(&mut self) {
        self.record.makespan = self.state.makespan_acc;
        self.record.energy = self.state.energy_acc;
        self.record.completed = self.state.all_complete();
    }
}

/// Uniform sample from a stage region by rejection from its box, falling back
/// to projecting the last box sample.
pub fn sample_region<R: Rng + ?Sized>(region: &Region, rng: &mut R) -> Result<Vec<f64>> {
    let draw = |rng: &mut R| -> Vec<f64> {
        region
            .lower
            .iter()
            .zip(&region.upper)
            .map(|(&lo, &hi)| if hi > lo { rng.random_range(lo..hi) } else { lo })
            .collect()
    };
    let mut x = draw(rng);
    for _ in 0..1000 {
        if region.contains(&x, LINEAR_TOL) {
            return Ok(x);
        }
        x = draw(rng);
    }
    Ok(qp::project_continuous(&x, region)?.x)
}

/// Episode under a uniformly random feasible policy.
pub fn random_episode(env: &mut R2amsEnv, seed: u64) -> Result<EpisodeRecord> {
    env.reset(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    while !env.is_done() {
        let feasible = env.constraints().feasible_discrete(env.state());
        let pick = feasible[rng.random_range(0..feasible.len())];
        let region = env.constraints().continuous_region(pick.op.stage)?;
        let knots = sample_region(region, &mut rng)?;
        env.step(&HybridAction::single(pick, knots))?;
    }
    Ok(env.take_record())
}

/// Mean and sample std of makespan and total energy over random-policy
/// rollouts in the clean cell.
pub fn compute_norm_stats(
    scale: &ProblemScale,
    templates: &[StageTemplate],
    n_rollouts: usize,
    seed: u64,
) -> Result<(NormStat, NormStat)> {
    if n_rollouts < 2 {
        return Err(Error::InvalidArgument("need at least two rollouts".into()));
    }
    let unit = NormStat { mean: 0.0, std: 1.0 };
    let cfg = EnvConfig {
        scale: scale.clone(),
        templates: templates.to_vec(),
        disturbance: DisturbanceConfig::clean(),
        weights: RewardWeights {
            alpha: 0.5,
            makespan_norm: unit,
            energy_norm: unit,
        },
        max_steps: DEFAULT_MAX_STEPS,
    };
    let mut env = R2amsEnv::new(cfg, seed)?;
    let mut makespans = Vec::with_capacity(n_rollouts);
    let mut energies = Vec::with_capacity(n_rollouts);
    for i in 0..n_rollouts {
        let rec = random_episode(&mut env, seed.wrapping_add(i as u64))?;
        makespans.push(rec.makespan);
        energies.push(rec.energy);
    }
    Ok((mean_std(&makespans), mean_std(&energies)))
}

fn mean_std(xs: &[f64]) -> NormStat {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    NormStat {
        mean,
        std: var.sqrt(),
    }
}
