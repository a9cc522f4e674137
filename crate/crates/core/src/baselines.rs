//! Hierarchical schedulers: fix every stage's velocity knots first, then
//! solve the assignment problem with those durations frozen.

use serde::{Deserialize, Serialize};

use crate::constraint::{Assignment, HybridAction, LINEAR_TOL, STAGE_COUNT};
use crate::env::{duration_of, energy_of, EpisodeRecord, R2amsEnv, StageTemplate};
use crate::error::{Error, Result};
use crate::projection::{hungarian, project_continuous};

/// Size limits for exact dispatch.
pub const EXACT_MAX_JOBS: usize = 6;
pub const EXACT_MAX_ROBOTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    EnergyOpt,
    TimeOpt,
}

impl PlanKind {
    pub fn name(self) -> &'static str {
        match self {
            PlanKind::EnergyOpt => "energy-opt",
            PlanKind::TimeOpt => "time-opt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispatchMode {
    #[default]
    Greedy,
    Exact,
}

/// Knots fixed for one stage, with the duration and energy they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedVelocityPlan {
    pub knots: Vec<f64>,
    pub duration: f64,
    pub energy: f64,
}

impl FixedVelocityPlan {
    fn from_knots(v: &[f64], tmpl: &StageTemplate) -> Result<Self> {
        let region = tmpl.region()?;
        let knots = project_continuous(v, &region)?.x;
        debug_assert!(region.contains(&knots, LINEAR_TOL));
        let duration = duration_of(&knots, tmpl)?;
        Ok(Self {
            energy: energy_of(duration, tmpl)?,
            knots,
            duration,
        })
    }
}

/// Uniform knots aiming at the energy-minimizing duration, clamped to the
/// achievable range and projected onto the stage region.
pub fn energy_opt_plan(tmpl: &StageTemplate) -> Result<FixedVelocityPlan> {
    let (t_min, t_max) = tmpl.duration_range();
    let target = tmpl.energy.optimal_duration().clamp(t_min, t_max);
    let total: f64 = tmpl.base_seg.iter().sum();
    FixedVelocityPlan::from_knots(&vec![total / target; tmpl.base_seg.len()], tmpl)
}

/// Every knot at its maximum, projected onto the stage region.
pub fn time_opt_plan(tmpl: &StageTemplate) -> Result<FixedVelocityPlan> {
    FixedVelocityPlan::from_knots(&vec![tmpl.knot_bounds.1; tmpl.base_seg.len()], tmpl)
}

pub fn plan_for(kind: PlanKind, templates: &[StageTemplate]) -> Result<Vec<FixedVelocityPlan>> {
    templates
        .iter()
        .map(|t| match kind {
            PlanKind::EnergyOpt => energy_opt_plan(t),
            PlanKind::TimeOpt => time_opt_plan(t),
        })
        .collect()
}

/// Runs the plan through `env` (reset with `seed`) and returns the record.
pub fn dispatch_schedule(
    env: &mut R2amsEnv,
    plan: &[FixedVelocityPlan],
    mode: DispatchMode,
    seed: u64,
) -> Result<EpisodeRecord> {
    if plan.len() != STAGE_COUNT {
        return Err(Error::Shape {
            what: "velocity plan",
            expected: STAGE_COUNT,
            got: plan.len(),
        });
    }
    env.reset(seed);
    match mode {
        DispatchMode::Greedy => {
            while !env.is_done() {
                let action = greedy_action(env, plan)?;
                env.step(&action)?;
            }
            Ok(env.take_record())
        }
        DispatchMode::Exact => {
            let scale = &env.config().scale;
            if scale.jobs > EXACT_MAX_JOBS || scale.robots > EXACT_MAX_ROBOTS {
                return Err(Error::ExactTooLarge {
                    jobs: scale.jobs,
                    robots: scale.robots,
                    max_jobs: EXACT_MAX_JOBS,
                    max_robots: EXACT_MAX_ROBOTS,
                });
            }
            if !env.config().disturbance.is_clean() {
                return Err(Error::InvalidArgument("exact dispatch needs a disturbance-free cell".into()));
            }
            let mut best = dispatch_schedule(env, plan, DispatchMode::Greedy, seed)?;
            env.reset(seed);
            let mut search = Search {
                plan,
                best_objective: objective(env, &best),
                best: None,
                nodes: 0,
            };
            search.dfs(env.clone())?;
            if let Some(b) = search.best {
                best = b;
            }
            Ok(best)
        }
    }
}

fn objective(env: &R2amsEnv, rec: &EpisodeRecord) -> f64 {
    env.config().weights.objective(rec.makespan, rec.energy)
}

/// Matching of idle workcells to ready operations that minimizes the summed
/// completion times `clock + t̂_stage` of the dispatched operations.
fn greedy_action(env: &R2amsEnv, plan: &[FixedVelocityPlan]) -> Result<HybridAction> {
    let s = env.state();
    let jobs: Vec<usize> = s.ready_jobs().collect();
    let robots: Vec<usize> = s.idle_robots().collect();
    if jobs.is_empty() || robots.is_empty() {
        return Err(Error::Empty("decision point"));
    }
    let cost: Vec<Vec<f64>> = jobs
        .iter()
        .map(|&j| vec![s.clock + plan[s.job_stage[j]].duration; robots.len()])
        .collect();
    let (pairs, _) = hungarian(&cost)?;
    let mut action = HybridAction::default();
    for (r, c) in pairs {
        let j = jobs[r];
        let stage = s.job_stage[j];
        action.discrete.push(Assignment::new(j, stage, robots[c]));
        action.continuous.push(plan[stage].knots.clone());
    }
    Ok(action)
}

/// Depth-first branch and bound over single dispatches. Workcells are
/// identical, so only the lowest-indexed idle one is branched on.
struct Search<'a> {
    plan: &'a [FixedVelocityPlan],
    best_objective: f64,
    best: Option<EpisodeRecord>,
    nodes: u64,
}

impl Search<'_> {
    fn dfs(&mut self, env: R2amsEnv) -> Result<()> {
        self.nodes += 1;
        if env.is_done() {
            let rec = env.record().clone();
            let obj = objective(&env, &rec);
            if rec.completed && obj < self.best_objective - 1e-12 {
                self.best_objective = obj;
                self.best = Some(rec);
            }
            return Ok(());
        }
        if self.lower_bound(&env) >= self.best_objective - 1e-12 {
            return Ok(());
        }
        let s = env.state();
        let robot = s.idle_robots().next().ok_or(Error::Empty("decision point"))?;
        let mut jobs: Vec<usize> = s.ready_jobs().collect();
        // longest remaining work first finds good incumbents early
        jobs.sort_by(|&a, &b| self.remaining(s.job_stage[b]).total_cmp(&self.remaining(s.job_stage[a])));
        let mut seen_stages = Vec::new();
        for j in jobs {
            let stage = s.job_stage[j];
            // jobs at the same stage are interchangeable
            if seen_stages.contains(&stage) {
                continue;
            }
            seen_stages.push(stage);
            let mut child = env.clone();
            child.step(&HybridAction::single(
                Assignment::new(j, stage, robot),
                self.plan[stage].knots.clone(),
            ))?;
            self.dfs(child)?;
        }
        Ok(())
    }

    fn remaining(&self, stage: usize) -> f64 {
        self.plan[stage.min(STAGE_COUNT)..].iter().map(|p| p.duration).sum()
    }

    /// Objective with makespan bounded by the longest remaining chain and by
    /// the remaining work spread evenly over the cell; energy is fixed.
    fn lower_bound(&self, env: &R2amsEnv) -> f64 {
        let s = env.state();
        let mut chain: f64 = s.clock;
        let mut work = 0.0;
        let mut energy = s.energy_acc;
        for j in 0..s.jobs() {
            let stage = s.job_stage[j];
            let (start, from) = match s.in_flight[j] {
                Some(f) => (f.finish, stage + 1),
                None => (s.clock, stage),
            };
            let rest = self.remaining(from);
            chain = chain.max(start + rest);
            work += rest;
            energy += self.plan[from.min(STAGE_COUNT)..].iter().map(|p| p.energy).sum::<f64>();
        }
        let busy: f64 = s.robots.iter().filter_map(|r| r.until()).map(|u| u - s.clock).sum();
        let spread = s.clock + (work + busy) / s.robot_count() as f64;
        env.config().weights.objective(chain.max(spread), energy)
    }
}
