//! Decision-process data model and the declarative constraint set.
//!
//! A [`State`] describes the plant at a decision instant. The discrete part of
//! an action assigns ready operations to idle workcells; the continuous part
//! carries one knot vector per assignment. [`ConstraintSystem`] evaluates the
//! conjunction of capacity, precedence and linear knot constraints, and
//! enumerates the discrete shadow of the feasible set.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::qp;

/// Number of assembly stages per job.
pub const STAGE_COUNT: usize = 5;

/// Absolute tolerance for linear inequality checks.
pub const LINEAR_TOL: f64 = 1e-8;

/// Cap on logged breakdowns per episode.
pub const MAX_FAILURES: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ProblemScale {
    pub jobs: usize,
    pub robots: usize,
    pub label: String,
}

impl ProblemScale {
    pub fn new(jobs: usize, robots: usize) -> Result<Self> {
        if jobs == 0 || robots == 0 {
            return Err(Error::Config(format!(
                "problem scale needs J >= 1 and K >= 1 (got J={jobs}, K={robots})"
            )));
        }
        Ok(Self {
            jobs,
            robots,
            label: format!("J{jobs}R{robots}"),
        })
    }

    pub fn stage_count(&self) -> usize {
        STAGE_COUNT
    }

    /// Number of (job, robot) logits in a latent vector.
    pub fn pair_count(&self) -> usize {
        self.jobs * self.robots
    }
}

impl FromStr for ProblemScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("scale label `{s}` is not of the form J<jobs>R<robots>"));
        let rest = s.trim().strip_prefix('J').ok_or_else(bad)?;
        let (jobs, robots) = rest.split_once('R').ok_or_else(bad)?;
        let jobs = jobs.parse().map_err(|_| bad())?;
        let robots = robots.parse().map_err(|_| bad())?;
        ProblemScale::new(jobs, robots)
    }
}

impl TryFrom<String> for ProblemScale {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ProblemScale> for String {
    fn from(s: ProblemScale) -> String {
        s.label
    }
}

impl fmt::Display for ProblemScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RobotStatus {
    Idle,
    Busy { until: f64 },
    Broken { until: f64 },
}

impl RobotStatus {
    pub fn is_idle(&self) -> bool {
        matches!(self, RobotStatus::Idle)
    }

    /// Time at which the robot becomes available, if it is not idle.
    pub fn until(&self) -> Option<f64> {
        match *self {
            RobotStatus::Idle => None,
            RobotStatus::Busy { until } | RobotStatus::Broken { until } => Some(until),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InFlight {
    pub robot: usize,
    pub finish: f64,
}

/// Joint cyber-physical status of the assembly cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub clock: f64,
    pub robots: Vec<RobotStatus>,
    /// Next stage index per job; `STAGE_COUNT` means complete.
    pub job_stage: Vec<usize>,
    pub in_flight: Vec<Option<InFlight>>,
    pub makespan_acc: f64,
    pub energy_acc: f64,
    pub failure_count: u32,
}

impl State {
    pub fn fresh(scale: &ProblemScale) -> Self {
        Self {
            clock: 0.0,
            robots: vec![RobotStatus::Idle; scale.robots],
            job_stage: vec![0; scale.jobs],
            in_flight: vec![None; scale.jobs],
            makespan_acc: 0.0,
            energy_acc: 0.0,
            failure_count: 0,
        }
    }

    pub fn jobs(&self) -> usize {
        self.job_stage.len()
    }

    pub fn robot_count(&self) -> usize {
        self.robots.len()
    }

    pub fn all_complete(&self) -> bool {
        self.job_stage.iter().all(|&s| s >= STAGE_COUNT)
    }

    pub fn completed_jobs(&self) -> usize {
        self.job_stage.iter().filter(|&&s| s >= STAGE_COUNT).count()
    }

    /// A job is ready when its next stage exists and nothing of it is running.
    pub fn job_ready(&self, job: usize) -> bool {
        self.job_stage[job] < STAGE_COUNT && self.in_flight[job].is_none()
    }

    pub fn ready_jobs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.jobs()).filter(move |&j| self.job_ready(j))
    }

    pub fn idle_robots(&self) -> impl Iterator<Item = usize> + '_ {
        self.robots
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_idle())
            .map(|(k, _)| k)
    }

    /// Earliest pending completion or repair strictly in the future.
    pub fn next_event_time(&self) -> Option<f64> {
        self.robots
            .iter()
            .filter_map(RobotStatus::until)
            .min_by(f64::total_cmp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Operation {
    pub job: usize,
    pub stage: usize,
}

/// One discrete decision: operation `op` goes to workcell `robot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assignment {
    pub op: Operation,
    pub robot: usize,
}

impl Assignment {
    pub fn new(job: usize, stage: usize, robot: usize) -> Self {
        Self {
            op: Operation { job, stage },
            robot,
        }
    }

    /// Lexicographic (job, robot) key used for tie-breaking.
    pub fn key(&self) -> (usize, usize) {
        (self.op.job, self.robot)
    }
}

/// Discrete assignments with one knot vector per assignment, index-aligned.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HybridAction {
    pub discrete: Vec<Assignment>,
    pub continuous: Vec<Vec<f64>>,
}

impl HybridAction {
    pub fn single(assignment: Assignment, knots: Vec<f64>) -> Self {
        Self {
            discrete: vec![assignment],
            continuous: vec![knots],
        }
    }

    pub fn len(&self) -> usize {
        self.discrete.len()
    }

    pub fn is_empty(&self) -> bool {
        self.discrete.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Assignment, &[f64])> {
        self.discrete
            .iter()
            .zip(self.continuous.iter().map(Vec::as_slice))
    }
}

/// Half-space `normal · x <= offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }
}

/// Linear feasible region for one stage's knots: a box (joint-velocity
/// limits) intersected with coupling half-spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub coupling: Vec<HalfSpace>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, coupling: Vec<HalfSpace>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Shape {
                what: "region bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::Empty("region dimension"));
        }
        for (j, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("knot {j} has non-finite bounds")));
            }
            if lo > hi {
                return Err(Error::Config(format!(
                    "knot {j} has empty bounds [{lo}, {hi}]"
                )));
            }
        }
        for (r, row) in coupling.iter().enumerate() {
            if row.normal.len() != lower.len() {
                return Err(Error::Shape {
                    what: "coupling row",
                    expected: lower.len(),
                    got: row.normal.len(),
                });
            }
            if !row.offset.is_finite() || row.normal.iter().any(|a| !a.is_finite()) {
                return Err(Error::Config(format!("coupling row {r} is not finite")));
            }
        }
        Ok(Self {
            lower,
            upper,
            coupling,
        })
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::new(lower, upper, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// All constraints stacked as `A x <= b`: upper box rows, lower box rows,
    /// then coupling rows.
    pub fn inequalities(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.dim();
        let mut a = Vec::with_capacity(2 * n + self.coupling.len());
        let mut b = Vec::with_capacity(a.capacity());
        for j in 0..n {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            a.push(row);
            b.push(self.upper[j]);
        }
        for j in 0..n {
            let mut row = vec![0.0; n];
            row[j] = -1.0;
            a.push(row);
            b.push(-self.lower[j]);
        }
        for h in &self.coupling {
            a.push(h.normal.clone());
            b.push(h.offset);
        }
        (a, b)
    }

    /// Largest constraint violation at `x` (non-positive when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let boxed = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&xi, (&lo, &hi))| (xi - hi).max(lo - xi));
        let rows = self.coupling.iter().map(|h| h.value(x));
        boxed.chain(rows).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && x.iter().all(|v| v.is_finite()) && self.max_violation(x) <= tol
    }

    /// Slater check: returns a point satisfying every row with slack at
    /// least `margin`, or `None` if the region has no such interior.
    pub fn strictly_feasible_point(&self, margin: f64) -> Option<Vec<f64>> {
        let (a, mut b) = self.inequalities();
        for (row, bi) in a.iter().zip(b.iter_mut()) {
            *bi -= margin * norm(row);
        }
        let sol = qp::project_active_set(&self.center(), &a, &b, qp::DEFAULT_MAX_ITER).ok()?;
        self.contains(&sol.x, -0.5 * margin).then_some(sol.x)
    }
}

/// Capacity, precedence and per-stage knot regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSystem {
    regions: Vec<Region>,
}

impl ConstraintSystem {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        if regions.len() != STAGE_COUNT {
            return Err(Error::Shape {
                what: "stage regions",
                expected: STAGE_COUNT,
                got: regions.len(),
            });
        }
        let p = regions[0].dim();
        if let Some(r) = regions.iter().find(|r| r.dim() != p) {
            return Err(Error::Shape {
                what: "stage knot dimension",
                expected: p,
                got: r.dim(),
            });
        }
        Ok(Self { regions })
    }

    pub fn knot_dim(&self) -> usize {
        self.regions[0].dim()
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn continuous_region(&self, stage: usize) -> Result<&Region> {
        self.regions.get(stage).ok_or(Error::UnknownStage(stage))
    }

    /// φ_cap for a single candidate pair: the workcell is idle.
    pub fn capacity_ok(&self, s: &State, robot: usize) -> bool {
        s.robots.get(robot).is_some_and(RobotStatus::is_idle)
    }

    /// φ_prec for a single candidate operation: it is the job's next stage
    /// and no earlier stage is still running.
    pub fn precedence_ok(&self, s: &State, op: Operation) -> bool {
        op.job < s.jobs() && s.job_stage[op.job] == op.stage && s.job_ready(op.job)
    }

    /// Discrete shadow of the feasible set, sorted by (job, robot).
    pub fn feasible_discrete(&self, s: &State) -> Vec<Assignment> {
        let idle: Vec<usize> = s.idle_robots().collect();
        s.ready_jobs()
            .flat_map(|j| {
                let stage = s.job_stage[j];
                idle.iter().map(move |&k| Assignment::new(j, stage, k))
            })
            .collect()
    }

    pub fn is_decision_point(&self, s: &State) -> bool {
        s.ready_jobs().next().is_some() && s.idle_robots().next().is_some()
    }

    /// Φ(s, a): every assignment passes capacity and precedence, no workcell
    /// or job is used twice, and every knot vector lies in its stage region.
    pub fn evaluate_phi(&self, s: &State, a: &HybridAction) -> bool {
        if a.is_empty() || a.discrete.len() != a.continuous.len() {
            return false;
        }
        let mut robot_used = vec![false; s.robot_count()];
        let mut job_used = vec![false; s.jobs()];
        for (asg, knots) in a.iter() {
            if !self.capacity_ok(s, asg.robot) || !self.precedence_ok(s, asg.op) {
                return false;
            }
            if std::mem::replace(&mut robot_used[asg.robot], true)
                || std::mem::replace(&mut job_used[asg.op.job], true)
            {
                return false;
            }
            match self.regions.get(asg.op.stage) {
                Some(region) if region.contains(knots, LINEAR_TOL) => {}
                _ => return false,
            }
        }
        true
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_region() -> Region {
        Region::new(
            vec![0.5; 3],
            vec![2.0; 3],
            vec![HalfSpace::new(vec![1.0, 1.0, 0.0], 3.5)],
        )
        .unwrap()
    }

    fn system() -> ConstraintSystem {
        ConstraintSystem::new(vec![default_region(); STAGE_COUNT]).unwrap()
    }

    fn scale(j: usize, k: usize) -> ProblemScale {
        ProblemScale::new(j, k).unwrap()
    }

    #[test]
    fn scale_labels_parse() {
        let s: ProblemScale = "J10R3".parse().unwrap();
        assert_eq!((s.jobs, s.robots), (10, 3));
        assert_eq!(s.to_string(), "J10R3");
        assert!("J0R3".parse::<ProblemScale>().is_err());
        assert!("10R3".parse::<ProblemScale>().is_err());
        assert!("J10".parse::<ProblemScale>().is_err());
    }

    #[test]
    fn phi_fresh_state_stage_zero_at_center() {
        let cs = system();
        let s = State::fresh(&scale(2, 2));
        let a = HybridAction::single(Assignment::new(0, 0, 0), vec![1.25; 3]);
        assert!(cs.evaluate_phi(&s, &a));
    }

    #[test]
    fn phi_rejects_precedence_violation() {
        let cs = system();
        let s = State::fresh(&scale(2, 2));
        let a = HybridAction::single(Assignment::new(0, 1, 0), vec![1.25; 3]);
        assert!(!cs.evaluate_phi(&s, &a));
    }

    #[test]
    fn phi_rejects_busy_robot() {
        let cs = system();
        let mut s = State::fresh(&scale(2, 2));
        s.robots[0] = RobotStatus::Busy { until: 3.0 };
        s.in_flight[1] = Some(InFlight {
            robot: 0,
            finish: 3.0,
        });
        let a = HybridAction::single(Assignment::new(0, 0, 0), vec![1.25; 3]);
        assert!(!cs.evaluate_phi(&s, &a));
    }

    #[test]
    fn phi_rejects_duplicate_robot_or_job() {
        let cs = system();
        let s = State::fresh(&scale(2, 2));
        let dup_robot = HybridAction {
            discrete: vec![Assignment::new(0, 0, 0), Assignment::new(1, 0, 0)],
            continuous: vec![vec![1.0; 3]; 2],
        };
        let dup_job = HybridAction {
            discrete: vec![Assignment::new(0, 0, 0), Assignment::new(0, 0, 1)],
            continuous: vec![vec![1.0; 3]; 2],
        };
        assert!(!cs.evaluate_phi(&s, &dup_robot));
        assert!(!cs.evaluate_phi(&s, &dup_job));
    }

    #[test]
    fn phi_checks_knots_with_tolerance() {
        let cs = system();
        let s = State::fresh(&scale(1, 1));
        let on_row = HybridAction::single(Assignment::new(0, 0, 0), vec![1.75, 1.75 + 5e-9, 2.0]);
        let off_row = HybridAction::single(Assignment::new(0, 0, 0), vec![1.75, 1.75 + 1e-6, 2.0]);
        let off_box = HybridAction::single(Assignment::new(0, 0, 0), vec![0.4, 1.0, 1.0]);
        assert!(cs.evaluate_phi(&s, &on_row));
        assert!(!cs.evaluate_phi(&s, &off_row));
        assert!(!cs.evaluate_phi(&s, &off_box));
    }

    #[test]
    fn feasible_discrete_fresh_j2r2() {
        let cs = system();
        let s = State::fresh(&scale(2, 2));
        let f = cs.feasible_discrete(&s);
        assert_eq!(
            f,
            vec![
                Assignment::new(0, 0, 0),
                Assignment::new(0, 0, 1),
                Assignment::new(1, 0, 0),
                Assignment::new(1, 0, 1),
            ]
        );
    }

    #[test]
    fn feasible_discrete_all_busy_is_empty() {
        let cs = system();
        let mut s = State::fresh(&scale(3, 2));
        s.robots = vec![RobotStatus::Busy { until: 1.0 }, RobotStatus::Broken { until: 2.0 }];
        assert!(cs.feasible_discrete(&s).is_empty());
        assert!(!cs.is_decision_point(&s));
    }

    #[test]
    fn feasible_discrete_mixed_j3r2() {
        // job 0 at stage 2, job 1 in flight on robot 0, job 2 complete
        let cs = system();
        let mut s = State::fresh(&scale(3, 2));
        s.job_stage = vec![2, 1, STAGE_COUNT];
        s.in_flight[1] = Some(InFlight {
            robot: 0,
            finish: 4.0,
        });
        s.robots[0] = RobotStatus::Busy { until: 4.0 };
        assert_eq!(cs.feasible_discrete(&s), vec![Assignment::new(0, 2, 1)]);
    }

    #[test]
    fn decision_point_cases() {
        let cs = system();
        let mut s = State::fresh(&scale(2, 2));
        assert!(cs.is_decision_point(&s));
        s.job_stage = vec![STAGE_COUNT; 2];
        assert!(!cs.is_decision_point(&s));
    }

    #[test]
    fn feasible_discrete_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let cs = system();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let j = rng.random_range(1..=5);
            let k = rng.random_range(1..=3);
            let mut s = State::fresh(&scale(j, k));
            for job in 0..j {
                s.job_stage[job] = rng.random_range(0..=STAGE_COUNT);
            }
            for robot in 0..k {
                if rng.random_bool(0.4) {
                    s.robots[robot] = RobotStatus::Busy { until: 1.0 };
                    let candidates: Vec<usize> = (0..j)
                        .filter(|&i| s.job_stage[i] < STAGE_COUNT && s.in_flight[i].is_none())
                        .collect();
                    if let Some(&i) = candidates.first() {
                        s.in_flight[i] = Some(InFlight { robot, finish: 1.0 });
                    }
                }
            }
            let mut brute = Vec::new();
            for job in 0..j {
                for stage in 0..=STAGE_COUNT {
                    for robot in 0..k {
                        let a = HybridAction::single(Assignment::new(job, stage, robot), vec![1.0; 3]);
                        if cs.evaluate_phi(&s, &a) {
                            brute.push(a.discrete[0]);
                        }
                    }
                }
            }
            assert_eq!(cs.feasible_discrete(&s), brute);
        }
    }

    #[test]
    fn region_rejects_inverted_bounds() {
        assert!(Region::boxed(vec![2.0, 0.5], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn degenerate_region_is_single_point() {
        let r = Region::boxed(vec![1.0; 3], vec![1.0; 3]).unwrap();
        assert!(r.contains(&[1.0, 1.0, 1.0], LINEAR_TOL));
        assert!(!r.contains(&[1.0, 1.0, 1.0 + 1e-6], LINEAR_TOL));
        assert!(r.strictly_feasible_point(1e-6).is_none());
    }

    #[test]
    fn default_region_has_interior() {
        let p = default_region().strictly_feasible_point(1e-6).unwrap();
        assert!(default_region().max_violation(&p) < 0.0);
    }

    #[test]
    fn unknown_stage_is_error() {
        assert!(matches!(
            system().continuous_region(7),
            Err(Error::UnknownStage(7))
        ));
    }
}
