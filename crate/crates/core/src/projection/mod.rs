//! Two-stage projection of a latent vector onto the state's feasible set.
//!
//! The latent `z` is split into a (job, robot) logit block and a knot block.
//! The discrete step picks the best-scoring feasible assignment (or a maximum
//! weight matching in batch mode); the continuous step projects the knots onto
//! the chosen stage's polytope.

pub mod hungarian;
pub mod qp;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constraint::{Assignment, ConstraintSystem, HybridAction, ProblemScale, State};
use crate::error::{Error, Result};

pub use hungarian::hungarian;
pub use qp::{project_continuous, QpSolution};

/// How many assignments a single decision produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionMode {
    /// One (operation, workcell) pair per decision.
    #[default]
    Single,
    /// A matching of all idle workcells to ready operations.
    Batch,
}

/// Latent vector split into its two blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Row-major (job, robot) logits.
    pub logits: Vec<Vec<f64>>,
    pub knots: Vec<f64>,
}

/// Length of the latent vector for a scale and knot dimension.
pub fn latent_dim(scale: &ProblemScale, knot_dim: usize) -> usize {
    scale.pair_count() + knot_dim
}

pub fn decode(z: &[f64], scale: &ProblemScale, knot_dim: usize) -> Result<Decoded> {
    let expected = latent_dim(scale, knot_dim);
    if z.len() != expected {
        return Err(Error::Shape {
            what: "latent vector",
            expected,
            got: z.len(),
        });
    }
    let (u, v) = z.split_at(scale.pair_count());
    Ok(Decoded {
        logits: u.chunks(scale.robots).map(<[f64]>::to_vec).collect(),
        knots: v.to_vec(),
    })
}

/// Discrete projection: best feasible pair, or best matching in batch mode.
/// Ties resolve to the lexicographically smallest (job, robot) choice.
pub fn project_discrete(
    logits: &[Vec<f64>],
    feasible: &[Assignment],
    mode: DecisionMode,
) -> Result<Vec<Assignment>> {
    if feasible.is_empty() {
        return Err(Error::Empty("feasible assignment set"));
    }
    let score = |a: &Assignment| -> Result<f64> {
        let s = logits
            .get(a.op.job)
            .and_then(|row| row.get(a.robot))
            .copied()
            .ok_or(Error::Shape {
                what: "logit matrix",
                expected: a.op.job * a.robot,
                got: logits.len(),
            })?;
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::NonFinite("logits".into()))
        }
    };

    match mode {
        DecisionMode::Single => {
            let mut sorted = feasible.to_vec();
            sorted.sort_by_key(Assignment::key);
            let mut best = sorted[0];
            let mut best_score = score(&best)?;
            for a in &sorted[1..] {
                let s = score(a)?;
                if s > best_score {
                    best = *a;
                    best_score = s;
                }
            }
            Ok(vec![best])
        }
        DecisionMode::Batch => batch_matching(feasible, &score),
    }
}

fn batch_matching(
    feasible: &[Assignment],
    score: &dyn Fn(&Assignment) -> Result<f64>,
) -> Result<Vec<Assignment>> {
    let mut jobs: Vec<usize> = feasible.iter().map(|a| a.op.job).collect();
    let mut robots: Vec<usize> = feasible.iter().map(|a| a.robot).collect();
    jobs.sort_unstable();
    jobs.dedup();
    robots.sort_unstable();
    robots.dedup();

    // cost = -score on feasible cells, sentinel elsewhere
    let mut cost = vec![vec![hungarian::SENTINEL; robots.len()]; jobs.len()];
    let mut cell: Vec<Vec<Option<Assignment>>> = vec![vec![None; robots.len()]; jobs.len()];
    for a in feasible {
        let r = jobs.binary_search(&a.op.job).unwrap();
        let c = robots.binary_search(&a.robot).unwrap();
        cost[r][c] = -score(a)?;
        cell[r][c] = Some(*a);
    }
    let (_, optimum) = hungarian(&cost)?;
    let tol = 1e-9 * (1.0 + optimum.abs());

    // Fix cells in (job, robot) order whenever an optimal completion still
    // exists; this yields the lexicographically smallest optimal matching.
    let target = jobs.len().min(robots.len());
    let mut fixed: Vec<(usize, usize)> = Vec::new();
    let mut fixed_cost = 0.0;
    for r in 0..jobs.len() {
        for c in 0..robots.len() {
            if fixed.len() == target {
                break;
            }
            if fixed.iter().any(|&(fr, fc)| fr == r || fc == c) {
                continue;
            }
            let mut trial = fixed.clone();
            trial.push((r, c));
            let rest_rows: Vec<usize> = (0..jobs.len()).filter(|i| trial.iter().all(|t| t.0 != *i)).collect();
            let rest_cols: Vec<usize> = (0..robots.len()).filter(|j| trial.iter().all(|t| t.1 != *j)).collect();
            let rest = if trial.len() == target || rest_rows.is_empty() || rest_cols.is_empty() {
                0.0
            } else {
                let sub: Vec<Vec<f64>> = rest_rows
                    .iter()
                    .map(|&i| rest_cols.iter().map(|&j| cost[i][j]).collect())
                    .collect();
                hungarian(&sub)?.1
            };
            if fixed_cost + cost[r][c] + rest <= optimum + tol {
                fixed_cost += cost[r][c];
                fixed.push((r, c));
            }
        }
    }
    Ok(fixed.into_iter().filter_map(|(r, c)| cell[r][c]).collect())
}

/// Projection output with solver statistics for logging.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub action: HybridAction,
    pub qp: Vec<QpSolution>,
}

impl Projected {
    pub fn qp_iterations(&self) -> usize {
        self.qp.iter().map(|s| s.iterations).sum()
    }

    pub fn max_kkt_residual(&self) -> f64 {
        self.qp.iter().map(|s| s.kkt_residual).fold(0.0, f64::max)
    }
}

/// State-conditioned projection operator Π_s.
#[derive(Debug, Clone)]
pub struct Projector {
    pub constraints: ConstraintSystem,
    pub scale: ProblemScale,
    pub mode: DecisionMode,
}

impl Projector {
    pub fn new(constraints: ConstraintSystem, scale: ProblemScale, mode: DecisionMode) -> Self {
        Self {
            constraints,
            scale,
            mode,
        }
    }

    pub fn latent_dim(&self) -> usize {
        latent_dim(&self.scale, self.constraints.knot_dim())
    }

    pub fn decode(&self, z: &[f64]) -> Result<Decoded> {
        decode(z, &self.scale, self.constraints.knot_dim())
    }

    /// Maps `z` to a feasible hybrid action. Requires a decision point.
    pub fn project(&self, s: &State, z: &[f64]) -> Result<Projected> {
        let decoded = self.decode(z)?;
        let feasible = self.constraints.feasible_discrete(s);
        let discrete = project_discrete(&decoded.logits, &feasible, self.mode)?;
        let mut continuous = Vec::with_capacity(discrete.len());
        let mut stats = Vec::with_capacity(discrete.len());
        for a in &discrete {
            let region = self.constraints.continuous_region(a.op.stage)?;
            let sol = project_continuous(&decoded.knots, region)?;
            continuous.push(sol.x.clone());
            stats.push(sol);
        }
        Ok(Projected {
            action: HybridAction {
                discrete,
                continuous,
            },
            qp: stats,
        })
    }

    /// Empirical Lipschitz ratio of the continuous output over random latent
    /// pairs that share a discrete outcome.
    pub fn estimate_lipschitz(&self, s: &State, n_pairs: usize, seed: u64) -> Result<f64> {
        if n_pairs == 0 {
            return Err(Error::InvalidArgument("n_pairs must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.latent_dim();
        let mut worst: f64 = 0.0;
        for _ in 0..n_pairs {
            let z1: Vec<f64> = (0..dim).map(|_| 2.0 * sample_normal(&mut rng)).collect();
            let radius = 10f64.powf(-3.0 + 3.0 * rand::Rng::random::<f64>(&mut rng));
            let dir: Vec<f64> = (0..dim).map(|_| sample_normal(&mut rng)).collect();
            let dn = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-300);
            let z2: Vec<f64> = z1.iter().zip(&dir).map(|(a, d)| a + radius * d / dn).collect();
            let a1 = self.project(s, &z1)?.action;
            let a2 = self.project(s, &z2)?.action;
            if a1.discrete != a2.discrete {
                continue;
            }
            let num: f64 = a1
                .continuous
                .iter()
                .flatten()
                .zip(a2.continuous.iter().flatten())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            let den: f64 = z1.iter().zip(&z2).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            if den > 0.0 {
                worst = worst.max(num / den);
            }
        }
        Ok(worst)
    }
}

pub(crate) fn sample_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
