//! Latent-action DDPG: the actor emits `z`, the projection turns it into the
//! executed feasible action, and the critic scores `(s, z)`. The masking
//! variant replaces the projection with a masked argmax plus clamping.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::{dot, HybridAction, Region, RobotStatus, State, LINEAR_TOL, STAGE_COUNT};
use crate::env::{EpisodeRecord, R2amsEnv};
use crate::error::{Error, Result};
use crate::neural::{Activation, Adam, AdamConfig, Mlp, CLIP_NORM};
use crate::projection::{project_continuous, project_discrete, sample_normal, DecisionMode, Projector};

/// Above this many jobs the per-job stage is a scalar instead of a one-hot.
pub const ONE_HOT_MAX_JOBS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Projection onto the feasible set.
    Lirl,
    /// Invalid-action masking with clamped continuous output.
    Mask,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lirl => "lirl",
            Method::Mask => "mask",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Updates start once the buffer holds more than this many transitions.
    pub warmup: usize,
    pub updates_per_step: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub sigma_decay_episodes: usize,
    pub episodes: usize,
    /// Optional cap on total environment steps across training.
    pub max_env_steps: Option<usize>,
    pub checkpoint_every: usize,
    pub mode: DecisionMode,
    /// Actor logits live in `[−logit_range, logit_range]`.
    pub logit_range: f64,
    /// Actor knots span the knot box widened by this fraction on each side.
    pub knot_margin: f64,
    /// Weight of the squared distance between actor knots and their projection.
    pub knot_penalty: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            gamma: 0.99,
            tau: 0.005,
            batch_size: 64,
            buffer_capacity: 100_000,
            warmup: 500,
            updates_per_step: 5,
            actor_lr: 1e-4,
            critic_lr: 3e-4,
            sigma_start: 0.3,
            sigma_end: 0.02,
            sigma_decay_episodes: 200,
            episodes: 300,
            max_env_steps: None,
            checkpoint_every: 10,
            mode: DecisionMode::Single,
            logit_range: 1.0,
            knot_margin: 0.25,
            knot_penalty: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("agent: {m}")));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.tau) {
            return bad("gamma and tau must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("buffer must hold at least one batch");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.sigma_start < 0.0 || self.sigma_end < 0.0 {
            return bad("exploration noise must be non-negative");
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive");
        }
        if !(self.logit_range > 0.0) || self.knot_margin < 0.0 || !(self.knot_penalty >= 0.0) {
            return bad("actor output ranges must be positive");
        }
        Ok(())
    }

    /// Linear decay from `sigma_start` to `sigma_end` over the decay window.
    pub fn sigma(&self, episode: usize) -> f64 {
        if self.sigma_decay_episodes == 0 || episode >= self.sigma_decay_episodes {
            return self.sigma_end;
        }
        let f = episode as f64 / self.sigma_decay_episodes as f64;
        self.sigma_start + f * (self.sigma_end - self.sigma_start)
    }
}

/// Fixed-length state encoding with every entry in `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoder {
    jobs: usize,
    robots: usize,
    one_hot: bool,
    t_max: f64,
    horizon: f64,
}

impl FeatureEncoder {
    /// `t_max` is the longest possible operation, `horizon` the clock scale.
    pub fn new(jobs: usize, robots: usize, t_max: f64, horizon: f64) -> Self {
        Self {
            jobs,
            robots,
            one_hot: jobs <= ONE_HOT_MAX_JOBS,
            t_max,
            horizon,
        }
    }

    pub fn for_env(env: &R2amsEnv) -> Self {
        let scale = &env.config().scale;
        let t_max = env
            .templates()
            .iter()
            .map(|t| t.duration_range().1)
            .fold(0.0, f64::max);
        let per_job: f64 = env.templates().iter().map(|t| t.mean_duration()).sum();
        let horizon = per_job * scale.jobs as f64 / scale.robots as f64;
        Self::new(scale.jobs, scale.robots, t_max, horizon)
    }

    pub fn dim(&self) -> usize {
        let per_job = if self.one_hot { STAGE_COUNT + 1 } else { 1 };
        2 * self.robots + self.jobs * (per_job + 1) + 2
    }

    pub fn encode(&self, s: &State) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.dim());
        for r in &s.robots {
            let left = r.until().map_or(0.0, |u| (u - s.clock) / self.t_max);
            f.push(left.clamp(0.0, 1.0));
        }
        for r in &s.robots {
            f.push(if matches!(r, RobotStatus::Broken { .. }) { 1.0 } else { 0.0 });
        }
        for (j, &stage) in s.job_stage.iter().enumerate() {
            if self.one_hot {
                f.extend((0..=STAGE_COUNT).map(|k| if k == stage { 1.0 } else { 0.0 }));
            } else {
                f.push(stage as f64 / STAGE_COUNT as f64);
            }
            f.push(if s.in_flight[j].is_some() { 1.0 } else { 0.0 });
        }
        f.push(s.completed_jobs() as f64 / s.jobs() as f64);
        f.push((s.clock / self.horizon).clamp(0.0, 1.0));
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    /// Pre-projection latent.
    pub z: Vec<f64>,
    pub r: f64,
    pub s2: Vec<f64>,
    pub done: bool,
}

/// Ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition> {
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

/// Affine map from the actor's tanh output to latent coordinates.
#[derive(Debug, Clone, PartialEq)]
struct LatentScale {
    center: Vec<f64>,
    half: Vec<f64>,
}

impl LatentScale {
    fn new(pairs: usize, knots: &Region, cfg: &AgentConfig) -> Self {
        let mut center = vec![0.0; pairs];
        let mut half = vec![cfg.logit_range; pairs];
        for (&lo, &hi) in knots.lower.iter().zip(&knots.upper) {
            center.push(0.5 * (lo + hi));
            half.push((0.5 + cfg.knot_margin) * (hi - lo).max(1e-3));
        }
        Self { center, half }
    }

    fn apply(&self, y: &mut Array2<f64>) {
        for mut row in y.rows_mut() {
            for ((v, c), h) in row.iter_mut().zip(&self.center).zip(&self.half) {
                *v = c + h * *v;
            }
        }
    }
}

/// Actor, critic and their target copies.
#[derive(Debug, Clone)]
pub struct Ddpg {
    pub cfg: AgentConfig,
    pub actor: Mlp,
    pub critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    latent: LatentScale,
    knot_region: Region,
    pub gradient_steps: u64,
}

/// Losses of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_q: f64,
}

impl Ddpg {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        pairs: usize,
        knot_region: &Region,
        cfg: AgentConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let latent = LatentScale::new(pairs, knot_region, &cfg);
        let l = latent.center.len();
        let mut a_sizes = vec![state_dim];
        a_sizes.extend(&cfg.hidden);
        a_sizes.push(l);
        let mut c_sizes = vec![state_dim + l];
        c_sizes.extend(&cfg.hidden);
        c_sizes.push(1);
        let actor = Mlp::new(&a_sizes, Activation::Tanh, Activation::Tanh, rng)?;
        let critic = Mlp::new(&c_sizes, Activation::Tanh, Activation::Identity, rng)?;
        let actor_opt = Adam::new(&actor, AdamConfig { lr: cfg.actor_lr, ..AdamConfig::default() });
        let critic_opt = Adam::new(&critic, AdamConfig { lr: cfg.critic_lr, ..AdamConfig::default() });
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
            latent,
            knot_region: knot_region.clone(),
            cfg,
            gradient_steps: 0,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent.center.len()
    }

    pub fn targets(&self) -> (&Mlp, &Mlp) {
        (&self.actor_target, &self.critic_target)
    }

    fn latent_batch(&self, net: &Mlp, s: &Array2<f64>) -> Result<Array2<f64>> {
        let (mut y, _) = net.forward_batch(s)?;
        self.latent.apply(&mut y);
        Ok(y)
    }

    /// Deterministic latent plus Gaussian exploration noise.
    pub fn act<R: Rng + ?Sized>(&self, features: &[f64], sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
        let s = Array2::from_shape_vec((1, features.len()), features.to_vec())
            .map_err(|_| Error::InvalidArgument("features".into()))?;
        let mut z = self.latent_batch(&self.actor, &s)?.into_raw_vec_and_offset().0;
        if sigma > 0.0 {
            z.iter_mut().for_each(|v| *v += sigma * sample_normal(rng));
        }
        Ok(z)
    }

    /// One critic and one actor step on a sampled batch, then target mixing.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<UpdateStats> {
        let n = batch.len();
        let ds = batch[0].s.len();
        let l = self.latent_dim();
        let mut s = Array2::zeros((n, ds));
        let mut s2 = Array2::zeros((n, ds));
        let mut sz = Array2::zeros((n, ds + l));
        for (i, t) in batch.iter().enumerate() {
            for (j, &v) in t.s.iter().enumerate() {
                s[[i, j]] = v;
                sz[[i, j]] = v;
            }
            for (j, &v) in t.z.iter().enumerate() {
                sz[[i, ds + j]] = v;
            }
            for (j, &v) in t.s2.iter().enumerate() {
                s2[[i, j]] = v;
            }
        }

        // critic
        let z2 = self.latent_batch(&self.actor_target, &s2)?;
        let q2 = self.critic_target.forward_batch(&concat(&s2, &z2))?.0;
        let (q, cache) = self.critic.forward_batch(&sz)?;
        let mut dq = Array2::zeros((n, 1));
        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let cont = if t.done { 0.0 } else { self.cfg.gamma };
            let err = q[[i, 0]] - (t.r + cont * q2[[i, 0]]);
            loss += err * err / n as f64;
            dq[[i, 0]] = 2.0 * err / n as f64;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("critic loss after {} updates", self.gradient_steps)));
        }
        let (mut g, _) = self.critic.backward(&cache, &dq)?;
        g.clip(CLIP_NORM);
        self.critic_opt.step(&mut self.critic, &g)?;

        // actor: ascend Q(s, μ(s)) minus λ·dist(knots, region)²
        let (mut y, a_cache) = self.actor.forward_batch(&s)?;
        self.latent.apply(&mut y);
        let (qa, c_cache) = self.critic.forward_batch(&concat(&s, &y))?;
        let up = Array2::from_elem((n, 1), -1.0 / n as f64);
        let din = self.critic.backward_input(&c_cache, &up)?;
        let mut dz = din.slice(s![.., ds..]).to_owned();
        if self.cfg.knot_penalty > 0.0 {
            let k0 = l - self.knot_region.dim();
            let w = 2.0 * self.cfg.knot_penalty / n as f64;
            for (yr, mut dr) in y.rows().into_iter().zip(dz.rows_mut()) {
                let knots: Vec<f64> = yr.iter().skip(k0).copied().collect();
                if self.knot_region.contains(&knots, LINEAR_TOL) {
                    continue;
                }
                let p = project_continuous(&knots, &self.knot_region)?;
                for (j, (v, pv)) in knots.iter().zip(&p.x).enumerate() {
                    dr[k0 + j] += w * (v - pv);
                }
            }
        }
        for mut row in dz.rows_mut() {
            row.iter_mut().zip(&self.latent.half).for_each(|(d, h)| *d *= h);
        }
        let (mut ga, _) = self.actor.backward(&a_cache, &dz)?;
        ga.clip(CLIP_NORM);
        self.actor_opt.step(&mut self.actor, &ga)?;

        self.actor_target.soft_update(&self.actor, self.cfg.tau);
        self.critic_target.soft_update(&self.critic, self.cfg.tau);
        self.gradient_steps += 1;
        Ok(UpdateStats {
            critic_loss: loss,
            actor_q: qa.mean().unwrap_or(0.0),
        })
    }

    /// Writes the actor followed by the critic.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.actor.save(&mut w)?;
        self.critic.save(&mut w)?;
        Ok(())
    }

    /// Reads an `(actor, critic)` checkpoint.
    pub fn load_checkpoint(path: &Path) -> Result<(Mlp, Mlp)> {
        let mut r = BufReader::new(File::open(path)?);
        let actor = Mlp::load(&mut r)?;
        let critic = Mlp::load(&mut r)?;
        Ok((actor, critic))
    }

    /// Replaces the actor (targets included), e.g. from a checkpoint.
    pub fn set_actor(&mut self, actor: Mlp) -> Result<()> {
        if actor.sizes() != self.actor.sizes() {
            return Err(Error::Checkpoint(format!(
                "actor shape {:?} does not match {:?}",
                actor.sizes(),
                self.actor.sizes()
            )));
        }
        self.actor_target = actor.clone();
        self.actor = actor;
        Ok(())
    }
}

fn concat(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts agree")
}

/// Masked argmax plus clamping; coupling-row violations are pulled toward
/// the box center. Returns the action and the number of such repairs.
pub fn act_masked(projector: &Projector, s: &State, z: &[f64]) -> Result<(HybridAction, usize)> {
    let decoded = projector.decode(z)?;
    let feasible = projector.constraints.feasible_discrete(s);
    let discrete = project_discrete(&decoded.logits, &feasible, projector.mode)?;
    let mut continuous = Vec::with_capacity(discrete.len());
    let mut repairs = 0;
    for a in &discrete {
        let region = projector.constraints.continuous_region(a.op.stage)?;
        let (x, repaired) = clamp_and_repair(&decoded.knots, region);
        repairs += repaired as usize;
        continuous.push(x);
    }
    Ok((HybridAction { discrete, continuous }, repairs))
}

fn clamp_and_repair(v: &[f64], region: &Region) -> (Vec<f64>, bool) {
    let x: Vec<f64> = v
        .iter()
        .zip(region.lower.iter().zip(&region.upper))
        .map(|(&x, (&lo, &hi))| x.clamp(lo, hi))
        .collect();
    if region.contains(&x, LINEAR_TOL) {
        return (x, false);
    }
    let c = region.center();
    let mut lambda: f64 = 1.0;
    for h in &region.coupling {
        let at_c = h.offset - dot(&h.normal, &c);
        let slope = dot(&h.normal, &x) - dot(&h.normal, &c);
        if slope > 0.0 && at_c >= 0.0 {
            lambda = lambda.min(at_c / slope);
        }
    }
    let y = c.iter().zip(&x).map(|(c, x)| c + lambda * (x - c)).collect();
    (y, true)
}

/// Per-episode training outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub episode: usize,
    pub record: EpisodeRecord,
    pub gradient_steps: u64,
    /// Environment steps taken while the buffer was past warm-up.
    pub gated_steps: usize,
    pub qp_iterations_mean: f64,
    pub near_misses: usize,
    pub sigma: f64,
    pub critic_loss: f64,
}

/// Everything needed to run and log one training seed.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub agent: Ddpg,
    pub env: R2amsEnv,
    pub projector: Projector,
    pub encoder: FeatureEncoder,
    pub method: Method,
    pub buffer: ReplayBuffer,
    pub seed: u64,
    episode: usize,
    env_steps: usize,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(env: R2amsEnv, cfg: AgentConfig, method: Method, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = env.config().scale.clone();
        let projector = Projector::new(env.constraints().clone(), scale.clone(), cfg.mode);
        let encoder = FeatureEncoder::for_env(&env);
        let region = env.constraints().continuous_region(0)?.clone();
        let buffer = ReplayBuffer::new(cfg.buffer_capacity);
        let agent = Ddpg::new(encoder.dim(), scale.pair_count(), &region, cfg, &mut rng)?;
        Ok(Self {
            agent,
            env,
            projector,
            encoder,
            method,
            buffer,
            seed,
            episode: 0,
            env_steps: 0,
            rng,
        })
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    /// True once the configured episode or step budget is spent.
    pub fn finished(&self) -> bool {
        self.episode >= self.agent.cfg.episodes
            || self.agent.cfg.max_env_steps.is_some_and(|m| self.env_steps >= m)
    }

    fn episode_seed(&self, episode: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(episode as u64)
    }

    pub fn train_episode(&mut self) -> Result<EpisodeStats> {
        let ep = self.episode;
        let sigma = self.agent.cfg.sigma(ep);
        self.env.reset(self.episode_seed(ep));
        let steps_before = self.agent.gradient_steps;
        let mut qp_iters = 0usize;
        let mut qp_calls = 0usize;
        let mut near_misses = 0;
        let mut gated = 0;
        let mut loss_sum = 0.0;
        let mut s = self.encoder.encode(self.env.state());
        while !self.env.is_done() {
            if self.agent.cfg.max_env_steps.is_some_and(|m| self.env_steps >= m) {
                break;
            }
            let z = self.agent.act(&s, sigma, &mut self.rng)?;
            let action = match self.method {
                Method::Lirl => {
                    let p = self.projector.project(self.env.state(), &z)?;
                    qp_iters += p.qp_iterations();
                    qp_calls += p.qp.len();
                    p.action
                }
                Method::Mask => {
                    let (a, repaired) = act_masked(&self.projector, self.env.state(), &z)?;
                    near_misses += repaired;
                    a
                }
            };
            let out = self.env.step(&action)?;
            self.env_steps += 1;
            let s2 = self.encoder.encode(self.env.state());
            self.buffer.push(Transition {
                s: std::mem::replace(&mut s, s2.clone()),
                z,
                r: out.reward,
                s2,
                done: out.done && self.env.state().all_complete(),
            });
            if self.buffer.len() > self.agent.cfg.warmup {
                gated += 1;
                for _ in 0..self.agent.cfg.updates_per_step {
                    let batch = self.buffer.sample(self.agent.cfg.batch_size, &mut self.rng);
                    loss_sum += self.agent.update(&batch)?.critic_loss;
                }
            }
        }
        let record = self.env.take_record();
        self.episode += 1;
        let gradient_steps = self.agent.gradient_steps - steps_before;
        Ok(EpisodeStats {
            episode: ep,
            record,
            gradient_steps,
            gated_steps: gated,
            qp_iterations_mean: if qp_calls > 0 { qp_iters as f64 / qp_calls as f64 } else { 0.0 },
            near_misses,
            sigma,
            critic_loss: if gradient_steps > 0 { loss_sum / gradient_steps as f64 } else { 0.0 },
        })
    }

    /// Trains until the budget is spent, calling `on_episode` after each
    /// episode and writing `{run_id}_ep{N}.ckpt` every `checkpoint_every`
    /// episodes when `checkpoint_dir` is set.
    pub fn train<F>(&mut self, checkpoint_dir: Option<(&Path, &str)>, mut on_episode: F) -> Result<()>
    where
        F: FnMut(&EpisodeStats) -> Result<()>,
    {
        while !self.finished() {
            let stats = self.train_episode()?;
            on_episode(&stats)?;
            if let Some((dir, run_id)) = checkpoint_dir {
                if self.episode.is_multiple_of(self.agent.cfg.checkpoint_every) {
                    self.agent.save_checkpoint(&checkpoint_path(dir, run_id, self.episode))?;
                }
            }
        }
        Ok(())
    }

    /// Noise-free rollout with the current actor.
    pub fn greedy_episode(&self, env: &mut R2amsEnv, seed: u64) -> Result<EpisodeRecord> {
        rollout(&self.agent, self.method, &self.projector, &self.encoder, env, seed)
    }
}

pub fn checkpoint_path(dir: &Path, run_id: &str, episode: usize) -> PathBuf {
    dir.join(format!("{run_id}_ep{episode}.ckpt"))
}

/// One noise-free episode driven by `agent`'s actor.
pub fn rollout(
    agent: &Ddpg,
    method: Method,
    projector: &Projector,
    encoder: &FeatureEncoder,
    env: &mut R2amsEnv,
    seed: u64,
) -> Result<EpisodeRecord> {
    env.reset(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while !env.is_done() {
        let z = agent.act(&encoder.encode(env.state()), 0.0, &mut rng)?;
        let action = match method {
            Method::Lirl => projector.project(env.state(), &z)?.action,
            Method::Mask => act_masked(projector, env.state(), &z)?.0,
        };
        env.step(&action)?;
    }
    Ok(env.take_record())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub reward: MeanStd,
    pub makespan: MeanStd,
    pub energy: MeanStd,
    pub violations: u32,
    pub records: Vec<EpisodeRecord>,
}

impl EvalSummary {
    pub fn from_records(records: Vec<EpisodeRecord>) -> Self {
        let col = |f: fn(&EpisodeRecord) -> f64| MeanStd::of(&records.iter().map(f).collect::<Vec<_>>());
        Self {
            reward: col(|r| r.total_reward),
            makespan: col(|r| r.makespan),
            energy: col(|r| r.energy),
            violations: records.iter().map(|r| r.violations).sum(),
            records,
        }
    }
}

/// Noise-free evaluation over `n_episodes` environment seeds.
pub fn evaluate(
    agent: &Ddpg,
    method: Method,
    env: &mut R2amsEnv,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("n_episodes must be at least 1".into()));
    }
    let scale = env.config().scale.clone();
    let encoder = FeatureEncoder::for_env(env);
    if agent.actor.input_dim() != encoder.dim() || agent.latent_dim() != crate::projection::latent_dim(&scale, env.constraints().knot_dim()) {
        return Err(Error::Checkpoint(format!("actor does not match scale {scale}")));
    }
    let projector = Projector::new(env.constraints().clone(), scale, agent.cfg.mode);
    let records = (0..n_episodes)
        .map(|i| rollout(agent, method, &projector, &encoder, env, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_records(records))
}
