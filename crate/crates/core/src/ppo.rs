//! Proximal policy optimization over [`LayoutEnv`].
//!
//! Each iteration collects a fixed number of steps from `workers` env
//! instances that advance in lockstep, estimates advantages with GAE,
//! normalizes them over the batch and runs several epochs of shuffled
//! minibatch updates on the clipped surrogate loss
//! `-surrogate + c_v * mean((V - G)^2) - c_e * entropy`.
//! Episodes carry over between iterations.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    EnvConfig, EnvError, LayoutEnv, ObsMode, Observation, TraceRecord, ACTION_CODEC_VERSION,
};
use crate::nn::{clip_grad_norm, Adam, AdamConfig, Layer, NetError, NetSpec, ObsBatch, PolicyNet, Real};
use crate::scenario::Scenario;

pub const METRICS_HEADER: &str =
    "iteration,env_steps,episode_reward_mean,episode_len_mean,policy_loss,value_loss,entropy,approx_kl";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LPLANCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
    pub workers: usize,
    /// Iterations between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub env: EnvConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 1.0,
            clip: 0.3,
            adam: AdamConfig::default(),
            batch_size: 4000,
            minibatch_size: 128,
            epochs: 30,
            value_coef: 1.0,
            entropy_coef: 0.01,
            max_grad_norm: 40.0,
            seed: 0,
            workers: 4,
            checkpoint_every: 10,
            env: EnvConfig::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |what: &str| Err(PpoError::Config(what.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("lambda must be in (0, 1]");
        }
        if self.clip <= 0.0 {
            return bad("clip must be positive");
        }
        if self.batch_size == 0 || self.minibatch_size == 0 || self.epochs == 0 {
            return bad("batch, minibatch and epochs must be positive");
        }
        if self.workers == 0 || self.workers > self.batch_size {
            return bad("workers must be in 1..=batch_size");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("non-finite loss in epoch {epoch}, minibatch {minibatch}")]
    NonFiniteLoss { epoch: usize, minibatch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Softmax log-probabilities of one logit row, computed in `f64`.
pub fn log_softmax<F: Real>(logits: ArrayView1<F>) -> Vec<f64> {
    let z: Vec<f64> = logits.iter().map(|x| x.to_f64().unwrap()).collect();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    z.iter().map(|x| x - lse).collect()
}

/// Draws from the softmax of `logits`; returns the action and its log-probability.
pub fn sample_action<F: Real, R: Rng>(logits: ArrayView1<F>, rng: &mut R) -> (usize, f64) {
    let logp = log_softmax(logits);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in logp.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return (i, *lp);
        }
    }
    // Rounding left `acc` just below 1: take the last action with mass.
    let last = logp.iter().rposition(|lp| lp.exp() > 0.0).unwrap_or(logp.len() - 1);
    (last, logp[last])
}

/// Highest logit, lowest index on ties.
pub fn argmax_action<F: Real>(logits: ArrayView1<F>) -> (usize, f64) {
    let logp = log_softmax(logits);
    let mut best = 0;
    for (i, lp) in logp.iter().enumerate() {
        if *lp > logp[best] {
            best = i;
        }
    }
    (best, logp[best])
}

/// How a step relates to the end of its trajectory segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// The next step in the buffer continues this trajectory.
    Continue,
    /// The episode terminated; the next state has value 0.
    Terminal,
    /// The segment stops here (truncation or batch end); bootstrap from this value.
    Bootstrap(f64),
}

/// Generalized advantage estimates and returns (`advantages + values`).
/// A `Continue` on the last step is treated as a zero bootstrap.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    ends: &[Boundary],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && ends.len() == n, "misaligned rollout");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = match ends[t] {
            Boundary::Continue if t + 1 < n => (values[t + 1], next_adv),
            Boundary::Continue | Boundary::Terminal => (0.0, 0.0),
            Boundary::Bootstrap(v) => (v, 0.0),
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        adv[t] = delta + gamma * lambda * carry;
        next_adv = adv[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// `min(r * A, clip(r, 1 - eps, 1 + eps) * A)` and whether the gradient flows
/// through `r` (it does not when the clipped branch is strictly smaller).
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
}

/// One minibatch worth of training data.
#[derive(Debug, Clone)]
pub struct Minibatch<'a, F> {
    pub obs: &'a ObsBatch<F>,
    pub actions: &'a [usize],
    pub old_logp: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

/// Loss, statistics and the derivatives of the loss with respect to the
/// logits and values.
fn loss_terms<F: Real>(
    logits: &Array2<F>,
    values: &Array1<F>,
    mb: &Minibatch<'_, F>,
    cfg: &PpoConfig,
) -> (LossStats, Array2<F>, Array1<F>) {
    let n = mb.actions.len();
    let inv = 1.0 / n as f64;
    let mut dlogits = Array2::<F>::zeros(logits.dim());
    let mut dvalues = Array1::<F>::zeros(n);
    let mut s = LossStats::default();
    for i in 0..n {
        let row = logits.row(i);
        let mut drow = dlogits.row_mut(i);
        let max = row.iter().fold(F::neg_infinity(), |m, &x| m.max(x));
        let (mut sum, mut weighted) = (0.0, 0.0);
        for (e, &z) in drow.iter_mut().zip(row) {
            *e = (z - max).exp();
            let (ef, zf) = (e.to_f64().unwrap(), z.to_f64().unwrap());
            sum += ef;
            weighted += ef * zf;
        }
        let lse = max.to_f64().unwrap() + sum.ln();
        let entropy = lse - weighted / sum;
        let a = mb.actions[i];
        let log_ratio = (row[a].to_f64().unwrap() - lse) - mb.old_logp[i];
        let ratio = log_ratio.exp();
        let (obj, flows) = clipped_objective(ratio, mb.advantages[i], cfg.clip);
        let g = if flows { ratio * mb.advantages[i] } else { 0.0 };
        let scale = inv / sum;
        let alpha = F::from_f64(scale * (g + cfg.entropy_coef * (entropy - lse))).unwrap();
        let beta = F::from_f64(scale * cfg.entropy_coef).unwrap();
        for (d, &z) in drow.iter_mut().zip(row) {
            *d = *d * (alpha + beta * z);
        }
        drow[a] -= F::from_f64(g * inv).unwrap();
        let v = values[i].to_f64().unwrap();
        let err = v - mb.returns[i];
        dvalues[i] = F::from_f64(2.0 * cfg.value_coef * err * inv).unwrap();

        s.policy_loss -= obj * inv;
        s.value_loss += err * err * inv;
        s.entropy += entropy * inv;
        s.approx_kl += (ratio - 1.0 - log_ratio) * inv;
    }
    s.total = s.policy_loss + cfg.value_coef * s.value_loss - cfg.entropy_coef * s.entropy;
    (s, dlogits, dvalues)
}

/// Loss value only.
pub fn ppo_loss<F: Real>(net: &PolicyNet<F>, mb: &Minibatch<'_, F>, cfg: &PpoConfig) -> Result<LossStats, NetError> {
    let fwd = net.forward(mb.obs)?;
    Ok(loss_terms(&fwd.logits, &fwd.values, mb, cfg).0)
}

/// Loss and its gradient with respect to every parameter.
pub fn ppo_loss_and_grad<F: Real>(
    net: &PolicyNet<F>,
    mb: &Minibatch<'_, F>,
    cfg: &PpoConfig,
) -> Result<(LossStats, Vec<Layer<F>>), NetError> {
    let fwd = net.forward(mb.obs)?;
    let (stats, dlogits, dvalues) = loss_terms(&fwd.logits, &fwd.values, mb, cfg);
    Ok((stats, net.backward(&fwd, dlogits.view(), dvalues.view())))
}

/// Collected experience, aligned per step.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub obs: ObsBatch<f32>,
    pub actions: Vec<usize>,
    pub logp: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub ends: Vec<Boundary>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Fills advantages and returns, then normalizes advantages to zero mean
    /// and unit variance (skipped when the variance is below 1e-8).
    pub fn finish(&mut self, gamma: f64, lambda: f64) {
        let (adv, ret) = compute_gae(&self.rewards, &self.values, &self.ends, gamma, lambda);
        self.returns = ret;
        self.advantages = normalize(adv);
    }
}

pub fn normalize(mut xs: Vec<f64>) -> Vec<f64> {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return xs;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if var >= 1e-8 {
        let sd = var.sqrt();
        xs.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    }
    xs
}

/// Mean minibatch statistics of one update.
pub type UpdateStats = LossStats;

pub fn ppo_update<R: Rng>(
    net: &mut PolicyNet<f32>,
    adam: &mut Adam<f32>,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, PpoError> {
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut sum = LossStats::default();
    let mut count = 0usize;
    let gather = |idx: &[usize], src: &[f64]| idx.iter().map(|&i| src[i]).collect::<Vec<f64>>();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for (minibatch, idx) in order.chunks(cfg.minibatch_size).enumerate() {
            let obs = batch.obs.select(idx);
            let actions: Vec<usize> = idx.iter().map(|&i| batch.actions[i]).collect();
            let (old_logp, advantages, returns) =
                (gather(idx, &batch.logp), gather(idx, &batch.advantages), gather(idx, &batch.returns));
            let mb = Minibatch {
                obs: &obs,
                actions: &actions,
                old_logp: &old_logp,
                advantages: &advantages,
                returns: &returns,
            };
            let (stats, mut grads) = ppo_loss_and_grad(net, &mb, cfg)?;
            if !stats.total.is_finite() {
                return Err(PpoError::NonFiniteLoss { epoch, minibatch });
            }
            clip_grad_norm(&mut grads, cfg.max_grad_norm);
            adam.step(net, &grads);
            sum.total += stats.total;
            sum.policy_loss += stats.policy_loss;
            sum.value_loss += stats.value_loss;
            sum.entropy += stats.entropy;
            sum.approx_kl += stats.approx_kl;
            count += 1;
        }
    }
    let k = count.max(1) as f64;
    Ok(LossStats {
        total: sum.total / k,
        policy_loss: sum.policy_loss / k,
        value_loss: sum.value_loss / k,
        entropy: sum.entropy / k,
        approx_kl: sum.approx_kl / k,
    })
}

/// Copies observations into network input rows; RGB bytes are scaled to `[0, 1]`.
pub fn obs_batch(observations: &[&Observation], spec: &NetSpec) -> ObsBatch<f32> {
    let (lw, cw) = (spec.layout_len(), spec.context_len());
    let mut layout = Array2::zeros((observations.len(), lw));
    let mut context = Array2::zeros((observations.len(), cw));
    for (i, o) in observations.iter().enumerate() {
        let mut row = layout.row_mut(i);
        match spec.obs {
            ObsMode::Features => row.iter_mut().zip(o.features()).for_each(|(d, &s)| *d = s),
            ObsMode::Image => row.iter_mut().zip(o.image()).for_each(|(d, &s)| *d = s as f32 / 255.0),
        }
        context.row_mut(i).iter_mut().zip(&o.context).for_each(|(d, &s)| *d = s);
    }
    ObsBatch { layout, context }
}

/// One row of the metrics file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub env_steps: usize,
    /// Mean over episodes finished during the iteration; NaN if none finished.
    pub episode_reward_mean: f64,
    pub episode_len_mean: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iteration,
            self.env_steps,
            self.episode_reward_mean,
            self.episode_len_mean,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.approx_kl
        )
    }

    pub fn parse_csv_line(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 8 {
            return None;
        }
        let num = |i: usize| f[i].parse::<f64>().ok();
        Some(MetricsRow {
            iteration: f[0].parse().ok()?,
            env_steps: f[1].parse().ok()?,
            episode_reward_mean: num(2)?,
            episode_len_mean: num(3)?,
            policy_loss: num(4)?,
            value_loss: num(5)?,
            entropy: num(6)?,
            approx_kl: num(7)?,
        })
    }
}

pub fn read_metrics(path: &Path) -> io::Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().skip(1).filter_map(MetricsRow::parse_csv_line).collect())
}

struct Worker {
    env: LayoutEnv,
    rng: ChaCha8Rng,
    obs: Observation,
    next_seed: u64,
}

/// Episodes completed during one rollout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeStats {
    pub returns: Vec<f64>,
    pub lengths: Vec<usize>,
}

impl EpisodeStats {
    pub fn reward_mean(&self) -> f64 {
        mean(&self.returns)
    }

    pub fn len_mean(&self) -> f64 {
        mean(&self.lengths.iter().map(|&l| l as f64).collect::<Vec<_>>())
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// PPO state: network, optimizer and the worker environments.
pub struct Trainer {
    scenario: Scenario,
    config: PpoConfig,
    net: PolicyNet<f32>,
    adam: Adam<f32>,
    workers: Vec<Worker>,
    rng: ChaCha8Rng,
    iteration: usize,
    env_steps: usize,
}

impl Trainer {
    pub fn new(scenario: Scenario, config: PpoConfig) -> Result<Self, PpoError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let probe = LayoutEnv::new(scenario.clone(), config.env)?;
        let spec = NetSpec::new(&probe.dims(), probe.action_count());
        let net = PolicyNet::init(spec, &mut rng);
        let adam = Adam::new(config.adam, &net);
        let workers = (0..config.workers)
            .map(|k| {
                let mut env = probe.clone();
                let first_seed = config.seed.wrapping_mul(1_000_003).wrapping_add(k as u64 * 1_000_000);
                let (obs, _) = env.reset(first_seed);
                Worker {
                    env,
                    rng: ChaCha8Rng::seed_from_u64(config.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k as u64 + 1))),
                    obs,
                    next_seed: first_seed + 1,
                }
            })
            .collect();
        Ok(Trainer {
            scenario,
            config,
            net,
            adam,
            workers,
            rng,
            iteration: 0,
            env_steps: 0,
        })
    }

    pub fn net(&self) -> &PolicyNet<f32> {
        &self.net
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    /// Steps every worker until `batch_size` transitions are collected.
    pub fn collect(&mut self) -> Result<(RolloutBatch, EpisodeStats), PpoError> {
        let k = self.workers.len();
        let total = self.config.batch_size;
        let quota: Vec<usize> = (0..k).map(|i| total / k + usize::from(i < total % k)).collect();
        let spec = self.net.spec().clone();
        let mut stats = EpisodeStats::default();

        struct Segment {
            layout: Vec<f32>,
            context: Vec<f32>,
            actions: Vec<usize>,
            logp: Vec<f64>,
            rewards: Vec<f64>,
            values: Vec<f64>,
            ends: Vec<Boundary>,
        }
        let mut segs: Vec<Segment> = (0..k)
            .map(|i| Segment {
                layout: Vec::with_capacity(quota[i] * spec.layout_len()),
                context: Vec::with_capacity(quota[i] * spec.context_len()),
                actions: Vec::with_capacity(quota[i]),
                logp: Vec::with_capacity(quota[i]),
                rewards: Vec::with_capacity(quota[i]),
                values: Vec::with_capacity(quota[i]),
                ends: Vec::with_capacity(quota[i]),
            })
            .collect();

        for t in 0..quota[0] {
            let active: Vec<usize> = (0..k).filter(|&i| t < quota[i]).collect();
            let batch = obs_batch(&active.iter().map(|&i| &self.workers[i].obs).collect::<Vec<_>>(), &spec);
            let fwd = self.net.forward(&batch)?;
            for (row, &i) in active.iter().enumerate() {
                let w = &mut self.workers[i];
                let seg = &mut segs[i];
                let (action, logp) = sample_action(fwd.logits.row(row), &mut w.rng);
                seg.layout.extend(batch.layout.row(row).iter());
                seg.context.extend(batch.context.row(row).iter());
                seg.actions.push(action);
                seg.logp.push(logp);
                seg.values.push(fwd.values[row] as f64);
                let step = w.env.step(action as i64)?;
                seg.rewards.push(step.reward);
                if step.terminated || step.truncated {
                    stats.returns.push(w.env.episode_return());
                    stats.lengths.push(w.env.steps_taken());
                }
                let end = if step.terminated {
                    Boundary::Terminal
                } else if step.truncated {
                    let last = obs_batch(&[&step.obs], &spec);
                    Boundary::Bootstrap(self.net.forward(&last)?.values[0] as f64)
                } else {
                    Boundary::Continue
                };
                seg.ends.push(end);
                w.obs = if step.terminated || step.truncated {
                    let seed = w.next_seed;
                    w.next_seed += 1;
                    w.env.reset(seed).0
                } else {
                    step.obs
                };
            }
        }

        // Bootstrap the segments cut by the batch boundary.
        let open: Vec<usize> = (0..k).filter(|&i| segs[i].ends.last() == Some(&Boundary::Continue)).collect();
        if !open.is_empty() {
            let batch = obs_batch(&open.iter().map(|&i| &self.workers[i].obs).collect::<Vec<_>>(), &spec);
            let values = self.net.forward(&batch)?.values;
            for (row, &i) in open.iter().enumerate() {
                *segs[i].ends.last_mut().expect("non-empty") = Boundary::Bootstrap(values[row] as f64);
            }
        }

        let mut layout = Vec::with_capacity(total * spec.layout_len());
        let mut context = Vec::with_capacity(total * spec.context_len());
        let mut out = RolloutBatch {
            obs: ObsBatch {
                layout: Array2::zeros((0, 0)),
                context: Array2::zeros((0, 0)),
            },
            actions: Vec::with_capacity(total),
            logp: Vec::with_capacity(total),
            rewards: Vec::with_capacity(total),
            values: Vec::with_capacity(total),
            ends: Vec::with_capacity(total),
            advantages: Vec::new(),
            returns: Vec::new(),
        };
        for seg in segs {
            layout.extend(seg.layout);
            context.extend(seg.context);
            out.actions.extend(seg.actions);
            out.logp.extend(seg.logp);
            out.rewards.extend(seg.rewards);
            out.values.extend(seg.values);
            out.ends.extend(seg.ends);
        }
        out.obs = ObsBatch {
            layout: Array2::from_shape_vec((total, spec.layout_len()), layout).expect("aligned"),
            context: Array2::from_shape_vec((total, spec.context_len()), context).expect("aligned"),
        };
        out.finish(self.config.gamma, self.config.lambda);
        Ok((out, stats))
    }

    /// One collect + update cycle.
    pub fn iterate(&mut self) -> Result<MetricsRow, PpoError> {
        let (batch, episodes) = self.collect()?;
        let stats = ppo_update(&mut self.net, &mut self.adam, &batch, &self.config, &mut self.rng)?;
        self.iteration += 1;
        self.env_steps += batch.len();
        Ok(MetricsRow {
            iteration: self.iteration,
            env_steps: self.env_steps,
            episode_reward_mean: episodes.reward_mean(),
            episode_len_mean: episodes.len_mean(),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            header: CheckpointHeader {
                format_version: CHECKPOINT_VERSION,
                action_codec_version: ACTION_CODEC_VERSION,
                scenario: self.scenario.clone(),
                ppo: self.config.clone(),
                net: self.net.spec().clone(),
                layer_shapes: self.net.spec().layer_shapes(),
                iteration: self.iteration,
                env_steps: self.env_steps,
            },
            net: self.net.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub metrics_path: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub rows: Vec<MetricsRow>,
}

/// Trains for `ceil(total_steps / batch_size)` iterations, writing
/// `metrics.csv` and checkpoints under `outdir`. Rows written before an
/// error stay on disk.
pub fn train(
    scenario: &Scenario,
    config: &PpoConfig,
    total_steps: usize,
    outdir: &Path,
    mut on_iteration: impl FnMut(&MetricsRow),
) -> Result<TrainOutput, PpoError> {
    let mut trainer = Trainer::new(scenario.clone(), config.clone())?;
    fs::create_dir_all(outdir)?;
    let metrics_path = outdir.join("metrics.csv");
    let mut metrics = BufWriter::new(File::create(&metrics_path)?);
    writeln!(metrics, "{METRICS_HEADER}")?;
    metrics.flush()?;
    let iterations = total_steps.div_ceil(config.batch_size);
    let mut out = TrainOutput {
        metrics_path,
        checkpoints: Vec::new(),
        rows: Vec::with_capacity(iterations),
    };
    for it in 1..=iterations {
        let row = trainer.iterate()?;
        writeln!(metrics, "{}", row.csv_line())?;
        metrics.flush()?;
        on_iteration(&row);
        out.rows.push(row);
        if config.checkpoint_every > 0 && it % config.checkpoint_every == 0 && it != iterations {
            let path = outdir.join(format!("checkpoint-{it:05}.lpck"));
            trainer.checkpoint().save(&path)?;
            out.checkpoints.push(path);
        }
    }
    let path = outdir.join("final.lpck");
    trainer.checkpoint().save(&path)?;
    out.checkpoints.push(path);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub action_codec_version: u32,
    #[serde(with = "scenario_as_json")]
    pub scenario: Scenario,
    pub ppo: PpoConfig,
    pub net: NetSpec,
    pub layer_shapes: Vec<(usize, usize)>,
    pub iteration: usize,
    pub env_steps: usize,
}

/// Embeds a scenario in the same form as a scenario file.
mod scenario_as_json {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    use crate::scenario::Scenario;

    pub fn serialize<S: Serializer>(s: &Scenario, ser: S) -> Result<S::Ok, S::Error> {
        let value: serde_json::Value = serde_json::from_str(&s.to_json()).expect("valid json");
        value.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Scenario, D::Error> {
        let value = serde_json::Value::deserialize(de)?;
        Scenario::from_json(&value.to_string()).map_err(D::Error::custom)
    }
}

/// File layout: 8-byte magic, `u64` LE header length, JSON header, then the
/// weights as LE `f32` in layer order (`w` row-major, then `b`).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub net: PolicyNet<f32>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), PpoError> {
        let header = serde_json::to_vec(&self.header).map_err(|e| PpoError::Checkpoint(e.to_string()))?;
        let mut f = BufWriter::new(File::create(path)?);
        f.write_all(CHECKPOINT_MAGIC)?;
        f.write_all(&(header.len() as u64).to_le_bytes())?;
        f.write_all(&header)?;
        f.write_all(&self.net.to_le_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PpoError> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |m: &str| PpoError::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + len).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(body).map_err(|e| PpoError::Checkpoint(e.to_string()))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(bad("unsupported format version"));
        }
        if header.action_codec_version != ACTION_CODEC_VERSION {
            return Err(bad("action codec version differs"));
        }
        if header.layer_shapes != header.net.layer_shapes() {
            return Err(bad("layer shapes disagree with the network spec"));
        }
        let net = PolicyNet::from_le_bytes(header.net.clone(), &bytes[16 + len..])?;
        Ok(Checkpoint { header, net })
    }

    /// Checks that the network fits `scenario` under the stored env config.
    pub fn check_scenario(&self, scenario: &Scenario) -> Result<(), PpoError> {
        let env = LayoutEnv::new(scenario.clone(), self.header.ppo.env)?;
        let expected = NetSpec::new(&env.dims(), env.action_count());
        if expected != self.header.net {
            return Err(PpoError::Net(NetError::ShapeMismatch {
                what: "scenario (parameter count)",
                expected: self.header.net.param_count(),
                got: expected.param_count(),
            }));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    Argmax,
    Sample,
}

/// Who picks the actions during evaluation.
pub enum Actor<'a> {
    Policy(&'a PolicyNet<f32>, EvalMode),
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub reward_mean: f64,
    pub reward_min: f64,
    pub reward_max: f64,
    pub len_mean: f64,
    /// Completed episodes by number of missed desired adjacencies.
    pub missed_hist: BTreeMap<usize, usize>,
    pub truncated: usize,
    /// Whether every completed episode satisfied
    /// `return = terminal - (length - (n - 1))`.
    pub reward_identity: bool,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub summary: EvalSummary,
    pub traces: Vec<Vec<TraceRecord>>,
    /// Final env of every episode, for rendering.
    pub finals: Vec<LayoutEnv>,
}

pub fn evaluate(
    actor: Actor<'_>,
    scenario: &Scenario,
    env_config: EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<Evaluation, PpoError> {
    let mut env = LayoutEnv::new(scenario.clone(), env_config)?;
    if let Actor::Policy(net, _) = &actor {
        let expected = NetSpec::new(&env.dims(), env.action_count());
        if &expected != net.spec() {
            return Err(PpoError::Net(NetError::ShapeMismatch {
                what: "policy (parameter count)",
                expected: expected.param_count(),
                got: net.spec().param_count(),
            }));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_actions = env.action_count();
    let mut returns = Vec::with_capacity(episodes);
    let mut lengths = Vec::with_capacity(episodes);
    let mut summary = EvalSummary {
        episodes,
        reward_mean: f64::NAN,
        reward_min: f64::NAN,
        reward_max: f64::NAN,
        len_mean: f64::NAN,
        missed_hist: BTreeMap::new(),
        truncated: 0,
        reward_identity: true,
    };
    let mut traces = Vec::with_capacity(episodes);
    let mut finals = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let (mut obs, _) = env.reset(seed.wrapping_add(ep as u64));
        let mut missed = None;
        loop {
            let action = match &actor {
                Actor::Uniform => rng.gen_range(0..n_actions),
                Actor::Policy(net, mode) => {
                    let fwd = net.forward(&obs_batch(&[&obs], net.spec()))?;
                    match mode {
                        EvalMode::Argmax => argmax_action(fwd.logits.row(0)).0,
                        EvalMode::Sample => sample_action(fwd.logits.row(0), &mut rng).0,
                    }
                }
            };
            let step = env.step(action as i64)?;
            if step.terminated {
                missed = step.info.missed_adjacencies;
                let terminal = step.reward;
                let expected = terminal - (env.steps_taken() - (scenario.n_rooms - 1)) as f64;
                summary.reward_identity &= env.episode_return() == expected;
            }
            if step.terminated || step.truncated {
                break;
            }
            obs = step.obs;
        }
        match missed {
            Some(m) => *summary.missed_hist.entry(m).or_default() += 1,
            None => summary.truncated += 1,
        }
        returns.push(env.episode_return());
        lengths.push(env.steps_taken() as f64);
        traces.push(env.trace().to_vec());
        finals.push(env.clone());
    }
    if episodes > 0 {
        summary.reward_mean = mean(&returns);
        summary.reward_min = returns.iter().copied().fold(f64::INFINITY, f64::min);
        summary.reward_max = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        summary.len_mean = mean(&lengths);
    }
    Ok(Evaluation {
        summary,
        traces,
        finals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::mini3;
    use ndarray::array;

    #[test]
    fn sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, lp) = sample_action(array![0.0f32, 1e9, 0.0].view(), &mut rng);
        assert_eq!(a, 1);
        assert!(lp.abs() < 1e-12);
        for _ in 0..10 {
            let (_, lp) = sample_action(array![0.5f64, 0.5, 0.5, 0.5].view(), &mut rng);
            assert!((lp - 0.25f64.ln()).abs() < 1e-12);
        }
        let logits = array![1.0f64, 0.0, -1.0, 2.0];
        let p: Vec<f64> = log_softmax(logits.view()).iter().map(|x| x.exp()).collect();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[sample_action(logits.view(), &mut rng).0] += 1;
        }
        for i in 0..4 {
            assert!((counts[i] as f64 / 1e5 - p[i]).abs() < 0.01, "{counts:?} vs {p:?}");
        }
        assert_eq!(argmax_action(logits.view()).0, 3);
    }

    #[test]
    fn gae_examples() {
        let (adv, ret) = compute_gae(&[0.0; 3], &[0.0; 3], &[Boundary::Continue; 3], 0.99, 1.0);
        assert_eq!((adv, ret), (vec![0.0; 3], vec![0.0; 3]));
        let ends = [Boundary::Continue, Boundary::Continue, Boundary::Terminal];
        let (adv, _) = compute_gae(&[0.0, 0.0, 199.0], &[0.0; 3], &ends, 1.0, 1.0);
        assert_eq!(adv, vec![199.0; 3]);
        let (adv, ret) = compute_gae(&[1.0], &[0.5], &[Boundary::Terminal], 0.99, 1.0);
        assert_eq!((adv[0], ret[0]), (0.5, 1.0));
        // Bootstrap and episode reset: the second segment ignores the first.
        let ends = [Boundary::Bootstrap(10.0), Boundary::Terminal];
        let (adv, _) = compute_gae(&[1.0, 2.0], &[0.0, 0.0], &ends, 0.5, 1.0);
        assert_eq!(adv, vec![6.0, 2.0]);
    }

    #[test]
    fn gae_matches_discounted_sums() {
        let rewards = [1.0, -1.0, 0.0, 3.0, -1.0, 2.0];
        let values = [0.3, -0.2, 0.5, 0.1, 0.0, 0.7];
        let ends = [
            Boundary::Continue,
            Boundary::Continue,
            Boundary::Terminal,
            Boundary::Continue,
            Boundary::Continue,
            Boundary::Bootstrap(4.0),
        ];
        let (gamma, lambda) = (0.9, 0.8);
        let (adv, _) = compute_gae(&rewards, &values, &ends, gamma, lambda);
        // Direct sum of (gamma * lambda)^k * delta_{t+k} within each episode.
        let next_v = [values[1], values[2], 0.0, values[4], values[5], 4.0];
        let delta: Vec<f64> = (0..6).map(|t| rewards[t] + gamma * next_v[t] - values[t]).collect();
        for (t, a) in adv.iter().enumerate() {
            let end = if t < 3 { 3 } else { 6 };
            let direct: f64 = (t..end).map(|k| (gamma * lambda).powi((k - t) as i32) * delta[k]).sum();
            assert!((a - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn clipping_rule() {
        assert_eq!(clipped_objective(2.0, 1.0, 0.3), (1.3, false));
        assert_eq!(clipped_objective(1.0, 5.0, 0.3), (5.0, true));
        assert_eq!(clipped_objective(0.5, -2.0, 0.3), (-1.4, false));
        // Below the range with A > 0 the unclipped term is the smaller one.
        assert_eq!(clipped_objective(0.5, 2.0, 0.3), (1.0, true));
        for &(r, a) in &[(0.2, 1.0), (1.7, -3.0), (1.1, 0.4), (3.0, 2.0)] {
            let (obj, _) = clipped_objective(r, a, 0.3);
            assert!(obj <= r * a);
        }
    }

    #[test]
    fn normalization() {
        let v = normalize(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(v.iter().sum::<f64>().abs() < 1e-12);
        assert!((v.iter().map(|x| x * x).sum::<f64>() / 4.0 - 1.0).abs() < 1e-12);
        assert_eq!(normalize(vec![2.0, 2.0]), vec![2.0, 2.0]);
    }

    fn tiny_config() -> PpoConfig {
        PpoConfig {
            batch_size: 64,
            minibatch_size: 16,
            epochs: 2,
            workers: 2,
            seed: 5,
            ..PpoConfig::default()
        }
    }

    #[test]
    fn rollout_shapes_and_determinism() {
        let mut a = Trainer::new(mini3(), tiny_config()).unwrap();
        let (batch, _) = a.collect().unwrap();
        assert_eq!(batch.len(), 64);
        assert_eq!(batch.obs.layout.dim(), (64, 85));
        assert_eq!(batch.obs.context.dim(), (64, 12));
        assert!(!batch.ends.contains(&Boundary::Continue) || batch.ends[31] != Boundary::Continue);
        assert!(matches!(batch.ends[31], Boundary::Bootstrap(_) | Boundary::Terminal));
        let row_a = a.iterate().unwrap();
        let mut b = Trainer::new(mini3(), tiny_config()).unwrap();
        b.collect().unwrap();
        assert_eq!(b.iterate().unwrap().csv_line(), row_a.csv_line());
    }

    #[test]
    fn unchanged_policy_has_unit_ratios() {
        let mut trainer = Trainer::new(mini3(), tiny_config()).unwrap();
        let (batch, _) = trainer.collect().unwrap();
        let idx: Vec<usize> = (0..16).collect();
        let obs = batch.obs.select(&idx);
        let mb = Minibatch {
            obs: &obs,
            actions: &batch.actions[..16],
            old_logp: &batch.logp[..16],
            advantages: &batch.advantages[..16],
            returns: &batch.returns[..16],
        };
        let cfg = PpoConfig {
            entropy_coef: 0.0,
            value_coef: 0.0,
            ..tiny_config()
        };
        let stats = ppo_loss(trainer.net(), &mb, &cfg).unwrap();
        let mean_adv = batch.advantages[..16].iter().sum::<f64>() / 16.0;
        assert!((stats.policy_loss + mean_adv).abs() < 1e-5);
        assert!(stats.approx_kl.abs() < 1e-6);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let trainer = Trainer::new(mini3(), tiny_config()).unwrap();
        let path = dir.path().join("c.lpck");
        let ck = trainer.checkpoint();
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        ck.check_scenario(&mini3()).unwrap();
        let big = crate::scenario::builtin_scenario("scenario1").unwrap();
        assert!(ck.check_scenario(&big).is_err());

        fs::write(&path, b"nonsense").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(PpoError::Checkpoint(_))));
    }

    #[test]
    fn train_writes_rows_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PpoConfig {
            checkpoint_every: 1,
            ..tiny_config()
        };
        let out = train(&mini3(), &cfg, 100, dir.path(), |_| {}).unwrap();
        assert_eq!(out.rows.len(), 2);
        let text = fs::read_to_string(&out.metrics_path).unwrap();
        assert_eq!(text.lines().next(), Some(METRICS_HEADER));
        assert_eq!(text.lines().count(), 3);
        let lines = |rows: &[MetricsRow]| rows.iter().map(MetricsRow::csv_line).collect::<Vec<_>>();
        assert_eq!(lines(&read_metrics(&out.metrics_path).unwrap()), lines(&out.rows));
        let names: Vec<_> = out.checkpoints.iter().map(|p| p.file_name().unwrap().to_owned()).collect();
        assert_eq!(names, vec!["checkpoint-00001.lpck", "final.lpck"]);
    }

    #[test]
    fn evaluation_summaries() {
        let trainer = Trainer::new(mini3(), tiny_config()).unwrap();
        let eval = |actor| evaluate(actor, &mini3(), EnvConfig::default(), 3, 9).unwrap();
        let a = eval(Actor::Policy(trainer.net(), EvalMode::Sample));
        let b = eval(Actor::Policy(trainer.net(), EvalMode::Sample));
        assert_eq!(a.summary, b.summary);
        assert!(a.summary.reward_identity);
        assert!(a.summary.len_mean >= 2.0);
        let r = eval(Actor::Uniform);
        assert_eq!(r.traces.len(), 3);
        assert_eq!(r.summary.truncated + r.summary.missed_hist.values().sum::<usize>(), 3);
    }
}
