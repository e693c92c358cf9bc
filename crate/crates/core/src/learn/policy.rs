use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::dist::{self, raw_for_log_std, Action, ActionSpec};
use super::gae::gae;
use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::rng::Rng64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Ppo,
    A2c,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub algo: Algo,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Ratio clip; ignored by A2C.
    pub clip: f64,
    pub entropy_coef: f64,
    pub rollout_len: usize,
    /// Minibatch size; a value at least the rollout length means one batch.
    pub batch_size: usize,
    pub epochs: usize,
    pub max_grad_norm: Option<f64>,
    pub normalize_adv: bool,
    pub hidden: Vec<usize>,
    pub episodes: usize,
    /// Initial log-std of the continuous heads.
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self::up_ppo()
    }
}

impl PpoConfig {
    pub fn up_ppo() -> Self {
        Self {
            algo: Algo::Ppo,
            actor_lr: 2e-4,
            critic_lr: 3e-4,
            gamma: 0.99,
            lambda: 0.92,
            clip: 0.15,
            entropy_coef: 0.004,
            rollout_len: 96,
            batch_size: 32,
            epochs: 4,
            max_grad_norm: Some(0.5),
            normalize_adv: true,
            hidden: vec![256, 256],
            episodes: 2000,
            init_log_std: -0.5,
        }
    }

    pub fn low_ppo() -> Self {
        Self {
            actor_lr: 7e-5,
            critic_lr: 1e-4,
            gamma: 0.996,
            lambda: 0.95,
            clip: 0.05,
            entropy_coef: 0.001,
            rollout_len: 512,
            batch_size: 512,
            ..Self::up_ppo()
        }
    }

    pub fn low_a2c() -> Self {
        Self {
            algo: Algo::A2c,
            actor_lr: 1e-5,
            critic_lr: 5e-5,
            gamma: 0.996,
            lambda: 0.95,
            clip: f64::INFINITY,
            entropy_coef: 0.001,
            rollout_len: 64,
            batch_size: 64,
            epochs: 1,
            ..Self::up_ppo()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return bad("gamma and lambda must lie in [0, 1]");
        }
        if self.rollout_len == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("rollout_len, batch_size and epochs must be positive");
        }
        if self.hidden.is_empty() {
            return bad("at least one hidden layer is required");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        Ok(())
    }
}

/// One transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: Action,
    pub logp: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutBuffer {
    pub samples: Vec<Sample>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub finalized: bool,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, s: Sample) {
        self.finalized = false;
        self.samples.push(s);
    }

    pub fn finalize(&mut self, last_value: f64, gamma: f64, lambda: f64) -> Result<()> {
        let r: Vec<f64> = self.samples.iter().map(|s| s.reward).collect();
        let v: Vec<f64> = self.samples.iter().map(|s| s.value).collect();
        let d: Vec<bool> = self.samples.iter().map(|s| s.done).collect();
        let (a, ret) = gae(&r, &v, &d, last_value, gamma, lambda)?;
        self.advantages = a;
        self.returns = ret;
        self.finalized = true;
        Ok(())
    }

    pub fn clear(&mut self) {
        self.samples.clear();
        self.advantages.clear();
        self.returns.clear();
        self.finalized = false;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
    /// Largest `|ratio - 1|` in the first minibatch of the first epoch.
    pub first_ratio_dev: f64,
    pub adv_normalized: bool,
    pub grad_clipped: bool,
    pub minibatches: usize,
}

/// Actor-critic pair with its optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub spec: ActionSpec,
    pub obs_dim: usize,
    pub actor: Mlp,
    pub critic: Mlp,
    pub opt_actor: Adam,
    pub opt_critic: Adam,
    pub updates: u64,
}

impl Policy {
    pub fn new(obs_dim: usize, spec: ActionSpec, hidden: &[usize], init_log_std: f64, seed: u64) -> Self {
        let mut rng = Rng64::derive(seed, 0xac7);
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        let mut a_sizes = sizes.clone();
        a_sizes.push(spec.out_dim());
        let mut c_sizes = sizes;
        c_sizes.push(1);
        let mut actor = Mlp::new(&a_sizes, 0.01, &mut rng);
        let critic = Mlp::new(&c_sizes, 1.0, &mut rng);
        let raw = raw_for_log_std(init_log_std);
        let last = actor.layers.last_mut().expect("actor has layers");
        let nl = spec.n_logits();
        for j in 0..spec.n_cont {
            last.b[nl + spec.n_cont + j] = raw;
        }
        let opt_actor = Adam::new(&actor);
        let opt_critic = Adam::new(&critic);
        Self {
            spec,
            obs_dim,
            actor,
            critic,
            opt_actor,
            opt_critic,
            updates: 0,
        }
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.obs_dim {
            return Err(Error::Shape {
                expected: self.obs_dim,
                got: state.len(),
            });
        }
        Ok(())
    }

    /// Actor head outputs and value for one state.
    pub fn forward(&self, state: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_state(state)?;
        Ok((self.actor.forward_one(state), self.critic.forward_one(state)[0]))
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        self.check_state(state)?;
        Ok(self.critic.forward_one(state)[0])
    }

    /// Samples (or takes the mode of) the action distribution.
    pub fn act(&self, state: &[f64], mask: &[bool], rng: &mut Rng64, greedy: bool) -> Result<(Action, f64, f64)> {
        self.spec.check_mask(mask)?;
        let (out, value) = self.forward(state)?;
        let action = dist::sample(&self.spec, &out, mask, rng, greedy);
        let logp = dist::evaluate(&self.spec, &out, mask, &action, None).logp;
        Ok((action, logp, value))
    }

    /// Updates both networks from a finalized buffer.
    pub fn update(&mut self, buf: &RolloutBuffer, cfg: &PpoConfig, rng: &mut Rng64) -> Result<UpdateStats> {
        if !buf.finalized {
            return Err(Error::State("rollout buffer not finalized".into()));
        }
        let n = buf.len();
        if n == 0 {
            return Err(Error::State("rollout buffer is empty".into()));
        }
        let (epochs, batch) = match cfg.algo {
            Algo::Ppo => (cfg.epochs, cfg.batch_size.min(n)),
            Algo::A2c => (1, n),
        };
        let clip = match cfg.algo {
            Algo::Ppo => Some(cfg.clip),
            Algo::A2c => None,
        };
        let mut order: Vec<usize> = (0..n).collect();
        let mut stats = UpdateStats {
            adv_normalized: cfg.normalize_adv,
            ..Default::default()
        };
        for epoch in 0..epochs {
            if batch < n {
                rng.shuffle(&mut order);
            }
            for (mb, chunk) in order.chunks(batch).enumerate() {
                let samples: Vec<&Sample> = chunk.iter().map(|&i| &buf.samples[i]).collect();
                let mut adv: Vec<f64> = chunk.iter().map(|&i| buf.advantages[i]).collect();
                if cfg.normalize_adv {
                    normalize(&mut adv);
                }
                let ret: Vec<f64> = chunk.iter().map(|&i| buf.returns[i]).collect();

                let a = actor_objective(&self.actor, &self.spec, &samples, &adv, clip, cfg.entropy_coef);
                let (v_loss, mut g_critic) = critic_objective(&self.critic, &samples, &ret);
                if !a.loss.is_finite() || !v_loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at update {}, epoch {epoch}, minibatch {mb}: policy {}, value {}",
                        self.updates, a.loss, v_loss
                    )));
                }
                let mut g_actor = a.grad;
                let na = clip_grad(&mut g_actor, cfg.max_grad_norm);
                let nc = clip_grad(&mut g_critic, cfg.max_grad_norm);
                stats.grad_clipped |= na.1 || nc.1;
                self.opt_actor.apply(&mut self.actor, &g_actor, cfg.actor_lr);
                self.opt_critic.apply(&mut self.critic, &g_critic, cfg.critic_lr);

                if epoch == 0 && mb == 0 {
                    stats.first_ratio_dev = a.max_ratio_dev;
                }
                stats.policy_loss += a.loss;
                stats.value_loss += v_loss;
                stats.entropy += a.entropy;
                stats.clip_frac += a.clip_frac;
                stats.approx_kl += a.approx_kl;
                stats.actor_grad_norm += na.0;
                stats.critic_grad_norm += nc.0;
                stats.minibatches += 1;
            }
        }
        let k = stats.minibatches as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
        stats.clip_frac /= k;
        stats.approx_kl /= k;
        stats.actor_grad_norm /= k;
        stats.critic_grad_norm /= k;
        if !self.actor.is_finite() || !self.critic.is_finite() {
            return Err(Error::Numeric(format!("non-finite parameters after update {}", self.updates)));
        }
        self.updates += 1;
        Ok(stats)
    }
}

fn normalize(x: &mut [f64]) {
    let n = x.len();
    if n < 2 {
        return;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    for v in x.iter_mut() {
        *v = (*v - mean) / (sd + 1e-8);
    }
}

/// Scales `g` to at most `max` global norm; returns (pre-clip norm, clipped).
fn clip_grad(g: &mut Mlp, max: Option<f64>) -> (f64, bool) {
    let norm = g.sq_norm().sqrt();
    match max {
        Some(m) if norm > m => {
            g.scale(m / norm);
            (norm, true)
        }
        _ => (norm, false),
    }
}

pub struct ActorObjective {
    pub loss: f64,
    pub grad: Mlp,
    pub entropy: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
    pub max_ratio_dev: f64,
}

fn stack(samples: &[&Sample], dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((samples.len(), dim), |(r, c)| samples[r].state[c])
}

/// Mean clipped-surrogate loss minus entropy bonus, with exact gradient.
///
/// With `clip = None` the loss is the plain policy-gradient
/// `-A log pi - c H`.
pub fn actor_objective(
    actor: &Mlp,
    spec: &ActionSpec,
    samples: &[&Sample],
    adv: &[f64],
    clip: Option<f64>,
    ent_coef: f64,
) -> ActorObjective {
    let b = samples.len() as f64;
    let x = stack(samples, actor.n_in());
    let (out, cache) = actor.forward_cached(&x);
    let mut d_out = Array2::<f64>::zeros(out.dim());
    let mut loss = 0.0;
    let mut entropy = 0.0;
    let mut clipped = 0usize;
    let mut kl = 0.0;
    let mut max_dev: f64 = 0.0;
    for (r, s) in samples.iter().enumerate() {
        let o = out.row(r).to_vec();
        let ev = dist::evaluate(spec, &o, &s.mask, &s.action, None);
        let a = adv[r];
        let (per, c_lp) = match clip {
            None => (-a * ev.logp, -a),
            Some(eps) => {
                let ratio = (ev.logp - s.logp).exp();
                max_dev = max_dev.max((ratio - 1.0).abs());
                kl += s.logp - ev.logp;
                let unclipped = ratio * a;
                let clipped_v = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
                if unclipped <= clipped_v {
                    (-unclipped, -a * ratio)
                } else {
                    clipped += 1;
                    (-clipped_v, 0.0)
                }
            }
        };
        loss += (per - ent_coef * ev.entropy) / b;
        entropy += ev.entropy / b;
        let mut g = vec![0.0; o.len()];
        dist::evaluate(spec, &o, &s.mask, &s.action, Some((&mut g, c_lp / b, -ent_coef / b)));
        for (c, v) in g.into_iter().enumerate() {
            d_out[[r, c]] = v;
        }
    }
    let grad = actor.backward(&cache, &d_out);
    ActorObjective {
        loss,
        grad,
        entropy,
        clip_frac: clipped as f64 / b,
        approx_kl: kl / b,
        max_ratio_dev: max_dev,
    }
}

/// Mean squared value error and its gradient.
pub fn critic_objective(critic: &Mlp, samples: &[&Sample], returns: &[f64]) -> (f64, Mlp) {
    let b = samples.len() as f64;
    let x = stack(samples, critic.n_in());
    let (v, cache) = critic.forward_cached(&x);
    let mut d = Array2::<f64>::zeros(v.dim());
    let mut loss = 0.0;
    for r in 0..samples.len() {
        let e = v[[r, 0]] - returns[r];
        loss += e * e / b;
        d[[r, 0]] = 2.0 * e / b;
    }
    (loss, critic.backward(&cache, &d))
}
