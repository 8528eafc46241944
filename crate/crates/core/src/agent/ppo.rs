use serde::{Deserialize, Serialize};

use super::action::Action;
use super::nn::Adam;
use super::policy::{Observation, PolicyNet, PolicyOutput, PolicyOutputGrad, ValueNet};
use crate::error::{Result, SimError};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// PPO and network hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub lr_policy: f64,
    pub lr_value: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub buffer_size: usize,
    pub entropy_coef: f64,
    /// Rewards are divided by this before entering the update.
    pub reward_scale: f64,
    pub init_log_std: f64,
    pub d_s: usize,
    pub h: usize,
    pub hidden: [usize; 3],
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            lr_policy: 3e-4,
            lr_value: 3e-4,
            gamma: 0.5,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            buffer_size: 12,
            entropy_coef: 0.01,
            reward_scale: 100.0,
            init_log_std: -2.0,
            d_s: 8,
            h: 16,
            hidden: [128, 64, 32],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr_policy, self.lr_value, self.clip, self.reward_scale];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || !(0.0..=1.0).contains(&self.gamma)
            || !(0.0..=1.0).contains(&self.gae_lambda)
            || self.epochs == 0
            || self.buffer_size == 0
            || self.d_s == 0
            || self.h == 0
            || self.hidden.contains(&0)
        {
            return Err(SimError::InvalidPlan(format!("invalid PPO configuration {self:?}")));
        }
        Ok(())
    }
}

/// Which action parts the policy decides; the rest are held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMask {
    pub split: bool,
    pub allocation: bool,
}

/// `log pi(a | o)` restricted to the decided parts.
pub fn log_prob(out: &PolicyOutput, a: &Action, mask: ActionMask) -> f64 {
    let mut lp = 0.0;
    if mask.split {
        lp += out.split_probs[a.split_index].max(f64::MIN_POSITIVE).ln();
    }
    if mask.allocation {
        for (z, mu, ls) in allocation_parts(out, a) {
            lp += z.iter().zip(mu).map(|(z, m)| gaussian_log_density(*z, *m, ls)).sum::<f64>();
        }
    }
    lp
}

/// Entropy of the decided parts.
pub fn entropy(out: &PolicyOutput, mask: ActionMask) -> f64 {
    let mut h = 0.0;
    if mask.split {
        h -= out.split_probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    }
    if mask.allocation {
        let k = out.mu_alpha.len() as f64;
        h += out.log_std.iter().map(|ls| k * (0.5 + 0.5 * LN_2PI + ls)).sum::<f64>();
    }
    h
}

fn allocation_parts<'a>(out: &'a PolicyOutput, a: &'a Action) -> Vec<(&'a [f64], &'a [f64], f64)> {
    let mut parts = Vec::with_capacity(2);
    if let Some(z) = &a.z_alpha {
        parts.push((z.as_slice(), out.mu_alpha.as_slice(), out.log_std[0]));
    }
    if let Some(z) = &a.z_beta {
        parts.push((z.as_slice(), out.mu_beta.as_slice(), out.log_std[1]));
    }
    parts
}

fn gaussian_log_density(z: f64, mu: f64, log_std: f64) -> f64 {
    let s = (z - mu) / log_std.exp();
    -0.5 * s * s - log_std - 0.5 * LN_2PI
}

/// Adds `w * d log pi / d out` to `g`.
pub fn add_log_prob_grad(out: &PolicyOutput, a: &Action, mask: ActionMask, w: f64, g: &mut PolicyOutputGrad) {
    if mask.split {
        for (i, (d, p)) in g.split_logits.iter_mut().zip(&out.split_probs).enumerate() {
            *d += w * (f64::from(u8::from(i == a.split_index)) - p);
        }
    }
    if mask.allocation {
        for (branch, (z, mu)) in [(0, (&a.z_alpha, &out.mu_alpha)), (1, (&a.z_beta, &out.mu_beta))] {
            let Some(z) = z else { continue };
            let var = (2.0 * out.log_std[branch]).exp();
            let dmu = if branch == 0 { &mut g.mu_alpha } else { &mut g.mu_beta };
            let mut dls = 0.0;
            for ((d, z), m) in dmu.iter_mut().zip(z).zip(mu) {
                *d += w * (z - m) / var;
                dls += (z - m) * (z - m) / var - 1.0;
            }
            g.log_std[branch] += w * dls;
        }
    }
}

/// Adds `w * d entropy / d out` to `g`.
pub fn add_entropy_grad(out: &PolicyOutput, mask: ActionMask, w: f64, g: &mut PolicyOutputGrad) {
    if mask.split {
        let h = entropy(out, ActionMask { split: true, allocation: false });
        for (d, p) in g.split_logits.iter_mut().zip(&out.split_probs) {
            if *p > 0.0 {
                *d -= w * p * (p.ln() + h);
            }
        }
    }
    if mask.allocation {
        let k = out.mu_alpha.len() as f64;
        g.log_std[0] += w * k;
        g.log_std[1] += w * k;
    }
}

/// One stored step `(o_j, a_j, r_j, o_{j+1})` with the behavior
/// log-probability of `a_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub log_prob: f64,
    /// Scaled reward.
    pub reward: f64,
    pub next_obs: Observation,
}

/// Losses and policy-shift statistics of one update, averaged over epochs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Mean of `log pi_old - log pi_new` over the batch.
    pub kl: f64,
    pub clip_fraction: f64,
}

/// Generalized advantage estimates and value targets for a contiguous
/// batch; the last step bootstraps from `V(o_{j+1})`.
pub fn gae(rewards: &[f64], values: &[f64], next_values: &[f64], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for j in (0..n).rev() {
        let delta = rewards[j] + gamma * next_values[j] - values[j];
        acc = delta + gamma * lambda * acc;
        adv[j] = acc;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, targets)
}

/// One clipped-surrogate epoch on the policy; returns `(loss, kl, clip_fraction)`.
pub fn policy_epoch(
    policy: &mut PolicyNet,
    opt: &mut Adam,
    batch: &[Transition],
    advantages: &[f64],
    mask: ActionMask,
    cfg: &PpoConfig,
) -> Result<(f64, f64, f64)> {
    let n = batch.len() as f64;
    let mut grad = policy.zeros_like();
    let (mut loss, mut kl, mut clipped) = (0.0, 0.0, 0.0);
    for (t, &adv) in batch.iter().zip(advantages) {
        let (out, cache) = policy.forward(&t.obs)?;
        let lp = log_prob(&out, &t.action, mask);
        let ratio = (lp - t.log_prob).exp();
        let clamped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let ent = entropy(&out, mask);
        loss += -(ratio * adv).min(clamped * adv) / n - cfg.entropy_coef * ent / n;
        kl += (t.log_prob - lp) / n;
        if (ratio - 1.0).abs() > cfg.clip {
            clipped += 1.0 / n;
        }
        let mut d = PolicyOutputGrad::zeros(out.split_logits.len(), out.mu_alpha.len());
        if ratio * adv <= clamped * adv {
            add_log_prob_grad(&out, &t.action, mask, -ratio * adv / n, &mut d);
        }
        add_entropy_grad(&out, mask, -cfg.entropy_coef / n, &mut d);
        policy.backward(&cache, &d, &mut grad);
    }
    if !loss.is_finite() {
        return Err(SimError::NonFinite(format!("policy loss {loss}, kl {kl}")));
    }
    opt.step(policy.params_mut(), grad.params());
    Ok((loss, kl, clipped))
}

/// One regression epoch of the value net toward `targets`; returns the loss.
pub fn value_epoch(value: &mut ValueNet, opt: &mut Adam, batch: &[Transition], targets: &[f64]) -> Result<f64> {
    let n = batch.len() as f64;
    let mut grad = value.zeros_like();
    let mut loss = 0.0;
    for (t, &target) in batch.iter().zip(targets) {
        let (v, cache) = value.forward(&t.obs)?;
        loss += 0.5 * (v - target) * (v - target) / n;
        value.backward(&cache, (v - target) / n, &mut grad);
    }
    if !loss.is_finite() {
        return Err(SimError::NonFinite(format!("value loss {loss}")));
    }
    opt.step(value.params_mut(), grad.params());
    Ok(loss)
}

/// Full PPO update on a full buffer, which is cleared afterwards.
pub fn ppo_update(
    policy: &mut PolicyNet,
    value: &mut ValueNet,
    opt_policy: &mut Adam,
    opt_value: &mut Adam,
    buffer: &mut Vec<Transition>,
    mask: ActionMask,
    cfg: &PpoConfig,
) -> Result<UpdateDiagnostics> {
    if buffer.len() != cfg.buffer_size {
        return Err(SimError::Dimension(format!(
            "update needs {} transitions, buffer holds {}",
            cfg.buffer_size,
            buffer.len()
        )));
    }
    let eval = |obs: &Observation| value.forward(obs).map(|(v, _)| v);
    let values = buffer.iter().map(|t| eval(&t.obs)).collect::<Result<Vec<_>>>()?;
    let next_values = buffer.iter().map(|t| eval(&t.next_obs)).collect::<Result<Vec<_>>>()?;
    let rewards: Vec<f64> = buffer.iter().map(|t| t.reward).collect();
    let (mut adv, targets) = gae(&rewards, &values, &next_values, cfg.gamma, cfg.gae_lambda);
    normalize(&mut adv);

    let mut d = UpdateDiagnostics::default();
    let e = cfg.epochs as f64;
    for _ in 0..cfg.epochs {
        let (pl, kl, cf) = policy_epoch(policy, opt_policy, buffer, &adv, mask, cfg)?;
        d.policy_loss += pl / e;
        d.kl += kl / e;
        d.clip_fraction += cf / e;
        d.value_loss += value_epoch(value, opt_value, buffer, &targets)? / e;
    }
    buffer.clear();
    Ok(d)
}

fn normalize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    x.iter_mut().for_each(|v| *v = (*v - mean) / (std + 1e-8));
}
