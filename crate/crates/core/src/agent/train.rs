use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::action::{interpret_allocation, Action};
use super::nn::Adam;
use super::policy::{Encoder, Observation, PolicyNet, ValueNet};
use super::ppo::{log_prob, ppo_update, ActionMask, PpoConfig, Transition, UpdateDiagnostics};
use crate::airspace::Channel;
use crate::error::{Result, SimError};
use crate::latency::RoundPlan;
use crate::paradigms::{simulate_round, Paradigm, RoundOutcome};
use crate::profiles::Scenario;

/// Centered moving-average window of the training log.
pub const MOVING_AVERAGE_SPAN: usize = 21;

/// Agent variants compared in the training study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Attention features, decides split and allocation.
    Full,
    /// Final-slot distances instead of attention features.
    Minus,
    /// Decides the split only; shares stay at `1/K`.
    FixedRa,
    /// Decides the allocation only; the split stays at the given value.
    FixedU(u32),
}

impl Variant {
    pub fn mask(self) -> ActionMask {
        ActionMask {
            split: !matches!(self, Variant::FixedU(_)),
            allocation: !matches!(self, Variant::FixedRa),
        }
    }

    /// File-name safe form, e.g. `fixed_u2`.
    pub fn slug(self) -> String {
        match self {
            Variant::FixedU(u) => format!("fixed_u{u}"),
            v => v.to_string(),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Full => f.write_str("full"),
            Variant::Minus => f.write_str("minus"),
            Variant::FixedRa => f.write_str("fixed_ra"),
            Variant::FixedU(u) => write!(f, "fixed_u({u})"),
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    /// Accepts `full`, `minus`, `fixed_ra`, `fixed_u(N)` and `fixed_u=N`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim().to_ascii_lowercase().replace('-', "_");
        match t.as_str() {
            "full" => Ok(Variant::Full),
            "minus" => Ok(Variant::Minus),
            "fixed_ra" => Ok(Variant::FixedRa),
            _ => t
                .strip_prefix("fixed_u")
                .map(|r| r.trim_start_matches(['(', '=']).trim_end_matches(')'))
                .and_then(|n| n.parse().ok())
                .map(Variant::FixedU)
                .ok_or_else(|| format!("unknown agent variant `{s}`")),
        }
    }
}

/// Serialized form of a ChaCha8 stream position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Action taken in the previous round, waiting for its successor observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Pending {
    obs: Observation,
    action: Action,
    log_prob: f64,
    reward: f64,
}

/// PPO agent choosing the split point and resource shares of each round.
#[derive(Debug, Clone)]
pub struct Agent {
    pub variant: Variant,
    pub config: PpoConfig,
    pub policy: PolicyNet,
    pub value: ValueNet,
    opt_policy: Adam,
    opt_value: Adam,
    rng: ChaCha8Rng,
    buffer: Vec<Transition>,
    pending: Option<Pending>,
    splits: Vec<u32>,
    alpha_min: f64,
    beta_min: f64,
    with_rho: bool,
    last_update: Option<UpdateDiagnostics>,
    updates: usize,
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    variant: Variant,
    config: PpoConfig,
    policy: PolicyNet,
    value: ValueNet,
    opt_policy: Adam,
    opt_value: Adam,
    rng: RngState,
    buffer: Vec<Transition>,
    pending: Option<Pending>,
    splits: Vec<u32>,
    alpha_min: f64,
    beta_min: f64,
    with_rho: bool,
    last_update: Option<UpdateDiagnostics>,
    updates: usize,
}

fn adam_for(lr: f64, params: Vec<&[f64]>) -> Adam {
    Adam::new(lr, &params.iter().map(|p| p.len()).collect::<Vec<_>>())
}

impl Agent {
    pub fn new(scenario: &Scenario, paradigm: Paradigm, variant: Variant, config: PpoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let splits = scenario.config.split_set.clone();
        if let Variant::FixedU(u) = variant {
            if !splits.contains(&u) {
                return Err(SimError::InvalidPlan(format!("fixed split {u} not in the allowed set")));
            }
        }
        let k = scenario.k();
        let flat = variant == Variant::Minus;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p_enc = Encoder::new(splits.clone(), k, flat, config.d_s, config.h, &mut rng);
        let policy = PolicyNet::new(p_enc, config.hidden, config.init_log_std, &mut rng);
        let v_enc = Encoder::new(splits.clone(), k, flat, config.d_s, config.h, &mut rng);
        let value = ValueNet::new(v_enc, config.hidden, &mut rng);
        Ok(Agent {
            opt_policy: adam_for(config.lr_policy, policy.params()),
            opt_value: adam_for(config.lr_value, value.params()),
            variant,
            policy,
            value,
            rng,
            buffer: Vec::with_capacity(config.buffer_size),
            pending: None,
            splits,
            alpha_min: scenario.server.alpha_min,
            beta_min: scenario.server.beta_min,
            with_rho: paradigm.needs_rho(),
            last_update: None,
            updates: 0,
            config,
        })
    }

    /// Uniform shares and the fixed or lower-median split.
    pub fn bootstrap_plan(&self) -> RoundPlan {
        let k = self.policy.encoder.clients;
        let split = match self.variant {
            Variant::FixedU(u) => u,
            _ => {
                let mut s = self.splits.clone();
                s.sort_unstable();
                s[(s.len() - 1) / 2]
            }
        };
        RoundPlan::uniform(k, split, self.with_rho)
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn last_update(&self) -> Option<UpdateDiagnostics> {
        self.last_update
    }

    /// Samples an action for `obs`; returns it with its log-probability.
    pub fn act(&mut self, obs: &Observation) -> Result<(Action, f64)> {
        let (out, _) = self.policy.forward(obs)?;
        let mask = self.variant.mask();
        let split_index = match self.variant {
            Variant::FixedU(u) => self.splits.iter().position(|&s| s == u).expect("checked at construction"),
            _ => {
                let draw: f64 = self.rng.random();
                let mut acc = 0.0;
                let last = out.split_probs.len() - 1;
                out.split_probs
                    .iter()
                    .position(|p| {
                        acc += p;
                        draw < acc
                    })
                    .unwrap_or(last)
            }
        };
        let gaussian = |mu: &[f64], log_std: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
            mu.iter()
                .map(|m| m + log_std.exp() * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let (z_alpha, z_beta) = if mask.allocation {
            let a = gaussian(&out.mu_alpha, out.log_std[0], &mut self.rng);
            let b = gaussian(&out.mu_beta, out.log_std[1], &mut self.rng);
            (Some(a), Some(b))
        } else {
            (None, None)
        };
        let action = Action {
            split_index,
            z_alpha,
            z_beta,
        };
        let lp = log_prob(&out, &action, mask);
        Ok((action, lp))
    }

    /// Maps a sampled action onto a feasible plan. Parallel-downlink
    /// paradigms reuse the bandwidth shares as power shares.
    pub fn plan_for(&self, action: &Action, round: usize) -> RoundPlan {
        let k = self.policy.encoder.clients;
        let mut plan = RoundPlan::uniform(k, self.splits[action.split_index], self.with_rho).with_round(round);
        if let (Some(za), Some(zb)) = (&action.z_alpha, &action.z_beta) {
            plan.alpha = interpret_allocation(za, self.alpha_min);
            plan.beta = interpret_allocation(zb, self.beta_min);
            if self.with_rho {
                plan.rho = Some(plan.beta.clone());
            }
        }
        plan
    }

    /// Stores the transition that ends at `obs`, updates on a full buffer and
    /// returns the action for the coming round.
    pub fn step(&mut self, obs: Observation, round: usize) -> Result<(RoundPlan, Action, f64)> {
        if let Some(p) = self.pending.take() {
            self.buffer.push(Transition {
                obs: p.obs,
                action: p.action,
                log_prob: p.log_prob,
                reward: p.reward / self.config.reward_scale,
                next_obs: obs.clone(),
            });
        }
        if self.buffer.len() == self.config.buffer_size {
            let d = ppo_update(
                &mut self.policy,
                &mut self.value,
                &mut self.opt_policy,
                &mut self.opt_value,
                &mut self.buffer,
                self.variant.mask(),
                &self.config,
            )?;
            self.last_update = Some(d);
            self.updates += 1;
        }
        let (action, lp) = self.act(&obs)?;
        let plan = self.plan_for(&action, round);
        Ok((plan, action, lp))
    }

    /// Records the reward of the action most recently returned by [`Agent::step`].
    pub fn observe_reward(&mut self, obs: Observation, action: Action, log_prob: f64, reward: f64) {
        self.pending = Some(Pending {
            obs,
            action,
            log_prob,
            reward,
        });
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        let c = Checkpoint {
            version: CHECKPOINT_VERSION,
            variant: self.variant,
            config: self.config.clone(),
            policy: self.policy.clone(),
            value: self.value.clone(),
            opt_policy: self.opt_policy.clone(),
            opt_value: self.opt_value.clone(),
            rng: RngState::capture(&self.rng),
            buffer: self.buffer.clone(),
            pending: self.pending.clone(),
            splits: self.splits.clone(),
            alpha_min: self.alpha_min,
            beta_min: self.beta_min,
            with_rho: self.with_rho,
            last_update: self.last_update,
            updates: self.updates,
        };
        Ok(serde_json::to_string(&c)?)
    }

    pub fn from_checkpoint_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(SimError::Dimension(format!("unsupported checkpoint version {}", c.version)));
        }
        Ok(Agent {
            variant: c.variant,
            config: c.config,
            policy: c.policy,
            value: c.value,
            opt_policy: c.opt_policy,
            opt_value: c.opt_value,
            rng: c.rng.restore(),
            buffer: c.buffer,
            pending: c.pending,
            splits: c.splits,
            alpha_min: c.alpha_min,
            beta_min: c.beta_min,
            with_rho: c.with_rho,
            last_update: c.last_update,
            updates: c.updates,
        })
    }
}

/// Builds the observation of the round after `prev` from its plan, outcome
/// and the client trajectories over its slots.
pub fn observe(prev: &RoundOutcome, channel: &dyn Channel) -> Result<Observation> {
    let slot = channel.slot_s();
    let first = (prev.trace.t_start / slot).floor() as u64;
    let last = ((prev.trace.t_end / slot).floor() as u64).max(first);
    let trajectories = (0..channel.clients())
        .map(|k| {
            (first..=last)
                .map(|s| {
                    channel
                        .chi(k, s)
                        .ok_or_else(|| SimError::MissingStep(format!("position of client {k} at slot {s}")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Observation {
        split: prev.plan.split,
        alpha: prev.plan.alpha.clone(),
        beta: prev.plan.beta.clone(),
        energy: prev.energies.clone(),
        tau: prev.tau(),
        trajectories,
    })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub tau_s: f64,
    #[serde(rename = "max_energy_J")]
    pub max_energy_j: f64,
    pub objective: f64,
    pub reward: f64,
    pub u: u32,
    pub ma_objective: f64,
    pub policy_loss: Option<f64>,
    pub value_loss: Option<f64>,
    pub kl: Option<f64>,
    pub clip_fraction: Option<f64>,
}

/// Per-round outcomes of one training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<RoundRecord>,
}

impl TrainingLog {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }

    /// Mean objective over the last `n` rounds.
    pub fn tail_mean_objective(&self, n: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        tail.iter().map(|r| r.objective).sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Centered moving average of width `span`, truncated at both ends.
pub fn moving_average(x: &[f64], span: usize) -> Vec<f64> {
    let half = span / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Runs `rounds` back-to-back rounds of `paradigm`, with the agent deciding
/// from round 1 on. Round 0 uses the bootstrap plan. Without an agent every
/// round uses uniform shares and the given split.
pub fn run_training_loop(
    scenario: &Scenario,
    paradigm: Paradigm,
    mut agent: Option<&mut Agent>,
    baseline_split: u32,
    channel: &dyn Channel,
    rounds: usize,
) -> Result<TrainingLog> {
    let mut log = TrainingLog::default();
    let mut prev: Option<RoundOutcome> = None;
    let mut t = 0.0;
    for n in 0..rounds {
        let mut decided = None;
        let plan = match (&mut agent, &prev) {
            (Some(a), Some(p)) => {
                let obs = observe(p, channel)?;
                channel.release_before((p.trace.t_start / channel.slot_s()).floor() as u64);
                let (plan, action, lp) = a.step(obs.clone(), n)?;
                decided = Some((obs, action, lp));
                plan
            }
            (Some(a), None) => a.bootstrap_plan().with_round(n),
            (None, _) => {
                if let Some(p) = &prev {
                    channel.release_before((p.trace.t_start / channel.slot_s()).floor() as u64);
                }
                RoundPlan::uniform(scenario.k(), baseline_split, paradigm.needs_rho()).with_round(n)
            }
        };
        let o = simulate_round(paradigm, &plan, scenario, channel, t)?;
        t = o.trace.t_end;
        let reward = -o.objective;
        let diag = agent.as_ref().and_then(|a| a.last_update());
        if let (Some(a), Some((obs, action, lp))) = (&mut agent, decided) {
            a.observe_reward(obs, action, lp, reward);
        }
        log.records.push(RoundRecord {
            round: n,
            tau_s: o.tau(),
            max_energy_j: o.max_energy,
            objective: o.objective,
            reward,
            u: o.plan.split,
            ma_objective: 0.0,
            policy_loss: diag.map(|d| d.policy_loss),
            value_loss: diag.map(|d| d.value_loss),
            kl: diag.map(|d| d.kl),
            clip_fraction: diag.map(|d| d.clip_fraction),
        });
        prev = Some(o);
    }
    let ma = moving_average(&log.objectives(), MOVING_AVERAGE_SPAN);
    for (r, m) in log.records.iter_mut().zip(ma) {
        r.ma_objective = m;
    }
    Ok(log)
}
