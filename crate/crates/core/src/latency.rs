//! Per-step latency, energy and lag bookkeeping for one training round.
//!
//! Compute steps are closed-form. Communication steps hand their payload and
//! a per-slot rate function to [`transmit_duration`], so a step that straddles
//! slot boundaries sees every slot's rate.

use serde::{Deserialize, Serialize};

use crate::airspace::{downlink_rate_fraction, downlink_rate_full, transmit_duration, uplink_rate, Channel};
use crate::error::{Result, SimError};
use crate::profiles::{ClientProfile, Scenario, ServerProfile, SplitProfile};

/// Split point and resource shares decided at the start of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub round: usize,
    pub split: u32,
    /// Server computing-frequency fractions.
    pub alpha: Vec<f64>,
    /// Uplink (and, for parallel downlinks, downlink) bandwidth fractions.
    pub beta: Vec<f64>,
    /// Server transmit-power fractions, only for parallel-downlink paradigms.
    pub rho: Option<Vec<f64>>,
}

const SIMPLEX_TOL: f64 = 1e-9;

impl RoundPlan {
    /// Equal shares `1/K` everywhere.
    pub fn uniform(k: usize, split: u32, with_rho: bool) -> Self {
        let share = vec![1.0 / k as f64; k];
        RoundPlan {
            round: 0,
            split,
            alpha: share.clone(),
            beta: share.clone(),
            rho: with_rho.then_some(share),
        }
    }

    pub fn with_round(mut self, round: usize) -> Self {
        self.round = round;
        self
    }

    /// Checks the split point, simplex constraints and lower bounds.
    pub fn validate(&self, scenario: &Scenario, needs_rho: bool) -> Result<()> {
        let k = scenario.k();
        if !scenario.config.split_set.contains(&self.split) {
            return Err(SimError::InvalidPlan(format!("split {} not in the allowed set", self.split)));
        }
        scenario.split(self.split)?;
        check_simplex("alpha", &self.alpha, k, scenario.server.alpha_min)?;
        check_simplex("beta", &self.beta, k, scenario.server.beta_min)?;
        match (&self.rho, needs_rho) {
            (Some(rho), true) => check_simplex("rho", rho, k, scenario.server.rho_min)?,
            (None, false) => {}
            (None, true) => return Err(SimError::InvalidPlan("paradigm needs rho".into())),
            (Some(_), false) => return Err(SimError::InvalidPlan("rho given for a sequential-downlink paradigm".into())),
        }
        Ok(())
    }
}

fn check_simplex(name: &str, v: &[f64], k: usize, min: f64) -> Result<()> {
    if v.len() != k {
        return Err(SimError::InvalidPlan(format!("{name} has {} entries, expected {k}", v.len())));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(SimError::InvalidPlan(format!("{name} sums to {sum}")));
    }
    if let Some(bad) = v.iter().find(|&&x| !(x >= min - SIMPLEX_TOL && x <= 1.0 + SIMPLEX_TOL && x > 0.0)) {
        return Err(SimError::InvalidPlan(format!("{name} entry {bad} outside [{min}, 1]")));
    }
    Ok(())
}

pub fn client_fp_latency(batch: usize, profile: &SplitProfile, client: &ClientProfile) -> f64 {
    batch as f64 * profile.psi_cf / client.flops_per_s()
}

pub fn client_bp_latency(batch: usize, profile: &SplitProfile, client: &ClientProfile) -> f64 {
    batch as f64 * profile.psi_cb / client.flops_per_s()
}

/// Server FP+BP for one client holding fraction `alpha` of the server.
pub fn server_compute_latency(batch: usize, profile: &SplitProfile, server: &ServerProfile, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(SimError::InvalidPlan(format!("server fraction {alpha} must be positive")));
    }
    Ok(batch as f64 * (profile.psi_sf + profile.psi_sb) / (server.flops_per_s() * alpha))
}

/// The four transmission steps of a round, plus the fractional-downlink
/// variant of the gradient step used by parallel-downlink paradigms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommKind {
    BroadcastTp,
    SmashedUp,
    GradientDownFull,
    GradientDownFraction,
    TpUp,
}

/// Everything a communication step needs to know about the round.
pub struct LinkContext<'a> {
    pub scenario: &'a Scenario,
    pub plan: &'a RoundPlan,
    pub channel: &'a dyn Channel,
}

impl LinkContext<'_> {
    fn profile(&self) -> Result<&SplitProfile> {
        Ok(self.scenario.split(self.plan.split)?)
    }

    /// Payload of a step in bits.
    pub fn payload_bits(&self, kind: CommKind) -> Result<f64> {
        let p = self.profile()?;
        let b = self.scenario.config.batch_size as f64;
        Ok(match kind {
            CommKind::BroadcastTp | CommKind::TpUp => p.gamma_m,
            CommKind::SmashedUp => b * p.gamma_a,
            CommKind::GradientDownFull | CommKind::GradientDownFraction => b * p.gamma_g,
        })
    }

    /// Instantaneous rate of client `k` under gain `h`.
    pub fn rate(&self, kind: CommKind, k: usize, h: f64) -> Result<f64> {
        let s = &self.scenario.server;
        Ok(match kind {
            CommKind::SmashedUp | CommKind::TpUp => {
                let client = &self.scenario.clients[k];
                uplink_rate(self.plan.beta[k] * s.uplink_bw, client.transmit_power, h, s.noise_psd)
            }
            CommKind::BroadcastTp | CommKind::GradientDownFull => downlink_rate_full(s.downlink_bw, s.total_power, h, s.noise_psd),
            CommKind::GradientDownFraction => {
                let rho = self
                    .plan
                    .rho
                    .as_ref()
                    .ok_or_else(|| SimError::InvalidPlan("fractional downlink without rho".into()))?;
                downlink_rate_fraction(self.plan.beta[k], rho[k], s.downlink_bw, s.total_power, h, s.noise_psd)
            }
        })
    }
}

/// Duration of communication step `kind` for client `k` starting at `t_start`.
pub fn comm_step_latency(kind: CommKind, ctx: &LinkContext<'_>, k: usize, t_start: f64) -> Result<f64> {
    let bits = ctx.payload_bits(kind)?;
    if let Some(h) = ctx.channel.constant_gain(k) {
        let r = ctx.rate(kind, k, h)?;
        if r <= 0.0 {
            return Err(SimError::NonTerminating {
                bits,
                t_start,
                slots: 0,
            });
        }
        return Ok(bits / r);
    }
    // rate is validated lazily inside the walk
    let mut err = None;
    let d = transmit_duration(
        bits,
        |slot| {
            let h = ctx.channel.gain(k, slot)?;
            match ctx.rate(kind, k, h) {
                Ok(r) => Some(r),
                Err(e) => {
                    err = Some(e);
                    None
                }
            }
        },
        t_start,
        ctx.channel.slot_s(),
    );
    match err {
        Some(e) => Err(e),
        None => d,
    }
}

/// Which energy expression a step uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyKind {
    Forward,
    Backward,
    SmashedUp,
    TpUp,
}

/// Client energy of one step lasting `duration` seconds.
pub fn step_energy(kind: EnergyKind, duration: f64, client: &ClientProfile) -> f64 {
    match kind {
        EnergyKind::Forward | EnergyKind::Backward => client.compute_power() * duration,
        EnergyKind::SmashedUp | EnergyKind::TpUp => client.transmit_power * duration,
    }
}

/// Realized durations of every step of a round, per client and iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientSteps {
    pub sm: Option<f64>,
    pub cf: Vec<Option<f64>>,
    pub ca: Vec<Option<f64>>,
    pub s: Vec<Option<f64>>,
    pub sg: Vec<Option<f64>>,
    pub cb: Vec<Option<f64>>,
    pub cm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLatencies {
    pub clients: Vec<ClientSteps>,
}

impl StepLatencies {
    pub fn new(k: usize, iterations: usize) -> Self {
        let blank = ClientSteps {
            sm: None,
            cf: vec![None; iterations],
            ca: vec![None; iterations],
            s: vec![None; iterations],
            sg: vec![None; iterations],
            cb: vec![None; iterations],
            cm: None,
        };
        StepLatencies {
            clients: vec![blank; k],
        }
    }

    pub fn iterations(&self) -> usize {
        self.clients.first().map_or(0, |c| c.cf.len())
    }

    /// Mean over iterations of one per-iteration step, for every client.
    pub fn mean_per_client(&self, pick: impl Fn(&ClientSteps) -> &Vec<Option<f64>>) -> Result<Vec<f64>> {
        self.clients
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let v = pick(c);
                let mut sum = 0.0;
                for (i, x) in v.iter().enumerate() {
                    sum += x.ok_or_else(|| SimError::MissingStep(format!("client {k} iteration {i}")))?;
                }
                Ok(sum / v.len() as f64)
            })
            .collect()
    }

    pub fn all_nonnegative(&self) -> bool {
        self.clients.iter().all(|c| {
            let per_iter = [&c.cf, &c.ca, &c.s, &c.sg, &c.cb];
            c.sm.is_none_or(|x| x >= 0.0 && x.is_finite())
                && c.cm.is_none_or(|x| x >= 0.0 && x.is_finite())
                && per_iter.iter().all(|v| v.iter().flatten().all(|x| *x >= 0.0 && x.is_finite()))
        })
    }
}

/// Per-client energy components of a round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientEnergy {
    pub e_f: Vec<f64>,
    pub e_a: Vec<f64>,
    pub e_b: Vec<f64>,
    pub e_m: f64,
}

impl ClientEnergy {
    pub fn total(&self) -> f64 {
        let iters: f64 = self
            .e_f
            .iter()
            .zip(&self.e_a)
            .zip(&self.e_b)
            .map(|((f, a), b)| f + a + b)
            .sum();
        iters + self.e_m
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub clients: Vec<ClientEnergy>,
}

impl EnergyLedger {
    /// Builds the ledger from realized step durations.
    pub fn from_steps(steps: &StepLatencies, clients: &[ClientProfile]) -> Result<Self> {
        let ledger = steps
            .clients
            .iter()
            .zip(clients)
            .enumerate()
            .map(|(k, (st, cl))| {
                let need = |v: Option<f64>, what: &str| v.ok_or_else(|| SimError::MissingStep(format!("{what} of client {k}")));
                let mut e = ClientEnergy::default();
                for i in 0..st.cf.len() {
                    e.e_f.push(step_energy(EnergyKind::Forward, need(st.cf[i], "cf")?, cl));
                    e.e_a.push(step_energy(EnergyKind::SmashedUp, need(st.ca[i], "ca")?, cl));
                    e.e_b.push(step_energy(EnergyKind::Backward, need(st.cb[i], "cb")?, cl));
                }
                e.e_m = step_energy(EnergyKind::TpUp, need(st.cm, "cm")?, cl);
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EnergyLedger { clients: ledger })
    }

    pub fn per_client(&self) -> Vec<f64> {
        self.clients.iter().map(ClientEnergy::total).collect()
    }

    pub fn max(&self) -> f64 {
        self.per_client().into_iter().fold(0.0, f64::max)
    }
}

/// Total energy of one client for the round.
pub fn round_energy(ledger: &ClientEnergy) -> f64 {
    ledger.total()
}

/// Lag flavour: CPSFL family (server compute ends the lag) or PipeSFL
/// (gradient download ends it).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagVariant {
    Cpsfl,
    PipeSfl,
}

/// Lag of client `k` in iteration `i` (0-based).
///
/// CPSFL: `cb(i-1) + cf(i) + ca(i) + s(i)`. PipeSFL: `cb(i-1) + cf(i) + ca(i) + sg'(i-1)`.
/// In the first iteration the previous backward pass is replaced by
/// `sigma * cf(0)`, and for PipeSFL the previous download by `sg_estimate`.
pub fn lag(
    k: usize,
    i: usize,
    steps: &StepLatencies,
    variant: LagVariant,
    sigma: f64,
    sg_estimate: Option<f64>,
) -> Result<f64> {
    let c = steps
        .clients
        .get(k)
        .ok_or_else(|| SimError::MissingStep(format!("client {k}")))?;
    let get = |v: &Vec<Option<f64>>, idx: usize, what: &str| {
        v.get(idx)
            .copied()
            .flatten()
            .ok_or_else(|| SimError::MissingStep(format!("{what}({k},{idx})")))
    };
    let cf = get(&c.cf, i, "cf")?;
    let ca = get(&c.ca, i, "ca")?;
    let prev_cb = if i == 0 { sigma * cf } else { get(&c.cb, i - 1, "cb")? };
    match variant {
        LagVariant::Cpsfl => Ok(prev_cb + cf + ca + get(&c.s, i, "s")?),
        LagVariant::PipeSfl => {
            let prev_sg = if i == 0 {
                sg_estimate.ok_or_else(|| SimError::MissingStep(format!("gradient estimate for client {k}")))?
            } else {
                get(&c.sg, i - 1, "sg")?
            };
            Ok(prev_cb + cf + ca + prev_sg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airspace::ConstantChannel;
    use crate::profiles::builtin_scenario;
    use proptest::prelude::*;

    #[test]
    fn compute_latencies_for_split_two() {
        let s = builtin_scenario();
        let p = s.split(2).unwrap();
        let c = &s.clients[0];
        assert!((client_fp_latency(8, p, c) - 0.04).abs() < 1e-12);
        assert!((client_bp_latency(8, p, c) - 0.08).abs() < 1e-12);
        assert_eq!(client_fp_latency(0, p, c), 0.0);
        let mut fast = c.clone();
        fast.freq *= 2.0;
        fast.intensity = c.intensity;
        assert!((client_fp_latency(8, p, &fast) - 0.02).abs() < 1e-12);

        let t = server_compute_latency(8, p, &s.server, 0.1).unwrap();
        let expect = 8.0 * (57.78e9 + 115.56e9) / 19.5e12;
        assert!((t - expect).abs() < 1e-12);
        assert!((t - 0.0711).abs() < 1e-4);
        let t1 = server_compute_latency(8, p, &s.server, 1.0).unwrap();
        assert!((t / t1 - 10.0).abs() < 1e-12);
        assert!(server_compute_latency(8, p, &s.server, 0.0).is_err());
    }

    #[test]
    fn constant_channel_comm_is_payload_over_rate() {
        let s = builtin_scenario();
        let plan = RoundPlan::uniform(10, 2, true);
        let ch = ConstantChannel::new(vec![1e-9; 10], 0.1);
        let ctx = LinkContext {
            scenario: &s,
            plan: &plan,
            channel: &ch,
        };
        let up = comm_step_latency(CommKind::SmashedUp, &ctx, 0, 3.21).unwrap();
        let r = ctx.rate(CommKind::SmashedUp, 0, 1e-9).unwrap();
        assert_eq!(up, 8.0 * 1176.0 * 8192.0 / r);
        let tp = comm_step_latency(CommKind::TpUp, &ctx, 0, 0.0).unwrap();
        assert!(tp < up);

        // full vs beta = rho = 1 fraction
        let mut full_plan = RoundPlan::uniform(1, 2, true);
        full_plan.alpha = vec![1.0];
        let mut one = s.clone();
        one.clients.truncate(1);
        one.rings.truncate(1);
        let ctx1 = LinkContext {
            scenario: &one,
            plan: &full_plan,
            channel: &ch,
        };
        let a = comm_step_latency(CommKind::GradientDownFull, &ctx1, 0, 0.0).unwrap();
        let b = comm_step_latency(CommKind::GradientDownFraction, &ctx1, 0, 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn payload_of_ten_megabit_link() {
        // 8 * 1176 KB over 1e7 bit/s
        let bits: f64 = 8.0 * 1176.0 * 8192.0;
        assert!((bits / 1e7 - 7.707).abs() < 1e-3);
    }

    #[test]
    fn energy_examples() {
        let s = builtin_scenario();
        let c = &s.clients[0];
        assert!((step_energy(EnergyKind::Forward, 0.04, c) - 0.64).abs() < 1e-12);
        let mut silent = c.clone();
        silent.transmit_power = 0.0;
        assert_eq!(step_energy(EnergyKind::SmashedUp, 3.0, &silent), 0.0);
        let e = ClientEnergy {
            e_f: vec![0.64; 3],
            e_a: vec![0.0; 3],
            e_b: vec![1.28; 3],
            e_m: 0.0,
        };
        assert!((round_energy(&e) - 5.76).abs() < 1e-12);
    }

    fn steps_fixture(cb: f64, cf: f64, ca: f64, s: f64) -> StepLatencies {
        let mut st = StepLatencies::new(1, 2);
        let c = &mut st.clients[0];
        c.cf = vec![Some(cf); 2];
        c.ca = vec![Some(ca); 2];
        c.s = vec![Some(s); 2];
        c.cb = vec![Some(cb); 2];
        c.sg = vec![Some(0.3); 2];
        st
    }

    #[test]
    fn lag_sums_components() {
        let st = steps_fixture(0.08, 0.04, 0.5, 0.0711);
        let l = lag(0, 1, &st, LagVariant::Cpsfl, 2.0, None).unwrap();
        assert!((l - 0.6911).abs() < 1e-12);
        // bootstrap: sigma * cf = 0.08 equals the realized cb here
        let l0 = lag(0, 0, &st, LagVariant::Cpsfl, 2.0, None).unwrap();
        assert!((l0 - l).abs() < 1e-15);
        let lp = lag(0, 1, &st, LagVariant::PipeSfl, 2.0, None).unwrap();
        assert!((lp - (0.08 + 0.04 + 0.5 + 0.3)).abs() < 1e-12);
        assert!(lag(0, 0, &st, LagVariant::PipeSfl, 2.0, None).is_err());
        assert!((lag(0, 0, &st, LagVariant::PipeSfl, 2.0, Some(0.25)).unwrap() - 0.87).abs() < 1e-12);
    }

    #[test]
    fn lag_reports_missing_data() {
        let st = StepLatencies::new(2, 2);
        assert!(matches!(lag(1, 1, &st, LagVariant::Cpsfl, 2.0, None), Err(SimError::MissingStep(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn ledger_total_is_component_sum(
            cf in prop::collection::vec(0.0f64..1.0, 1..6),
            ca in 0.0f64..10.0, cm in 0.0f64..5.0, p in 0.0f64..2.0, omega in 1e-27f64..1e-26,
        ) {
            let n = cf.len();
            let client = ClientProfile { transmit_power: p, freq: 1e9, intensity: 2500.0, energy_coeff: omega };
            let mut st = StepLatencies::new(1, n);
            let c = &mut st.clients[0];
            c.cf = cf.iter().map(|x| Some(*x)).collect();
            c.cb = cf.iter().map(|x| Some(2.0 * x)).collect();
            c.ca = vec![Some(ca); n];
            c.cm = Some(cm);
            let ledger = EnergyLedger::from_steps(&st, &[client.clone()]).unwrap();
            let direct: f64 = cf.iter().map(|x| client.compute_power() * 3.0 * x + p * ca).sum::<f64>() + p * cm;
            let total = ledger.clients[0].total();
            prop_assert!((total - direct).abs() <= 1e-9 * direct.max(1.0));
            prop_assert!(total >= 0.0);
        }
    }
}
