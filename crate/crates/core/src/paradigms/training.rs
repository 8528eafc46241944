use serde::{Deserialize, Serialize};

use super::engine::{simulate, RoundTrace};
use super::timer::PhysicalTimer;
use super::Paradigm;
use crate::airspace::Channel;
use crate::error::Result;
use crate::latency::{EnergyLedger, RoundPlan};
use crate::profiles::Scenario;

/// Result of one round on the physical channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub paradigm: Paradigm,
    pub plan: RoundPlan,
    pub trace: RoundTrace,
    /// `e_k(n)` per client, joules.
    pub energies: Vec<f64>,
    pub max_energy: f64,
    /// `tau + lambda * max_k e_k`.
    pub objective: f64,
}

impl RoundOutcome {
    pub fn tau(&self) -> f64 {
        self.trace.tau()
    }
}

/// Simulates one round of `paradigm` under `plan` starting at `t0`.
pub fn simulate_round(
    paradigm: Paradigm,
    plan: &RoundPlan,
    scenario: &Scenario,
    channel: &dyn Channel,
    t0: f64,
) -> Result<RoundOutcome> {
    plan.validate(scenario, paradigm.needs_rho())?;
    let timer = PhysicalTimer::new(scenario, plan, channel)?;
    let trace = simulate(&paradigm.discipline(), &timer, t0)?;
    let energies = EnergyLedger::from_steps(&trace.steps, &scenario.clients)?.per_client();
    let max_energy = energies.iter().copied().fold(0.0, f64::max);
    Ok(RoundOutcome {
        paradigm,
        plan: plan.clone(),
        objective: trace.tau() + scenario.config.energy_weight * max_energy,
        trace,
        energies,
        max_energy,
    })
}

/// Supplies the plan of each round, given the previous outcome.
pub trait PlanSource {
    fn next_plan(&mut self, round: usize, previous: Option<&RoundOutcome>, channel: &dyn Channel) -> Result<RoundPlan>;
}

/// Equal shares and a fixed split point every round.
#[derive(Debug, Clone)]
pub struct UniformPlans {
    pub clients: usize,
    pub split: u32,
    pub with_rho: bool,
}

impl UniformPlans {
    pub fn for_paradigm(paradigm: Paradigm, scenario: &Scenario, split: u32) -> Self {
        UniformPlans {
            clients: scenario.k(),
            split,
            with_rho: paradigm.needs_rho(),
        }
    }
}

impl PlanSource for UniformPlans {
    fn next_plan(&mut self, round: usize, _: Option<&RoundOutcome>, _: &dyn Channel) -> Result<RoundPlan> {
        Ok(RoundPlan::uniform(self.clients, self.split, self.with_rho).with_round(round))
    }
}

/// Runs `rounds` rounds back to back from `t0`; each round starts when the
/// previous one's last parameter upload completes. Channel history before
/// the previous round is released.
pub fn run_training(
    paradigm: Paradigm,
    source: &mut dyn PlanSource,
    scenario: &Scenario,
    channel: &dyn Channel,
    rounds: usize,
    t0: f64,
) -> Result<Vec<RoundOutcome>> {
    let mut out: Vec<RoundOutcome> = Vec::with_capacity(rounds);
    let mut t = t0;
    for n in 0..rounds {
        let keep_from = out.last().map_or(t, |o| o.trace.t_start);
        channel.release_before((keep_from / channel.slot_s()).floor() as u64);
        let plan = source.next_plan(n, out.last(), channel)?;
        let o = simulate_round(paradigm, &plan, scenario, channel, t)?;
        t = o.trace.t_end;
        out.push(o);
    }
    Ok(out)
}
