use crate::airspace::Channel;
use crate::analytics::LatencyInstance;
use crate::error::{Result, SimError};
use crate::latency::{
    client_bp_latency, client_fp_latency, comm_step_latency, server_compute_latency, CommKind, LinkContext, RoundPlan,
};
use crate::profiles::Scenario;

/// Step variants whose duration a timer must supply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepKind {
    Sm,
    Cf,
    Ca,
    /// Server compute on a shared fraction of the server.
    ServerShared,
    /// Server compute on the whole server.
    ServerFull,
    /// Gradient download at full downlink bandwidth and power.
    GtFull,
    /// Gradient download on a bandwidth and power fraction.
    GtFraction,
    Cb,
    Cm,
}

/// Source of step durations for the event engine.
pub trait StepTimer {
    fn clients(&self) -> usize;

    fn iterations(&self) -> usize;

    /// Duration of `step` of client `k` in iteration `i` starting at `t_start`.
    fn duration(&self, step: StepKind, k: usize, i: usize, t_start: f64) -> Result<f64>;

    /// Stand-in for the backward pass preceding the first iteration.
    fn bootstrap_prev_cb(&self, k: usize, first_cf: f64) -> f64;

    /// Estimate of the fractional gradient download preceding the first
    /// iteration, for an upload finishing at `t_ca_end`.
    fn gradient_estimate(&self, k: usize, t_ca_end: f64) -> Result<f64>;
}

/// Durations from client and server profiles over a channel.
pub struct PhysicalTimer<'a> {
    ctx: LinkContext<'a>,
}

impl<'a> PhysicalTimer<'a> {
    pub fn new(scenario: &'a Scenario, plan: &'a RoundPlan, channel: &'a dyn Channel) -> Result<Self> {
        if channel.clients() != scenario.k() {
            return Err(SimError::Dimension(format!(
                "channel has {} clients, scenario {}",
                channel.clients(),
                scenario.k()
            )));
        }
        scenario.split(plan.split)?;
        Ok(PhysicalTimer {
            ctx: LinkContext {
                scenario,
                plan,
                channel,
            },
        })
    }
}

impl StepTimer for PhysicalTimer<'_> {
    fn clients(&self) -> usize {
        self.ctx.scenario.k()
    }

    fn iterations(&self) -> usize {
        self.ctx.scenario.config.local_iterations
    }

    fn duration(&self, step: StepKind, k: usize, _i: usize, t_start: f64) -> Result<f64> {
        let s = self.ctx.scenario;
        let b = s.config.batch_size;
        let profile = s.split(self.ctx.plan.split)?;
        match step {
            StepKind::Cf => Ok(client_fp_latency(b, profile, &s.clients[k])),
            StepKind::Cb => Ok(client_bp_latency(b, profile, &s.clients[k])),
            StepKind::ServerShared => server_compute_latency(b, profile, &s.server, self.ctx.plan.alpha[k]),
            StepKind::ServerFull => server_compute_latency(b, profile, &s.server, 1.0),
            StepKind::Sm => comm_step_latency(CommKind::BroadcastTp, &self.ctx, k, t_start),
            StepKind::Ca => comm_step_latency(CommKind::SmashedUp, &self.ctx, k, t_start),
            StepKind::GtFull => comm_step_latency(CommKind::GradientDownFull, &self.ctx, k, t_start),
            StepKind::GtFraction => comm_step_latency(CommKind::GradientDownFraction, &self.ctx, k, t_start),
            StepKind::Cm => comm_step_latency(CommKind::TpUp, &self.ctx, k, t_start),
        }
    }

    fn bootstrap_prev_cb(&self, _k: usize, first_cf: f64) -> f64 {
        self.ctx.scenario.config.sigma * first_cf
    }

    fn gradient_estimate(&self, k: usize, t_ca_end: f64) -> Result<f64> {
        let slot = (t_ca_end / self.ctx.channel.slot_s()).floor().max(0.0) as u64;
        let h = self.ctx.channel.gain(k, slot).ok_or(SimError::NonTerminating {
            bits: 0.0,
            t_start: t_ca_end,
            slots: slot,
        })?;
        let bits = self.ctx.payload_bits(CommKind::GradientDownFraction)?;
        Ok(bits / self.ctx.rate(CommKind::GradientDownFraction, k, h)?)
    }
}

/// Durations read from a constant instance.
///
/// The first-iteration lag uses the instance's own backward pass, so every
/// iteration sees the same lag.
pub struct FixedTimer<'a> {
    inst: &'a LatencyInstance,
}

impl<'a> FixedTimer<'a> {
    pub fn new(inst: &'a LatencyInstance) -> Result<Self> {
        inst.validate()?;
        Ok(FixedTimer { inst })
    }
}

impl StepTimer for FixedTimer<'_> {
    fn clients(&self) -> usize {
        self.inst.k()
    }

    fn iterations(&self) -> usize {
        self.inst.iterations
    }

    fn duration(&self, step: StepKind, k: usize, _i: usize, _t_start: f64) -> Result<f64> {
        let v = match step {
            StepKind::Sm => &self.inst.sm,
            StepKind::Cf => &self.inst.cf,
            StepKind::Ca => &self.inst.ca,
            StepKind::ServerShared => &self.inst.s,
            StepKind::ServerFull => &self.inst.s_seq,
            StepKind::GtFull => &self.inst.sg,
            StepKind::GtFraction => &self.inst.sg_par,
            StepKind::Cb => &self.inst.cb,
            StepKind::Cm => &self.inst.cm,
        };
        Ok(v[k])
    }

    fn bootstrap_prev_cb(&self, k: usize, _first_cf: f64) -> f64 {
        self.inst.cb[k]
    }

    fn gradient_estimate(&self, k: usize, _t_ca_end: f64) -> Result<f64> {
        Ok(self.inst.sg_par[k])
    }
}
