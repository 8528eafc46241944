use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::queue::{GradientQueueEntry, TaskQueue};
use super::timer::{StepKind, StepTimer};
use super::Discipline;
use crate::error::{Result, SimError};
use crate::latency::StepLatencies;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    SmDone,
    CfDone,
    CaDone,
    ServerDone,
    SgDone,
    CbDone,
    CmDone,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SmDone => "sm_done",
            EventKind::CfDone => "cf_done",
            EventKind::CaDone => "ca_done",
            EventKind::ServerDone => "server_done",
            EventKind::SgDone => "sg_done",
            EventKind::CbDone => "cb_done",
            EventKind::CmDone => "cm_done",
        }
    }

    /// Short step label used for timeline bars.
    pub fn step_label(self) -> &'static str {
        match self {
            EventKind::SmDone => "SM",
            EventKind::CfDone => "CF",
            EventKind::CaDone => "CA",
            EventKind::ServerDone => "S",
            EventKind::SgDone => "SG",
            EventKind::CbDone => "CB",
            EventKind::CmDone => "CM",
        }
    }
}

/// Completion of one step. `iteration` is 0-based; for `SmDone` and
/// `CmDone` it is 0 and `I - 1` respectively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub client: usize,
    pub iteration: usize,
}

/// Busy interval of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub client: usize,
    pub kind: EventKind,
    pub iteration: usize,
    pub start: f64,
    pub end: f64,
}

/// Timeline of one simulated round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub t_start: f64,
    /// Time the last client received the broadcast.
    pub t_sm_done: f64,
    pub t_end: f64,
    /// Processed events, in processing order.
    pub events: Vec<Event>,
    pub bars: Vec<Bar>,
    pub steps: StepLatencies,
    /// Priority key of each queued task, `[client][iteration]`; NaN when the
    /// paradigm has no queue.
    pub priorities: Vec<Vec<f64>>,
}

impl RoundTrace {
    pub fn tau(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Round latency counted from the end of the broadcast.
    pub fn tau_after_sm(&self) -> f64 {
        self.t_end - self.t_sm_done
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    time: f64,
    seq: u64,
    event: Event,
    start: f64,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

struct Sim<'a> {
    d: &'a Discipline,
    timer: &'a dyn StepTimer,
    k: usize,
    iters: usize,
    heap: BinaryHeap<Pending>,
    seq: u64,
    trace: RoundTrace,
    sm_seen: usize,
    cm_seen: usize,
    server_q: TaskQueue,
    downlink_q: TaskQueue,
    server_busy: bool,
    downlink_busy: bool,
}

/// Simulates one round starting at `t0`.
///
/// All completions sharing a timestamp are processed before the shared
/// resources are dispatched, so a queue decision at time `t` sees every task
/// that arrived at `t`.
pub fn simulate(d: &Discipline, timer: &dyn StepTimer, t0: f64) -> Result<RoundTrace> {
    let k = timer.clients();
    let iters = timer.iterations();
    if k == 0 || iters == 0 {
        return Err(SimError::Dimension(format!("{k} clients, {iters} iterations")));
    }
    let ranks_ok = match &d.queue {
        super::QueuePolicy::Static(rank) => is_rank_vector(rank, k),
        super::QueuePolicy::SyncStatic(ranks) => ranks.len() == iters && ranks.iter().all(|r| is_rank_vector(r, k)),
        _ => true,
    };
    if !ranks_ok {
        return Err(SimError::Dimension(format!("static order does not rank {k} clients over {iters} iterations")));
    }
    let mut sim = Sim {
        d,
        timer,
        k,
        iters,
        heap: BinaryHeap::new(),
        seq: 0,
        trace: RoundTrace {
            t_start: t0,
            t_sm_done: t0,
            t_end: t0,
            events: Vec::with_capacity(k * (5 * iters + 2)),
            bars: Vec::with_capacity(k * (5 * iters + 2)),
            steps: StepLatencies::new(k, iters),
            priorities: vec![vec![f64::NAN; iters]; k],
        },
        sm_seen: 0,
        cm_seen: 0,
        server_q: TaskQueue::new(d.queue.clone(), k, iters),
        downlink_q: TaskQueue::new(d.queue.clone(), k, iters),
        server_busy: false,
        downlink_busy: false,
    };
    for c in 0..k {
        sim.start(EventKind::SmDone, StepKind::Sm, c, 0, t0)?;
    }
    while let Some(t) = sim.heap.peek().map(|p| p.time) {
        while sim.heap.peek().is_some_and(|p| p.time == t) {
            let p = sim.heap.pop().expect("peeked");
            sim.handle(p)?;
        }
        sim.dispatch(t)?;
    }
    if sim.cm_seen != k {
        return Err(SimError::MissingStep(format!("{} of {k} clients finished the round", sim.cm_seen)));
    }
    Ok(sim.trace)
}

fn is_rank_vector(rank: &[usize], k: usize) -> bool {
    let mut seen = vec![false; k];
    rank.len() == k && rank.iter().all(|&r| r < k && !std::mem::replace(&mut seen[r], true))
}

impl Sim<'_> {
    fn start(&mut self, kind: EventKind, step: StepKind, c: usize, i: usize, t: f64) -> Result<()> {
        let dur = self.timer.duration(step, c, i, t)?;
        if !(dur.is_finite() && dur >= 0.0) {
            return Err(SimError::NonFinite(format!("{step:?} of client {c} lasts {dur}")));
        }
        let st = &mut self.trace.steps.clients[c];
        let slot = match kind {
            EventKind::SmDone => &mut st.sm,
            EventKind::CmDone => &mut st.cm,
            EventKind::CfDone => &mut st.cf[i],
            EventKind::CaDone => &mut st.ca[i],
            EventKind::ServerDone => &mut st.s[i],
            EventKind::SgDone => &mut st.sg[i],
            EventKind::CbDone => &mut st.cb[i],
        };
        *slot = Some(dur);
        self.seq += 1;
        self.heap.push(Pending {
            time: t + dur,
            seq: self.seq,
            event: Event {
                time: t + dur,
                kind,
                client: c,
                iteration: i,
            },
            start: t,
        });
        Ok(())
    }

    fn step(&self, c: usize, i: usize, pick: impl Fn(&crate::latency::ClientSteps) -> &Vec<Option<f64>>) -> f64 {
        pick(&self.trace.steps.clients[c])[i].expect("step completed before use")
    }

    fn prev_cb(&self, c: usize, i: usize) -> f64 {
        if i == 0 {
            self.timer.bootstrap_prev_cb(c, self.step(c, 0, |s| &s.cf))
        } else {
            self.step(c, i - 1, |s| &s.cb)
        }
    }

    fn handle(&mut self, p: Pending) -> Result<()> {
        let Event {
            time: t,
            kind,
            client: c,
            iteration: i,
        } = p.event;
        self.trace.events.push(p.event);
        self.trace.bars.push(Bar {
            client: c,
            kind,
            iteration: i,
            start: p.start,
            end: t,
        });
        match kind {
            EventKind::SmDone => {
                self.sm_seen += 1;
                if self.sm_seen == self.k {
                    self.trace.t_sm_done = t;
                    for c in 0..self.k {
                        self.start(EventKind::CfDone, StepKind::Cf, c, 0, t)?;
                    }
                }
            }
            EventKind::CfDone => self.start(EventKind::CaDone, StepKind::Ca, c, i, t)?,
            EventKind::CaDone => {
                if self.d.server_parallel {
                    self.start(EventKind::ServerDone, StepKind::ServerShared, c, i, t)?;
                } else {
                    let prev_sg = if i == 0 {
                        self.timer.gradient_estimate(c, t)?
                    } else {
                        self.step(c, i - 1, |s| &s.sg)
                    };
                    let lag = self.prev_cb(c, i) + self.step(c, i, |s| &s.cf) + self.step(c, i, |s| &s.ca) + prev_sg;
                    self.enqueue(false, c, i, lag, t);
                }
            }
            EventKind::ServerDone => {
                if !self.d.server_parallel {
                    self.server_busy = false;
                }
                if self.d.downlink_parallel {
                    self.start(EventKind::SgDone, StepKind::GtFraction, c, i, t)?;
                } else {
                    let lag = self.prev_cb(c, i)
                        + self.step(c, i, |s| &s.cf)
                        + self.step(c, i, |s| &s.ca)
                        + self.step(c, i, |s| &s.s);
                    self.enqueue(true, c, i, lag, t);
                }
            }
            EventKind::SgDone => {
                if !self.d.downlink_parallel {
                    self.downlink_busy = false;
                }
                self.start(EventKind::CbDone, StepKind::Cb, c, i, t)?;
            }
            EventKind::CbDone => {
                if i + 1 < self.iters {
                    self.start(EventKind::CfDone, StepKind::Cf, c, i + 1, t)?;
                } else {
                    self.start(EventKind::CmDone, StepKind::Cm, c, i, t)?;
                }
            }
            EventKind::CmDone => {
                self.cm_seen += 1;
                self.trace.t_end = self.trace.t_end.max(t);
            }
        }
        Ok(())
    }

    fn enqueue(&mut self, downlink: bool, c: usize, i: usize, lag: f64, t: f64) {
        self.trace.priorities[c][i] = lag;
        let e = GradientQueueEntry {
            client: c,
            iteration: i,
            priority: lag,
            enqueue_time: t,
        };
        if downlink {
            self.downlink_q.push(e);
        } else {
            self.server_q.push(e);
        }
    }

    fn dispatch(&mut self, t: f64) -> Result<()> {
        if !self.d.server_parallel && !self.server_busy {
            if let Some(e) = self.server_q.pop() {
                self.server_busy = true;
                self.start(EventKind::ServerDone, StepKind::ServerFull, e.client, e.iteration, t)?;
            }
        }
        if !self.d.downlink_parallel && !self.downlink_busy {
            if let Some(e) = self.downlink_q.pop() {
                self.downlink_busy = true;
                self.start(EventKind::SgDone, StepKind::GtFull, e.client, e.iteration, t)?;
            }
        }
        Ok(())
    }
}
