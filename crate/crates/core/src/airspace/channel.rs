use std::cell::RefCell;
use std::io::{Read, Write};

use super::path_loss::{gain_from_path_loss, path_loss_db};
use super::trajectory::{Trajectory, WaypointWalker};
use super::{distance, Position};
use crate::error::{Result, SimError};
use crate::profiles::Scenario;

/// Per-slot channel gains between the base station and each client.
pub trait Channel {
    fn slot_s(&self) -> f64;

    fn clients(&self) -> usize;

    /// Linear gain of `client` during `slot`, or `None` past the horizon.
    fn gain(&self, client: usize, slot: u64) -> Option<f64>;

    /// `Some(h)` when the client's gain never changes.
    fn constant_gain(&self, _client: usize) -> Option<f64> {
        None
    }

    /// `(x, y, z, distance)` of `client` at `slot`, when positions are known.
    fn chi(&self, _client: usize, _slot: u64) -> Option<[f64; 4]> {
        None
    }

    /// Hint that slots before `slot` will not be queried again.
    fn release_before(&self, _slot: u64) {}
}

/// Time-invariant gains; durations reduce to payload / rate exactly.
#[derive(Debug, Clone)]
pub struct ConstantChannel {
    pub slot_s: f64,
    pub gains: Vec<f64>,
}

impl ConstantChannel {
    pub fn new(gains: Vec<f64>, slot_s: f64) -> Self {
        ConstantChannel { slot_s, gains }
    }
}

impl Channel for ConstantChannel {
    fn slot_s(&self) -> f64 {
        self.slot_s
    }

    fn clients(&self) -> usize {
        self.gains.len()
    }

    fn gain(&self, client: usize, _slot: u64) -> Option<f64> {
        self.gains.get(client).copied()
    }

    fn constant_gain(&self, client: usize) -> Option<f64> {
        self.gains.get(client).copied()
    }
}

#[derive(Debug)]
struct Track {
    walker: WaypointWalker,
    /// Slot index of `positions[0]`.
    base: u64,
    positions: Vec<Position>,
    distances: Vec<f64>,
    gains: Vec<f64>,
}

/// Gains driven by waypoint mobility, generated lazily slot by slot.
///
/// Every client walks its own random stream of one seed, so the generated
/// path does not depend on how far or in which order slots are requested.
#[derive(Debug)]
pub struct MobileChannel {
    slot_s: f64,
    bs_pos: Position,
    carrier_hz: f64,
    tracks: RefCell<Vec<Track>>,
}

impl MobileChannel {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self> {
        let m = &scenario.mobility;
        let slot_s = scenario.config.slot_s;
        let mut tracks = Vec::with_capacity(scenario.k());
        for (k, ring) in scenario.rings.iter().enumerate() {
            let walker = WaypointWalker::new(*ring, m.uav_height_m, (m.speed_min, m.speed_max), slot_s, seed, k as u64)?;
            let p = walker.position();
            let pl = path_loss_db(&p, &m.bs_position, m.carrier_hz)?;
            tracks.push(Track {
                walker,
                base: 0,
                positions: vec![p],
                distances: vec![distance(&p, &m.bs_position)],
                gains: vec![gain_from_path_loss(pl)],
            });
        }
        Ok(MobileChannel {
            slot_s,
            bs_pos: m.bs_position,
            carrier_hz: m.carrier_hz,
            tracks: RefCell::new(tracks),
        })
    }

    fn ensure(&self, client: usize, slot: u64) {
        let mut tracks = self.tracks.borrow_mut();
        let t = &mut tracks[client];
        while t.base + (t.positions.len() as u64) <= slot {
            let p = t.walker.step();
            // height was validated at construction and never changes
            let pl = path_loss_db(&p, &self.bs_pos, self.carrier_hz).expect("height validated");
            t.positions.push(p);
            t.distances.push(distance(&p, &self.bs_pos));
            t.gains.push(gain_from_path_loss(pl));
        }
    }

    /// Copy of slots `[from, to)` of one client's path; `from` must not
    /// precede released history.
    pub fn trajectory(&self, client: usize, from: u64, to: u64) -> Trajectory {
        if to > 0 {
            self.ensure(client, to - 1);
        }
        let tracks = self.tracks.borrow();
        let t = &tracks[client];
        let (a, b) = ((from - t.base) as usize, (to - t.base) as usize);
        Trajectory {
            slot_s: self.slot_s,
            positions: t.positions[a..b].to_vec(),
            distances: t.distances[a..b].to_vec(),
        }
    }
}

impl Channel for MobileChannel {
    fn slot_s(&self) -> f64 {
        self.slot_s
    }

    fn clients(&self) -> usize {
        self.tracks.borrow().len()
    }

    fn gain(&self, client: usize, slot: u64) -> Option<f64> {
        if client >= self.clients() {
            return None;
        }
        self.ensure(client, slot);
        let t = &self.tracks.borrow()[client];
        let idx = slot.checked_sub(t.base)?;
        Some(t.gains[idx as usize])
    }

    fn chi(&self, client: usize, slot: u64) -> Option<[f64; 4]> {
        if client >= self.clients() {
            return None;
        }
        self.ensure(client, slot);
        let tracks = self.tracks.borrow();
        let t = &tracks[client];
        let idx = slot.checked_sub(t.base)? as usize;
        let p = t.positions[idx];
        Some([p[0], p[1], p[2], t.distances[idx]])
    }

    fn release_before(&self, slot: u64) {
        for t in self.tracks.borrow_mut().iter_mut() {
            // keep the most recent slot so the walk can continue from it
            let known = t.base + t.positions.len() as u64;
            let cut = slot.min(known.saturating_sub(1)).saturating_sub(t.base) as usize;
            if cut > 0 {
                t.positions.drain(..cut);
                t.distances.drain(..cut);
                t.gains.drain(..cut);
                t.base += cut as u64;
            }
        }
    }
}

/// Finite replay of a recorded trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedChannel {
    pub slot_s: f64,
    /// `[client][slot] = (x, y, z, distance, gain)`
    pub samples: Vec<Vec<[f64; 5]>>,
}

impl Channel for RecordedChannel {
    fn slot_s(&self) -> f64 {
        self.slot_s
    }

    fn clients(&self) -> usize {
        self.samples.len()
    }

    fn gain(&self, client: usize, slot: u64) -> Option<f64> {
        self.samples.get(client)?.get(slot as usize).map(|s| s[4])
    }

    fn chi(&self, client: usize, slot: u64) -> Option<[f64; 4]> {
        self.samples
            .get(client)?
            .get(slot as usize)
            .map(|s| [s[0], s[1], s[2], s[3]])
    }
}

const TRAJECTORY_HEADER: [&str; 7] = ["client", "slot", "x_m", "y_m", "z_m", "dist_m", "gain_linear"];

/// Writes slots `0..slots` of every client as CSV.
pub fn write_trajectory_csv<W: Write>(out: W, channel: &dyn Channel, slots: u64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for k in 0..channel.clients() {
        for s in 0..slots {
            let chi = channel
                .chi(k, s)
                .ok_or_else(|| SimError::MissingStep(format!("positions for client {k} slot {s}")))?;
            let g = channel
                .gain(k, s)
                .ok_or_else(|| SimError::MissingStep(format!("gain for client {k} slot {s}")))?;
            w.write_record([
                k.to_string(),
                s.to_string(),
                chi[0].to_string(),
                chi[1].to_string(),
                chi[2].to_string(),
                chi[3].to_string(),
                g.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_trajectory_csv`]. Rows must be grouped by
/// client with consecutive slots starting at 0.
pub fn read_trajectory_csv<R: Read>(input: R, slot_s: f64) -> Result<RecordedChannel> {
    let mut r = csv::Reader::from_reader(input);
    let mut samples: Vec<Vec<[f64; 5]>> = Vec::new();
    for row in r.records() {
        let row = row?;
        let bad = |what: &str| SimError::MissingStep(format!("malformed trajectory row {row:?}: {what}"));
        let k: usize = row.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| bad("client"))?;
        let s: usize = row.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| bad("slot"))?;
        let mut vals = [0.0; 5];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = row.get(i + 2).and_then(|x| x.parse().ok()).ok_or_else(|| bad("value"))?;
        }
        if samples.len() <= k {
            samples.resize_with(k + 1, Vec::new);
        }
        if samples[k].len() != s {
            return Err(bad("slots must be consecutive from 0"));
        }
        samples[k].push(vals);
    }
    Ok(RecordedChannel { slot_s, samples })
}
