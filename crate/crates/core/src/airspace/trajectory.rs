use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{distance, Position};
use crate::error::{Result, SimError};
use crate::profiles::Ring;

/// Per-slot UAV positions and their distances to the base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub slot_s: f64,
    pub positions: Vec<Position>,
    pub distances: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `(x, y, z, distance)` at `slot`.
    pub fn chi(&self, slot: usize) -> [f64; 4] {
        let p = self.positions[slot];
        [p[0], p[1], p[2], self.distances[slot]]
    }
}

/// Random-waypoint walker confined to a horizontal annulus around the
/// base station.
///
/// Each leg draws a uniform speed in `[v_min, v_max]` and a uniform waypoint
/// in the annulus whose straight path from the current position does not cut
/// into the inner disk. The UAV advances exactly `speed * slot_s` per slot;
/// once the waypoint is closer than one step a new leg starts from the
/// current position.
#[derive(Debug, Clone)]
pub struct WaypointWalker {
    rng: ChaCha8Rng,
    ring: Ring,
    height: f64,
    speed_bounds: (f64, f64),
    slot_s: f64,
    pos: [f64; 2],
    waypoint: [f64; 2],
    speed: f64,
}

const MAX_LEG_DRAWS: usize = 10_000;

impl WaypointWalker {
    /// `stream` separates walkers sharing one seed (typically the client index).
    pub fn new(ring: Ring, height: f64, speed_bounds: (f64, f64), slot_s: f64, seed: u64, stream: u64) -> Result<Self> {
        let (v_min, v_max) = speed_bounds;
        if !(ring.inner_m >= 0.0 && ring.inner_m < ring.outer_m) {
            return Err(SimError::InfeasibleTrajectory(format!(
                "ring inner radius {} must be below outer radius {}",
                ring.inner_m, ring.outer_m
            )));
        }
        if !(v_min >= 0.0 && v_min <= v_max && v_max.is_finite()) {
            return Err(SimError::InfeasibleTrajectory(format!("speed bounds ({v_min}, {v_max})")));
        }
        if !(slot_s > 0.0) {
            return Err(SimError::InfeasibleTrajectory(format!("slot length {slot_s}")));
        }
        if v_max * slot_s >= ring.outer_m - ring.inner_m {
            return Err(SimError::InfeasibleTrajectory(format!(
                "one slot at {v_max} m/s covers the whole ring width"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let pos = sample_annulus(&mut rng, ring);
        let mut walker = WaypointWalker {
            rng,
            ring,
            height,
            speed_bounds,
            slot_s,
            pos,
            waypoint: pos,
            speed: 0.0,
        };
        walker.new_leg();
        Ok(walker)
    }

    pub fn position(&self) -> Position {
        [self.pos[0], self.pos[1], self.height]
    }

    /// Advances one slot and returns the new position.
    pub fn step(&mut self) -> Position {
        let step = self.speed * self.slot_s;
        if step > 0.0 {
            if dist2(self.pos, self.waypoint) < step {
                self.new_leg();
            }
            let step = self.speed * self.slot_s;
            let d = dist2(self.pos, self.waypoint);
            if d > 0.0 && step > 0.0 {
                let f = step / d;
                self.pos = [
                    self.pos[0] + f * (self.waypoint[0] - self.pos[0]),
                    self.pos[1] + f * (self.waypoint[1] - self.pos[1]),
                ];
            }
        }
        self.position()
    }

    fn new_leg(&mut self) {
        let (v_min, v_max) = self.speed_bounds;
        self.speed = if v_max > v_min { self.rng.random_range(v_min..=v_max) } else { v_min };
        let step = self.speed * self.slot_s;
        if step == 0.0 {
            self.waypoint = self.pos;
            return;
        }
        for _ in 0..MAX_LEG_DRAWS {
            let w = sample_annulus(&mut self.rng, self.ring);
            if dist2(self.pos, w) >= step && segment_clears_disk(self.pos, w, self.ring.inner_m) {
                self.waypoint = w;
                return;
            }
        }
        // Thin ring: follow the tangent and let the next draw retry.
        let r = (self.pos[0].hypot(self.pos[1])).max(f64::MIN_POSITIVE);
        let t = [-self.pos[1] / r, self.pos[0] / r];
        self.waypoint = [self.pos[0] + t[0] * step, self.pos[1] + t[1] * step];
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn sample_annulus(rng: &mut ChaCha8Rng, ring: Ring) -> [f64; 2] {
    let (r0, r1) = (ring.inner_m, ring.outer_m);
    let u: f64 = rng.random();
    let r = (r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt().clamp(r0, r1);
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    [r * theta.cos(), r * theta.sin()]
}

/// True when every point of segment `a -> b` is at least `radius` from the origin.
fn segment_clears_disk(a: [f64; 2], b: [f64; 2], radius: f64) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (-(a[0] * d[0] + a[1] * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let p = [a[0] + t * d[0], a[1] + t * d[1]];
    p[0].hypot(p[1]) >= radius
}

/// Generates `slots` slots of a waypoint trajectory; slot 0 is the start.
pub fn generate_trajectory(
    ring: Ring,
    height: f64,
    speed_bounds: (f64, f64),
    slot_s: f64,
    slots: usize,
    bs_pos: &Position,
    seed: u64,
) -> Result<Trajectory> {
    let mut walker = WaypointWalker::new(ring, height, speed_bounds, slot_s, seed, 0)?;
    let mut positions = Vec::with_capacity(slots);
    if slots > 0 {
        positions.push(walker.position());
    }
    while positions.len() < slots {
        positions.push(walker.step());
    }
    let distances = positions.iter().map(|p| distance(p, bs_pos)).collect();
    Ok(Trajectory {
        slot_s,
        positions,
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BS: Position = [0.0, 0.0, 30.0];
    const RING2: Ring = Ring {
        inner_m: 550.0,
        outer_m: 820.0,
    };

    #[test]
    fn stationary_when_speed_is_zero() {
        let t = generate_trajectory(RING2, 20.0, (0.0, 0.0), 0.1, 50, &BS, 3).unwrap();
        assert!(t.positions.iter().all(|p| *p == t.positions[0]));
    }

    #[test]
    fn same_seed_same_path() {
        let a = generate_trajectory(RING2, 20.0, (0.1, 4.0), 0.1, 500, &BS, 7).unwrap();
        let b = generate_trajectory(RING2, 20.0, (0.1, 4.0), 0.1, 500, &BS, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_trajectory(RING2, 20.0, (0.1, 4.0), 0.1, 500, &BS, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stays_in_ring_with_bounded_steps() {
        let t = generate_trajectory(RING2, 20.0, (0.1, 4.0), 0.1, 10_000, &BS, 11).unwrap();
        for p in &t.positions {
            let r = p[0].hypot(p[1]);
            assert!((550.0 - 1e-9..=820.0 + 1e-9).contains(&r), "r = {r}");
            assert_eq!(p[2], 20.0);
        }
        for w in t.positions.windows(2) {
            let step = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            assert!(step >= 0.1 * 0.1 - 1e-9 && step <= 4.0 * 0.1 + 1e-9, "step = {step}");
        }
    }

    #[test]
    fn rejects_bad_bounds() {
        let bad = Ring {
            inner_m: 10.0,
            outer_m: 5.0,
        };
        assert!(generate_trajectory(bad, 20.0, (0.1, 4.0), 0.1, 10, &BS, 1).is_err());
        assert!(generate_trajectory(RING2, 20.0, (4.0, 0.1), 0.1, 10, &BS, 1).is_err());
    }

    #[test]
    fn segment_test_detects_crossing() {
        assert!(!segment_clears_disk([-600.0, 0.0], [600.0, 0.0], 550.0));
        assert!(segment_clears_disk([600.0, 0.0], [600.0, 100.0], 550.0));
    }
}
