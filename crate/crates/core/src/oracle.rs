//! Exhaustive scheduling references for small instances.
//!
//! Every search enumerates permutations in lexicographic order and keeps the
//! first optimum found, so ties resolve deterministically.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytics::{lag_order, t_iter, LatencyInstance};
use crate::error::{Result, SimError};
use crate::latency::StepLatencies;
use crate::paradigms::{simulate, Discipline, FixedTimer, Paradigm, QueuePolicy};

pub const MAX_SYNC_CLIENTS: usize = 8;
pub const MAX_ASYNC_CLIENTS: usize = 6;
/// Cap on simulated per-iteration order combinations.
pub const MAX_WORST_ORDER_COMBINATIONS: usize = 1_000_000;

/// Relative tolerance for "constant" durations.
pub const CONSTANT_TOL: f64 = 1e-9;
/// Parameter upload counted as negligible below this share of the round.
pub const NEGLIGIBLE_CM_SHARE: f64 = 0.01;

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..k).collect();
    let mut out = vec![p.clone()];
    loop {
        let Some(i) = (1..k).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..k).rev().find(|&j| p[j] > p[i - 1]).expect("pivot has a successor");
        p.swap(i - 1, j);
        p[i..].reverse();
        out.push(p.clone());
    }
}

/// Rank vector of a service order: `rank[order[j]] = j`.
pub fn ranks_of(order: &[usize]) -> Vec<usize> {
    let mut rank = vec![0; order.len()];
    for (j, &c) in order.iter().enumerate() {
        rank[c] = j;
    }
    rank
}

/// Outcome of an exhaustive order search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSearch {
    pub best_order: Vec<usize>,
    pub best: f64,
    /// Every enumerated order with its latency, in enumeration order.
    pub table: Vec<(Vec<usize>, f64)>,
}

impl OrderSearch {
    fn from_table(table: Vec<(Vec<usize>, f64)>) -> Self {
        let mut best = 0;
        for (n, row) in table.iter().enumerate() {
            if row.1 < table[best].1 {
                best = n;
            }
        }
        OrderSearch {
            best_order: table[best].0.clone(),
            best: table[best].1,
            table,
        }
    }

    /// Whether `value` is optimal within relative tolerance `rel`.
    pub fn attains(&self, value: f64, rel: f64) -> bool {
        value <= self.best + rel * self.best.abs().max(f64::MIN_POSITIVE)
    }

    /// Every order within relative tolerance `rel` of the optimum.
    pub fn argmin_set(&self, rel: f64) -> Vec<Vec<usize>> {
        self.table.iter().filter(|r| self.attains(r.1, rel)).map(|r| r.0.clone()).collect()
    }
}

fn guard(k: usize, limit: usize) -> Result<()> {
    if k == 0 || k > limit {
        return Err(SimError::OracleLimit(format!("{k} clients; exhaustive search supports 1..={limit}")));
    }
    Ok(())
}

/// Minimum iteration latency over all download orders.
pub fn best_order_sync(inst: &LatencyInstance) -> Result<OrderSearch> {
    inst.validate()?;
    guard(inst.k(), MAX_SYNC_CLIENTS)?;
    let table = permutations(inst.k())
        .into_iter()
        .map(|o| {
            let t = t_iter(inst, &o);
            (o, t)
        })
        .collect();
    Ok(OrderSearch::from_table(table))
}

/// Round latency of asynchronous downloads under one fixed client ranking.
pub fn static_priority_round(inst: &LatencyInstance, order: &[usize]) -> Result<f64> {
    let d = Discipline {
        queue: QueuePolicy::Static(ranks_of(order)),
        ..Paradigm::Cpsfl.discipline()
    };
    Ok(simulate(&d, &FixedTimer::new(inst)?, 0.0)?.tau())
}

/// Minimum asynchronous round latency over all static client rankings.
/// The instance must satisfy the constant-channel, negligible-upload and
/// equal-download assumptions.
pub fn best_static_order_async(inst: &LatencyInstance) -> Result<OrderSearch> {
    inst.validate()?;
    guard(inst.k(), MAX_ASYNC_CLIENTS)?;
    let report = check_assumptions(inst, None);
    if !report.all_hold() {
        return Err(SimError::OracleLimit(format!("assumptions violated: {report:?}")));
    }
    let table = permutations(inst.k())
        .into_par_iter()
        .map(|o| static_priority_round(inst, &o).map(|t| (o, t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(OrderSearch::from_table(table))
}

/// Largest synchronous round latency over every per-iteration download
/// order, by simulation.
pub fn worst_order_sync(inst: &LatencyInstance) -> Result<f64> {
    inst.validate()?;
    guard(inst.k(), MAX_SYNC_CLIENTS)?;
    let perms = permutations(inst.k());
    let combos = perms
        .len()
        .checked_pow(inst.iterations as u32)
        .filter(|&c| c <= MAX_WORST_ORDER_COMBINATIONS)
        .ok_or_else(|| SimError::OracleLimit(format!("{}!^{} order combinations", inst.k(), inst.iterations)))?;
    let timer = FixedTimer::new(inst)?;
    (0..combos)
        .into_par_iter()
        .map(|mut code| {
            let ranks = (0..inst.iterations)
                .map(|_| {
                    let r = ranks_of(&perms[code % perms.len()]);
                    code /= perms.len();
                    r
                })
                .collect();
            let d = Discipline {
                queue: QueuePolicy::SyncStatic(ranks),
                ..Paradigm::VanillaSflPs.discipline()
            };
            simulate(&d, &timer, 0.0).map(|tr| tr.tau())
        })
        .try_reduce(|| f64::NEG_INFINITY, |a, b| Ok(a.max(b)))
}

/// Which analysis assumptions an instance satisfies and by how much it
/// misses the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Largest relative spread of a communication step across iterations.
    pub channel_spread: f64,
    /// Largest parameter upload as a share of the round.
    pub cm_share: f64,
    /// Relative spread of download durations across clients.
    pub gt_spread: f64,
    pub constant_channel: bool,
    pub negligible_cm: bool,
    pub equal_gt: bool,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.constant_channel && self.negligible_cm && self.equal_gt
    }
}

fn spread(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let (lo, hi, sum, n) = v.fold((f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize), |(lo, hi, s, n), x| {
        (lo.min(x), hi.max(x), s + x, n + 1)
    });
    let mean = sum / n.max(1) as f64;
    if n == 0 || mean == 0.0 {
        0.0
    } else {
        (hi - lo) / mean
    }
}

/// Checks the instance, and when realized per-iteration durations are given,
/// how much the communication steps varied within the round.
pub fn check_assumptions(inst: &LatencyInstance, steps: Option<&StepLatencies>) -> AssumptionReport {
    let channel_spread = steps.map_or(0.0, |st| {
        st.clients
            .iter()
            .flat_map(|c| [&c.ca, &c.sg])
            .map(|v| spread(v.iter().flatten().copied()))
            .fold(0.0, f64::max)
    });
    let round = crate::analytics::tau2(inst, true).max(f64::MIN_POSITIVE);
    let cm_share = inst.cm.iter().copied().fold(0.0, f64::max) / round;
    let gt_spread = spread(inst.sg.iter().copied());
    AssumptionReport {
        channel_spread,
        cm_share,
        gt_spread,
        constant_channel: channel_spread <= CONSTANT_TOL,
        negligible_cm: cm_share <= NEGLIGIBLE_CM_SHARE,
        equal_gt: gt_spread <= CONSTANT_TOL,
    }
}

/// 64-bit FNV-1a of the instance's JSON form.
pub fn instance_hash(inst: &LatencyInstance) -> String {
    let bytes = serde_json::to_vec(inst).expect("instance serializes");
    let h = bytes
        .iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3));
    format!("{h:016x}")
}

/// JSON report of one search: instance hash, optimal orders, full table.
/// Orders are 1-based client ids.
pub fn report_json(inst: &LatencyInstance, search: &OrderSearch, rel: f64) -> Value {
    let ids = |o: &[usize]| o.iter().map(|c| c + 1).collect::<Vec<_>>();
    json!({
        "instance_hash": instance_hash(inst),
        "clients": inst.k(),
        "iterations": inst.iterations,
        "best_latency_s": search.best,
        "best_orders": search.argmin_set(rel).iter().map(|o| ids(o)).collect::<Vec<_>>(),
        "descending_lag_order": ids(&lag_order(inst)),
        "table": search.table.iter().map(|(o, t)| json!({"order": ids(o), "latency_s": t})).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::tests::{random_instance, uniform_instance};
    use crate::analytics::{tau2, tau_max};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn permutations_are_lexicographic() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[1], vec![0, 2, 1]);
        assert_eq!(p[5], vec![2, 1, 0]);
        assert_eq!(permutations(1), vec![vec![0]]);
        assert_eq!(ranks_of(&[2, 0, 1]), vec![1, 2, 0]);
    }

    #[test]
    fn two_client_sync_search() {
        let mut inst = uniform_instance(2, 1, 0.0);
        inst.ca = vec![1.0, 3.0];
        inst.sg = vec![0.5, 0.5];
        let s = best_order_sync(&inst).unwrap();
        assert_eq!(s.best_order, vec![1, 0]);
        assert_eq!(s.best, 3.5);
        assert_eq!(s.table, vec![(vec![0, 1], 4.0), (vec![1, 0], 3.5)]);
    }

    #[test]
    fn symmetric_instances_tie() {
        let inst = uniform_instance(3, 2, 0.4);
        let s = best_order_sync(&inst).unwrap();
        assert_eq!(s.argmin_set(0.0).len(), 6);
        let a = best_static_order_async(&inst).unwrap();
        assert_eq!(a.argmin_set(1e-12).len(), 6);
        let single = uniform_instance(1, 3, 0.2);
        let a1 = best_static_order_async(&single).unwrap();
        assert!((a1.best - 3.0 * 1.0).abs() < 1e-12);
    }

    #[test]
    fn guards_and_assumption_violations() {
        assert!(matches!(best_order_sync(&uniform_instance(9, 1, 1.0)), Err(SimError::OracleLimit(_))));
        assert!(matches!(best_static_order_async(&uniform_instance(7, 1, 1.0)), Err(SimError::OracleLimit(_))));
        let mut inst = uniform_instance(3, 1, 1.0);
        inst.sg[1] = 2.0;
        assert!(best_static_order_async(&inst).is_err());
    }

    #[test]
    fn assumption_report() {
        let inst = uniform_instance(3, 2, 1.0);
        assert!(check_assumptions(&inst, None).all_hold());
        let mut heavy = inst.clone();
        let round = tau2(&inst, false);
        heavy.cm = vec![0.1 * round; 3];
        let r = check_assumptions(&heavy, None);
        assert!(!r.negligible_cm && r.constant_channel && r.equal_gt);
        assert!(r.cm_share > 0.05);
    }

    #[test]
    fn worst_order_matches_upper_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let iters = rng.random_range(1..=2);
            let inst = random_instance(&mut rng, 4, iters);
            let worst = worst_order_sync(&inst).unwrap();
            let bound = tau_max(&inst, false);
            assert!((worst - bound).abs() <= 1e-9 * bound, "{worst} vs {bound}");
        }
    }

    #[test]
    fn report_lists_every_order() {
        let inst = uniform_instance(3, 1, 0.5);
        let s = best_order_sync(&inst).unwrap();
        let r = report_json(&inst, &s, 1e-9);
        assert_eq!(r["table"].as_array().unwrap().len(), 6);
        assert_eq!(r["instance_hash"].as_str().unwrap().len(), 16);
        assert_eq!(r["descending_lag_order"], json!([1, 2, 3]));
    }
}
