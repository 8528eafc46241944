//! Closed-form round latencies and bounds for constant step durations.
//!
//! Formulas take a [`LatencyInstance`] in arbitrary client order and derive
//! the service order themselves: descending lag, ties to the lower client
//! index. Writing every expression as a maximum over service positions keeps
//! the index maps of the two lag definitions separate.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::latency::StepLatencies;

/// Per-client step durations of one round, constant across iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyInstance {
    pub iterations: usize,
    pub sm: Vec<f64>,
    pub cf: Vec<f64>,
    pub ca: Vec<f64>,
    /// Server compute with a shared fraction of the server.
    pub s: Vec<f64>,
    /// Full-power sequential gradient download.
    pub sg: Vec<f64>,
    pub cb: Vec<f64>,
    pub cm: Vec<f64>,
    /// Fractional parallel gradient download.
    pub sg_par: Vec<f64>,
    /// Server compute with the whole server.
    pub s_seq: Vec<f64>,
}

impl LatencyInstance {
    /// Every step of every client takes `v`; no broadcast or upload.
    pub fn uniform(k: usize, iterations: usize, v: f64) -> Self {
        LatencyInstance {
            iterations,
            sm: vec![0.0; k],
            cf: vec![v; k],
            ca: vec![v; k],
            s: vec![v; k],
            sg: vec![v; k],
            cb: vec![v; k],
            cm: vec![0.0; k],
            sg_par: vec![v; k],
            s_seq: vec![v; k],
        }
    }

    /// Independent log-uniform step durations in `[0.01, 10]` s; no broadcast
    /// or upload.
    pub fn random_log_uniform<R: Rng>(rng: &mut R, k: usize, iterations: usize) -> Self {
        let mut col = |n: usize| (0..n).map(|_| 10f64.powf(rng.random_range(-2.0..1.0))).collect::<Vec<_>>();
        LatencyInstance {
            iterations,
            sm: vec![0.0; k],
            cf: col(k),
            ca: col(k),
            s: col(k),
            sg: col(k),
            cb: col(k),
            cm: vec![0.0; k],
            sg_par: col(k),
            s_seq: col(k),
        }
    }

    /// Like [`LatencyInstance::random_log_uniform`] with one shared download
    /// time, drawn from the same range.
    pub fn random_equal_download<R: Rng>(rng: &mut R, k: usize, iterations: usize) -> Self {
        let mut inst = Self::random_log_uniform(rng, k, iterations);
        let sg = 10f64.powf(rng.random_range(-2.0..1.0));
        inst.sg = vec![sg; k];
        inst
    }

    pub fn k(&self) -> usize {
        self.cf.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 || self.iterations == 0 {
            return Err(SimError::Dimension("instance needs at least one client and one iteration".into()));
        }
        let cols = [&self.sm, &self.cf, &self.ca, &self.s, &self.sg, &self.cb, &self.cm, &self.sg_par, &self.s_seq];
        for c in cols {
            if c.len() != k {
                return Err(SimError::Dimension(format!("column of length {} with {k} clients", c.len())));
            }
            if let Some(x) = c.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(SimError::NonFinite(format!("step duration {x}")));
            }
        }
        Ok(())
    }

    /// `l_k = cb + cf + ca + s`.
    pub fn lags(&self) -> Vec<f64> {
        (0..self.k()).map(|k| self.cb[k] + self.cf[k] + self.ca[k] + self.s[k]).collect()
    }

    /// `l'_k = cf + ca + sg' + cb`.
    pub fn pipe_lags(&self) -> Vec<f64> {
        (0..self.k()).map(|k| self.cf[k] + self.ca[k] + self.sg_par[k] + self.cb[k]).collect()
    }

    /// Per-client iteration means of a simulated round.
    ///
    /// Parallel-download and full-server durations are not observed in a
    /// sequential-download round; they mirror `sg` and `s`.
    pub fn snapshot(steps: &StepLatencies) -> Result<Self> {
        let need = |v: Option<f64>, what: &str| v.ok_or_else(|| SimError::MissingStep(what.to_string()));
        let sg = steps.mean_per_client(|c| &c.sg)?;
        let s = steps.mean_per_client(|c| &c.s)?;
        Ok(LatencyInstance {
            iterations: steps.iterations(),
            sm: steps.clients.iter().map(|c| need(c.sm, "sm")).collect::<Result<_>>()?,
            cf: steps.mean_per_client(|c| &c.cf)?,
            ca: steps.mean_per_client(|c| &c.ca)?,
            cb: steps.mean_per_client(|c| &c.cb)?,
            cm: steps.clients.iter().map(|c| need(c.cm, "cm")).collect::<Result<_>>()?,
            sg_par: sg.clone(),
            s_seq: s.clone(),
            s,
            sg,
        })
    }

    /// Copy with broadcast and upload of the client parameters set to zero.
    pub fn without_sm_cm(&self) -> Self {
        let mut out = self.clone();
        out.sm.iter_mut().for_each(|x| *x = 0.0);
        out.cm.iter_mut().for_each(|x| *x = 0.0);
        out
    }
}

/// Indices sorted by descending `key`, ties to the lower index.
pub fn descending_order(key: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
    order
}

/// Descending-lag service order for sequential downloads.
pub fn lag_order(inst: &LatencyInstance) -> Vec<usize> {
    descending_order(&inst.lags())
}

/// Descending-`l'` service order for a sequential server.
pub fn pipe_lag_order(inst: &LatencyInstance) -> Vec<usize> {
    descending_order(&inst.pipe_lags())
}

/// `max_p (service[o_0] + ... + service[o_p] + tail[o_p])` over positions `p`.
fn prefix_max(order: &[usize], service: &[f64], tail: impl Fn(usize) -> f64) -> f64 {
    let mut prefix = 0.0;
    let mut best = f64::NEG_INFINITY;
    for &k in order {
        prefix += service[k];
        best = best.max(prefix + tail(k));
    }
    best
}

fn max_over(k: usize, f: impl Fn(usize) -> f64) -> f64 {
    (0..k).map(f).fold(f64::NEG_INFINITY, f64::max)
}

/// Iteration latency when downloads are served in `order`.
pub fn t_iter(inst: &LatencyInstance, order: &[usize]) -> f64 {
    let l = inst.lags();
    prefix_max(order, &inst.sg, |k| l[k])
}

/// Round latency of synchronous descending-lag downloads, counted from the
/// end of the broadcast.
pub fn tau2(inst: &LatencyInstance, include_cm: bool) -> f64 {
    let order = lag_order(inst);
    let cm = |k: usize| if include_cm { inst.cm[k] } else { 0.0 };
    let first = max_over(inst.k(), |k| inst.cf[k] + inst.ca[k] + inst.s[k]);
    let last = prefix_max(&order, &inst.sg, |k| inst.cb[k] + cm(k));
    first + (inst.iterations - 1) as f64 * t_iter(inst, &order) + last
}

pub fn tau2_hat(inst: &LatencyInstance) -> f64 {
    inst.iterations as f64 * t_iter(inst, &lag_order(inst))
}

/// Worst case of sequential downloads: the largest lag is served last in
/// every iteration. Includes the broadcast.
pub fn tau_max(inst: &LatencyInstance, include_cm: bool) -> f64 {
    let k = inst.k();
    let sum_sg: f64 = inst.sg.iter().sum();
    let max_lag = inst.lags().into_iter().fold(f64::NEG_INFINITY, f64::max);
    let cm = |c: usize| if include_cm { inst.cm[c] } else { 0.0 };
    max_over(k, |c| inst.sm[c])
        + max_over(k, |c| inst.cf[c] + inst.ca[c] + inst.s[c])
        + (inst.iterations - 1) as f64 * (sum_sg + max_lag)
        + sum_sg
        + max_over(k, |c| inst.cb[c] + cm(c))
}

/// `(lower, upper)` bounds of the asynchronous priority round, counted
/// from the end of the broadcast. The lower bound charges the smallest-lag
/// client's compute at both ends around back-to-back downloads.
pub fn cpsfl_bounds(inst: &LatencyInstance, include_cm: bool) -> (f64, f64) {
    let order = lag_order(inst);
    let c1 = *order.last().expect("validated instance");
    let sum_sg: f64 = inst.sg.iter().sum();
    let cm = if include_cm { inst.cm[c1] } else { 0.0 };
    let lower = inst.cf[c1] + inst.ca[c1] + inst.s[c1] + inst.iterations as f64 * sum_sg + inst.cb[c1] + cm;
    (lower, tau2(inst, include_cm))
}

/// Fully parallel round latency.
pub fn tau_pp(inst: &LatencyInstance, include_cm: bool) -> f64 {
    let i = inst.iterations as f64;
    max_over(inst.k(), |k| {
        let chain = inst.cf[k] + inst.ca[k] + inst.s[k] + inst.sg_par[k] + inst.cb[k];
        i * chain + if include_cm { inst.cm[k] } else { 0.0 }
    })
}

/// Round latency of a synchronous sequential server served in descending `l'`.
pub fn tau3(inst: &LatencyInstance, include_cm: bool) -> f64 {
    let order = pipe_lag_order(inst);
    let lp = inst.pipe_lags();
    let cm = |k: usize| if include_cm { inst.cm[k] } else { 0.0 };
    let first = max_over(inst.k(), |k| inst.cf[k] + inst.ca[k]);
    let middle = prefix_max(&order, &inst.s_seq, |k| lp[k]);
    let last = prefix_max(&order, &inst.s_seq, |k| inst.sg_par[k] + inst.cb[k] + cm(k));
    first + (inst.iterations - 1) as f64 * middle + last
}

pub fn tau3_hat(inst: &LatencyInstance) -> f64 {
    let lp = inst.pipe_lags();
    inst.iterations as f64 * prefix_max(&pipe_lag_order(inst), &inst.s_seq, |k| lp[k])
}

/// Compute steps zeroed, as in the communication-dominated regime.
pub fn communication_only(inst: &LatencyInstance) -> LatencyInstance {
    let mut out = inst.clone();
    for v in [&mut out.cf, &mut out.s, &mut out.cb, &mut out.s_seq] {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    out
}

/// Communication steps zeroed, as in the compute-dominated regime.
pub fn computation_only(inst: &LatencyInstance) -> LatencyInstance {
    let mut out = inst.clone();
    for v in [&mut out.ca, &mut out.sg, &mut out.sg_par] {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    out
}

/// Sufficient condition for sequential downloads to beat parallel ones
/// when compute is negligible.
pub fn case1_predicate(inst: &LatencyInstance) -> bool {
    let c = communication_only(inst);
    let lhs = t_iter(&c, &lag_order(&c));
    let rhs = max_over(c.k(), |k| c.sg_par[k] + c.ca[k]);
    lhs <= rhs
}

/// Sufficient condition for a sequential server to beat a shared one when
/// communication is negligible.
pub fn case2_predicate(inst: &LatencyInstance) -> bool {
    let c = computation_only(inst);
    let lp = c.pipe_lags();
    let lhs = prefix_max(&pipe_lag_order(&c), &c.s_seq, |k| lp[k]);
    let rhs = max_over(c.k(), |k| c.s[k] + c.cf[k] + c.cb[k]);
    lhs <= rhs
}

const INSTANCE_HEADER: [&str; 12] = [
    "instance", "iterations", "client", "sm_s", "cf_s", "ca_s", "s_s", "sg_s", "cb_s", "cm_s", "sg_par_s", "s_seq_s",
];

/// One row per client per instance.
pub fn write_instances_csv<W: Write>(out: W, instances: &[LatencyInstance]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(INSTANCE_HEADER)?;
    for (n, inst) in instances.iter().enumerate() {
        for k in 0..inst.k() {
            let vals = [
                inst.sm[k], inst.cf[k], inst.ca[k], inst.s[k], inst.sg[k], inst.cb[k], inst.cm[k], inst.sg_par[k], inst.s_seq[k],
            ];
            let mut row = vec![n.to_string(), inst.iterations.to_string(), k.to_string()];
            row.extend(vals.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn uniform_instance(k: usize, iterations: usize, v: f64) -> LatencyInstance {
        LatencyInstance::uniform(k, iterations, v)
    }

    pub(crate) fn random_instance(rng: &mut ChaCha8Rng, k: usize, iterations: usize) -> LatencyInstance {
        LatencyInstance::random_log_uniform(rng, k, iterations)
    }

    fn two_client() -> LatencyInstance {
        // lags 1 and 3 carried entirely by the upload
        let mut inst = uniform_instance(2, 1, 0.0);
        inst.ca = vec![1.0, 3.0];
        inst.sg = vec![0.5, 0.5];
        inst
    }

    #[test]
    fn iteration_latency_of_both_orders() {
        let inst = two_client();
        assert_eq!(lag_order(&inst), vec![1, 0]);
        assert_eq!(t_iter(&inst, &[1, 0]), 3.5);
        assert_eq!(t_iter(&inst, &[0, 1]), 4.0);
    }

    #[test]
    fn single_client_collapses_to_serial_sum() {
        let mut inst = uniform_instance(1, 3, 0.0);
        inst.cf = vec![0.1];
        inst.ca = vec![0.7];
        inst.s = vec![0.2];
        inst.sg = vec![0.3];
        inst.cb = vec![0.2];
        inst.sg_par = vec![0.3];
        inst.s_seq = vec![0.2];
        let serial = 3.0 * (0.1 + 0.7 + 0.2 + 0.3 + 0.2);
        let (lo, hi) = cpsfl_bounds(&inst, false);
        // the lower bound only overlaps downloads, so it is tight for one iteration
        assert!(lo < serial);
        assert!((hi - serial).abs() < 1e-12);
        let one = LatencyInstance { iterations: 1, ..inst.clone() };
        let (lo1, hi1) = cpsfl_bounds(&one, false);
        assert!((lo1 - serial / 3.0).abs() < 1e-12 && (hi1 - serial / 3.0).abs() < 1e-12);
        assert!((tau2(&inst, false) - serial).abs() < 1e-12);
        assert!((tau_max(&inst, false) - serial).abs() < 1e-12);
        assert!((tau_pp(&inst, false) - serial).abs() < 1e-12);
        assert!((tau3(&inst, false) - serial).abs() < 1e-12);
        assert!(case1_predicate(&inst) && case2_predicate(&inst));
    }

    #[test]
    fn symmetric_clients_share_the_maximum() {
        let inst = uniform_instance(4, 2, 0.25);
        // l = 1, sum sg = 1
        assert!((tau_max(&inst, false) - (0.75 + 1.0 * 2.0 + 1.0 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn equal_downlink_split_satisfies_case_one() {
        // sg' = K sg with sg non-increasing along ascending lag
        let k = 4;
        let mut inst = uniform_instance(k, 2, 0.0);
        inst.ca = vec![1.0, 2.0, 3.0, 4.0];
        inst.sg = vec![0.4, 0.3, 0.2, 0.1];
        inst.sg_par = inst.sg.iter().map(|x| k as f64 * x).collect();
        assert!(case1_predicate(&inst));
        let c = communication_only(&inst);
        assert!(tau2_hat(&c) <= tau3_hat(&c) + 1e-12);
        assert!((tau3_hat(&c) - tau_pp(&c, false)).abs() < 1e-12);
    }

    #[test]
    fn equal_server_split_satisfies_case_two() {
        let k = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut inst = random_instance(&mut rng, k, 3);
        inst.s_seq = vec![inst.s_seq[0]; k];
        inst.s = vec![k as f64 * inst.s_seq[0]; k];
        assert!(case2_predicate(&inst));
        let c = computation_only(&inst);
        assert!(tau3_hat(&c) <= tau2_hat(&c) + 1e-12);
        assert!((tau2_hat(&c) - tau_pp(&c, false)).abs() < 1e-12);
    }

    #[test]
    fn snapshot_rejects_incomplete_rounds() {
        let st = StepLatencies::new(2, 2);
        assert!(LatencyInstance::snapshot(&st).is_err());
    }

    #[test]
    fn csv_dump_has_one_row_per_client() {
        let mut buf = Vec::new();
        write_instances_csv(&mut buf, &[uniform_instance(3, 1, 0.5), uniform_instance(2, 1, 0.5)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("instance,iterations,client"));
    }

    proptest! {
        #[test]
        fn tau2_dominates_its_approximation(seed in any::<u64>(), k in 1usize..8, iters in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = random_instance(&mut rng, k, iters);
            prop_assert!(tau2(&inst, false) >= tau2_hat(&inst) - 1e-12);
            prop_assert!(tau3(&inst, false) >= tau3_hat(&inst) - 1e-12);
            prop_assert!(tau_max(&inst, false) >= tau2(&inst, false) - 1e-12);
            let (lo, hi) = cpsfl_bounds(&inst, false);
            prop_assert!(lo <= hi + 1e-12);
        }

        #[test]
        fn per_iteration_terms_dominate_for_many_iterations(seed in any::<u64>(), k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut inst = random_instance(&mut rng, k, 10);
            let gap = tau2(&inst, false) - tau2_hat(&inst);
            inst.iterations = 10_000;
            let gap_many = tau2(&inst, false) - tau2_hat(&inst);
            // the gap does not grow with I, so tau2 / I converges to tau2_hat / I
            prop_assert!((gap - gap_many).abs() < 1e-6 * tau2(&inst, false));
            prop_assert!(gap_many / tau2_hat(&inst) < 1e-2);
        }
    }
}
