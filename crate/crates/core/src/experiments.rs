//! Experiment drivers: paradigm sweeps, certification suites and agent
//! training runs, each fanned out over a bounded worker pool and merged in
//! job order so results do not depend on the worker count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{run_training_loop, Agent, PpoConfig, TrainingLog, Variant};
use crate::airspace::MobileChannel;
use crate::analytics::{cpsfl_bounds, lag_order, t_iter, tau2, tau_max, tau_pp, LatencyInstance};
use crate::error::{ConfigError, Result, SimError};
use crate::oracle::{best_order_sync, best_static_order_async};
use crate::paradigms::{run_training, simulate, FixedTimer, Paradigm, UniformPlans};
use crate::profiles::{Ring, Scenario};

/// Transmit powers (W) of the five heterogeneity clusters: four clients per
/// ring, inner ring first.
pub const CLUSTER_POWERS: [[f64; 12]; 5] = [
    [0.2, 0.2, 0.2, 0.2, 0.4, 0.4, 0.4, 0.4, 0.8, 0.8, 0.8, 0.8],
    [0.4, 0.4, 0.4, 0.4, 0.8, 0.8, 0.2, 0.2, 0.4, 0.4, 0.4, 0.4],
    [0.4, 0.4, 0.4, 0.4, 0.8, 0.8, 0.8, 0.8, 1.6, 0.2, 0.2, 0.2],
    [0.8, 0.8, 0.8, 0.4, 0.8, 0.8, 0.2, 0.2, 0.4, 0.2, 0.2, 0.2],
    [0.8, 0.8, 0.8, 0.4, 0.8, 0.8, 0.4, 0.4, 0.8, 0.1, 0.1, 0.1],
];

/// Per-ring transmit powers (W) of the client-count sweep, inner ring first.
pub const CLIENT_SWEEP_POWERS: [f64; 3] = [0.9, 0.3, 0.1];

/// Split point used when the sweep does not vary it.
pub const DEFAULT_SPLIT: u32 = 2;

/// Default number of seeds per sweep point.
pub const DEFAULT_SEEDS: usize = 3;

/// The swept quantity and its values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sweep {
    Split(Vec<u32>),
    Iterations(Vec<usize>),
    Clients(Vec<usize>),
    /// Cluster numbers, 1-based.
    Cluster(Vec<usize>),
}

impl Sweep {
    pub fn kind(&self) -> &'static str {
        match self {
            Sweep::Split(_) => "split",
            Sweep::Iterations(_) => "iterations",
            Sweep::Clients(_) => "clients",
            Sweep::Cluster(_) => "cluster",
        }
    }

    pub fn values(&self) -> Vec<usize> {
        match self {
            Sweep::Split(v) => v.iter().map(|&u| u as usize).collect(),
            Sweep::Iterations(v) | Sweep::Clients(v) | Sweep::Cluster(v) => v.clone(),
        }
    }

    /// Scenario and split of every sweep point, in sweep order.
    pub fn points(&self, base: &Scenario) -> Result<Vec<(usize, Scenario, u32)>> {
        let invalid = |what: String| SimError::Config(ConfigError::invalid("sweep", what, "outside the supported range"));
        let mut out = Vec::new();
        match self {
            Sweep::Split(us) => {
                for &u in us {
                    base.split(u)?;
                    if !base.config.split_set.contains(&u) {
                        return Err(invalid(format!("split {u}")));
                    }
                    out.push((u as usize, base.clone(), u));
                }
            }
            Sweep::Iterations(is) => {
                for &i in is {
                    if i == 0 {
                        return Err(invalid("0 iterations".into()));
                    }
                    let mut s = base.clone();
                    s.config.local_iterations = i;
                    out.push((i, s, DEFAULT_SPLIT));
                }
            }
            Sweep::Clients(ks) => {
                let rings = three_rings(base)?;
                for &k in ks {
                    if k == 0 || k % 3 != 0 {
                        return Err(invalid(format!("{k} clients (need a positive multiple of 3)")));
                    }
                    let powers: Vec<f64> = CLIENT_SWEEP_POWERS.iter().flat_map(|&p| vec![p; k / 3]).collect();
                    out.push((k, with_ring_powers(base, &rings, &powers)?, DEFAULT_SPLIT));
                }
            }
            Sweep::Cluster(cs) => {
                let rings = three_rings(base)?;
                for &c in cs {
                    let powers = CLUSTER_POWERS.get(c.wrapping_sub(1)).ok_or_else(|| invalid(format!("cluster {c}")))?;
                    out.push((c, with_ring_powers(base, &rings, powers)?, DEFAULT_SPLIT));
                }
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v: Vec<String> = self.values().iter().map(ToString::to_string).collect();
        write!(f, "{}={}", self.kind(), v.join(","))
    }
}

impl FromStr for Sweep {
    type Err = String;

    /// `split`, `iterations`, `clients` or `cluster`, optionally followed by
    /// `=` and a list (`1,2,4`) or an inclusive range (`1..5`).
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (kind, list) = match s.split_once('=') {
            Some((k, l)) => (k.trim(), Some(l.trim())),
            None => (s.trim(), None),
        };
        let values = |default: &[usize]| -> std::result::Result<Vec<usize>, String> {
            let Some(list) = list else { return Ok(default.to_vec()) };
            let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad sweep value `{t}`"));
            let v = if let Some((a, b)) = list.split_once("..") {
                let (a, b) = (parse(a)?, parse(b.trim_start_matches('='))?);
                (a..=b).collect::<Vec<_>>()
            } else {
                list.split(',').map(parse).collect::<std::result::Result<Vec<_>, _>>()?
            };
            if v.is_empty() {
                return Err(format!("empty sweep `{s}`"));
            }
            Ok(v)
        };
        match kind {
            "split" | "u" => Ok(Sweep::Split(values(&[1, 2, 3, 4])?.into_iter().map(|u| u as u32).collect())),
            "iterations" | "I" => Ok(Sweep::Iterations(values(&[1, 2, 3, 4, 5])?)),
            "clients" | "K" => Ok(Sweep::Clients(values(&[3, 6, 9, 12])?)),
            "cluster" => Ok(Sweep::Cluster(values(&[1, 2, 3, 4, 5])?)),
            _ => Err(format!("unknown sweep `{kind}` (split, iterations, clients, cluster)")),
        }
    }
}

/// Distinct rings of `base`, innermost first; exactly three are required.
fn three_rings(base: &Scenario) -> Result<[Ring; 3]> {
    let mut rings: Vec<Ring> = Vec::new();
    for r in &base.rings {
        if !rings.contains(r) {
            rings.push(*r);
        }
    }
    rings.sort_by(|a, b| a.inner_m.total_cmp(&b.inner_m));
    rings
        .try_into()
        .map_err(|r: Vec<Ring>| SimError::Config(ConfigError::invalid("rings", r.len(), "the sweep needs exactly three distinct rings")))
}

/// Equal client counts per ring with the given powers, other client
/// parameters copied from the first client of `base`.
fn with_ring_powers(base: &Scenario, rings: &[Ring; 3], powers: &[f64]) -> Result<Scenario> {
    let per_ring = powers.len() / 3;
    let template = base.clients[0].clone();
    let clients = powers
        .iter()
        .map(|&p| {
            let mut c = template.clone();
            c.transmit_power = p;
            c
        })
        .collect();
    let ring_list = (0..powers.len()).map(|i| rings[i / per_ring]).collect();
    let s = base.clone().with_clients(clients, ring_list);
    s.validate()?;
    Ok(s)
}

/// Runs `f` on a pool of `workers` threads; `0` uses the rayon default.
pub fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::InvalidPlan(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Mean round latency of one paradigm at one sweep point and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub sweep: String,
    pub value: usize,
    pub paradigm: String,
    pub seed: u64,
    pub rounds: usize,
    pub mean_tau_s: f64,
}

/// Mean round latency of `paradigm` over `rounds` uniform-share rounds.
pub fn mean_round_latency(paradigm: Paradigm, scenario: &Scenario, split: u32, rounds: usize, seed: u64) -> Result<f64> {
    let channel = MobileChannel::new(scenario, seed)?;
    let mut plans = UniformPlans::for_paradigm(paradigm, scenario, split);
    let outcomes = run_training(paradigm, &mut plans, scenario, &channel, rounds, 0.0)?;
    Ok(outcomes.iter().map(|o| o.tau()).sum::<f64>() / rounds.max(1) as f64)
}

/// One row per (sweep point, seed, paradigm), in that nesting order.
pub fn compare_paradigms(
    base: &Scenario,
    sweep: &Sweep,
    paradigms: &[Paradigm],
    rounds: usize,
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<CompareRow>> {
    let points = sweep.points(base)?;
    let mut jobs = Vec::new();
    for (value, scenario, split) in &points {
        for &seed in seeds {
            for &p in paradigms {
                jobs.push((*value, scenario, *split, seed, p));
            }
        }
    }
    let kind = sweep.kind();
    in_pool(workers, || {
        jobs.par_iter()
            .map(|&(value, scenario, split, seed, p)| {
                Ok(CompareRow {
                    sweep: kind.to_string(),
                    value,
                    paradigm: p.name().to_string(),
                    seed,
                    rounds,
                    mean_tau_s: mean_round_latency(p, scenario, split, rounds, seed)?,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?
}

/// Seed statistics of one (sweep point, paradigm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep: String,
    pub value: usize,
    pub paradigm: String,
    pub seeds: usize,
    pub mean_tau_s: f64,
    pub min_tau_s: f64,
    pub max_tau_s: f64,
}

/// Groups rows by (value, paradigm) in first-appearance order.
pub fn summarize(rows: &[CompareRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|s| s.value == r.value && s.paradigm == r.paradigm) {
            Some(s) => {
                s.mean_tau_s += r.mean_tau_s;
                s.min_tau_s = s.min_tau_s.min(r.mean_tau_s);
                s.max_tau_s = s.max_tau_s.max(r.mean_tau_s);
                s.seeds += 1;
            }
            None => out.push(SummaryRow {
                sweep: r.sweep.clone(),
                value: r.value,
                paradigm: r.paradigm.clone(),
                seeds: 1,
                mean_tau_s: r.mean_tau_s,
                min_tau_s: r.mean_tau_s,
                max_tau_s: r.mean_tau_s,
            }),
        }
    }
    for s in &mut out {
        s.mean_tau_s /= s.seeds as f64;
    }
    out
}

/// Mean latency of `paradigm` at `value` in a summary.
pub fn summary_mean(summary: &[SummaryRow], value: usize, paradigm: Paradigm) -> Option<f64> {
    summary
        .iter()
        .find(|s| s.value == value && s.paradigm == paradigm.name())
        .map(|s| s.mean_tau_s)
}

pub fn write_rows_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Certification suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerifySuite {
    Theorems,
    Bounds,
    ClosedForms,
}

impl FromStr for VerifySuite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().replace('-', "_").as_str() {
            "theorems" => Ok(VerifySuite::Theorems),
            "bounds" => Ok(VerifySuite::Bounds),
            "closed_forms" => Ok(VerifySuite::ClosedForms),
            _ => Err(format!("unknown verify level `{s}` (theorems, bounds, closed_forms)")),
        }
    }
}

/// Outcome of one certified property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    /// Largest relative violation seen, `0` when none.
    pub worst: f64,
    /// Diagnostic checks are reported but never fail the suite.
    pub gating: bool,
}

impl PropertyCheck {
    fn new(name: &str, gating: bool) -> Self {
        PropertyCheck {
            name: name.to_string(),
            checked: 0,
            failures: 0,
            worst: 0.0,
            gating,
        }
    }

    /// Records whether `value <= bound` within relative `tol`.
    fn at_most(&mut self, value: f64, bound: f64, tol: f64) {
        self.checked += 1;
        let excess = (value - bound) / bound.abs().max(f64::MIN_POSITIVE);
        if excess > tol {
            self.failures += 1;
            self.worst = self.worst.max(excess);
        }
    }

    fn equal(&mut self, a: f64, b: f64, tol: f64) {
        self.checked += 1;
        let gap = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        if gap > tol {
            self.failures += 1;
            self.worst = self.worst.max(gap);
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for PropertyCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} checked, {} failed, worst relative violation {:.3e}{}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.checked,
            self.failures,
            self.worst,
            if self.gating { "" } else { " (diagnostic)" }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<PropertyCheck>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.gating).all(PropertyCheck::passed)
    }
}

/// Relative tolerance of every exact equality and ordering.
pub const VERIFY_TOL: f64 = 1e-9;

fn run_fixed(p: Paradigm, inst: &LatencyInstance) -> Result<f64> {
    Ok(simulate(&p.discipline(), &FixedTimer::new(inst)?, 0.0)?.tau())
}

/// Descending-lag download order against every order, on `n` instances with
/// `K` cycling through 2..=6.
pub fn verify_iteration_order(n: usize, seed: u64) -> Result<PropertyCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = PropertyCheck::new("descending-lag download order is iteration-optimal", true);
    for j in 0..n {
        let inst = LatencyInstance::random_log_uniform(&mut rng, 2 + j % 5, 1);
        let search = best_order_sync(&inst)?;
        check.at_most(t_iter(&inst, &lag_order(&inst)), search.best, VERIFY_TOL);
    }
    Ok(check)
}

/// Descending-lag asynchronous priority against every static ranking on `n`
/// equal-download instances with `K` cycling through 2..=5 and three
/// iterations. The shared download time is log-uniform in `download_range`.
pub fn verify_round_priority(n: usize, seed: u64, download_range: (f64, f64), gating: bool) -> Result<PropertyCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = format!(
        "descending-lag asynchronous priority is round-optimal (download time in [{}, {}] s)",
        download_range.0, download_range.1
    );
    let mut check = PropertyCheck::new(&name, gating);
    let (lo, hi) = (download_range.0.log10(), download_range.1.log10());
    for j in 0..n {
        let mut inst = LatencyInstance::random_equal_download(&mut rng, 2 + j % 4, 3);
        let sg = 10f64.powf(rng.random_range(lo..=hi));
        inst.sg = vec![sg; inst.k()];
        let search = best_static_order_async(&inst)?;
        check.at_most(run_fixed(Paradigm::Cpsfl, &inst)?, search.best, VERIFY_TOL);
    }
    Ok(check)
}

/// Simulated rounds against the closed forms on `n` constant-channel
/// instances.
pub fn verify_closed_forms(n: usize, seed: u64) -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut no_at = PropertyCheck::new("lag-ordered synchronous downloads equal tau_2", true);
    let mut pp = PropertyCheck::new("parallel-parallel round equals tau_PP", true);
    for j in 0..n {
        let inst = LatencyInstance::random_log_uniform(&mut rng, 2 + j % 5, 1 + j % 4);
        no_at.equal(run_fixed(Paradigm::CpsflNoAt, &inst)?, tau2(&inst, false), VERIFY_TOL);
        pp.equal(run_fixed(Paradigm::SflPp, &inst)?, tau_pp(&inst, false), VERIFY_TOL);
    }
    Ok(vec![no_at, pp])
}

/// Bound chain on per-round snapshots of `rounds` simulated rounds of
/// `scenario` with uniform shares.
pub fn verify_bounds(scenario: &Scenario, rounds: usize, seed: u64) -> Result<Vec<PropertyCheck>> {
    let channel = MobileChannel::new(scenario, seed)?;
    let mut plans = UniformPlans::for_paradigm(Paradigm::Cpsfl, scenario, DEFAULT_SPLIT);
    let outcomes = run_training(Paradigm::Cpsfl, &mut plans, scenario, &channel, rounds, 0.0)?;
    let mut checks = [
        "tau_lower <= tau(CPSFL)",
        "tau(CPSFL) <= tau_2",
        "tau_2 <= tau_1",
        "tau_1 <= tau_max",
    ]
    .map(|n| PropertyCheck::new(n, true));
    for o in &outcomes {
        let inst = LatencyInstance::snapshot(&o.trace.steps)?.without_sm_cm();
        let (lower, _) = cpsfl_bounds(&inst, false);
        let chain = [
            lower,
            run_fixed(Paradigm::Cpsfl, &inst)?,
            tau2(&inst, false),
            run_fixed(Paradigm::VanillaSflPs, &inst)?,
            tau_max(&inst, false),
        ];
        for (c, w) in checks.iter_mut().zip(chain.windows(2)) {
            c.at_most(w[0], w[1], VERIFY_TOL);
        }
    }
    Ok(checks.into())
}

/// Runs one suite with `budget` instances or rounds.
pub fn verify(suite: VerifySuite, budget: usize, scenario: &Scenario, seed: u64) -> Result<VerifyReport> {
    let checks = match suite {
        VerifySuite::Theorems => vec![
            verify_iteration_order(budget, seed)?,
            verify_round_priority(budget / 2, seed, (0.01, 10.0), true)?,
            verify_round_priority(budget / 2, seed, (0.01, 0.1), false)?,
        ],
        VerifySuite::ClosedForms => verify_closed_forms(budget, seed)?,
        VerifySuite::Bounds => verify_bounds(scenario, budget, seed)?,
    };
    Ok(VerifyReport { checks })
}

/// One agent training run.
#[derive(Debug, Clone)]
pub struct DrlRun {
    pub variant: Variant,
    pub seed: u64,
    pub log: TrainingLog,
    pub checkpoint: String,
}

/// Trains one agent of `variant` on the mobility of `seed`.
pub fn train_drl(scenario: &Scenario, paradigm: Paradigm, variant: Variant, config: &PpoConfig, rounds: usize, seed: u64) -> Result<DrlRun> {
    let channel = MobileChannel::new(scenario, seed)?;
    let mut agent = Agent::new(scenario, paradigm, variant, config.clone(), seed)?;
    let log = run_training_loop(scenario, paradigm, Some(&mut agent), DEFAULT_SPLIT, &channel, rounds)?;
    Ok(DrlRun {
        variant,
        seed,
        log,
        checkpoint: agent.to_checkpoint_json()?,
    })
}

/// Trains every `(variant, seed)` job on the pool, results in job order.
pub fn train_drl_many(
    scenario: &Scenario,
    paradigm: Paradigm,
    jobs: &[(Variant, u64)],
    config: &PpoConfig,
    rounds: usize,
    workers: usize,
) -> Result<Vec<DrlRun>> {
    in_pool(workers, || {
        jobs.par_iter()
            .map(|&(v, seed)| train_drl(scenario, paradigm, v, config, rounds, seed))
            .collect::<Result<Vec<_>>>()
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::builtin_scenario;

    #[test]
    fn sweep_specs_parse() {
        assert_eq!("split".parse::<Sweep>().unwrap(), Sweep::Split(vec![1, 2, 3, 4]));
        assert_eq!("iterations=1..3".parse::<Sweep>().unwrap(), Sweep::Iterations(vec![1, 2, 3]));
        assert_eq!("clients=3,6".parse::<Sweep>().unwrap(), Sweep::Clients(vec![3, 6]));
        assert_eq!("cluster".parse::<Sweep>().unwrap().to_string(), "cluster=1,2,3,4,5");
        assert!("cluster=a".parse::<Sweep>().is_err());
        assert!("speed".parse::<Sweep>().is_err());
    }

    #[test]
    fn cluster_points_follow_the_power_table() {
        let base = builtin_scenario();
        let pts = Sweep::Cluster(vec![1, 5]).points(&base).unwrap();
        for ((c, s, u), row) in pts.iter().zip([CLUSTER_POWERS[0], CLUSTER_POWERS[4]]) {
            assert_eq!(s.k(), 12, "cluster {c}");
            assert_eq!(*u, DEFAULT_SPLIT);
            let p: Vec<f64> = s.clients.iter().map(|c| c.transmit_power).collect();
            assert_eq!(p, row);
            assert!(s.rings[..4].iter().all(|r| r.inner_m == s.rings[0].inner_m));
            assert!(s.rings[0].inner_m < s.rings[4].inner_m && s.rings[4].inner_m < s.rings[8].inner_m);
        }
        assert!(Sweep::Cluster(vec![6]).points(&base).is_err());
        assert!(Sweep::Clients(vec![4]).points(&base).is_err());
    }

    #[test]
    fn client_points_split_evenly_over_rings() {
        let base = builtin_scenario();
        let pts = Sweep::Clients(vec![6]).points(&base).unwrap();
        let p: Vec<f64> = pts[0].1.clients.iter().map(|c| c.transmit_power).collect();
        assert_eq!(p, vec![0.9, 0.9, 0.3, 0.3, 0.1, 0.1]);
    }

    #[test]
    fn rows_do_not_depend_on_worker_count() {
        let base = builtin_scenario();
        let sweep = Sweep::Split(vec![2, 3]);
        let ps = [Paradigm::Cpsfl, Paradigm::SflPp];
        let a = compare_paradigms(&base, &sweep, &ps, 3, &[1, 2], 1).unwrap();
        let b = compare_paradigms(&base, &sweep, &ps, 3, &[1, 2], 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        let s = summarize(&a);
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|r| r.seeds == 2 && r.min_tau_s <= r.mean_tau_s && r.mean_tau_s <= r.max_tau_s));
    }

    #[test]
    fn small_suites_pass() {
        assert!(verify_iteration_order(20, 1).unwrap().passed());
        assert!(verify_closed_forms(20, 2).unwrap().iter().all(PropertyCheck::passed));
        let base = builtin_scenario();
        let r = verify(VerifySuite::Bounds, 5, &base, 3).unwrap();
        assert!(r.passed(), "{:?}", r.checks);
    }
}
