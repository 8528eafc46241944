use cpsfl_core::airspace::{read_trajectory_csv, write_trajectory_csv, MobileChannel};
use cpsfl_core::paradigms::{run_training, Paradigm, UniformPlans};
use cpsfl_core::profiles::{builtin_scenario, load_scenario, Scenario};

fn mean_tau(p: Paradigm, s: &Scenario, seed: u64, rounds: usize) -> f64 {
    let ch = MobileChannel::new(s, seed).unwrap();
    let mut plans = UniformPlans::for_paradigm(p, s, 2);
    let out = run_training(p, &mut plans, s, &ch, rounds, 0.0).unwrap();
    out.iter().map(|o| o.tau()).sum::<f64>() / rounds as f64
}

#[test]
fn shipped_document_round_trips() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/default_scenario.toml")).unwrap();
    let s = load_scenario(&text).unwrap();
    assert_eq!(s, builtin_scenario());
    assert_eq!(load_scenario(&s.to_document()).unwrap(), s);
}

#[test]
fn single_client_rounds_agree_across_paradigms() {
    let base = builtin_scenario();
    let (c, r) = (base.clients[0].clone(), base.rings[0]);
    let s = base.with_clients(vec![c], vec![r]);
    let reference = mean_tau(Paradigm::SflPp, &s, 2, 5);
    for p in Paradigm::ALL {
        let t = mean_tau(p, &s, 2, 5);
        assert!((t - reference).abs() <= 1e-9 * reference, "{}: {t} vs {reference}", p.name());
    }
}

#[test]
fn replayed_trajectory_reproduces_rounds() {
    let s = builtin_scenario();
    let live = MobileChannel::new(&s, 6).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, &live, 600).unwrap();
    let replay = read_trajectory_csv(buf.as_slice(), s.config.slot_s).unwrap();
    let run = |ch: &dyn cpsfl_core::airspace::Channel| {
        let mut plans = UniformPlans::for_paradigm(Paradigm::Cpsfl, &s, 2);
        run_training(Paradigm::Cpsfl, &mut plans, &s, ch, 3, 0.0).unwrap()
    };
    let fresh = MobileChannel::new(&s, 6).unwrap();
    for (a, b) in run(&fresh).iter().zip(run(&replay).iter()) {
        assert!((a.tau() - b.tau()).abs() <= 1e-9 * a.tau());
    }
}

#[test]
fn priority_never_loses_to_synchronous_batches_on_average() {
    let s = builtin_scenario();
    for seed in [1, 2] {
        let c = mean_tau(Paradigm::Cpsfl, &s, seed, 20);
        let v = mean_tau(Paradigm::VanillaSflPs, &s, seed, 20);
        assert!(c < v, "seed {seed}: {c} vs {v}");
    }
}
