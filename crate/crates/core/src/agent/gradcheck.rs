//! Central-difference checks of every hand-written backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::action::Action;
use super::attention::{Attention, CHI_DIM};
use super::nn::{softmax, Mlp};
use super::policy::{Encoder, Observation, PolicyNet, PolicyOutput, PolicyOutputGrad, ValueNet};
use super::ppo::{add_entropy_grad, add_log_prob_grad, entropy, log_prob, ActionMask};
use crate::error::Result;

/// Relative tolerance: `|analytic - numeric| <= GRAD_TOL * max(|numeric|, 1e-3)`.
pub const GRAD_TOL: f64 = 1e-4;
const STEP: f64 = 1e-6;
const FLOOR: f64 = 1e-3;

/// Agreement of one backward pass with central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    pub worst_rel: f64,
}

impl GradCheck {
    fn new(name: &str) -> Self {
        GradCheck {
            name: name.into(),
            checked: 0,
            failures: 0,
            worst_rel: 0.0,
        }
    }

    /// `f(j, h)` evaluates the scalar loss with coordinate `j` shifted by `h`.
    fn compare(&mut self, analytic: &[f64], mut f: impl FnMut(usize, f64) -> f64) {
        for (j, &a) in analytic.iter().enumerate() {
            let num = (f(j, STEP) - f(j, -STEP)) / (2.0 * STEP);
            let rel = (a - num).abs() / num.abs().max(FLOOR);
            self.checked += 1;
            self.worst_rel = self.worst_rel.max(rel);
            if rel > GRAD_TOL {
                self.failures += 1;
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn random_observation(rng: &mut ChaCha8Rng, splits: &[u32], k: usize, m: usize) -> Observation {
    let share = vec![1.0 / k as f64; k];
    Observation {
        split: splits[rng.random_range(0..splits.len())],
        alpha: share.clone(),
        beta: share,
        energy: random_vec(rng, k, 0.5, 6.0),
        tau: rng.random_range(1.0..20.0),
        trajectories: (0..k)
            .map(|_| {
                (0..m)
                    .map(|_| {
                        let (x, y): (f64, f64) = (rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
                        [x, y, 20.0, (x * x + y * y + 100.0).sqrt()]
                    })
                    .collect()
            })
            .collect(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks the MLP, attention, value, policy and log-probability gradients on
/// small randomly initialized instances.
pub fn check_all(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits = [1, 2, 3, 4];
    let mut out = Vec::new();

    let mut c = GradCheck::new("mlp");
    let mlp = Mlp::new(&[5, 7, 4, 3], false, &mut rng);
    let x = random_vec(&mut rng, 5, -1.0, 1.0);
    let w = random_vec(&mut rng, 3, -1.0, 1.0);
    let mut g = mlp.zeros_like();
    let dx = mlp.backward(&mlp.forward(&x), &w, &mut g);
    let loss = |m: &Mlp, x: &[f64]| dot(m.forward(x).last().expect("output"), &w);
    c.compare(&dx, |j, h| {
        let mut xs = x.clone();
        xs[j] += h;
        loss(&mlp, &xs)
    });
    for (idx, grads) in g.params().iter().enumerate() {
        c.compare(grads, |j, h| {
            let mut m = mlp.clone();
            m.params_mut()[idx][j] += h;
            loss(&m, &x)
        });
    }
    out.push(c);

    let mut c = GradCheck::new("attention");
    let att = Attention::new(8, 6, &mut rng);
    let seq: Vec<[f64; CHI_DIM]> = (0..5).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
    let df = random_vec(&mut rng, 6, -1.0, 1.0);
    let mut g = att.zeros_like();
    att.backward(&seq, &att.forward(&seq)?, &df, &mut g);
    for (idx, grads) in g.params().iter().enumerate() {
        c.compare(grads, |j, h| {
            let mut a = att.clone();
            a.params_mut()[idx][j] += h;
            dot(&a.forward(&seq).expect("non-empty").output, &df)
        });
    }
    out.push(c);

    let mut c = GradCheck::new("value network");
    let enc = Encoder::new(splits.to_vec(), 2, false, 8, 5, &mut rng);
    let value = ValueNet::new(enc, [10, 8, 6], &mut rng);
    let obs = random_observation(&mut rng, &splits, 2, 4);
    let (_, cache) = value.forward(&obs)?;
    let mut g = value.zeros_like();
    value.backward(&cache, 1.0, &mut g);
    for (idx, grads) in g.params().iter().enumerate() {
        c.compare(grads, |j, h| {
            let mut n = value.clone();
            n.params_mut()[idx][j] += h;
            n.forward(&obs).expect("valid observation").0
        });
    }
    out.push(c);

    for flat in [false, true] {
        let mut c = GradCheck::new(if flat { "policy network (flat)" } else { "policy network" });
        let enc = Encoder::new(splits.to_vec(), 2, flat, 8, 5, &mut rng);
        let policy = PolicyNet::new(enc, [10, 8, 6], -0.3, &mut rng);
        let obs = random_observation(&mut rng, &splits, 2, 5);
        let w = PolicyOutputGrad {
            split_logits: random_vec(&mut rng, 4, -1.0, 1.0),
            mu_alpha: random_vec(&mut rng, 2, -1.0, 1.0),
            mu_beta: random_vec(&mut rng, 2, -1.0, 1.0),
            log_std: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        };
        let loss = |n: &PolicyNet| {
            let o = n.forward(&obs).expect("valid observation").0;
            dot(&o.split_logits, &w.split_logits) + dot(&o.mu_alpha, &w.mu_alpha) + dot(&o.mu_beta, &w.mu_beta) + dot(&o.log_std, &w.log_std)
        };
        let (_, cache) = policy.forward(&obs)?;
        let mut g = policy.zeros_like();
        policy.backward(&cache, &w, &mut g);
        for (idx, grads) in g.params().iter().enumerate() {
            c.compare(grads, |j, h| {
                let mut n = policy.clone();
                n.params_mut()[idx][j] += h;
                loss(&n)
            });
        }
        out.push(c);
    }

    let mut c = GradCheck::new("log-probability and entropy");
    let k = 3;
    let logits = random_vec(&mut rng, 4, -2.0, 2.0);
    let po = PolicyOutput {
        split_probs: softmax(&logits),
        split_logits: logits,
        mu_alpha: random_vec(&mut rng, k, -1.0, 1.0),
        mu_beta: random_vec(&mut rng, k, -1.0, 1.0),
        log_std: [rng.random_range(-1.0..0.5), rng.random_range(-1.0..0.5)],
    };
    let action = Action {
        split_index: 2,
        z_alpha: Some(random_vec(&mut rng, k, -2.0, 2.0)),
        z_beta: Some(random_vec(&mut rng, k, -2.0, 2.0)),
    };
    let mask = ActionMask { split: true, allocation: true };
    let perturb = |j: usize, h: f64| {
        let mut o = po.clone();
        match j {
            0..4 => {
                o.split_logits[j] += h;
                o.split_probs = softmax(&o.split_logits);
            }
            _ if j < 4 + k => o.mu_alpha[j - 4] += h,
            _ if j < 4 + 2 * k => o.mu_beta[j - 4 - k] += h,
            _ => o.log_std[j - 4 - 2 * k] += h,
        }
        o
    };
    let flatten = |g: &PolicyOutputGrad| -> Vec<f64> {
        g.split_logits.iter().chain(&g.mu_alpha).chain(&g.mu_beta).chain(&g.log_std).copied().collect()
    };
    let mut gl = PolicyOutputGrad::zeros(4, k);
    add_log_prob_grad(&po, &action, mask, 1.0, &mut gl);
    c.compare(&flatten(&gl), |j, h| log_prob(&perturb(j, h), &action, mask));
    let mut ge = PolicyOutputGrad::zeros(4, k);
    add_entropy_grad(&po, mask, 1.0, &mut ge);
    c.compare(&flatten(&ge), |j, h| entropy(&perturb(j, h), mask));
    out.push(c);

    Ok(out)
}
