use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::{Attention, AttentionCache, CHI_DIM};
use super::nn::{softmax, Mlp, MlpCache};
use crate::error::{Result, SimError};

/// Position and distance scale, meters.
const POSITION_SCALE: f64 = 1000.0;
/// Round-latency scale, seconds.
const TAU_SCALE: f64 = 10.0;
/// Energy scale, joules.
const ENERGY_SCALE: f64 = 10.0;
const OUTPUT_INIT_GAIN: f64 = 0.01;

/// What the base station sees at the start of round `n`: the decisions and
/// outcome of round `n - 1` plus every client's trajectory during it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub split: u32,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub energy: Vec<f64>,
    pub tau: f64,
    /// Per client, `(x, y, z, distance)` per slot; all of equal length >= 1.
    pub trajectories: Vec<Vec<[f64; CHI_DIM]>>,
}

impl Observation {
    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 || self.beta.len() != k || self.energy.len() != k || self.trajectories.len() != k {
            return Err(SimError::Dimension("observation vectors disagree on the client count".into()));
        }
        if self.trajectories.iter().any(Vec::is_empty) {
            return Err(SimError::Dimension("empty trajectory in observation".into()));
        }
        Ok(())
    }
}

/// Turns observations into the flat network input.
///
/// Layout: normalized split, `(alpha, beta, e)` per client, latency, then
/// per client either the attention feature (`h` wide) or the final-slot
/// distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub splits: Vec<u32>,
    pub clients: usize,
    /// Final-slot distances instead of attention features.
    pub flat: bool,
    pub attention: Attention,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    pub input: Vec<f64>,
    scaled: Vec<Vec<[f64; CHI_DIM]>>,
    attention: Vec<AttentionCache>,
}

impl Encoder {
    pub fn new<R: Rng>(splits: Vec<u32>, clients: usize, flat: bool, d_s: usize, h: usize, rng: &mut R) -> Self {
        Encoder {
            splits,
            clients,
            flat,
            attention: Attention::new(d_s, h, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Encoder {
            attention: self.attention.zeros_like(),
            ..self.clone()
        }
    }

    fn per_client(&self) -> usize {
        if self.flat {
            1
        } else {
            self.attention.h()
        }
    }

    pub fn input_dim(&self) -> usize {
        2 + 3 * self.clients + self.clients * self.per_client()
    }

    fn split_feature(&self, u: u32) -> Result<f64> {
        let idx = self
            .splits
            .iter()
            .position(|&s| s == u)
            .ok_or_else(|| SimError::Dimension(format!("split {u} not in the action space")))?;
        Ok(if self.splits.len() > 1 {
            idx as f64 / (self.splits.len() - 1) as f64
        } else {
            0.0
        })
    }

    pub fn encode(&self, obs: &Observation) -> Result<EncoderCache> {
        obs.validate()?;
        if obs.k() != self.clients {
            return Err(SimError::Dimension(format!("observation has {} clients, network {}", obs.k(), self.clients)));
        }
        let mut input = Vec::with_capacity(self.input_dim());
        input.push(self.split_feature(obs.split)?);
        for k in 0..self.clients {
            input.extend([obs.alpha[k], obs.beta[k], obs.energy[k] / ENERGY_SCALE]);
        }
        input.push(obs.tau / TAU_SCALE);
        let scaled: Vec<Vec<[f64; CHI_DIM]>> = obs
            .trajectories
            .iter()
            .map(|t| t.iter().map(|c| c.map(|v| v / POSITION_SCALE)).collect())
            .collect();
        let mut attention = Vec::new();
        if self.flat {
            input.extend(scaled.iter().map(|t| t[t.len() - 1][3]));
        } else {
            for t in &scaled {
                let c = self.attention.forward(t)?;
                input.extend_from_slice(&c.output);
                attention.push(c);
            }
        }
        Ok(EncoderCache {
            input,
            scaled,
            attention,
        })
    }

    /// Backpropagates `d_input` into the attention parameters.
    pub fn backward(&self, cache: &EncoderCache, d_input: &[f64], g: &mut Encoder) {
        if self.flat {
            return;
        }
        let h = self.attention.h();
        let base = 2 + 3 * self.clients;
        for (k, c) in cache.attention.iter().enumerate() {
            let df = &d_input[base + k * h..base + (k + 1) * h];
            self.attention.backward(&cache.scaled[k], c, df, &mut g.attention);
        }
    }
}

/// Policy head outputs for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub split_logits: Vec<f64>,
    pub split_probs: Vec<f64>,
    pub mu_alpha: Vec<f64>,
    pub mu_beta: Vec<f64>,
    /// Global log standard deviations of the alpha and beta logits.
    pub log_std: [f64; 2],
}

/// Upstream gradient on [`PolicyOutput`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutputGrad {
    pub split_logits: Vec<f64>,
    pub mu_alpha: Vec<f64>,
    pub mu_beta: Vec<f64>,
    pub log_std: [f64; 2],
}

impl PolicyOutputGrad {
    pub fn zeros(splits: usize, k: usize) -> Self {
        PolicyOutputGrad {
            split_logits: vec![0.0; splits],
            mu_alpha: vec![0.0; k],
            mu_beta: vec![0.0; k],
            log_std: [0.0; 2],
        }
    }
}

/// Shared 128/64 trunk with three 32-wide branches for the split, alpha and
/// beta logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub encoder: Encoder,
    pub trunk: Mlp,
    pub head_split: Mlp,
    pub head_alpha: Mlp,
    pub head_beta: Mlp,
    pub log_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PolicyCache {
    encoder: EncoderCache,
    trunk: MlpCache,
    heads: [MlpCache; 3],
}

impl PolicyNet {
    pub fn new<R: Rng>(encoder: Encoder, hidden: [usize; 3], init_log_std: f64, rng: &mut R) -> Self {
        let k = encoder.clients;
        let n_splits = encoder.splits.len();
        let trunk = Mlp::new(&[encoder.input_dim(), hidden[0], hidden[1]], true, rng);
        // Near-zero output layers start every branch close to uniform.
        let head = |out: usize, rng: &mut R| {
            let mut m = Mlp::new(&[hidden[1], hidden[2], out], false, rng);
            let last = m.layers.last_mut().expect("two layers");
            last.w.iter_mut().chain(&mut last.b).for_each(|v| *v *= OUTPUT_INIT_GAIN);
            m
        };
        PolicyNet {
            head_split: head(n_splits, rng),
            head_alpha: head(k, rng),
            head_beta: head(k, rng),
            encoder,
            trunk,
            log_std: vec![init_log_std; 2],
        }
    }

    pub fn zeros_like(&self) -> Self {
        PolicyNet {
            encoder: self.encoder.zeros_like(),
            trunk: self.trunk.zeros_like(),
            head_split: self.head_split.zeros_like(),
            head_alpha: self.head_alpha.zeros_like(),
            head_beta: self.head_beta.zeros_like(),
            log_std: vec![0.0; 2],
        }
    }

    pub fn forward(&self, obs: &Observation) -> Result<(PolicyOutput, PolicyCache)> {
        let encoder = self.encoder.encode(obs)?;
        let trunk = self.trunk.forward(&encoder.input);
        let z = trunk.last().expect("trunk output");
        let heads = [self.head_split.forward(z), self.head_alpha.forward(z), self.head_beta.forward(z)];
        let last = |c: &MlpCache| c.last().expect("head output").clone();
        let split_logits = last(&heads[0]);
        let out = PolicyOutput {
            split_probs: softmax(&split_logits),
            split_logits,
            mu_alpha: last(&heads[1]),
            mu_beta: last(&heads[2]),
            log_std: [self.log_std[0], self.log_std[1]],
        };
        Ok((out, PolicyCache { encoder, trunk, heads }))
    }

    pub fn backward(&self, cache: &PolicyCache, d: &PolicyOutputGrad, g: &mut PolicyNet) {
        let mut dz = self.head_split.backward(&cache.heads[0], &d.split_logits, &mut g.head_split);
        for (head, gh, c, dy) in [
            (&self.head_alpha, &mut g.head_alpha, &cache.heads[1], &d.mu_alpha),
            (&self.head_beta, &mut g.head_beta, &cache.heads[2], &d.mu_beta),
        ] {
            let extra = head.backward(c, dy, gh);
            dz.iter_mut().zip(extra).for_each(|(a, b)| *a += b);
        }
        let dx = self.trunk.backward(&cache.trunk, &dz, &mut g.trunk);
        self.encoder.backward(&cache.encoder, &dx, &mut g.encoder);
        g.log_std[0] += d.log_std[0];
        g.log_std[1] += d.log_std[1];
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut p = self.encoder.attention.params();
        for m in [&self.trunk, &self.head_split, &self.head_alpha, &self.head_beta] {
            p.extend(m.params());
        }
        p.push(&self.log_std);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.encoder.attention.params_mut();
        for m in [&mut self.trunk, &mut self.head_split, &mut self.head_alpha, &mut self.head_beta] {
            p.extend(m.params_mut());
        }
        p.push(&mut self.log_std);
        p
    }
}

/// State-value network with its own encoder: 128/64/32 hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    pub encoder: Encoder,
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct ValueCache {
    encoder: EncoderCache,
    mlp: MlpCache,
}

impl ValueNet {
    pub fn new<R: Rng>(encoder: Encoder, hidden: [usize; 3], rng: &mut R) -> Self {
        let mlp = Mlp::new(&[encoder.input_dim(), hidden[0], hidden[1], hidden[2], 1], false, rng);
        ValueNet { encoder, mlp }
    }

    pub fn zeros_like(&self) -> Self {
        ValueNet {
            encoder: self.encoder.zeros_like(),
            mlp: self.mlp.zeros_like(),
        }
    }

    pub fn forward(&self, obs: &Observation) -> Result<(f64, ValueCache)> {
        let encoder = self.encoder.encode(obs)?;
        let mlp = self.mlp.forward(&encoder.input);
        let v = mlp.last().expect("value output")[0];
        Ok((v, ValueCache { encoder, mlp }))
    }

    pub fn backward(&self, cache: &ValueCache, dv: f64, g: &mut ValueNet) {
        let dx = self.mlp.backward(&cache.mlp, &[dv], &mut g.mlp);
        self.encoder.backward(&cache.encoder, &dx, &mut g.encoder);
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut p = self.encoder.attention.params();
        p.extend(self.mlp.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.encoder.attention.params_mut();
        p.extend(self.mlp.params_mut());
        p
    }
}
