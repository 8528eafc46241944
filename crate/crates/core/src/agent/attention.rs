use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{softmax, with_encodings, Linear};
use crate::error::{Result, SimError};

/// Width of one trajectory sample `(x, y, z, distance)`.
pub const CHI_DIM: usize = 4;

/// Scaled dot-product attention over one client's trajectory.
///
/// The query is the last sample. Keys, values and the query get sinusoidal
/// encodings of their slot offset within the sequence added after projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    /// `d_s x 4`, no bias.
    pub w_q: Linear,
    /// `d_s x 4`, no bias.
    pub w_k: Linear,
    /// `h x 4`, no bias.
    pub w_v: Linear,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub query: Vec<f64>,
    /// Row-major `m x d_s`.
    pub keys: Vec<f64>,
    /// Row-major `m x h`.
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub output: Vec<f64>,
}

/// `out[r] = sum_c w[r][c] x[c]` for a bias-free `rows x 4` projection.
fn project(w: &[f64], x: &[f64; CHI_DIM], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(CHI_DIM)) {
        *o += row[0] * x[0] + row[1] * x[1] + row[2] * x[2] + row[3] * x[3];
    }
}

/// `g[r][c] += d[r] x[c]`.
fn outer_add(g: &mut [f64], d: &[f64], x: &[f64; CHI_DIM]) {
    for (row, dr) in g.chunks_exact_mut(CHI_DIM).zip(d) {
        for c in 0..CHI_DIM {
            row[c] += dr * x[c];
        }
    }
}

impl Attention {
    pub fn new<R: Rng>(d_s: usize, h: usize, rng: &mut R) -> Self {
        let mut proj = |out| {
            let mut l = Linear::new(CHI_DIM, out, rng);
            l.b.iter_mut().for_each(|b| *b = 0.0);
            l
        };
        Attention {
            w_q: proj(d_s),
            w_k: proj(d_s),
            w_v: proj(h),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Attention {
            w_q: self.w_q.zeros_like(),
            w_k: self.w_k.zeros_like(),
            w_v: self.w_v.zeros_like(),
        }
    }

    pub fn d_s(&self) -> usize {
        self.w_q.out
    }

    pub fn h(&self) -> usize {
        self.w_v.out
    }

    pub fn forward(&self, seq: &[[f64; CHI_DIM]]) -> Result<AttentionCache> {
        let m = seq.len();
        if m == 0 {
            return Err(SimError::Dimension("attention needs at least one slot".into()));
        }
        let (d_s, h) = (self.d_s(), self.h());
        let (query, keys, values) = with_encodings(&[d_s, h], m, |pe| {
            let mut query = pe[0][(m - 1) * d_s..m * d_s].to_vec();
            project(&self.w_q.w, &seq[m - 1], &mut query);
            let mut keys = pe[0].to_vec();
            let mut values = pe[1].to_vec();
            for (i, x) in seq.iter().enumerate() {
                project(&self.w_k.w, x, &mut keys[i * d_s..(i + 1) * d_s]);
                project(&self.w_v.w, x, &mut values[i * h..(i + 1) * h]);
            }
            (query, keys, values)
        });
        let scale = (d_s as f64).sqrt();
        let scores: Vec<f64> = keys.chunks_exact(d_s).map(|k| dot(k, &query) / scale).collect();
        let weights = softmax(&scores);
        let mut output = vec![0.0; h];
        for (a, v) in weights.iter().zip(values.chunks_exact(h)) {
            output.iter_mut().zip(v).for_each(|(o, v)| *o += a * v);
        }
        Ok(AttentionCache {
            query,
            keys,
            values,
            weights,
            output,
        })
    }

    /// Accumulates parameter gradients for upstream gradient `df`.
    pub fn backward(&self, seq: &[[f64; CHI_DIM]], cache: &AttentionCache, df: &[f64], g: &mut Attention) {
        let (d_s, h) = (self.d_s(), self.h());
        let scale = (d_s as f64).sqrt();
        let a = &cache.weights;
        let da: Vec<f64> = cache.values.chunks_exact(h).map(|v| dot(v, df)).collect();
        let mean_da = dot(a, &da);
        let mut dq = vec![0.0; d_s];
        let mut dv = vec![0.0; h];
        let mut dk = vec![0.0; d_s];
        for (i, x) in seq.iter().enumerate() {
            dv.iter_mut().zip(df).for_each(|(d, f)| *d = a[i] * f);
            outer_add(&mut g.w_v.w, &dv, x);
            let dz = a[i] * (da[i] - mean_da);
            dk.iter_mut().zip(&cache.query).for_each(|(d, q)| *d = dz * q / scale);
            outer_add(&mut g.w_k.w, &dk, x);
            let key = &cache.keys[i * d_s..(i + 1) * d_s];
            dq.iter_mut().zip(key).for_each(|(d, k)| *d += dz * k / scale);
        }
        outer_add(&mut g.w_q.w, &dq, &seq[seq.len() - 1]);
    }

    pub fn params(&self) -> Vec<&[f64]> {
        vec![&self.w_q.w, &self.w_k.w, &self.w_v.w]
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w_q.w, &mut self.w_k.w, &mut self.w_v.w]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
