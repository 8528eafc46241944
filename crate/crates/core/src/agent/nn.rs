use std::cell::RefCell;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense layer `y = W x + b` with `W` stored row-major `out x inp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub inp: usize,
    pub out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    /// Uniform fan-in initialization in `±1/sqrt(inp)`.
    pub fn new<R: Rng>(inp: usize, out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inp as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        Linear {
            inp,
            out,
            w: draw(inp * out),
            b: draw(out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Linear {
            inp: self.inp,
            out: self.out,
            w: vec![0.0; self.w.len()],
            b: vec![0.0; self.b.len()],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inp);
        (0..self.out)
            .map(|o| {
                let row = &self.w[o * self.inp..(o + 1) * self.inp];
                self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients into `g` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], g: &mut Linear) -> Vec<f64> {
        let mut dx = vec![0.0; self.inp];
        for o in 0..self.out {
            let d = dy[o];
            if d == 0.0 {
                continue;
            }
            g.b[o] += d;
            let row = &self.w[o * self.inp..(o + 1) * self.inp];
            let grow = &mut g.w[o * self.inp..(o + 1) * self.inp];
            for j in 0..self.inp {
                grow[j] += d * x[j];
                dx[j] += d * row[j];
            }
        }
        dx
    }

    pub fn params(&self) -> Vec<&[f64]> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Stack of dense layers with `tanh` after every hidden layer and, when
/// `squash_output` is set, after the last one too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub squash_output: bool,
}

/// Layer inputs of one forward pass; the last entry is the output.
pub type MlpCache = Vec<Vec<f64>>;

impl Mlp {
    pub fn new<R: Rng>(sizes: &[usize], squash_output: bool, rng: &mut R) -> Self {
        Mlp {
            layers: sizes.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect(),
            squash_output,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self.layers.iter().map(Linear::zeros_like).collect(),
            squash_output: self.squash_output,
        }
    }

    fn squashed(&self, idx: usize) -> bool {
        idx + 1 < self.layers.len() || self.squash_output
    }

    pub fn forward(&self, x: &[f64]) -> MlpCache {
        let mut cache = vec![x.to_vec()];
        for (idx, l) in self.layers.iter().enumerate() {
            let mut y = l.forward(cache.last().expect("input present"));
            if self.squashed(idx) {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            cache.push(y);
        }
        cache
    }

    pub fn backward(&self, cache: &MlpCache, dy: &[f64], g: &mut Mlp) -> Vec<f64> {
        let mut d = dy.to_vec();
        for idx in (0..self.layers.len()).rev() {
            if self.squashed(idx) {
                for (dv, y) in d.iter_mut().zip(&cache[idx + 1]) {
                    *dv *= 1.0 - y * y;
                }
            }
            d = self.layers[idx].backward(&cache[idx], &d, &mut g.layers[idx]);
        }
        d
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(Linear::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(Linear::params_mut).collect()
    }
}

/// Adam over a fixed list of parameter slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[usize]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One descent step on `params` with gradients `grads` (same layout).
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (n, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[n], &mut self.v[n]);
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                p[j] -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Sinusoidal encoding of position `pos` in `dim` dimensions, base `1e4`.
pub fn positional_encoding(pos: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let angle = pos as f64 / 1e4f64.powf((i - i % 2) as f64 / dim as f64);
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

thread_local! {
    /// Row-major encodings per dimension, grown on demand.
    static ENCODINGS: RefCell<Vec<(usize, Vec<f64>)>> = const { RefCell::new(Vec::new()) };
}

/// Calls `f` with the encodings of positions `0..len` for each of `dims`,
/// each as a row-major `len x dim` slice.
pub fn with_encodings<T>(dims: &[usize], len: usize, f: impl FnOnce(&[&[f64]]) -> T) -> T {
    ENCODINGS.with(|cell| {
        {
            let mut tables = cell.borrow_mut();
            for &dim in dims {
                let idx = match tables.iter().position(|(d, _)| *d == dim) {
                    Some(i) => i,
                    None => {
                        tables.push((dim, Vec::new()));
                        tables.len() - 1
                    }
                };
                let rows = &mut tables[idx].1;
                let have = if dim == 0 { len } else { rows.len() / dim };
                for pos in have..len {
                    rows.extend(positional_encoding(pos, dim));
                }
            }
        }
        let tables = cell.borrow();
        let slices: Vec<&[f64]> = dims
            .iter()
            .map(|d| {
                let rows = &tables.iter().find(|(dim, _)| dim == d).expect("table built above").1;
                &rows[..len * d]
            })
            .collect();
        f(&slices)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central-difference gradient of `f` at every coordinate of `p`.
    fn numeric(p: &mut [f64], f: &mut dyn FnMut(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..p.len())
            .map(|j| {
                let x = p[j];
                p[j] = x + h;
                let up = f(p);
                p[j] = x - h;
                let dn = f(p);
                p[j] = x;
                (up - dn) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::new(&[5, 7, 4, 3], false, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wts = [0.3, -1.2, 0.7];
        let loss = |m: &Mlp, x: &[f64]| m.forward(x).last().unwrap().iter().zip(wts).map(|(y, w)| y * w).sum::<f64>();
        let cache = mlp.forward(&x);
        let mut g = mlp.zeros_like();
        let dx = mlp.backward(&cache, &wts, &mut g);

        let mut xs = x.clone();
        let ndx = numeric(&mut xs, &mut |xv| loss(&mlp, xv));
        for (a, n) in dx.iter().zip(&ndx) {
            assert!((a - n).abs() <= 1e-4 * n.abs().max(1e-3), "{a} vs {n}");
        }
        for layer in 0..3 {
            let mut w = mlp.layers[layer].w.clone();
            let nw = numeric(&mut w, &mut |wv| {
                let mut m = mlp.clone();
                m.layers[layer].w.copy_from_slice(wv);
                loss(&m, &x)
            });
            for (a, n) in g.layers[layer].w.iter().zip(&nw) {
                assert!((a - n).abs() <= 1e-4 * n.abs().max(1e-3), "layer {layer}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(0.05, &[2]);
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(vec![&mut p], vec![&g]);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-3), "{p:?}");
    }

    #[test]
    fn encoding_and_softmax_basics() {
        assert_eq!(positional_encoding(0, 4), vec![0.0, 1.0, 0.0, 1.0]);
        let pe = positional_encoding(3, 8);
        assert!((pe[0] - 3f64.sin()).abs() < 1e-15);
        assert!((pe[3] - (3.0 / 1e4f64.powf(0.25)).cos()).abs() < 1e-15);
        with_encodings(&[8, 3], 5, |t| {
            assert_eq!(t[0][3 * 8..4 * 8], positional_encoding(3, 8)[..]);
            assert_eq!(t[1][4 * 3..], positional_encoding(4, 3)[..]);
        });
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-12 && p[2] == 0.0);
    }
}
