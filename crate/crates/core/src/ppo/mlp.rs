//! Minimal dense MLP with tanh hidden activations, a linear output layer,
//! flat parameter storage, and hand-written backprop.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Feed-forward network. Parameters are stored as one flat vector laid out
/// layer by layer: weights `W[out][in]` row-major, then biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub dims: Vec<usize>,
    pub params: Vec<f64>,
}

/// Intermediate activations kept for the backward pass; `layers[0]` is the
/// input, `layers.last()` the linear output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub layers: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn zeroed(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2);
        let n = Self::param_count(dims);
        Mlp {
            dims: dims.to_vec(),
            params: vec![0.0; n],
        }
    }

    pub fn param_count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Orthogonal-style initialization: each weight matrix gets an
    /// orthonormal basis (Gram-Schmidt over Gaussian draws) scaled by the
    /// per-layer gain; the final layer typically uses a small gain so that
    /// initial outputs stay near zero. Biases start at zero.
    pub fn init_orthogonal(dims: &[usize], gains: &[f64], rng: &mut ChaCha8Rng) -> Self {
        assert_eq!(gains.len(), dims.len() - 1);
        let mut mlp = Self::zeroed(dims);
        let mut offset = 0;
        for (layer, w) in dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let m = orthogonal_matrix(n_out, n_in, rng);
            for r in 0..n_out {
                for c in 0..n_in {
                    mlp.params[offset + r * n_in + c] = gains[layer] * m[r][c];
                }
            }
            offset += n_out * n_in + n_out;
        }
        mlp
    }

    /// Forward pass; returns the output and the cache needed by `backward`.
    pub fn forward(&self, input: &[f64]) -> (Vec<f64>, ForwardCache) {
        assert_eq!(input.len(), self.dims[0]);
        let n_layers = self.dims.len() - 1;
        let mut layers = Vec::with_capacity(n_layers + 1);
        layers.push(input.to_vec());
        let mut offset = 0;
        for (layer, w) in self.dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let x = layers.last().unwrap();
            let mut y = vec![0.0; n_out];
            for r in 0..n_out {
                let row = &self.params[offset + r * n_in..offset + (r + 1) * n_in];
                let mut acc = self.params[offset + n_out * n_in + r]; // bias
                for (wi, xi) in row.iter().zip(x.iter()) {
                    acc += wi * xi;
                }
                y[r] = if layer + 1 < n_layers { acc.tanh() } else { acc };
            }
            offset += n_out * n_in + n_out;
            layers.push(y);
        }
        (layers.last().unwrap().clone(), ForwardCache { layers })
    }

    /// Backpropagates `dL/doutput`, accumulating parameter gradients into
    /// `grad` (flat, same layout as `params`). Returns `dL/dinput`.
    pub fn backward(&self, cache: &ForwardCache, dout: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.params.len());
        let n_layers = self.dims.len() - 1;
        let mut layer_offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.dims.windows(2) {
            layer_offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }

        let mut delta = dout.to_vec();
        for layer in (0..n_layers).rev() {
            let (n_in, n_out) = (self.dims[layer], self.dims[layer + 1]);
            let off = layer_offsets[layer];
            let x = &cache.layers[layer];
            // Hidden layers were stored post-tanh.
            if layer + 1 < n_layers {
                let h = &cache.layers[layer + 1];
                for (d, hv) in delta.iter_mut().zip(h.iter()) {
                    *d *= 1.0 - hv * hv;
                }
            }
            let mut dx = vec![0.0; n_in];
            for r in 0..n_out {
                let dr = delta[r];
                let row_off = off + r * n_in;
                for c in 0..n_in {
                    grad[row_off + c] += dr * x[c];
                    dx[c] += dr * self.params[row_off + c];
                }
                grad[off + n_out * n_in + r] += dr;
            }
            delta = dx;
        }
        delta
    }
}

/// Random matrix with orthonormal rows (or columns when rows > cols),
/// via modified Gram-Schmidt on Gaussian draws.
fn orthogonal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let transpose = rows > cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    // n vectors of dimension m, n <= m.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b.iter()).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b.iter()) {
                *vi -= dot * bi;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        for vi in &mut v {
            *vi /= norm;
        }
        basis.push(v);
    }
    if transpose {
        (0..rows)
            .map(|r| (0..cols).map(|c| basis[c][r]).collect())
            .collect()
    } else {
        basis
    }
}
