use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Mat, Tape, Var};

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            weight: store.add_xavier(format!("{name}.weight"), in_dim, out_dim, rng),
            bias: store.add_const(format!("{name}.bias"), 1, out_dim, 0.0),
            in_dim,
            out_dim,
        }
    }

    /// Weight drawn from N(0, std²) instead of Glorot.
    pub fn with_std(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Linear {
            weight: store.add_normal(format!("{name}.weight"), in_dim, out_dim, std, rng),
            bias: store.add_const(format!("{name}.bias"), 1, out_dim, 0.0),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gain: store.add_const(format!("{name}.gain"), 1, dim, 1.0),
            bias: store.add_const(format!("{name}.bias"), 1, dim, 0.0),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let n = tape.norm_rows(x);
        let g = tape.param(store, self.gain);
        let b = tape.param(store, self.bias);
        let y = tape.mul_row(n, g);
        tape.add_row(y, b)
    }
}

/// Batch normalization over rows. Training mode normalizes with batch
/// statistics and updates the running averages; evaluation mode uses the
/// running averages.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        BatchNorm {
            gain: store.add_const(format!("{name}.gain"), 1, dim, 1.0),
            bias: store.add_const(format!("{name}.bias"), 1, dim, 0.0),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Array2::zeros((1, dim))),
            running_var: store.add_buffer(format!("{name}.running_var"), Array2::ones((1, dim))),
            momentum: 0.1,
        }
    }

    /// Returns the output and, in training mode, the batch statistics to
    /// fold into the running averages with [`BatchNorm::update_running`].
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        train: bool,
    ) -> (Var, Option<(Vec<f64>, Vec<f64>)>) {
        let g = tape.param(store, self.gain);
        let b = tape.param(store, self.bias);
        if train && tape.value(x).nrows() > 1 {
            let (n, mean, var) = tape.norm_cols(x);
            let y = tape.mul_row(n, g);
            (tape.add_row(y, b), Some((mean, var)))
        } else {
            let mean = store.value(self.running_mean);
            let var = store.value(self.running_var);
            let shift = tape.constant(mean.mapv(|m| -m));
            let inv = tape.constant(var.mapv(|v| 1.0 / (v + 1e-5).sqrt()));
            let centered = tape.add_row(x, shift);
            let n = tape.mul_row(centered, inv);
            let y = tape.mul_row(n, g);
            (tape.add_row(y, b), None)
        }
    }

    pub fn update_running(&self, store: &mut ParamStore, stats: &(Vec<f64>, Vec<f64>)) {
        let m = self.momentum;
        for (r, &v) in store.value_mut(self.running_mean).iter_mut().zip(&stats.0) {
            *r = (1.0 - m) * *r + m * v;
        }
        for (r, &v) in store.value_mut(self.running_var).iter_mut().zip(&stats.1) {
            *r = (1.0 - m) * *r + m * v;
        }
    }
}

/// Single-layer LSTM; gate order input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let w_input = store.add_xavier(format!("{name}.w_input"), in_dim, 4 * hidden, rng);
        let w_hidden = store.add_xavier(format!("{name}.w_hidden"), hidden, 4 * hidden, rng);
        let mut bias = Array2::zeros((1, 4 * hidden));
        bias.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(1.0);
        let bias = store.add(format!("{name}.bias"), bias);
        Lstm {
            w_input,
            w_hidden,
            bias,
            hidden,
        }
    }

    /// Runs over the rows of `xs` (T×in) and returns the last hidden state (1×hidden).
    pub fn last_hidden(&self, tape: &mut Tape, store: &ParamStore, xs: Var) -> Var {
        let h_dim = self.hidden;
        let wi = tape.param(store, self.w_input);
        let wh = tape.param(store, self.w_hidden);
        let b = tape.param(store, self.bias);
        let projected = tape.matmul(xs, wi);
        let projected = tape.add_row(projected, b);
        let steps = tape.value(xs).nrows();
        let mut h = tape.constant(Mat::zeros((1, h_dim)));
        let mut c = tape.constant(Mat::zeros((1, h_dim)));
        for t in 0..steps {
            let x_t = tape.slice_rows(projected, t, 1);
            let rec = tape.matmul(h, wh);
            let z = tape.add(x_t, rec);
            let i = tape.slice_cols(z, 0, h_dim);
            let i = tape.sigmoid(i);
            let f = tape.slice_cols(z, h_dim, h_dim);
            let f = tape.sigmoid(f);
            let g = tape.slice_cols(z, 2 * h_dim, h_dim);
            let g = tape.tanh(g);
            let o = tape.slice_cols(z, 3 * h_dim, h_dim);
            let o = tape.sigmoid(o);
            let keep = tape.mul(f, c);
            let write = tape.mul(i, g);
            c = tape.add(keep, write);
            let tc = tape.tanh(c);
            h = tape.mul(o, tc);
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert_eq!(dim % heads, 0, "model dim must be divisible by heads");
        MultiHeadAttention {
            query: Linear::new(store, &format!("{name}.query"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.key"), dim, dim, rng),
            value: Linear::new(store, &format!("{name}.value"), dim, dim, rng),
            output: Linear::new(store, &format!("{name}.output"), dim, dim, rng),
            heads,
        }
    }

    /// Scaled dot-product attention of `queries` (n×d) over `memory` (m×d).
    /// `mask`, when given, is added to the n×m score matrix of every head.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, queries: Var, memory: Var, mask: Option<Var>) -> Var {
        let q = self.query.forward(tape, store, queries);
        let k = self.key.forward(tape, store, memory);
        let v = self.value.forward(tape, store, memory);
        let dim = tape.value(q).ncols();
        let head_dim = dim / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * head_dim, head_dim);
            let kh = tape.slice_cols(k, h * head_dim, head_dim);
            let vh = tape.slice_cols(v, h * head_dim, head_dim);
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt);
            let mut scores = tape.scale(scores, scale);
            if let Some(m) = mask {
                scores = tape.add(scores, m);
            }
            let weights = tape.softmax_rows(scores);
            outs.push(tape.matmul(weights, vh));
        }
        let joined = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs) };
        self.output.forward(tape, store, joined)
    }
}

/// Additive mask hiding positions after the query position.
pub fn causal_mask(n: usize) -> Mat {
    Array2::from_shape_fn((n, n), |(i, j)| if j > i { -1e9 } else { 0.0 })
}

/// Inverted dropout: zeroes entries with probability `p` and rescales the
/// rest by `1/(1-p)`.
pub fn dropout(tape: &mut Tape, x: Var, p: f64, rng: &mut ChaCha8Rng) -> Var {
    if p <= 0.0 {
        return x;
    }
    let keep = 1.0 / (1.0 - p);
    let mask = tape
        .value(x)
        .mapv(|_| if rng.gen::<f64>() < p { 0.0 } else { keep });
    let m = tape.constant(mask);
    tape.mul(x, m)
}

/// Sinusoidal position encodings, `len` × `dim`.
pub fn sinusoidal_positions(len: usize, dim: usize) -> Mat {
    Array2::from_shape_fn((len, dim), |(pos, i)| {
        let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let angle = pos as f64 * rate;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn causal_mask_shape() {
        let m = causal_mask(3);
        assert_eq!(m[[0, 1]], -1e9);
        assert_eq!(m[[2, 1]], 0.0);
        assert_eq!(m[[1, 1]], 0.0);
    }

    #[test]
    fn batch_norm_train_output_is_standardized() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 2);
        let mut t = Tape::new();
        let x = t.constant(ndarray::array![[1.0, 10.0], [3.0, 20.0], [5.0, 30.0]]);
        let (y, stats) = bn.forward(&mut t, &store, x, true);
        let y = t.value(y);
        for col in y.columns() {
            assert!(col.sum().abs() < 1e-9);
        }
        let (mean, _) = stats.unwrap();
        assert_eq!(mean, vec![3.0, 20.0]);
    }

    #[test]
    fn lstm_output_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let lstm = Lstm::new(&mut store, "lstm", 4, 3, &mut rng);
        let mut t = Tape::new();
        let xs = t.constant(Array2::ones((5, 4)));
        let h = lstm.last_hidden(&mut t, &store, xs);
        assert_eq!(t.value(h).dim(), (1, 3));
    }
}
