//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Values are
//! computed eagerly; [`Tape::backward`] walks the record in reverse and
//! accumulates gradients for every node that depends on a parameter.

use ndarray::{concatenate, s, Array2, Axis};

use super::params::{ParamId, ParamStore};

pub type Mat = Array2<f64>;

const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    /// Row-wise standardization (no affine part).
    NormRows { x: Var, inv_std: Vec<f64> },
    /// Column-wise standardization over the batch.
    NormCols { x: Var, inv_std: Vec<f64> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Gather(Var, Vec<usize>),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Mat,
    },
    BceLogits {
        logits: Var,
        targets: Mat,
    },
    Sum(Var),
}

pub struct Tape {
    values: Vec<Mat>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
    bound: Vec<Option<Var>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
            needs_grad: Vec::new(),
            bound: Vec::new(),
        }
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.needs_grad.push(needs_grad);
        Var(self.values.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.needs_grad[v.0])
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.values[v.0]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.values[v.0][[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Binds a parameter; repeated binds within one tape return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.bound.len() <= id.0 {
            self.bound.resize(id.0 + 1, None);
        }
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let trainable = store.is_trainable(id);
        let v = self.push(store.value(id).clone(), Op::Param(id), trainable);
        self.bound[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.values[a.0].dot(&self.values[b.0]);
        let n = self.needs(&[a, b]);
        self.push(value, Op::MatMul(a, b), n)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.values[a.0].t().to_owned();
        let n = self.needs(&[a]);
        self.push(value, Op::Transpose(a), n)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = &self.values[a.0] + &self.values[b.0];
        let n = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), n)
    }

    /// `a + row` with `row` (1×n) broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.values[row.0].nrows(), 1, "add_row expects a 1×n row");
        let value = &self.values[a.0] + &self.values[row.0];
        let n = self.needs(&[a, row]);
        self.push(value, Op::AddRow(a, row), n)
    }

    /// `a ⊙ row` with `row` (1×n) broadcast over the rows of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.values[row.0].nrows(), 1, "mul_row expects a 1×n row");
        let value = &self.values[a.0] * &self.values[row.0];
        let n = self.needs(&[a, row]);
        self.push(value, Op::MulRow(a, row), n)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = &self.values[a.0] * &self.values[b.0];
        let n = self.needs(&[a, b]);
        self.push(value, Op::Mul(a, b), n)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = &self.values[a.0] * c;
        let n = self.needs(&[a]);
        self.push(value, Op::Scale(a, c), n)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.values[a.0].mapv(|x| x.max(0.0));
        let n = self.needs(&[a]);
        self.push(value, Op::Relu(a), n)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.values[a.0].mapv(f64::tanh);
        let n = self.needs(&[a]);
        self.push(value, Op::Tanh(a), n)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.values[a.0].mapv(sigmoid);
        let n = self.needs(&[a]);
        self.push(value, Op::Sigmoid(a), n)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(&self.values[a.0]);
        let n = self.needs(&[a]);
        self.push(value, Op::SoftmaxRows(a), n)
    }

    /// Standardizes each row to zero mean and unit variance.
    pub fn norm_rows(&mut self, a: Var) -> Var {
        let (value, inv_std) = standardize_rows(&self.values[a.0]);
        let n = self.needs(&[a]);
        self.push(value, Op::NormRows { x: a, inv_std }, n)
    }

    /// Standardizes each column over the rows (batch statistics). Returns
    /// the normalized node plus the batch mean and biased variance.
    pub fn norm_cols(&mut self, a: Var) -> (Var, Vec<f64>, Vec<f64>) {
        let x = &self.values[a.0];
        let mean = x.mean_axis(Axis(0)).expect("non-empty batch").to_vec();
        let var: Vec<f64> = (0..x.ncols())
            .map(|j| {
                let col = x.column(j);
                col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / x.nrows() as f64
            })
            .collect();
        let (t, inv_std) = standardize_rows(&x.t().to_owned());
        let n = self.needs(&[a]);
        let v = self.push(t.t().to_owned(), Op::NormCols { x: a, inv_std }, n);
        (v, mean, var)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.values[p.0].view()).collect();
        let value = concatenate(Axis(1), &views).expect("row counts agree");
        let n = self.needs(parts);
        self.push(value, Op::ConcatCols(parts.to_vec()), n)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.values[p.0].view()).collect();
        let value = concatenate(Axis(0), &views).expect("column counts agree");
        let n = self.needs(parts);
        self.push(value, Op::ConcatRows(parts.to_vec()), n)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.values[a.0].slice(s![.., start..start + len]).to_owned();
        let n = self.needs(&[a]);
        self.push(value, Op::SliceCols(a, start), n)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.values[a.0].slice(s![start..start + len, ..]).to_owned();
        let n = self.needs(&[a]);
        self.push(value, Op::SliceRows(a, start), n)
    }

    /// Selects rows of `table` by index.
    pub fn gather(&mut self, table: Var, rows: &[usize]) -> Var {
        let t = &self.values[table.0];
        let mut value = Mat::zeros((rows.len(), t.ncols()));
        for (i, &r) in rows.iter().enumerate() {
            value.row_mut(i).assign(&t.row(r));
        }
        let n = self.needs(&[table]);
        self.push(value, Op::Gather(table, rows.to_vec()), n)
    }

    /// Summed negative log-likelihood of `targets` under row-wise softmax.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let probs = softmax_rows(&self.values[logits.0]);
        assert_eq!(probs.nrows(), targets.len());
        let loss: f64 = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| -probs[[i, t]].max(f64::MIN_POSITIVE).ln())
            .sum();
        let n = self.needs(&[logits]);
        self.push(
            Mat::from_elem((1, 1), loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            n,
        )
    }

    /// Summed binary cross-entropy of sigmoid(logits) against 0/1 targets.
    pub fn bce_logits(&mut self, logits: Var, targets: Mat) -> Var {
        let z = &self.values[logits.0];
        assert_eq!(z.dim(), targets.dim());
        let loss: f64 = z
            .iter()
            .zip(targets.iter())
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let n = self.needs(&[logits]);
        self.push(
            Mat::from_elem((1, 1), loss),
            Op::BceLogits { logits, targets },
            n,
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Mat::from_elem((1, 1), self.values[a.0].sum());
        let n = self.needs(&[a]);
        self.push(value, Op::Sum(a), n)
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.values[loss.0].dim(), (1, 1), "loss must be scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.values.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            if !self.needs_grad[idx] {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &self.ops[idx] {
                Op::Constant => {}
                Op::Param(_) => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if self.needs_grad[a.0] {
                        let da = g.dot(&self.values[b.0].t());
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs_grad[b.0] {
                        let db = self.values[a.0].t().dot(&g);
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.t().to_owned()),
                Op::Add(a, b) => {
                    if self.needs_grad[b.0] {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::AddRow(a, row) => {
                    if self.needs_grad[row.0] {
                        let dr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads, *row, dr);
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::MulRow(a, row) => {
                    if self.needs_grad[row.0] {
                        let dr = (&g * &self.values[a.0])
                            .sum_axis(Axis(0))
                            .insert_axis(Axis(0));
                        accumulate(&mut grads, *row, dr);
                    }
                    if self.needs_grad[a.0] {
                        let da = &g * &self.values[row.0];
                        accumulate(&mut grads, *a, da);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs_grad[a.0] {
                        let da = &g * &self.values[b.0];
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs_grad[b.0] {
                        let db = &g * &self.values[a.0];
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g * *c),
                Op::Relu(a) => {
                    let mut da = g;
                    da.zip_mut_with(&self.values[a.0], |d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                    accumulate(&mut grads, *a, da);
                }
                Op::Tanh(a) => {
                    let mut da = g;
                    da.zip_mut_with(&self.values[idx], |d, &y| *d *= 1.0 - y * y);
                    accumulate(&mut grads, *a, da);
                }
                Op::Sigmoid(a) => {
                    let mut da = g;
                    da.zip_mut_with(&self.values[idx], |d, &y| *d *= y * (1.0 - y));
                    accumulate(&mut grads, *a, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.values[idx];
                    let mut da = Mat::zeros(y.dim());
                    for i in 0..y.nrows() {
                        let dot: f64 = g.row(i).dot(&y.row(i));
                        for j in 0..y.ncols() {
                            da[[i, j]] = y[[i, j]] * (g[[i, j]] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::NormRows { x, inv_std } => {
                    let da = standardize_backward(&self.values[idx], &g, inv_std);
                    accumulate(&mut grads, *x, da);
                }
                Op::NormCols { x, inv_std } => {
                    let yt = self.values[idx].t().to_owned();
                    let gt = g.t().to_owned();
                    let da = standardize_backward(&yt, &gt, inv_std);
                    accumulate(&mut grads, *x, da.t().to_owned());
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.values[p.0].ncols();
                        if self.needs_grad[p.0] {
                            let dp = g.slice(s![.., start..start + w]).to_owned();
                            accumulate(&mut grads, *p, dp);
                        }
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let h = self.values[p.0].nrows();
                        if self.needs_grad[p.0] {
                            let dp = g.slice(s![start..start + h, ..]).to_owned();
                            accumulate(&mut grads, *p, dp);
                        }
                        start += h;
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut da = Mat::zeros(self.values[a.0].dim());
                    da.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    accumulate(&mut grads, *a, da);
                }
                Op::SliceRows(a, start) => {
                    let mut da = Mat::zeros(self.values[a.0].dim());
                    da.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    accumulate(&mut grads, *a, da);
                }
                Op::Gather(table, rows) => {
                    let mut dt = Mat::zeros(self.values[table.0].dim());
                    for (i, &r) in rows.iter().enumerate() {
                        let mut row = dt.row_mut(r);
                        row += &g.row(i);
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let scale = g[[0, 0]];
                    let mut dz = probs.clone();
                    for (i, &t) in targets.iter().enumerate() {
                        dz[[i, t]] -= 1.0;
                    }
                    accumulate(&mut grads, *logits, dz * scale);
                }
                Op::BceLogits { logits, targets } => {
                    let scale = g[[0, 0]];
                    let mut dz = self.values[logits.0].mapv(sigmoid);
                    dz -= targets;
                    accumulate(&mut grads, *logits, dz * scale);
                }
                Op::Sum(a) => {
                    let da = Mat::from_elem(self.values[a.0].dim(), g[[0, 0]]);
                    accumulate(&mut grads, *a, da);
                }
            }
        }

        let mut params = Vec::new();
        for (idx, op) in self.ops.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (op, grads[idx].take()) {
                params.push((*id, g));
            }
        }
        Gradients { params }
    }
}

/// Parameter gradients from one backward pass.
#[derive(Debug, Default)]
pub struct Gradients {
    params: Vec<(ParamId, Mat)>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.params.iter().find(|(p, _)| *p == id).map(|(_, g)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Mat)> {
        self.params.iter().map(|(p, g)| (*p, g))
    }

    pub fn global_norm(&self) -> f64 {
        self.params
            .iter()
            .map(|(_, g)| g.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for (_, g) in &mut self.params {
            *g *= c;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params
            .iter()
            .all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }
}

fn accumulate(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot => *slot = Some(g),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(x: &Mat) -> Mat {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}

fn standardize_rows(x: &Mat) -> (Mat, Vec<f64>) {
    let n = x.ncols() as f64;
    let mut out = x.clone();
    let mut inv_std = Vec::with_capacity(x.nrows());
    for mut row in out.rows_mut() {
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
        inv_std.push(inv);
    }
    (out, inv_std)
}

fn standardize_backward(y: &Mat, g: &Mat, inv_std: &[f64]) -> Mat {
    let n = y.ncols() as f64;
    let mut out = Mat::zeros(y.dim());
    for i in 0..y.nrows() {
        let gy = g.row(i);
        let yy = y.row(i);
        let sum_g = gy.sum();
        let sum_gy = gy.dot(&yy);
        for j in 0..y.ncols() {
            out[[i, j]] = inv_std[i] / n * (n * gy[j] - sum_g - yy[j] * sum_gy);
        }
    }
    out
}
