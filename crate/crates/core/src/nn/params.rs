use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tape::{Gradients, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
struct Param {
    name: String,
    value: Mat,
    trainable: bool,
}

/// Named parameter matrices. Non-trainable entries hold buffers such as
/// batch-norm running statistics.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

/// One entry of a checkpoint manifest: `shape` values start at `offset`
/// (counted in `f64`s) in the weights file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub offset: usize,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        self.push(name.into(), value, true)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        self.push(name.into(), value, false)
    }

    fn push(&mut self, name: String, value: Mat, trainable: bool) -> ParamId {
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter {name}"
        );
        self.params.push(Param {
            name,
            value,
            trainable,
        });
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform initialized weight.
    pub fn add_xavier(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let value = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit));
        self.add(name, value)
    }

    pub fn add_normal(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let value = Array2::from_shape_fn((rows, cols), |_| std * gaussian(rng));
        self.add(name, value)
    }

    pub fn add_const(&mut self, name: impl Into<String>, rows: usize, cols: usize, v: f64) -> ParamId {
        self.add(name, Array2::from_elem((rows, cols), v))
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id.0].trainable
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Writes all values as little-endian `f64` in store order.
    pub fn write_weights(&self, path: impl AsRef<Path>) -> Result<Vec<TensorEntry>> {
        let mut bytes = Vec::with_capacity(self.num_scalars() * 8);
        let mut entries = Vec::with_capacity(self.params.len());
        let mut offset = 0;
        for p in &self.params {
            entries.push(TensorEntry {
                name: p.name.clone(),
                shape: [p.value.nrows(), p.value.ncols()],
                offset,
            });
            for v in p.value.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            offset += p.value.len();
        }
        fs::write(path, bytes)?;
        Ok(entries)
    }

    /// Overwrites values from a weights file. Every parameter of the store
    /// must appear in `entries` with a matching shape.
    pub fn read_weights(&mut self, path: impl AsRef<Path>, entries: &[TensorEntry]) -> Result<()> {
        let bytes = fs::read(path)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Checkpoint("weights file length not a multiple of 8".into()));
        }
        let floats: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        for p in &mut self.params {
            let e = entries
                .iter()
                .find(|e| e.name == p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {}", p.name)))?;
            let shape = [p.value.nrows(), p.value.ncols()];
            if e.shape != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    p.name, e.shape, shape
                )));
            }
            let n = shape[0] * shape[1];
            let data = floats
                .get(e.offset..e.offset + n)
                .ok_or_else(|| Error::Checkpoint(format!("tensor {} out of range", p.name)))?;
            p.value = Array2::from_shape_vec((shape[0], shape[1]), data.to_vec())
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(())
    }
}

/// Standard normal draw (Box-Muller).
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale gradients whose global norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

/// Adam (Kingma & Ba) with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Option<Mat>>,
    v: Vec<Option<Mat>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, store: &mut ParamStore, mut grads: Gradients) {
        if let Some(max) = self.config.clip_norm {
            let norm = grads.global_norm();
            if norm > max {
                grads.scale(max / norm);
            }
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        for (id, g) in grads.iter() {
            if !store.is_trainable(id) {
                continue;
            }
            let m = self.m[id.0].get_or_insert_with(|| Mat::zeros(g.dim()));
            let v = self.v[id.0].get_or_insert_with(|| Mat::zeros(g.dim()));
            m.zip_mut_with(g, |m, &g| *m = c.beta1 * *m + (1.0 - c.beta1) * g);
            v.zip_mut_with(g, |v, &g| *v = c.beta2 * *v + (1.0 - c.beta2) * g * g);
            let value = store.value_mut(id);
            ndarray::Zip::from(value).and(&*m).and(&*v).for_each(|w, &m, &v| {
                *w -= c.learning_rate * (m / bc1) / ((v / bc2).sqrt() + c.eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Tape;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut store = ParamStore::new();
        let x = store.add("x", array![[3.0, -2.0]]);
        let mut opt = Adam::new(AdamConfig::with_lr(0.1));
        for _ in 0..500 {
            let mut t = Tape::new();
            let p = t.param(&store, x);
            let sq = t.mul(p, p);
            let l = t.sum(sq);
            let g = t.backward(l);
            opt.update(&mut store, g);
        }
        assert!(store.value(x).iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn weights_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        store.add_xavier("w", 3, 4, &mut rng);
        store.add_buffer("running", array![[1.0, 2.0]]);
        let path = dir.path().join("w.bin");
        let entries = store.write_weights(&path).unwrap();
        let mut other = ParamStore::new();
        other.add_const("w", 3, 4, 0.0);
        other.add_buffer("running", array![[0.0, 0.0]]);
        other.read_weights(&path, &entries).unwrap();
        for id in store.ids() {
            assert_eq!(store.value(id), other.value(id));
        }
        let mut wrong = ParamStore::new();
        wrong.add_const("w", 4, 3, 0.0);
        assert!(wrong.read_weights(&path, &entries).is_err());
    }
}
