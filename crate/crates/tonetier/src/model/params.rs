//! Flat parameter storage with named matrix views, plus the Adadelta
//! optimizer state.
//!
//! All model parameters live in one `Vec<f64>` laid out in name order. That
//! makes finite-difference checks (perturb one scalar), optimizer updates
//! (elementwise over the flat vector), and checkpointing (one block per
//! named matrix) uniform. Gradients share the layout.

use std::collections::HashMap;

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
}

/// Named, ordered layout of the flat parameter vector.
#[derive(Debug, Clone, Default)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
    total: usize,
}

impl ParamLayout {
    /// Build from (name, rows, cols) shapes; entries are sorted by name so
    /// the layout is independent of declaration order.
    pub fn new(mut shapes: Vec<(String, usize, usize)>) -> Self {
        shapes.sort_by(|a, b| a.0.cmp(&b.0));
        let mut entries = Vec::with_capacity(shapes.len());
        let mut index = HashMap::new();
        let mut offset = 0usize;
        for (name, rows, cols) in shapes {
            assert!(
                index.insert(name.clone(), entries.len()).is_none(),
                "duplicate parameter {name}"
            );
            entries.push(ParamEntry {
                name,
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
        }
        Self {
            entries,
            index,
            total: offset,
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.index.get(name).map(|&i| &self.entries[i])
    }
}

/// Flat parameter vector plus its layout.
#[derive(Debug, Clone)]
pub struct ParamStore {
    pub layout: ParamLayout,
    pub data: Vec<f64>,
}

pub fn derived_seed(seed: u64, tag: &str, key: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[0..8].try_into().unwrap())
}

impl ParamStore {
    pub fn zeros(layout: ParamLayout) -> Self {
        let data = vec![0.0; layout.len()];
        Self { layout, data }
    }

    /// Initialize weight matrices uniformly in +-1/sqrt(fan_in) and biases
    /// (single-row entries named `*.b`) to zero. Each matrix draws from its
    /// own name-derived stream, so adding parameters later never reshuffles
    /// the initialization of existing ones.
    pub fn seeded_init(layout: ParamLayout, seed: u64) -> Self {
        let mut store = Self::zeros(layout);
        let entries = store.layout.entries.clone();
        for entry in &entries {
            if entry.name.ends_with(".b") {
                continue;
            }
            let bound = 1.0 / (entry.cols as f64).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(seed, "init", &entry.name));
            for v in &mut store.data[entry.offset..entry.offset + entry.len()] {
                *v = rng.random_range(-bound..bound);
            }
        }
        store
    }

    pub fn view(&self, name: &str) -> ArrayView2<'_, f64> {
        let e = self
            .layout
            .entry(name)
            .unwrap_or_else(|| panic!("no parameter {name}"));
        ArrayView2::from_shape((e.rows, e.cols), &self.data[e.offset..e.offset + e.len()])
            .expect("layout shape")
    }

    pub fn view_mut(&mut self, name: &str) -> ArrayViewMut2<'_, f64> {
        let e = self
            .layout
            .entry(name)
            .unwrap_or_else(|| panic!("no parameter {name}"))
            .clone();
        ArrayViewMut2::from_shape(
            (e.rows, e.cols),
            &mut self.data[e.offset..e.offset + e.len()],
        )
        .expect("layout shape")
    }

    pub fn slice(&self, name: &str) -> &[f64] {
        let e = self.layout.entry(name).expect("parameter exists");
        &self.data[e.offset..e.offset + e.len()]
    }
}

/// Gradient buffer sharing a [`ParamLayout`].
#[derive(Debug, Clone)]
pub struct GradBuffer {
    pub data: Vec<f64>,
}

impl GradBuffer {
    pub fn zeros(layout: &ParamLayout) -> Self {
        Self {
            data: vec![0.0; layout.len()],
        }
    }

    pub fn view_mut(&mut self, layout: &ParamLayout, name: &str) -> ArrayViewMut2<'_, f64> {
        let e = layout.entry(name).expect("parameter exists").clone();
        ArrayViewMut2::from_shape(
            (e.rows, e.cols),
            &mut self.data[e.offset..e.offset + e.len()],
        )
        .expect("layout shape")
    }

    pub fn add_assign(&mut self, other: &GradBuffer) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }
}

/// Adadelta: per-element decaying accumulators of squared gradients and
/// squared updates.
#[derive(Debug, Clone)]
pub struct Adadelta {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    pub acc_grad: Vec<f64>,
    pub acc_update: Vec<f64>,
}

impl Adadelta {
    pub fn new(len: usize, lr: f64, rho: f64, eps: f64) -> Self {
        Self {
            lr,
            rho,
            eps,
            acc_grad: vec![0.0; len],
            acc_update: vec![0.0; len],
        }
    }

    /// One update over the flat vector. Masked (frozen) elements are left
    /// untouched, accumulators included.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], frozen: Option<&[bool]>) {
        for i in 0..params.len() {
            if frozen.map_or(false, |f| f[i]) {
                continue;
            }
            let g = grad[i];
            self.acc_grad[i] = self.rho * self.acc_grad[i] + (1.0 - self.rho) * g * g;
            let update = -((self.acc_update[i] + self.eps).sqrt()
                / (self.acc_grad[i] + self.eps).sqrt())
                * g
                * self.lr;
            self.acc_update[i] = self.rho * self.acc_update[i] + (1.0 - self.rho) * update * update;
            params[i] += update;
        }
    }

    /// Carry accumulator values over to a new layout, matching by name.
    /// Parameters new to the layout start at zero.
    pub fn remap(&self, old: &ParamLayout, new: &ParamLayout) -> Adadelta {
        let mut out = Adadelta::new(new.len(), self.lr, self.rho, self.eps);
        for entry in new.entries() {
            if let Some(prev) = old.entry(&entry.name) {
                debug_assert_eq!(prev.len(), entry.len(), "shape change for {}", entry.name);
                let n = prev.len().min(entry.len());
                out.acc_grad[entry.offset..entry.offset + n]
                    .copy_from_slice(&self.acc_grad[prev.offset..prev.offset + n]);
                out.acc_update[entry.offset..entry.offset + n]
                    .copy_from_slice(&self.acc_update[prev.offset..prev.offset + n]);
            }
        }
        out
    }
}
