//! Parameter storage and the reverse-mode tape used by every forward pass.
//!
//! Parameters are plain `f64` ndarray tensors held in a flat, name-addressed
//! [`ParamStore`]; gradients accumulate into a shape-mirrored [`GradStore`].
//! All model math is expressed as tape ops so a single forward definition
//! serves training (with [`Tape::backward`]), evaluation, and generation.

mod tape;

pub use tape::{Tape, Var};

use ndarray::{Array1, Array2};
use rand::Rng;

/// A parameter tensor: either a matrix or a vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    M(Array2<f64>),
    V(Array1<f64>),
}

impl Tensor {
    pub fn len(&self) -> usize {
        match self {
            Tensor::M(m) => m.len(),
            Tensor::V(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn zeros_like(&self) -> Tensor {
        match self {
            Tensor::M(m) => Tensor::M(Array2::zeros(m.dim())),
            Tensor::V(v) => Tensor::V(Array1::zeros(v.len())),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Tensor::M(m) => m.as_slice().expect("parameter tensors are contiguous"),
            Tensor::V(v) => v.as_slice().expect("parameter tensors are contiguous"),
        }
    }

    pub fn as_slice_mut(&mut self) -> &mut [f64] {
        match self {
            Tensor::M(m) => m.as_slice_mut().expect("parameter tensors are contiguous"),
            Tensor::V(v) => v.as_slice_mut().expect("parameter tensors are contiguous"),
        }
    }
}

/// Handle to one tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Flat, name-addressed collection of trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn add_matrix<R: Rng>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        let data = match init {
            Init::Uniform(a) => {
                Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-a..=a))
            }
            Init::Zero => Array2::zeros((rows, cols)),
        };
        self.push(name, Tensor::M(data))
    }

    pub fn add_vector<R: Rng>(
        &mut self,
        name: &str,
        len: usize,
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        let data = match init {
            Init::Uniform(a) => Array1::from_shape_simple_fn(len, || rng.gen_range(-a..=a)),
            Init::Zero => Array1::zeros(len),
        };
        self.push(name, Tensor::V(data))
    }

    fn push(&mut self, name: &str, t: Tensor) -> ParamId {
        assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter name {name}"
        );
        self.names.push(name.to_string());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn mat(&self, id: ParamId) -> &Array2<f64> {
        match &self.tensors[id.0] {
            Tensor::M(m) => m,
            Tensor::V(_) => panic!("parameter {} is a vector, not a matrix", self.names[id.0]),
        }
    }

    pub fn vec(&self, id: ParamId) -> &Array1<f64> {
        match &self.tensors[id.0] {
            Tensor::V(v) => v,
            Tensor::M(_) => panic!("parameter {} is a matrix, not a vector", self.names[id.0]),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn tensor(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.tensors[idx]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Tensor indices whose hierarchical name starts with `prefix`.
    pub fn group(&self, prefix: &str) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.names[i].starts_with(prefix)).collect()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Read scalar `k` in flat (tensor-major, row-major) order.
    pub fn get_flat(&self, k: usize) -> f64 {
        let (t, off) = self.locate(k);
        self.tensors[t].as_slice()[off]
    }

    /// Write scalar `k` in flat order.
    pub fn set_flat(&mut self, k: usize, value: f64) {
        let (t, off) = self.locate(k);
        self.tensors[t].as_slice_mut()[off] = value;
    }

    fn locate(&self, mut k: usize) -> (usize, usize) {
        for (i, t) in self.tensors.iter().enumerate() {
            if k < t.len() {
                return (i, k);
            }
            k -= t.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.as_slice().iter().all(|x| x.is_finite()))
    }

    /// Zero every tensor whose name starts with `prefix`.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for i in self.group(prefix) {
            self.tensors[i].as_slice_mut().fill(0.0);
        }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Parameter initialization scheme.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Uniform in `[-a, a]`.
    Uniform(f64),
    Zero,
}

/// Gradient accumulator shaped like a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct GradStore {
    tensors: Vec<Tensor>,
}

impl GradStore {
    pub fn zeros_like(params: &ParamStore) -> Self {
        GradStore { tensors: params.tensors.iter().map(Tensor::zeros_like).collect() }
    }

    pub fn mat_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        match &mut self.tensors[id.0] {
            Tensor::M(m) => m,
            Tensor::V(_) => panic!("gradient tensor is a vector, not a matrix"),
        }
    }

    pub fn vec_mut(&mut self, id: ParamId) -> &mut Array1<f64> {
        match &mut self.tensors[id.0] {
            Tensor::V(v) => v,
            Tensor::M(_) => panic!("gradient tensor is a matrix, not a vector"),
        }
    }

    pub fn tensor(&self, idx: usize) -> &Tensor {
        &self.tensors[idx]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Accumulate `other` into `self` elementwise.
    pub fn add_assign(&mut self, other: &GradStore) {
        assert_eq!(self.tensors.len(), other.tensors.len());
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            let (a, b) = (a.as_slice_mut(), b.as_slice());
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in &mut self.tensors {
            for x in t.as_slice_mut() {
                *x *= k;
            }
        }
    }

    /// Euclidean norm over every scalar gradient.
    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.as_slice().iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.as_slice().iter().all(|x| x.is_finite()))
    }

    pub fn get_flat(&self, mut k: usize) -> f64 {
        for t in &self.tensors {
            if k < t.len() {
                return t.as_slice()[k];
            }
            k -= t.len();
        }
        panic!("flat gradient index out of range");
    }

    /// Apply one ascent step: `params[i] += lr * grad[i]`.
    pub fn apply_ascent(&self, params: &mut ParamStore, lr: f64) {
        assert_eq!(self.tensors.len(), params.tensors.len());
        for (g, p) in self.tensors.iter().zip(params.tensors.iter_mut()) {
            let (g, p) = (g.as_slice(), p.as_slice_mut());
            for (x, y) in p.iter_mut().zip(g) {
                *x += lr * y;
            }
        }
    }
}
