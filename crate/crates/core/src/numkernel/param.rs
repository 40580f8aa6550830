use rand::Rng;

use super::{Mat, Real};

/// Learnable tensor with its gradient and Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Mat<T>,
    pub grad: Mat<T>,
    pub m: Mat<T>,
    pub v: Mat<T>,
    pub step: u64,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, value: Mat<T>) -> Self {
        let (r, c) = value.shape();
        Self {
            name: name.into(),
            value,
            grad: Mat::zeros(r, c),
            m: Mat::zeros(r, c),
            v: Mat::zeros(r, c),
            step: 0,
        }
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, Mat::zeros(rows, cols))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn init_uniform<T: Real>(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Mat<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Mat::from_fn(rows, cols, |_, _| T::of(rng.random_range(-bound..=bound)))
}

/// Registry of every learnable tensor owned by a component.
///
/// The optimizer, checkpointing and gradient checks all walk this list, so
/// each tensor must appear exactly once and in a stable order.
pub trait Parameterized<T: Real> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
