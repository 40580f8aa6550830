use rand::Rng;

use super::{init_uniform, KernelError, Mat, Param, Parameterized, Real};

/// Affine map `y = x·Wᵀ + b`, applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `out × in`
    pub weight: Param<T>,
    /// `1 × out`
    pub bias: Param<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::new(format!("{name}.weight"), init_uniform(output, input, input, rng)),
            bias: Param::zeros(format!("{name}.bias"), 1, output),
        }
    }

    pub fn zeros(name: &str, input: usize, output: usize) -> Self {
        Self {
            weight: Param::zeros(format!("{name}.weight"), output, input),
            bias: Param::zeros(format!("{name}.bias"), 1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.rows()
    }

    /// The caller keeps `x` and hands it back to [`Linear::backward`].
    pub fn forward(&self, x: &Mat<T>) -> Result<Mat<T>, KernelError> {
        if x.cols() != self.input_dim() {
            return Err(KernelError::ShapeMismatch {
                op: "linear",
                expected: (x.rows(), self.input_dim()),
                got: x.shape(),
            });
        }
        let mut y = x.matmul_nt(&self.weight.value)?;
        let b = self.bias.value.data();
        for r in 0..y.rows() {
            for (yi, bi) in y.row_mut(r).iter_mut().zip(b) {
                *yi += *bi;
            }
        }
        y.debug_assert_finite("linear");
        Ok(y)
    }

    pub fn backward(&mut self, x: &Mat<T>, dy: &Mat<T>) -> Mat<T> {
        self.accumulate_grads(x, dy);
        let mut dx = Mat::zeros(x.rows(), x.cols());
        dx.add_matmul(dy, &self.weight.value);
        dx.debug_assert_finite("linear backward");
        dx
    }

    /// Parameter gradients only, for layers whose input is not differentiable.
    pub fn accumulate_grads(&mut self, x: &Mat<T>, dy: &Mat<T>) {
        assert_eq!(dy.cols(), self.output_dim(), "linear backward shape");
        self.weight.grad.add_matmul_tn(dy, x);
        let gb = self.bias.grad.data_mut();
        for r in 0..dy.rows() {
            for (g, d) in gb.iter_mut().zip(dy.row(r)) {
                *g += *d;
            }
        }
    }
}

impl<T: Real> Parameterized<T> for Linear<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_layer_gives_zero() {
        let lin = Linear::<f64>::zeros("l", 3, 2);
        let x = Mat::from_f64(2, 3, &[1.0, -2.0, 3.0, 0.5, 0.1, 9.0]).unwrap();
        assert!(lin.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_weight_passes_through() {
        let mut lin = Linear::<f64>::zeros("l", 3, 3);
        lin.weight.value = Mat::identity(3);
        let x = Mat::from_f64(2, 3, &[1.0, -2.0, 3.0, 0.5, 0.1, 9.0]).unwrap();
        assert_eq!(lin.forward(&x).unwrap(), x);
    }

    #[test]
    fn rejects_wrong_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::<f32>::new("l", 4, 2, &mut rng);
        assert!(lin.forward(&Mat::zeros(1, 3)).is_err());
    }

    #[test]
    fn init_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::<f64>::new("l", 16, 8, &mut rng);
        assert!(lin.weight.value.data().iter().all(|v| v.abs() <= 0.25));
        assert!(lin.bias.value.data().iter().all(|&v| v == 0.0));
    }
}
