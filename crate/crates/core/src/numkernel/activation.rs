use serde::{Deserialize, Serialize};

use super::{Mat, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    // Split by sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative at input `x`.
    #[inline]
    pub fn derivative<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (T::one() - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
        }
    }

    pub fn forward<T: Real>(self, x: &Mat<T>) -> Mat<T> {
        let y = x.map(|v| self.apply(v));
        y.debug_assert_finite("activation");
        y
    }

    /// `dx = dy ⊙ f'(x)` where `x` is the cached forward input.
    pub fn backward<T: Real>(self, x: &Mat<T>, dy: &Mat<T>) -> Mat<T> {
        assert_eq!(x.shape(), dy.shape(), "activation backward shape");
        let data = x.data().iter().zip(dy.data()).map(|(&xi, &g)| g * self.derivative(xi)).collect();
        Mat::from_vec(x.rows(), x.cols(), data).expect("same shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_definitions() {
        assert_eq!(Activation::Sigmoid.apply(0.0f64), 0.5);
        assert_eq!(Activation::Relu.apply(-1.0f64), 0.0);
        assert_eq!(Activation::Relu.apply(2.0f64), 2.0);
        assert_eq!(Activation::Tanh.apply(0.0f64), 0.0);
        assert!(Activation::Sigmoid.apply(-1000.0f64).is_finite());
        assert!(Activation::Sigmoid.apply(1000.0f32) == 1.0);
    }

    #[test]
    fn tanh_derivative_at_zero_matches_central_difference() {
        let h: f64 = 1e-5;
        let fd = (h.tanh() - (-h).tanh()) / (2.0 * h);
        let analytic = Activation::Tanh.derivative(0.0f64);
        assert_eq!(analytic, 1.0);
        assert!((analytic - fd).abs() < 1e-8);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for act in [Activation::Relu, Activation::Sigmoid, Activation::Tanh] {
            for &x in &[-2.3f64, -0.4, 0.3, 1.7, 4.0] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((act.derivative(x) - fd).abs() < 1e-8, "{act:?} at {x}");
            }
        }
    }
}
