use super::{KernelError, Mat, Real};

/// Mean over rows of the squared Euclidean row error.
///
/// Returns the loss and its gradient with respect to `pred`.
pub fn mse_loss<T: Real>(pred: &Mat<T>, target: &Mat<T>) -> Result<(T, Mat<T>), KernelError> {
    if pred.shape() != target.shape() {
        return Err(KernelError::ShapeMismatch { op: "mse_loss", expected: pred.shape(), got: target.shape() });
    }
    let rows = pred.rows().max(1);
    let scale = T::of(2.0 / rows as f64);
    let mut total = T::zero();
    let mut grad = Mat::zeros(pred.rows(), pred.cols());
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        total += d * d;
        *g = scale * d;
    }
    Ok((total / T::of(rows as f64), grad))
}
