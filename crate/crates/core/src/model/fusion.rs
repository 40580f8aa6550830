use crate::numkernel::{Mat, Real};

pub const GATE_NAMES: [&str; 3] = ["gaze", "head", "scene"];

/// Turns the head and scene gate sigmoids into simplex weights
/// `(gaze, head, scene)`. The implied gaze weight `1 - s_head - s_scene`
/// is clamped at zero before all three are divided by their sum.
pub fn gates_from_sigmoids<T: Real>(s_head: T, s_scene: T) -> [T; 3] {
    let raw = T::one() - s_head - s_scene;
    let g = if raw > T::zero() { raw } else { T::zero() };
    let sum = g + s_head + s_scene;
    [g / sum, s_head / sum, s_scene / sum]
}

/// Row-wise convex combination of the three feature matrices.
/// `gates` is `B × 3` in `(gaze, head, scene)` order.
pub fn fuse<T: Real>(f_gaze: &Mat<T>, f_head: &Mat<T>, f_scene: &Mat<T>, gates: &Mat<T>) -> Mat<T> {
    assert!(f_gaze.shape() == f_head.shape() && f_gaze.shape() == f_scene.shape(), "fuse shape");
    assert_eq!(gates.shape(), (f_gaze.rows(), 3), "gate shape");
    let mut out = Mat::zeros(f_gaze.rows(), f_gaze.cols());
    for r in 0..out.rows() {
        let g = gates.row(r);
        let (a, b, c) = (f_gaze.row(r), f_head.row(r), f_scene.row(r));
        for (j, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = g[0] * a[j] + g[1] * b[j] + g[2] * c[j];
        }
    }
    out
}
