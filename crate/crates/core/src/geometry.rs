//! Quaternion algebra, SLERP and gaze-coordinate normalization.
//!
//! Everything here is a pure function on `Copy` value types and is computed in
//! `f64`; the numeric kernel converts to its own precision at batch time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Norms at or below this are treated as zero.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// Below this `sin(theta)` SLERP falls back to normalized linear interpolation.
pub const SLERP_LINEAR_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("quaternion norm {0} is too small to normalize")]
    ZeroNorm(f64),
    #[error("degenerate gaze bounds: {axis} range {lo}..{hi}")]
    DegenerateBounds { axis: char, lo: f64, hi: f64 },
}

/// Rotation quaternion stored scalar-first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (s, c) = (angle * 0.5).sin_cos();
        if n <= ZERO_NORM_EPS {
            return Self::IDENTITY;
        }
        Self::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(self, other: Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn conjugate(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Rotates a 3-vector. Assumes `self` is unit.
    pub fn rotate(self, v: [f64; 3]) -> [f64; 3] {
        let p = Self::new(0.0, v[0], v[1], v[2]);
        let r = self * p * self.conjugate();
        [r.x, r.y, r.z]
    }

    /// Rotation-level equality: `q` and `-q` compare equal.
    pub fn same_rotation(self, other: Self, tol: f64) -> bool {
        self.dot(other).abs() >= 1.0 - tol
    }

    pub fn is_unit(self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

impl std::ops::Neg for Quaternion {
    type Output = Self;

    fn neg(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Hamilton product `a * b` (apply `b` first, then `a`).
impl std::ops::Mul for Quaternion {
    type Output = Self;

    fn mul(self, b: Self) -> Self {
        let a = self;
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

pub fn quat_normalize(q: Quaternion) -> Result<Quaternion, GeometryError> {
    let n = q.norm();
    if n.is_nan() || n <= ZERO_NORM_EPS {
        return Err(GeometryError::ZeroNorm(n));
    }
    Ok(Quaternion::new(q.w / n, q.x / n, q.y / n, q.z / n))
}

/// Spherical linear interpolation along the shorter arc.
///
/// Inputs are expected to be unit quaternions and `t` in `[0, 1]`. When the
/// endpoints lie on opposite hemispheres `q1` is negated first.
pub fn slerp(q0: Quaternion, q1: Quaternion, t: f64) -> Quaternion {
    let mut q1 = q1;
    let mut cos_theta = q0.dot(q1);
    if cos_theta < 0.0 {
        q1 = -q1;
        cos_theta = -cos_theta;
    }
    let cos_theta = cos_theta.min(1.0);
    let theta = cos_theta.acos();
    let sin_theta = theta.sin();
    let (a, b) = if sin_theta < SLERP_LINEAR_EPS {
        (1.0 - t, t)
    } else {
        (((1.0 - t) * theta).sin() / sin_theta, (t * theta).sin() / sin_theta)
    };
    let q = Quaternion::new(
        a * q0.w + b * q1.w,
        a * q0.x + b * q1.x,
        a * q0.y + b * q1.y,
        a * q0.z + b * q1.z,
    );
    // Both branches produce a nonzero vector for unit, non-antipodal inputs.
    quat_normalize(q).unwrap_or(q0)
}

/// Normalized viewport coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazePoint {
    pub x: f64,
    pub y: f64,
}

impl GazePoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Self) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Raw device-space extent of the gaze coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeBounds {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl GazeBounds {
    pub const UNIT: GazeBounds = GazeBounds { xmin: 0.0, xmax: 1.0, ymin: 0.0, ymax: 1.0 };

    pub fn validate(&self) -> Result<(), GeometryError> {
        if (self.xmax - self.xmin).is_nan() || self.xmax - self.xmin <= 0.0 {
            return Err(GeometryError::DegenerateBounds { axis: 'x', lo: self.xmin, hi: self.xmax });
        }
        if (self.ymax - self.ymin).is_nan() || self.ymax - self.ymin <= 0.0 {
            return Err(GeometryError::DegenerateBounds { axis: 'y', lo: self.ymin, hi: self.ymax });
        }
        Ok(())
    }
}

impl Default for GazeBounds {
    fn default() -> Self {
        Self::UNIT
    }
}

/// Result of [`normalize_gaze`]; `clamped` is set when the raw sample fell
/// outside the bounds and had to be pulled back into the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedGaze {
    pub point: GazePoint,
    pub clamped: bool,
}

pub fn normalize_gaze(raw_x: f64, raw_y: f64, bounds: &GazeBounds) -> Result<NormalizedGaze, GeometryError> {
    bounds.validate()?;
    let x = (raw_x - bounds.xmin) / (bounds.xmax - bounds.xmin);
    let y = (raw_y - bounds.ymin) / (bounds.ymax - bounds.ymin);
    let cx = x.clamp(0.0, 1.0);
    let cy = y.clamp(0.0, 1.0);
    Ok(NormalizedGaze { point: GazePoint::new(cx, cy), clamped: cx != x || cy != y })
}

/// Inverse of [`normalize_gaze`] for in-bounds points.
pub fn denormalize_gaze(p: GazePoint, bounds: &GazeBounds) -> (f64, f64) {
    (
        bounds.xmin + p.x * (bounds.xmax - bounds.xmin),
        bounds.ymin + p.y * (bounds.ymax - bounds.ymin),
    )
}

/// Angular field of view used to map viewport coordinates to head yaw/pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovMap {
    pub horizontal_deg: f64,
    pub vertical_deg: f64,
}

impl Default for FovMap {
    fn default() -> Self {
        Self { horizontal_deg: 100.0, vertical_deg: 100.0 }
    }
}

impl FovMap {
    /// Head orientation looking at viewport point `p`: yaw about +y, then
    /// pitch about +x, applied to the forward axis +z.
    pub fn orientation_for(&self, p: GazePoint) -> Quaternion {
        let yaw = ((p.x - 0.5) * self.horizontal_deg).to_radians();
        let pitch = ((p.y - 0.5) * self.vertical_deg).to_radians();
        let qy = Quaternion::from_axis_angle([0.0, 1.0, 0.0], yaw);
        let qx = Quaternion::from_axis_angle([1.0, 0.0, 0.0], pitch);
        qy * qx
    }

    /// Inverse of [`FovMap::orientation_for`]; roll is ignored.
    pub fn point_for(&self, q: Quaternion) -> GazePoint {
        let d = q.rotate([0.0, 0.0, 1.0]);
        let yaw = d[0].atan2(d[2]).to_degrees();
        let pitch = (-d[1]).clamp(-1.0, 1.0).asin().to_degrees();
        GazePoint::new(yaw / self.horizontal_deg + 0.5, pitch / self.vertical_deg + 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: Quaternion, b: Quaternion, tol: f64) -> bool {
        a.to_array().iter().zip(b.to_array()).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn random_unit(rng: &mut impl Rng) -> Quaternion {
        loop {
            let q = Quaternion::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if q.norm() > 0.1 {
                return quat_normalize(q).unwrap();
            }
        }
    }

    #[test]
    fn normalize_examples() {
        let q = quat_normalize(Quaternion::new(2.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(close(q, Quaternion::IDENTITY, 1e-15));
        let q = quat_normalize(Quaternion::new(0.0, 0.0, 0.0, 3.0)).unwrap();
        assert!(close(q, Quaternion::new(0.0, 0.0, 0.0, 1.0), 1e-15));
        let q = quat_normalize(Quaternion::new(1.0, 1.0, 1.0, 1.0)).unwrap();
        assert!(close(q, Quaternion::new(0.5, 0.5, 0.5, 0.5), 1e-15));
    }

    #[test]
    fn normalize_rejects_zero() {
        assert!(matches!(
            quat_normalize(Quaternion::new(0.0, 0.0, 0.0, 0.0)),
            Err(GeometryError::ZeroNorm(_))
        ));
        assert!(quat_normalize(Quaternion::new(1e-13, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn slerp_identical_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_unit(&mut rng);
        assert!(close(slerp(q, q, 0.7), q, 1e-12));
    }

    #[test]
    fn slerp_midpoint_about_z() {
        let q1 = Quaternion::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        let m = slerp(Quaternion::IDENTITY, q1, 0.5);
        let half = 22.5_f64.to_radians();
        assert!(close(m, Quaternion::new(half.cos(), 0.0, 0.0, half.sin()), 1e-12));
        assert!((m.w - 0.92388).abs() < 1e-5 && (m.z - 0.38268).abs() < 1e-5);
    }

    #[test]
    fn slerp_near_identical_uses_linear_fallback() {
        let q0 = Quaternion::IDENTITY;
        let q1 = quat_normalize(Quaternion::new(1.0, 1e-9, 0.0, 0.0)).unwrap();
        let m = slerp(q0, q1, 0.5);
        assert!(m.is_unit(1e-12));
        assert!(m.x > 0.0 && m.x < 1e-9);
    }

    #[test]
    fn normalize_gaze_examples() {
        let b = GazeBounds { xmin: -3.0, xmax: 5.0, ymin: 10.0, ymax: 30.0 };
        assert_eq!(normalize_gaze(-3.0, 10.0, &b).unwrap().point, GazePoint::new(0.0, 0.0));
        assert_eq!(normalize_gaze(5.0, 30.0, &b).unwrap().point, GazePoint::new(1.0, 1.0));
        let mid = normalize_gaze(1.0, 20.0, &b).unwrap();
        assert_eq!(mid.point, GazePoint::new(0.5, 0.5));
        assert!(!mid.clamped);
        let out = normalize_gaze(7.0, 5.0, &b).unwrap();
        assert!(out.clamped);
        assert_eq!(out.point, GazePoint::new(1.0, 0.0));
    }

    #[test]
    fn degenerate_bounds_rejected() {
        let b = GazeBounds { xmin: 1.0, xmax: 1.0, ymin: 0.0, ymax: 1.0 };
        assert!(matches!(normalize_gaze(0.0, 0.0, &b), Err(GeometryError::DegenerateBounds { axis: 'x', .. })));
        let b = GazeBounds { xmin: 0.0, xmax: 1.0, ymin: 2.0, ymax: 1.0 };
        assert!(matches!(normalize_gaze(0.0, 0.0, &b), Err(GeometryError::DegenerateBounds { axis: 'y', .. })));
    }

    #[test]
    fn fov_map_round_trip() {
        let fov = FovMap::default();
        for &(x, y) in &[(0.5, 0.5), (0.1, 0.9), (0.95, 0.05), (0.3, 0.6)] {
            let q = fov.orientation_for(GazePoint::new(x, y));
            assert!(q.is_unit(1e-12));
            let p = fov.point_for(q);
            assert!((p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12, "{p:?} vs {x},{y}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn unit_quat() -> impl Strategy<Value = Quaternion> {
            (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
                .prop_filter("nonzero", |(w, x, y, z)| w * w + x * x + y * y + z * z > 0.01)
                .prop_map(|(w, x, y, z)| quat_normalize(Quaternion::new(w, x, y, z)).unwrap())
        }

        proptest! {
            #[test]
            fn slerp_output_is_unit(q0 in unit_quat(), q1 in unit_quat()) {
                for i in 0..=100 {
                    let t = i as f64 * 0.01;
                    prop_assert!(slerp(q0, q1, t).is_unit(1e-6));
                }
            }

            #[test]
            fn slerp_endpoints(q0 in unit_quat(), q1 in unit_quat()) {
                prop_assert!(slerp(q0, q1, 0.0).same_rotation(q0, 1e-9));
                prop_assert!(slerp(q0, q1, 1.0).same_rotation(q1, 1e-9));
            }

            #[test]
            fn gaze_round_trip(x in 0.0f64..=1.0, y in 0.0f64..=1.0,
                               xmin in -100.0f64..100.0, w in 0.1f64..500.0,
                               ymin in -100.0f64..100.0, h in 0.1f64..500.0) {
                let b = GazeBounds { xmin, xmax: xmin + w, ymin, ymax: ymin + h };
                let (rx, ry) = denormalize_gaze(GazePoint::new(x, y), &b);
                let p = normalize_gaze(rx, ry, &b).unwrap().point;
                prop_assert!((p.x - x).abs() <= 1e-9 && (p.y - y).abs() <= 1e-9);
            }
        }
    }
}
