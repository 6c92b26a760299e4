//! Unit quaternions (Hamilton convention, scalar first) and the log/exp maps
//! between the unit sphere in R^4 and its tangent space at the identity.
//!
//! The tangent vectors produced by [`UnitQuaternion::log`] carry half the
//! rotation angle; rotation-vector quantities used elsewhere (angular velocity,
//! orientation error) are `2 * log(...)`.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// How far from 1 a norm may be before `log` rejects the quaternion.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Vector parts (and tangent vectors) below this norm take the small-angle
/// branch of the log/exp maps.
pub const SMALL_ANGLE_EPS: f64 = 1e-12;

/// A quaternion of unit norm. Every constructor and operation renormalizes, so
/// holding one means `w^2 + x^2 + y^2 + z^2 = 1` up to a few ulp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: Self = Self {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Builds a unit quaternion from raw components, normalizing them.
    /// Fails if the components are all (near) zero or not finite.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-9 {
            return Err(Error::Domain(format!(
                "cannot normalize quaternion ({w}, {x}, {y}, {z}) with norm {n}"
            )));
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn vector_part(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    fn negated(&self) -> Self {
        Self {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    fn renormalized(self) -> Self {
        let n = self.norm();
        debug_assert!(n > 0.5, "renormalizing a severely degraded quaternion");
        Self {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    /// Hamilton product without the final renormalization. Integrators use
    /// this to monitor norm drift before snapping back to the sphere.
    pub fn product_raw(&self, rhs: &Self) -> (f64, f64, f64, f64) {
        (
            self.w * rhs.w - self.x * rhs.x - self.y * rhs.y - self.z * rhs.z,
            self.w * rhs.x + self.x * rhs.w + self.y * rhs.z - self.z * rhs.y,
            self.w * rhs.y - self.x * rhs.z + self.y * rhs.w + self.z * rhs.x,
            self.w * rhs.z + self.x * rhs.y - self.y * rhs.x + self.z * rhs.w,
        )
    }

    /// Logarithmic map onto the tangent space at the identity.
    ///
    /// Returns `arccos(w) * v / |v|` where `v` is the vector part; the zero
    /// vector for the identity; an error for the antipode `(-1, 0, 0, 0)`
    /// (where no unique tangent exists) and for non-unit input. The result
    /// norm is strictly below pi.
    pub fn log(&self) -> Result<Vector3<f64>> {
        let n = self.norm();
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Domain(format!(
                "log is only defined for unit quaternions (norm {n})"
            )));
        }
        let v = self.vector_part();
        let vn = v.norm();
        if vn < SMALL_ANGLE_EPS {
            if self.w < 0.0 {
                return Err(Error::Domain(
                    "log is undefined at the antipode (-1, 0, 0, 0)".to_string(),
                ));
            }
            return Ok(Vector3::zeros());
        }
        // atan2(|v|, w) equals arccos(w / norm) on the upper and lower
        // hemispheres alike, but stays well conditioned when w is close to
        // +/-1, where arccos loses half the significant digits.
        let half_angle = vn.atan2(self.w);
        Ok(v * (half_angle / vn))
    }

    /// Exponential map from the tangent space back to the sphere:
    /// `(cos |u|, sin |u| * u / |u|)`, identity for `u = 0`.
    pub fn exp(u: &Vector3<f64>) -> Self {
        let n = u.norm();
        if n < SMALL_ANGLE_EPS {
            return Self::IDENTITY;
        }
        let s = n.sin() / n;
        Self {
            w: n.cos(),
            x: s * u.x,
            y: s * u.y,
            z: s * u.z,
        }
        .renormalized()
    }

    /// Geodesic rotation angle between two orientations, in radians, treating
    /// q and -q as the same rotation. Never fails.
    ///
    /// Computed from the relative quaternion `conj(a) * b` as
    /// `2 atan2(|vec|, |w|)`: for identical inputs the vector part cancels
    /// exactly and the angle is exactly zero, and tiny angles keep full
    /// precision where `acos` of the dot product would drown them in noise.
    pub fn rotation_angle_to(&self, other: &Self) -> f64 {
        let (w, x, y, z) = self.conjugate().product_raw(other);
        let vn = (x * x + y * y + z * z).sqrt();
        2.0 * vn.atan2(w.abs())
    }
}

impl std::ops::Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        let (w, x, y, z) = self.product_raw(&rhs);
        UnitQuaternion { w, x, y, z }.renormalized()
    }
}

impl std::ops::Neg for UnitQuaternion {
    type Output = UnitQuaternion;

    fn neg(self) -> UnitQuaternion {
        self.negated()
    }
}

/// Flips signs along a sequence so that consecutive quaternions land on the
/// same hemisphere: the first element gets `w >= 0`, and every later element
/// has a non-negative dot product with its predecessor. Sign flips do not
/// change the rotations represented.
pub fn hemisphere_align(sequence: &[UnitQuaternion]) -> Vec<UnitQuaternion> {
    let mut out = Vec::with_capacity(sequence.len());
    for q in sequence {
        let q = match out.last() {
            None => {
                if q.w < 0.0 {
                    q.negated()
                } else {
                    *q
                }
            }
            Some(prev) => {
                if q.dot(prev) < 0.0 {
                    q.negated()
                } else {
                    *q
                }
            }
        };
        out.push(q);
    }
    out
}
