use std::ops::Mul;

use serde::{Deserialize, Serialize};

use super::vec3::{Mat3, Vec3};
use super::GeometryError;

/// A proper rotation stored as a unit quaternion `(w, x, y, z)`.
///
/// The quaternion is normalized on construction. `q` and `-q` describe the
/// same rotation; no sign canonicalization is applied, so equality of two
/// `Rotation`s is bitwise, not rotational. Use [`Rotation::angle_to`] to
/// compare rotations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rotation {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for Rotation {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Rotation {
    pub const IDENTITY: Self = Self {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Builds a rotation from raw quaternion components, normalizing them.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(GeometryError::NonFinite("quaternion"));
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n < 1e-12 {
            return Err(GeometryError::DegenerateRotation);
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Rotation of `angle` radians about `axis` (right-hand rule).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self, GeometryError> {
        let axis = axis.normalized().ok_or(GeometryError::DegenerateRotation)?;
        let (s, c) = (angle * 0.5).sin_cos();
        Self::from_quaternion(c, axis.x * s, axis.y * s, axis.z * s)
    }

    /// Rotation about world +Z. Positive yaw turns +X towards +Y.
    pub fn from_yaw(yaw: f64) -> Self {
        let (s, c) = (yaw * 0.5).sin_cos();
        Self {
            w: c,
            x: 0.0,
            y: 0.0,
            z: s,
        }
    }

    pub fn from_yaw_deg(yaw_deg: f64) -> Self {
        Self::from_yaw(yaw_deg.to_radians())
    }

    /// Z-Y-X intrinsic Euler angles in radians: `Rz(yaw) · Ry(pitch) · Rx(roll)`.
    pub fn from_yaw_pitch_roll(yaw: f64, pitch: f64, roll: f64) -> Self {
        let rz = Self::from_yaw(yaw);
        let (sp, cp) = (pitch * 0.5).sin_cos();
        let ry = Self {
            w: cp,
            x: 0.0,
            y: sp,
            z: 0.0,
        };
        let (sr, cr) = (roll * 0.5).sin_cos();
        let rx = Self {
            w: cr,
            x: sr,
            y: 0.0,
            z: 0.0,
        };
        (rz * ry * rx).renormalized()
    }

    /// Converts an orthonormal, determinant +1 matrix (Shepperd's method).
    pub fn from_matrix(m: &Mat3) -> Result<Self, GeometryError> {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let (w, x, y, z) = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            (
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            (
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            (
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            (
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        };
        Self::from_quaternion(w, x, y, z)
    }

    /// Quaternion components `[w, x, y, z]`.
    pub fn quaternion(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn to_matrix(&self) -> Mat3 {
        let Self { w, x, y, z } = *self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Rotates a vector: `q v q*`.
    #[inline]
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    pub fn inverse(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn dot(&self, rhs: &Self) -> f64 {
        self.w * rhs.w + self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    /// Geodesic angle in radians, in `[0, π]`.
    pub fn angle_to(&self, rhs: &Self) -> f64 {
        let rel = self.inverse() * *rhs;
        let v = (rel.x * rel.x + rel.y * rel.y + rel.z * rel.z).sqrt();
        2.0 * v.atan2(rel.w.abs())
    }

    /// Spherical-linear interpolation along the shortest arc.
    pub fn slerp(&self, rhs: &Self, t: f64) -> Self {
        let mut end = *rhs;
        let mut cos = self.dot(rhs);
        if cos < 0.0 {
            end = Self {
                w: -end.w,
                x: -end.x,
                y: -end.y,
                z: -end.z,
            };
            cos = -cos;
        }
        let (a, b) = if cos > 1.0 - 1e-12 {
            (1.0 - t, t)
        } else {
            let theta = cos.min(1.0).acos();
            let sin = theta.sin();
            (((1.0 - t) * theta).sin() / sin, (t * theta).sin() / sin)
        };
        Self {
            w: a * self.w + b * end.w,
            x: a * self.x + b * end.x,
            y: a * self.y + b * end.y,
            z: a * self.z + b * end.z,
        }
        .renormalized()
    }

    /// Heading of the rotated +X axis about world +Z, in radians.
    pub fn yaw(&self) -> f64 {
        let f = self.rotate(Vec3::X);
        f.y.atan2(f.x)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn renormalized(self) -> Self {
        let n = self.norm();
        Self {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }
}

/// Hamilton product: `(a * b).rotate(v) == a.rotate(b.rotate(v))`.
impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, r: Rotation) -> Rotation {
        Rotation {
            w: self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            x: self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            y: self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            z: self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        }
        .renormalized()
    }
}

/// Squared-norm slack of a quaternion written with nine significant digits.
const DOCUMENT_UNIT_TOLERANCE: f64 = 1e-8;

impl TryFrom<[f64; 4]> for Rotation {
    type Error = GeometryError;

    /// Components already unit length up to decimal rounding are kept as
    /// written, so a rotation read from a document writes the same digits.
    fn try_from(q: [f64; 4]) -> Result<Self, Self::Error> {
        let [w, x, y, z] = q;
        let norm_sq = w * w + x * x + y * y + z * z;
        if norm_sq.is_finite() && (norm_sq - 1.0).abs() <= DOCUMENT_UNIT_TOLERANCE {
            return Ok(Self { w, x, y, z });
        }
        Self::from_quaternion(w, x, y, z)
    }
}

impl From<Rotation> for [f64; 4] {
    fn from(r: Rotation) -> Self {
        r.quaternion()
    }
}
