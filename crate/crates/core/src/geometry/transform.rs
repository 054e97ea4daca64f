use serde::{Deserialize, Serialize};

use super::rotation::Rotation;
use super::vec3::{Mat4, Vec3};
use super::GeometryError;

/// Object-to-world transform applied as scale, then rotate, then translate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub translation: Vec3,
    pub rotation: Rotation,
    pub scale: Vec3,
}

impl Default for Transform {
    fn default() -> Self {
        Self {
            translation: Vec3::ZERO,
            rotation: Rotation::IDENTITY,
            scale: Vec3::ONE,
        }
    }
}

/// Builds the transform that embeds an object into the global layout.
///
/// Applying the result to a local point `q` yields `rotation · (scale ⊙ q) + position`.
pub fn compose_transform(
    position: Vec3,
    rotation: Rotation,
    scale: Vec3,
) -> Result<Transform, GeometryError> {
    if !position.is_finite() {
        return Err(GeometryError::NonFinite("position"));
    }
    if !scale.is_finite() {
        return Err(GeometryError::NonFinite("scale"));
    }
    for axis in 0..3 {
        if scale[axis] <= 0.0 {
            return Err(GeometryError::NonPositiveScale {
                axis,
                value: scale[axis],
            });
        }
    }
    Ok(Transform {
        translation: position,
        rotation,
        scale,
    })
}

impl Transform {
    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            translation,
            ..Self::default()
        }
    }

    #[inline]
    pub fn apply(&self, local: Vec3) -> Vec3 {
        self.rotation.rotate(local.hadamard(self.scale)) + self.translation
    }

    /// Maps a world point back into the object's local (unscaled) frame.
    #[inline]
    pub fn apply_inverse(&self, world: Vec3) -> Vec3 {
        let r = self.rotation.inverse().rotate(world - self.translation);
        Vec3::new(r.x / self.scale.x, r.y / self.scale.y, r.z / self.scale.z)
    }

    /// Maps a world direction into the local frame (no translation).
    #[inline]
    pub fn apply_inverse_vector(&self, dir: Vec3) -> Vec3 {
        let r = self.rotation.inverse().rotate(dir);
        Vec3::new(r.x / self.scale.x, r.y / self.scale.y, r.z / self.scale.z)
    }

    /// Homogeneous 4×4 matrix `T · R · S`.
    pub fn to_matrix(&self) -> Mat4 {
        let r = self.rotation.to_matrix();
        let s = self.scale;
        let t = self.translation;
        [
            [r[0][0] * s.x, r[0][1] * s.y, r[0][2] * s.z, t.x],
            [r[1][0] * s.x, r[1][1] * s.y, r[1][2] * s.z, t.y],
            [r[2][0] * s.x, r[2][1] * s.y, r[2][2] * s.z, t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }
}

/// Oriented bounding box in an object's local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Vec3,
    pub half_extents: Vec3,
}

impl Obb {
    pub fn new(center: Vec3, half_extents: Vec3) -> Result<Self, GeometryError> {
        if !center.is_finite() || !half_extents.is_finite() {
            return Err(GeometryError::NonFinite("obb"));
        }
        if half_extents.min_component() <= 0.0 {
            return Err(GeometryError::NonPositiveExtent);
        }
        Ok(Self {
            center,
            half_extents,
        })
    }

    /// Full extents `(w, h, d)`.
    pub fn size(&self) -> Vec3 {
        self.half_extents * 2.0
    }

    pub fn volume(&self) -> f64 {
        let s = self.size();
        s.x * s.y * s.z
    }

    /// Local corners. Bit 0 of the index selects +x, bit 1 +y, bit 2 +z.
    pub fn local_corners(&self) -> [Vec3; 8] {
        let mut out = [Vec3::ZERO; 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 != 0 { 1.0 } else { -1.0 };
            let sy = if i & 2 != 0 { 1.0 } else { -1.0 };
            let sz = if i & 4 != 0 { 1.0 } else { -1.0 };
            *c = self.center + self.half_extents.hadamard(Vec3::new(sx, sy, sz));
        }
        out
    }

    /// Center of the bottom face in local coordinates.
    pub fn local_bottom_center(&self) -> Vec3 {
        Vec3::new(self.center.x, self.center.y, self.center.z - self.half_extents.z)
    }
}

pub fn obb_world_corners(obb: &Obb, t: &Transform) -> [Vec3; 8] {
    obb.local_corners().map(|c| t.apply(c))
}

/// World position of the bottom-center point `c_i`.
pub fn obb_bottom_center(obb: &Obb, t: &Transform) -> Vec3 {
    t.apply(obb.local_bottom_center())
}
