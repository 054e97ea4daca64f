use serde::{Deserialize, Serialize};

use super::rotation::Rotation;
use super::vec3::{mat3_transpose, Mat3, Mat4, Vec3};
use super::GeometryError;

/// Depths at or below this are treated as behind the camera.
pub const MIN_DEPTH: f64 = 1e-12;

/// Pinhole intrinsics in pixels. Image +X is right, +Y is down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels, principal point at the image center, horizontal field of view in radians.
    pub fn from_hfov(hfov: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        if !(hfov > 0.0 && hfov < std::f64::consts::PI) {
            return Err(GeometryError::InvalidIntrinsics(format!("hfov {hfov} out of (0, π)")));
        }
        let f = width as f64 * 0.5 / (hfov * 0.5).tan();
        Self::new(f, f, width as f64 * 0.5, height as f64 * 0.5, width, height)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::NonFinite("intrinsics"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("zero image size".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Same camera at `factor` times the resolution.
    pub fn scaled(&self, factor: u32) -> Self {
        let s = factor as f64;
        Self {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            width: self.width * factor,
            height: self.height * factor,
        }
    }

    pub fn matrix(&self) -> Mat3 {
        [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// World-to-camera rigid transform: `p_cam = R · p_world + t`.
/// The camera looks along its local +Z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Default for CameraPose {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl CameraPose {
    pub const IDENTITY: Self = Self {
        rotation: Rotation::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Rotation, translation: Vec3) -> Result<Self, GeometryError> {
        if !translation.is_finite() {
            return Err(GeometryError::NonFinite("camera translation"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Camera at `eye` looking at `target`, with world `up` mapping to image up (−Y).
    ///
    /// When the view direction is parallel to `up`, world +Y is used instead
    /// (and +X if that is parallel too).
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self, GeometryError> {
        if !eye.is_finite() || !target.is_finite() {
            return Err(GeometryError::NonFinite("look_at"));
        }
        let forward = (target - eye).normalized().ok_or(GeometryError::DegenerateRotation)?;
        let right = [up, Vec3::Y, Vec3::X]
            .into_iter()
            .filter_map(|u| {
                let r = forward.cross(u);
                (r.norm() > 1e-9).then_some(r)
            })
            .next()
            .and_then(Vec3::normalized)
            .ok_or(GeometryError::DegenerateRotation)?;
        let down = forward.cross(right);
        // Rows are the camera axes expressed in world coordinates.
        let m: Mat3 = [right.to_array(), down.to_array(), forward.to_array()];
        let rotation = Rotation::from_matrix(&m)?;
        let translation = -rotation.rotate(eye);
        Self::new(rotation, translation)
    }

    #[inline]
    pub fn to_camera(&self, world: Vec3) -> Vec3 {
        self.rotation.rotate(world) + self.translation
    }

    #[inline]
    pub fn to_world(&self, cam: Vec3) -> Vec3 {
        self.rotation.inverse().rotate(cam - self.translation)
    }

    /// Camera center in world coordinates, `−Rᵀ t`.
    pub fn center(&self) -> Vec3 {
        self.to_world(Vec3::ZERO)
    }

    /// Viewing direction (+Z of the camera) in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation.inverse().rotate(Vec3::Z)
    }

    pub fn right(&self) -> Vec3 {
        self.rotation.inverse().rotate(Vec3::X)
    }

    /// Row-major 4×4 world-to-camera matrix.
    pub fn to_matrix(&self) -> Mat4 {
        let r = self.rotation.to_matrix();
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn rotation_matrix_transposed(&self) -> Mat3 {
        mat3_transpose(&self.rotation.to_matrix())
    }
}

/// Image coordinate in pixels (continuous; pixel `(c, r)` spans `[c, c+1) × [r, r+1)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Perspective projection π(K, E, p).
///
/// The result may fall outside the image rectangle; callers clip.
pub fn project(k: &CameraIntrinsics, pose: &CameraPose, p_world: Vec3) -> Result<Pixel, GeometryError> {
    let p = pose.to_camera(p_world);
    project_camera_point(k, p)
}

pub fn project_camera_point(k: &CameraIntrinsics, p: Vec3) -> Result<Pixel, GeometryError> {
    if !(p.z > MIN_DEPTH) {
        return Err(GeometryError::BehindCamera { depth: p.z });
    }
    Ok(Pixel {
        u: k.fx * p.x / p.z + k.cx,
        v: k.fy * p.y / p.z + k.cy,
    })
}

/// Inverse of [`project`] for a known camera-space depth.
pub fn unproject(k: &CameraIntrinsics, pose: &CameraPose, px: Pixel, depth: f64) -> Vec3 {
    pose.to_world(camera_ray(k, px) * depth)
}

/// Camera-space ray direction through `px`, scaled so its z component is 1.
#[inline]
pub fn camera_ray(k: &CameraIntrinsics, px: Pixel) -> Vec3 {
    Vec3::new((px.u - k.cx) / k.fx, (px.v - k.cy) / k.fy, 1.0)
}
