use serde::{Deserialize, Serialize};

use super::OptimizeError;
use crate::geometry::{CameraIntrinsics, CameraPose, Vec3};
use crate::layout::SceneLayout;

/// Ring camera elevation above the horizon.
pub const RING_ELEVATION_DEG: f64 = 30.0;
/// Ring radius as a multiple of the scene's 3D bounding-box diagonal.
pub const RING_RADIUS_FACTOR: f64 = 1.5;
/// Floor on the diagonal so a tiny or empty scene still gets a usable ring.
const MIN_DIAGONAL: f64 = 0.1;

/// Intrinsics and extrinsics of one view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

/// Center and diagonal of the layout's bounding box.
pub fn scene_sphere(layout: &SceneLayout) -> (Vec3, f64) {
    match layout.bounds() {
        Some((lo, hi)) => ((lo + hi) / 2.0, (hi - lo).norm().max(MIN_DIAGONAL)),
        None => (Vec3::ZERO, MIN_DIAGONAL),
    }
}

/// Square-pixel intrinsics whose field of view just contains a sphere of
/// `radius` seen from `distance`, principal point at the image center.
pub fn fitted_intrinsics(width: u32, height: u32, radius: f64, distance: f64) -> Result<CameraIntrinsics, OptimizeError> {
    let half_angle = (radius / distance).clamp(1e-6, 0.999).asin();
    let f = f64::from(width.min(height)) / 2.0 / half_angle.tan();
    Ok(CameraIntrinsics::new(f, f, f64::from(width) / 2.0, f64::from(height) / 2.0, width, height)?)
}

/// `n` cameras at equal azimuths on a circle of radius 1.5× the scene
/// diagonal, 30° above the horizon, all aimed at the bounding-box center.
/// The first camera sits at `start_azimuth_deg` (0 = +x).
pub fn camera_ring(
    layout: &SceneLayout,
    n: usize,
    width: u32,
    height: u32,
    start_azimuth_deg: f64,
) -> Result<Vec<CameraRig>, OptimizeError> {
    if n == 0 {
        return Err(OptimizeError::InvalidConfig("camera ring needs at least one view".into()));
    }
    let (center, diag) = scene_sphere(layout);
    let radius = RING_RADIUS_FACTOR * diag;
    let intrinsics = fitted_intrinsics(width, height, diag / 2.0, radius)?;
    let el = RING_ELEVATION_DEG.to_radians();
    (0..n)
        .map(|i| {
            let az = (start_azimuth_deg + 360.0 * i as f64 / n as f64).to_radians();
            let eye = center + Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * radius;
            Ok(CameraRig {
                intrinsics,
                pose: CameraPose::look_at(eye, center, Vec3::Z)?,
            })
        })
        .collect()
}

/// A camera looking down at `target` from `distance` away, tilted
/// `tilt_deg` from vertical towards azimuth `azimuth_deg`.
///
/// Vertical offsets at `target` lie almost along this camera's line of
/// sight, which is the configuration that hides them.
pub fn aligned_camera(
    target: Vec3,
    tilt_deg: f64,
    azimuth_deg: f64,
    distance: f64,
    intrinsics: CameraIntrinsics,
) -> Result<CameraRig, OptimizeError> {
    let (t, a) = (tilt_deg.to_radians(), azimuth_deg.to_radians());
    let eye = target + Vec3::new(t.sin() * a.cos(), t.sin() * a.sin(), t.cos()) * distance;
    Ok(CameraRig {
        intrinsics,
        pose: CameraPose::look_at(eye, target, Vec3::Z)?,
    })
}

/// A camera aligned with the vertical through `target`, followed by `n − 1`
/// ring cameras starting a quarter turn away from the aligned camera's azimuth.
pub fn aligned_rig(
    layout: &SceneLayout,
    target: Vec3,
    n: usize,
    width: u32,
    height: u32,
    tilt_deg: f64,
    azimuth_deg: f64,
) -> Result<Vec<CameraRig>, OptimizeError> {
    if n == 0 {
        return Err(OptimizeError::InvalidConfig("camera rig needs at least one view".into()));
    }
    let (_, diag) = scene_sphere(layout);
    let distance = RING_RADIUS_FACTOR * diag;
    let intrinsics = fitted_intrinsics(width, height, diag / 2.0, distance)?;
    let mut rig = vec![aligned_camera(target, tilt_deg, azimuth_deg, distance, intrinsics)?];
    if n > 1 {
        rig.extend(camera_ring(layout, n - 1, width, height, azimuth_deg + 90.0)?);
    }
    Ok(rig)
}
