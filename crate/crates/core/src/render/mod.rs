//! Depth and instance buffers by per-pixel ray casting against oriented boxes.

use rayon::prelude::*;

use crate::geometry::{camera_ray, CameraIntrinsics, CameraPose, Pixel, Transform, Vec3, MIN_DEPTH};
use crate::layout::{ObjectInstance, SceneLayout};

/// Instance buffer value for background pixels.
pub const BACKGROUND: u16 = 0;

/// Longest image edge sent to a model as an attachment.
pub const PREVIEW_LONG_EDGE: u32 = 512;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("no instance with ordinal {0}")]
    UnknownInstance(u16),
    #[error("image encoding failed: {0}")]
    Encode(String),
}

/// Per-view depth (meters along camera +Z, `+inf` for background) and
/// 1-based instance ordinals (0 for background), both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub view_index: u32,
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
    pub depth: Vec<f64>,
    pub instance: Vec<u16>,
}

impl RenderedView {
    pub fn width(&self) -> usize {
        self.intrinsics.width as usize
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height as usize
    }

    pub fn depth_at(&self, col: usize, row: usize) -> f64 {
        self.depth[row * self.width() + col]
    }

    pub fn instance_at(&self, col: usize, row: usize) -> u16 {
        self.instance[row * self.width() + col]
    }

    /// Pixels labelled with `ordinal`.
    pub fn coverage(&self, ordinal: u16) -> usize {
        self.instance.iter().filter(|&&o| o == ordinal).count()
    }
}

/// Ray entry/exit parameters against the box of `inst`, in the instance's
/// unscaled local frame. Parameters are shared with the world ray because the
/// mapping is affine.
pub fn intersect_instance(inst: &ObjectInstance, origin: Vec3, dir: Vec3) -> Option<f64> {
    intersect_local(&inst.obb.center, &inst.obb.half_extents, inst.transform(), origin, dir)
}

fn intersect_local(center: &Vec3, half: &Vec3, t: &Transform, origin: Vec3, dir: Vec3) -> Option<f64> {
    let o = t.apply_inverse(origin) - *center;
    let d = t.apply_inverse_vector(dir);
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for axis in 0..3 {
        let (oa, da, ha) = (o[axis], d[axis], half[axis]);
        if da == 0.0 {
            if oa < -ha || oa > ha {
                return None;
            }
            continue;
        }
        let inv = 1.0 / da;
        let (mut a, mut b) = ((-ha - oa) * inv, (ha - oa) * inv);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        t0 = t0.max(a);
        t1 = t1.min(b);
        if t0 > t1 {
            return None;
        }
    }
    if t1 <= MIN_DEPTH {
        return None;
    }
    // A camera inside the box sees its far wall.
    Some(if t0 > MIN_DEPTH { t0 } else { t1 })
}

/// Nearest hit over `instances` as (depth, 1-based ordinal); ties keep the lower ordinal.
fn trace(instances: &[ObjectInstance], origin: Vec3, dir: Vec3) -> (f64, u16) {
    let mut best = (f64::INFINITY, BACKGROUND);
    for (i, inst) in instances.iter().enumerate() {
        if let Some(t) = intersect_instance(inst, origin, dir) {
            if t < best.0 {
                best = (t, i as u16 + 1);
            }
        }
    }
    best
}

/// World-space ray through the center of pixel `(col, row)`; its parameter equals camera depth.
pub fn pixel_ray(k: &CameraIntrinsics, pose: &CameraPose, col: usize, row: usize) -> (Vec3, Vec3) {
    let d_cam = camera_ray(k, Pixel::new(col as f64 + 0.5, row as f64 + 0.5));
    (pose.center(), pose.rotation.inverse().rotate(d_cam))
}

pub fn render_view(layout: &SceneLayout, k: &CameraIntrinsics, pose: &CameraPose, view_index: u32) -> RenderedView {
    render_instances(layout.instances(), k, pose, view_index)
}

pub fn render_instances(
    instances: &[ObjectInstance],
    k: &CameraIntrinsics,
    pose: &CameraPose,
    view_index: u32,
) -> RenderedView {
    let (w, h) = (k.width as usize, k.height as usize);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut instance = vec![BACKGROUND; w * h];
    if !instances.is_empty() {
        depth
            .par_chunks_mut(w)
            .zip(instance.par_chunks_mut(w))
            .enumerate()
            .for_each(|(row, (drow, irow))| {
                for col in 0..w {
                    let (o, d) = pixel_ray(k, pose, col, row);
                    let (t, id) = trace(instances, o, d);
                    drow[col] = t;
                    irow[col] = id;
                }
            });
    }
    RenderedView {
        view_index,
        intrinsics: *k,
        pose: *pose,
        depth,
        instance,
    }
}

/// Pixel window `[c0, c1) × [r0, r1)` that can contain the instance, or the
/// whole image when part of the box is behind the camera.
pub fn pixel_window(inst: &ObjectInstance, k: &CameraIntrinsics, pose: &CameraPose) -> (usize, usize, usize, usize) {
    let (w, h) = (k.width as usize, k.height as usize);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in inst.world_corners() {
        let p = pose.to_camera(c);
        if p.z <= MIN_DEPTH {
            return (0, w, 0, h);
        }
        let u = k.fx * p.x / p.z + k.cx;
        let v = k.fy * p.y / p.z + k.cy;
        lo = [lo[0].min(u), lo[1].min(v)];
        hi = [hi[0].max(u), hi[1].max(v)];
    }
    let clamp = |x: f64, n: usize| x.clamp(0.0, n as f64) as usize;
    (
        clamp(lo[0].floor() - 1.0, w),
        clamp(hi[0].ceil() + 1.0, w),
        clamp(lo[1].floor() - 1.0, h),
        clamp(hi[1].ceil() + 1.0, h),
    )
}

/// Pixels `inst` would cover if it were alone in the scene.
pub fn solo_coverage(inst: &ObjectInstance, k: &CameraIntrinsics, pose: &CameraPose) -> usize {
    let (c0, c1, r0, r1) = pixel_window(inst, k, pose);
    (r0..r1)
        .into_par_iter()
        .map(|row| {
            (c0..c1)
                .filter(|&col| {
                    let (o, d) = pixel_ray(k, pose, col, row);
                    intersect_instance(inst, o, d).is_some()
                })
                .count()
        })
        .sum()
}

/// Visible pixels of an instance over the pixels it would cover alone; 0 when it covers none.
pub fn visible_fraction(layout: &SceneLayout, view: &RenderedView, ordinal: u16) -> Result<f64, RenderError> {
    let inst = ordinal
        .checked_sub(1)
        .and_then(|i| layout.instances().get(i as usize))
        .ok_or(RenderError::UnknownInstance(ordinal))?;
    let solo = solo_coverage(inst, &view.intrinsics, &view.pose);
    if solo == 0 {
        return Ok(0.0);
    }
    Ok((view.coverage(ordinal) as f64 / solo as f64).min(1.0))
}

/// Distinct, stable colour per ordinal for previews.
fn palette(ordinal: u16) -> [u8; 3] {
    if ordinal == BACKGROUND {
        return [0, 0, 0];
    }
    let h = u32::from(ordinal).wrapping_mul(2_654_435_761);
    [(h >> 24) as u8 | 0x40, (h >> 16) as u8 | 0x40, (h >> 8) as u8 | 0x40]
}

/// PNG preview of the instance buffer, downscaled (nearest) so the long edge is at most 512 px.
pub fn preview_png(view: &RenderedView) -> Result<Vec<u8>, RenderError> {
    let (w, h) = (view.width() as u32, view.height() as u32);
    let long = w.max(h);
    let (ow, oh) = if long > PREVIEW_LONG_EDGE {
        (
            (u64::from(w) * u64::from(PREVIEW_LONG_EDGE) / u64::from(long)).max(1) as u32,
            (u64::from(h) * u64::from(PREVIEW_LONG_EDGE) / u64::from(long)).max(1) as u32,
        )
    } else {
        (w, h)
    };
    let img = image::RgbImage::from_fn(ow, oh, |x, y| {
        let sx = (u64::from(x) * u64::from(w) / u64::from(ow)) as usize;
        let sy = (u64::from(y) * u64::from(h) / u64::from(oh)) as usize;
        image::Rgb(palette(view.instance_at(sx, sy)))
    });
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| RenderError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}
