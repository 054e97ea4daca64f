//! Dataset serialization: scene JSON, PFM depth, PGM masks, camera
//! trajectories, object poses and the hashed bundle manifest.

mod bundle;

use serde::Deserialize;
use serde_json::{json, Value};

pub use bundle::{
    atomic_write, sha256_hex, verify_bundle, write_bundle, write_files, write_manifest, BundleFile, FileEntry, Manifest, SceneEntry, MANIFEST_NAME,
    MANIFEST_SCHEMA,
};

use crate::assets::SpatialConstraint;
use crate::canonical::{to_canonical_bytes, value_to_canonical_bytes};
use crate::geometry::{compose_transform, CameraIntrinsics, Obb, Rotation, Vec3};
use crate::layout::{LayoutConfig, LayoutError, ObjectInstance, PlacedBy, Rect, SceneLayout, SupportSpec};
use crate::planner::FrameSequence;
use crate::render::{RenderedView, BACKGROUND};

pub const SCENE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExportError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("mask needs {0} labels but 8-bit PGM holds at most 255")]
    TooManyInstances(u16),
    #[error("malformed {format}: {message}")]
    Format { format: &'static str, message: String },
    #[error("bundle check failed for {path}: {message}")]
    Verify { path: String, message: String },
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

fn format_err(format: &'static str, message: impl Into<String>) -> ExportError {
    ExportError::Format {
        format,
        message: message.into(),
    }
}

fn instance_value(inst: &ObjectInstance) -> Value {
    let t = inst.transform();
    json!({
        "id": inst.instance_id,
        "asset_id": inst.asset_id,
        "position": t.translation,
        "rotation": t.rotation,
        "scale": t.scale,
        "bbox": inst.obb.size(),
        "support_surface": inst.support_surface,
    })
}

/// The scene document as a JSON value.
pub fn scene_value(layout: &SceneLayout) -> Value {
    json!({
        "schema": SCENE_SCHEMA,
        "extent": layout.extent(),
        "instances": layout.instances().iter().map(instance_value).collect::<Vec<_>>(),
        "constraints": layout.constraints(),
    })
}

/// Canonical scene.json bytes.
pub fn export_scene(layout: &SceneLayout) -> Vec<u8> {
    value_to_canonical_bytes(&scene_value(layout))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    schema: u32,
    extent: Rect,
    instances: Vec<InstanceDoc>,
    constraints: Vec<SpatialConstraint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    id: String,
    asset_id: String,
    position: Vec3,
    rotation: Rotation,
    scale: Vec3,
    bbox: Vec3,
    #[serde(default)]
    support_surface: Option<f64>,
}

/// Rebuilds a layout from a scene document.
///
/// Instances keep their order (and so their mask ordinals) and exact poses.
/// Supports are re-derived from `on` and `inside` constraints.
pub fn import_scene_value(value: Value, config: LayoutConfig) -> Result<SceneLayout, ExportError> {
    let doc: SceneDoc = serde_json::from_value(value).map_err(|e| format_err("scene.json", e.to_string()))?;
    if doc.schema != SCENE_SCHEMA {
        return Err(format_err("scene.json", format!("unsupported schema {}", doc.schema)));
    }
    let mut layout = SceneLayout::with_extent(config, doc.extent)?;
    let support_for = |id: &str| {
        doc.constraints
            .iter()
            .filter(|c| c.subject == id)
            .find_map(SupportSpec::from_constraint)
    };
    let mut deferred = Vec::new();
    for inst in &doc.instances {
        let obb = Obb::new(Vec3::new(0.0, 0.0, inst.bbox.z / 2.0), inst.bbox / 2.0).map_err(LayoutError::from)?;
        let t = compose_transform(inst.position, inst.rotation, inst.scale).map_err(LayoutError::from)?;
        let object = ObjectInstance::new(
            inst.id.clone(),
            inst.asset_id.clone(),
            inst.asset_id.clone(),
            obb,
            t,
            PlacedBy::Instructed,
            inst.support_surface,
        );
        let support = support_for(&inst.id);
        match support {
            Some(s) if layout.instance(&s.support_id).is_none() => {
                deferred.push((inst.id.clone(), s));
                layout.place_instructed(object, inst.position, None)?;
            }
            s => layout.place_instructed(object, inst.position, s)?,
        }
    }
    for (id, s) in deferred {
        layout.set_support(&id, Some(s))?;
    }
    for c in doc.constraints {
        layout.add_constraint(c)?;
    }
    Ok(layout)
}

pub fn import_scene(bytes: &[u8], config: LayoutConfig) -> Result<SceneLayout, ExportError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| format_err("scene.json", e.to_string()))?;
    import_scene_value(value, config)
}

/// PFM grayscale depth: bottom row first, little-endian, background as 0.
pub fn export_depth(view: &RenderedView) -> Vec<u8> {
    let (w, h) = (view.width(), view.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for row in (0..h).rev() {
        for col in 0..w {
            let d = view.depth_at(col, row);
            let v = if d.is_finite() { d as f32 } else { 0.0 };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Splits a binary Netpbm-style header of `fields` whitespace-separated
/// tokens (each token ends with exactly one whitespace byte).
fn split_header<'a>(bytes: &'a [u8], fields: usize, format: &'static str) -> Result<(Vec<&'a str>, &'a [u8]), ExportError> {
    let mut tokens = Vec::with_capacity(fields);
    let mut pos = 0;
    while tokens.len() < fields {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos || pos >= bytes.len() {
            return Err(format_err(format, "truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| format_err(format, "non-ASCII header"))?);
    }
    Ok((tokens, &bytes[pos + 1..]))
}

/// Decoded depth map, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl DepthImage {
    pub fn at(&self, col: usize, row: usize) -> f32 {
        self.values[row * self.width + col]
    }
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DepthImage, ExportError> {
    let (tokens, data) = split_header(bytes, 4, "PFM")?;
    if tokens[0] != "Pf" {
        return Err(format_err("PFM", "only grayscale `Pf` is supported"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format_err("PFM", format!("bad dimension `{s}`")));
    let (w, h) = (parse(tokens[1])?, parse(tokens[2])?);
    let scale: f64 = tokens[3].parse().map_err(|_| format_err("PFM", "bad scale"))?;
    if scale >= 0.0 {
        return Err(format_err("PFM", "only little-endian (negative scale) files are supported"));
    }
    if data.len() != w * h * 4 {
        return Err(format_err("PFM", format!("expected {} data bytes, found {}", w * h * 4, data.len())));
    }
    let mut values = vec![0.0f32; w * h];
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let (file_row, col) = (i / w, i % w);
        values[(h - 1 - file_row) * w + col] = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
    }
    Ok(DepthImage {
        width: w,
        height: h,
        values,
    })
}

/// Binary PGM of instance ordinals, row-major, 0 for background.
pub fn export_mask(view: &RenderedView) -> Result<Vec<u8>, ExportError> {
    let max = view.instance.iter().copied().max().unwrap_or(BACKGROUND);
    if max > 255 {
        return Err(ExportError::TooManyInstances(max));
    }
    let mut out = format!("P5\n{} {}\n255\n", view.width(), view.height()).into_bytes();
    out.extend(view.instance.iter().map(|&i| i as u8));
    Ok(out)
}

/// Decoded mask: `(width, height, labels)`, top row first.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), ExportError> {
    let (tokens, data) = split_header(bytes, 4, "PGM")?;
    if tokens[0] != "P5" || tokens[3] != "255" {
        return Err(format_err("PGM", "expected an 8-bit P5 file"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format_err("PGM", format!("bad dimension `{s}`")));
    let (w, h) = (parse(tokens[1])?, parse(tokens[2])?);
    if data.len() != w * h {
        return Err(format_err("PGM", format!("expected {} data bytes, found {}", w * h, data.len())));
    }
    Ok((w, h, data.to_vec()))
}

/// trajectory.json: one entry per frame with the row-major world-to-camera
/// extrinsic and the intrinsics.
pub fn trajectory_value(seq: &FrameSequence, intrinsics: &CameraIntrinsics) -> Value {
    Value::Array(
        seq.frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let m = f.camera.pose.to_matrix();
                json!({
                    "frame": i,
                    "time_s": f.time_s,
                    "extrinsic": m.iter().flatten().copied().collect::<Vec<f64>>(),
                    "intrinsic": {
                        "fx": intrinsics.fx,
                        "fy": intrinsics.fy,
                        "cx": intrinsics.cx,
                        "cy": intrinsics.cy,
                    },
                })
            })
            .collect(),
    )
}

pub fn export_trajectory(seq: &FrameSequence, intrinsics: &CameraIntrinsics) -> Vec<u8> {
    value_to_canonical_bytes(&trajectory_value(seq, intrinsics))
}

/// poses.json: per frame, every object's position and rotation.
pub fn poses_value(seq: &FrameSequence) -> Value {
    Value::Array(
        seq.frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                json!({
                    "frame": i,
                    "time_s": f.time_s,
                    "objects": f.objects,
                })
            })
            .collect(),
    )
}

pub fn export_poses(seq: &FrameSequence) -> Vec<u8> {
    value_to_canonical_bytes(&poses_value(seq))
}

/// Canonical bytes of any serializable document (plans, reports).
pub fn export_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, ExportError> {
    to_canonical_bytes(value).map_err(|e| format_err("json", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraPose;
    use crate::render::render_view;

    fn empty_view(w: u32, h: u32) -> RenderedView {
        let k = CameraIntrinsics::new(10.0, 10.0, f64::from(w) / 2.0, f64::from(h) / 2.0, w, h).unwrap();
        let layout = SceneLayout::new(LayoutConfig::default()).unwrap();
        render_view(&layout, &k, &CameraPose::IDENTITY, 0)
    }

    #[test]
    fn background_pfm_is_header_plus_zeros() {
        let bytes = export_depth(&empty_view(2, 2));
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 16);
        assert!(bytes[header.len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn background_pgm_is_zeros() {
        let bytes = export_mask(&empty_view(3, 2)).unwrap();
        let (w, h, data) = decode_pgm(&bytes).unwrap();
        assert_eq!((w, h), (3, 2));
        assert!(data.iter().all(|&b| b == 0));
    }

    #[test]
    fn pfm_rows_are_flipped() {
        let mut v = empty_view(2, 2);
        v.depth = vec![1.0, 2.0, 3.0, f64::INFINITY];
        let bytes = export_depth(&v);
        let first = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
        assert_eq!(first, 3.0);
        let img = decode_pfm(&bytes).unwrap();
        assert_eq!(img.values, vec![1.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn too_many_labels() {
        let mut v = empty_view(2, 1);
        v.instance[0] = 256;
        assert_eq!(export_mask(&v), Err(ExportError::TooManyInstances(256)));
    }

    #[test]
    fn empty_scene_document() {
        let layout = SceneLayout::new(LayoutConfig::default()).unwrap();
        let v: Value = serde_json::from_slice(&export_scene(&layout)).unwrap();
        assert_eq!(v["instances"], json!([]));
        assert_eq!(v["constraints"], json!([]));
        assert_eq!(v["schema"], json!(1));
    }
}
