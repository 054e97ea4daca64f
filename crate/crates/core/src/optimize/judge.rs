//! Constraint judges: an analytic per-view judge and a gateway-backed one.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CameraRig, OptimizeError};
use crate::assets::{Predicate, SpatialConstraint};
use crate::export::scene_value;
use crate::gateway::{prompts, Attachment, GatewayHandle, RoleTag, StructuredRequest};
use crate::geometry::{project, CameraPose, Vec3};
use crate::layout::{ObjectInstance, SceneLayout};
use crate::render::{intersect_instance, pixel_ray, pixel_window, preview_png, RenderedView};

/// Pixels of projected gap tolerated before an `on` score starts to fall.
pub const ON_TOLERANCE_PX: f64 = 2.0;
/// Additional gap over which an `on` score falls from 1 to 0.
pub const ON_FALLOFF_PX: f64 = 20.0;
/// Score reported when a view carries no evidence about the subject.
pub const UNINFORMATIVE_SCORE: f64 = 0.5;

/// One view's confidence that a constraint holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeVerdict {
    pub constraint: SpatialConstraint,
    pub view_index: u32,
    pub score: f64,
    pub rationale: String,
}

impl JudgeVerdict {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        self.constraint.validate()
    }
}

/// Anything that can score a constraint in each rendered view.
pub trait Judge: Sync {
    /// One verdict per view, in view order.
    fn judge(
        &self,
        layout: &SceneLayout,
        views: &[RenderedView],
        constraint: &SpatialConstraint,
    ) -> Result<Vec<JudgeVerdict>, OptimizeError>;

    fn name(&self) -> &str;
}

/// The offline judge; see [`geometric_judge`].
#[derive(Debug, Clone, Copy, Default)]
pub struct GeometricJudge;

impl Judge for GeometricJudge {
    fn judge(
        &self,
        layout: &SceneLayout,
        views: &[RenderedView],
        constraint: &SpatialConstraint,
    ) -> Result<Vec<JudgeVerdict>, OptimizeError> {
        geometric_judge(layout, views, constraint)
    }

    fn name(&self) -> &str {
        "geometric"
    }
}

/// Subject coverage in one view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Coverage {
    /// Pixels the subject covers when rendered alone.
    pub solo: usize,
    /// Of those, pixels where the subject is the nearest surface.
    pub visible: usize,
    /// Of those, pixels where the reference is the nearest surface.
    pub hidden_by_reference: usize,
}

pub fn coverage(subject: &ObjectInstance, subject_ord: u16, reference_ord: u16, view: &RenderedView) -> Coverage {
    let (k, pose) = (&view.intrinsics, &view.pose);
    let (c0, c1, r0, r1) = pixel_window(subject, k, pose);
    let mut cov = Coverage::default();
    for row in r0..r1 {
        for col in c0..c1 {
            let (o, d) = pixel_ray(k, pose, col, row);
            if intersect_instance(subject, o, d).is_none() {
                continue;
            }
            cov.solo += 1;
            match view.instance_at(col, row) {
                x if x == subject_ord => cov.visible += 1,
                x if x == reference_ord => cov.hidden_by_reference += 1,
                _ => {}
            }
        }
    }
    cov
}

fn lookup<'a>(layout: &'a SceneLayout, id: &str) -> Result<(&'a ObjectInstance, u16), OptimizeError> {
    let inst = layout
        .instance(id)
        .ok_or_else(|| OptimizeError::UnknownInstance(id.to_owned()))?;
    Ok((inst, layout.ordinal(id).expect("instance exists")))
}

/// Horizontal unit axes (right, forward) of a camera, flattened onto the ground.
fn ground_axes(pose: &CameraPose) -> (Vec3, Vec3) {
    let flat = |v: Vec3| Vec3::new(v.x, v.y, 0.0).normalized().unwrap_or(Vec3::X);
    let right = flat(pose.right());
    (right, Vec3::Z.cross(right))
}

fn half_extent_along(inst: &ObjectInstance, axis: Vec3) -> f64 {
    let c = inst.world_center();
    inst.world_corners().iter().map(|p| (*p - c).dot(axis)).fold(0.0, f64::max)
}

/// Ramp from 0 (subject fully on the wrong side) to 1 (fully separated on the right side).
fn directional_score(a: &ObjectInstance, b: &ObjectInstance, axis: Vec3) -> f64 {
    let s = (a.world_center() - b.world_center()).dot(axis);
    let m = (half_extent_along(a, axis) + half_extent_along(b, axis)).max(1e-9);
    ((s + m) / (2.0 * m)).clamp(0.0, 1.0)
}

/// Score of a non-`on` predicate from world geometry; view-relative
/// predicates use the axes of `reference`.
fn spatial_score(predicate: Predicate, param: Option<f64>, a: &ObjectInstance, b: &ObjectInstance, reference: &CameraPose) -> f64 {
    let (right, forward) = ground_axes(reference);
    match predicate {
        Predicate::LeftOf => directional_score(a, b, -right),
        Predicate::RightOf => directional_score(a, b, right),
        // Nearer to the reference camera means smaller coordinate along forward.
        Predicate::InFrontOf => directional_score(a, b, -forward),
        Predicate::Behind => directional_score(a, b, forward),
        Predicate::Near => {
            let d = param.unwrap_or(crate::assets::DEFAULT_NEAR_DISTANCE);
            let gap = a.footprint().distance(b.footprint());
            (1.0 - (gap - d) / d).clamp(0.0, 1.0)
        }
        Predicate::Above => {
            let clear = a.bottom_z() >= b.top_z() - 1e-6;
            let over = a.footprint().overlaps(b.footprint());
            if clear && over {
                1.0
            } else {
                0.0
            }
        }
        Predicate::Inside => {
            let inside = a
                .world_corners()
                .iter()
                .filter(|p| {
                    let q = b.transform().apply_inverse(**p) - b.obb.center;
                    (0..3).all(|i| q[i].abs() <= b.obb.half_extents[i] + 1e-9)
                })
                .count();
            inside as f64 / 8.0
        }
        Predicate::On => unreachable!("on is judged from image evidence"),
    }
}

/// Whether a constraint holds exactly in world space (ground truth, not a judge).
pub fn holds_in_world(layout: &SceneLayout, c: &SpatialConstraint, reference: &CameraPose) -> Result<bool, OptimizeError> {
    let (a, _) = lookup(layout, &c.subject)?;
    let (b, _) = lookup(layout, &c.reference)?;
    Ok(holds_between(c, a, b, reference))
}

/// [`holds_in_world`] for explicit subject and reference instances, so
/// candidate subject poses can be tested without mutating a layout.
pub fn holds_between(c: &SpatialConstraint, a: &ObjectInstance, b: &ObjectInstance, reference: &CameraPose) -> bool {
    match c.predicate {
        Predicate::On => {
            let foot = a.bottom_center();
            (a.bottom_z() - b.support_height()).abs() < 1e-6 && b.footprint().contains([foot.x, foot.y])
        }
        p => spatial_score(p, c.param, a, b, reference) >= 1.0,
    }
}

fn on_view_score(a: &ObjectInstance, b: &ObjectInstance, cov: &Coverage, view: &RenderedView) -> (f64, String) {
    let (k, pose) = (&view.intrinsics, &view.pose);
    let bottom = a.bottom_center();
    let foot = Vec3::new(bottom.x, bottom.y, b.support_height());
    let (Ok(pa), Ok(pf)) = (project(k, pose, bottom), project(k, pose, foot)) else {
        return (UNINFORMATIVE_SCORE, "contact point behind the camera; uninformative".into());
    };
    if 2 * cov.hidden_by_reference > cov.solo {
        return (0.0, format!("{} hides most of the subject; depth order contradicts resting on it", b.instance_id));
    }
    let (col, row) = (pf.u.floor(), pf.v.floor());
    if col < 0.0 || row < 0.0 || col >= f64::from(k.width) || row >= f64::from(k.height) {
        return (UNINFORMATIVE_SCORE, "contact point outside the frame; uninformative".into());
    }
    let (o, d) = pixel_ray(k, pose, col as usize, row as usize);
    if intersect_instance(b, o, d).is_none() {
        return (0.0, format!("contact point does not fall on {}", b.instance_id));
    }
    let gap = pa.distance(&pf);
    let score = (1.0 - (gap - ON_TOLERANCE_PX) / ON_FALLOFF_PX).clamp(0.0, 1.0);
    (score, format!("bottom edge {gap:.2} px from the support line"))
}

/// Scores `constraint` in each view from that view's evidence alone.
///
/// `on(a, b)` compares the projection of a's bottom-center with the
/// projection of the point below it on b's support surface: within 2 px
/// scores 1, falling linearly to 0 over a further 20 px. The contact pixel
/// must land on b's silhouette and b must not hide most of a. A vertical
/// offset seen along the viewing direction therefore goes unnoticed, exactly
/// as it would to a single observer. A subject that is out of frame or fully
/// hidden scores 0.5.
pub fn geometric_judge(
    layout: &SceneLayout,
    views: &[RenderedView],
    constraint: &SpatialConstraint,
) -> Result<Vec<JudgeVerdict>, OptimizeError> {
    let (a, a_ord) = lookup(layout, &constraint.subject)?;
    let (b, b_ord) = lookup(layout, &constraint.reference)?;
    let reference_pose = constraint
        .reference_view
        .and_then(|i| views.iter().find(|v| v.view_index == i))
        .or(views.first())
        .map(|v| v.pose)
        .unwrap_or_default();
    Ok(views
        .iter()
        .map(|view| {
            let cov = coverage(a, a_ord, b_ord, view);
            let (score, rationale) = if cov.solo == 0 {
                (UNINFORMATIVE_SCORE, format!("{} is out of view; uninformative", a.instance_id))
            } else if cov.visible == 0 {
                (UNINFORMATIVE_SCORE, format!("{} is fully occluded; uninformative", a.instance_id))
            } else if constraint.predicate == Predicate::On {
                on_view_score(a, b, &cov, view)
            } else {
                let s = spatial_score(constraint.predicate, constraint.param, a, b, &reference_pose);
                (s, format!("{} evaluated at {s:.3}", constraint.predicate))
            };
            JudgeVerdict {
                constraint: constraint.clone(),
                view_index: view.view_index,
                score,
                rationale,
            }
        })
        .collect())
}

/// A judge that asks a model through the gateway, one request per constraint.
pub struct GatewayJudge<'a> {
    gateway: &'a GatewayHandle,
}

impl<'a> GatewayJudge<'a> {
    pub fn new(gateway: &'a GatewayHandle) -> Self {
        Self { gateway }
    }
}

/// The judge request: scene, cameras and constraint as context, one preview per view.
pub fn judge_request(
    layout: &SceneLayout,
    views: &[RenderedView],
    constraint: &SpatialConstraint,
) -> Result<StructuredRequest, OptimizeError> {
    let cameras: Vec<CameraRig> = views
        .iter()
        .map(|v| CameraRig {
            intrinsics: v.intrinsics,
            pose: v.pose,
        })
        .collect();
    let context = json!({
        "scene": scene_value(layout),
        "layout_config": layout.config(),
        "cameras": cameras,
        "view_indices": views.iter().map(|v| v.view_index).collect::<Vec<_>>(),
        "constraint": constraint,
    });
    let attachments = views
        .iter()
        .map(|v| preview_png(v).map(Attachment::png))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StructuredRequest::new(
        RoleTag::Judge,
        prompts::user_prompt(
            &format!("Does `{constraint}` hold in each attached view?"),
            &constraint.to_string(),
            &context,
        ),
    )
    .with_attachments(attachments))
}

impl Judge for GatewayJudge<'_> {
    fn judge(
        &self,
        layout: &SceneLayout,
        views: &[RenderedView],
        constraint: &SpatialConstraint,
    ) -> Result<Vec<JudgeVerdict>, OptimizeError> {
        let request = judge_request(layout, views, constraint)?;
        let verdicts = self.gateway.send(&request)?.into_verdicts()?;
        let mut ordered = Vec::with_capacity(views.len());
        for v in views {
            let hit = verdicts
                .iter()
                .find(|x| x.view_index == v.view_index && x.constraint.key() == constraint.key())
                .ok_or_else(|| {
                    OptimizeError::VerdictMismatch(format!("no verdict for {constraint} in view {}", v.view_index))
                })?;
            ordered.push(hit.clone());
        }
        Ok(ordered)
    }

    fn name(&self) -> &str {
        "gateway"
    }
}
