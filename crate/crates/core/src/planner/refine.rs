//! The refinement loop: sample, check, revise, repeat.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::frames::orbit_eye;
use super::{
    check_temporal, pose_layout, sample_frames, ActionKind, ActionPlan, CameraState, FrameSequence, PlanError,
    SmoothnessBudget, Violation, CAMERA_ACTOR, MIN_DOLLY_STANDOFF,
};
use crate::export::scene_value;
use crate::gateway::{prompts, Attachment, GatewayHandle, RoleTag, StructuredRequest};
use crate::geometry::CameraIntrinsics;
use crate::layout::SceneLayout;
use crate::render::{preview_png, render_view};

/// Offline revisions stretch actions until their per-frame change is this
/// fraction of the budget.
pub const STRETCH_TARGET: f64 = 0.8;

/// Revises a plan given the violations found in its frames.
pub trait PlanRefiner: Sync {
    fn revise(
        &self,
        plan: &ActionPlan,
        layout: &SceneLayout,
        seq: &FrameSequence,
        violations: &[Violation],
        budget: &SmoothnessBudget,
    ) -> Result<ActionPlan, PlanError>;

    fn name(&self) -> &str;
}

/// Deterministic duration stretching; see [`offline_revision`].
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineRefiner;

impl PlanRefiner for OfflineRefiner {
    fn revise(
        &self,
        plan: &ActionPlan,
        layout: &SceneLayout,
        _seq: &FrameSequence,
        violations: &[Violation],
        budget: &SmoothnessBudget,
    ) -> Result<ActionPlan, PlanError> {
        Ok(offline_revision(plan, layout, violations, budget))
    }

    fn name(&self) -> &str {
        "offline"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    /// The plan behind `sequence`.
    pub plan: ActionPlan,
    pub sequence: FrameSequence,
    pub rounds_used: u32,
    pub converged: bool,
    pub violations_before: usize,
    pub violations_after: usize,
    /// Violation count of every sampled plan, the input first.
    pub history: Vec<usize>,
    pub errors: Vec<String>,
}

/// Total (rotation in degrees, translation in meters) action `index` sweeps.
fn action_sweep(plan: &ActionPlan, layout: &SceneLayout, index: usize) -> (f64, f64) {
    let a = &plan.actions[index];
    // State at the action's start: every earlier action of the actor completed.
    let mut earlier: Vec<_> = plan
        .actions
        .iter()
        .filter(|b| b.actor == a.actor && b.start_s < a.start_s)
        .collect();
    earlier.sort_by(|x, y| x.start_s.total_cmp(&y.start_s));
    if a.actor == CAMERA_ACTOR {
        let mut cam = plan.camera;
        for b in earlier {
            cam = complete_camera(cam, &b.kind);
        }
        match &a.kind {
            ActionKind::MoveTo { target } => (0.0, cam.eye.distance(*target)),
            ActionKind::OrbitCamera {
                radius,
                elevation_deg,
                start_azimuth_deg,
                end_azimuth_deg,
                ..
            } => {
                let sweep = (end_azimuth_deg - start_azimuth_deg).abs();
                (sweep, radius * elevation_deg.to_radians().cos() * sweep.to_radians())
            }
            ActionKind::Dolly { distance } => {
                let len = cam.eye.distance(cam.target);
                (0.0, distance.min(len - MIN_DOLLY_STANDOFF).abs())
            }
            _ => (0.0, 0.0),
        }
    } else {
        let Some(inst) = layout.instance(&a.actor) else {
            return (0.0, 0.0);
        };
        let (mut pos, mut rot) = (inst.transform().translation, inst.transform().rotation);
        for b in earlier {
            match &b.kind {
                ActionKind::MoveTo { target } => pos = *target,
                ActionKind::RotateTo { target } => rot = *target,
                _ => {}
            }
        }
        match &a.kind {
            ActionKind::MoveTo { target } => (0.0, pos.distance(*target)),
            ActionKind::RotateTo { target } => (rot.angle_to(target).to_degrees(), 0.0),
            _ => (0.0, 0.0),
        }
    }
}

fn complete_camera(cam: CameraState, kind: &ActionKind) -> CameraState {
    match kind {
        ActionKind::MoveTo { target } => CameraState {
            eye: *target,
            target: cam.target + (*target - cam.eye),
        },
        ActionKind::OrbitCamera {
            center,
            radius,
            elevation_deg,
            end_azimuth_deg,
            ..
        } => CameraState {
            eye: orbit_eye(*center, *radius, *elevation_deg, *end_azimuth_deg),
            target: *center,
        },
        ActionKind::Dolly { distance } => {
            let d = cam.target - cam.eye;
            let len = d.norm();
            CameraState {
                eye: cam.eye + d * (distance.min(len - MIN_DOLLY_STANDOFF) / len),
                ..cam
            }
        }
        _ => cam,
    }
}

/// Gives action `index` of `plan` the new length for each `(index, length)`
/// and shifts everything that started after a stretched action ended.
pub fn stretch_plan(plan: &ActionPlan, stretches: &[(usize, f64)]) -> ActionPlan {
    // (old end, extra seconds) per stretched action.
    let mut shifts: Vec<(f64, f64)> = stretches
        .iter()
        .map(|&(i, len)| {
            let a = &plan.actions[i];
            (a.end_s, (len - (a.end_s - a.start_s)).max(0.0))
        })
        .collect();
    shifts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let map = |t: f64| t + shifts.iter().filter(|(end, _)| *end <= t + 1e-9).map(|(_, d)| d).sum::<f64>();
    let mut out = plan.clone();
    for (i, a) in out.actions.iter_mut().enumerate() {
        let start = map(a.start_s);
        a.end_s = match stretches.iter().find(|(j, _)| *j == i) {
            Some(&(_, len)) => start + len.max(a.end_s - a.start_s),
            None => map(a.end_s),
        };
        a.start_s = start;
    }
    out.duration_s = map(plan.duration_s);
    out
}

/// Stretches every action involved in a violation so that its per-frame
/// change is [`STRETCH_TARGET`] of the budget, shifting later actions and
/// extending the plan to match.
///
/// An action is involved when its actor breached the budget in a frame
/// interval the action overlaps. Violations no action explains, such as a
/// jump at an action boundary, are left for the caller to notice.
pub fn offline_revision(plan: &ActionPlan, layout: &SceneLayout, violations: &[Violation], budget: &SmoothnessBudget) -> ActionPlan {
    let fps = f64::from(plan.fps);
    let mut stretches: Vec<(usize, f64)> = Vec::new();
    for (i, a) in plan.actions.iter().enumerate() {
        let involved = violations.iter().any(|v| {
            let (t0, t1) = ((v.frame_index as f64 - 1.0) / fps, v.frame_index as f64 / fps);
            v.actor == a.actor && a.start_s < t1 + 1e-9 && a.end_s > t0 - 1e-9
        });
        if !involved {
            continue;
        }
        let (rot, trans) = action_sweep(plan, layout, i);
        let frames = (rot / (STRETCH_TARGET * budget.max_rot_deg_per_frame))
            .max(trans / (STRETCH_TARGET * budget.max_trans_m_per_frame))
            .ceil();
        let len = frames / fps;
        if len > a.end_s - a.start_s + 1e-12 {
            stretches.push((i, len));
        }
    }
    stretch_plan(plan, &stretches)
}

/// Samples, checks and revises until the frames are clean or `max_rounds`
/// revisions have been tried.
///
/// Returns the first clean sequence, otherwise the one with the fewest
/// violations. Revisions that fail, do not validate or change nothing end
/// the loop and are recorded in `errors`; non-convergence is reported in
/// the outcome, not as an error.
pub fn refine_plan(
    plan: &ActionPlan,
    layout: &SceneLayout,
    budget: &SmoothnessBudget,
    refiner: &dyn PlanRefiner,
    max_rounds: u32,
) -> Result<RefineOutcome, PlanError> {
    if max_rounds < 1 {
        return Err(PlanError::InvalidPlan("max_rounds must be >= 1".into()));
    }
    plan.validate()?;
    plan.check_actors(layout)?;
    let mut current = plan.clone();
    let mut seq = sample_frames(&current, layout);
    let mut violations = check_temporal(&seq, budget)?;
    let violations_before = violations.len();
    let mut history = vec![violations.len()];
    let mut best = (current.clone(), seq.clone(), violations.len());
    let mut errors = Vec::new();
    let mut rounds = 0;

    while !violations.is_empty() && rounds < max_rounds {
        rounds += 1;
        let revised = match refiner.revise(&current, layout, &seq, &violations, budget) {
            Ok(p) => p,
            Err(e) => {
                errors.push(format!("round {rounds}: revision failed: {e}"));
                break;
            }
        };
        if let Err(e) = revised.validate().and_then(|_| revised.check_actors(layout)) {
            errors.push(format!("round {rounds}: revised plan rejected: {e}"));
            break;
        }
        if revised == current {
            errors.push(format!("round {rounds}: revision changed nothing"));
            break;
        }
        current = revised;
        seq = sample_frames(&current, layout);
        violations = check_temporal(&seq, budget)?;
        history.push(violations.len());
        if violations.len() < best.2 {
            best = (current.clone(), seq.clone(), violations.len());
        }
    }

    let (plan, mut sequence, after) = best;
    sequence.refinement_rounds = rounds;
    Ok(RefineOutcome {
        plan,
        sequence,
        rounds_used: rounds,
        converged: after == 0,
        violations_before,
        violations_after: after,
        history,
        errors,
    })
}

/// The refinement request: current plan, violations and budget as context,
/// with the two frames around the first violation attached when
/// `thumbnail` intrinsics are given.
pub fn refine_request(
    plan: &ActionPlan,
    layout: &SceneLayout,
    seq: &FrameSequence,
    violations: &[Violation],
    budget: &SmoothnessBudget,
    thumbnail: Option<&CameraIntrinsics>,
) -> Result<StructuredRequest, PlanError> {
    let context = json!({
        "scene": scene_value(layout),
        "layout_config": layout.config(),
        "plan": plan,
        "violations": violations,
        "budget": budget,
    });
    let mut attachments = Vec::new();
    if let (Some(k), Some(v)) = (thumbnail, violations.first()) {
        for i in [v.frame_index - 1, v.frame_index] {
            let frame = &seq.frames[i];
            let posed = pose_layout(layout, frame)?;
            let view = render_view(&posed, k, &frame.camera.pose, i as u32);
            attachments.push(Attachment::png(preview_png(&view)?));
        }
    }
    let lead = format!(
        "The frames of this plan break the smoothness budget in {} places. Revise the plan by stretching \
         actions or inserting intermediate steps.",
        violations.len()
    );
    Ok(StructuredRequest::new(RoleTag::Planner, prompts::user_prompt(&lead, "refine", &context)).with_attachments(attachments))
}

/// A refiner that forwards violations to the planner role.
pub struct GatewayRefiner<'a> {
    gateway: &'a GatewayHandle,
    thumbnail: Option<CameraIntrinsics>,
}

impl<'a> GatewayRefiner<'a> {
    pub fn new(gateway: &'a GatewayHandle, thumbnail: Option<CameraIntrinsics>) -> Self {
        Self { gateway, thumbnail }
    }
}

impl PlanRefiner for GatewayRefiner<'_> {
    fn revise(
        &self,
        plan: &ActionPlan,
        layout: &SceneLayout,
        seq: &FrameSequence,
        violations: &[Violation],
        budget: &SmoothnessBudget,
    ) -> Result<ActionPlan, PlanError> {
        let request = refine_request(plan, layout, seq, violations, budget, self.thumbnail.as_ref())?;
        Ok(self.gateway.send(&request)?.into_plan()?)
    }

    fn name(&self) -> &str {
        "gateway"
    }
}
