//! Timed action plans: creation from instructions, frame sampling, temporal
//! smoothness checks and the refinement loop.

mod frames;
mod refine;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use frames::{
    check_temporal, pose_layout, sample_frames, CameraFrame, FrameSequence, FrameState, ObjectPose, ObjectState, Violation,
};
pub(crate) use frames::orbit_eye;
pub use refine::{
    offline_revision, refine_plan, refine_request, stretch_plan, GatewayRefiner, OfflineRefiner, PlanRefiner,
    RefineOutcome, STRETCH_TARGET,
};

use crate::export::scene_value;
use crate::gateway::{prompts, GatewayError, GatewayHandle, RoleTag, StructuredRequest};
use crate::geometry::{Rotation, Vec3};
use crate::layout::{LayoutError, SceneLayout};
use crate::optimize::{scene_sphere, RING_ELEVATION_DEG, RING_RADIUS_FACTOR};
use crate::render::RenderError;

/// Actor name of the camera.
pub const CAMERA_ACTOR: &str = "camera";
pub const DEFAULT_FPS: u32 = 24;
/// Longest frame sequence a plan may produce.
pub const MAX_FRAMES: usize = 240;
/// Closest a dolly may bring the eye to the look target.
pub const MIN_DOLLY_STANDOFF: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("unknown actor `{0}`")]
    UnknownActor(String),
    #[error("temporal check needs at least two frames, got {0}")]
    TooFewFrames(usize),
    #[error("invalid smoothness budget: {0}")]
    InvalidBudget(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Largest per-frame change an actor may show between consecutive frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothnessBudget {
    pub max_rot_deg_per_frame: f64,
    pub max_trans_m_per_frame: f64,
}

impl Default for SmoothnessBudget {
    fn default() -> Self {
        Self {
            max_rot_deg_per_frame: 15.0,
            max_trans_m_per_frame: 0.15,
        }
    }
}

impl SmoothnessBudget {
    pub fn validate(&self) -> Result<(), PlanError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.max_rot_deg_per_frame) && ok(self.max_trans_m_per_frame) {
            Ok(())
        } else {
            Err(PlanError::InvalidBudget(format!("{self:?}")))
        }
    }
}

/// Where the camera stands and what it looks at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraState {
    pub eye: Vec3,
    pub target: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionKind {
    /// Objects: move the position. Camera: move the eye, carrying the look target along.
    MoveTo { target: Vec3 },
    /// Objects only.
    RotateTo { target: Rotation },
    /// Camera only; azimuth 0 is +x, elevation above the horizon.
    OrbitCamera {
        center: Vec3,
        radius: f64,
        elevation_deg: f64,
        start_azimuth_deg: f64,
        end_azimuth_deg: f64,
    },
    /// Camera only; positive distance moves towards the look target.
    Dolly { distance: f64 },
    Hold,
}

impl ActionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActionKind::MoveTo { .. } => "move_to",
            ActionKind::RotateTo { .. } => "rotate_to",
            ActionKind::OrbitCamera { .. } => "orbit_camera",
            ActionKind::Dolly { .. } => "dolly",
            ActionKind::Hold => "hold",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub actor: String,
    pub start_s: f64,
    pub end_s: f64,
    pub kind: ActionKind,
}

impl Action {
    pub fn new(actor: impl Into<String>, start_s: f64, end_s: f64, kind: ActionKind) -> Self {
        Self {
            actor: actor.into(),
            start_s,
            end_s,
            kind,
        }
    }

    pub fn is_camera(&self) -> bool {
        self.actor == CAMERA_ACTOR
    }

    fn validate(&self) -> Result<(), String> {
        let finite = |v: Vec3| v.is_finite();
        if !(self.start_s.is_finite() && self.end_s.is_finite() && self.start_s >= 0.0) {
            return Err(format!("{} of {}: times must be finite and non-negative", self.kind.name(), self.actor));
        }
        if self.end_s <= self.start_s {
            return Err(format!("{} of {}: end_s must exceed start_s", self.kind.name(), self.actor));
        }
        if self.actor.is_empty() {
            return Err("action without actor".into());
        }
        match &self.kind {
            ActionKind::MoveTo { target } if !finite(*target) => Err("move_to target must be finite".into()),
            ActionKind::RotateTo { .. } if self.is_camera() => Err("rotate_to cannot drive the camera".into()),
            ActionKind::OrbitCamera { .. } | ActionKind::Dolly { .. } if !self.is_camera() => {
                Err(format!("{} can only drive the camera", self.kind.name()))
            }
            ActionKind::OrbitCamera {
                center,
                radius,
                elevation_deg,
                start_azimuth_deg,
                end_azimuth_deg,
            } => {
                if !(finite(*center) && elevation_deg.is_finite() && start_azimuth_deg.is_finite() && end_azimuth_deg.is_finite())
                {
                    Err("orbit parameters must be finite".into())
                } else if !(radius.is_finite() && *radius > 0.0) {
                    Err("orbit radius must be > 0".into())
                } else if elevation_deg.abs() >= 90.0 {
                    Err("orbit elevation must be within (-90, 90) degrees".into())
                } else {
                    Ok(())
                }
            }
            ActionKind::Dolly { distance } if !distance.is_finite() => Err("dolly distance must be finite".into()),
            _ => Ok(()),
        }
    }
}

/// An executable plan: timed actions plus the camera's starting state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionPlan {
    pub actions: Vec<Action>,
    pub duration_s: f64,
    #[serde(default = "default_fps")]
    pub fps: u32,
    pub camera: CameraState,
}

fn default_fps() -> u32 {
    DEFAULT_FPS
}

impl ActionPlan {
    /// Frames sampled at `i / fps` for `i` below `round(duration · fps)`.
    pub fn frame_count(&self) -> usize {
        (self.duration_s * f64::from(self.fps)).round().max(0.0) as usize
    }

    /// Checks the schema-level invariants; actor names are checked against a
    /// layout by [`ActionPlan::check_actors`].
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: String| Err(PlanError::InvalidPlan(m));
        if self.fps == 0 {
            return bad("fps must be at least 1".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad("duration_s must be > 0".into());
        }
        if !(self.camera.eye.is_finite() && self.camera.target.is_finite()) {
            return bad("camera state must be finite".into());
        }
        if self.camera.eye.distance(self.camera.target) < MIN_DOLLY_STANDOFF {
            return bad("camera eye and target coincide".into());
        }
        if self.frame_count() > MAX_FRAMES {
            return bad(format!("{} frames exceed the {MAX_FRAMES}-frame cap", self.frame_count()));
        }
        let mut last_end: std::collections::BTreeMap<&str, f64> = Default::default();
        for a in &self.actions {
            a.validate().map_err(PlanError::InvalidPlan)?;
            if a.end_s > self.duration_s + 1e-9 {
                return bad(format!("{} of {} ends after the plan", a.kind.name(), a.actor));
            }
            if let Some(prev) = last_end.insert(a.actor.as_str(), a.end_s) {
                if a.start_s < prev - 1e-9 {
                    return bad(format!("actions of {} overlap or are out of order", a.actor));
                }
            }
        }
        Ok(())
    }

    /// Every actor must be the camera or a layout instance.
    pub fn check_actors(&self, layout: &SceneLayout) -> Result<(), PlanError> {
        match self.actions.iter().find(|a| !a.is_camera() && layout.instance(&a.actor).is_none()) {
            Some(a) => Err(PlanError::UnknownActor(a.actor.clone())),
            None => Ok(()),
        }
    }
}

/// The starting camera: where the first ring camera stands, looking at the scene center.
pub fn default_camera(layout: &SceneLayout) -> CameraState {
    let (center, diag) = scene_sphere(layout);
    let el = RING_ELEVATION_DEG.to_radians();
    CameraState {
        eye: center + Vec3::new(el.cos(), 0.0, el.sin()) * (RING_RADIUS_FACTOR * diag),
        target: center,
    }
}

/// The planner request: scene, starting camera and frame rate as context.
pub fn plan_request(instruction: &str, layout: &SceneLayout, camera: &CameraState, fps: u32) -> StructuredRequest {
    let context = json!({
        "scene": scene_value(layout),
        "layout_config": layout.config(),
        "camera": camera,
        "fps": fps,
    });
    StructuredRequest::new(
        RoleTag::Planner,
        prompts::user_prompt("Write an executable plan for this instruction.", instruction, &context),
    )
}

/// Asks the planner role for a plan and checks it against the layout.
pub fn plan_from_instruction(
    instruction: &str,
    layout: &SceneLayout,
    gateway: &GatewayHandle,
    fps: u32,
) -> Result<ActionPlan, PlanError> {
    if instruction.trim().is_empty() {
        return Err(PlanError::EmptyInstruction);
    }
    let request = plan_request(instruction, layout, &default_camera(layout), fps);
    let plan = gateway.send(&request)?.into_plan()?;
    plan.check_actors(layout)?;
    Ok(plan)
}
