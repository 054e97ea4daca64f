use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Action, ActionKind, ActionPlan, CameraState, PlanError, SmoothnessBudget, CAMERA_ACTOR, MIN_DOLLY_STANDOFF};
use crate::geometry::{CameraPose, Rotation, Vec3};
use crate::layout::SceneLayout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub position: Vec3,
    pub rotation: Rotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: String,
    pub position: Vec3,
    pub rotation: Rotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraFrame {
    pub eye: Vec3,
    pub target: Vec3,
    pub pose: CameraPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    pub time_s: f64,
    /// Every layout instance, in layout order.
    pub objects: Vec<ObjectState>,
    pub camera: CameraFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub frames: Vec<FrameState>,
    pub fps: u32,
    pub refinement_rounds: u32,
}

/// A budget breach between frame `frame_index − 1` and `frame_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub frame_index: usize,
    pub actor: String,
    pub rot_deg: f64,
    pub trans_m: f64,
}

/// Progress through an action at time `t`, exactly 1 from its end onwards.
fn progress(a: &Action, t: f64) -> f64 {
    if t >= a.end_s - 1e-9 {
        1.0
    } else {
        ((t - a.start_s) / (a.end_s - a.start_s)).clamp(0.0, 1.0)
    }
}

fn object_step(state: ObjectPose, kind: &ActionKind, alpha: f64) -> ObjectPose {
    match kind {
        ActionKind::MoveTo { target } => ObjectPose {
            position: state.position.lerp(*target, alpha),
            ..state
        },
        ActionKind::RotateTo { target } => ObjectPose {
            rotation: state.rotation.slerp(target, alpha),
            ..state
        },
        _ => state,
    }
}

/// Eye position on an orbit at `azimuth_deg`.
pub(crate) fn orbit_eye(center: Vec3, radius: f64, elevation_deg: f64, azimuth_deg: f64) -> Vec3 {
    let (el, az) = (elevation_deg.to_radians(), azimuth_deg.to_radians());
    center + Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * radius
}

fn camera_step(state: CameraState, kind: &ActionKind, alpha: f64) -> CameraState {
    match kind {
        ActionKind::MoveTo { target } => {
            let eye = state.eye.lerp(*target, alpha);
            CameraState {
                eye,
                target: state.target + (eye - state.eye),
            }
        }
        ActionKind::OrbitCamera {
            center,
            radius,
            elevation_deg,
            start_azimuth_deg,
            end_azimuth_deg,
        } => {
            let az = start_azimuth_deg + (end_azimuth_deg - start_azimuth_deg) * alpha;
            CameraState {
                eye: orbit_eye(*center, *radius, *elevation_deg, az),
                target: *center,
            }
        }
        ActionKind::Dolly { distance } => {
            let to_target = state.target - state.eye;
            let len = to_target.norm();
            // Never pass through the look target.
            let travel = distance.min(len - MIN_DOLLY_STANDOFF) * alpha;
            CameraState {
                eye: state.eye + to_target * (travel / len),
                ..state
            }
        }
        _ => state,
    }
}

/// The state after every action of `actions` that has started by `t`.
fn fold_actions<S: Copy>(initial: S, actions: &[&Action], t: f64, step: impl Fn(S, &ActionKind, f64) -> S) -> S {
    let mut s = initial;
    for a in actions {
        if t < a.start_s - 1e-12 {
            break;
        }
        s = step(s, &a.kind, progress(a, t));
    }
    s
}

fn actions_of<'a>(plan: &'a ActionPlan, actor: &str) -> Vec<&'a Action> {
    let mut v: Vec<&Action> = plan.actions.iter().filter(|a| a.actor == actor).collect();
    v.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    v
}

fn camera_pose(state: &CameraState) -> CameraPose {
    CameraPose::look_at(state.eye, state.target, Vec3::Z).expect("plan validation keeps the eye off the target")
}

/// Samples `plan` at `i / fps` for every frame index.
///
/// Positions interpolate linearly, rotations along the geodesic and orbits
/// on their circle. Actors hold their last state between actions. Objects
/// resting on a moving actor are not carried along.
pub fn sample_frames(plan: &ActionPlan, layout: &SceneLayout) -> FrameSequence {
    let objects: Vec<(&str, ObjectPose, Vec<&Action>)> = layout
        .instances()
        .iter()
        .map(|i| {
            let t = i.transform();
            (
                i.instance_id.as_str(),
                ObjectPose {
                    position: t.translation,
                    rotation: t.rotation,
                },
                actions_of(plan, &i.instance_id),
            )
        })
        .collect();
    let camera_actions = actions_of(plan, CAMERA_ACTOR);
    let fps = f64::from(plan.fps);
    let frames = (0..plan.frame_count())
        .map(|i| {
            let t = i as f64 / fps;
            let cam = fold_actions(plan.camera, &camera_actions, t, camera_step);
            FrameState {
                time_s: t,
                objects: objects
                    .iter()
                    .map(|(id, init, acts)| {
                        let s = fold_actions(*init, acts, t, object_step);
                        ObjectState {
                            id: (*id).to_owned(),
                            position: s.position,
                            rotation: s.rotation,
                        }
                    })
                    .collect(),
                camera: CameraFrame {
                    eye: cam.eye,
                    target: cam.target,
                    pose: camera_pose(&cam),
                },
            }
        })
        .collect();
    FrameSequence {
        frames,
        fps: plan.fps,
        refinement_rounds: 0,
    }
}

fn pair_violations(prev: &FrameState, next: &FrameState, index: usize, budget: &SmoothnessBudget) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |actor: &str, rot: f64, trans: f64| {
        if rot > budget.max_rot_deg_per_frame || trans > budget.max_trans_m_per_frame {
            out.push(Violation {
                frame_index: index,
                actor: actor.to_owned(),
                rot_deg: rot,
                trans_m: trans,
            });
        }
    };
    for (a, b) in prev.objects.iter().zip(&next.objects) {
        check(&a.id, a.rotation.angle_to(&b.rotation).to_degrees(), a.position.distance(b.position));
    }
    check(
        CAMERA_ACTOR,
        prev.camera.pose.rotation.angle_to(&next.camera.pose.rotation).to_degrees(),
        prev.camera.eye.distance(next.camera.eye),
    );
    out
}

/// Every consecutive frame pair whose rotation or translation step exceeds
/// the budget, ordered by frame, objects before the camera.
pub fn check_temporal(seq: &FrameSequence, budget: &SmoothnessBudget) -> Result<Vec<Violation>, PlanError> {
    budget.validate()?;
    if seq.frames.len() < 2 {
        return Err(PlanError::TooFewFrames(seq.frames.len()));
    }
    let per_pair: Vec<Vec<Violation>> = (1..seq.frames.len())
        .into_par_iter()
        .map(|i| pair_violations(&seq.frames[i - 1], &seq.frames[i], i, budget))
        .collect();
    Ok(per_pair.into_iter().flatten().collect())
}

/// A copy of `layout` with every object posed as in `frame`.
pub fn pose_layout(layout: &SceneLayout, frame: &FrameState) -> Result<SceneLayout, PlanError> {
    let mut posed = layout.clone();
    for o in &frame.objects {
        let current = posed
            .instance(&o.id)
            .ok_or_else(|| PlanError::UnknownActor(o.id.clone()))?
            .transform();
        if current.translation != o.position || current.rotation != o.rotation {
            posed.set_pose(&o.id, o.position, o.rotation)?;
        }
    }
    Ok(posed)
}
