//! Verb grammar for motion instructions.
//!
//! Clauses are split on `then`, `and` and punctuation and run one after
//! another on a single timeline. Each clause names an actor (the camera or a
//! scene object; otherwise the previous actor) and a verb with optional
//! direction, angle, distance and duration:
//!
//! | verbs | default |
//! |---|---|
//! | turn, rotate, spin | 90° left/right in 1 s, `around` 180° in 2 s |
//! | move, fly, go, drive, slide, roll, walk | 2 m forward at 1 m/s |
//! | rise, ascend / descend, sink | 1 m up / down at 1 m/s |
//! | hold, wait, pause, stay | 1 s |
//! | orbit, circle | 360° around the look target in 4 s |
//! | dolly, zoom, push, pull | 1 m in / out in 2 s |
//!
//! A camera `turn` becomes an orbit. When the context carries violations the
//! reply is the offline stretch revision of the context plan instead.

use std::collections::BTreeMap;

use serde_json::Value;

use super::collector::singular;
use super::{field, scene_from};
use crate::geometry::{Rotation, Vec3};
use crate::layout::SceneLayout;
use crate::planner::{
    offline_revision, orbit_eye, Action, ActionKind, ActionPlan, CameraState, SmoothnessBudget, Violation,
    CAMERA_ACTOR, DEFAULT_FPS, MAX_FRAMES, MIN_DOLLY_STANDOFF,
};

/// Turns larger than this are split into several actions so the geodesic
/// interpolation keeps the requested direction.
const MAX_TURN_CHUNK_DEG: f64 = 90.0;

pub fn reply(instruction: &str, context: &Value) -> Result<ActionPlan, String> {
    let layout = scene_from(context)?;
    if context.get("violations").is_some() {
        let plan: ActionPlan = field(context, "plan")?;
        let violations: Vec<Violation> = field(context, "violations")?;
        let budget: SmoothnessBudget = field(context, "budget")?;
        return Ok(offline_revision(&plan, &layout, &violations, &budget));
    }
    let camera: CameraState = field(context, "camera")?;
    let fps = context.get("fps").and_then(Value::as_u64).map_or(DEFAULT_FPS, |f| f as u32);
    plan(instruction, &layout, camera, fps)
}

#[derive(Debug, Clone, Copy)]
enum Pose {
    Object { position: Vec3, rotation: Rotation },
    Camera(CameraState),
}

struct Timeline<'a> {
    layout: &'a SceneLayout,
    poses: BTreeMap<String, Pose>,
    actions: Vec<Action>,
    now: f64,
}

fn number(word: &str) -> Option<f64> {
    const WORDS: &[&str] = &["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    match word {
        "half" => Some(0.5),
        "a" | "an" => Some(1.0),
        _ => WORDS.iter().position(|w| *w == word).map(|n| n as f64).or_else(|| word.parse().ok()),
    }
}

/// The number written before any of `units`, e.g. `3 seconds`.
fn quantity(words: &[&str], units: &[&str]) -> Option<f64> {
    words
        .windows(2)
        .find(|w| units.contains(&w[1]))
        .and_then(|w| number(w[0]))
        .filter(|v| v.is_finite())
}

fn has(words: &[&str], any: &[&str]) -> bool {
    words.iter().any(|w| any.contains(w))
}

const SECONDS: &[&str] = &["s", "sec", "secs", "second", "seconds"];
const DEGREES: &[&str] = &["deg", "degree", "degrees"];
const METERS: &[&str] = &["m", "meter", "meters", "metre", "metres"];

fn horizontal(v: Vec3) -> Vec3 {
    Vec3::new(v.x, v.y, 0.0).normalized().unwrap_or(Vec3::X)
}

impl Timeline<'_> {
    fn actor_in(&self, words: &[&str]) -> Option<String> {
        if has(words, &["camera", "view", "shot"]) {
            return Some(CAMERA_ACTOR.into());
        }
        for w in words {
            let noun = singular(w);
            let found = self.layout.instances().iter().find(|i| {
                let id = i.instance_id.as_str();
                let base = id.rsplit_once('_').filter(|(_, n)| n.parse::<u32>().is_ok()).map_or(id, |(b, _)| b);
                id == *w || base == noun || i.asset_id.split('_').any(|t| t == noun)
            });
            if let Some(i) = found {
                return Some(i.instance_id.clone());
            }
        }
        None
    }

    fn push(&mut self, actor: &str, seconds: f64, kind: ActionKind, after: Pose) {
        let start = self.now;
        self.now += seconds;
        self.actions.push(Action::new(actor, start, self.now, kind));
        self.poses.insert(actor.to_string(), after);
    }

    fn turn(&mut self, actor: &str, degrees: f64, seconds: f64) {
        let chunks = (degrees.abs() / MAX_TURN_CHUNK_DEG).ceil().max(1.0);
        let (step, dt) = (degrees / chunks, seconds / chunks);
        for _ in 0..chunks as usize {
            match self.poses[actor] {
                Pose::Object { position, rotation } => {
                    let target = Rotation::from_yaw_deg(step) * rotation;
                    self.push(actor, dt, ActionKind::RotateTo { target }, Pose::Object { position, rotation: target });
                }
                Pose::Camera(_) => self.orbit(step, dt),
            }
        }
    }

    fn orbit(&mut self, degrees: f64, seconds: f64) {
        let Pose::Camera(cam) = self.poses[CAMERA_ACTOR] else {
            return;
        };
        let offset = cam.eye - cam.target;
        let radius = offset.norm().max(MIN_DOLLY_STANDOFF);
        let flat = (offset.x * offset.x + offset.y * offset.y).sqrt();
        let elevation_deg = offset.z.atan2(flat).to_degrees().clamp(-89.0, 89.0);
        let start_azimuth_deg = offset.y.atan2(offset.x).to_degrees();
        let end_azimuth_deg = start_azimuth_deg + degrees;
        let after = CameraState {
            eye: orbit_eye(cam.target, radius, elevation_deg, end_azimuth_deg),
            target: cam.target,
        };
        let kind = ActionKind::OrbitCamera {
            center: cam.target,
            radius,
            elevation_deg,
            start_azimuth_deg,
            end_azimuth_deg,
        };
        self.push(CAMERA_ACTOR, seconds, kind, Pose::Camera(after));
    }

    fn translate(&mut self, actor: &str, words: &[&str], default_m: f64) {
        let (forward, position) = match self.poses[actor] {
            Pose::Object { position, rotation } => (horizontal(rotation.rotate(Vec3::X)), position),
            Pose::Camera(c) => (horizontal(c.target - c.eye), c.eye),
        };
        let left = Vec3::Z.cross(forward);
        let up_words = ["up", "upward", "upwards", "rise", "rises", "ascend", "ascends", "lift", "lifts"];
        let down_words = ["down", "downward", "downwards", "descend", "descends", "sink", "sinks", "lower", "lowers"];
        let (dir, default_m) = if has(words, &up_words) {
            (Vec3::Z, 1.0)
        } else if has(words, &down_words) {
            (-Vec3::Z, 1.0)
        } else if has(words, &["backward", "backwards", "back", "reverse"]) {
            (-forward, default_m)
        } else if has(words, &["left"]) {
            (left, default_m)
        } else if has(words, &["right"]) {
            (-left, default_m)
        } else {
            (forward, default_m)
        };
        let meters = quantity(words, METERS).unwrap_or(default_m);
        let seconds = quantity(words, SECONDS).unwrap_or(meters.abs().max(0.5));
        let target = position + dir * meters;
        let after = match self.poses[actor] {
            Pose::Object { rotation, .. } => Pose::Object {
                position: target,
                rotation,
            },
            Pose::Camera(c) => Pose::Camera(CameraState {
                eye: target,
                target: c.target + (target - c.eye),
            }),
        };
        self.push(actor, seconds, ActionKind::MoveTo { target }, after);
    }

    fn dolly(&mut self, words: &[&str]) {
        let Pose::Camera(cam) = self.poses[CAMERA_ACTOR] else {
            return;
        };
        let sign = if has(words, &["out", "away", "pull", "pulls", "back"]) { -1.0 } else { 1.0 };
        let distance = sign * quantity(words, METERS).unwrap_or(1.0);
        let seconds = quantity(words, SECONDS).unwrap_or(2.0);
        let to_target = cam.target - cam.eye;
        let len = to_target.norm();
        let travel = distance.min(len - MIN_DOLLY_STANDOFF);
        let after = CameraState {
            eye: cam.eye + to_target * (travel / len),
            target: cam.target,
        };
        self.push(CAMERA_ACTOR, seconds, ActionKind::Dolly { distance }, Pose::Camera(after));
    }

    fn clause(&mut self, words: &[&str], actor: &str) {
        let seconds = quantity(words, SECONDS);
        let is_camera = actor == CAMERA_ACTOR;
        if has(words, &["orbit", "orbits", "circle", "circles"]) {
            let sign = if has(words, &["clockwise"]) && !has(words, &["counterclockwise", "anticlockwise"]) { -1.0 } else { 1.0 };
            let degrees = quantity(words, DEGREES).unwrap_or(360.0);
            let seconds = seconds.unwrap_or(4.0 * degrees.abs() / 360.0);
            let chunks = (degrees.abs() / 360.0).ceil().max(1.0);
            for _ in 0..chunks as usize {
                self.orbit(sign * degrees / chunks, seconds / chunks);
            }
        } else if has(words, &["turn", "turns", "rotate", "rotates", "spin", "spins", "yaw", "yaws", "pan", "pans"]) {
            let around = has(words, &["around", "round"]);
            let magnitude = quantity(words, DEGREES).unwrap_or(if around { 180.0 } else { 90.0 });
            let degrees = if has(words, &["right", "clockwise"]) { -magnitude } else { magnitude };
            let seconds = seconds.unwrap_or(magnitude / 90.0);
            self.turn(actor, degrees, seconds);
        } else if is_camera && has(words, &["dolly", "dollies", "zoom", "zooms", "push", "pushes", "pull", "pulls"]) {
            self.dolly(words);
        } else if has(words, &["hold", "holds", "wait", "waits", "pause", "pauses", "stay", "stays", "still"]) {
            let seconds = seconds.unwrap_or(1.0);
            let pose = self.poses[actor];
            self.push(actor, seconds, ActionKind::Hold, pose);
        } else if has(
            words,
            &[
                "move", "moves", "fly", "flies", "go", "goes", "drive", "drives", "slide", "slides", "roll", "rolls", "walk",
                "walks", "travel", "travels", "advance", "advances", "rise", "rises", "ascend", "ascends", "descend",
                "descends", "sink", "sinks", "lift", "lifts", "lower", "lowers",
            ],
        ) {
            self.translate(actor, words, 2.0);
        }
    }
}

/// Builds a plan from `instruction` starting at `camera`.
pub fn plan(instruction: &str, layout: &SceneLayout, camera: CameraState, fps: u32) -> Result<ActionPlan, String> {
    let mut poses: BTreeMap<String, Pose> = layout
        .instances()
        .iter()
        .map(|i| {
            let t = i.transform();
            (
                i.instance_id.clone(),
                Pose::Object {
                    position: t.translation,
                    rotation: t.rotation,
                },
            )
        })
        .collect();
    poses.insert(CAMERA_ACTOR.into(), Pose::Camera(camera));
    let mut timeline = Timeline {
        layout,
        poses,
        actions: Vec::new(),
        now: 0.0,
    };
    let text = instruction.to_lowercase().replace([',', ';', '.', '!', '?'], " | ");
    let mut actor = CAMERA_ACTOR.to_string();
    let mut clause: Vec<&str> = Vec::new();
    let words: Vec<&str> = text.split_whitespace().map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '_' && c != '-')).collect();
    for w in words.iter().copied().chain(["|"]) {
        if w == "|" || w == "then" || w == "and" {
            if !clause.is_empty() {
                if let Some(a) = timeline.actor_in(&clause) {
                    actor = a;
                }
                timeline.clause(&clause, &actor);
                clause.clear();
            }
        } else if !w.is_empty() {
            clause.push(w);
        }
    }
    if timeline.actions.is_empty() {
        return Err("no motion was recognised in the instruction".into());
    }
    // Compress the timeline when it exceeds the frame cap.
    let max_s = MAX_FRAMES as f64 / f64::from(fps.max(1));
    let scale = if timeline.now > max_s { max_s / timeline.now } else { 1.0 };
    let mut actions = timeline.actions;
    for a in &mut actions {
        a.start_s *= scale;
        a.end_s *= scale;
    }
    Ok(ActionPlan {
        duration_s: timeline.now * scale,
        actions,
        fps,
        camera,
    })
}
