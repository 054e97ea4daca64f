//! Where to move the subject of a violated constraint.

use serde_json::json;

use super::{holds_between, CameraRig, OptimizeError};
use crate::assets::{Predicate, SpatialConstraint};
use crate::export::scene_value;
use crate::gateway::{prompts, GatewayHandle, RoleTag, StructuredRequest};
use crate::geometry::{CameraPose, Vec3};
use crate::layout::{find_free_region_where, SceneLayout, SupportSpec};

/// Vertical mismatch below which a support contact counts as made.
const SNAP_EPS: f64 = 1e-9;

/// Proposes a new bottom-center position for a constraint's subject.
pub trait Locator: Sync {
    fn propose(&self, layout: &SceneLayout, constraint: &SpatialConstraint, rigs: &[CameraRig])
        -> Result<Vec3, OptimizeError>;

    fn name(&self) -> &str;
}

/// The deterministic policy of [`propose_relocation`].
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineLocator;

impl Locator for OfflineLocator {
    fn propose(&self, layout: &SceneLayout, constraint: &SpatialConstraint, rigs: &[CameraRig]) -> Result<Vec3, OptimizeError> {
        propose_relocation(layout, constraint, rigs)
    }

    fn name(&self) -> &str {
        "offline"
    }
}

fn reference_pose(constraint: &SpatialConstraint, rigs: &[CameraRig]) -> CameraPose {
    let i = constraint.reference_view.unwrap_or(0) as usize;
    rigs.get(i).or(rigs.first()).map(|r| r.pose).unwrap_or_default()
}

/// Translation-only relocation of `constraint.subject`.
///
/// For `on` and `inside` a vertical snap onto the reference comes first;
/// only once the heights agree does the subject move sideways, to the first
/// free spot on the reference's footprint. Other predicates search the
/// subject's own level for the first free spot where the predicate holds,
/// keeping the height.
pub fn propose_relocation(layout: &SceneLayout, constraint: &SpatialConstraint, rigs: &[CameraRig]) -> Result<Vec3, OptimizeError> {
    let unknown = |id: &str| OptimizeError::UnknownInstance(id.to_owned());
    let a = layout.instance(&constraint.subject).ok_or_else(|| unknown(&constraint.subject))?;
    let b = layout.instance(&constraint.reference).ok_or_else(|| unknown(&constraint.reference))?;
    let pos = a.position();
    // Offset from the box bottom to the transform origin; preserved by every move.
    let lift = pos.z - a.bottom_z();
    let pose = reference_pose(constraint, rigs);
    let clearance = layout.config().clearance;

    if constraint.predicate.is_support() {
        let height = if constraint.predicate == Predicate::Inside {
            b.bottom_z()
        } else {
            b.support_height()
        };
        if (a.bottom_z() - height).abs() > SNAP_EPS {
            return Ok(Vec3::new(pos.x, pos.y, height + lift));
        }
        let grid = layout.support_grid(&b.instance_id, Some(&a.instance_id))?;
        let mut probe = a.clone();
        let xy = find_free_region_where(&grid, &a.relative_footprint(), clearance, |[x, y]| {
            let mut t = *a.transform();
            t.translation = Vec3::new(x, y, height + lift);
            probe.set_transform(t);
            holds_between(constraint, &probe, b, &pose)
        })?;
        return Ok(Vec3::new(xy[0], xy[1], height + lift));
    }

    let grid = match layout.support_of(&a.instance_id) {
        Some(s) => layout.support_grid(&s.support_id, Some(&a.instance_id))?,
        None => layout.ground_grid(Some(&a.instance_id)),
    };
    let mut probe = a.clone();
    let xy = find_free_region_where(&grid, &a.relative_footprint(), clearance, |[x, y]| {
        let mut t = *a.transform();
        t.translation = Vec3::new(x, y, pos.z);
        probe.set_transform(t);
        holds_between(constraint, &probe, b, &pose)
    })?;
    Ok(Vec3::new(xy[0], xy[1], pos.z))
}

/// Moves the subject, first registering the reference as its support when
/// the constraint is a support predicate.
pub fn apply_relocation(layout: &mut SceneLayout, constraint: &SpatialConstraint, position: Vec3) -> Result<(), OptimizeError> {
    if let Some(spec) = SupportSpec::from_constraint(constraint) {
        let current = layout.support_of(&constraint.subject);
        if current.is_none_or(|s| s.support_id != spec.support_id || s.inside != spec.inside) {
            layout.set_support(&constraint.subject, Some(spec))?;
        }
    }
    layout.relocate(&constraint.subject, position)?;
    Ok(())
}

/// A locator that asks a model through the gateway.
pub struct GatewayLocator<'a> {
    gateway: &'a GatewayHandle,
}

impl<'a> GatewayLocator<'a> {
    pub fn new(gateway: &'a GatewayHandle) -> Self {
        Self { gateway }
    }
}

/// The locator request: scene, cameras and the violated constraint.
pub fn locator_request(layout: &SceneLayout, constraint: &SpatialConstraint, rigs: &[CameraRig]) -> StructuredRequest {
    let context = json!({
        "scene": scene_value(layout),
        "layout_config": layout.config(),
        "cameras": rigs,
        "constraint": constraint,
        "instance_id": constraint.subject,
    });
    StructuredRequest::new(
        RoleTag::Locator,
        prompts::user_prompt(
            &format!("`{constraint}` is violated. Propose a new bottom-center position for `{}`.", constraint.subject),
            &constraint.to_string(),
            &context,
        ),
    )
}

impl Locator for GatewayLocator<'_> {
    fn propose(&self, layout: &SceneLayout, constraint: &SpatialConstraint, rigs: &[CameraRig]) -> Result<Vec3, OptimizeError> {
        let proposal = self.gateway.send(&locator_request(layout, constraint, rigs))?.into_relocation()?;
        if proposal.instance_id != constraint.subject {
            return Err(OptimizeError::VerdictMismatch(format!(
                "locator moved `{}` instead of `{}`",
                proposal.instance_id, constraint.subject
            )));
        }
        Ok(proposal.position)
    }

    fn name(&self) -> &str {
        "gateway"
    }
}
