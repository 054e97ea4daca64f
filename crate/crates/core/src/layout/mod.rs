//! Object instantiation, placement, and the global scene layout.
//!
//! Every object is an oriented box whose local bottom-center sits at the
//! local origin, so an instance's translation is exactly the world position
//! of its bottom-center.

mod grid;
mod polygon;
mod scene;

use serde::{Deserialize, Serialize};

pub use grid::{cell_count, find_free_region, find_free_region_where, spiral_offsets, OccupancyGrid};
pub use polygon::{ConvexPolygon, Point2, Rect, OVERLAP_EPS};
pub use scene::{
    instantiate, project_object, Diagnostic, InsertRequest, ObjectInstance, PlacedBy, Placement, ProjectedObject,
    SceneLayout, SupportRef, SupportSpec,
};

use crate::geometry::GeometryError;

pub const DEFAULT_CELL_SIZE: f64 = 0.05;
pub const DEFAULT_EXTENT_M: f64 = 6.0;
pub const DEFAULT_CLEARANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub cell_size: f64,
    /// Scene extent along x, centered on the origin.
    pub extent_width: f64,
    /// Scene extent along y, centered on the origin.
    pub extent_depth: f64,
    pub clearance: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            cell_size: DEFAULT_CELL_SIZE,
            extent_width: DEFAULT_EXTENT_M,
            extent_depth: DEFAULT_EXTENT_M,
            clearance: DEFAULT_CLEARANCE,
        }
    }
}

impl LayoutConfig {
    pub fn extent(&self) -> Rect {
        Rect::centered(self.extent_width, self.extent_depth)
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if !(self.clearance.is_finite() && self.clearance >= 0.0) {
            return Err(LayoutError::InvalidConfig(format!("clearance must be >= 0, got {}", self.clearance)));
        }
        OccupancyGrid::new(self.extent(), self.cell_size).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayoutError {
    #[error("invalid layout config: {0}")]
    InvalidConfig(String),
    #[error("target ({x}, {y}) for {id} lies outside the scene extent")]
    OutOfExtent { id: String, x: f64, y: f64 },
    #[error("no free region fits the footprint")]
    NoFreeRegion,
    #[error("instance `{0}` already exists")]
    DuplicateInstance(String),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("`{0}` is entirely behind the camera")]
    FullyBehindCamera(String),
    #[error("`{0}` still supports other instances")]
    HasDependents(String),
    #[error("constraint {0} references a missing instance")]
    DanglingConstraint(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
