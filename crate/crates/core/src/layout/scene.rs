use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::grid::{find_free_region, OccupancyGrid};
use super::polygon::{ConvexPolygon, Rect};
use super::{LayoutConfig, LayoutError};
use crate::assets::{AssetRecord, Predicate, SpatialConstraint};
use crate::geometry::{
    compose_transform, obb_bottom_center, obb_world_corners, project, project_camera_point, CameraIntrinsics,
    CameraPose, Obb, Pixel, Rotation, Transform, Vec3, MIN_DEPTH,
};

/// Box for an asset: half extents are half the canonical dims and the
/// bottom face rests on the local origin.
pub fn instantiate(asset: &AssetRecord) -> Result<Obb, LayoutError> {
    let half = asset.canonical_dims / 2.0;
    Ok(Obb::new(Vec3::new(0.0, 0.0, half.z), half)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacedBy {
    Instructed,
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInstance {
    pub instance_id: String,
    pub asset_id: String,
    pub description: String,
    pub obb: Obb,
    pub placed_by: PlacedBy,
    /// Height of the asset's resting surface above its bottom, unscaled.
    pub support_surface: Option<f64>,
    transform: Transform,
    footprint: ConvexPolygon,
}

fn footprint_of(obb: &Obb, t: &Transform) -> ConvexPolygon {
    let pts: Vec<_> = obb_world_corners(obb, t).iter().map(|c| [c.x, c.y]).collect();
    ConvexPolygon::hull(&pts)
}

impl ObjectInstance {
    pub fn new(
        instance_id: impl Into<String>,
        asset_id: impl Into<String>,
        description: impl Into<String>,
        obb: Obb,
        transform: Transform,
        placed_by: PlacedBy,
        support_surface: Option<f64>,
    ) -> Self {
        let footprint = footprint_of(&obb, &transform);
        Self {
            instance_id: instance_id.into(),
            asset_id: asset_id.into(),
            description: description.into(),
            obb,
            placed_by,
            support_surface,
            transform,
            footprint,
        }
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn set_transform(&mut self, t: Transform) {
        self.footprint = footprint_of(&self.obb, &t);
        self.transform = t;
    }

    pub fn position(&self) -> Vec3 {
        self.transform.translation
    }

    pub fn footprint(&self) -> &ConvexPolygon {
        &self.footprint
    }

    /// Footprint relative to the instance's ground position.
    pub fn relative_footprint(&self) -> ConvexPolygon {
        let p = self.transform.translation;
        self.footprint.translated(-p.x, -p.y)
    }

    pub fn world_corners(&self) -> [Vec3; 8] {
        obb_world_corners(&self.obb, &self.transform)
    }

    pub fn bottom_center(&self) -> Vec3 {
        obb_bottom_center(&self.obb, &self.transform)
    }

    pub fn world_center(&self) -> Vec3 {
        self.transform.apply(self.obb.center)
    }

    pub fn bottom_z(&self) -> f64 {
        self.world_corners().iter().map(|c| c.z).fold(f64::INFINITY, f64::min)
    }

    pub fn top_z(&self) -> f64 {
        self.world_corners().iter().map(|c| c.z).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Height at which things resting on this instance sit.
    pub fn support_height(&self) -> f64 {
        match self.support_surface {
            Some(h) => self.bottom_z() + h * self.transform.scale.z,
            None => self.top_z(),
        }
    }

    /// Full box size in world units (scaled canonical dims).
    pub fn size(&self) -> Vec3 {
        self.obb.size().hadamard(self.transform.scale)
    }
}

/// Where an instance rests and at what height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRef {
    pub support_id: String,
    pub height: f64,
    pub inside: bool,
}

/// A request to rest an instance on (or inside) another.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSpec {
    pub support_id: String,
    pub inside: bool,
}

impl SupportSpec {
    pub fn on(id: impl Into<String>) -> Self {
        Self {
            support_id: id.into(),
            inside: false,
        }
    }

    /// The support implied by a constraint, if it is a support predicate.
    pub fn from_constraint(c: &SpatialConstraint) -> Option<Self> {
        c.predicate.is_support().then(|| Self {
            support_id: c.reference.clone(),
            inside: c.predicate == Predicate::Inside,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    Target(Vec3),
    Auto,
}

#[derive(Debug, Clone)]
pub struct InsertRequest<'a> {
    pub instance_id: String,
    pub asset: &'a AssetRecord,
    pub description: String,
    pub placement: Placement,
    pub rotation: Rotation,
    pub scale: Vec3,
    pub support: Option<SupportSpec>,
}

impl<'a> InsertRequest<'a> {
    /// Auto placement on the ground, identity rotation, unit scale.
    pub fn new(instance_id: impl Into<String>, asset: &'a AssetRecord) -> Self {
        Self {
            instance_id: instance_id.into(),
            asset,
            description: asset.description.clone(),
            placement: Placement::Auto,
            rotation: Rotation::IDENTITY,
            scale: Vec3::ONE,
            support: None,
        }
    }

    pub fn at(mut self, target: Vec3) -> Self {
        self.placement = Placement::Target(target);
        self
    }

    pub fn on(mut self, support_id: impl Into<String>) -> Self {
        self.support = Some(SupportSpec::on(support_id));
        self
    }

    pub fn with_support(mut self, support: Option<SupportSpec>) -> Self {
        self.support = support;
        self
    }

    pub fn rotated(mut self, rotation: Rotation) -> Self {
        self.rotation = rotation;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    Overlap { instance: String, other: String },
}

/// The global layout: instances, ground occupancy, constraints and supports.
///
/// Instances resting on another instance are tracked in `support_index` and
/// are not rasterized into the ground grid; their support's footprint already
/// covers them.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneLayout {
    config: LayoutConfig,
    instances: Vec<ObjectInstance>,
    grid: OccupancyGrid,
    constraints: Vec<SpatialConstraint>,
    support_index: BTreeMap<String, SupportRef>,
    diagnostics: Vec<Diagnostic>,
}

impl SceneLayout {
    pub fn new(config: LayoutConfig) -> Result<Self, LayoutError> {
        config.validate()?;
        Ok(Self {
            grid: OccupancyGrid::new(config.extent(), config.cell_size)?,
            config,
            instances: Vec::new(),
            constraints: Vec::new(),
            support_index: BTreeMap::new(),
            diagnostics: Vec::new(),
        })
    }

    /// Like [`SceneLayout::new`] with an explicit extent rectangle.
    pub fn with_extent(config: LayoutConfig, extent: Rect) -> Result<Self, LayoutError> {
        config.validate()?;
        Ok(Self {
            grid: OccupancyGrid::new(extent, config.cell_size)?,
            config,
            instances: Vec::new(),
            constraints: Vec::new(),
            support_index: BTreeMap::new(),
            diagnostics: Vec::new(),
        })
    }

    pub fn config(&self) -> &LayoutConfig {
        &self.config
    }

    pub fn extent(&self) -> Rect {
        self.grid.extent()
    }

    pub fn instances(&self) -> &[ObjectInstance] {
        &self.instances
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn constraints(&self) -> &[SpatialConstraint] {
        &self.constraints
    }

    pub fn support_index(&self) -> &BTreeMap<String, SupportRef> {
        &self.support_index
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn instance(&self, id: &str) -> Option<&ObjectInstance> {
        self.instances.iter().find(|i| i.instance_id == id)
    }

    fn index_of(&self, id: &str) -> Result<usize, LayoutError> {
        self.instances
            .iter()
            .position(|i| i.instance_id == id)
            .ok_or_else(|| LayoutError::UnknownInstance(id.to_owned()))
    }

    /// 1-based ordinal used in instance buffers.
    pub fn ordinal(&self, id: &str) -> Option<u16> {
        self.instances.iter().position(|i| i.instance_id == id).map(|p| p as u16 + 1)
    }

    pub fn support_of(&self, id: &str) -> Option<&SupportRef> {
        self.support_index.get(id)
    }

    fn level(&self, id: &str) -> Option<&str> {
        self.support_index.get(id).map(|s| s.support_id.as_str())
    }

    fn resolve_support(&self, spec: &SupportSpec) -> Result<SupportRef, LayoutError> {
        let s = self
            .instance(&spec.support_id)
            .ok_or_else(|| LayoutError::UnknownInstance(spec.support_id.clone()))?;
        Ok(SupportRef {
            support_id: spec.support_id.clone(),
            height: if spec.inside { s.bottom_z() } else { s.support_height() },
            inside: spec.inside,
        })
    }

    /// Grid over `support_id`'s footprint with everything already resting on it marked.
    pub fn support_grid(&self, support_id: &str, exclude: Option<&str>) -> Result<OccupancyGrid, LayoutError> {
        let support = &self.instances[self.index_of(support_id)?];
        let mut g = OccupancyGrid::within(support.footprint().clone(), self.config.cell_size)?;
        for inst in &self.instances {
            if Some(inst.instance_id.as_str()) != exclude && self.level(&inst.instance_id) == Some(support_id) {
                g.mark(inst.footprint());
            }
        }
        Ok(g)
    }

    /// Ground grid with `exclude` lifted off.
    pub fn ground_grid(&self, exclude: Option<&str>) -> OccupancyGrid {
        let mut g = self.grid.clone();
        if let Some(inst) = exclude.and_then(|id| self.instance(id)) {
            if self.level(&inst.instance_id).is_none() {
                g.unmark(inst.footprint());
            }
        }
        g
    }

    /// Inserts an instance at an exact target (instructed placement).
    ///
    /// The target is kept verbatim even when a support is given; overlap with
    /// anything other than the support is recorded in the diagnostics.
    pub fn place_instructed(
        &mut self,
        mut inst: ObjectInstance,
        target: Vec3,
        support: Option<SupportSpec>,
    ) -> Result<(), LayoutError> {
        if self.instance(&inst.instance_id).is_some() {
            return Err(LayoutError::DuplicateInstance(inst.instance_id));
        }
        if !target.is_finite() {
            return Err(crate::geometry::GeometryError::NonFinite("target").into());
        }
        if !self.extent().contains([target.x, target.y]) {
            return Err(LayoutError::OutOfExtent {
                id: inst.instance_id,
                x: target.x,
                y: target.y,
            });
        }
        let support = support.map(|s| self.resolve_support(&s)).transpose()?;
        let mut t = inst.transform;
        t.translation = target;
        inst.set_transform(t);
        let level = support.as_ref().map(|s| s.support_id.as_str());
        let overlaps: Vec<Diagnostic> = self
            .instances
            .iter()
            .filter(|o| self.level(&o.instance_id) == level && inst.footprint().overlaps(o.footprint()))
            .map(|o| Diagnostic::Overlap {
                instance: inst.instance_id.clone(),
                other: o.instance_id.clone(),
            })
            .collect();
        self.diagnostics.extend(overlaps);
        self.commit(inst, support);
        Ok(())
    }

    fn commit(&mut self, inst: ObjectInstance, support: Option<SupportRef>) {
        match support {
            Some(s) => {
                self.support_index.insert(inst.instance_id.clone(), s);
            }
            None => self.grid.mark(inst.footprint()),
        }
        self.instances.push(inst);
    }

    /// Instantiates an asset, places it and adds it to the layout.
    ///
    /// Auto placement searches the ground grid, or the support's footprint
    /// when a support is given, and rests the bottom on the support height.
    pub fn insert_object(&mut self, req: InsertRequest<'_>) -> Result<(), LayoutError> {
        if self.instance(&req.instance_id).is_some() {
            return Err(LayoutError::DuplicateInstance(req.instance_id));
        }
        let obb = instantiate(req.asset)?;
        let local = compose_transform(Vec3::ZERO, req.rotation, req.scale)?;
        let inst = ObjectInstance::new(
            req.instance_id.clone(),
            req.asset.asset_id.clone(),
            req.description,
            obb,
            local,
            match req.placement {
                Placement::Target(_) => super::PlacedBy::Instructed,
                Placement::Auto => super::PlacedBy::Auto,
            },
            req.asset.support_surface,
        );
        match req.placement {
            Placement::Target(target) => self.place_instructed(inst, target, req.support),
            Placement::Auto => {
                let support = req.support.map(|s| self.resolve_support(&s)).transpose()?;
                let (xy, z) = match &support {
                    Some(s) => {
                        let g = self.support_grid(&s.support_id, None)?;
                        (find_free_region(&g, inst.footprint(), self.config.clearance)?, s.height)
                    }
                    None => (find_free_region(&self.grid, inst.footprint(), self.config.clearance)?, 0.0),
                };
                let mut inst = inst;
                inst.set_transform(compose_transform(Vec3::new(xy[0], xy[1], z), req.rotation, req.scale)?);
                self.commit(inst, support);
                Ok(())
            }
        }
    }

    /// Adds a constraint between two live instances.
    pub fn add_constraint(&mut self, c: SpatialConstraint) -> Result<(), LayoutError> {
        if self.instance(&c.subject).is_none() || self.instance(&c.reference).is_none() {
            return Err(LayoutError::DanglingConstraint(c.key()));
        }
        if !self.constraints.contains(&c) {
            self.constraints.push(c);
        }
        Ok(())
    }

    /// Removes an instance and every constraint that mentions it.
    pub fn remove(&mut self, id: &str) -> Result<ObjectInstance, LayoutError> {
        let idx = self.index_of(id)?;
        if self.support_index.values().any(|s| s.support_id == id) {
            return Err(LayoutError::HasDependents(id.to_owned()));
        }
        let inst = self.instances.remove(idx);
        if self.support_index.remove(id).is_none() {
            self.grid.unmark(inst.footprint());
        }
        self.constraints.retain(|c| c.subject != id && c.reference != id);
        self.diagnostics.retain(|Diagnostic::Overlap { instance, other }| instance != id && other != id);
        Ok(inst)
    }

    /// Moves an instance's bottom-center to `position`; instances resting on it move along.
    pub fn relocate(&mut self, id: &str, position: Vec3) -> Result<(), LayoutError> {
        if !position.is_finite() {
            return Err(crate::geometry::GeometryError::NonFinite("position").into());
        }
        let idx = self.index_of(id)?;
        let delta = position - self.instances[idx].position();
        let mut moving = vec![idx];
        for (i, inst) in self.instances.iter().enumerate() {
            if self.level(&inst.instance_id) == Some(id) {
                moving.push(i);
            }
        }
        for i in moving {
            let on_ground = self.level(&self.instances[i].instance_id).is_none();
            if on_ground {
                self.grid.unmark(self.instances[i].footprint());
            }
            let mut t = *self.instances[i].transform();
            t.translation = t.translation + delta;
            self.instances[i].set_transform(t);
            if on_ground {
                self.grid.mark(self.instances[i].footprint());
            }
        }
        let moved_ids: Vec<String> = self
            .support_index
            .iter()
            .filter(|(_, s)| s.support_id == id)
            .map(|(k, _)| k.clone())
            .collect();
        for k in moved_ids {
            if let Some(s) = self.support_index.get_mut(&k) {
                s.height += delta.z;
            }
        }
        Ok(())
    }

    /// Sets an instance's position and rotation, keeping its scale. Unlike
    /// [`SceneLayout::relocate`], instances resting on it stay where they are.
    pub fn set_pose(&mut self, id: &str, position: Vec3, rotation: Rotation) -> Result<(), LayoutError> {
        let idx = self.index_of(id)?;
        let t = compose_transform(position, rotation, self.instances[idx].transform().scale)?;
        let on_ground = self.level(id).is_none();
        if on_ground {
            self.grid.unmark(self.instances[idx].footprint());
        }
        self.instances[idx].set_transform(t);
        if on_ground {
            self.grid.mark(self.instances[idx].footprint());
        }
        Ok(())
    }

    /// Declares (or clears) what `id` rests on, updating ground occupancy.
    pub fn set_support(&mut self, id: &str, support: Option<SupportSpec>) -> Result<(), LayoutError> {
        let idx = self.index_of(id)?;
        let resolved = support.map(|s| self.resolve_support(&s)).transpose()?;
        let was_ground = self.level(id).is_none();
        match resolved {
            Some(s) => {
                if was_ground {
                    self.grid.unmark(self.instances[idx].footprint());
                }
                self.support_index.insert(id.to_owned(), s);
            }
            None => {
                if !was_ground {
                    self.support_index.remove(id);
                    self.grid.mark(self.instances[idx].footprint());
                }
            }
        }
        Ok(())
    }

    /// Pairs of instances on the same level whose footprints overlap.
    pub fn overlapping_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (i, a) in self.instances.iter().enumerate() {
            for b in &self.instances[i + 1..] {
                if self.level(&a.instance_id) == self.level(&b.instance_id) && a.footprint().overlaps(b.footprint()) {
                    out.push((a.instance_id.clone(), b.instance_id.clone()));
                }
            }
        }
        out
    }

    /// Axis-aligned 3D bounds of every instance, or `None` for an empty layout.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.instances.iter().flat_map(|i| i.world_corners());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), c| {
            (
                Vec3::new(lo.x.min(c.x), lo.y.min(c.y), lo.z.min(c.z)),
                Vec3::new(hi.x.max(c.x), hi.y.max(c.y), hi.z.max(c.z)),
            )
        }))
    }
}

/// An instance's image-space footprint in one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedObject {
    /// Projection of the instance position; `None` when it is behind the camera.
    pub center: Option<Pixel>,
    /// `[min_u, min_v, max_u, max_v]` over corners in front of the camera, clipped to the image.
    pub rect: [f64; 4],
}

pub fn project_object(
    layout: &SceneLayout,
    instance_id: &str,
    k: &CameraIntrinsics,
    pose: &CameraPose,
) -> Result<ProjectedObject, LayoutError> {
    let inst = layout
        .instance(instance_id)
        .ok_or_else(|| LayoutError::UnknownInstance(instance_id.to_owned()))?;
    let mut rect = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let mut any = false;
    for c in inst.world_corners() {
        let cam = pose.to_camera(c);
        if cam.z <= MIN_DEPTH {
            continue;
        }
        let px = project_camera_point(k, cam)?;
        any = true;
        rect[0] = rect[0].min(px.u);
        rect[1] = rect[1].min(px.v);
        rect[2] = rect[2].max(px.u);
        rect[3] = rect[3].max(px.v);
    }
    if !any {
        return Err(LayoutError::FullyBehindCamera(instance_id.to_owned()));
    }
    let (w, h) = (f64::from(k.width), f64::from(k.height));
    let rect = [rect[0].clamp(0.0, w), rect[1].clamp(0.0, h), rect[2].clamp(0.0, w), rect[3].clamp(0.0, h)];
    Ok(ProjectedObject {
        center: project(k, pose, inst.position()).ok(),
        rect,
    })
}
