//! Seeded scenario generators and checkers shared by the module tests and
//! the acceptance run. Checkers return the first problem instead of panicking.

use fyi_core::assets::{AssetRepository, Predicate, SpatialConstraint};
use fyi_core::geometry::{compose_transform, CameraIntrinsics, CameraPose, Obb, Rotation, Vec3};
use fyi_core::layout::{
    find_free_region, ConvexPolygon, InsertRequest, LayoutConfig, LayoutError, ObjectInstance, OccupancyGrid,
    PlacedBy, Rect, SceneLayout, OVERLAP_EPS,
};
use fyi_core::render::render_instances;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{free_region_bruteforce, polygons_overlap, random_camera, random_rotation, random_vec, render_triangles};

pub const SMALL: &[&str] = &["cup_pink", "cup_white", "mug_ceramic", "bottle_water", "vase_glass", "plate_dinner", "lamp_desk"];
pub const SUPPORTS: &[&str] = &["table_side", "table_coffee", "desk_office", "box_cardboard", "tray_serving"];

/// Random grid with rectangular blocks and an off-lattice footprint; the
/// first grids always get a block over the center.
pub fn free_region_case(rng: &mut impl Rng, trial: usize, center_bias: bool) -> Result<bool, String> {
    let cs = [0.05, 0.07, 0.1][trial % 3];
    let (w, d) = (rng.gen_range(0.6..2.0), rng.gen_range(0.6..2.0));
    let (ox, oy) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let mut grid = OccupancyGrid::new(Rect::new(ox - w / 2.0, oy - d / 2.0, ox + w / 2.0, oy + d / 2.0), cs).unwrap();
    let (nx, ny) = grid.dims();
    for _ in 0..rng.gen_range(1..6) {
        let (bw, bh) = (rng.gen_range(1..nx / 2 + 2), rng.gen_range(1..ny / 2 + 2));
        let (i0, j0) = if center_bias || rng.gen_bool(0.3) {
            (nx / 2 - bw.min(nx / 2) / 2, ny / 2 - bh.min(ny / 2) / 2)
        } else {
            (rng.gen_range(0..nx), rng.gen_range(0..ny))
        };
        for j in j0..(j0 + bh).min(ny) {
            for i in i0..(i0 + bw).min(nx) {
                grid.block_cell(i, j);
            }
        }
    }
    let (fw, fd) = (rng.gen_range(0.03..0.5), rng.gen_range(0.03..0.5));
    let clearance = [0.0, 0.02, 0.05][trial % 3];
    let footprint = ConvexPolygon::from_rect(&Rect::centered(fw, fd));
    let lib = find_free_region(&grid, &footprint, clearance).ok();
    let oracle = free_region_bruteforce(&grid, fw, fd, clearance);
    if lib != oracle {
        return Err(format!("trial {trial}: cs {cs}, footprint {fw}×{fd}, clearance {clearance}: {lib:?} vs {oracle:?}"));
    }
    if find_free_region(&grid, &footprint, clearance).ok() != lib {
        return Err(format!("trial {trial}: repeated search differs"));
    }
    Ok(lib.is_some())
}

/// Exhaustive-oracle agreement over `trials` grids; returns how many had room.
pub fn free_region_trials(seed: u64, trials: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found = 0;
    for trial in 0..trials {
        found += usize::from(free_region_case(&mut rng, trial, found == 0)?);
    }
    Ok(found)
}

/// Random auto placements on the ground or on supports, with random yaw.
pub fn random_insert_layout(repo: &AssetRepository, seed: u64) -> Result<SceneLayout, String> {
    let config = LayoutConfig {
        extent_width: 3.0,
        extent_depth: 3.0,
        ..LayoutConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layout = SceneLayout::new(config).unwrap();
    let mut supports: Vec<String> = Vec::new();
    for n in 0..rng.gen_range(2..7) {
        let yaw = Rotation::from_yaw(rng.gen_range(0.0..std::f64::consts::TAU));
        let id = format!("obj_{n}");
        let result = if !supports.is_empty() && rng.gen_bool(0.5) {
            let on = supports[rng.gen_range(0..supports.len())].clone();
            let asset = repo.get(SMALL[rng.gen_range(0..SMALL.len())]).unwrap();
            layout.insert_object(InsertRequest::new(&id, asset).on(on.as_str()).rotated(yaw)).map(|_| {
                layout.add_constraint(SpatialConstraint::new(Predicate::On, &id, &on)).unwrap();
            })
        } else {
            let pick = if rng.gen_bool(0.5) { SUPPORTS } else { SMALL };
            let asset = repo.get(pick[rng.gen_range(0..pick.len())]).unwrap();
            let r = layout.insert_object(InsertRequest::new(&id, asset).rotated(yaw));
            if r.is_ok() && asset.support_surface.is_some() {
                supports.push(id.clone());
            }
            r
        };
        match result {
            Ok(()) | Err(LayoutError::NoFreeRegion) => {}
            Err(e) => return Err(format!("seed {seed}: {e}")),
        }
    }
    Ok(layout)
}

/// No two footprints overlap unless one supports the other, and supported
/// objects sit exactly on their support.
pub fn check_placement(layout: &SceneLayout) -> Result<(), String> {
    let insts = layout.instances();
    for (i, a) in insts.iter().enumerate() {
        if let Some(s) = layout.support_of(&a.instance_id) {
            let support = layout.instance(&s.support_id).unwrap();
            if (a.bottom_z() - support.support_height()).abs() >= 1e-9 {
                return Err(format!("{} floats above {}", a.instance_id, s.support_id));
            }
        }
        for b in &insts[i + 1..] {
            let related = layout.support_of(&a.instance_id).is_some_and(|s| s.support_id == b.instance_id)
                || layout.support_of(&b.instance_id).is_some_and(|s| s.support_id == a.instance_id);
            if !related && polygons_overlap(a.footprint().vertices(), b.footprint().vertices(), OVERLAP_EPS) {
                return Err(format!("{} overlaps {}", a.instance_id, b.instance_id));
            }
        }
    }
    if !layout.overlapping_pairs().is_empty() {
        return Err(format!("overlapping pairs reported: {:?}", layout.overlapping_pairs()));
    }
    Ok(())
}

/// A box with random size, local offset, pose and non-uniform scale.
pub fn random_box(rng: &mut impl Rng, n: usize) -> ObjectInstance {
    let half = Vec3::new(rng.gen_range(0.05..0.4), rng.gen_range(0.05..0.4), rng.gen_range(0.05..0.4));
    let obb = Obb::new(random_vec(rng, 0.1), half).unwrap();
    let scale = Vec3::new(rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5));
    let t = compose_transform(random_vec(rng, 0.6), random_rotation(rng), scale).unwrap();
    ObjectInstance::new(format!("box_{n}"), "box", "box", obb, t, PlacedBy::Instructed, None)
}

/// A random three-box scene and camera, rendered by both renderers.
/// Returns the number of covered pixels.
pub fn renderer_case(rng: &mut impl Rng, scene: usize, size: u32) -> Result<usize, String> {
    let instances: Vec<ObjectInstance> = (0..3).map(|n| random_box(rng, n)).collect();
    let radius = rng.gen_range(2.0..4.0);
    let (k, pose): (CameraIntrinsics, CameraPose) = random_camera(rng, Vec3::ZERO, radius, size);
    let view = render_instances(&instances, &k, &pose, 0);
    let (depth, ids) = render_triangles(&instances, &k, &pose);
    if view.instance != ids {
        let bad = view.instance.iter().zip(&ids).filter(|(a, b)| a != b).count();
        return Err(format!("scene {scene}: {bad} instance pixels differ"));
    }
    for (p, (got, want)) in view.depth.iter().zip(&depth).enumerate() {
        let ok = if want.is_finite() { (got - want).abs() < 1e-6 } else { got.is_infinite() };
        if !ok {
            return Err(format!("scene {scene} pixel {p}: depth {got} vs {want}"));
        }
    }
    Ok(ids.iter().filter(|&&i| i != 0).count())
}
