mod common;

use common::random_camera;
use common::scenarios::{random_box, renderer_case};
use fyi_core::assets::AssetRepository;
use fyi_core::geometry::{CameraIntrinsics, CameraPose, Obb, Rotation, Transform, Vec3};
use fyi_core::layout::{InsertRequest, LayoutConfig, ObjectInstance, PlacedBy, SceneLayout};
use fyi_core::render::{render_instances, render_view, solo_coverage, visible_fraction, BACKGROUND};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn slab_renderer_matches_triangle_renderer() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut covered = 0;
    for scene in 0..20 {
        covered += renderer_case(&mut rng, scene, 64).unwrap_or_else(|e| panic!("{e}"));
    }
    assert!(covered > 20 * 500, "scenes should be mostly covered, got {covered} px");
}

#[test]
fn unit_cube_center_depth() {
    let obb = Obb::new(Vec3::ZERO, Vec3::splat(0.5)).unwrap();
    let cube = ObjectInstance::new("cube", "cube", "cube", obb, Transform::from_translation(Vec3::new(0.0, 0.0, 2.0)), PlacedBy::Instructed, None);
    let k = CameraIntrinsics::new(64.0, 64.0, 32.0, 32.0, 64, 64).unwrap();
    let view = render_instances(&[cube], &k, &CameraPose::IDENTITY, 0);
    // Pixel (32, 32) has its center half a pixel off axis; the front face is flat.
    assert!((view.depth_at(32, 32) - 1.5).abs() < 1e-6);
    assert!((view.depth_at(31, 31) - 1.5).abs() < 1e-6);
    assert_eq!(view.instance_at(32, 32), 1);
    assert_eq!(view.instance_at(0, 0), BACKGROUND);
}

#[test]
fn empty_layout_renders_background() {
    let layout = SceneLayout::new(LayoutConfig::default()).unwrap();
    let k = CameraIntrinsics::new(50.0, 50.0, 32.0, 32.0, 64, 64).unwrap();
    let pose = CameraPose::look_at(Vec3::new(3.0, 0.0, 2.0), Vec3::ZERO, Vec3::Z).unwrap();
    let view = render_view(&layout, &k, &pose, 0);
    assert!(view.depth.iter().all(|d| d.is_infinite() && *d > 0.0));
    assert!(view.instance.iter().all(|&i| i == BACKGROUND));
}

/// A wall whose right edge sits on the optical axis hides the left half of a slab.
#[test]
fn half_occluded_slab_matches_solo_ratio() {
    let repo = AssetRepository::demo();
    let mut layout = SceneLayout::new(LayoutConfig::default()).unwrap();
    let book = repo.get("book_hardcover").unwrap();
    let monitor = repo.get("monitor_flat").unwrap();
    layout.insert_object(InsertRequest::new("slab", book).at(Vec3::new(0.0, 0.0, 0.2))).unwrap();
    layout
        .insert_object(InsertRequest::new("wall", monitor).at(Vec3::new(-0.275, -0.5, 0.0)).rotated(Rotation::IDENTITY))
        .unwrap();
    let k = CameraIntrinsics::new(80.0, 80.0, 32.0, 32.0, 64, 64).unwrap();
    let pose = CameraPose::look_at(Vec3::new(0.0, -1.5, 0.22), Vec3::new(0.0, 0.0, 0.22), Vec3::Z).unwrap();
    let view = render_view(&layout, &k, &pose, 0);

    let slab = layout.instance("slab").unwrap();
    let alone = render_instances(std::slice::from_ref(slab), &k, &pose, 0);
    let solo = alone.instance.iter().filter(|&&i| i == 1).count();
    assert_eq!(solo, solo_coverage(slab, &k, &pose));
    let visible = view.coverage(1);
    let expect = visible as f64 / solo as f64;
    let got = visible_fraction(&layout, &view, 1).unwrap();
    assert!((got - expect).abs() < 1e-12);
    assert!((0.3..0.7).contains(&got), "about half hidden, got {got}");

    let wall = layout.instance("wall").unwrap();
    assert_eq!(visible_fraction(&layout, &view, 2).unwrap(), 1.0);
    let lone = render_instances(std::slice::from_ref(wall), &k, &pose, 0);
    assert_eq!(lone.coverage(1), view.coverage(2));
    assert!(visible_fraction(&layout, &view, 3).is_err());
}

#[test]
fn fully_hidden_object_is_invisible() {
    let repo = AssetRepository::demo();
    let mut layout = SceneLayout::new(LayoutConfig::default()).unwrap();
    layout.insert_object(InsertRequest::new("cup", repo.get("cup_pink").unwrap()).at(Vec3::new(0.0, 0.3, 0.0))).unwrap();
    layout.insert_object(InsertRequest::new("box", repo.get("box_cardboard").unwrap()).at(Vec3::ZERO)).unwrap();
    let k = CameraIntrinsics::new(60.0, 60.0, 32.0, 32.0, 64, 64).unwrap();
    let pose = CameraPose::look_at(Vec3::new(0.0, -2.0, 0.1), Vec3::new(0.0, 0.0, 0.1), Vec3::Z).unwrap();
    let view = render_view(&layout, &k, &pose, 0);
    assert_eq!(visible_fraction(&layout, &view, 1).unwrap(), 0.0);
}

#[test]
fn doubling_resolution_quadruples_coverage() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut checked = 0;
    for _ in 0..40 {
        let inst = random_box(&mut rng, 0);
        let radius = rng.gen_range(2.0..3.5);
        let (k, pose) = random_camera(&mut rng, Vec3::ZERO, radius, 64);
        let low = solo_coverage(&inst, &k, &pose);
        if low < 100 {
            continue;
        }
        let high = solo_coverage(&inst, &k.scaled(2), &pose);
        let ratio = high as f64 / low as f64;
        assert!((3.5..=4.5).contains(&ratio), "{low} -> {high}");
        checked += 1;
    }
    assert!(checked >= 20);
}

#[test]
fn rendering_is_independent_of_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let instances: Vec<ObjectInstance> = (0..5).map(|n| random_box(&mut rng, n)).collect();
    let (k, pose) = random_camera(&mut rng, Vec3::ZERO, 3.0, 128);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| render_instances(&instances, &k, &pose, 0))
    };
    let single = run(1);
    for threads in [2, 3, 8] {
        let multi = run(threads);
        assert_eq!(single.instance, multi.instance);
        let bits = |v: &[f64]| v.iter().map(|d| d.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&single.depth), bits(&multi.depth));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn buffers_agree_on_coverage(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = rng.gen_range(0..4);
        let instances: Vec<ObjectInstance> = (0..count).map(|n| random_box(&mut rng, n)).collect();
        let (k, pose) = random_camera(&mut rng, Vec3::ZERO, 2.5, 32);
        let view = render_instances(&instances, &k, &pose, 0);
        prop_assert_eq!(view.depth.len(), 32 * 32);
        prop_assert_eq!(view.instance.len(), 32 * 32);
        for (d, i) in view.depth.iter().zip(&view.instance) {
            prop_assert_eq!(*i != BACKGROUND, d.is_finite());
            prop_assert!(*d > 0.0);
            prop_assert!(usize::from(*i) <= instances.len());
        }
    }
}
