//! Dependency-free 3D math: vectors, rotations, transforms, oriented boxes
//! and the pinhole camera model.
//!
//! Conventions: right-handed, Z-up world. Cameras look along their local +Z
//! with +X to the right and +Y down in the image. Transforms apply scale,
//! then rotation, then translation.

mod camera;
mod rotation;
mod transform;
mod vec3;

pub use camera::{
    camera_ray, project, project_camera_point, unproject, CameraIntrinsics, CameraPose, Pixel, MIN_DEPTH,
};
pub use rotation::Rotation;
pub use transform::{compose_transform, obb_bottom_center, obb_world_corners, Obb, Transform};
pub use vec3::{mat3_det, mat3_mul, mat3_mul_vec, mat3_transpose, Mat3, Mat4, Vec3};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("scale component {axis} must be strictly positive, got {value}")]
    NonPositiveScale { axis: usize, value: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("point is behind the camera (z_cam = {depth})")]
    BehindCamera { depth: f64 },
    #[error("degenerate rotation")]
    DegenerateRotation,
    #[error("box half extents must be strictly positive")]
    NonPositiveExtent,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn arb_vec(range: f64) -> impl Strategy<Value = Vec3> {
        (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn arb_rotation() -> impl Strategy<Value = Rotation> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 0.01)
            .prop_map(|(w, x, y, z)| Rotation::from_quaternion(w, x, y, z).unwrap())
    }

    #[test]
    fn compose_identity_maps_origin_to_position() {
        let t = compose_transform(Vec3::new(1.0, 2.0, 3.0), Rotation::IDENTITY, Vec3::ONE).unwrap();
        assert_eq!(t.apply(Vec3::ZERO), Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn yaw_quarter_turn_maps_x_to_y() {
        let t = compose_transform(Vec3::ZERO, Rotation::from_yaw(FRAC_PI_2), Vec3::ONE).unwrap();
        let p = t.apply(Vec3::X);
        assert!(p.max_abs_diff(Vec3::Y) < 1e-15, "{p:?}");
    }

    #[test]
    fn compose_rejects_bad_scale() {
        let err = compose_transform(Vec3::ZERO, Rotation::IDENTITY, Vec3::new(1.0, 0.0, 1.0)).unwrap_err();
        assert_eq!(err, GeometryError::NonPositiveScale { axis: 1, value: 0.0 });
        let err = compose_transform(Vec3::ZERO, Rotation::IDENTITY, Vec3::new(1.0, -2.0, 1.0)).unwrap_err();
        assert!(matches!(err, GeometryError::NonPositiveScale { axis: 1, .. }));
        let err = compose_transform(Vec3::new(f64::NAN, 0.0, 0.0), Rotation::IDENTITY, Vec3::ONE).unwrap_err();
        assert_eq!(err, GeometryError::NonFinite("position"));
        let err = compose_transform(Vec3::ZERO, Rotation::IDENTITY, Vec3::new(f64::INFINITY, 1.0, 1.0)).unwrap_err();
        assert_eq!(err, GeometryError::NonFinite("scale"));
    }

    #[test]
    fn quaternion_is_normalized_and_matrix_orthonormal() {
        let r = Rotation::from_quaternion(3.0, -1.0, 2.0, 0.5).unwrap();
        assert!((r.norm() - 1.0).abs() < 1e-12);
        let m = r.to_matrix();
        let mtm = mat3_mul(&mat3_transpose(&m), &m);
        for (i, row) in mtm.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((v - expected).abs() < 1e-9);
            }
        }
        assert!((mat3_det(&m) - 1.0).abs() < 1e-9);
        assert_eq!(Rotation::from_quaternion(0.0, 0.0, 0.0, 0.0), Err(GeometryError::DegenerateRotation));
    }

    #[test]
    fn unit_cube_corners_and_bottom_center() {
        let cube = Obb::new(Vec3::ZERO, Vec3::splat(0.5)).unwrap();
        let corners = obb_world_corners(&cube, &Transform::default());
        for c in corners {
            assert_eq!(c.x.abs(), 0.5);
            assert_eq!(c.y.abs(), 0.5);
            assert_eq!(c.z.abs(), 0.5);
        }
        let lifted = Transform::from_translation(Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(obb_bottom_center(&cube, &lifted), Vec3::new(0.0, 0.0, 0.5));
        assert_eq!(Obb::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 1.0)), Err(GeometryError::NonPositiveExtent));
    }

    #[test]
    fn projection_examples() {
        let k = CameraIntrinsics::new(100.0, 100.0, 64.0, 64.0, 128, 128).unwrap();
        let e = CameraPose::IDENTITY;
        assert_eq!(project(&k, &e, Vec3::new(0.0, 0.0, 2.0)).unwrap(), Pixel::new(64.0, 64.0));
        assert_eq!(project(&k, &e, Vec3::new(1.0, 0.0, 2.0)).unwrap(), Pixel::new(114.0, 64.0));
        assert!(matches!(
            project(&k, &e, Vec3::new(0.0, 0.0, -1.0)),
            Err(GeometryError::BehindCamera { .. })
        ));
        assert!(matches!(project(&k, &e, Vec3::new(0.0, 0.0, 1e-13)), Err(GeometryError::BehindCamera { .. })));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 3.9, 4, 4).is_ok());
        assert!(CameraIntrinsics::new(1.0, 1.0, -0.1, 1.0, 4, 4).is_err());
    }

    #[test]
    fn look_at_axes_follow_image_convention() {
        // Looking along world +X from the origin with Z up: image right is world −Y, image down is world −Z.
        let pose = CameraPose::look_at(Vec3::ZERO, Vec3::X, Vec3::Z).unwrap();
        assert!(pose.forward().max_abs_diff(Vec3::X) < 1e-12);
        assert!(pose.right().max_abs_diff(-Vec3::Y) < 1e-12);
        assert!(pose.to_camera(Vec3::new(1.0, 0.0, 1.0)).y < 0.0);
        // Straight down uses the fallback up vector and stays rigid.
        let top = CameraPose::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO, Vec3::Z).unwrap();
        assert!(top.forward().max_abs_diff(-Vec3::Z) < 1e-12);
        assert!(top.center().max_abs_diff(Vec3::new(0.0, 0.0, 3.0)) < 1e-12);
    }

    proptest! {
        #[test]
        fn rotation_matrix_round_trip(r in arb_rotation(), vs in proptest::collection::vec(arb_vec(10.0), 100)) {
            let back = Rotation::from_matrix(&r.to_matrix()).unwrap();
            for v in vs {
                prop_assert!(r.rotate(v).max_abs_diff(back.rotate(v)) < 1e-9);
            }
        }

        #[test]
        fn rotate_matches_matrix(r in arb_rotation(), v in arb_vec(10.0)) {
            prop_assert!(r.rotate(v).max_abs_diff(mat3_mul_vec(&r.to_matrix(), v)) < 1e-12);
        }

        #[test]
        fn project_unproject_round_trip(
            r in arb_rotation(),
            t in arb_vec(3.0),
            p in arb_vec(5.0),
            fx in 20.0..500.0f64,
            fy in 20.0..500.0f64,
        ) {
            let k = CameraIntrinsics::new(fx, fy, 31.5, 20.25, 64, 48).unwrap();
            let pose = CameraPose::new(r, t).unwrap();
            let z = pose.to_camera(p).z;
            prop_assume!(z > 0.05);
            let px = project(&k, &pose, p).unwrap();
            let back = unproject(&k, &pose, px, z);
            prop_assert!(back.max_abs_diff(p) < 1e-9, "{:?} vs {:?}", back, p);
        }

        #[test]
        fn composition_on_translations(r1 in arb_rotation(), r2 in arb_rotation(), p1 in arb_vec(5.0), p2 in arb_vec(5.0)) {
            let t1 = compose_transform(p1, r1, Vec3::ONE).unwrap();
            let t2 = compose_transform(p2, r2, Vec3::ONE).unwrap();
            let composed = t1.apply(t2.apply(Vec3::ZERO));
            prop_assert!(composed.max_abs_diff(p1 + r1.rotate(p2)) < 1e-12);
        }

        #[test]
        fn slerp_endpoints_and_constant_speed(a in arb_rotation(), b in arb_rotation(), t in 0.0..1.0f64) {
            prop_assert!(a.slerp(&b, 0.0).angle_to(&a) < 1e-7);
            prop_assert!(a.slerp(&b, 1.0).angle_to(&b) < 1e-7);
            let total = a.angle_to(&b);
            let mid = a.slerp(&b, t);
            prop_assert!((a.angle_to(&mid) - t * total).abs() < 1e-7);
        }

        #[test]
        fn geometry_ops_are_deterministic(r in arb_rotation(), p in arb_vec(5.0)) {
            let k = CameraIntrinsics::new(100.0, 90.0, 32.0, 32.0, 64, 64).unwrap();
            let pose = CameraPose::new(r, Vec3::new(0.0, 0.0, 20.0)).unwrap();
            let a = project(&k, &pose, p).map(|px| (px.u.to_bits(), px.v.to_bits()));
            let b = project(&k, &pose, p).map(|px| (px.u.to_bits(), px.v.to_bits()));
            prop_assert_eq!(a.is_ok(), b.is_ok());
            if let (Ok(a), Ok(b)) = (a, b) { prop_assert_eq!(a, b); }
        }
    }
}
