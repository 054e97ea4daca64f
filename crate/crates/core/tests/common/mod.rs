//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's math: matrices are built from raw
//! quaternion components, rays are traced against triangles rather than
//! slabs, and searches are exhaustive.

#![allow(dead_code)]

pub mod scenarios;

use fyi_core::geometry::{CameraIntrinsics, CameraPose, Rotation, Transform, Vec3};
use fyi_core::layout::{ObjectInstance, OccupancyGrid};
use rand::Rng;

pub type Matrix4 = [[f64; 4]; 4];
pub type Matrix3 = [[f64; 3]; 3];

/// Rotation matrix of a unit quaternion `[w, x, y, z]`.
pub fn quaternion_matrix(q: [f64; 4]) -> Matrix3 {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn mat4_mul(lhs: &Matrix4, rhs: &Matrix4) -> Matrix4 {
    let mut out = [[0.0; 4]; 4];
    for (row, out_row) in out.iter_mut().enumerate() {
        for (col, cell) in out_row.iter_mut().enumerate() {
            *cell = (0..4).map(|k| lhs[row][k] * rhs[k][col]).sum();
        }
    }
    out
}

pub fn mat4_apply(m: &Matrix4, p: [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (row, cell) in out.iter_mut().enumerate() {
        *cell = (0..4).map(|k| m[row][k] * p[k]).sum();
    }
    out
}

/// `T · R · S` as three separate homogeneous matrices multiplied together.
pub fn homogeneous_transform(translation: [f64; 3], quaternion: [f64; 4], scale: [f64; 3]) -> Matrix4 {
    let r = quaternion_matrix(quaternion);
    let translate = [
        [1.0, 0.0, 0.0, translation[0]],
        [0.0, 1.0, 0.0, translation[1]],
        [0.0, 0.0, 1.0, translation[2]],
        [0.0, 0.0, 0.0, 1.0],
    ];
    let rotate = [
        [r[0][0], r[0][1], r[0][2], 0.0],
        [r[1][0], r[1][1], r[1][2], 0.0],
        [r[2][0], r[2][1], r[2][2], 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ];
    let scale = [
        [scale[0], 0.0, 0.0, 0.0],
        [0.0, scale[1], 0.0, 0.0],
        [0.0, 0.0, scale[2], 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ];
    mat4_mul(&translate, &mat4_mul(&rotate, &scale))
}

pub fn transform_matrix(t: &Transform) -> Matrix4 {
    homogeneous_transform(t.translation.to_array(), t.rotation.quaternion(), t.scale.to_array())
}

/// `K · [R | t] · p̃`, then divide by the third component.
pub fn project_homogeneous(k: &CameraIntrinsics, pose: &CameraPose, p: Vec3) -> Option<(f64, f64)> {
    let r = quaternion_matrix(pose.rotation.quaternion());
    let t = pose.translation.to_array();
    let mut extrinsic = [[0.0; 4]; 3];
    for row in 0..3 {
        extrinsic[row] = [r[row][0], r[row][1], r[row][2], t[row]];
    }
    let intrinsic = [[k.fx, 0.0, k.cx], [0.0, k.fy, k.cy], [0.0, 0.0, 1.0]];
    let hom = [p.x, p.y, p.z, 1.0];
    let cam: Vec<f64> = (0..3).map(|row| (0..4).map(|c| extrinsic[row][c] * hom[c]).sum()).collect();
    let img: Vec<f64> = (0..3).map(|row| (0..3).map(|c| intrinsic[row][c] * cam[c]).sum()).collect();
    (img[2] > 0.0).then(|| (img[0] / img[2], img[1] / img[2]))
}

/// Camera-space point of a world point, from raw quaternion components.
pub fn world_to_camera(pose: &CameraPose, p: Vec3) -> [f64; 3] {
    let r = quaternion_matrix(pose.rotation.quaternion());
    let t = pose.translation.to_array();
    let p = p.to_array();
    let mut out = [0.0; 3];
    for row in 0..3 {
        out[row] = r[row][0] * p[0] + r[row][1] * p[1] + r[row][2] * p[2] + t[row];
    }
    out
}

// Triangle-based brute-force renderer.

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Ray parameter of a Möller–Trumbore hit, edges inclusive.
fn ray_triangle(origin: [f64; 3], dir: [f64; 3], tri: &[[f64; 3]; 3]) -> Option<f64> {
    let e1 = sub(tri[1], tri[0]);
    let e2 = sub(tri[2], tri[0]);
    let pvec = cross(dir, e2);
    let det = dot(e1, pvec);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = sub(origin, tri[0]);
    let u = dot(tvec, pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = cross(tvec, e1);
    let v = dot(dir, qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = dot(e2, qvec) * inv;
    (t > 1e-12).then_some(t)
}

/// The 12 world-space triangles of an instance's box.
pub fn box_triangles(inst: &ObjectInstance) -> Vec<[[f64; 3]; 3]> {
    let m = transform_matrix(inst.transform());
    let (c, h) = (inst.obb.center.to_array(), inst.obb.half_extents.to_array());
    let corner = |sx: f64, sy: f64, sz: f64| {
        let w = mat4_apply(&m, [c[0] + sx * h[0], c[1] + sy * h[1], c[2] + sz * h[2], 1.0]);
        [w[0], w[1], w[2]]
    };
    // Each face as a quad of corner signs, split along one diagonal.
    let faces: [[(f64, f64, f64); 4]; 6] = [
        [(-1., -1., -1.), (1., -1., -1.), (1., 1., -1.), (-1., 1., -1.)],
        [(-1., -1., 1.), (1., -1., 1.), (1., 1., 1.), (-1., 1., 1.)],
        [(-1., -1., -1.), (1., -1., -1.), (1., -1., 1.), (-1., -1., 1.)],
        [(-1., 1., -1.), (1., 1., -1.), (1., 1., 1.), (-1., 1., 1.)],
        [(-1., -1., -1.), (-1., 1., -1.), (-1., 1., 1.), (-1., -1., 1.)],
        [(1., -1., -1.), (1., 1., -1.), (1., 1., 1.), (1., -1., 1.)],
    ];
    let mut out = Vec::with_capacity(12);
    for quad in faces {
        let q: Vec<[f64; 3]> = quad.iter().map(|&(x, y, z)| corner(x, y, z)).collect();
        out.push([q[0], q[1], q[2]]);
        out.push([q[0], q[2], q[3]]);
    }
    out
}

/// Depth (camera +Z) and 1-based instance per pixel, testing every triangle.
pub fn render_triangles(instances: &[ObjectInstance], k: &CameraIntrinsics, pose: &CameraPose) -> (Vec<f64>, Vec<u16>) {
    let r = quaternion_matrix(pose.rotation.quaternion());
    let t = pose.translation.to_array();
    // Camera center −Rᵀt and world ray Rᵀ·d_cam.
    let center: [f64; 3] = std::array::from_fn(|i| -(r[0][i] * t[0] + r[1][i] * t[1] + r[2][i] * t[2]));
    let tris: Vec<Vec<[[f64; 3]; 3]>> = instances.iter().map(box_triangles).collect();
    let (w, h) = (k.width as usize, k.height as usize);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut ids = vec![0u16; w * h];
    for row in 0..h {
        for col in 0..w {
            let d_cam = [(col as f64 + 0.5 - k.cx) / k.fx, (row as f64 + 0.5 - k.cy) / k.fy, 1.0];
            let dir: [f64; 3] = std::array::from_fn(|i| r[0][i] * d_cam[0] + r[1][i] * d_cam[1] + r[2][i] * d_cam[2]);
            for (n, obj) in tris.iter().enumerate() {
                for tri in obj {
                    if let Some(hit) = ray_triangle(center, dir, tri) {
                        // d_cam has unit z, so the ray parameter is the camera depth.
                        if hit < depth[row * w + col] {
                            depth[row * w + col] = hit;
                            ids[row * w + col] = n as u16 + 1;
                        }
                    }
                }
            }
        }
    }
    (depth, ids)
}

// Exhaustive free-region search for axis-aligned rectangular footprints.

/// The lattice position nearest the extent center, then smallest angle from
/// +x in `[0, 2π)`, where a `width × depth` rectangle ⊕ `clearance` meets no
/// occupied cell and the rectangle lies inside the extent.
pub fn free_region_bruteforce(grid: &OccupancyGrid, width: f64, depth: f64, clearance: f64) -> Option<[f64; 2]> {
    let ext = grid.extent();
    let cs = grid.cell_size();
    let (nx, ny) = grid.dims();
    let [cx, cy] = [(ext.min_x + ext.max_x) / 2.0, (ext.min_y + ext.max_y) / 2.0];
    let reach = ((ext.max_x - ext.min_x).max(ext.max_y - ext.min_y) / cs).ceil() as i64 + 1;
    let occupied: Vec<[f64; 4]> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .filter(|&(i, j)| grid.is_occupied(i, j))
        .map(|(i, j)| {
            let x0 = ext.min_x + i as f64 * cs;
            let y0 = ext.min_y + j as f64 * cs;
            [x0 - clearance, y0 - clearance, x0 + cs + clearance, y0 + cs + clearance]
        })
        .collect();
    let mut best: Option<(i64, f64, [f64; 2])> = None;
    for i in -reach..=reach {
        for j in -reach..=reach {
            let (x, y) = (cx + i as f64 * cs, cy + j as f64 * cs);
            let fp = [x - width / 2.0, y - depth / 2.0, x + width / 2.0, y + depth / 2.0];
            let tol = 1e-9;
            let inside = fp[0] >= ext.min_x - tol && fp[1] >= ext.min_y - tol && fp[2] <= ext.max_x + tol && fp[3] <= ext.max_y + tol;
            if !inside {
                continue;
            }
            // Open intervals with a small tolerance: touching is not blocking.
            let eps = 1e-9;
            let blocked = occupied
                .iter()
                .any(|c| fp[0] + eps < c[2] && c[0] + eps < fp[2] && fp[1] + eps < c[3] && c[1] + eps < fp[3]);
            if blocked {
                continue;
            }
            let dist2 = i * i + j * j;
            let mut angle = (j as f64).atan2(i as f64);
            if angle < 0.0 {
                angle += std::f64::consts::TAU;
            }
            let better = match best {
                None => true,
                Some((d, a, _)) => dist2 < d || (dist2 == d && angle < a),
            };
            if better {
                best = Some((dist2, angle, [x, y]));
            }
        }
    }
    best.map(|b| b.2)
}

/// Interior intersection of two convex polygons by brute-force separating axes.
pub fn polygons_overlap(a: &[[f64; 2]], b: &[[f64; 2]], eps: f64) -> bool {
    for poly in [a, b] {
        for i in 0..poly.len() {
            let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
            let axis = [q[1] - p[1], p[0] - q[0]];
            let len = axis[0].hypot(axis[1]);
            if len == 0.0 {
                continue;
            }
            let proj = |pts: &[[f64; 2]]| {
                pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    let d = (v[0] * axis[0] + v[1] * axis[1]) / len;
                    (lo.min(d), hi.max(d))
                })
            };
            let ((a0, a1), (b0, b1)) = (proj(a), proj(b));
            if a1 <= b0 + eps || b1 <= a0 + eps {
                return false;
            }
        }
    }
    true
}

/// Mean by Neumaier-compensated summation.
pub fn compensated_mean(values: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / values.len() as f64
}

// Random inputs.

pub fn random_rotation(rng: &mut impl Rng) -> Rotation {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        if q.iter().map(|v| v * v).sum::<f64>() > 0.05 {
            return Rotation::from_quaternion(q[0], q[1], q[2], q[3]).expect("non-degenerate");
        }
    }
}

pub fn random_vec(rng: &mut impl Rng, range: f64) -> Vec3 {
    Vec3::new(rng.gen_range(-range..range), rng.gen_range(-range..range), rng.gen_range(-range..range))
}

/// A camera on a sphere around `target` looking at it, with square pixels.
pub fn random_camera(rng: &mut impl Rng, target: Vec3, radius: f64, size: u32) -> (CameraIntrinsics, CameraPose) {
    let az = rng.gen_range(0.0..std::f64::consts::TAU);
    let el = rng.gen_range(10f64..70.0).to_radians();
    let eye = target + Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * radius;
    let f = f64::from(size) * rng.gen_range(0.8..1.4);
    let k = CameraIntrinsics::new(f, f, f64::from(size) / 2.0, f64::from(size) / 2.0, size, size).unwrap();
    (k, CameraPose::look_at(eye, target, Vec3::Z).unwrap())
}
