//! Convex polygons on the ground plane.

use serde::{Deserialize, Serialize};

pub type Point2 = [f64; 2];

/// Tolerance for treating touching shapes as disjoint.
pub const OVERLAP_EPS: f64 = 1e-9;

/// Axis-aligned ground rectangle, serialized as `[min_x, min_y, max_x, max_y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl From<[f64; 4]> for Rect {
    fn from(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.min_x, r.min_y, r.max_x, r.max_y]
    }
}

impl Rect {
    pub const fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    /// A `width × depth` rectangle centered on the origin.
    pub fn centered(width: f64, depth: f64) -> Self {
        Self::new(-width / 2.0, -depth / 2.0, width / 2.0, depth / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn depth(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn center(&self) -> Point2 {
        [(self.min_x + self.max_x) / 2.0, (self.min_y + self.max_y) / 2.0]
    }

    pub fn is_valid(&self) -> bool {
        [self.min_x, self.min_y, self.max_x, self.max_y].iter().all(|v| v.is_finite())
            && self.max_x > self.min_x
            && self.max_y > self.min_y
    }

    pub fn contains(&self, p: Point2) -> bool {
        p[0] >= self.min_x - OVERLAP_EPS
            && p[0] <= self.max_x + OVERLAP_EPS
            && p[1] >= self.min_y - OVERLAP_EPS
            && p[1] <= self.max_y + OVERLAP_EPS
    }

    pub fn expanded(&self, margin: f64) -> Self {
        Self::new(self.min_x - margin, self.min_y - margin, self.max_x + margin, self.max_y + margin)
    }

    pub fn corners(&self) -> [Point2; 4] {
        [
            [self.min_x, self.min_y],
            [self.max_x, self.min_y],
            [self.max_x, self.max_y],
            [self.min_x, self.max_y],
        ]
    }
}

/// Counter-clockwise convex polygon with no repeated or collinear vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl ConvexPolygon {
    /// Convex hull by monotone chain.
    pub fn hull(points: &[Point2]) -> Self {
        let mut pts: Vec<Point2> = points.to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        pts.dedup();
        if pts.len() < 3 {
            return Self { vertices: pts };
        }
        let mut lower: Vec<Point2> = Vec::new();
        for &p in &pts {
            while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 1e-15 {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<Point2> = Vec::new();
        for &p in pts.iter().rev() {
            while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 1e-15 {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        Self { vertices: lower }
    }

    pub fn from_rect(r: &Rect) -> Self {
        Self {
            vertices: r.corners().to_vec(),
        }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| [p[0] + dx, p[1] + dy]).collect(),
        }
    }

    pub fn bounds(&self) -> Rect {
        let mut r = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            r.min_x = r.min_x.min(p[0]);
            r.min_y = r.min_y.min(p[1]);
            r.max_x = r.max_x.max(p[0]);
            r.max_y = r.max_y.max(p[1]);
        }
        r
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            / 2.0
    }

    /// Closed containment with tolerance.
    pub fn contains(&self, p: Point2) -> bool {
        let n = self.vertices.len();
        n >= 3 && (0..n).all(|i| cross(self.vertices[i], self.vertices[(i + 1) % n], p) >= -OVERLAP_EPS)
    }

    pub fn contains_polygon(&self, other: &ConvexPolygon) -> bool {
        other.vertices.iter().all(|&p| self.contains(p))
    }

    fn edge_normals(&self) -> impl Iterator<Item = Point2> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            [b[1] - a[1], a[0] - b[0]]
        })
    }

    fn project(&self, axis: Point2) -> (f64, f64) {
        self.vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let d = p[0] * axis[0] + p[1] * axis[1];
            (lo.min(d), hi.max(d))
        })
    }

    /// True when the interiors intersect (touching boundaries do not count).
    pub fn overlaps(&self, other: &ConvexPolygon) -> bool {
        if self.vertices.len() < 3 || other.vertices.len() < 3 {
            return false;
        }
        for axis in self.edge_normals().chain(other.edge_normals()) {
            let len = (axis[0] * axis[0] + axis[1] * axis[1]).sqrt();
            if len == 0.0 {
                continue;
            }
            let axis = [axis[0] / len, axis[1] / len];
            let (a0, a1) = self.project(axis);
            let (b0, b1) = other.project(axis);
            if a1 <= b0 + OVERLAP_EPS || b1 <= a0 + OVERLAP_EPS {
                return false;
            }
        }
        true
    }

    pub fn overlaps_rect(&self, r: &Rect) -> bool {
        self.overlaps(&ConvexPolygon::from_rect(r))
    }

    /// Euclidean gap between two polygons; 0 when they touch or overlap.
    pub fn distance(&self, other: &ConvexPolygon) -> f64 {
        if self.overlaps(other) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for (a, b) in [(self, other), (other, self)] {
            let n = b.vertices.len();
            for &p in &a.vertices {
                for i in 0..n {
                    best = best.min(point_segment_distance(p, b.vertices[i], b.vertices[(i + 1) % n]));
                }
            }
        }
        best
    }
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}
