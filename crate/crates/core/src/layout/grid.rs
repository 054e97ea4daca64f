use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::TAU;

use super::polygon::{ConvexPolygon, Point2, Rect};
use super::LayoutError;

/// Ground-plane raster of footprint coverage.
///
/// Cells hold coverage counts rather than flags so that unmarking one
/// footprint never clears a cell another footprint still covers. A cell is
/// occupied while its count is non-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    cell_size: f64,
    extent: Rect,
    nx: usize,
    ny: usize,
    counts: Vec<u16>,
    /// Candidate footprints must also lie inside this polygon.
    boundary: Option<ConvexPolygon>,
}

/// Cells along one axis needed to cover `len`.
pub fn cell_count(len: f64, cell_size: f64) -> usize {
    ((len / cell_size) - 1e-9).ceil().max(1.0) as usize
}

impl OccupancyGrid {
    pub fn new(extent: Rect, cell_size: f64) -> Result<Self, LayoutError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(LayoutError::InvalidConfig(format!("cell_size must be > 0, got {cell_size}")));
        }
        if !extent.is_valid() {
            return Err(LayoutError::InvalidConfig("scene extent must be a non-empty rectangle".into()));
        }
        let nx = cell_count(extent.width(), cell_size);
        let ny = cell_count(extent.depth(), cell_size);
        Ok(Self {
            cell_size,
            extent,
            nx,
            ny,
            counts: vec![0; nx * ny],
            boundary: None,
        })
    }

    /// A grid over `boundary`'s bounding box that only accepts candidates inside `boundary`.
    pub fn within(boundary: ConvexPolygon, cell_size: f64) -> Result<Self, LayoutError> {
        let mut g = Self::new(boundary.bounds(), cell_size)?;
        g.boundary = Some(boundary);
        Ok(g)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn extent(&self) -> Rect {
        self.extent
    }

    /// (columns along x, rows along y).
    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn cell_rect(&self, i: usize, j: usize) -> Rect {
        let x0 = self.extent.min_x + i as f64 * self.cell_size;
        let y0 = self.extent.min_y + j as f64 * self.cell_size;
        Rect::new(x0, y0, x0 + self.cell_size, y0 + self.cell_size)
    }

    pub fn is_occupied(&self, i: usize, j: usize) -> bool {
        self.counts[j * self.nx + i] > 0
    }

    pub fn occupied_cells(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Raw coverage counts, row-major by y.
    pub fn counts(&self) -> &[u16] {
        &self.counts
    }

    /// Index range of cells whose squares could meet `r`.
    fn index_range(&self, r: &Rect) -> Option<(usize, usize, usize, usize)> {
        let cs = self.cell_size;
        let i0 = ((r.min_x - self.extent.min_x) / cs).floor().max(0.0);
        let j0 = ((r.min_y - self.extent.min_y) / cs).floor().max(0.0);
        let i1 = ((r.max_x - self.extent.min_x) / cs).floor().min(self.nx as f64 - 1.0);
        let j1 = ((r.max_y - self.extent.min_y) / cs).floor().min(self.ny as f64 - 1.0);
        (i0 <= i1 && j0 <= j1).then_some((i0 as usize, j0 as usize, i1 as usize, j1 as usize))
    }

    /// Flat indices of cells whose square, grown by `clearance`, meets the polygon interior.
    pub fn covered_cells(&self, footprint: &ConvexPolygon, clearance: f64) -> Vec<usize> {
        let Some((i0, j0, i1, j1)) = self.index_range(&footprint.bounds().expanded(clearance)) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                if footprint.overlaps_rect(&self.cell_rect(i, j).expanded(clearance)) {
                    out.push(j * self.nx + i);
                }
            }
        }
        out
    }

    pub fn mark(&mut self, footprint: &ConvexPolygon) {
        for c in self.covered_cells(footprint, 0.0) {
            self.counts[c] = self.counts[c].saturating_add(1);
        }
    }

    pub fn unmark(&mut self, footprint: &ConvexPolygon) {
        for c in self.covered_cells(footprint, 0.0) {
            self.counts[c] = self.counts[c].saturating_sub(1);
        }
    }

    /// Marks a cell directly (used to block regions in scratch grids).
    pub fn block_cell(&mut self, i: usize, j: usize) {
        let c = j * self.nx + i;
        self.counts[c] = self.counts[c].saturating_add(1);
    }

    /// Whether `footprint` lies inside the extent (and boundary) with every
    /// cell under `footprint ⊕ clearance` free.
    pub fn is_free(&self, footprint: &ConvexPolygon, clearance: f64) -> bool {
        let inside = footprint.vertices().iter().all(|&p| self.extent.contains(p))
            && self.boundary.as_ref().is_none_or(|b| b.contains_polygon(footprint));
        if !inside {
            return false;
        }
        // Only occupied cells need the polygon test.
        let Some((i0, j0, i1, j1)) = self.index_range(&footprint.bounds().expanded(clearance)) else {
            return true;
        };
        for j in j0..=j1 {
            for i in i0..=i1 {
                if self.counts[j * self.nx + i] > 0 && footprint.overlaps_rect(&self.cell_rect(i, j).expanded(clearance)) {
                    return false;
                }
            }
        }
        true
    }

    /// Maximum lattice ring that can still hold a candidate inside the extent.
    fn max_ring(&self) -> i64 {
        ((self.extent.width().max(self.extent.depth()) / (2.0 * self.cell_size)).ceil() as i64) + 1
    }
}

/// Spiral order key: squared lattice distance, then angle in [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq)]
struct SpiralKey {
    dist2: i64,
    angle: f64,
    i: i64,
    j: i64,
}

impl SpiralKey {
    fn new(i: i64, j: i64) -> Self {
        let a = (j as f64).atan2(i as f64);
        Self {
            dist2: i * i + j * j,
            angle: if a < 0.0 { a + TAU } else { a },
            i,
            j,
        }
    }
}

impl Eq for SpiralKey {}

impl Ord for SpiralKey {
    // Reversed so BinaryHeap pops the smallest key.
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist2.cmp(&self.dist2).then(other.angle.total_cmp(&self.angle))
    }
}

impl PartialOrd for SpiralKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lattice offsets `(i, j)` ordered by squared distance from the origin,
/// then counter-clockwise angle from +x.
pub fn spiral_offsets(max_ring: i64) -> impl Iterator<Item = (i64, i64)> {
    let mut heap = BinaryHeap::new();
    let mut ring = 0i64;
    heap.push(SpiralKey::new(0, 0));
    std::iter::from_fn(move || loop {
        // Offsets in rings beyond `ring` have dist² ≥ (ring+1)², so anything
        // smaller is final.
        if let Some(top) = heap.peek() {
            if ring >= max_ring || top.dist2 < (ring + 1) * (ring + 1) {
                let k = heap.pop().expect("peeked");
                return Some((k.i, k.j));
            }
        }
        if ring >= max_ring {
            return None;
        }
        ring += 1;
        for t in -ring..ring {
            heap.push(SpiralKey::new(ring, t));
            heap.push(SpiralKey::new(-t, ring));
            heap.push(SpiralKey::new(-ring, -t));
            heap.push(SpiralKey::new(t, -ring));
        }
    })
}

/// Ground position for `footprint` (given relative to the point that should
/// land on the returned position) by an outward spiral from the grid center.
///
/// Candidates sit on the lattice `center + (i, j) · cell_size`; the first one
/// whose translated footprint is inside the extent with all cells under
/// `footprint ⊕ clearance` free wins.
pub fn find_free_region(grid: &OccupancyGrid, footprint: &ConvexPolygon, clearance: f64) -> Result<Point2, LayoutError> {
    find_free_region_where(grid, footprint, clearance, |_| true)
}

/// [`find_free_region`] that also requires `accept(position)`.
pub fn find_free_region_where(
    grid: &OccupancyGrid,
    footprint: &ConvexPolygon,
    clearance: f64,
    mut accept: impl FnMut(Point2) -> bool,
) -> Result<Point2, LayoutError> {
    let center = grid.extent.center();
    let fb = footprint.bounds();
    if fb.width() > grid.extent.width() + 1e-9 || fb.depth() > grid.extent.depth() + 1e-9 {
        return Err(LayoutError::NoFreeRegion);
    }
    for (i, j) in spiral_offsets(grid.max_ring()) {
        let x = center[0] + i as f64 * grid.cell_size;
        let y = center[1] + j as f64 * grid.cell_size;
        if grid.is_free(&footprint.translated(x, y), clearance) && accept([x, y]) {
            return Ok([x, y]);
        }
    }
    Err(LayoutError::NoFreeRegion)
}
