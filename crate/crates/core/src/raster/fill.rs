use std::cmp::Ordering;

use super::grid::Grid;
use super::line::bresenham;
use crate::geometry::ConvexBoundary;

/// Binary grid of every pixel on the Bresenham chain of some boundary edge.
/// A single-vertex boundary marks that one pixel. Pixels outside the grid are
/// dropped.
pub fn rasterize_boundary(boundary: &ConvexBoundary, width: usize, height: usize) -> Grid {
    let mut grid = Grid::new(width, height);
    if let [only] = boundary.vertices() {
        grid.set_clipped(only.x.into(), only.y.into(), 1.0);
    }
    for edge in boundary.edges() {
        for p in bresenham(edge.a(), edge.b()) {
            grid.set_clipped(p.x.into(), p.y.into(), 1.0);
        }
    }
    grid
}

/// Fills the boundary polygon and unions the result with
/// [`rasterize_boundary`].
///
/// Pixel `(x, y)` is sampled at its center `(x + 0.5, y + 0.5)`. Each row is
/// intersected with the polygon's edges at `y + 0.5`; crossings are paired by
/// parity and the pixel centers in `[left, right)` are filled. Crossing
/// positions are exact rationals. Zero-area boundaries produce only the
/// rasterized outline.
pub fn scanline_fill(boundary: &ConvexBoundary, width: usize, height: usize) -> Grid {
    let mut grid = rasterize_boundary(boundary, width, height);
    if boundary.is_degenerate() || boundary.doubled_area() == 0 {
        return grid;
    }

    let mut table: Vec<ScanEdge> = boundary
        .edges()
        .iter()
        .filter_map(|e| ScanEdge::new(e.a().x, e.a().y, e.b().x, e.b().y))
        .collect();
    table.sort_by_key(|e| e.y_min);

    let Some(first_row) = table.first().map(|e| e.y_min.max(0)) else {
        return grid;
    };
    let last_row = table
        .iter()
        .map(|e| e.y_end)
        .max()
        .unwrap_or(0)
        .min(height as i64);

    let mut next = 0;
    let mut active: Vec<ScanEdge> = Vec::new();
    let mut crossings: Vec<Crossing> = Vec::new();
    for y in first_row..last_row {
        while next < table.len() && table[next].y_min <= y {
            active.push(table[next]);
            next += 1;
        }
        active.retain(|e| e.y_end > y);

        crossings.clear();
        crossings.extend(active.iter().map(|e| e.crossing(y)));
        crossings.sort_by(Crossing::cmp);

        let row = y as usize;
        for pair in crossings.chunks_exact(2) {
            let from = pair[0].first_pixel().max(0);
            let to = pair[1].first_pixel().min(width as i64);
            for x in from..to {
                grid.set(x as usize, row, 1.0);
            }
        }
    }
    grid
}

/// Non-horizontal polygon edge, stored bottom-up in index space: active on
/// rows `y_min..y_end`.
#[derive(Debug, Clone, Copy)]
struct ScanEdge {
    x0: i64,
    y_min: i64,
    y_end: i64,
    dx: i64,
}

impl ScanEdge {
    fn new(ax: i32, ay: i32, bx: i32, by: i32) -> Option<Self> {
        let (x0, y0, x1, y1) = match ay.cmp(&by) {
            Ordering::Equal => return None,
            Ordering::Less => (ax, ay, bx, by),
            Ordering::Greater => (bx, by, ax, ay),
        };
        Some(ScanEdge {
            x0: x0.into(),
            y_min: y0.into(),
            y_end: y1.into(),
            dx: i64::from(x1) - i64::from(x0),
        })
    }

    /// Intersection with the horizontal line through row `y`'s pixel centers.
    fn crossing(&self, y: i64) -> Crossing {
        let dy = self.y_end - self.y_min;
        Crossing {
            num: 2 * self.x0 * dy + (2 * y + 1 - 2 * self.y_min) * self.dx,
            den: 2 * dy,
        }
    }
}

/// The rational `num / den` with `den > 0`.
#[derive(Debug, Clone, Copy)]
struct Crossing {
    num: i64,
    den: i64,
}

impl Crossing {
    fn cmp(a: &Crossing, b: &Crossing) -> Ordering {
        (i128::from(a.num) * i128::from(b.den)).cmp(&(i128::from(b.num) * i128::from(a.den)))
    }

    /// Smallest pixel index whose center `x + 0.5` is at or right of the crossing.
    fn first_pixel(&self) -> i64 {
        let n = 2 * self.num - self.den;
        let d = 2 * self.den;
        n.div_euclid(d) + i64::from(n.rem_euclid(d) != 0)
    }
}
