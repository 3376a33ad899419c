//! Convex boundary construction over quantized landmark positions.
//!
//! The boundary is built by gift wrapping: starting from an extreme point,
//! repeatedly connect to the candidate that leaves every other landmark on the
//! same side of the new edge. All side tests use exact integer arithmetic.
//!
//! Winding is counter-clockwise in the `orientation` sense: for every boundary
//! edge `(a, b)` and every input point `p`, `orientation(a, b, p) >= 0`. In image
//! coordinates (y growing downward) this walks the outline clockwise on screen.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("no landmarks")]
    NoLandmarks,
    #[error("zero-length edge at ({0}, {1})")]
    ZeroLengthEdge(i32, i32),
}

/// Integer pixel position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Point { x, y }
    }

    /// Quantizes a real-valued position with round-half-up on each axis.
    ///
    /// Values outside the `i32` range saturate.
    pub fn quantize(x: f64, y: f64) -> Self {
        Point {
            x: (x + 0.5).floor() as i32,
            y: (y + 0.5).floor() as i32,
        }
    }

    fn dist2(self, other: Point) -> i64 {
        let dx = i64::from(other.x) - i64::from(self.x);
        let dy = i64::from(other.y) - i64::from(self.y);
        dx * dx + dy * dy
    }
}

impl From<(i32, i32)> for Point {
    fn from((x, y): (i32, i32)) -> Self {
        Point { x, y }
    }
}

/// A non-degenerate segment between two distinct points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    a: Point,
    b: Point,
}

impl Edge {
    pub fn new(a: Point, b: Point) -> Result<Self, GeometryError> {
        if a == b {
            return Err(GeometryError::ZeroLengthEdge(a.x, a.y));
        }
        Ok(Edge { a, b })
    }

    pub fn a(&self) -> Point {
        self.a
    }

    pub fn b(&self) -> Point {
        self.b
    }
}

/// Closed convex outline of a landmark set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvexBoundary {
    vertices: Vec<Point>,
    edges: Vec<Edge>,
    dropped: Vec<Point>,
}

impl ConvexBoundary {
    /// Hull vertices in walk order, starting at [`select_start`].
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Consecutive vertex pairs plus the closing edge back to the start.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Landmarks that were never connected: interior points and points lying
    /// on a hull edge without being one of its endpoints.
    pub fn dropped(&self) -> &[Point] {
        &self.dropped
    }

    /// True for a single point or a zero-area (collinear) outline.
    pub fn is_degenerate(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Twice the signed area of the vertex polygon.
    pub fn doubled_area(&self) -> i64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let p = self.vertices[i];
                let q = self.vertices[(i + 1) % n];
                i64::from(p.x) * i64::from(q.y) - i64::from(q.x) * i64::from(p.y)
            })
            .sum()
    }
}

/// Sign of the cross product `(b - a) x (c - a)`.
///
/// Positive is a left turn, negative a right turn, zero collinear. Exact for
/// any `i32` coordinates since all intermediates are widened to `i64`.
pub fn orientation(a: Point, b: Point, c: Point) -> i64 {
    let (ax, ay) = (i64::from(a.x), i64::from(a.y));
    (i64::from(b.x) - ax) * (i64::from(c.y) - ay) - (i64::from(b.y) - ay) * (i64::from(c.x) - ax)
}

/// The point with minimal y, ties broken by minimal x. Always a hull vertex.
pub fn select_start(points: &[Point]) -> Result<Point, GeometryError> {
    points
        .iter()
        .copied()
        .min_by_key(|p| (p.y, p.x))
        .ok_or(GeometryError::NoLandmarks)
}

/// One gift-wrapping step: the candidate in `remaining` such that every other
/// candidate satisfies `orientation(current, chosen, q) >= 0`. Among collinear
/// candidates the farthest from `current` wins, so points lying on the edge
/// are skipped.
///
/// `current` must be an extreme point of `remaining ∪ {current}`.
///
/// # Panics
///
/// Panics if `remaining` is empty.
pub fn next_hull_vertex(current: Point, remaining: &[Point]) -> Point {
    let mut chosen = *remaining.first().expect("next_hull_vertex: no candidates");
    for &q in &remaining[1..] {
        let turn = orientation(current, chosen, q);
        if turn < 0 || (turn == 0 && current.dist2(q) > current.dist2(chosen)) {
            chosen = q;
        }
    }
    chosen
}

/// Builds the convex boundary of `points`.
///
/// Duplicates are removed first. The walk starts at [`select_start`] and
/// stops as soon as the chosen vertex is the start again, at which point the
/// closing edge has been emitted. A single point gives one vertex and no
/// edges; collinear input gives its two extreme points joined there and back.
pub fn convex_boundary(points: &[Point]) -> Result<ConvexBoundary, GeometryError> {
    let mut distinct: Vec<Point> = Vec::with_capacity(points.len());
    for &p in points {
        if !distinct.contains(&p) {
            distinct.push(p);
        }
    }
    let start = select_start(&distinct)?;

    if distinct.len() == 1 {
        return Ok(ConvexBoundary {
            vertices: vec![start],
            edges: Vec::new(),
            dropped: Vec::new(),
        });
    }

    let mut vertices = vec![start];
    let mut edges = Vec::new();
    let mut candidates: Vec<Point> = Vec::with_capacity(distinct.len());
    let mut current = start;
    // Each iteration adds a distinct vertex or closes the cycle, so the walk
    // cannot exceed one step per point.
    for _ in 0..distinct.len() {
        candidates.clear();
        candidates.extend(distinct.iter().copied().filter(|&p| p != current));
        let next = next_hull_vertex(current, &candidates);
        edges.push(Edge {
            a: current,
            b: next,
        });
        if next == start {
            break;
        }
        vertices.push(next);
        current = next;
    }
    debug_assert_eq!(edges.last().map(|e| e.b), Some(start));

    let dropped = distinct
        .into_iter()
        .filter(|p| !vertices.contains(p))
        .collect();
    Ok(ConvexBoundary {
        vertices,
        edges,
        dropped,
    })
}
