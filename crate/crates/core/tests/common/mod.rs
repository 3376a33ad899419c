//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls into the code paths it is used to check.
#![allow(dead_code)]

use battn::geometry::{orientation, Point};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// O(n^3) hull: (p, q) is a hull edge iff no point lies strictly right of it
/// and no collinear point lies outside the segment. Returns the sorted vertex
/// set.
pub fn brute_hull_vertices(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort();
    pts.dedup();
    if pts.len() == 1 {
        return pts;
    }
    let mut verts = Vec::new();
    for &p in &pts {
        for &q in &pts {
            if p == q {
                continue;
            }
            let supporting = pts.iter().all(|&r| orientation(p, q, r) >= 0);
            if !supporting {
                continue;
            }
            let extreme = pts
                .iter()
                .all(|&r| orientation(p, q, r) != 0 || on_closed_segment(p, q, r));
            if extreme {
                verts.push(p);
                verts.push(q);
            }
        }
    }
    verts.sort();
    verts.dedup();
    verts
}

fn on_closed_segment(p: Point, q: Point, r: Point) -> bool {
    let dot =
        i64::from(r.x - p.x) * i64::from(q.x - p.x) + i64::from(r.y - p.y) * i64::from(q.y - p.y);
    let len2 = i64::from(q.x - p.x).pow(2) + i64::from(q.y - p.y).pow(2);
    (0..=len2).contains(&dot)
}

/// Crossing-number point-in-polygon test with a ray toward +x.
pub fn ray_cast_inside(poly: &[Point], px: f64, py: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let (ax, ay, bx, by) = (a.x as f64, a.y as f64, b.x as f64, b.y as f64);
        if (ay > py) != (by > py) {
            let xint = ax + (py - ay) * (bx - ax) / (by - ay);
            if px < xint {
                inside = !inside;
            }
        }
    }
    inside
}

/// Euclidean distance from `(px, py)` to the segment `a-b`.
pub fn segment_distance(a: Point, b: Point, px: f64, py: f64) -> f64 {
    let (ax, ay, bx, by) = (a.x as f64, a.y as f64, b.x as f64, b.y as f64);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    ((ax + t * dx - px).powi(2) + (ay + t * dy - py).powi(2)).sqrt()
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Full sort of `(score desc, index asc)`; returns the first `k` indices.
pub fn sorted_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = scores.iter().copied().zip(0..).collect();
    order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    order.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Sampled normalized 1-D Gaussian over `[-radius, radius]`.
pub fn analytic_kernel(sigma: f64, radius: i64) -> Vec<f64> {
    let raw: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, extent: i32) -> Vec<Point> {
    (0..n)
        .map(|_| Point::new(rng.gen_range(0..extent), rng.gen_range(0..extent)))
        .collect()
}
