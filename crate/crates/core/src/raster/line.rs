use crate::geometry::Point;

/// Integer line rasterization of the closed segment `a -> b`.
///
/// The pixel chain is always traced from the lexicographically smaller
/// endpoint, so `bresenham(a, b)` and `bresenham(b, a)` cover the same pixels;
/// the returned order runs from `a` to `b`. Along the major axis the minor
/// coordinate is the ideal line value rounded half-up, carried by an integer
/// error accumulator.
pub fn bresenham(a: Point, b: Point) -> Vec<Point> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let mut out = trace(lo, hi);
    if a > b {
        out.reverse();
    }
    out
}

fn trace(from: Point, to: Point) -> Vec<Point> {
    let dx = i64::from(to.x) - i64::from(from.x);
    let dy = i64::from(to.y) - i64::from(from.y);
    let n = dx.abs().max(dy.abs());
    let mut out = Vec::with_capacity(n as usize + 1);
    if n == 0 {
        out.push(from);
        return out;
    }

    let x_major = dx.abs() >= dy.abs();
    let (major_step, minor_delta) = if x_major {
        (dx.signum(), dy)
    } else {
        (dy.signum(), dx)
    };

    // minor offset at step t is floor((2*t*minor_delta + n) / (2n));
    // `rem` is that numerator modulo 2n.
    let two_n = 2 * n;
    let mut minor = 0i64;
    let mut rem = n;
    for t in 0..=n {
        let major = t * major_step;
        let (ox, oy) = if x_major {
            (major, minor)
        } else {
            (minor, major)
        };
        out.push(Point::new(
            (i64::from(from.x) + ox) as i32,
            (i64::from(from.y) + oy) as i32,
        ));
        rem += 2 * minor_delta;
        if rem >= two_n {
            minor += 1;
            rem -= two_n;
        } else if rem < 0 {
            minor -= 1;
            rem += two_n;
        }
    }
    out
}
