use std::io::{self, Write};

/// Row-major raster of real values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Grid {
    /// # Panics
    ///
    /// Panics if either dimension is zero.
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width >= 1 && height >= 1, "grid dimensions must be >= 1");
        Grid {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    /// Returns `None` unless `values.len() == width * height` and both
    /// dimensions are non-zero.
    pub fn from_vec(width: usize, height: usize, values: Vec<f64>) -> Option<Self> {
        (width >= 1 && height >= 1 && values.len() == width * height).then_some(Grid {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    /// Sets `(x, y)` if it lies inside the grid; silently ignores it otherwise.
    pub fn set_clipped(&mut self, x: i64, y: i64, v: f64) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.set(x as usize, y as usize, v);
        }
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Grid {
        let mut out = self.clone();
        for (dst, src) in out
            .values
            .chunks_exact_mut(self.width)
            .zip(self.values.chunks_exact(self.width))
        {
            dst.iter_mut()
                .zip(src.iter().rev())
                .for_each(|(d, s)| *d = *s);
        }
        out
    }

    /// Mirror top-bottom.
    pub fn flip_vertical(&self) -> Grid {
        let mut out = self.clone();
        for (dst, src) in out
            .values
            .chunks_exact_mut(self.width)
            .zip(self.values.chunks_exact(self.width).rev())
        {
            dst.copy_from_slice(src);
        }
        out
    }

    /// Elementwise maximum with another grid of the same shape.
    pub fn union_max(&mut self, other: &Grid) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(a, &b)| *a = a.max(b));
    }

    /// Binary PGM ("P5", maxval 255); each pixel is `round(value * 255)`
    /// clamped to `0..=255`.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&self.to_pgm())?;
        w.flush()
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let header = format!("P5\n{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.values.len());
        out.extend_from_slice(header.as_bytes());
        out.extend(self.values.iter().map(|&v| pgm_level(v)));
        out
    }
}

/// Round half up; NaN stays NaN through the clamp and casts to 0.
fn pgm_level(v: f64) -> u8 {
    let x = (v * 255.0).clamp(0.0, 255.0);
    let t = x as u8;
    t + u8::from(x - f64::from(t) >= 0.5)
}

/// Divides by the maximum when it is positive; otherwise returns the grid
/// unchanged.
pub fn normalize(grid: &Grid) -> Grid {
    let mut out = grid.clone();
    normalize_in_place(&mut out);
    out
}

pub fn normalize_in_place(grid: &mut Grid) {
    let max = grid.max();
    if max > 0.0 {
        grid.values.iter_mut().for_each(|v| *v /= max);
    }
}

/// Bilinear resampling with half-pixel-center alignment. Sample positions are
/// clamped to the source edge.
pub fn resample_bilinear(grid: &Grid, out_width: usize, out_height: usize) -> Grid {
    if out_width == grid.width && out_height == grid.height {
        return grid.clone();
    }
    let xs = axis_taps(grid.width, out_width);
    let ys = axis_taps(grid.height, out_height);
    let mut out = Grid::new(out_width, out_height);
    for (oy, &(y0, y1, ty)) in ys.iter().enumerate() {
        let r0 = grid.row(y0);
        let r1 = grid.row(y1);
        for (ox, &(x0, x1, tx)) in xs.iter().enumerate() {
            let top = r0[x0] + (r0[x1] - r0[x0]) * tx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * tx;
            out.values[oy * out_width + ox] = top + (bottom - top) * ty;
        }
    }
    out
}

fn axis_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}
