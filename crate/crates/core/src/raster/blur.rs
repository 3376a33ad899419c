use rayon::prelude::*;

use super::grid::Grid;

/// Standard deviation of the blur kernel, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Sigma {
    /// `0.05 * min(width, height)`, clamped to at least 0.5.
    #[default]
    Auto,
    /// A fixed value; zero (or any non-positive value) disables blurring.
    Fixed(f64),
}

impl Sigma {
    pub fn resolve(self, width: usize, height: usize) -> f64 {
        match self {
            Sigma::Auto => (0.05 * width.min(height) as f64).max(0.5),
            Sigma::Fixed(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlurConfig {
    pub sigma: Sigma,
}

impl BlurConfig {
    pub fn fixed(sigma: f64) -> Self {
        BlurConfig {
            sigma: Sigma::Fixed(sigma),
        }
    }

    pub fn auto() -> Self {
        BlurConfig { sigma: Sigma::Auto }
    }
}

/// Kernel half-width: `ceil(3 sigma)`, or 0 when sigma is not positive.
pub fn kernel_radius(sigma: f64) -> usize {
    if sigma > 0.0 && sigma.is_finite() {
        (3.0 * sigma).ceil() as usize
    } else {
        0
    }
}

/// One half of the symmetric sampled Gaussian: `taps[k]` is the weight at
/// offsets `±k`, normalized so that `taps[0] + 2 * sum(taps[1..]) == 1`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = kernel_radius(sigma);
    if radius == 0 {
        return vec![1.0];
    }
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (0..=radius)
        .map(|k| (-((k * k) as f64) / denom).exp())
        .collect();
    let total = taps[0] + 2.0 * taps[1..].iter().sum::<f64>();
    taps.iter_mut().for_each(|w| *w /= total);
    taps
}

/// Mirror index into `0..n` without repeating the edge sample
/// (`-1 -> 1`, `n -> n - 2`).
fn reflect(i: isize, n: usize) -> usize {
    if (0..n as isize).contains(&i) {
        return i as usize;
    }
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// `out[i] = taps[0] * a0[i] + sum_k taps[k] * (ak[i] + bk[i])` where
/// `(ak, bk) = pair(k)` and `a0 == b0`, accumulated in increasing `k`.
#[inline(always)]
fn filter_line_body<'a>(
    out: &mut [f64],
    taps: &[f64],
    pair: impl Fn(usize) -> (&'a [f64], &'a [f64]),
) {
    let (center, _) = pair(0);
    for (o, &c) in out.iter_mut().zip(center) {
        *o = taps[0] * c;
    }
    for (k, &w) in taps.iter().enumerate().skip(1) {
        let (a, b) = pair(k);
        for ((o, &l), &r) in out.iter_mut().zip(a).zip(b) {
            *o += w * (l + r);
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn filter_line_avx2<'a>(
    out: &mut [f64],
    taps: &[f64],
    pair: impl Fn(usize) -> (&'a [f64], &'a [f64]),
) {
    filter_line_body(out, taps, pair);
}

/// Wider vectors only; no fused multiply-add, so every target rounds alike.
fn filter_line<'a>(out: &mut [f64], taps: &[f64], pair: impl Fn(usize) -> (&'a [f64], &'a [f64])) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        unsafe { filter_line_avx2(out, taps, pair) };
        return;
    }
    filter_line_body(out, taps, pair);
}

/// Inclusive range of indices whose value is non-zero, if any.
fn support(values: impl Iterator<Item = bool>) -> Option<(usize, usize)> {
    let mut range = None;
    for (i, nonzero) in values.enumerate() {
        if nonzero {
            range = Some(range.map_or((i, i), |(lo, _)| (lo, i)));
        }
    }
    range
}

/// Separable Gaussian blur, vertical pass then horizontal, with mirror
/// reflection at the borders.
///
/// Each output sample is `w0 * c + sum_k w_k * (left_k + right_k)`, so the
/// result commutes bit-exactly with horizontal and vertical mirroring.
/// Mirrored taps never reach farther than the direct ones, so outputs more
/// than `radius` away from the non-zero support are exact zeros and skipped.
pub fn gaussian_blur(grid: &Grid, cfg: &BlurConfig) -> Grid {
    let (width, height) = (grid.width(), grid.height());
    let taps = gaussian_kernel(cfg.sigma.resolve(width, height));
    if taps.len() == 1 {
        return grid.clone();
    }
    let radius = taps.len() - 1;
    let widen =
        |(lo, hi): (usize, usize), n: usize| (lo.saturating_sub(radius), (hi + radius).min(n - 1));
    let src = grid.values();

    let mut values = vec![0.0; width * height];
    let row_spans: Vec<Option<(usize, usize)>> = src
        .chunks(width)
        .map(|r| support(r.iter().map(|&v| v != 0.0)))
        .collect();
    let Some(rows) = support(row_spans.iter().map(Option::is_some)) else {
        return Grid::from_vec(width, height, values).expect("shape preserved");
    };
    let (ylo, yhi) = widen(rows, height);
    values
        .par_chunks_mut(width)
        .enumerate()
        .skip(ylo)
        .take(yhi + 1 - ylo)
        .for_each_init(
            || vec![0.0; width + 2 * radius],
            |padded, (y, out)| {
                let yi = y as isize;
                let window = (-(radius as isize)..=radius as isize)
                    .filter_map(|k| row_spans[reflect(yi + k, height)])
                    .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)));
                let Some((xlo, xhi)) = window else {
                    return;
                };
                let row = |i: isize| {
                    let r = reflect(i, height);
                    &src[r * width + xlo..=r * width + xhi]
                };
                filter_line(&mut out[xlo..=xhi], &taps, |k| {
                    (row(yi - k as isize), row(yi + k as isize))
                });

                // The row is now final for the vertical pass and only this
                // task touches it, so the horizontal pass runs in place.
                let Some(span) = support(out.iter().map(|&v| v != 0.0)) else {
                    return;
                };
                let (lo, hi) = widen(span, width);
                padded[radius..radius + width].copy_from_slice(out);
                for j in (0..radius).chain(radius + width..width + 2 * radius) {
                    padded[j] = out[reflect(j as isize - radius as isize, width)];
                }
                let padded = &padded[..];
                filter_line(&mut out[lo..=hi], &taps, |k| {
                    (&padded[lo + radius - k..], &padded[lo + radius + k..])
                });
            },
        );

    Grid::from_vec(width, height, values).expect("shape preserved")
}
