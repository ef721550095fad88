//! Synthetic piecewise-linear profiles and piecewise-planar images, bounded
//! noise, and error metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DepthImage, Measurements, Profile1D, SampleSet};

/// Minimum spacing between corners, folds and the domain ends.
const MIN_GAP: usize = 3;
/// Smallest slope change at a generated corner, relative to `max_value`.
const MIN_KINK: f64 = 2e-5;
const MAX_DRAWS: usize = 100_000;
const PSNR_CAP: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec1D {
    pub n: usize,
    pub num_corners: usize,
    pub max_value: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec3D {
    pub rows: usize,
    pub cols: usize,
    pub num_folds: usize,
    pub max_value: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedProfile {
    pub profile: Profile1D<f64>,
    /// One-based corner indices, increasing.
    pub corners: Vec<usize>,
}

/// Direction of the fold lines in a generated image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldOrientation {
    /// Constant row `i = o`.
    Horizontal,
    /// Constant column `j = o`.
    Vertical,
    /// `i - j = o`.
    Diagonal,
    /// `i + j = o`.
    AntiDiagonal,
}

impl FoldOrientation {
    fn level(self, i: usize, j: usize) -> i64 {
        let (i, j) = (i as i64, j as i64);
        match self {
            FoldOrientation::Horizontal => i,
            FoldOrientation::Vertical => j,
            FoldOrientation::Diagonal => i - j,
            FoldOrientation::AntiDiagonal => i + j,
        }
    }

    /// Offsets whose fold line bends at least one interior stencil.
    fn offsets(self, rows: usize, cols: usize) -> (i64, i64) {
        let (r, c) = (rows as i64, cols as i64);
        match self {
            FoldOrientation::Horizontal => (1, r - 2),
            FoldOrientation::Vertical => (1, c - 2),
            FoldOrientation::Diagonal => (-(c - 3), r - 3),
            FoldOrientation::AntiDiagonal => (2, r + c - 4),
        }
    }

    fn bends_vertical(self) -> bool {
        self != FoldOrientation::Vertical
    }

    fn bends_horizontal(self) -> bool {
        self != FoldOrientation::Horizontal
    }
}

/// Hinge `amplitude * max(0, level - offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub orientation: FoldOrientation,
    pub offset: i64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedImage {
    pub image: DepthImage<f64>,
    pub folds: Vec<Fold>,
    /// One-based `(row, col)` fold pixels in column-major order, the same
    /// order as `edge_set`.
    pub edges: Vec<(usize, usize)>,
}

/// `k` sorted values in `lo..=hi` with consecutive gaps of at least `gap`.
fn spaced(rng: &mut ChaCha8Rng, k: usize, lo: i64, hi: i64, gap: i64) -> Option<Vec<i64>> {
    if k == 0 {
        return Some(Vec::new());
    }
    let slack = hi - lo - gap * (k as i64 - 1);
    if slack < 0 {
        return None;
    }
    let mut extra: Vec<i64> = (0..k).map(|_| rng.random_range(0..=slack)).collect();
    extra.sort_unstable();
    Some(extra.iter().enumerate().map(|(t, e)| lo + gap * t as i64 + e).collect())
}

/// Random piecewise-linear profile with values in `[0, max_value]`.
///
/// Corners are at least three samples apart and from either end, and every
/// slope change is at least `2e-5 * max_value`.
pub fn gen_profile_1d(spec: &GenSpec1D) -> Result<GeneratedProfile> {
    let GenSpec1D {
        n,
        num_corners: k,
        max_value,
        seed,
    } = *spec;
    if !(max_value > 0.0) || !max_value.is_finite() {
        return Err(Error::Parameter("max_value must be positive".into()));
    }
    if n < 3 || n - 1 < MIN_GAP * (k + 1) {
        return Err(Error::Parameter(format!(
            "{k} corners need n >= {}, got {n}",
            MIN_GAP * (k + 1) + 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = MIN_GAP as i64;
    let inner = spaced(&mut rng, k, gap, n as i64 - 1 - gap, gap).expect("checked above");
    let mut knots: Vec<usize> = vec![0];
    knots.extend(inner.iter().map(|&c| c as usize));
    knots.push(n - 1);

    let mut vals = vec![rng.random_range(0.0..=max_value), rng.random_range(0.0..=max_value)];
    let slope = |x0: usize, v0: f64, x1: usize, v1: f64| (v1 - v0) / (x1 - x0) as f64;
    for t in 2..knots.len() {
        let prev = slope(knots[t - 2], vals[t - 2], knots[t - 1], vals[t - 1]);
        let v = (0..MAX_DRAWS)
            .map(|_| rng.random_range(0.0..=max_value))
            .find(|&v| (slope(knots[t - 1], vals[t - 1], knots[t], v) - prev).abs() >= MIN_KINK * max_value)
            .ok_or_else(|| Error::Parameter("segments too long to place a detectable corner".into()))?;
        vals.push(v);
    }
    let mut z = vec![0.0; n];
    for (w, v) in knots.windows(2).zip(vals.windows(2)) {
        for (x, zx) in z.iter_mut().enumerate().take(w[1] + 1).skip(w[0]) {
            *zx = v[0] + (v[1] - v[0]) * (x - w[0]) as f64 / (w[1] - w[0]) as f64;
        }
    }
    Ok(GeneratedProfile {
        profile: Profile1D::new(z)?,
        corners: inner.iter().map(|&c| c as usize + 1).collect(),
    })
}

/// Random piecewise-planar image: a tilted plane plus `num_folds` parallel
/// hinge folds of one random orientation, at least three pixels apart,
/// rescaled into `[0.05, 0.95] * max_value`.
pub fn gen_depth_3d(spec: &GenSpec3D) -> Result<GeneratedImage> {
    let GenSpec3D {
        rows,
        cols,
        num_folds: k,
        max_value,
        seed,
    } = *spec;
    if !(max_value > 0.0) || !max_value.is_finite() {
        return Err(Error::Parameter("max_value must be positive".into()));
    }
    if rows < 3 || cols < 3 {
        return Err(Error::Parameter("images need at least 3x3 pixels".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orientation = [
        FoldOrientation::Horizontal,
        FoldOrientation::Vertical,
        FoldOrientation::Diagonal,
        FoldOrientation::AntiDiagonal,
    ][rng.random_range(0..4)];
    let (lo, hi) = orientation.offsets(rows, cols);
    let offsets = spaced(&mut rng, k, lo, hi, MIN_GAP as i64).ok_or_else(|| {
        Error::Parameter(format!("{k} folds spaced {MIN_GAP} apart do not fit a {rows}x{cols} image"))
    })?;
    let folds: Vec<Fold> = offsets
        .into_iter()
        .map(|offset| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Fold {
                orientation,
                offset,
                amplitude: sign * rng.random_range(0.5..1.5),
            }
        })
        .collect();
    let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let raw = DepthImage::from_fn(rows, cols, |i, j| {
        a * i as f64
            + b * j as f64
            + folds
                .iter()
                .map(|f| f.amplitude * (f.orientation.level(i, j) - f.offset).max(0) as f64)
                .sum::<f64>()
    })?;
    let (mn, mx) = raw
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    let image = if mx - mn > 1e-12 {
        let s = 0.9 * max_value / (mx - mn);
        DepthImage::from_column_major(
            rows,
            cols,
            raw.as_slice().iter().map(|v| 0.05 * max_value + s * (v - mn)).collect(),
        )?
    } else {
        DepthImage::from_fn(rows, cols, |_, _| 0.5 * max_value)?
    };

    let on_fold = |i: usize, j: usize| {
        folds.iter().any(|f| {
            f.orientation.level(i, j) == f.offset
                && ((f.orientation.bends_vertical() && i > 0 && i + 1 < rows)
                    || (f.orientation.bends_horizontal() && j > 0 && j + 1 < cols))
        })
    };
    let edges = (0..cols)
        .flat_map(|j| (0..rows).map(move |i| (i, j)))
        .filter(|&(i, j)| on_fold(i, j))
        .map(|(i, j)| (i + 1, j + 1))
        .collect();
    Ok(GeneratedImage { image, folds, edges })
}

/// Adds i.i.d. noise uniform in `[-epsilon, epsilon]`.
pub fn add_noise(z: &[f64], epsilon: f64, seed: u64) -> Result<Vec<f64>> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::Parameter(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    if epsilon == 0.0 {
        return Ok(z.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(z.iter().map(|v| v + rng.random_range(-epsilon..=epsilon)).collect())
}

/// Samples `truth` at `samples` with bounded noise, recording `epsilon`
/// as the measurement bound.
pub fn measure(truth: &[f64], samples: SampleSet, epsilon: f64, seed: u64) -> Result<Measurements<f64>> {
    if truth.len() != samples.shape().len() {
        return Err(Error::dim(samples.shape().len(), truth.len()));
    }
    let clean: Vec<f64> = samples.positions().iter().map(|&p| truth[p]).collect();
    Measurements::new(samples, add_noise(&clean, epsilon, seed)?, epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mean_l1: f64,
    pub linf: f64,
    pub mse: f64,
    /// `10 log10(peak^2 / mse)` with `peak = max |truth|`, capped.
    pub psnr: f64,
    pub data_rate_saving: f64,
}

pub fn metrics(estimate: &[f64], truth: &[f64], samples_sent: usize, total: usize) -> Result<MetricsReport> {
    if estimate.len() != truth.len() {
        return Err(Error::dim(truth.len(), estimate.len()));
    }
    if truth.is_empty() || total == 0 || samples_sent > total {
        return Err(Error::Parameter("need a nonempty signal and samples_sent <= total".into()));
    }
    let n = truth.len() as f64;
    let diffs = estimate.iter().zip(truth).map(|(e, t)| (e - t).abs());
    let (sum, sq, linf) = diffs.fold((0.0, 0.0, 0.0f64), |(s, q, m), d| (s + d, q + d * d, m.max(d)));
    let mse = sq / n;
    let peak = truth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let psnr = if mse > 0.0 && peak > 0.0 {
        (10.0 * (peak * peak / mse).log10()).clamp(0.0, PSNR_CAP)
    } else if mse == 0.0 {
        PSNR_CAP
    } else {
        0.0
    };
    Ok(MetricsReport {
        mean_l1: sum / n,
        linf,
        mse,
        psnr,
        data_rate_saving: 1.0 - samples_sent as f64 / total as f64,
    })
}
