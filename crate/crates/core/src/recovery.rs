//! Reconstruction pipelines built on the solver.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::analysis::{envelope_2d, twin_gaps};
use crate::error::{Error, Result};
use crate::interp;
use crate::model::{DepthImage, Measurements, Profile1D, SampleSet, Shape};
use crate::operators::{DiffOperator, DEFAULT_SPACING_GUARD};
use crate::scalar::linf;
use crate::solver::{merge_duplicates, nesta_solve, SolveResult, SolverConfig};

/// Which second-order operator the ℓ1 objective uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `D1` on profiles, `Delta` on images.
    L1,
    /// `Delta` plus the mixed-derivative kernel.
    L1diag,
    /// Spacing-aware kernels from per-pixel coordinates.
    L1cart {
        vertical: Vec<f64>,
        horizontal: Vec<f64>,
        guard: f64,
    },
}

impl Objective {
    pub fn cart(vertical: Vec<f64>, horizontal: Vec<f64>) -> Self {
        Objective::L1cart {
            vertical,
            horizontal,
            guard: DEFAULT_SPACING_GUARD,
        }
    }

    pub fn operator(&self, shape: Shape) -> Result<DiffOperator<f64>> {
        match (self, shape) {
            (Objective::L1, Shape::Line(n)) => DiffOperator::d1(n),
            (Objective::L1, Shape::Grid { rows, cols }) => DiffOperator::delta(rows, cols),
            (Objective::L1diag, Shape::Grid { rows, cols }) => DiffOperator::delta_diag(rows, cols),
            (
                Objective::L1cart {
                    vertical,
                    horizontal,
                    guard,
                },
                Shape::Grid { rows, cols },
            ) => DiffOperator::delta_cart(rows, cols, vertical, horizontal, *guard),
            (_, Shape::Line(_)) => Err(Error::Parameter("diag and cart objectives need an image domain".into())),
        }
    }
}

/// Solves the ℓ1 problem on the measurement domain with the chosen objective.
pub fn reconstruct(meas: &Measurements<f64>, objective: &Objective, cfg: &SolverConfig<f64>) -> Result<SolveResult<f64>> {
    let op = objective.operator(meas.samples().shape())?;
    nesta_solve(&op, meas, cfg)
}

/// Piecewise-linear (1D) or separable two-pass (2D) interpolation of the
/// samples, vectorized column-major for images.
pub fn naive_interpolation(meas: &Measurements<f64>) -> Result<Vec<f64>> {
    interp::naive(meas)
}

/// How one inter-sample gap was filled by [`algorithm1`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentChoice {
    /// One-based indices of the samples bracketing the gap.
    pub left: usize,
    pub right: usize,
    /// `-1` pushes the gap up, `+1` down, `0` keeps the chord.
    pub sign: i8,
    /// Zero sign although the first-stage solution bends inside the gap.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Algorithm1Output {
    pub profile: Profile1D<f64>,
    pub stage1: SolveResult<f64>,
    pub segments: Vec<SegmentChoice>,
}

impl Algorithm1Output {
    pub fn degenerate_count(&self) -> usize {
        self.segments.iter().filter(|s| s.degenerate).count()
    }
}

/// Two-stage 1D recovery from twin + boundary samples.
///
/// The first stage solves the ℓ1 problem. Each gap between twin pairs then
/// takes the extreme optimal profile in the direction given by the change
/// of slope across it: the upper envelope for concave gaps, the lower one
/// for convex gaps, and the chord when the slopes agree. For exact samples
/// this is the crossing of the two twin lines when it falls inside the gap.
pub fn algorithm1(meas: &Measurements<f64>, cfg: &SolverConfig<f64>) -> Result<Algorithm1Output> {
    let Shape::Line(n) = meas.samples().shape() else {
        return Err(Error::Pattern("algorithm 1 needs a 1D domain".into()));
    };
    let gaps = twin_gaps(meas.samples())?;
    let stage1 = reconstruct(meas, &Objective::L1, cfg)?;
    let env = envelope_2d(meas)?;
    let z1 = &stage1.z_star;
    let pos = meas.samples().positions();
    let y = meas.values();
    let tol = 1e-9 * linf(z1).max(1.0);

    let mut z = z1.clone();
    for (k, &p) in pos.iter().enumerate() {
        z[p] = y[k];
    }
    let mut segments = Vec::with_capacity(gaps.len());
    for g in gaps {
        let (a, b) = (pos[g.left], pos[g.right]);
        let sign = match (g.left_outer, g.right_outer) {
            (Some(lo), Some(ro)) => {
                let diff = (z1[pos[ro]] - z1[b]) - (z1[a] - z1[pos[lo]]);
                if diff > tol {
                    1
                } else if diff < -tol {
                    -1
                } else {
                    0
                }
            }
            _ => 0,
        };
        let chord = |p: usize| y[g.left] + (y[g.right] - y[g.left]) * (p - a) as f64 / (b - a) as f64;
        let mut degenerate = false;
        for p in a + 1..b {
            z[p] = match sign {
                -1 => env.upper[p],
                1 => env.lower[p],
                _ => {
                    degenerate |= (z1[p] - chord(p)).abs() > 1e3 * tol.max(cfg.tau);
                    chord(p)
                }
            };
        }
        segments.push(SegmentChoice {
            left: a + 1,
            right: b + 1,
            sign,
            degenerate,
        });
    }
    debug_assert_eq!(z.len(), n);
    Ok(Algorithm1Output {
        profile: Profile1D::new(z)?,
        stage1,
        segments,
    })
}

/// Upsamples `low` by integer factors. Valid low-resolution pixels (all of
/// them when `valid` is `None`) become exact samples on the fine grid,
/// low pixel `(i, j)` landing on fine pixel `(i * fr, j * fc)`; the rest is
/// filled by the diagonal-kernel ℓ1 solve.
pub fn superresolve(
    low: &DepthImage<f64>,
    valid: Option<&SampleSet>,
    factor_r: usize,
    factor_c: usize,
    cfg: &SolverConfig<f64>,
) -> Result<DepthImage<f64>> {
    if factor_r == 0 || factor_c == 0 {
        return Err(Error::Parameter("super-resolution factors must be at least 1".into()));
    }
    let (r, c) = (low.rows(), low.cols());
    let pixels: Vec<usize> = match valid {
        Some(s) if s.shape() != low.shape() => return Err(Error::dim(r * c, s.shape().len())),
        Some(s) => s.positions().to_vec(),
        None => (0..r * c).collect(),
    };
    let (fr, fcols) = ((r - 1) * factor_r + 1, (c - 1) * factor_c + 1);
    let fine = |p: usize| (p / r) * factor_c * fr + (p % r) * factor_r;
    let shape = Shape::Grid { rows: fr, cols: fcols };
    let samples = SampleSet::from_positions(shape, pixels.iter().map(|&p| fine(p)).collect())?;
    let mut values = vec![0.0; samples.len()];
    for &p in &pixels {
        let k = samples.positions().binary_search(&fine(p)).expect("placed above");
        values[k] = low.as_slice()[p];
    }
    let meas = Measurements::new(samples, values, 0.0)?;
    if meas.samples().len() == fr * fcols {
        return DepthImage::from_column_major(fr, fcols, meas.scatter());
    }
    let res = reconstruct(&meas, &Objective::L1diag, cfg)?;
    DepthImage::from_column_major(fr, fcols, res.z_star)
}

/// Rigid transform from a past camera frame into the current one:
/// `P' = R P + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl Pose {
    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        let r = Matrix3::from_fn(|i, j| rotation[i][j]);
        let defect = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(defect <= 1e-9) {
            return Err(Error::Parameter(format!("rotation is not orthonormal (defect {defect:e})")));
        }
        if (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter("rotation must have determinant +1".into()));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::Parameter("translation must be finite".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn translation(t: [f64; 3]) -> Result<Self> {
        Self::new(Self::identity().rotation, t)
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        self.rotation
    }

    pub fn offset(&self) -> [f64; 3] {
        self.translation
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = Matrix3::from_fn(|i, j| self.rotation[i][j]);
        let q = r * Vector3::from(p) + Vector3::from(self.translation);
        [q.x, q.y, q.z]
    }
}

/// Pinhole intrinsics; pixel `u` runs along columns and `v` down rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::Parameter("focal lengths must be positive".into()));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::Parameter("principal point must be finite".into()));
        }
        Ok(())
    }

    pub fn back_project(&self, row: f64, col: f64, depth: f64) -> [f64; 3] {
        [(col - self.cx) * depth / self.fx, (row - self.cy) * depth / self.fy, depth]
    }

    /// Pixel `(row, col)` of a camera-frame point in front of the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        (p[2] > 0.0).then(|| (self.fy * p[1] / p[2] + self.cy, self.fx * p[0] / p[2] + self.cx))
    }
}

/// Merges samples from the current frame (index 0) and up to `horizon - 1`
/// past frames into one measurement set on the current pixel grid.
///
/// `poses[a]` maps frame `a` into the current camera. A sample of age `a`
/// gets the bound `schedule[a]`, or the last schedule entry when the list
/// is shorter. Points behind the camera or outside the frame are dropped
/// and coincident pixels are merged by interval intersection.
pub fn multiframe_accumulate(
    frames: &[Measurements<f64>],
    poses: &[Pose],
    intrinsics: &CameraIntrinsics,
    horizon: usize,
    schedule: &[f64],
) -> Result<Measurements<f64>> {
    intrinsics.validate()?;
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    if frames.is_empty() {
        return Err(Error::Arity { needed: 1, got: 0 });
    }
    if poses.len() != frames.len() {
        return Err(Error::dim(frames.len(), poses.len()));
    }
    if schedule.is_empty() || schedule.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(Error::Parameter("noise schedule must be nonempty and nonnegative".into()));
    }
    let shape = frames[0].samples().shape();
    let (rows, cols) = shape
        .grid()
        .ok_or_else(|| Error::Parameter("multi-frame accumulation needs image frames".into()))?;
    let mut obs = Vec::new();
    for (age, (frame, pose)) in frames.iter().zip(poses).take(horizon).enumerate() {
        if frame.samples().shape() != shape {
            return Err(Error::dim(shape.len(), frame.samples().shape().len()));
        }
        let eps = schedule[age.min(schedule.len() - 1)];
        for (&p, &d) in frame.samples().positions().iter().zip(frame.values()) {
            let (i, j) = ((p % rows) as f64, (p / rows) as f64);
            let q = pose.apply(intrinsics.back_project(i, j, d));
            let Some((v, u)) = intrinsics.project(q) else { continue };
            let (v, u) = (v.round(), u.round());
            if v < 0.0 || u < 0.0 || v >= rows as f64 || u >= cols as f64 {
                continue;
            }
            obs.push((u as usize * rows + v as usize, q[2], eps));
        }
    }
    if obs.is_empty() {
        return Err(Error::Arity { needed: 1, got: 0 });
    }
    merge_duplicates(shape, &obs)
}
