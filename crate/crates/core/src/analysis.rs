//! Recovery guarantees and a-posteriori checks.
//!
//! Everything here is `f64`. Positions returned to callers are one-based,
//! matching [`SampleSet::from_indices`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DepthImage, Measurements, Profile1D, SampleSet, Shape};
use crate::operators::{DiffOperator, OperatorKind};
use crate::scalar::linf;

const CER_CAP_1D: usize = 2000;
const CER_CAP_2D: usize = 4000;
const CERT_CAP: usize = 1000;
const CERT_ITERATIONS: usize = 5000;
const RANK_CUTOFF: f64 = 1e-10;

/// Curvature magnitude below which a second difference counts as zero:
/// `1e-6 * max(1, ||z||_inf)`.
pub fn default_curvature_tol(z: &[f64]) -> f64 {
    1e-6 * linf(z).max(1.0)
}

/// Interior indices (one-based) where the profile bends.
pub fn corner_set(z: &Profile1D<f64>, tol: f64) -> Vec<usize> {
    z.values()
        .windows(3)
        .enumerate()
        .filter(|(_, w)| (w[0] - 2.0 * w[1] + w[2]).abs() > tol)
        .map(|(k, _)| k + 2)
        .collect()
}

/// Pixels (one-based, column-major order) whose vertical or horizontal
/// second difference exceeds `tol`.
pub fn edge_set(z: &DepthImage<f64>, tol: f64) -> Vec<(usize, usize)> {
    edge_mask(z, tol)
        .iter()
        .enumerate()
        .filter(|(_, e)| **e)
        .map(|(p, _)| (p % z.rows() + 1, p / z.rows() + 1))
        .collect()
}

pub(crate) fn edge_mask(z: &DepthImage<f64>, tol: f64) -> Vec<bool> {
    let (r, c) = (z.rows(), z.cols());
    let mut mask = vec![false; r * c];
    for j in 0..c {
        for i in 0..r {
            let v = i > 0 && i + 1 < r && (z.get(i - 1, j) - 2.0 * z.get(i, j) + z.get(i + 1, j)).abs() > tol;
            let h = j > 0 && j + 1 < c && (z.get(i, j - 1) - 2.0 * z.get(i, j) + z.get(i, j + 1)).abs() > tol;
            mask[j * r + i] = v || h;
        }
    }
    mask
}

/// Split of the operator rows into support `I` (nonzero rows of `Op z`)
/// and cosupport `J`. Row indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportPartition {
    rows: usize,
    support: Vec<usize>,
    cosupport: Vec<usize>,
}

impl SupportPartition {
    pub fn from_response(v: &[f64], tol: f64) -> Self {
        let (support, cosupport) = (0..v.len()).partition(|&q| v[q].abs() > tol);
        Self {
            rows: v.len(),
            support,
            cosupport,
        }
    }

    pub fn of(op: &DiffOperator<f64>, z: &[f64], tol: f64) -> Result<Self> {
        Ok(Self::from_response(&op.apply(z)?, tol))
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn cosupport(&self) -> &[usize] {
        &self.cosupport
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra] = rb;
        }
    }
}

/// `|| pinv([Op^T]_{M̄,J}) [Op^T]_{M̄,I} ||_inf` (largest row ℓ1 norm).
///
/// `[Op^T]_{M̄,J}` is block diagonal after permutation: unsampled pixels and
/// cosupport rows split into connected components through the stencils.
/// The pseudoinverse is assembled block by block, and blocks that receive
/// no support contribution are skipped.
pub fn exact_recovery_constant(op: &DiffOperator<f64>, samples: &SampleSet, supp: &SupportPartition) -> Result<f64> {
    let n = op.input_len();
    if samples.shape().len() != n {
        return Err(Error::dim(n, samples.shape().len()));
    }
    if supp.rows() != op.output_len() {
        return Err(Error::dim(op.output_len(), supp.rows()));
    }
    let cap = if op.kind() == OperatorKind::D1 { CER_CAP_1D } else { CER_CAP_2D };
    if n > cap {
        return Err(Error::TooLarge { size: n, cap });
    }
    let sampled = samples.mask();
    let unsampled: Vec<usize> = (0..n).filter(|&p| !sampled[p]).collect();
    if unsampled.is_empty() {
        return Ok(0.0);
    }
    let mut local = vec![usize::MAX; n];
    for (k, &p) in unsampled.iter().enumerate() {
        local[p] = k;
    }
    let nm = unsampled.len();
    let nj = supp.cosupport().len();

    // components over nodes [0, nm) pixels and [nm, nm + nj) cosupport rows
    let mut uf = UnionFind::new(nm + nj);
    for (jk, &q) in supp.cosupport().iter().enumerate() {
        for (p, w) in op.row(q).iter() {
            if w != 0.0 && local[p] != usize::MAX {
                uf.union(local[p], nm + jk);
            }
        }
    }

    // support contribution per unsampled pixel: list of (support column, weight)
    let ni = supp.support().len();
    let mut support_hits: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nm];
    for (ik, &q) in supp.support().iter().enumerate() {
        for (p, w) in op.row(q).iter() {
            if w != 0.0 && local[p] != usize::MAX {
                support_hits[local[p]].push((ik, w));
            }
        }
    }

    let mut comp_pixels: std::collections::HashMap<usize, Vec<usize>> = Default::default();
    let mut comp_rows: std::collections::HashMap<usize, Vec<usize>> = Default::default();
    for k in 0..nm {
        let root = uf.find(k);
        comp_pixels.entry(root).or_default().push(k);
    }
    for jk in 0..nj {
        let root = uf.find(nm + jk);
        comp_rows.entry(root).or_default().push(jk);
    }

    let mut best = 0.0f64;
    let mut roots: Vec<usize> = comp_pixels.keys().copied().collect();
    roots.sort_unstable();
    for root in roots {
        let pixels = &comp_pixels[&root];
        if pixels.iter().all(|&k| support_hits[k].is_empty()) {
            continue;
        }
        let Some(rows) = comp_rows.get(&root) else {
            // pixels untouched by any cosupport row: the block is empty and
            // its pseudoinverse contributes nothing
            continue;
        };
        let mut prow = vec![usize::MAX; n];
        for (a, &k) in pixels.iter().enumerate() {
            prow[unsampled[k]] = a;
        }
        let mut b = DMatrix::<f64>::zeros(pixels.len(), rows.len());
        for (col, &jk) in rows.iter().enumerate() {
            for (p, w) in op.row(supp.cosupport()[jk]).iter() {
                if prow[p] != usize::MAX {
                    b[(prow[p], col)] += w;
                }
            }
        }
        let mut rhs = DMatrix::<f64>::zeros(pixels.len(), ni);
        for (a, &k) in pixels.iter().enumerate() {
            for &(ik, w) in &support_hits[k] {
                rhs[(a, ik)] += w;
            }
        }
        let svd = b.svd(true, true);
        let smax = svd.singular_values.max();
        let pinv = svd
            .pseudo_inverse(RANK_CUTOFF * smax.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::Numeric(e.to_string()))?;
        let prod = pinv * rhs;
        for r in 0..prod.nrows() {
            best = best.max(prod.row(r).iter().map(|v| v.abs()).sum());
        }
    }
    Ok(best)
}

/// Hypothesis under which sign consistency is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignMode {
    /// 1D profile with twin samples and both endpoints.
    TwoD,
    /// Image with a grid sample set.
    Grid,
}

/// A maximal rectangle of unsampled pixels (zero-based, half-open ranges).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub rows: std::ops::Range<usize>,
    pub cols: std::ops::Range<usize>,
}

/// Non-sampled patches of a grid sample set.
///
/// Each 4-connected component of unsampled pixels must be a rectangle
/// framed by two sampled rows above and below and two sampled columns
/// left and right.
pub fn grid_patches(samples: &SampleSet) -> Result<Vec<Patch>> {
    let Some((r, c)) = samples.shape().grid() else {
        return Err(Error::Pattern("grid sampling requires an image domain".into()));
    };
    let sampled = samples.mask();
    let mut seen = sampled.clone();
    let mut patches = Vec::new();
    for start in 0..r * c {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let (mut i0, mut i1, mut j0, mut j1) = (r, 0, c, 0);
        let mut count = 0usize;
        while let Some(p) = stack.pop() {
            count += 1;
            let (i, j) = (p % r, p / r);
            i0 = i0.min(i);
            i1 = i1.max(i);
            j0 = j0.min(j);
            j1 = j1.max(j);
            let mut push = |q: usize| {
                if !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if i > 0 {
                push(p - 1);
            }
            if i + 1 < r {
                push(p + 1);
            }
            if j > 0 {
                push(p - r);
            }
            if j + 1 < c {
                push(p + r);
            }
        }
        if count != (i1 - i0 + 1) * (j1 - j0 + 1) {
            return Err(Error::Pattern(format!(
                "non-sampled region at ({}, {}) is not rectangular",
                i0 + 1,
                j0 + 1
            )));
        }
        let framed_rows = i0 >= 2
            && i1 + 2 < r
            && [i0 - 2, i0 - 1, i1 + 1, i1 + 2]
                .iter()
                .all(|&i| (j0..=j1).all(|j| sampled[j * r + i]));
        let framed_cols = j0 >= 2
            && j1 + 2 < c
            && [j0 - 2, j0 - 1, j1 + 1, j1 + 2]
                .iter()
                .all(|&j| (i0..=i1).all(|i| sampled[j * r + i]));
        if !framed_rows || !framed_cols {
            return Err(Error::Pattern(format!(
                "non-sampled patch at ({}, {}) is not framed by sampled row and column pairs",
                i0 + 1,
                j0 + 1
            )));
        }
        patches.push(Patch {
            rows: i0..i1 + 1,
            cols: j0..j1 + 1,
        });
    }
    Ok(patches)
}

/// Gap between two consecutive samples in a twin + boundary pattern.
/// Fields are zero-based ordinals into the sorted sample list.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Gap {
    /// Sample before `left` when it is its twin.
    pub left_outer: Option<usize>,
    pub left: usize,
    pub right: usize,
    pub right_outer: Option<usize>,
}

/// Validates the twin + boundary pattern on a 1D sample set and lists the
/// gaps between consecutive samples.
pub(crate) fn twin_gaps(samples: &SampleSet) -> Result<Vec<Gap>> {
    let Shape::Line(n) = samples.shape() else {
        return Err(Error::Pattern("twin sampling requires a 1D domain".into()));
    };
    let pos = samples.positions();
    if pos[0] != 0 || pos[pos.len() - 1] != n - 1 {
        return Err(Error::Pattern("both endpoints must be sampled".into()));
    }
    let m = pos.len();
    let paired = |k: usize| (k > 0 && pos[k - 1] + 1 == pos[k]) || (k + 1 < m && pos[k] + 1 == pos[k + 1]);
    for (k, &p) in pos.iter().enumerate() {
        if !paired(k) && p != 0 && p != n - 1 {
            return Err(Error::Pattern(format!("sample {} has no twin", p + 1)));
        }
    }
    Ok((0..m.saturating_sub(1))
        .filter(|&k| pos[k + 1] > pos[k] + 1)
        .map(|k| Gap {
            left_outer: (k > 0 && pos[k - 1] + 1 == pos[k]).then(|| k - 1),
            left: k,
            right: k + 1,
            right_outer: (k + 2 < m && pos[k + 1] + 1 == pos[k + 2]).then_some(k + 2),
        })
        .collect())
}

fn sign_of(v: f64, tol: f64) -> i8 {
    if v > tol {
        1
    } else if v < -tol {
        -1
    } else {
        0
    }
}

fn uniform_sign(signs: impl Iterator<Item = i8>) -> bool {
    let mut seen = 0i8;
    for s in signs.filter(|s| *s != 0) {
        if seen == 0 {
            seen = s;
        } else if s != seen {
            return false;
        }
    }
    true
}

/// Whether curvature signs are consistent with the sample pattern.
///
/// `TwoD`: between consecutive samples `i < j` the nonzero curvatures on
/// `[i, j]` share a sign, or all curvatures strictly inside vanish.
/// `Grid`: in each non-sampled patch, the vertical second differences
/// centered in the patch share a sign, and so do the horizontal ones.
pub fn sign_consistent(z: &[f64], samples: &SampleSet, mode: SignMode, tol: Option<f64>) -> Result<bool> {
    let n = samples.shape().len();
    if z.len() != n {
        return Err(Error::dim(n, z.len()));
    }
    let tol = tol.unwrap_or_else(|| default_curvature_tol(z));
    match mode {
        SignMode::TwoD => {
            let gaps = twin_gaps(samples)?;
            let pos = samples.positions();
            let curv = |k: usize| {
                if k == 0 || k + 1 >= n {
                    0
                } else {
                    sign_of(z[k - 1] - 2.0 * z[k] + z[k + 1], tol)
                }
            };
            Ok(gaps.iter().all(|g| {
                let (a, b) = (pos[g.left], pos[g.right]);
                uniform_sign((a..=b).map(curv)) || (a + 1..b).all(|k| curv(k) == 0)
            }))
        }
        SignMode::Grid => {
            let (r, _) = samples
                .shape()
                .grid()
                .ok_or_else(|| Error::Pattern("grid sampling requires an image domain".into()))?;
            let at = |i: usize, j: usize| z[j * r + i];
            for patch in grid_patches(samples)? {
                let cells = || patch.cols.clone().flat_map(|j| patch.rows.clone().map(move |i| (i, j)));
                let vert = cells().map(|(i, j)| sign_of(at(i - 1, j) - 2.0 * at(i, j) + at(i + 1, j), tol));
                let horiz = cells().map(|(i, j)| sign_of(at(i, j - 1) - 2.0 * at(i, j) + at(i, j + 1), tol));
                if !uniform_sign(vert) || !uniform_sign(horiz) {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

/// Point-wise bounds `lower <= z <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Envelope {
    pub fn width(&self) -> Vec<f64> {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect()
    }

    /// Whether `lower - slack <= z <= upper + slack` everywhere.
    pub fn contains(&self, z: &[f64], slack: f64) -> bool {
        z.len() == self.lower.len()
            && z.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - slack && *v <= u + slack)
    }
}

#[inline]
fn line_at(x1: f64, y1: f64, x2: f64, y2: f64, x: f64) -> f64 {
    y1 + (y2 - y1) * (x - x1) / (x2 - x1)
}

/// Envelope of every sign-consistent profile compatible with twin +
/// boundary measurements.
///
/// Inside a gap with twins `(i, i+1)` and `(j, j+1)`, the upper bound is
/// the larger of the chord through the upper interval ends at `i+1` and
/// `j`, and the lower of the steepest extensions of the two twin pairs.
/// Those extensions only beat the chord when they cross inside the gap.
/// The lower bound mirrors this. A twin missing at an endpoint removes
/// its extension.
pub fn envelope_2d(meas: &Measurements<f64>) -> Result<Envelope> {
    let n = meas.samples().shape().len();
    let gaps = twin_gaps(meas.samples())?;
    let pos = meas.samples().positions();
    let y = meas.values();
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for (k, &p) in pos.iter().enumerate() {
        lower[p] = y[k] - meas.eps_at(k);
        upper[p] = y[k] + meas.eps_at(k);
    }
    let x = |k: usize| pos[k] as f64;
    for g in gaps {
        let (a, b) = (g.left, g.right);
        let (ea, eb) = (meas.eps_at(a), meas.eps_at(b));
        for p in pos[a] + 1..pos[b] {
            let xp = p as f64;
            let (mut up, mut down) = (f64::INFINITY, f64::NEG_INFINITY);
            if let Some(o) = g.left_outer {
                let eo = meas.eps_at(o);
                // (1) steepest rise, (2) shallowest rise out of the left twin
                up = up.min(line_at(x(o), y[o] - eo, x(a), y[a] + ea, xp));
                down = down.max(line_at(x(o), y[o] + eo, x(a), y[a] - ea, xp));
            }
            if let Some(o) = g.right_outer {
                let eo = meas.eps_at(o);
                // (3) and (4) out of the right twin
                up = up.min(line_at(x(o), y[o] - eo, x(b), y[b] + eb, xp));
                down = down.max(line_at(x(o), y[o] + eo, x(b), y[b] - eb, xp));
            }
            // (5) upper chord, (6) lower chord
            let chord_up = line_at(x(a), y[a] + ea, x(b), y[b] + eb, xp);
            let chord_down = line_at(x(a), y[a] - ea, x(b), y[b] - eb, xp);
            upper[p] = if up.is_finite() { up.max(chord_up) } else { chord_up };
            lower[p] = if down.is_finite() { down.min(chord_down) } else { chord_down };
        }
    }
    Ok(Envelope { lower, upper })
}

/// Largest vertical offset between a gap-bracketing sample and the truth
/// corner nearest to it inside that gap, i.e. `d cos(theta)` with `d` the
/// sample-to-corner distance and `theta` the angle of the connecting line
/// to the vertical. Zero when no gap contains a corner.
pub fn recovery_error_bound_2d(truth: &Profile1D<f64>, samples: &SampleSet) -> Result<f64> {
    let z = truth.values();
    if samples.shape() != Shape::Line(z.len()) {
        return Err(Error::dim(z.len(), samples.shape().len()));
    }
    let tol = 1e-9 * linf(z).max(1.0);
    let corners: Vec<usize> = corner_set(truth, tol).iter().map(|c| c - 1).collect();
    let pos = samples.positions();
    let mut bound = 0.0f64;
    for w in pos.windows(2) {
        let (a, b) = (w[0], w[1]);
        let inside: Vec<usize> = corners.iter().copied().filter(|&c| c > a && c < b).collect();
        if inside.is_empty() {
            continue;
        }
        for s in [a, b] {
            let nearest = inside
                .iter()
                .copied()
                .min_by(|&c1, &c2| {
                    let d = |c: usize| (c as f64 - s as f64).hypot(z[c] - z[s]);
                    d(c1).total_cmp(&d(c2))
                })
                .expect("nonempty");
            bound = bound.max((z[nearest] - z[s]).abs());
        }
    }
    Ok(bound)
}

fn row_measurements(meas: &Measurements<f64>, rows: usize, cols: usize, i: usize) -> Result<Measurements<f64>> {
    let mut idx = Vec::new();
    let mut vals = Vec::new();
    let mut eps = Vec::new();
    for (k, &p) in meas.samples().positions().iter().enumerate() {
        if p % rows == i {
            idx.push(p / rows);
            vals.push(meas.values()[k]);
            eps.push(meas.eps_at(k));
        }
    }
    Measurements::with_bounds(SampleSet::from_positions(Shape::Line(cols), idx)?, vals, eps)
}

/// Row-wise envelope of a grid-sampled image and the per-pixel bound
/// `max(|lower - z*|, |upper - z*|)`.
pub fn envelope_bound_3d(meas: &Measurements<f64>, z_star: &DepthImage<f64>) -> Result<DepthImage<f64>> {
    let (r, c) = (z_star.rows(), z_star.cols());
    if meas.samples().shape() != z_star.shape() {
        return Err(Error::dim(r * c, meas.samples().shape().len()));
    }
    grid_patches(meas.samples())?;
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let env = envelope_2d(&row_measurements(meas, r, c, i)?)?;
        for j in 0..c {
            let z = z_star.get(i, j);
            out[j * r + i] = (env.lower[j] - z).abs().max((env.upper[j] - z).abs());
        }
    }
    DepthImage::from_column_major(r, c, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateStatus {
    Certified,
    /// No dual vector was found within the iteration cap. This does not
    /// prove the profile suboptimal.
    NotFound,
}

/// Largest violation of each optimality condition at the returned `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateResiduals {
    /// `[Op^T u]` on unsampled and inactive sampled coordinates.
    pub equality: f64,
    /// `max(|u| - 1, 0)`.
    pub bound: f64,
    /// Sign violations of `[Op^T u]` on active sampled coordinates.
    pub sign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub status: CertificateStatus,
    pub u: Option<Vec<f64>>,
    pub residuals: CertificateResiduals,
    pub iterations: usize,
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        self.status == CertificateStatus::Certified
    }
}

/// Searches for a dual vector proving that `z` minimizes `||Op z||_1`
/// over the measurement box.
///
/// With `u_I = sign(Op z)_I` fixed, alternates projections onto the affine
/// set `[Op^T u] = 0` (unsampled coordinates, plus inactive samples when
/// `eps > 0`), the half-spaces `[Op^T u] >= 0` (`<= 0`) at samples sitting
/// on their lower (upper) bound, and the box `|u| <= 1`.
pub fn optimality_certificate(
    op: &DiffOperator<f64>,
    meas: &Measurements<f64>,
    z: &[f64],
    tol: f64,
) -> Result<Certificate> {
    let n = op.input_len();
    if meas.samples().shape().len() != n || z.len() != n {
        return Err(Error::dim(n, z.len()));
    }
    if n > CERT_CAP {
        return Err(Error::TooLarge { size: n, cap: CERT_CAP });
    }
    let violation = meas.feasibility_violation(z);
    if violation > tol {
        return Err(Error::NotFeasible { violation });
    }
    let p = op.output_len();
    let v = op.apply(z)?;
    let supp = SupportPartition::from_response(&v, default_curvature_tol(z));

    // coordinates whose gradient entry must vanish, and signed active ones
    let mut equal_rows: Vec<usize> = meas.samples().complement();
    let mut lower_hit = Vec::new();
    let mut upper_hit = Vec::new();
    if meas.epsilon() > 0.0 {
        for (k, &pz) in meas.samples().positions().iter().enumerate() {
            let e = meas.eps_at(k);
            let d = meas.values()[k] - z[pz];
            if e > 0.0 && d >= e - tol {
                lower_hit.push(pz);
            } else if e > 0.0 && d <= -e + tol {
                upper_hit.push(pz);
            } else if e > 0.0 {
                equal_rows.push(pz);
            }
        }
    }

    // dense Op^T restricted to the free columns J, and the fixed part from I
    let dense_t = |rows: &[usize]| -> (DMatrix<f64>, Vec<f64>) {
        let mut local = vec![usize::MAX; n];
        for (a, &q) in rows.iter().enumerate() {
            local[q] = a;
        }
        let mut b = DMatrix::zeros(rows.len(), supp.cosupport().len());
        let mut fixed = vec![0.0; rows.len()];
        for (col, &q) in supp.cosupport().iter().enumerate() {
            for (px, w) in op.row(q).iter() {
                if local[px] != usize::MAX {
                    b[(local[px], col)] += w;
                }
            }
        }
        for &q in supp.support() {
            let s = v[q].signum();
            for (px, w) in op.row(q).iter() {
                if local[px] != usize::MAX {
                    fixed[local[px]] += s * w;
                }
            }
        }
        (b, fixed)
    };
    let (b_eq, c_eq) = dense_t(&equal_rows);
    let (b_lo, c_lo) = dense_t(&lower_hit);
    let (b_up, c_up) = dense_t(&upper_hit);
    let pinv = if b_eq.nrows() > 0 && b_eq.ncols() > 0 {
        let svd = b_eq.clone().svd(true, true);
        let smax = svd.singular_values.max();
        Some(
            svd.pseudo_inverse(RANK_CUTOFF * smax.max(f64::MIN_POSITIVE))
                .map_err(|e| Error::Numeric(e.to_string()))?,
        )
    } else {
        None
    };

    let nj = supp.cosupport().len();
    let mut uj = nalgebra::DVector::<f64>::zeros(nj);
    let c_eq = nalgebra::DVector::from_vec(c_eq);
    let residuals = |uj: &nalgebra::DVector<f64>| -> CertificateResiduals {
        let eq = if b_eq.nrows() > 0 {
            (&b_eq * uj + &c_eq).amax()
        } else {
            0.0
        };
        let bound = uj.iter().map(|x| (x.abs() - 1.0).max(0.0)).fold(0.0, f64::max);
        let mut sign = 0.0f64;
        for (a, c) in c_lo.iter().enumerate() {
            sign = sign.max(-(b_lo.row(a).dot(&uj.transpose()) + c));
        }
        for (a, c) in c_up.iter().enumerate() {
            sign = sign.max(b_up.row(a).dot(&uj.transpose()) + c);
        }
        CertificateResiduals {
            equality: eq,
            bound,
            sign: sign.max(0.0),
        }
    };
    let done = |r: &CertificateResiduals| r.equality < tol && r.bound < tol && r.sign < tol;

    let mut res = residuals(&uj);
    let mut iterations = 0;
    while !done(&res) && iterations < CERT_ITERATIONS {
        if let Some(pinv) = &pinv {
            let resid = &b_eq * &uj + &c_eq;
            uj -= pinv * resid;
        }
        for (bm, cm, dir) in [(&b_lo, &c_lo, 1.0), (&b_up, &c_up, -1.0)] {
            for (a, c) in cm.iter().enumerate() {
                let row = bm.row(a).transpose();
                let val = dir * (row.dot(&uj) + c);
                let nrm2 = row.norm_squared();
                if val < 0.0 && nrm2 > 0.0 {
                    uj -= row * (dir * val / nrm2);
                }
            }
        }
        uj.iter_mut().for_each(|x| *x = x.clamp(-1.0, 1.0));
        iterations += 1;
        res = residuals(&uj);
    }

    let status = if done(&res) {
        CertificateStatus::Certified
    } else {
        CertificateStatus::NotFound
    };
    let u = (status == CertificateStatus::Certified).then(|| {
        let mut u = vec![0.0; p];
        for &q in supp.support() {
            u[q] = v[q].signum();
        }
        for (col, &q) in supp.cosupport().iter().enumerate() {
            u[q] = uj[col];
        }
        u
    });
    Ok(Certificate {
        status,
        u,
        residuals: res,
        iterations,
    })
}

/// Closed-form inverse of the `n x n` tridiagonal Toeplitz matrix with
/// `-2` on the diagonal and `1` off it:
/// `inv[i][j] = -i (n - j + 1) / (n + 1)` for one-based `i <= j`, symmetric.
pub fn tridiagonal_inverse(n: usize) -> Vec<Vec<f64>> {
    let nf = (n + 1) as f64;
    (1..=n)
        .map(|i| {
            (1..=n)
                .map(|j| {
                    let (a, b) = (i.min(j), i.max(j));
                    -(a as f64) * ((n - b + 1) as f64) / nf
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn profile(v: &[f64]) -> Profile1D<f64> {
        Profile1D::new(v.to_vec()).unwrap()
    }

    fn tent(n: usize, peak: usize, h: f64) -> Vec<f64> {
        (1..=n)
            .map(|k| {
                if k <= peak {
                    h * (k - 1) as f64 / (peak - 1) as f64
                } else {
                    h * (n - k) as f64 / (n - peak) as f64
                }
            })
            .collect()
    }

    #[test]
    fn corners_of_simple_profiles() {
        assert_eq!(corner_set(&profile(&[0.0, 1.0, 2.0, 1.0, 0.0]), 1e-9), vec![3]);
        assert!(corner_set(&profile(&[1.0, 2.0, 3.0, 4.0]), 1e-9).is_empty());
    }

    #[test]
    fn edges_of_a_spike() {
        let z = DepthImage::from_fn(5, 5, |i, j| if (i, j) == (2, 2) { 1.0 } else { 0.0 }).unwrap();
        let mut e = edge_set(&z, 1e-9);
        e.sort();
        assert_eq!(e, vec![(2, 3), (3, 2), (3, 3), (3, 4), (4, 3)]);
        let plane = DepthImage::from_fn(5, 6, |i, j| 0.3 * i as f64 - j as f64).unwrap();
        assert!(edge_set(&plane, 1e-9).is_empty());
    }

    #[test]
    fn cer_for_one_corner() {
        let n = 21;
        let z = tent(n, 9, 4.0);
        let op = DiffOperator::d1(n).unwrap();
        let supp = SupportPartition::of(&op, &z, 1e-9).unwrap();
        assert_eq!(supp.support(), &[7]);
        let nb = SampleSet::from_indices(Shape::Line(n), [8, 9, 10]).unwrap();
        assert_abs_diff_eq!(exact_recovery_constant(&op, &nb, &supp).unwrap(), 0.0, epsilon = 1e-12);
        // a single corner only has end blocks: the longer one (11 free
        // entries) gives 11/12
        let ends = SampleSet::from_indices(Shape::Line(n), [1, 9, n]).unwrap();
        assert_abs_diff_eq!(exact_recovery_constant(&op, &ends, &supp).unwrap(), 11.0 / 12.0, epsilon = 1e-9);
    }

    #[test]
    fn cer_is_one_between_two_sampled_corners() {
        let n = 21;
        let z: Vec<f64> = (1..=n).map(|k| (k as f64 - 6.0).abs() + (k as f64 - 14.0).abs() * 0.5).collect();
        let op = DiffOperator::d1(n).unwrap();
        let supp = SupportPartition::of(&op, &z, 1e-9).unwrap();
        assert_eq!(corner_set(&profile(&z), 1e-9), vec![6, 14]);
        let s = SampleSet::from_indices(Shape::Line(n), [1, 6, 14, n]).unwrap();
        assert_abs_diff_eq!(exact_recovery_constant(&op, &s, &supp).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn cer_with_ends_matches_dense_oracle() {
        let n = 30;
        let mut z = tent(n, 11, 2.0);
        z.iter_mut().enumerate().for_each(|(k, v)| {
            if k >= 20 {
                *v += 0.5 * (k - 19) as f64
            }
        });
        let op = DiffOperator::d1(n).unwrap();
        let supp = SupportPartition::of(&op, &z, 1e-9).unwrap();
        let corners: Vec<usize> = corner_set(&profile(&z), 1e-9);
        let mut idx = corners.clone();
        idx.extend([1, n]);
        let s = SampleSet::from_indices(Shape::Line(n), idx).unwrap();
        let fast = exact_recovery_constant(&op, &s, &supp).unwrap();
        // brute force with a single dense pseudoinverse
        let dense = op.to_dense().unwrap();
        let mbar = s.complement();
        let bj = DMatrix::from_fn(mbar.len(), supp.cosupport().len(), |a, b| dense[supp.cosupport()[b]][mbar[a]]);
        let bi = DMatrix::from_fn(mbar.len(), supp.support().len(), |a, b| dense[supp.support()[b]][mbar[a]]);
        let pinv = bj.clone().pseudo_inverse(1e-10 * bj.singular_values().max()).unwrap();
        let prod = pinv * bi;
        let slow = (0..prod.nrows())
            .map(|r| prod.row(r).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(fast, slow, epsilon = 1e-9);
    }

    #[test]
    fn cer_is_shift_invariant() {
        let n = 25;
        let z = tent(n, 12, 3.0);
        let shifted: Vec<f64> = z.iter().map(|v| v + 7.5).collect();
        let op = DiffOperator::d1(n).unwrap();
        let s = SampleSet::from_indices(Shape::Line(n), [1, 12, n]).unwrap();
        let a = exact_recovery_constant(&op, &s, &SupportPartition::of(&op, &z, 1e-9).unwrap()).unwrap();
        let b = exact_recovery_constant(&op, &s, &SupportPartition::of(&op, &shifted, 1e-9).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cer_refuses_large_problems() {
        let op = DiffOperator::<f64>::d1(2500).unwrap();
        let s = SampleSet::from_indices(Shape::Line(2500), [1]).unwrap();
        let supp = SupportPartition::from_response(&vec![0.0; 2498], 1e-9);
        assert!(matches!(exact_recovery_constant(&op, &s, &supp), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn sign_consistency_2d() {
        let s = SampleSet::from_indices(Shape::Line(9), [1, 2, 8, 9]).unwrap();
        let z = [0.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0, 0.0];
        assert!(sign_consistent(&z, &s, SignMode::TwoD, None).unwrap());
        // + then - curvature strictly inside the gap
        let w = [0.0, 1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 4.0, 4.0];
        assert!(!sign_consistent(&w, &s, SignMode::TwoD, None).unwrap());
        let lonely = SampleSet::from_indices(Shape::Line(9), [1, 2, 5, 8, 9]).unwrap();
        assert!(matches!(sign_consistent(&z, &lonely, SignMode::TwoD, None), Err(Error::Pattern(_))));
        let no_end = SampleSet::from_indices(Shape::Line(9), [1, 2, 7, 8]).unwrap();
        assert!(sign_consistent(&z, &no_end, SignMode::TwoD, None).is_err());
    }

    fn grid_set(r: usize, c: usize, rows: &[usize], cols: &[usize]) -> SampleSet {
        let px: Vec<(usize, usize)> = (1..=r)
            .flat_map(|i| (1..=c).map(move |j| (i, j)))
            .filter(|(i, j)| rows.contains(i) || cols.contains(j))
            .collect();
        SampleSet::from_pixels(r, c, px).unwrap()
    }

    #[test]
    fn patches_of_a_grid() {
        let s = grid_set(10, 10, &[1, 2, 5, 6, 9, 10], &[1, 2, 9, 10]);
        let p = grid_patches(&s).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0], Patch { rows: 2..4, cols: 2..8 });
        let bad = grid_set(10, 10, &[1, 2, 5, 9, 10], &[1, 2, 9, 10]);
        assert!(grid_patches(&bad).is_err());
    }

    #[test]
    fn sign_consistency_grid() {
        let (r, c) = (10, 10);
        let s = grid_set(r, c, &[1, 2, 9, 10], &[1, 2, 9, 10]);
        let fold = DepthImage::from_fn(r, c, |i, j| (i as f64 - 4.0).abs() + 0.1 * j as f64).unwrap();
        assert!(sign_consistent(fold.as_slice(), &s, SignMode::Grid, None).unwrap());
        let wave = DepthImage::from_fn(r, c, |i, _| (i as f64).sin()).unwrap();
        assert!(!sign_consistent(wave.as_slice(), &s, SignMode::Grid, None).unwrap());
    }

    #[test]
    fn envelope_of_a_tent() {
        let s = SampleSet::from_indices(Shape::Line(7), [1, 2, 6, 7]).unwrap();
        let m = Measurements::new(s, vec![0.0, 1.0, 1.0, 0.0], 0.0).unwrap();
        let env = envelope_2d(&m).unwrap();
        assert_eq!(env.upper, vec![0.0, 1.0, 2.0, 3.0, 2.0, 1.0, 0.0]);
        assert_eq!(env.lower, vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn envelope_of_a_line_collapses() {
        let s = SampleSet::from_indices(Shape::Line(10), [1, 2, 9, 10]).unwrap();
        let m = Measurements::new(s, vec![0.0, 0.5, 4.0, 4.5], 0.0).unwrap();
        let env = envelope_2d(&m).unwrap();
        for k in 0..10 {
            assert_abs_diff_eq!(env.upper[k], 0.5 * k as f64, epsilon = 1e-12);
            assert_abs_diff_eq!(env.lower[k], 0.5 * k as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn noisy_envelope_matches_exhaustive_search() {
        // flat data y = 2, twins (1,2) and (6,7), eps = 0.1
        let eps = 0.1;
        let s = SampleSet::from_indices(Shape::Line(7), [1, 2, 6, 7]).unwrap();
        let m = Measurements::new(s, vec![2.0; 4], eps).unwrap();
        let env = envelope_2d(&m).unwrap();
        let grid: Vec<f64> = (0..=20).map(|k| 2.0 - eps + 0.01 * k as f64).collect();
        let mut hi = [f64::NEG_INFINITY; 7];
        let mut lo = [f64::INFINITY; 7];
        for &v0 in &grid {
            for &v1 in &grid {
                for &v5 in &grid {
                    for &v6 in &grid {
                        let chord = |x: f64| line_at(1.0, v1, 5.0, v5, x);
                        let left = |x: f64| line_at(0.0, v0, 1.0, v1, x);
                        let right = |x: f64| line_at(5.0, v5, 6.0, v6, x);
                        let (sl, sr) = (v1 - v0, v6 - v5);
                        // crossing abscissa of the two extensions
                        let cross = if sl != sr {
                            Some((v5 - 5.0 * sr - v1 + sl) / (sl - sr))
                        } else {
                            None
                        };
                        for k in 2..5 {
                            let xk = k as f64;
                            let mut cands = vec![chord(xk)];
                            if cross.is_some_and(|xc| (1.0..=5.0).contains(&xc)) {
                                cands.push(if sl > sr { left(xk).min(right(xk)) } else { left(xk).max(right(xk)) });
                            }
                            for cnd in cands {
                                hi[k] = hi[k].max(cnd);
                                lo[k] = lo[k].min(cnd);
                            }
                        }
                    }
                }
            }
        }
        for k in 2..5 {
            assert_abs_diff_eq!(env.upper[k], hi[k], epsilon = 1e-9);
            assert_abs_diff_eq!(env.lower[k], lo[k], epsilon = 1e-9);
        }
    }

    #[test]
    fn error_bound_examples() {
        // samples at indices 1,2 and 6,7 (values 0,1 and 1,0), corner at 4
        let truth = profile(&[0.0, 1.0, 2.0, 3.0, 2.0, 1.0, 0.0]);
        let s = SampleSet::from_indices(Shape::Line(7), [1, 2, 6, 7]).unwrap();
        assert_abs_diff_eq!(recovery_error_bound_2d(&truth, &s).unwrap(), 2.0, epsilon = 1e-12);
        let at_corner = SampleSet::from_indices(Shape::Line(7), [1, 4, 7]).unwrap();
        assert_eq!(recovery_error_bound_2d(&truth, &at_corner).unwrap(), 0.0);
    }

    #[test]
    fn certificate_for_full_sampling() {
        let op = DiffOperator::d1(6).unwrap();
        let z = [0.0, 1.0, 3.0, 2.0, 2.0, 5.0];
        let m = Measurements::from_truth(&profile(&z), SampleSet::all(Shape::Line(6)).unwrap(), 0.0).unwrap();
        let cert = optimality_certificate(&op, &m, &z, 1e-8).unwrap();
        assert!(cert.is_certified());
        let u = cert.u.unwrap();
        let v = op.apply(&z).unwrap();
        for (a, b) in u.iter().zip(&v) {
            assert_eq!(*a, if b.abs() > 1e-6 { b.signum() } else { 0.0 });
        }
    }

    #[test]
    fn certificate_tent_and_decoy() {
        let z = [0.0, 1.0, 2.0, 3.0, 2.0, 1.0, 0.0];
        let s = SampleSet::from_indices(Shape::Line(7), [1, 2, 6, 7]).unwrap();
        let m = Measurements::from_truth(&profile(&z), s, 0.0).unwrap();
        let op = DiffOperator::d1(7).unwrap();
        assert!(optimality_certificate(&op, &m, &z, 1e-8).unwrap().is_certified());
        let decoy = [0.0, 1.0, 2.5, 0.5, 2.5, 1.0, 0.0];
        assert!(!optimality_certificate(&op, &m, &decoy, 1e-8).unwrap().is_certified());
        let infeasible = [0.5, 1.0, 2.0, 3.0, 2.0, 1.0, 0.0];
        assert!(matches!(
            optimality_certificate(&op, &m, &infeasible, 1e-8),
            Err(Error::NotFeasible { .. })
        ));
    }

    #[test]
    fn robust_certificate_on_flattened_noise() {
        // noisy bump that a line fits within eps: the line is optimal
        let op = DiffOperator::d1(5).unwrap();
        let s = SampleSet::all(Shape::Line(5)).unwrap();
        let m = Measurements::new(s, vec![0.0, 0.1, 0.0, -0.1, 0.0], 0.1).unwrap();
        let line = [0.0; 5];
        assert!(optimality_certificate(&op, &m, &line, 1e-8).unwrap().is_certified());
        let bumpy = [0.0, 0.15, -0.05, 0.0, 0.0];
        assert!(!optimality_certificate(&op, &m, &bumpy, 1e-8).unwrap().is_certified());
    }

    #[test]
    fn tridiagonal_inverse_small() {
        let t = tridiagonal_inverse(2);
        assert_abs_diff_eq!(t[0][0], -2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t[0][1], -1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t[1][1], -2.0 / 3.0, epsilon = 1e-15);
    }
}
