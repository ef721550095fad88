//! Matrix-free second-order difference operators.
//!
//! Rows are laid out block by block. For image operators the input is
//! `vec(Z)` (column-major) and the output stacks
//!
//! 1. vertical differences `vec(D_V Z)`, `(r - 2) * c` rows,
//! 2. horizontal differences `vec(Z D_H^T)`, `r * (c - 2)` rows,
//! 3. (diagonal kind only) the cross kernel at interior pixels,
//!    `(r - 2) * (c - 2)` rows, column-major over the interior.
//!
//! Every row touches at most four pixels, so `apply` and `adjoint` are
//! `O(p)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Guard used when clamping small Cartesian spacings.
pub const DEFAULT_SPACING_GUARD: f64 = 0.1;

/// Default magnitude below which an entry counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

const POWER_ITERATION_SEED: u64 = 0x5eed_d1ff;
const POWER_ITERATION_CAP: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum OperatorKind {
    /// 1D second difference.
    D1,
    /// Vertical plus horizontal second differences of an image.
    Delta,
    /// `Delta` plus the diagonal cross kernel.
    DeltaDiag,
    /// `Delta` with weights derived from per-pixel Cartesian coordinates.
    DeltaCart,
}

/// Row stencil: up to four `(column, weight)` pairs.
#[derive(Debug, Clone, Copy)]
pub struct Stencil<T> {
    len: usize,
    idx: [usize; 4],
    w: [T; 4],
}

impl<T: Scalar> Stencil<T> {
    fn three(idx: [usize; 3], w: [T; 3]) -> Self {
        Self {
            len: 3,
            idx: [idx[0], idx[1], idx[2], 0],
            w: [w[0], w[1], w[2], T::zero()],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        (0..self.len).map(|k| (self.idx[k], self.w[k]))
    }
}

#[derive(Debug, Clone)]
struct CartWeights<T> {
    // left/right weights per row of the vertical block
    va: Vec<T>,
    vb: Vec<T>,
    // and of the horizontal block
    ha: Vec<T>,
    hb: Vec<T>,
}

/// A second-order difference operator with forward and adjoint application.
#[derive(Debug, Clone)]
pub struct DiffOperator<T> {
    kind: OperatorKind,
    rows: usize,
    cols: usize,
    cart: Option<CartWeights<T>>,
}

impl<T: Scalar> DiffOperator<T> {
    /// The `(n - 2) x n` second difference with rows `[1, -2, 1]`.
    pub fn d1(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Parameter(format!("1D operator needs n >= 3, got {n}")));
        }
        Ok(Self {
            kind: OperatorKind::D1,
            rows: n,
            cols: 1,
            cart: None,
        })
    }

    pub fn delta(rows: usize, cols: usize) -> Result<Self> {
        Self::grid(OperatorKind::Delta, rows, cols)
    }

    pub fn delta_diag(rows: usize, cols: usize) -> Result<Self> {
        Self::grid(OperatorKind::DeltaDiag, rows, cols)
    }

    /// Cartesian-spaced kernels. `vertical` holds the coordinate used for
    /// differences down each column and `horizontal` the one used along
    /// each row; both are column-major `rows x cols` grids, strictly
    /// monotone along their axis. Spacings smaller than `guard` in
    /// magnitude are replaced by `guard` with the same sign.
    pub fn delta_cart(rows: usize, cols: usize, vertical: &[T], horizontal: &[T], guard: T) -> Result<Self> {
        let mut op = Self::grid(OperatorKind::DeltaCart, rows, cols)?;
        let n = rows * cols;
        if vertical.len() != n {
            return Err(Error::dim(n, vertical.len()));
        }
        if horizontal.len() != n {
            return Err(Error::dim(n, horizontal.len()));
        }
        if !(guard > T::zero()) {
            return Err(Error::Parameter("spacing guard must be positive".into()));
        }
        let at = |g: &[T], i: usize, j: usize| g[j * rows + i];
        for j in 0..cols {
            check_monotone((0..rows).map(|i| at(vertical, i, j)), "vertical", j)?;
        }
        for i in 0..rows {
            check_monotone((0..cols).map(|j| at(horizontal, i, j)), "horizontal", i)?;
        }
        let clamp = |h: T| {
            if h.abs() < guard {
                if h < T::zero() {
                    -guard
                } else {
                    guard
                }
            } else {
                h
            }
        };
        let mut w = CartWeights {
            va: Vec::with_capacity((rows - 2) * cols),
            vb: Vec::with_capacity((rows - 2) * cols),
            ha: Vec::with_capacity(rows * (cols - 2)),
            hb: Vec::with_capacity(rows * (cols - 2)),
        };
        for j in 0..cols {
            for i in 0..rows - 2 {
                let h1 = clamp(at(vertical, i + 1, j) - at(vertical, i, j));
                let h2 = clamp(at(vertical, i + 2, j) - at(vertical, i + 1, j));
                w.va.push(T::one() / h1);
                w.vb.push(T::one() / h2);
            }
        }
        for j in 0..cols - 2 {
            for i in 0..rows {
                let h1 = clamp(at(horizontal, i, j + 1) - at(horizontal, i, j));
                let h2 = clamp(at(horizontal, i, j + 2) - at(horizontal, i, j + 1));
                w.ha.push(T::one() / h1);
                w.hb.push(T::one() / h2);
            }
        }
        op.cart = Some(w);
        Ok(op)
    }

    fn grid(kind: OperatorKind, rows: usize, cols: usize) -> Result<Self> {
        if rows < 3 || cols < 3 {
            return Err(Error::Parameter(format!(
                "image operator needs at least 3x3 pixels, got {rows}x{cols}"
            )));
        }
        Ok(Self {
            kind,
            rows,
            cols,
            cart: None,
        })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// `(rows, cols)` for image operators.
    pub fn grid_shape(&self) -> Option<(usize, usize)> {
        match self.kind {
            OperatorKind::D1 => None,
            _ => Some((self.rows, self.cols)),
        }
    }

    /// Input length `n`.
    pub fn input_len(&self) -> usize {
        self.rows * self.cols
    }

    /// Output length `p`.
    pub fn output_len(&self) -> usize {
        let (r, c) = (self.rows, self.cols);
        match self.kind {
            OperatorKind::D1 => r - 2,
            OperatorKind::Delta | OperatorKind::DeltaCart => (r - 2) * c + r * (c - 2),
            OperatorKind::DeltaDiag => (r - 2) * c + r * (c - 2) + (r - 2) * (c - 2),
        }
    }

    fn vertical_rows(&self) -> usize {
        (self.rows - 2) * self.cols
    }

    fn horizontal_rows(&self) -> usize {
        self.rows * (self.cols - 2)
    }

    /// Nonzero pattern and weights of output row `q` (zero-based).
    pub fn row(&self, q: usize) -> Stencil<T> {
        assert!(q < self.output_len(), "row {q} out of range");
        let r = self.rows;
        let one = T::one();
        let two = T::of(2.0);
        if self.kind == OperatorKind::D1 {
            return Stencil::three([q, q + 1, q + 2], [one, -two, one]);
        }
        let nv = self.vertical_rows();
        let nh = self.horizontal_rows();
        if q < nv {
            let (j, i) = (q / (r - 2), q % (r - 2));
            let base = j * r + i;
            let (a, b) = match &self.cart {
                Some(w) => (w.va[q], w.vb[q]),
                None => (one, one),
            };
            return Stencil::three([base, base + 1, base + 2], [a, -(a + b), b]);
        }
        if q < nv + nh {
            let k = q - nv;
            let (j, i) = (k / r, k % r);
            let base = j * r + i;
            let (a, b) = match &self.cart {
                Some(w) => (w.ha[k], w.hb[k]),
                None => (one, one),
            };
            return Stencil::three([base, base + r, base + 2 * r], [a, -(a + b), b]);
        }
        let k = q - nv - nh;
        let (jj, ii) = (k / (r - 2), k % (r - 2));
        // center (ii + 1, jj + 1); corners of the 3x3 window
        let top_left = jj * r + ii;
        let quarter = T::of(0.25);
        Stencil {
            len: 4,
            idx: [top_left, top_left + 2, top_left + 2 * r, top_left + 2 * r + 2],
            w: [-quarter, quarter, quarter, -quarter],
        }
    }

    pub fn apply(&self, z: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.output_len()];
        self.apply_into(z, &mut out)?;
        Ok(out)
    }

    pub fn adjoint(&self, u: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.input_len()];
        self.adjoint_into(u, &mut out)?;
        Ok(out)
    }

    /// Forward application into a preallocated buffer of length `p`.
    pub fn apply_into(&self, z: &[T], out: &mut [T]) -> Result<()> {
        if z.len() != self.input_len() {
            return Err(Error::dim(self.input_len(), z.len()));
        }
        if out.len() != self.output_len() {
            return Err(Error::dim(self.output_len(), out.len()));
        }
        let two = T::of(2.0);
        let r = self.rows;
        if self.kind == OperatorKind::D1 {
            for (o, w) in out.iter_mut().zip(z.windows(3)) {
                *o = w[0] - two * w[1] + w[2];
            }
            return Ok(());
        }
        let c = self.cols;
        let nv = self.vertical_rows();
        let nh = self.horizontal_rows();
        let (vert, rest) = out.split_at_mut(nv);
        let (horiz, diag) = rest.split_at_mut(nh);
        match &self.cart {
            None => {
                for j in 0..c {
                    let col = &z[j * r..(j + 1) * r];
                    let dst = &mut vert[j * (r - 2)..(j + 1) * (r - 2)];
                    for i in 0..r - 2 {
                        dst[i] = col[i] - two * col[i + 1] + col[i + 2];
                    }
                }
                for (k, o) in horiz.iter_mut().enumerate() {
                    *o = z[k] - two * z[k + r] + z[k + 2 * r];
                }
            }
            Some(w) => {
                for j in 0..c {
                    for i in 0..r - 2 {
                        let q = j * (r - 2) + i;
                        let p = j * r + i;
                        let (a, b) = (w.va[q], w.vb[q]);
                        vert[q] = a * z[p] - (a + b) * z[p + 1] + b * z[p + 2];
                    }
                }
                for (k, o) in horiz.iter_mut().enumerate() {
                    let (a, b) = (w.ha[k], w.hb[k]);
                    *o = a * z[k] - (a + b) * z[k + r] + b * z[k + 2 * r];
                }
            }
        }
        if self.kind == OperatorKind::DeltaDiag {
            let quarter = T::of(0.25);
            for jj in 0..c - 2 {
                for ii in 0..r - 2 {
                    let tl = jj * r + ii;
                    diag[jj * (r - 2) + ii] =
                        quarter * (-z[tl] + z[tl + 2] + z[tl + 2 * r] - z[tl + 2 * r + 2]);
                }
            }
        }
        Ok(())
    }

    /// Adjoint application into a preallocated buffer of length `n`.
    pub fn adjoint_into(&self, u: &[T], out: &mut [T]) -> Result<()> {
        if u.len() != self.output_len() {
            return Err(Error::dim(self.output_len(), u.len()));
        }
        if out.len() != self.input_len() {
            return Err(Error::dim(self.input_len(), out.len()));
        }
        out.iter_mut().for_each(|o| *o = T::zero());
        let two = T::of(2.0);
        let r = self.rows;
        if self.kind == OperatorKind::D1 {
            // gather form: out[k] = u[k-2] - 2 u[k-1] + u[k] where defined
            let m = u.len();
            let at = |q: usize, back: usize| if q >= back && q - back < m { u[q - back] } else { T::zero() };
            if m >= 3 {
                for (o, w) in out[2..m].iter_mut().zip(u.windows(3)) {
                    *o = w[0] - two * w[1] + w[2];
                }
            }
            for k in (0..2).chain(m.max(2)..m + 2) {
                out[k] = at(k, 2) - two * at(k, 1) + at(k, 0);
            }
            return Ok(());
        }
        let c = self.cols;
        let nv = self.vertical_rows();
        let nh = self.horizontal_rows();
        let (vert, rest) = u.split_at(nv);
        let (horiz, diag) = rest.split_at(nh);
        match &self.cart {
            None => {
                for j in 0..c {
                    let src = &vert[j * (r - 2)..(j + 1) * (r - 2)];
                    let col = &mut out[j * r..(j + 1) * r];
                    for (i, &v) in src.iter().enumerate() {
                        col[i] += v;
                        col[i + 1] -= two * v;
                        col[i + 2] += v;
                    }
                }
                for (k, &v) in horiz.iter().enumerate() {
                    out[k] += v;
                    out[k + r] -= two * v;
                    out[k + 2 * r] += v;
                }
            }
            Some(w) => {
                for j in 0..c {
                    for i in 0..r - 2 {
                        let q = j * (r - 2) + i;
                        let p = j * r + i;
                        let (a, b, v) = (w.va[q], w.vb[q], vert[q]);
                        out[p] += a * v;
                        out[p + 1] -= (a + b) * v;
                        out[p + 2] += b * v;
                    }
                }
                for (k, &v) in horiz.iter().enumerate() {
                    let (a, b) = (w.ha[k], w.hb[k]);
                    out[k] += a * v;
                    out[k + r] -= (a + b) * v;
                    out[k + 2 * r] += b * v;
                }
            }
        }
        if self.kind == OperatorKind::DeltaDiag {
            let quarter = T::of(0.25);
            for jj in 0..c - 2 {
                for ii in 0..r - 2 {
                    let tl = jj * r + ii;
                    let v = quarter * diag[jj * (r - 2) + ii];
                    out[tl] -= v;
                    out[tl + 2] += v;
                    out[tl + 2 * r] += v;
                    out[tl + 2 * r + 2] -= v;
                }
            }
        }
        Ok(())
    }

    /// `||Op z||_1`.
    pub fn objective_value(&self, z: &[T]) -> Result<T> {
        Ok(self.apply(z)?.iter().map(|v| v.abs()).sum())
    }

    /// `sqrt(||Op||_1 ||Op||_inf)`, an upper bound on the spectral norm.
    pub fn norm_upper_bound(&self) -> T {
        let mut col_sums = vec![T::zero(); self.input_len()];
        let mut max_row = T::zero();
        for q in 0..self.output_len() {
            let mut s = T::zero();
            for (p, w) in self.row(q).iter() {
                col_sums[p] += w.abs();
                s += w.abs();
            }
            max_row = max_row.max(s);
        }
        let max_col = col_sums.iter().fold(T::zero(), |m, v| m.max(*v));
        (max_row * max_col).sqrt()
    }

    /// Largest singular value by power iteration on `Op^T Op`, stopped when
    /// the estimate changes by less than `tol` relative.
    pub fn operator_norm(&self, tol: T) -> Result<T> {
        self.operator_norm_seeded(tol, POWER_ITERATION_SEED)
    }

    /// [`operator_norm`](Self::operator_norm) with an explicit start-vector seed.
    pub fn operator_norm_seeded(&self, tol: T, seed: u64) -> Result<T> {
        if !(tol > T::zero()) {
            return Err(Error::Parameter("tolerance must be positive".into()));
        }
        let n = self.input_len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<T> = (0..n).map(|_| T::of(rng.random_range(-1.0..1.0))).collect();
        normalize(&mut x);
        let mut y = vec![T::zero(); self.output_len()];
        let mut prev = T::zero();
        for _ in 0..POWER_ITERATION_CAP {
            self.apply_into(&x, &mut y)?;
            let sigma = dot(&y, &y).sqrt();
            if sigma == T::zero() {
                return Ok(T::zero());
            }
            self.adjoint_into(&y, &mut x)?;
            normalize(&mut x);
            if (sigma - prev).abs() <= tol * sigma {
                return Ok(sigma);
            }
            prev = sigma;
        }
        Err(Error::Numeric(format!(
            "power iteration did not converge within {POWER_ITERATION_CAP} iterations"
        )))
    }

    /// Step-size norm for gradient methods: a slightly inflated power
    /// iteration estimate, never above the Hölder bound.
    pub fn lipschitz_norm(&self, seed: u64) -> Result<T> {
        let est = self.operator_norm_seeded(T::of(1e-7), seed)?;
        Ok((est * T::of(1.01)).min(self.norm_upper_bound()))
    }

    /// Dense row-major materialization. Test oracle only; refuses `n > 200`.
    pub fn to_dense(&self) -> Result<Vec<Vec<T>>> {
        const CAP: usize = 200;
        let n = self.input_len();
        if n > CAP {
            return Err(Error::TooLarge { size: n, cap: CAP });
        }
        Ok((0..self.output_len())
            .map(|q| {
                let mut row = vec![T::zero(); n];
                for (p, w) in self.row(q).iter() {
                    row[p] += w;
                }
                row
            })
            .collect())
    }
}

fn check_monotone<T: Scalar>(line: impl Iterator<Item = T>, axis: &str, which: usize) -> Result<()> {
    let v: Vec<T> = line.collect();
    let inc = v.windows(2).all(|w| w[1] > w[0]);
    let dec = v.windows(2).all(|w| w[1] < w[0]);
    if inc || dec {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "{axis} coordinates not strictly monotone along line {}",
            which + 1
        )))
    }
}

fn normalize<T: Scalar>(x: &mut [T]) {
    let nrm = dot(x, x).sqrt();
    if nrm > T::zero() {
        x.iter_mut().for_each(|v| *v /= nrm);
    }
}

/// Number of entries with magnitude above `tol`.
pub fn count_nonzero<T: Scalar>(v: &[T], tol: T) -> usize {
    v.iter().filter(|x| x.abs() > tol).count()
}
