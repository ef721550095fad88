//! Sample interpolation used for the naive baseline and solver warm starts.

use crate::error::{Error, Result};
use crate::model::{Measurements, Shape};
use crate::scalar::Scalar;

/// Piecewise-linear interpolation through `(x, y)` knots (ascending `x`),
/// constant beyond the extreme knots. Fills every slot of `out`.
fn linear_fill<T: Scalar>(xs: &[usize], ys: &[T], out: &mut [T]) {
    debug_assert!(!xs.is_empty() && xs.len() == ys.len());
    let first = xs[0];
    let last = xs[xs.len() - 1];
    for v in out.iter_mut().take(first) {
        *v = ys[0];
    }
    for v in out.iter_mut().skip(last) {
        *v = ys[ys.len() - 1];
    }
    for (w, yw) in xs.windows(2).zip(ys.windows(2)) {
        let (a, b) = (w[0], w[1]);
        let span = T::of((b - a) as f64);
        for (k, v) in out.iter_mut().enumerate().take(b + 1).skip(a) {
            let t = T::of((k - a) as f64) / span;
            *v = yw[0] + t * (yw[1] - yw[0]);
        }
    }
}

pub(crate) fn naive_1d<T: Scalar>(meas: &Measurements<T>) -> Result<Vec<T>> {
    let n = meas.samples().shape().len();
    let xs = meas.samples().positions();
    if xs.len() < 2 {
        return Err(Error::Arity {
            needed: 2,
            got: xs.len(),
        });
    }
    let mut out = vec![T::zero(); n];
    linear_fill(xs, meas.values(), &mut out);
    Ok(out)
}

/// Separable two-pass fill: rows with at least two samples are
/// interpolated, then every column through all known pixels, then any
/// leftover pixel copies its nearest known pixel.
pub(crate) fn naive_2d<T: Scalar>(meas: &Measurements<T>, rows: usize, cols: usize) -> Result<Vec<T>> {
    let samples = meas.samples();
    if samples.len() < 3 || collinear(samples.positions(), rows) {
        return Err(Error::Arity {
            needed: 3,
            got: if samples.len() < 3 { samples.len() } else { 2 },
        });
    }
    let at = |i: usize, j: usize| j * rows + i;
    let mut val = vec![T::zero(); rows * cols];
    let mut known = vec![false; rows * cols];
    for (k, &p) in samples.positions().iter().enumerate() {
        val[p] = meas.values()[k];
        known[p] = true;
    }
    let original = known.clone();

    let mut line = vec![T::zero(); cols];
    for i in 0..rows {
        let xs: Vec<usize> = (0..cols).filter(|&j| original[at(i, j)]).collect();
        if xs.len() < 2 {
            continue;
        }
        let ys: Vec<T> = xs.iter().map(|&j| val[at(i, j)]).collect();
        linear_fill(&xs, &ys, &mut line);
        let (lo, hi) = (xs[0], xs[xs.len() - 1]);
        for j in lo..=hi {
            val[at(i, j)] = line[j];
            known[at(i, j)] = true;
        }
    }

    let mut colbuf = vec![T::zero(); rows];
    let snapshot = known.clone();
    for j in 0..cols {
        let xs: Vec<usize> = (0..rows).filter(|&i| snapshot[at(i, j)]).collect();
        if xs.len() < 2 {
            continue;
        }
        let ys: Vec<T> = xs.iter().map(|&i| val[at(i, j)]).collect();
        linear_fill(&xs, &ys, &mut colbuf);
        let (lo, hi) = (xs[0], xs[xs.len() - 1]);
        for i in lo..=hi {
            if !snapshot[at(i, j)] {
                val[at(i, j)] = colbuf[i];
                known[at(i, j)] = true;
            }
        }
    }

    nearest_fill(&mut val, &mut known, rows, cols);
    Ok(val)
}

/// Breadth-first propagation from known pixels (4-neighborhood), which
/// assigns each unknown pixel the value of a closest known pixel.
fn nearest_fill<T: Scalar>(val: &mut [T], known: &mut [bool], rows: usize, cols: usize) {
    let mut queue: std::collections::VecDeque<usize> = (0..val.len()).filter(|&p| known[p]).collect();
    while let Some(p) = queue.pop_front() {
        let (i, j) = (p % rows, p / rows);
        let mut visit = |q: usize| {
            if !known[q] {
                known[q] = true;
                val[q] = val[p];
                queue.push_back(q);
            }
        };
        if i > 0 {
            visit(p - 1);
        }
        if i + 1 < rows {
            visit(p + 1);
        }
        if j > 0 {
            visit(p - rows);
        }
        if j + 1 < cols {
            visit(p + rows);
        }
    }
}

fn collinear(pos: &[usize], rows: usize) -> bool {
    let pt = |p: usize| ((p % rows) as i64, (p / rows) as i64);
    let a = pt(pos[0]);
    let b = pt(pos[1]);
    pos[2..].iter().all(|&p| {
        let c = pt(p);
        (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0) == 0
    })
}

pub(crate) fn naive<T: Scalar>(meas: &Measurements<T>) -> Result<Vec<T>> {
    match meas.samples().shape() {
        Shape::Line(_) => naive_1d(meas),
        Shape::Grid { rows, cols } => naive_2d(meas, rows, cols),
    }
}
