//! Textbook two-phase tableau simplex for small instances.
//!
//! The ℓ1 problem is rewritten with `z = z⁺ - z⁻` and `Op z = a - b`:
//!
//! ```text
//! min  1ᵀa + 1ᵀb
//! s.t. Op (z⁺ - z⁻) - a + b = 0
//!      y - eps <= (z⁺ - z⁻)_M <= y + eps
//!      z⁺, z⁻, a, b >= 0
//! ```
//!
//! Arithmetic is done in `f64` whatever the caller's scalar type.

use super::{check_problem, SolveResult};
use crate::error::{Error, Result};
use crate::model::Measurements;
use crate::operators::DiffOperator;
use crate::scalar::Scalar;

/// Default size cap for [`reference_lp_solve`].
pub const DEFAULT_LP_CAP: usize = 80;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;
const DEGENERATE_SWITCH: usize = 50;

/// Exact minimizer of `||Op z||_1` over the measurement box, for `n`
/// at most [`DEFAULT_LP_CAP`].
pub fn reference_lp_solve<T: Scalar>(op: &DiffOperator<T>, meas: &Measurements<T>) -> Result<SolveResult<T>> {
    reference_lp_solve_capped(op, meas, DEFAULT_LP_CAP)
}

pub fn reference_lp_solve_capped<T: Scalar>(
    op: &DiffOperator<T>,
    meas: &Measurements<T>,
    cap: usize,
) -> Result<SolveResult<T>> {
    check_problem(op, meas)?;
    let n = op.input_len();
    if n > cap {
        return Err(Error::TooLarge { size: n, cap });
    }
    let p = op.output_len();
    let m = meas.samples().len();

    // column layout: z⁺ [0,n) z⁻ [n,2n) a [2n,2n+p) b [2n+p,2n+2p) then slacks
    let zp = 0;
    let zm = n;
    let a0 = 2 * n;
    let b0 = 2 * n + p;
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(p + 2 * m);
    for q in 0..p {
        let mut r: Vec<(usize, f64)> = Vec::with_capacity(8);
        for (col, w) in op.row(q).iter() {
            let w = w.to_f64_lossy();
            r.push((zp + col, w));
            r.push((zm + col, -w));
        }
        r.push((a0 + q, -1.0));
        r.push((b0 + q, 1.0));
        rows.push((r, 0.0));
    }
    let mut next_col = 2 * n + 2 * p;
    for (k, (&pos, &y)) in meas.samples().positions().iter().zip(meas.values()).enumerate() {
        let y = y.to_f64_lossy();
        let eps = meas.eps_at(k).to_f64_lossy();
        if eps == 0.0 {
            rows.push((vec![(zp + pos, 1.0), (zm + pos, -1.0)], y));
        } else {
            rows.push((vec![(zp + pos, 1.0), (zm + pos, -1.0), (next_col, 1.0)], y + eps));
            rows.push((vec![(zp + pos, 1.0), (zm + pos, -1.0), (next_col + 1, -1.0)], y - eps));
            next_col += 2;
        }
    }
    let ncols = next_col;
    let mut cost = vec![0.0; ncols];
    cost[a0..b0 + p].iter_mut().for_each(|c| *c = 1.0);

    let (x, pivots) = two_phase(&rows, &cost, ncols)?;
    let z: Vec<T> = (0..n).map(|i| T::of(x[zp + i] - x[zm + i])).collect();
    let objective = op.objective_value(&z)?;
    let feasibility_residual = meas.feasibility_violation(&z);
    Ok(SolveResult {
        z_star: z,
        objective,
        inner_iterations: vec![pivots],
        mu_schedule: Vec::new(),
        converged: true,
        feasibility_residual,
    })
}

struct Tableau {
    m: usize,
    width: usize,
    // m constraint rows followed by the reduced-cost row; last column is rhs
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let pv = self.t[r * w + c];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= pv;
        }
        let prow: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f == 0.0 {
                continue;
            }
            for (v, pr) in self.t[i * w..(i + 1) * w].iter_mut().zip(&prow) {
                *v -= f * pr;
            }
        }
        self.basis[r] = c;
    }

    fn set_costs(&mut self, cost: &[f64]) {
        let w = self.width;
        let obj = self.m * w;
        self.t[obj..obj + w].iter_mut().for_each(|v| *v = 0.0);
        self.t[obj..obj + cost.len()].copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..w {
                    self.t[obj + j] -= cb * self.t[i * w + j];
                }
            }
        }
    }

    /// Runs primal simplex on the columns `< allowed`. Returns the number of
    /// pivots.
    fn run(&mut self, allowed: usize) -> Result<usize> {
        let mut pivots = 0;
        let mut degenerate = 0;
        loop {
            let bland = degenerate >= DEGENERATE_SWITCH;
            let mut enter = None;
            let mut best = -COST_TOL;
            for j in 0..allowed {
                let d = self.at(self.m, j);
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else {
                return Ok(pivots);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(Error::Numeric("linear program is unbounded".into()));
            };
            degenerate = if ratio.abs() < 1e-12 { degenerate + 1 } else { 0 };
            self.pivot(r, c);
            pivots += 1;
            if pivots > MAX_PIVOTS {
                return Err(Error::Numeric(format!("simplex exceeded {MAX_PIVOTS} pivots")));
            }
        }
    }
}

/// Solves `min cᵀx, A x = b, x >= 0` given sparse rows of `A`.
fn two_phase(rows: &[(Vec<(usize, f64)>, f64)], cost: &[f64], ncols: usize) -> Result<(Vec<f64>, usize)> {
    let m = rows.len();
    // artificial columns follow the structural ones
    let width = ncols + m + 1;
    let mut t = vec![0.0; (m + 1) * width];
    for (i, (r, b)) in rows.iter().enumerate() {
        let s = if *b < 0.0 { -1.0 } else { 1.0 };
        for &(j, v) in r {
            t[i * width + j] += s * v;
        }
        t[i * width + ncols + i] = 1.0;
        t[i * width + width - 1] = s * b;
    }
    let mut tab = Tableau {
        m,
        width,
        t,
        basis: (ncols..ncols + m).collect(),
    };

    let mut phase1 = vec![0.0; ncols + m];
    phase1[ncols..].iter_mut().for_each(|c| *c = 1.0);
    tab.set_costs(&phase1);
    let mut pivots = tab.run(ncols + m)?;
    let scale = 1.0 + rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
    let infeas = -tab.rhs(m);
    if infeas > 1e-7 * scale {
        return Err(Error::Infeasible(format!("phase one residual {infeas:e}")));
    }

    // drive remaining artificials out of the basis where possible
    for i in 0..m {
        if tab.basis[i] >= ncols {
            if let Some(j) = (0..ncols).find(|&j| tab.at(i, j).abs() > 1e-7) {
                tab.pivot(i, j);
                pivots += 1;
            }
        }
    }

    tab.set_costs(cost);
    pivots += tab.run(ncols)?;

    let mut x = vec![0.0; ncols];
    for i in 0..m {
        if tab.basis[i] < ncols {
            x[tab.basis[i]] = tab.rhs(i);
        }
    }
    Ok((x, pivots))
}
