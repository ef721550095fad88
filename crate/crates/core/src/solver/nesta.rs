use super::{check_problem, project_in_place, smooth_in_place, Init, SolveResult, SolverConfig};
use crate::error::{Error, Result};
use crate::interp;
use crate::model::Measurements;
use crate::operators::DiffOperator;
use crate::scalar::{linf, Scalar};

/// Smoothing values for the continuation stages: geometric from `mu0`
/// down to exactly `mu_f`. A single stage runs at `mu_f`.
fn schedule<T: Scalar>(mu0: T, mu_f: T, stages: usize) -> Vec<T> {
    if stages == 1 || mu0 <= mu_f {
        return vec![mu_f; stages];
    }
    let ratio = mu_f / mu0;
    let last = T::of((stages - 1) as f64);
    let mut out: Vec<T> = (0..stages)
        .map(|t| mu0 * ratio.powf(T::of(t as f64) / last))
        .collect();
    out[stages - 1] = mu_f;
    out
}

fn initial_point<T: Scalar>(meas: &Measurements<T>, n: usize, init: &Init<T>) -> Result<Vec<T>> {
    match init {
        Init::Zeros => Ok(vec![T::zero(); n]),
        Init::Given(z) if z.len() == n => Ok(z.clone()),
        Init::Given(z) => Err(Error::dim(n, z.len())),
        Init::Naive => Ok(interp::naive(meas).unwrap_or_else(|_| vec![T::zero(); n])),
    }
}

/// Nesterov-smoothed accelerated gradient with continuation on `mu`.
///
/// Each stage minimizes the Huber smoothing of `||Op z||_1` over the
/// measurement box, warm-started from the previous stage. Iterates are
/// kept inside the box, so the result is always feasible.
pub fn nesta_solve<T: Scalar>(
    op: &DiffOperator<T>,
    meas: &Measurements<T>,
    cfg: &SolverConfig<T>,
) -> Result<SolveResult<T>> {
    cfg.validate()?;
    check_problem(op, meas)?;
    let n = op.input_len();
    let p = op.output_len();

    let norm = op.lipschitz_norm(cfg.seed)?;
    let norm_sq = norm * norm;

    let mut scratch = vec![T::zero(); p];
    op.apply_into(&meas.scatter(), &mut scratch)?;
    let mut back = vec![T::zero(); n];
    op.adjoint_into(&scratch, &mut back)?;
    let mu0 = linf(&back).max(cfg.mu_f);
    let mus = schedule(mu0, cfg.mu_f, cfg.stages);

    let mut z = initial_point(meas, n, &cfg.init)?;
    project_in_place(&mut z, meas);

    let mut grad = vec![T::zero(); n];
    let mut acc = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut iterations = Vec::with_capacity(mus.len());
    let mut converged = true;
    let half = T::of(0.5);
    let two = T::of(2.0);

    for &mu in &mus {
        let step = mu / norm_sq;
        let z0 = z.clone();
        acc.iter_mut().for_each(|a| *a = T::zero());
        let mut stopped = false;
        let mut k = 0;
        while k < cfg.max_inner {
            op.apply_into(&z, &mut scratch)?;
            smooth_in_place(&mut scratch, mu);
            op.adjoint_into(&scratch, &mut grad)?;

            let alpha = T::of((k + 1) as f64) * half;
            for ((((qi, ai), wi), &zi), (&gi, &z0i)) in q
                .iter_mut()
                .zip(acc.iter_mut())
                .zip(w.iter_mut())
                .zip(&z)
                .zip(grad.iter().zip(&z0))
            {
                *qi = zi - step * gi;
                *ai += alpha * gi;
                *wi = z0i - step * *ai;
            }
            project_in_place(&mut q, meas);
            project_in_place(&mut w, meas);

            let t = two / T::of((k + 3) as f64);
            let mut change = T::zero();
            for ((zi, &wi), &qi) in z.iter_mut().zip(&w).zip(&q) {
                let next = t * wi + (T::one() - t) * qi;
                change = change.max((next - *zi).abs());
                *zi = next;
            }
            project_in_place(&mut z, meas);
            k += 1;
            if change < cfg.tau {
                stopped = true;
                break;
            }
        }
        iterations.push(k);
        converged &= stopped;
    }

    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("solver produced non-finite values".into()));
    }
    let objective = op.objective_value(&z)?;
    let feasibility_residual = meas.feasibility_violation(&z);
    Ok(SolveResult {
        z_star: z,
        objective,
        inner_iterations: iterations,
        mu_schedule: mus,
        converged,
        feasibility_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SampleSet, Shape};
    use crate::solver::reference_lp_solve;

    fn line_meas(n: usize, idx: &[usize], y: &[f64], eps: f64) -> Measurements<f64> {
        let s = SampleSet::from_indices(Shape::Line(n), idx.iter().copied()).unwrap();
        Measurements::new(s, y.to_vec(), eps).unwrap()
    }

    #[test]
    fn schedule_is_geometric_and_ends_at_mu_f() {
        let s = schedule(1.0f64, 1e-4, 5);
        assert_eq!(s.len(), 5);
        assert_eq!(s[0], 1.0);
        assert_eq!(s[4], 1e-4);
        for w in s.windows(2) {
            assert!((w[1] / w[0] - 0.1).abs() < 1e-12);
        }
        assert_eq!(schedule(1.0f64, 1e-3, 1), vec![1e-3]);
        assert_eq!(schedule(1e-4f64, 1e-3, 3), vec![1e-3; 3]);
    }

    #[test]
    fn fully_sampled_line_is_returned() {
        let d = DiffOperator::d1(5).unwrap();
        let y = [1.0, 1.5, 2.0, 2.5, 3.0];
        let m = line_meas(5, &[1, 2, 3, 4, 5], &y, 0.0);
        let r = nesta_solve(&d, &m, &SolverConfig::default()).unwrap();
        assert_eq!(r.z_star, y.to_vec());
        assert!(r.objective.abs() < 1e-12);
    }

    #[test]
    fn one_corner_matches_lp() {
        let d = DiffOperator::d1(9).unwrap();
        let m = line_meas(9, &[1, 2, 8, 9], &[0.0, 1.0, 7.0, 6.0], 0.0);
        let cfg = SolverConfig::default().with_mu_f(1e-5).with_tau(1e-10).with_max_inner(20_000);
        let r = nesta_solve(&d, &m, &cfg).unwrap();
        let lp = reference_lp_solve(&d, &m).unwrap();
        assert!((r.objective - lp.objective).abs() < 1e-3, "{} vs {}", r.objective, lp.objective);
        // sampled coordinates are pinned exactly when eps = 0
        assert_eq!(r.z_star[0], 0.0);
        assert_eq!(r.z_star[8], 6.0);
        assert!(r.feasibility_residual <= 1e-9);
    }

    #[test]
    fn deterministic_and_dimension_checked() {
        let d = DiffOperator::d1(12).unwrap();
        let m = line_meas(12, &[1, 4, 5, 11, 12], &[0.0, 2.0, 2.5, 1.0, 0.0], 0.05);
        let cfg = SolverConfig::default();
        let a = nesta_solve(&d, &m, &cfg).unwrap();
        let b = nesta_solve(&d, &m, &cfg).unwrap();
        assert_eq!(a, b);
        let short = line_meas(11, &[1, 2], &[0.0, 0.0], 0.0);
        assert!(nesta_solve(&d, &short, &cfg).is_err());
        let bad = SolverConfig::default().with_init(Init::Given(vec![0.0; 3]));
        assert!(nesta_solve(&d, &m, &bad).is_err());
    }

    #[test]
    fn single_precision_solve() {
        let d = DiffOperator::<f32>::d1(9).unwrap();
        let s = SampleSet::from_indices(Shape::Line(9), [1, 2, 8, 9]).unwrap();
        let m = Measurements::new(s, vec![0.0f32, 1.0, 7.0, 6.0], 0.0).unwrap();
        let r = nesta_solve(&d, &m, &SolverConfig::default()).unwrap();
        assert!((r.objective - 2.0).abs() < 0.05, "{}", r.objective);
    }
}
