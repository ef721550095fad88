//! Solvers for `min ||Op z||_1` subject to `|z_k - y_k| <= eps_k` on the
//! sampled coordinates.
//!
//! [`nesta_solve`] is the production first-order method. [`reference_lp_solve`]
//! is a small dense simplex used to check it.

mod nesta;
mod simplex;

pub use nesta::nesta_solve;
pub use simplex::{reference_lp_solve, reference_lp_solve_capped, DEFAULT_LP_CAP};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Measurements, SampleSet, Shape};
use crate::operators::DiffOperator;
use crate::scalar::Scalar;

/// Starting point of the first continuation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Init<T> {
    /// Interpolate the samples; falls back to zeros when there are too few.
    Naive,
    Zeros,
    Given(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    /// Final smoothing parameter.
    pub mu_f: T,
    /// Number of continuation stages.
    pub stages: usize,
    /// Inner iteration cap per stage.
    pub max_inner: usize,
    /// A stage stops once an iteration moves `z` by less than this in ℓ∞.
    pub tau: T,
    /// Seeds the power iteration that estimates the step size.
    pub seed: u64,
    pub init: Init<T>,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            mu_f: T::of(1e-3),
            stages: 5,
            max_inner: 10_000,
            tau: T::of(1e-5),
            seed: 0,
            init: Init::Naive,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_f > T::zero()) || !self.mu_f.is_finite() {
            return Err(Error::Parameter(format!("mu_f must be positive, got {}", self.mu_f)));
        }
        if !(self.tau > T::zero()) || !self.tau.is_finite() {
            return Err(Error::Parameter(format!("tau must be positive, got {}", self.tau)));
        }
        if self.stages == 0 {
            return Err(Error::Parameter("at least one continuation stage is required".into()));
        }
        if self.max_inner == 0 {
            return Err(Error::Parameter("at least one inner iteration is required".into()));
        }
        Ok(())
    }

    pub fn with_mu_f(mut self, mu_f: T) -> Self {
        self.mu_f = mu_f;
        self
    }

    pub fn with_tau(mut self, tau: T) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_stages(mut self, stages: usize) -> Self {
        self.stages = stages;
        self
    }

    pub fn with_max_inner(mut self, max_inner: usize) -> Self {
        self.max_inner = max_inner;
        self
    }

    pub fn with_init(mut self, init: Init<T>) -> Self {
        self.init = init;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult<T> {
    pub z_star: Vec<T>,
    /// `||Op z*||_1`.
    pub objective: T,
    /// Inner iterations used by each stage (simplex pivots for the LP).
    pub inner_iterations: Vec<usize>,
    pub mu_schedule: Vec<T>,
    /// True when every stage met the stopping rule before its cap.
    pub converged: bool,
    /// `max_k (|z*_k - y_k| - eps_k)^+`.
    pub feasibility_residual: T,
}

/// Huber-smoothed ℓ1 objective and its gradient `Op^T u*`.
pub fn smoothed_objective_gradient<T: Scalar>(op: &DiffOperator<T>, z: &[T], mu: T) -> Result<(T, Vec<T>)> {
    if !(mu > T::zero()) {
        return Err(Error::Parameter("mu must be positive".into()));
    }
    let mut u = op.apply(z)?;
    let value = smooth_in_place(&mut u, mu);
    let grad = op.adjoint(&u)?;
    Ok((value, grad))
}

/// Replaces `v = Op z` by the maximizer `u*` and returns the smoothed value.
pub(crate) fn smooth_in_place<T: Scalar>(v: &mut [T], mu: T) -> T {
    let half = T::of(0.5);
    let mut value = T::zero();
    for x in v.iter_mut() {
        let d = *x;
        let u = if d.abs() < mu { d / mu } else { d.signum() };
        value += u * d - half * mu * u * u;
        *x = u;
    }
    value
}

/// Clamps sampled entries into `[y_k - eps_k, y_k + eps_k]`; free entries
/// are returned unchanged.
pub fn project_linf_box<T: Scalar>(zhat: &[T], meas: &Measurements<T>) -> Result<Vec<T>> {
    let n = meas.samples().shape().len();
    if zhat.len() != n {
        return Err(Error::dim(n, zhat.len()));
    }
    let mut out = zhat.to_vec();
    project_in_place(&mut out, meas);
    Ok(out)
}

pub(crate) fn project_in_place<T: Scalar>(z: &mut [T], meas: &Measurements<T>) {
    for (k, (&p, &y)) in meas.samples().positions().iter().zip(meas.values()).enumerate() {
        let eps = meas.eps_at(k);
        z[p] = z[p].max(y - eps).min(y + eps);
    }
}

/// Merges possibly repeated `(offset, value, eps)` observations (zero-based
/// offsets) into one measurement per location.
///
/// Repeats are combined by intersecting their intervals `[y - eps, y + eps]`;
/// with equal bounds this averages the values. An empty intersection means
/// the observations contradict each other.
pub fn merge_duplicates<T: Scalar>(shape: Shape, obs: &[(usize, T, T)]) -> Result<Measurements<T>> {
    if obs.is_empty() {
        return Err(Error::Parameter("no observations to merge".into()));
    }
    let n = shape.len();
    let mut sorted: Vec<(usize, T, T)> = obs.to_vec();
    for &(p, y, e) in &sorted {
        if p >= n {
            return Err(Error::Index { index: p + 1, len: n });
        }
        if !y.is_finite() || !e.is_finite() || e < T::zero() {
            return Err(Error::Parameter(format!("invalid observation at index {}", p + 1)));
        }
    }
    sorted.sort_by_key(|o| o.0);
    let mut pos = Vec::new();
    let mut vals = Vec::new();
    let mut bounds = Vec::new();
    for group in sorted.chunk_by(|a, b| a.0 == b.0) {
        let lo = group.iter().map(|o| o.1 - o.2).fold(T::neg_infinity(), T::max);
        let hi = group.iter().map(|o| o.1 + o.2).fold(T::infinity(), T::min);
        let slack = T::of(1e-9) * (T::one() + hi.abs().max(lo.abs()));
        if lo > hi + slack {
            return Err(Error::Infeasible(format!(
                "contradictory samples at index {}: interval [{lo}, {hi}] is empty",
                group[0].0 + 1
            )));
        }
        let (lo, hi) = if lo > hi { (hi, hi) } else { (lo, hi) };
        let half = T::of(0.5);
        pos.push(group[0].0);
        vals.push(half * (lo + hi));
        bounds.push(half * (hi - lo));
    }
    Measurements::with_bounds(SampleSet::from_positions(shape, pos)?, vals, bounds)
}

pub(crate) fn check_problem<T: Scalar>(op: &DiffOperator<T>, meas: &Measurements<T>) -> Result<()> {
    let n = meas.samples().shape().len();
    if n != op.input_len() {
        return Err(Error::dim(op.input_len(), n));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_meas(n: usize, idx: &[usize], y: &[f64], eps: f64) -> Measurements<f64> {
        let s = SampleSet::from_indices(Shape::Line(n), idx.iter().copied()).unwrap();
        Measurements::new(s, y.to_vec(), eps).unwrap()
    }

    #[test]
    fn smoothed_value_on_linear_and_tent() {
        let d = DiffOperator::<f64>::d1(5).unwrap();
        let (v, g) = smoothed_objective_gradient(&d, &[1.0, 2.0, 3.0, 4.0, 5.0], 0.1).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
        let (v, _) = smoothed_objective_gradient(&d, &[0.0, 0.0, 1.0, 0.0, 0.0], 1e-3).unwrap();
        assert_abs_diff_eq!(v, 4.0 - 1.5e-3, epsilon = 1e-12);
        assert!(smoothed_objective_gradient(&d, &[0.0; 5], 0.0).is_err());
    }

    #[test]
    fn projection_examples() {
        let m = line_meas(3, &[1, 2], &[3.0, 3.0], 1.0);
        let z = project_linf_box(&[5.0, 2.5, 99.0], &m).unwrap();
        assert_eq!(z, vec![4.0, 2.5, 99.0]);
        assert!(project_linf_box(&[0.0; 2], &m).is_err());
    }

    #[test]
    fn merge_averages_equal_bounds() {
        let m = merge_duplicates(Shape::Line(5), &[(2, 1.0, 0.1), (0, 0.0, 0.1), (2, 1.1, 0.1)]).unwrap();
        assert_eq!(m.samples().one_based(), vec![1, 3]);
        assert_abs_diff_eq!(m.values()[1], 1.05, epsilon = 1e-12);
        assert_abs_diff_eq!(m.eps_at(1), 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(m.eps_at(0), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn merge_identical_is_noop() {
        let m = merge_duplicates(Shape::Line(4), &[(1, 2.0, 0.0), (1, 2.0, 0.0)]).unwrap();
        assert_eq!(m.values(), &[2.0]);
        assert_eq!(m.epsilon(), 0.0);
    }

    #[test]
    fn merge_rejects_contradiction() {
        let r = merge_duplicates(Shape::Line(4), &[(1, 0.0, 0.1), (1, 0.3, 0.1)]);
        assert!(matches!(r, Err(Error::Infeasible(_))));
        assert!(merge_duplicates(Shape::Line(4), &[(7, 0.0, 0.1)]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::<f64>::default().validate().is_ok());
        assert!(SolverConfig::<f64>::default().with_mu_f(0.0).validate().is_err());
        assert!(SolverConfig::<f64>::default().with_tau(-1.0).validate().is_err());
        assert!(SolverConfig::<f64>::default().with_stages(0).validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn gradient_matches_finite_differences(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = DiffOperator::<f64>::delta(4, 5).unwrap();
            let z: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mu = 0.1;
            let (_, g) = smoothed_objective_gradient(&d, &z, mu).unwrap();
            let h = 1e-6;
            for k in 0..20 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[k] += h;
                zm[k] -= h;
                let fp = smoothed_objective_gradient(&d, &zp, mu).unwrap().0;
                let fm = smoothed_objective_gradient(&d, &zm, mu).unwrap().0;
                prop_assert!(((fp - fm) / (2.0 * h) - g[k]).abs() < 1e-5);
            }
        }

        #[test]
        fn projection_is_feasible_and_idempotent(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = line_meas(8, &[1, 4, 8], &[0.5, -1.0, 2.0], rng.random_range(0.0..0.5));
            let z: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = project_linf_box(&z, &m).unwrap();
            prop_assert!(m.feasibility_violation(&p) <= 1e-12);
            prop_assert_eq!(project_linf_box(&p, &m).unwrap(), p);
        }
    }
}
