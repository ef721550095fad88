//! End-to-end properties across generation, sampling and reconstruction.

use proptest::prelude::*;
use sparse_depth::analysis::{default_curvature_tol, envelope_2d, exact_recovery_constant, SupportPartition};
use sparse_depth::datagen::{gen_depth_3d, gen_profile_1d, measure, metrics, GenSpec1D, GenSpec3D};
use sparse_depth::sampling::{draw_samples, SamplingSpec, Source, Strategy};
use sparse_depth::solver::reference_lp_solve;
use sparse_depth::{
    algorithm1, naive_interpolation, reconstruct, superresolve, Measurements, Objective, Operator, SampleSet, Shape,
    SolverConfig,
};

fn twin(n: usize, corners: &[usize], seed: u64) -> SampleSet {
    let spec = SamplingSpec::new(Strategy::TwinPerSegment { corners: corners.to_vec(), seed });
    draw_samples(&spec, Source::Shape(Shape::Line(n))).unwrap()
}

fn mean_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[test]
fn diag_objective_beats_naive_on_sparse_lattice() {
    let g = gen_depth_3d(&GenSpec3D { rows: 40, cols: 40, num_folds: 2, max_value: 5.0, seed: 4 }).unwrap();
    let px = (0..8).flat_map(|a| (0..8).map(move |b| (5 * a + 1, 5 * b + 1)));
    let s = SampleSet::from_pixels(40, 40, px).unwrap();
    assert_eq!(s.len(), 64);
    let m = Measurements::from_truth(&g.image, s, 0.0).unwrap();
    let naive = naive_interpolation(&m).unwrap();
    let l1 = reconstruct(&m, &Objective::L1diag, &SolverConfig::default()).unwrap().z_star;
    let (e_naive, e_l1) = (mean_abs(&naive, g.image.as_slice()), mean_abs(&l1, g.image.as_slice()));
    assert!(e_l1 < e_naive, "l1diag {e_l1} vs naive {e_naive}");
}

#[test]
fn dense_noisy_baseline_error_is_half_epsilon() {
    let g = gen_profile_1d(&GenSpec1D { n: 4000, num_corners: 10, max_value: 5.0, seed: 2 }).unwrap();
    let m = measure(g.profile.values(), SampleSet::all(Shape::Line(4000)).unwrap(), 0.1, 8).unwrap();
    let z = naive_interpolation(&m).unwrap();
    let e = metrics(&z, g.profile.values(), 4000, 4000).unwrap().mean_l1;
    assert!((0.045..=0.055).contains(&e), "{e}");
}

#[test]
fn error_degrades_continuously_with_noise() {
    // heuristic robustness smoke check, not a guarantee
    let n = 300;
    let g = gen_profile_1d(&GenSpec1D { n, num_corners: 6, max_value: 5.0, seed: 13 }).unwrap();
    let s = draw_samples(&SamplingSpec::new(Strategy::Uniform { fraction: 0.3, seed: 1 }), Source::Shape(Shape::Line(n))).unwrap();
    let err = |eps: f64| {
        let m = measure(g.profile.values(), s.clone(), eps, 99).unwrap();
        let z = reconstruct(&m, &Objective::L1, &SolverConfig::default()).unwrap().z_star;
        mean_abs(&z, g.profile.values())
    };
    let (e1, e2) = (err(0.05), err(0.1));
    assert!(e2 <= 4.0 * e1 + 4.0 * 0.05, "{e1} {e2}");
}

#[test]
fn superresolution_is_identity_at_factor_one() {
    let g = gen_depth_3d(&GenSpec3D { rows: 12, cols: 9, num_folds: 1, max_value: 3.0, seed: 0 }).unwrap();
    let out = superresolve(&g.image, None, 1, 1, &SolverConfig::default()).unwrap();
    assert_eq!(out, g.image);
}

#[test]
fn superresolution_fills_missing_pixels_of_a_plane() {
    let low = sparse_depth::DepthImage::from_fn(5, 5, |i, j| 2.0 + 0.1 * i as f64 + 0.05 * j as f64).unwrap();
    let valid = SampleSet::from_positions(low.shape(), (0..25).filter(|p| p % 7 != 3).collect()).unwrap();
    let cfg = SolverConfig::default().with_mu_f(1e-6).with_tau(1e-11).with_max_inner(30_000);
    let up = superresolve(&low, Some(&valid), 2, 2, &cfg).unwrap();
    for i in 0..9 {
        for j in 0..9 {
            let want = 2.0 + 0.05 * i as f64 + 0.025 * j as f64;
            assert!((up.get(i, j) - want).abs() < 1e-3);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_profiles_are_recovered_from_twins(seed in 0u64..10_000, k in 1usize..6) {
        let n = 120;
        let g = gen_profile_1d(&GenSpec1D { n, num_corners: k, max_value: 4.0, seed }).unwrap();
        let m = Measurements::from_truth(&g.profile, twin(n, &g.corners, seed), 0.0).unwrap();
        let out = algorithm1(&m, &SolverConfig::default().with_max_inner(2000)).unwrap();
        let err = out.profile.values().iter().zip(g.profile.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9, "error {err}");
    }

    #[test]
    fn algorithm1_is_optimal_and_enveloped(seed in 0u64..10_000, noisy in any::<bool>()) {
        let n = 50;
        let g = gen_profile_1d(&GenSpec1D { n, num_corners: 3, max_value: 4.0, seed }).unwrap();
        let eps = if noisy { 0.05 } else { 0.0 };
        let m = measure(g.profile.values(), twin(n, &g.corners, seed), eps, seed).unwrap();
        let out = algorithm1(&m, &SolverConfig::default()).unwrap();
        let env = envelope_2d(&m).unwrap();
        prop_assert!(env.contains(out.profile.values(), 1e-9));
        prop_assert!(m.feasibility_violation(out.profile.values()) <= 1e-12);
        if !noisy {
            let op = Operator::d1(n).unwrap();
            let lp = reference_lp_solve(&op, &m).unwrap();
            let f = op.objective_value(out.profile.values()).unwrap();
            prop_assert!((f - lp.objective).abs() <= 1e-6, "{f} vs {}", lp.objective);
        }
    }

    #[test]
    fn edges_plus_neighbors_give_zero_constant(seed in 0u64..10_000, folds in 1usize..4) {
        let g = gen_depth_3d(&GenSpec3D { rows: 20, cols: 24, num_folds: folds, max_value: 2.0, seed }).unwrap();
        let spec = SamplingSpec::new(Strategy::EdgesPlusNeighbors { tol: 2e-6 });
        let s = draw_samples(&spec, Source::Image(&g.image)).unwrap();
        let op = Operator::delta(20, 24).unwrap();
        let supp = SupportPartition::of(&op, g.image.as_slice(), default_curvature_tol(g.image.as_slice())).unwrap();
        prop_assert_eq!(exact_recovery_constant(&op, &s, &supp).unwrap(), 0.0);
    }
}
