//! Sample-set construction strategies.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{corner_set, edge_mask};
use crate::error::{Error, Result};
use crate::model::{DepthImage, Profile1D, SampleSet, Shape};
use crate::scalar::linf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// `ceil(fraction * n)` distinct locations from a seeded shuffle.
    Uniform { fraction: f64, seed: u64 },
    /// Pairs of consecutive rows and columns every `spacing` lines, plus
    /// the first and last two rows and columns.
    Grid { spacing_r: usize, spacing_c: usize },
    /// One twin sample inside each linear segment between the given
    /// one-based corners, plus both endpoints.
    TwinPerSegment { corners: Vec<usize>, seed: u64 },
    /// Corners of the supplied 1D profile and their neighbors.
    CornersPlusNeighbors { tol: f64 },
    /// Edge pixels of the supplied image and their 4-neighbors.
    EdgesPlusNeighbors { tol: f64 },
    /// Pixels whose centered-difference gradient magnitude exceeds the
    /// threshold.
    ImageEdges { gradient_tol: f64 },
    /// One-based indices into the vectorized domain.
    Explicit(Vec<usize>),
}

impl Strategy {
    /// Stable one-byte tag used in file headers.
    pub fn code(&self) -> u8 {
        match self {
            Strategy::Uniform { .. } => 1,
            Strategy::Grid { .. } => 2,
            Strategy::TwinPerSegment { .. } => 3,
            Strategy::CornersPlusNeighbors { .. } => 4,
            Strategy::EdgesPlusNeighbors { .. } => 5,
            Strategy::ImageEdges { .. } => 6,
            Strategy::Explicit(_) => 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub strategy: Strategy,
    pub add_neighbors: bool,
    pub add_boundary: bool,
}

impl SamplingSpec {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            add_neighbors: false,
            add_boundary: false,
        }
    }

    pub fn with_neighbors(mut self) -> Self {
        self.add_neighbors = true;
        self
    }

    pub fn with_boundary(mut self) -> Self {
        self.add_boundary = true;
        self
    }
}

/// What a strategy samples from: a bare domain or actual data.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Shape(Shape),
    Profile(&'a Profile1D<f64>),
    Image(&'a DepthImage<f64>),
}

impl Source<'_> {
    fn shape(&self) -> Shape {
        match self {
            Source::Shape(s) => *s,
            Source::Profile(p) => Shape::Line(p.len()),
            Source::Image(z) => z.shape(),
        }
    }
}

pub fn draw_samples(spec: &SamplingSpec, source: Source<'_>) -> Result<SampleSet> {
    let shape = source.shape();
    let n = shape.len();
    let mut pos: Vec<usize> = match &spec.strategy {
        Strategy::Uniform { fraction, seed } => {
            if !(*fraction > 0.0 && *fraction <= 1.0) {
                return Err(Error::Parameter(format!("fraction must be in (0, 1], got {fraction}")));
            }
            let k = ((fraction * n as f64).ceil() as usize).min(n);
            if k < 2 {
                return Err(Error::Arity { needed: 2, got: k });
            }
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            all.truncate(k);
            all
        }
        Strategy::Grid { spacing_r, spacing_c } => {
            let (r, c) = shape
                .grid()
                .ok_or_else(|| Error::Parameter("grid sampling needs an image domain".into()))?;
            if *spacing_r < 2 || *spacing_c < 2 {
                return Err(Error::Parameter("grid spacings must be at least 2".into()));
            }
            let rows = pair_lines(r, *spacing_r);
            let cols = pair_lines(c, *spacing_c);
            (0..n).filter(|p| rows[p % r] || cols[p / r]).collect()
        }
        Strategy::TwinPerSegment { corners, seed } => {
            let Shape::Line(n) = shape else {
                return Err(Error::Parameter("twin sampling needs a 1D domain".into()));
            };
            twin_positions(n, corners, *seed)?
        }
        Strategy::CornersPlusNeighbors { tol } => {
            let Source::Profile(p) = source else {
                return Err(Error::Parameter("corner sampling needs the 1D profile".into()));
            };
            let corners: Vec<usize> = corner_set(p, *tol).iter().map(|c| c - 1).collect();
            with_neighbors(&corners, shape)
        }
        Strategy::EdgesPlusNeighbors { tol } => {
            let Source::Image(z) = source else {
                return Err(Error::Parameter("edge sampling needs the image".into()));
            };
            let edges: Vec<usize> = edge_mask(z, *tol)
                .iter()
                .enumerate()
                .filter(|(_, e)| **e)
                .map(|(p, _)| p)
                .collect();
            with_neighbors(&edges, shape)
        }
        Strategy::ImageEdges { gradient_tol } => {
            let Source::Image(z) = source else {
                return Err(Error::Parameter("gradient sampling needs the image".into()));
            };
            gradient_edges(z, *gradient_tol)
        }
        Strategy::Explicit(list) => {
            let set = SampleSet::from_indices(shape, list.iter().copied())?;
            set.positions().to_vec()
        }
    };
    if spec.add_neighbors {
        pos = with_neighbors(&pos, shape);
    }
    if spec.add_boundary {
        pos.extend(boundary(shape));
    }
    if pos.is_empty() {
        return Err(Error::Arity { needed: 1, got: 0 });
    }
    SampleSet::from_positions(shape, pos)
}

/// Lines `0, 1`, `s, s + 1`, `2s, 2s + 1`, ... and the last two lines.
fn pair_lines(len: usize, spacing: usize) -> Vec<bool> {
    let mut on = vec![false; len];
    let mut k = 0;
    while k < len {
        on[k] = true;
        if k + 1 < len {
            on[k + 1] = true;
        }
        k += spacing;
    }
    on[len.saturating_sub(2)..].iter_mut().for_each(|v| *v = true);
    on
}

fn twin_positions(n: usize, corners: &[usize], seed: u64) -> Result<Vec<usize>> {
    let mut cs: Vec<usize> = corners.to_vec();
    cs.sort_unstable();
    cs.dedup();
    if cs.iter().any(|&c| c < 2 || c >= n) {
        return Err(Error::Parameter("corners must be interior one-based indices".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut knots = vec![0usize];
    knots.extend(cs.iter().map(|c| c - 1));
    knots.push(n - 1);
    let mut pos = vec![0, n - 1];
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        // prefer a twin strictly between the corners
        let (lo, hi) = if b >= a + 3 { (a + 1, b - 2) } else { (a, b - 1) };
        let t = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        pos.extend([t, t + 1]);
    }
    Ok(pos)
}

fn boundary(shape: Shape) -> Vec<usize> {
    match shape {
        Shape::Line(n) => vec![0, n - 1],
        Shape::Grid { rows, cols } => (0..rows * cols)
            .filter(|p| {
                let (i, j) = (p % rows, p / rows);
                i == 0 || j == 0 || i + 1 == rows || j + 1 == cols
            })
            .collect(),
    }
}

fn with_neighbors(pos: &[usize], shape: Shape) -> Vec<usize> {
    let mut out = Vec::with_capacity(pos.len() * 5);
    match shape {
        Shape::Line(n) => {
            for &p in pos {
                out.push(p);
                if p > 0 {
                    out.push(p - 1);
                }
                if p + 1 < n {
                    out.push(p + 1);
                }
            }
        }
        Shape::Grid { rows, cols } => {
            for &p in pos {
                let (i, j) = (p % rows, p / rows);
                out.push(p);
                if i > 0 {
                    out.push(p - 1);
                }
                if i + 1 < rows {
                    out.push(p + 1);
                }
                if j > 0 {
                    out.push(p - rows);
                }
                if j + 1 < cols {
                    out.push(p + rows);
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn gradient_edges(z: &DepthImage<f64>, tol: f64) -> Vec<usize> {
    let (r, c) = (z.rows(), z.cols());
    let diff = |lo: f64, hi: f64, span: usize| (hi - lo) / span.max(1) as f64;
    (0..r * c)
        .filter(|&p| {
            let (i, j) = (p % r, p / r);
            let (i0, i1) = (i.saturating_sub(1), (i + 1).min(r - 1));
            let (j0, j1) = (j.saturating_sub(1), (j + 1).min(c - 1));
            let gy = diff(z.get(i0, j), z.get(i1, j), i1 - i0);
            let gx = diff(z.get(i, j0), z.get(i, j1), j1 - j0);
            gx.hypot(gy) > tol
        })
        .collect()
}

/// Union with the in-range axis neighbors of every sample.
pub fn add_neighbors(samples: &SampleSet) -> SampleSet {
    let pos = with_neighbors(samples.positions(), samples.shape());
    SampleSet::from_positions(samples.shape(), pos).expect("superset of a nonempty set")
}

/// Relative curvature tolerance used for corner and edge detection on
/// generated data: `1e-9 * max(1, ||z||_inf)`.
pub fn detection_tol(z: &[f64]) -> f64 {
    1e-9 * linf(z).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::grid_patches;
    use proptest::prelude::*;
    use super::Strategy;

    #[test]
    fn uniform_full_and_deterministic() {
        let spec = SamplingSpec::new(Strategy::Uniform { fraction: 1.0, seed: 3 });
        let s = draw_samples(&spec, Source::Shape(Shape::Line(10))).unwrap();
        assert_eq!(s.len(), 10);
        let spec = SamplingSpec::new(Strategy::Uniform { fraction: 0.3, seed: 9 });
        let a = draw_samples(&spec, Source::Shape(Shape::Line(100))).unwrap();
        let b = draw_samples(&spec, Source::Shape(Shape::Line(100))).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        let tiny = SamplingSpec::new(Strategy::Uniform { fraction: 0.01, seed: 1 });
        assert!(matches!(
            draw_samples(&tiny, Source::Shape(Shape::Line(50))),
            Err(Error::Arity { .. })
        ));
    }

    #[test]
    fn grid_includes_boundary_pairs() {
        let spec = SamplingSpec::new(Strategy::Grid { spacing_r: 5, spacing_c: 5 });
        let s = draw_samples(&spec, Source::Shape(Shape::Grid { rows: 10, cols: 10 })).unwrap();
        let m = s.mask();
        for line in [0, 1, 8, 9] {
            assert!((0..10).all(|k| m[k * 10 + line]), "row {line}");
            assert!((0..10).all(|k| m[line * 10 + k]), "col {line}");
        }
        assert!(grid_patches(&s).is_ok());
    }

    #[test]
    fn corners_plus_neighbors_on_tent() {
        let p = Profile1D::new(vec![0.0, 1.0, 2.0, 1.0, 0.0]).unwrap();
        let spec = SamplingSpec::new(Strategy::CornersPlusNeighbors { tol: 1e-9 });
        let s = draw_samples(&spec, Source::Profile(&p)).unwrap();
        assert_eq!(s.one_based(), vec![2, 3, 4]);
    }

    #[test]
    fn neighbor_examples() {
        let s = SampleSet::from_indices(Shape::Line(9), [5]).unwrap();
        assert_eq!(add_neighbors(&s).one_based(), vec![4, 5, 6]);
        let s = SampleSet::from_indices(Shape::Line(9), [1]).unwrap();
        assert_eq!(add_neighbors(&s).one_based(), vec![1, 2]);
        let s = SampleSet::from_pixels(5, 5, [(1, 1)]).unwrap();
        let mut px = add_neighbors(&s).pixels().unwrap();
        px.sort();
        assert_eq!(px, vec![(1, 1), (1, 2), (2, 1)]);
    }

    #[test]
    fn twins_sit_inside_segments() {
        let corners = vec![10, 25, 40];
        let spec = SamplingSpec::new(Strategy::TwinPerSegment {
            corners: corners.clone(),
            seed: 5,
        });
        let s = draw_samples(&spec, Source::Shape(Shape::Line(50))).unwrap();
        let idx = s.one_based();
        assert!(idx.contains(&1) && idx.contains(&50));
        let knots = [1, 10, 25, 40, 50];
        for w in knots.windows(2) {
            assert!(idx.iter().any(|&t| t > w[0] && t + 1 < w[1] && idx.contains(&(t + 1))));
        }
        assert!(crate::analysis::sign_consistent(&vec![0.0; 50], &s, crate::analysis::SignMode::TwoD, None).is_ok());
    }

    #[test]
    fn explicit_and_boundary() {
        let spec = SamplingSpec::new(Strategy::Explicit(vec![4])).with_boundary();
        let s = draw_samples(&spec, Source::Shape(Shape::Line(9))).unwrap();
        assert_eq!(s.one_based(), vec![1, 4, 9]);
        let bad = SamplingSpec::new(Strategy::Explicit(vec![10]));
        assert!(draw_samples(&bad, Source::Shape(Shape::Line(9))).is_err());
    }

    #[test]
    fn gradient_edges_find_a_step() {
        let z = DepthImage::from_fn(6, 6, |_, j| if j < 3 { 1.0 } else { 2.0 }).unwrap();
        let spec = SamplingSpec::new(Strategy::ImageEdges { gradient_tol: 0.1 });
        let s = draw_samples(&spec, Source::Image(&z)).unwrap();
        let cols: std::collections::BTreeSet<usize> = s.pixels().unwrap().iter().map(|p| p.1).collect();
        assert_eq!(cols.into_iter().collect::<Vec<_>>(), vec![3, 4]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]

        #[test]
        fn grid_patches_are_framed_rectangles(r in 6usize..30, c in 6usize..30, sr in 2usize..8, sc in 2usize..8) {
            let spec = SamplingSpec::new(Strategy::Grid { spacing_r: sr, spacing_c: sc });
            let s = draw_samples(&spec, Source::Shape(Shape::Grid { rows: r, cols: c })).unwrap();
            prop_assert!(grid_patches(&s).is_ok());
        }

        #[test]
        fn uniform_is_deterministic(seed in 0u64..1000, f in 0.05f64..1.0) {
            let spec = SamplingSpec::new(Strategy::Uniform { fraction: f, seed });
            let a = draw_samples(&spec, Source::Shape(Shape::Line(80))).unwrap();
            prop_assert_eq!(a.clone(), draw_samples(&spec, Source::Shape(Shape::Line(80))).unwrap());
            prop_assert_eq!(a.len(), (f * 80.0).ceil() as usize);
        }
    }
}
