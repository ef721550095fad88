use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};
use sparse_depth::analysis::{
    corner_set, default_curvature_tol, envelope_2d, envelope_bound_3d, exact_recovery_constant, optimality_certificate,
    sign_consistent, SignMode, SupportPartition,
};
use sparse_depth::io::{compress, decode_samples, decompress, dense_bytes};
use sparse_depth::sampling::detection_tol;
use sparse_depth::{
    algorithm1, draw_samples, gen_depth_3d, gen_profile_1d, measure, metrics, multiframe_accumulate,
    naive_interpolation, reconstruct, superresolve, CameraIntrinsics, DepthImage, GenSpec1D, GenSpec3D, Meas,
    MetricsReport, Objective, Operator, Pose, SamplingSpec, Shape, SolverConfig, Source, Strategy,
};

use crate::args::*;
use crate::files::{read_field, read_image, read_json, write_image, write_profile, write_vector, Field, SamplesFile};

/// What a command reports back for the manifest.
#[derive(Default)]
pub struct Outcome {
    pub seed: Option<u64>,
    pub metrics: Option<MetricsReport>,
    pub results: Value,
}

impl Outcome {
    fn new(results: Value) -> Self {
        Self {
            results,
            ..Self::default()
        }
    }

    fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn metrics(mut self, m: Option<MetricsReport>) -> Self {
        self.metrics = m;
        self
    }
}

pub fn gen(a: &GenArgs) -> Result<Outcome> {
    if a.one_d {
        let g = gen_profile_1d(&GenSpec1D {
            n: a.n,
            num_corners: a.corners,
            max_value: a.max_value,
            seed: a.seed,
        })?;
        write_profile(&a.output, g.profile.values())?;
        Ok(Outcome::new(json!({ "corner_count": g.corners.len(), "corners": g.corners })).seed(a.seed))
    } else {
        let g = gen_depth_3d(&GenSpec3D {
            rows: a.rows,
            cols: a.cols,
            num_folds: a.folds,
            max_value: a.max_value,
            seed: a.seed,
        })?;
        write_image(&a.output, &g.image)?;
        Ok(Outcome::new(json!({ "folds": g.folds, "edge_count": g.edges.len() })).seed(a.seed))
    }
}

fn strategy(a: &SampleArgs, field: &Field) -> Result<Strategy> {
    let tol = a.tol.unwrap_or_else(|| detection_tol(field.values()));
    Ok(match a.strategy {
        StrategyArg::Uniform => Strategy::Uniform {
            fraction: a.perc_samples / 100.0,
            seed: a.seed,
        },
        StrategyArg::Grid => Strategy::Grid {
            spacing_r: a.spacing_r,
            spacing_c: a.spacing_c,
        },
        StrategyArg::Twin => {
            let Field::Profile(p) = field else {
                bail!("twin sampling needs a 1D profile");
            };
            Strategy::TwinPerSegment {
                corners: corner_set(p, tol),
                seed: a.seed,
            }
        }
        StrategyArg::Corners => Strategy::CornersPlusNeighbors { tol },
        StrategyArg::Edges => Strategy::EdgesPlusNeighbors { tol },
        StrategyArg::ImageEdges => Strategy::ImageEdges {
            gradient_tol: a.tol.context("image-edges sampling needs --tol")?,
        },
    })
}

fn source(field: &Field) -> Source<'_> {
    match field {
        Field::Profile(p) => Source::Profile(p),
        Field::Image(im) => Source::Image(im),
    }
}

pub fn sample(a: &SampleArgs) -> Result<Outcome> {
    let field = read_field(&a.input)?;
    let mut spec = SamplingSpec::new(strategy(a, &field)?);
    spec.add_neighbors = a.add_neighbors;
    spec.add_boundary = a.add_boundary;
    let set = draw_samples(&spec, source(&field))?;
    let count = set.len();
    // Offset the noise stream from the sampling stream.
    let meas = measure(field.values(), set, a.eps, a.seed.wrapping_add(1))?;
    SamplesFile::from_measurements(&meas).write(&a.output)?;
    let total = field.values().len();
    Ok(Outcome::new(json!({
        "strategy": spec.strategy,
        "samples": count,
        "total": total,
        "fraction": count as f64 / total as f64,
    }))
    .seed(a.seed))
}

#[derive(Deserialize)]
struct Coords {
    vertical: Vec<f64>,
    horizontal: Vec<f64>,
}

/// The ℓ1 objective for a domain. On a profile the diagonal kernels have
/// nothing to act on, so `l1diag` falls back to the 1D operator.
fn objective(choice: ObjectiveArg, shape: Shape, coords: Option<&Path>) -> Result<Objective> {
    Ok(match (choice, shape) {
        (ObjectiveArg::L1diag, Shape::Grid { .. }) => Objective::L1diag,
        (ObjectiveArg::L1cart, Shape::Grid { .. }) => {
            let c: Coords = read_json(coords.context("l1cart needs --coords")?)?;
            Objective::cart(c.vertical, c.horizontal)
        }
        (ObjectiveArg::L1cart, Shape::Line(_)) => bail!("l1cart needs an image"),
        _ => Objective::L1,
    })
}

fn operator_arg(op: OperatorArg, shape: Shape) -> Result<Operator> {
    let choice = match op {
        OperatorArg::L1 => ObjectiveArg::L1,
        OperatorArg::L1diag => ObjectiveArg::L1diag,
    };
    Ok(objective(choice, shape, None)?.operator(shape)?)
}

fn compare(estimate: &[f64], truth: Option<&Field>, sent: usize) -> Result<Option<MetricsReport>> {
    truth
        .map(|t| {
            ensure!(t.values().len() == estimate.len(), "reference and reconstruction differ in size");
            Ok(metrics(estimate, t.values(), sent, estimate.len())?)
        })
        .transpose()
}

pub fn reconstruct_cmd(a: &ReconstructArgs) -> Result<Outcome> {
    let reference = a.input.as_deref().map(read_field).transpose()?;
    let meas = SamplesFile::read(&a.samples)?.measurements(reference.as_ref(), a.eps)?;
    let shape = meas.samples().shape();
    let cfg = a.solver.config();
    let (z, mut results) = match a.objective {
        ObjectiveArg::Naive => (naive_interpolation(&meas)?, json!({})),
        ObjectiveArg::A1 => {
            ensure!(matches!(shape, Shape::Line(_)), "a1 needs a 1D profile");
            let out = algorithm1(&meas, &cfg)?;
            let degenerate = out.degenerate_count();
            (out.profile.into_vec(), json!({ "segments": out.segments.len(), "degenerate_segments": degenerate }))
        }
        choice => {
            let obj = objective(choice, shape, a.coords.as_deref())?;
            let res = reconstruct(&meas, &obj, &cfg)?;
            let info = json!({ "converged": res.converged, "inner_iterations": res.inner_iterations });
            (res.z_star, info)
        }
    };
    let op = objective(a.objective, shape, a.coords.as_deref())?.operator(shape)?;
    let extra = json!({
        "objective": op.objective_value(&z)?,
        "feasibility_residual": meas.feasibility_violation(&z),
        "epsilon": meas.epsilon(),
        "samples": meas.samples().len(),
    });
    merge(&mut results, extra);
    write_vector(&a.output, shape, &z)?;
    let m = compare(&z, reference.as_ref(), meas.samples().len())?;
    Ok(Outcome::new(results).metrics(m))
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        a.extend(b);
    }
}

pub fn analyze(cmd: &AnalyzeCommand) -> Result<Outcome> {
    match cmd {
        AnalyzeCommand::Cer(a) => {
            let truth = read_field(&a.input)?;
            let set = SamplesFile::read(&a.samples)?.sample_set()?;
            ensure!(set.shape() == truth.shape(), "samples and profile differ in shape");
            let op = operator_arg(a.operator, set.shape())?;
            let tol = a.tol.unwrap_or_else(|| default_curvature_tol(truth.values()));
            let supp = SupportPartition::of(&op, truth.values(), tol)?;
            let cer = exact_recovery_constant(&op, &set, &supp)?;
            Ok(Outcome::new(json!({ "cer": cer, "exact_recovery": cer < 1.0, "support": supp.support().len() })))
        }
        AnalyzeCommand::Sign(a) => {
            let z = read_field(&a.input)?;
            let set = SamplesFile::read(&a.samples)?.sample_set()?;
            let mode = match set.shape() {
                Shape::Line(_) => SignMode::TwoD,
                Shape::Grid { .. } => SignMode::Grid,
            };
            let ok = sign_consistent(z.values(), &set, mode, a.tol)?;
            Ok(Outcome::new(json!({ "sign_consistent": ok })))
        }
        AnalyzeCommand::Envelope(a) => envelope(a),
        AnalyzeCommand::Certify(a) => {
            let z = read_field(&a.input)?;
            let meas = SamplesFile::read(&a.samples)?.measurements(None, a.eps)?;
            let op = operator_arg(a.operator, meas.samples().shape())?;
            let cert = optimality_certificate(&op, &meas, z.values(), a.tol)?;
            Ok(Outcome::new(json!({
                "certified": cert.is_certified(),
                "status": cert.status,
                "residuals": cert.residuals,
                "iterations": cert.iterations,
            })))
        }
    }
}

fn envelope(a: &EnvelopeArgs) -> Result<Outcome> {
    let meas = SamplesFile::read(&a.samples)?.measurements(None, a.eps)?;
    let estimate = a.estimate.as_deref().map(read_field).transpose()?;
    match meas.samples().shape() {
        Shape::Line(n) => {
            let env = envelope_2d(&meas)?;
            let width = env.width().into_iter().fold(0.0, f64::max);
            let mut results = json!({ "max_width": width });
            if let Some(z) = &estimate {
                merge(&mut results, json!({ "contains_estimate": env.contains(z.values(), 1e-9) }));
            }
            if let Some(out) = &a.output {
                let rows = vec![env.lower, env.upper];
                write_image(out, &DepthImage::from_rows(&rows)?)?;
            }
            merge(&mut results, json!({ "len": n }));
            Ok(Outcome::new(results))
        }
        Shape::Grid { .. } => {
            let Some(Field::Image(z)) = &estimate else {
                bail!("image envelopes need the reconstruction via --estimate");
            };
            let bound = envelope_bound_3d(&meas, z)?;
            let max = bound.as_slice().iter().copied().fold(0.0, f64::max);
            if let Some(out) = &a.output {
                write_image(out, &bound)?;
            }
            Ok(Outcome::new(json!({ "max_bound": max })))
        }
    }
}

/// Averaged metrics of one method at one sweep point.
#[derive(Default, Clone, Copy)]
struct Mean {
    mean_l1: f64,
    mse: f64,
    psnr: f64,
    saving: f64,
}

impl Mean {
    fn add(mut self, m: &MetricsReport) -> Self {
        self.mean_l1 += m.mean_l1;
        self.mse += m.mse;
        self.psnr += m.psnr;
        self.saving += m.data_rate_saving;
        self
    }

    fn plus(self, o: Self) -> Self {
        Self {
            mean_l1: self.mean_l1 + o.mean_l1,
            mse: self.mse + o.mse,
            psnr: self.psnr + o.psnr,
            saving: self.saving + o.saving,
        }
    }

    fn scale(self, k: f64) -> Self {
        Self {
            mean_l1: self.mean_l1 * k,
            mse: self.mse * k,
            psnr: self.psnr * k,
            saving: self.saving * k,
        }
    }
}

struct Point {
    perc: f64,
    eps: f64,
    n: usize,
}

fn bench_instance(a: &BenchArgs, p: &Point, seed: u64, cfg: &SolverConfig<f64>) -> Result<(Mean, Mean)> {
    let (truth, shape, obj) = if a.three_d {
        let g = gen_depth_3d(&GenSpec3D {
            rows: p.n,
            cols: p.n,
            num_folds: a.folds,
            max_value: a.max_value,
            seed,
        })?;
        let shape = g.image.shape();
        (g.image.into_vec(), shape, Objective::L1diag)
    } else {
        let g = gen_profile_1d(&GenSpec1D {
            n: p.n,
            num_corners: a.corners,
            max_value: a.max_value,
            seed,
        })?;
        (g.profile.into_vec(), Shape::Line(p.n), Objective::L1)
    };
    let mut spec = SamplingSpec::new(Strategy::Uniform {
        fraction: p.perc / 100.0,
        seed: seed ^ 0x5eed,
    });
    spec.add_neighbors = a.add_neighbors;
    spec.add_boundary = a.add_boundary;
    let set = draw_samples(&spec, Source::Shape(shape))?;
    let sent = set.len();
    let meas: Meas = measure(&truth, set, p.eps, seed.wrapping_add(1))?;
    let l1 = reconstruct(&meas, &obj, cfg)?.z_star;
    let naive = naive_interpolation(&meas)?;
    let total = truth.len();
    Ok((
        Mean::default().add(&metrics(&l1, &truth, sent, total)?),
        Mean::default().add(&metrics(&naive, &truth, sent, total)?),
    ))
}

pub fn bench(a: &BenchArgs) -> Result<Outcome> {
    ensure!(a.seeds > 0, "need at least one seed");
    ensure!(!a.values.is_empty(), "need at least one sweep value");
    let cfg = a.solver.config();
    let mut table = String::from("sweep,value,method,mean_l1,mse,psnr,data_rate_saving,seeds\n");
    let mut rows = Vec::new();
    let sweep = match a.sweep {
        SweepArg::Fraction => "fraction",
        SweepArg::Eps => "eps",
        SweepArg::Size => "size",
    };
    for &v in &a.values {
        let p = match a.sweep {
            SweepArg::Fraction => Point {
                perc: v,
                eps: a.eps,
                n: a.n,
            },
            SweepArg::Eps => Point {
                perc: a.perc_samples,
                eps: v,
                n: a.n,
            },
            SweepArg::Size => {
                ensure!(v >= 1.0 && v.fract() == 0.0, "sizes must be positive integers, got {v}");
                Point {
                    perc: a.perc_samples,
                    eps: a.eps,
                    n: v as usize,
                }
            }
        };
        let seeds: Vec<u64> = (0..a.seeds).map(|k| a.first_seed + k).collect();
        let sums = seeds
            .par_iter()
            .map(|&s| bench_instance(a, &p, s, &cfg).with_context(|| format!("{sweep}={v}, seed {s}")))
            .try_reduce(|| (Mean::default(), Mean::default()), |x, y| Ok((x.0.plus(y.0), x.1.plus(y.1))))?;
        let k = 1.0 / a.seeds as f64;
        let methods = if a.three_d { "l1diag" } else { "l1" };
        for (name, m) in [(methods, sums.0.scale(k)), ("naive", sums.1.scale(k))] {
            table.push_str(&format!(
                "{sweep},{v},{name},{:e},{:e},{},{},{}\n",
                m.mean_l1, m.mse, m.psnr, m.saving, a.seeds
            ));
            rows.push(json!({ "value": v, "method": name, "mean_l1": m.mean_l1, "mse": m.mse, "psnr": m.psnr }));
        }
    }
    fs::write(&a.output, table).with_context(|| format!("writing {}", a.output.display()))?;
    Ok(Outcome::new(json!({ "sweep": sweep, "points": rows })).seed(a.first_seed))
}

pub fn compress_cmd(a: &CompressArgs) -> Result<Outcome> {
    let image = read_image(&a.input)?;
    let mut spec = SamplingSpec::new(Strategy::EdgesPlusNeighbors { tol: a.tol });
    spec.add_boundary = a.add_boundary;
    let bytes = compress(&image, &spec)?;
    fs::write(&a.output, &bytes).with_context(|| format!("writing {}", a.output.display()))?;
    let sent = decode_samples(&bytes)?.measurements.samples().len();
    let total = image.rows() * image.cols();
    let dense = dense_bytes(image.rows(), image.cols());
    Ok(Outcome::new(json!({
        "samples": sent,
        "total": total,
        "data_rate_saving": 1.0 - sent as f64 / total as f64,
        "bytes": bytes.len(),
        "dense_bytes": dense,
        "byte_saving": 1.0 - bytes.len() as f64 / dense as f64,
    })))
}

pub fn decompress_cmd(a: &DecompressArgs) -> Result<Outcome> {
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let container = decode_samples(&bytes)?;
    let obj = match a.operator {
        OperatorArg::L1 => Objective::L1,
        OperatorArg::L1diag => Objective::L1diag,
    };
    let image = decompress(&bytes, &obj, &a.solver.config())?;
    write_image(&a.output, &image)?;
    let truth = a.truth.as_deref().map(read_image).transpose()?.map(Field::Image);
    let sent = container.measurements.samples().len();
    let m = compare(image.as_slice(), truth.as_ref(), sent)?;
    Ok(Outcome::new(json!({
        "rows": image.rows(),
        "cols": image.cols(),
        "samples": sent,
        "strategy_code": container.strategy,
        "feasibility_residual": container.measurements.feasibility_violation(image.as_slice()),
    }))
    .metrics(m))
}

pub fn superres(a: &SuperresArgs) -> Result<Outcome> {
    let low = read_image(&a.input)?;
    let valid = a.valid.as_deref().map(|p| SamplesFile::read(p)?.sample_set()).transpose()?;
    let (fr, fc) = (a.factor_r.unwrap_or(a.factor), a.factor_c.unwrap_or(a.factor));
    let high = superresolve(&low, valid.as_ref(), fr, fc, &a.solver.config())?;
    write_image(&a.output, &high)?;
    Ok(Outcome::new(json!({ "rows": high.rows(), "cols": high.cols(), "factor_r": fr, "factor_c": fc })))
}

pub fn multiframe(a: &MultiframeArgs) -> Result<Outcome> {
    let frames = a
        .frames
        .iter()
        .map(|p| SamplesFile::read(p)?.measurements(None, None))
        .collect::<Result<Vec<_>>>()?;
    let poses: Vec<Pose> = read_json::<Vec<Pose>>(&a.poses)?
        .iter()
        .map(|p| Pose::new(p.rotation(), p.offset()))
        .collect::<sparse_depth::Result<_>>()?;
    let intr = CameraIntrinsics::new(a.fx, a.fy, a.cx, a.cy)?;
    let horizon = a.horizon.unwrap_or(frames.len());
    let merged = multiframe_accumulate(&frames, &poses, &intr, horizon, &a.schedule)?;
    SamplesFile::from_measurements(&merged).write(&a.output)?;
    let mut results = json!({ "frames": frames.len(), "horizon": horizon, "samples": merged.samples().len() });
    if let Some(path) = &a.image {
        let res = reconstruct(&merged, &Objective::L1diag, &a.solver.config())?;
        write_vector(path, merged.samples().shape(), &res.z_star)?;
        merge(&mut results, json!({ "objective": res.objective, "feasibility_residual": res.feasibility_residual }));
    }
    Ok(Outcome::new(results))
}
