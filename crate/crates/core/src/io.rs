//! File formats: CSV grids, 16-bit PGM depth maps, JSON run manifests and
//! a compact container for sparse depth samples.
//!
//! CSV files start with a `rows,cols` line followed by one line per image
//! row. PGM files store millimetres as big-endian `u16` with maxval 65535.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::MetricsReport;
use crate::error::{Error, Result};
use crate::model::{DepthImage, Measurements, SampleSet, Shape};
use crate::recovery::{reconstruct, Objective};
use crate::sampling::{draw_samples, SamplingSpec, Source};
use crate::solver::SolverConfig;

const PGM_MAX_M: f64 = 65.535;
const CONTAINER_MAGIC: &[u8; 4] = b"SDC1";
/// Bound implied by rounding to whole millimetres.
pub const QUANTIZATION_EPS: f64 = 0.0005;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn csv_string(image: &DepthImage<f64>) -> String {
    let mut out = format!("{},{}\n", image.rows(), image.cols());
    for i in 0..image.rows() {
        let row: Vec<String> = image.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<DepthImage<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Format("empty csv".into()))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::Format(format!("bad csv header {header:?}"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Format(format!("csv header must be rows,cols, got {header:?}")));
    };
    let data: Vec<Vec<f64>> = lines
        .map(|l| {
            l.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad csv value {t:?}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    if data.len() != rows || data.iter().any(|r| r.len() != cols) {
        return Err(Error::Format(format!("csv body does not match {rows}x{cols}")));
    }
    DepthImage::from_rows(&data)
}

pub fn write_csv(path: impl AsRef<Path>, image: &DepthImage<f64>) -> Result<()> {
    write(path.as_ref(), csv_string(image).as_bytes())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<DepthImage<f64>> {
    let bytes = read(path.as_ref())?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Format("csv is not utf-8".into()))?;
    parse_csv(&text)
}

fn to_mm(v: f64) -> Result<u16> {
    if !(0.0..=PGM_MAX_M).contains(&v) {
        return Err(Error::Range(format!("depth {v} m outside [0, {PGM_MAX_M}] m")));
    }
    Ok((v * 1000.0).round() as u16)
}

pub fn encode_pgm16(image: &DepthImage<f64>) -> Result<Vec<u8>> {
    let mut out = format!("P5\n{} {}\n65535\n", image.cols(), image.rows()).into_bytes();
    out.reserve(2 * image.as_slice().len());
    for i in 0..image.rows() {
        for v in image.row(i) {
            out.extend_from_slice(&to_mm(v)?.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pgm16(bytes: &[u8]) -> Result<DepthImage<f64>> {
    let mut at = 0;
    let mut token = || -> Result<&[u8]> {
        loop {
            match bytes.get(at) {
                Some(b'#') => {
                    while bytes.get(at).is_some_and(|b| *b != b'\n') {
                        at += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => at += 1,
                Some(_) => break,
                None => return Err(Error::Format("truncated pgm header".into())),
            }
        }
        let start = at;
        while bytes.get(at).is_some_and(|b| !b.is_ascii_whitespace()) {
            at += 1;
        }
        Ok(&bytes[start..at])
    };
    if token()? != b"P5" {
        return Err(Error::Format("not a binary pgm".into()));
    }
    let mut num = || -> Result<usize> {
        let t = token()?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad pgm header field".into()))
    };
    let (w, h, maxval) = (num()?, num()?, num()?);
    if !(256..=65535).contains(&maxval) {
        return Err(Error::Format(format!("expected a 16-bit pgm, maxval {maxval}")));
    }
    // exactly one whitespace byte separates header and raster
    let raster = bytes.get(at + 1..).unwrap_or_default();
    if raster.len() != 2 * w * h {
        return Err(Error::Format(format!("pgm raster has {} bytes, expected {}", raster.len(), 2 * w * h)));
    }
    let mm = |k: usize| u16::from_be_bytes([raster[2 * k], raster[2 * k + 1]]) as f64 / 1000.0;
    DepthImage::from_fn(h, w, |i, j| mm(i * w + j))
}

pub fn write_pgm16(path: impl AsRef<Path>, image: &DepthImage<f64>) -> Result<()> {
    write(path.as_ref(), &encode_pgm16(image)?)
}

pub fn read_pgm16(path: impl AsRef<Path>) -> Result<DepthImage<f64>> {
    decode_pgm16(&read(path.as_ref())?)
}

/// Record of one run: what was invoked, with which settings, and how it
/// went.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub version: String,
    pub config: serde_json::Value,
    pub metrics: Option<MetricsReport>,
    /// Command-specific outputs such as objective values.
    #[serde(default)]
    pub results: serde_json::Value,
    pub timing_ms: f64,
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Format(e.to_string()))?;
    write(path.as_ref(), text.as_bytes())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<RunManifest> {
    serde_json::from_slice(&read(path.as_ref())?).map_err(|e| Error::Format(e.to_string()))
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn get_varint(bytes: &[u8], at: &mut usize) -> Result<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let b = *bytes.get(*at).ok_or_else(|| Error::Format("truncated varint".into()))?;
        *at += 1;
        v |= u64::from(b & 0x7f) << shift;
        if b & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(Error::Format("varint overflow".into()))
}

fn get<const N: usize>(bytes: &[u8], at: &mut usize) -> Result<[u8; N]> {
    let s = bytes
        .get(*at..*at + N)
        .ok_or_else(|| Error::Format("truncated container".into()))?;
    *at += N;
    Ok(s.try_into().expect("length checked"))
}

/// Serializes image samples as millimetre values plus delta-coded
/// column-major positions.
///
/// Layout (little-endian): magic `SDC1`, `u32` rows, `u32` cols, `f64`
/// bound, `u8` strategy code (see [`crate::sampling::Strategy::code`]), `u32` count,
/// `count` varint position deltas, `count` `u16` values.
pub fn encode_samples(meas: &Measurements<f64>, strategy: u8) -> Result<Vec<u8>> {
    let (rows, cols) = meas
        .samples()
        .shape()
        .grid()
        .ok_or_else(|| Error::Parameter("the container stores image samples".into()))?;
    let pos = meas.samples().positions();
    let mut out = Vec::with_capacity(24 + 3 * pos.len());
    out.extend_from_slice(CONTAINER_MAGIC);
    for v in [rows, cols] {
        out.extend_from_slice(&u32::try_from(v).map_err(|_| Error::Range("image too large".into()))?.to_le_bytes());
    }
    out.extend_from_slice(&(meas.epsilon() + QUANTIZATION_EPS).to_le_bytes());
    out.push(strategy);
    out.extend_from_slice(&(pos.len() as u32).to_le_bytes());
    let mut prev = 0;
    for &p in pos {
        put_varint(&mut out, (p - prev) as u64);
        prev = p;
    }
    for &v in meas.values() {
        out.extend_from_slice(&to_mm(v)?.to_le_bytes());
    }
    Ok(out)
}

/// Decoded sample container.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub measurements: Measurements<f64>,
    pub strategy: u8,
}

pub fn decode_samples(bytes: &[u8]) -> Result<Container> {
    if bytes.get(..4) != Some(CONTAINER_MAGIC) {
        return Err(Error::Format("not a sample container".into()));
    }
    let mut at = 4;
    let rows = u32::from_le_bytes(get(bytes, &mut at)?) as usize;
    let cols = u32::from_le_bytes(get(bytes, &mut at)?) as usize;
    let eps = f64::from_le_bytes(get(bytes, &mut at)?);
    let [strategy] = get(bytes, &mut at)?;
    let count = u32::from_le_bytes(get(bytes, &mut at)?) as usize;
    let mut pos = Vec::with_capacity(count);
    let mut p = 0usize;
    for k in 0..count {
        let d = get_varint(bytes, &mut at)? as usize;
        if k > 0 && d == 0 {
            return Err(Error::Format("repeated sample position".into()));
        }
        p += d;
        pos.push(p);
    }
    let values = (0..count)
        .map(|_| Ok(u16::from_le_bytes(get(bytes, &mut at)?) as f64 / 1000.0))
        .collect::<Result<Vec<_>>>()?;
    if at != bytes.len() {
        return Err(Error::Format("trailing bytes in container".into()));
    }
    let samples = SampleSet::from_positions(Shape::Grid { rows, cols }, pos)?;
    Ok(Container {
        measurements: Measurements::new(samples, values, eps)?,
        strategy,
    })
}

/// Size of the same image stored densely as 16-bit values.
pub fn dense_bytes(rows: usize, cols: usize) -> usize {
    2 * rows * cols
}

/// Samples `image` with `spec` and packs the exact values.
pub fn compress(image: &DepthImage<f64>, spec: &SamplingSpec) -> Result<Vec<u8>> {
    let samples = draw_samples(spec, Source::Image(image))?;
    encode_samples(&Measurements::from_truth(image, samples, 0.0)?, spec.strategy.code())
}

/// Fills the image back in from a decoded container.
pub fn decompress(bytes: &[u8], objective: &Objective, cfg: &SolverConfig<f64>) -> Result<DepthImage<f64>> {
    let meas = decode_samples(bytes)?.measurements;
    let (rows, cols) = meas.samples().shape().grid().expect("container holds a grid");
    let res = reconstruct(&meas, objective, cfg)?;
    DepthImage::from_column_major(rows, cols, res.z_star)
}
