use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sparse_depth::io::{read_csv, read_pgm16, write_csv, write_pgm16};
use sparse_depth::{subsample, DepthImage, Image, Meas, Measurements, Profile, SampleSet, Shape};

/// A loaded grid file: single-row or single-column grids are profiles.
pub enum Field {
    Profile(Profile),
    Image(Image),
}

impl Field {
    pub fn values(&self) -> &[f64] {
        match self {
            Field::Profile(p) => p.values(),
            Field::Image(im) => im.as_slice(),
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            Field::Profile(p) => Shape::Line(p.len()),
            Field::Image(im) => im.shape(),
        }
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

pub fn read_image(path: &Path) -> Result<Image> {
    let im = if is_pgm(path) { read_pgm16(path) } else { read_csv(path) };
    im.with_context(|| format!("reading {}", path.display()))
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    let res = if is_pgm(path) { write_pgm16(path, image) } else { write_csv(path, image) };
    res.with_context(|| format!("writing {}", path.display()))
}

pub fn read_field(path: &Path) -> Result<Field> {
    let im = read_image(path)?;
    if im.rows() == 1 || im.cols() == 1 {
        Ok(Field::Profile(Profile::new(im.into_vec())?))
    } else {
        Ok(Field::Image(im))
    }
}

pub fn write_profile(path: &Path, z: &[f64]) -> Result<()> {
    write_image(path, &DepthImage::from_column_major(1, z.len(), z.to_vec())?)
}

/// Writes `z` with the layout of `shape`.
pub fn write_vector(path: &Path, shape: Shape, z: &[f64]) -> Result<()> {
    match shape {
        Shape::Line(_) => write_profile(path, z),
        Shape::Grid { rows, cols } => write_image(path, &DepthImage::from_column_major(rows, cols, z.to_vec())?),
    }
}

/// On-disk sample set: one-based indices into the column-major vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplesFile {
    pub len: usize,
    #[serde(default)]
    pub shape: Option<[usize; 2]>,
    pub indices: Vec<usize>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<f64>>,
}

impl SamplesFile {
    pub fn from_set(samples: &SampleSet, values: Option<Vec<f64>>, epsilon: f64) -> Self {
        let shape = samples.shape();
        Self {
            len: shape.len(),
            shape: shape.grid().map(|(r, c)| [r, c]),
            indices: samples.one_based(),
            values,
            epsilon,
            bounds: None,
        }
    }

    pub fn from_measurements(meas: &Meas) -> Self {
        let mut f = Self::from_set(meas.samples(), Some(meas.values().to_vec()), meas.epsilon());
        if meas.has_per_sample_bounds() {
            f.bounds = Some(meas.bounds());
        }
        f
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing samples file {}", path.display()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn shape(&self) -> Result<Shape> {
        let shape = match self.shape {
            Some([rows, cols]) => Shape::Grid { rows, cols },
            None => Shape::Line(self.len),
        };
        if shape.len() != self.len {
            bail!("samples file: shape {:?} does not hold {} entries", self.shape, self.len);
        }
        Ok(shape)
    }

    pub fn sample_set(&self) -> Result<SampleSet> {
        Ok(SampleSet::from_indices(self.shape()?, self.indices.iter().copied())?)
    }

    /// Builds measurements. Values come from the file, else from
    /// `reference`; `eps` overrides the stored bounds.
    pub fn measurements(&self, reference: Option<&Field>, eps: Option<f64>) -> Result<Meas> {
        let set = self.sample_set()?;
        if set.len() != self.indices.len() {
            bail!("samples file lists duplicate indices");
        }
        let values = match (&self.values, reference) {
            (Some(v), _) => v.clone(),
            (None, Some(f)) => {
                if f.shape() != set.shape() {
                    bail!("reference shape {:?} does not match samples shape {:?}", f.shape(), set.shape());
                }
                subsample(&Profile::new(f.values().to_vec())?, &set)?
            }
            (None, None) => bail!("samples file has no values; pass a reference with --in"),
        };
        // Values are stored in index order; the sample set sorts positions.
        let mut order: Vec<usize> = (0..self.indices.len()).collect();
        order.sort_by_key(|&k| self.indices[k]);
        let sorted = |v: &[f64]| -> Result<Vec<f64>> {
            if v.len() != order.len() {
                bail!("samples file: {} indices but {} values", order.len(), v.len());
            }
            Ok(order.iter().map(|&k| v[k]).collect())
        };
        let values = if self.values.is_some() { sorted(&values)? } else { values };
        let meas = match (eps, &self.bounds) {
            (Some(e), _) => Measurements::new(set, values, e)?,
            (None, Some(b)) => Measurements::with_bounds(set, values, sorted(b)?)?,
            (None, None) => Measurements::new(set, values, self.epsilon)?,
        };
        Ok(meas)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `out.csv` -> `out.csv.manifest.json`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(manifest_path_for(Path::new("runs/out.csv")), PathBuf::from("runs/out.csv.manifest.json"));
    }

    #[test]
    fn unsorted_indices_keep_their_values() {
        let f = SamplesFile {
            len: 5,
            shape: None,
            indices: vec![5, 1, 3],
            values: Some(vec![50.0, 10.0, 30.0]),
            epsilon: 0.0,
            bounds: Some(vec![0.5, 0.1, 0.3]),
        };
        let m = f.measurements(None, None).unwrap();
        assert_eq!(m.samples().one_based(), vec![1, 3, 5]);
        assert_eq!(m.values(), &[10.0, 30.0, 50.0]);
        assert_eq!(m.bounds(), vec![0.1, 0.3, 0.5]);
        assert_eq!(f.measurements(None, Some(0.2)).unwrap().bounds(), vec![0.2; 3]);
    }

    #[test]
    fn values_fall_back_to_reference() {
        let f = SamplesFile::from_set(&SampleSet::from_indices(Shape::Line(4), [1, 4]).unwrap(), None, 0.1);
        assert!(f.measurements(None, None).is_err());
        let reference = Field::Profile(Profile::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        assert_eq!(f.measurements(Some(&reference), None).unwrap().values(), &[1.0, 4.0]);
    }

    #[test]
    fn inconsistent_shape_is_rejected() {
        let f = SamplesFile {
            len: 6,
            shape: Some([2, 2]),
            indices: vec![1],
            values: None,
            epsilon: 0.0,
            bounds: None,
        };
        assert!(f.shape().is_err());
    }
}
