//! Teacher–student data and the dataset CSV format.
//!
//! A dataset file has a header `f0,...,f{d-1},y` and one sample per row,
//! every value written with 17 significant digits so that reading it back
//! reproduces the same doubles.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use bcd_core::matrix::{singular_values, GaussianSampler};
use bcd_core::network::predict_all;
use bcd_core::{Activation, Matrix};

use crate::error::{CliError, Result};

/// Sampler streams under the teacher seed.
const TEACHER_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    /// Free-form description of where the data came from.
    pub meta: String,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, meta: impl Into<String>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(CliError::Config(format!("dataset has {} inputs but {} labels", x.rows(), y.len())));
        }
        if x.rows() == 0 {
            return Err(CliError::Config("empty dataset".into()));
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config("dataset contains NaN or infinite values".into()));
        }
        Ok(Self { x, y, meta: meta.into() })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d_in(&self) -> usize {
        self.x.cols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TeacherConfig {
    pub d_in: usize,
    pub hidden: usize,
    pub activation: Activation,
    /// Multiplies the standard deviation of both teacher layers; 0 gives a
    /// zero teacher.
    pub scale: f64,
    pub seed: u64,
}

impl TeacherConfig {
    pub fn new(d_in: usize, hidden: usize, activation: Activation, seed: u64) -> Self {
        Self { d_in, hidden, activation, scale: 1.0, seed }
    }
}

/// One-hidden-layer network `y = W_2 σ(W_1 x)`.
#[derive(Clone, Debug)]
pub struct Teacher {
    pub config: TeacherConfig,
    pub w1: Matrix,
    pub w2: Matrix,
}

impl Teacher {
    pub fn new(config: TeacherConfig) -> Result<Self> {
        if config.hidden == 0 || config.d_in == 0 {
            return Err(CliError::Config("teacher needs d_in >= 1 and hidden >= 1".into()));
        }
        if !(config.scale >= 0.0 && config.scale.is_finite()) {
            return Err(CliError::Config(format!("teacher scale must be >= 0, got {}", config.scale)));
        }
        let mut rng = GaussianSampler::with_stream(config.seed, TEACHER_STREAM);
        let s2 = config.scale * config.scale;
        let w1 = rng.matrix(config.hidden, config.d_in, s2 / config.d_in as f64);
        let w2 = rng.matrix(1, config.hidden, s2 / config.hidden as f64);
        Ok(Self { config, w1, w2 })
    }

    pub fn labels(&self, x: &Matrix) -> Vec<f64> {
        predict_all(&[self.w1.clone(), self.w2.clone()], x, self.config.activation, false)
    }

    /// `n` fresh inputs `x ~ N(0, I)` from the given stream and their labels.
    pub fn sample(&self, n: usize, stream: u64) -> Result<Dataset> {
        let x = GaussianSampler::with_stream(self.config.seed, stream).matrix(n, self.config.d_in, 1.0);
        let y = self.labels(&x);
        let c = &self.config;
        let meta = format!(
            "teacher seed={} stream={} d_in={} hidden={} activation={} scale={}",
            c.seed, stream, c.d_in, c.hidden, c.activation, c.scale
        );
        Dataset::new(x, y, meta)
    }
}

/// `n` training samples from the teacher described by `cfg`.
pub fn gen_teacher_data(n: usize, cfg: TeacherConfig) -> Result<Dataset> {
    Teacher::new(cfg)?.sample(n, TRAIN_STREAM)
}

/// Training set plus an independent test draw from the same teacher.
pub fn gen_teacher_split(n: usize, test_n: usize, cfg: TeacherConfig) -> Result<(Dataset, Option<Dataset>)> {
    let teacher = Teacher::new(cfg)?;
    let train = teacher.sample(n, TRAIN_STREAM)?;
    let test = if test_n > 0 { Some(teacher.sample(test_n, TEST_STREAM)?) } else { None };
    Ok((train, test))
}

/// Whether `n ≤ d_in` and `σ_min(X) > 1e-10 σ_max(X)`, with the smallest
/// singular value (0 when `n > d_in`).
pub fn check_full_rank(x: &Matrix) -> Result<(bool, f64)> {
    if x.rows() > x.cols() {
        return Ok((false, 0.0));
    }
    let sv = singular_values(x)?;
    let (largest, smallest) = (sv[0], *sv.last().expect("non-empty"));
    Ok((smallest > 1e-10 * largest, smallest))
}

/// 17 significant digits; parses back to the same double.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| CliError::parse(path, e.to_string());
    let mut header: Vec<String> = (0..data.d_in()).map(|p| format!("f{p}")).collect();
    header.push("y".into());
    w.write_record(&header).map_err(csv_err)?;
    let mut record = Vec::with_capacity(data.d_in() + 1);
    for (row, y) in data.x.iter_rows().zip(&data.y) {
        record.clear();
        record.extend(row.iter().map(|&v| fmt_f64(v)));
        record.push(fmt_f64(*y));
        w.write_record(&record).map_err(csv_err)?;
    }
    let mut inner = w.into_inner().map_err(|e| CliError::parse(path, e.to_string()))?;
    inner.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let header = reader.headers().map_err(|e| CliError::parse(path, e.to_string()))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(CliError::parse(path, "empty dataset"));
    }
    let cols = header.len();
    if cols < 2 || header[cols - 1].trim() != "y" {
        return Err(CliError::parse(path, "line 1: header must be f0,...,f{d-1},y"));
    }
    let d_in = cols - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::parse(path, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != cols {
            return Err(CliError::parse(path, format!("line {line}: expected {cols} columns, found {}", record.len())));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::parse(path, format!("line {line}, column {}: cannot parse {field:?} as a number", c + 1))
            })?;
            if c < d_in {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    if ys.is_empty() {
        return Err(CliError::parse(path, "empty dataset"));
    }
    let x = Matrix::from_vec(ys.len(), d_in, xs)?;
    Dataset::new(x, ys, format!("read from {}", path.display())).map_err(|e| CliError::parse(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TeacherConfig {
        TeacherConfig::new(5, 3, Activation::LeakyRelu(0.5), 11)
    }

    #[test]
    fn same_seed_same_data() {
        let a = gen_teacher_data(4, cfg()).unwrap();
        let b = gen_teacher_data(4, cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_teacher_gives_zero_labels() {
        let d = gen_teacher_data(6, TeacherConfig { scale: 0.0, ..cfg() }).unwrap();
        assert!(d.y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_rank_checks() {
        assert_eq!(check_full_rank(&Matrix::identity(3)).unwrap(), (true, 1.0));
        let dup = Matrix::from_rows(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]);
        let (ok, s) = check_full_rank(&dup).unwrap();
        assert!(!ok && s < 1e-12);
        let tall = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        assert_eq!(check_full_rank(&tall).unwrap(), (false, 0.0));
    }

    #[test]
    fn formatting_is_round_trip_exact() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 123456.789, f64::MIN_POSITIVE, -0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
