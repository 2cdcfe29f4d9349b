//! Dense matrix carrier, seeded randomness and the plain-CSV matrix format.
//!
//! Matrices are written row-major, one matrix row per CSV line, no header,
//! every value with 17 significant digits so a write/read cycle is lossless.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

pub type Rng = ChaCha8Rng;

/// Seeded generator for one named sub-stream of a run.
pub fn rng_for(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    // Fill row by row so the draw order matches the row-major convention.
    let mut m = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DenseMatrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::dims("ragged rows"));
    }
    Ok(DenseMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn max_abs(m: &DenseMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `max |aᵀa − I|` over all entries.
pub fn orthonormality_residual(a: &DenseMatrix) -> f64 {
    let gram = a.transpose() * a;
    let eye = DenseMatrix::identity(gram.nrows(), gram.ncols());
    max_abs(&(gram - eye))
}

pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    to_faer(a)
        .singular_values()
        .expect("svd converges")
        .into_iter()
        .fold(0.0_f64, f64::max)
}

pub(crate) fn to_faer(a: &DenseMatrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub(crate) fn from_faer(a: faer::MatRef<'_, f64>) -> DenseMatrix {
    DenseMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Fixed-precision float formatting shared by every text artifact.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn to_csv_string(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_csv_string(m).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn parse_csv(text: &str) -> Result<DenseMatrix> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| Error::Format {
                    row: lineno + 1,
                    message: format!("not a number: {cell:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    from_rows(&rows).map_err(|_| Error::Format {
        row: 0,
        message: "rows have different lengths".into(),
    })
}

pub fn read_csv(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

pub fn write_vector_csv(path: &Path, v: &[f64]) -> Result<()> {
    let body: String = v.iter().map(|x| fmt_f64(*x) + "\n").collect();
    fs::write(path, body).map_err(|e| Error::io(path, e))
}
