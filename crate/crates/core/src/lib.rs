//! Adaptive reduced rank regression for high-dimensional multi-output
//! linear models, with the baselines, synthetic generators, lower-bound
//! packing constructions and experiment drivers used to evaluate it.

pub mod baselines;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod matrix;
pub mod metrics;
pub mod packing;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use estimator::{fit_adaptive_rrr, FitConfig, FittedModel, NoiseLevel};
pub use matrix::DenseMatrix;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Any model of the form `y = M̂ x`.
pub trait LinearPredictor {
    /// `M̂`, shaped `d2 × d1`.
    fn coefficients(&self) -> &DenseMatrix;

    fn predict(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let m = self.coefficients();
        if x.ncols() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                m.ncols(),
                x.ncols()
            )));
        }
        Ok(x * m.transpose())
    }
}
