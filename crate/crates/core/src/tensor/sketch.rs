use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::linalg::largest_singular_value;
use crate::tensor::matrix::Matrix;
use crate::tensor::rng::{standard_normal, RngStream};

/// Power-iteration settings used when a sketch caches its spectral norm.
pub const SKETCH_SVD_TOL: f64 = 1e-10;
pub const SKETCH_SVD_MAX_ITER: usize = 200_000;

/// An `m × d` Gaussian compression matrix together with its cached spectral
/// norm and the Lipschitz constant `L = s_max²` of the least-squares gradient.
///
/// Serialises as `{"m", "d", "seed", "rng"}` only; deserialising regenerates
/// the matrix from the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "SketchSpec", try_from = "SketchSpec")]
pub struct SketchOperator {
    matrix: Matrix,
    rng: RngStream,
    s_max: f64,
    lipschitz: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchSpec {
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    pub rng: String,
}

impl From<SketchOperator> for SketchSpec {
    fn from(s: SketchOperator) -> Self {
        SketchSpec {
            m: s.matrix.rows(),
            d: s.matrix.cols(),
            seed: s.rng.seed,
            rng: s.rng.algorithm,
        }
    }
}

impl TryFrom<SketchSpec> for SketchOperator {
    type Error = Error;
    fn try_from(spec: SketchSpec) -> Result<Self> {
        let rng = RngStream {
            seed: spec.seed,
            algorithm: spec.rng,
        };
        if rng.algorithm != crate::tensor::rng::CHACHA20 {
            return Err(Error::invalid(format!("unknown rng algorithm {:?}", rng.algorithm)));
        }
        gaussian_sketch(spec.m, spec.d, &rng)
    }
}

/// Draws `A` with i.i.d. `N(0, 1/m)` entries, filled row-major from `rng`.
pub fn gaussian_sketch(m: usize, d: usize, rng: &RngStream) -> Result<SketchOperator> {
    if m == 0 || m >= d {
        return Err(Error::invalid(format!(
            "sketch needs 1 <= m < d, got m = {m}, d = {d}"
        )));
    }
    let mut g = rng.generator();
    let scale = 1.0 / (m as f64).sqrt();
    let data: Vec<f64> = (0..m * d).map(|_| scale * standard_normal(&mut g)).collect();
    let matrix = Matrix::from_vec_unchecked(m, d, data);
    let s_max = largest_singular_value(&matrix, SKETCH_SVD_TOL, SKETCH_SVD_MAX_ITER)?;
    Ok(SketchOperator {
        matrix,
        rng: rng.clone(),
        s_max,
        lipschitz: s_max * s_max,
    })
}

impl SketchOperator {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn m(&self) -> usize {
        self.matrix.rows()
    }

    pub fn d(&self) -> usize {
        self.matrix.cols()
    }

    pub fn seed(&self) -> u64 {
        self.rng.seed
    }

    pub fn rng(&self) -> &RngStream {
        &self.rng
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn spec(&self) -> SketchSpec {
        self.clone().into()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                context: "sketch input",
                expected: self.d(),
                actual: x.len(),
            });
        }
        Ok(self.matrix.mul_vec(x))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.matrix.write_csv(w)
    }
}
