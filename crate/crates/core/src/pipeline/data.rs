use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::rng::RngStream;
use crate::tensor::sketch::SketchOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeLaw {
    /// Every nonzero equals 1.
    Unit,
    /// Magnitude uniform on `[0.5, 1.5]`, sign uniform.
    UniformSigned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SparseDatasetSpec {
    pub d: usize,
    pub sparsity: usize,
    pub n: usize,
    pub amplitude: AmplitudeLaw,
    pub seed: u64,
}

impl Default for SparseDatasetSpec {
    fn default() -> Self {
        SparseDatasetSpec {
            d: 1024,
            sparsity: 10,
            n: 2000,
            amplitude: AmplitudeLaw::UniformSigned,
            seed: 0,
        }
    }
}

/// `n` vectors in `ℝ^d`, each with exactly `sparsity` nonzeros on a support
/// drawn uniformly without replacement. Vector `i` uses sub-stream `i`.
pub fn synth_sparse_dataset(spec: &SparseDatasetSpec) -> Result<Vec<Vec<f64>>> {
    if spec.sparsity > spec.d {
        return Err(Error::invalid(format!(
            "sparsity {} exceeds dimension {}",
            spec.sparsity, spec.d
        )));
    }
    let root = RngStream::new(spec.seed);
    Ok((0..spec.n)
        .map(|i| {
            let mut g = root.substream(i as u64).generator();
            let mut x = vec![0.0; spec.d];
            for j in sample(&mut g, spec.d, spec.sparsity) {
                x[j] = match spec.amplitude {
                    AmplitudeLaw::Unit => 1.0,
                    AmplitudeLaw::UniformSigned => {
                        let mag = g.random_range(0.5..=1.5);
                        if g.random_bool(0.5) {
                            mag
                        } else {
                            -mag
                        }
                    }
                };
            }
            x
        })
        .collect())
}

/// `{A x : x ∈ data}`.
pub fn compress_dataset(data: &[Vec<f64>], sketch: &SketchOperator) -> Result<Vec<Vec<f64>>> {
    data.iter().map(|x| sketch.apply(x)).collect()
}
