use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::panel::Standardizer;
use super::pca::PcaModel;
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Mlp, Tape};
use crate::tensor::linalg::{cholesky, cholesky_solve, psd_pseudo_solve};
use crate::tensor::matrix::Matrix;
use crate::tensor::rng::RngStream;

/// Factors to stress and the values they take.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub indices: Vec<usize>,
    pub stress: Vec<f64>,
}

impl Scenario {
    pub fn empty() -> Self {
        Scenario {
            indices: Vec::new(),
            stress: Vec::new(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.indices.len() != self.stress.len() {
            return Err(Error::invalid(format!(
                "scenario has {} indices but {} stress values",
                self.indices.len(),
                self.stress.len()
            )));
        }
        if let Some(i) = self.indices.iter().find(|&&i| i >= d) {
            return Err(Error::invalid(format!("scenario index {i} out of range for {d} factors")));
        }
        let mut seen = self.indices.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("scenario indices repeat"));
        }
        Ok(())
    }
}

/// `x` with the stressed coordinates replaced by the scenario values.
pub fn ssa_stress(x: &[f64], scenario: &Scenario) -> Result<Vec<f64>> {
    scenario.validate(x.len())?;
    let mut out = x.to_vec();
    for (&i, &v) in scenario.indices.iter().zip(&scenario.stress) {
        out[i] = v;
    }
    Ok(out)
}

/// Transformation applied to a factor vector before the regression model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputMap {
    Identity,
    /// Standardize, then project onto principal components.
    Pca { standardizer: Standardizer, pca: PcaModel },
}

impl InputMap {
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            InputMap::Identity => Ok(x.to_vec()),
            InputMap::Pca { standardizer, pca } => {
                if x.len() != standardizer.mean.len() {
                    return Err(Error::DimensionMismatch {
                        context: "predictor input",
                        expected: standardizer.mean.len(),
                        actual: x.len(),
                    });
                }
                pca.encode(&standardizer.apply(x))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PredictorModel {
    /// `y = coef·z + intercept`.
    Linear { coef: Matrix, intercept: Vec<f64> },
    /// Network on standardized inputs and outputs.
    Network {
        mlp: Mlp,
        input: Standardizer,
        output: Standardizer,
    },
}

/// Factor vector to asset returns.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor {
    pub input: InputMap,
    pub model: PredictorModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkFitConfig {
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for NetworkFitConfig {
    fn default() -> Self {
        NetworkFitConfig {
            hidden: vec![32],
            steps: 3000,
            batch_size: 64,
            learning_rate: 3e-3,
            seed: 0,
        }
    }
}

impl Predictor {
    pub fn kind(&self) -> &'static str {
        match self.model {
            PredictorModel::Linear { .. } => "linear-regression",
            PredictorModel::Network { .. } => "trained-network",
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.input {
            InputMap::Identity => self.model_input_dim(),
            InputMap::Pca { standardizer, .. } => standardizer.mean.len(),
        }
    }

    fn model_input_dim(&self) -> usize {
        match &self.model {
            PredictorModel::Linear { coef, .. } => coef.cols(),
            PredictorModel::Network { mlp, .. } => mlp.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.model {
            PredictorModel::Linear { coef, .. } => coef.rows(),
            PredictorModel::Network { mlp, .. } => mlp.output_dim(),
        }
    }

    /// Ordinary least squares with intercept of `outputs` on `input(x)`.
    pub fn fit_linear(input: InputMap, factors: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<Self> {
        let z = map_all(&input, factors)?;
        check_pairs(&z, outputs)?;
        let (p, q, n) = (z[0].len(), outputs[0].len(), z.len());
        let zm: Vec<f64> = (0..p).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let ym: Vec<f64> = (0..q).map(|j| outputs.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let mut g = Matrix::zeros(p, p);
        let mut zy = Matrix::zeros(p, q);
        for (zr, yr) in z.iter().zip(outputs) {
            for a in 0..p {
                let za = zr[a] - zm[a];
                for b in 0..p {
                    g.set(a, b, g.get(a, b) + za * (zr[b] - zm[b]));
                }
                for c in 0..q {
                    zy.set(a, c, zy.get(a, c) + za * (yr[c] - ym[c]));
                }
            }
        }
        let solve: Box<dyn Fn(&[f64]) -> Result<Vec<f64>>> = match cholesky(&g) {
            Ok(l) => Box::new(move |b| Ok(cholesky_solve(&l, b))),
            Err(_) => {
                log::warn!("regression design is rank deficient; using the minimum-norm solution");
                let g = g.clone();
                Box::new(move |b| psd_pseudo_solve(&g, b, 1e-12))
            }
        };
        let mut coef = Matrix::zeros(q, p);
        for c in 0..q {
            let beta = solve(&zy.column(c))?;
            coef.row_mut(c).copy_from_slice(&beta);
        }
        let intercept = (0..q).map(|c| ym[c] - crate::tensor::matrix::dot(coef.row(c), &zm)).collect();
        Ok(Predictor {
            input,
            model: PredictorModel::Linear { coef, intercept },
        })
    }

    /// Mean-squared-error fit of a small network, Adam on shuffled minibatches.
    pub fn fit_network(input: InputMap, factors: &[Vec<f64>], outputs: &[Vec<f64>], cfg: &NetworkFitConfig) -> Result<Self> {
        let z = map_all(&input, factors)?;
        check_pairs(&z, outputs)?;
        if cfg.steps == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
            return Err(Error::invalid("network fit needs positive steps, batch size and learning rate"));
        }
        let in_std = super::panel::Standardizer::fit(&z)?;
        let out_std = super::panel::Standardizer::fit(outputs)?;
        let zs: Vec<Vec<f64>> = z.iter().map(|r| in_std.apply(r)).collect();
        let ys: Vec<Vec<f64>> = outputs.iter().map(|r| out_std.apply(r)).collect();
        let mut widths = vec![zs[0].len()];
        widths.extend_from_slice(&cfg.hidden);
        widths.push(ys[0].len());
        let root = RngStream::new(cfg.seed);
        let mut mlp = Mlp::new(&widths, Activation::Tanh, &root.labeled("init"))?;
        let mut opt = Adam::new(mlp.num_params());
        let mut order: Vec<usize> = (0..zs.len()).collect();
        let mut g = root.labeled("batches").generator();
        let mut tape = Tape::default();
        let mut grad = vec![0.0; mlp.num_params()];
        let bs = cfg.batch_size.min(zs.len());
        let mut pos = zs.len();
        for step in 0..cfg.steps {
            grad.iter_mut().for_each(|v| *v = 0.0);
            for _ in 0..bs {
                if pos == zs.len() {
                    order.shuffle(&mut g);
                    pos = 0;
                }
                let i = order[pos];
                pos += 1;
                mlp.forward_tape(&zs[i], &mut tape);
                let go: Vec<f64> = tape.output().iter().zip(&ys[i]).map(|(o, t)| 2.0 * (o - t) / bs as f64).collect();
                mlp.backward(&mut tape, &go, &mut grad, false);
            }
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { stage: "predictor fit", step });
            }
            let lr = cfg.learning_rate * (1.0 - step as f64 / cfg.steps as f64).max(0.05);
            opt.step(mlp.params_mut(), &grad, lr);
        }
        Ok(Predictor {
            input,
            model: PredictorModel::Network {
                mlp,
                input: in_std,
                output: out_std,
            },
        })
    }
}

fn map_all(input: &InputMap, factors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    factors.iter().map(|x| input.apply(x)).collect()
}

fn check_pairs(z: &[Vec<f64>], y: &[Vec<f64>]) -> Result<()> {
    if z.is_empty() || z.len() != y.len() {
        return Err(Error::invalid(format!("need matching nonempty samples, got {} and {}", z.len(), y.len())));
    }
    if z.len() <= z[0].len() {
        return Err(Error::invalid("regression needs more samples than inputs"));
    }
    Ok(())
}

pub fn predict_returns(p: &Predictor, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != p.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "predictor input",
            expected: p.input_dim(),
            actual: x.len(),
        });
    }
    let z = p.input.apply(x)?;
    Ok(match &p.model {
        PredictorModel::Linear { coef, intercept } => {
            let mut y = coef.mul_vec(&z);
            y.iter_mut().zip(intercept).for_each(|(v, b)| *v += b);
            y
        }
        PredictorModel::Network { mlp, input, output } => output.invert(&mlp.forward(&input.apply(&z))),
    })
}

/// In-sample coefficient of determination, pooled over outputs.
pub fn r_squared(p: &Predictor, factors: &[Vec<f64>], outputs: &[Vec<f64>]) -> Result<f64> {
    let q = outputs[0].len();
    let n = outputs.len() as f64;
    let ym: Vec<f64> = (0..q).map(|j| outputs.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (x, y) in factors.iter().zip(outputs) {
        let yh = predict_returns(p, x)?;
        for j in 0..q {
            ss_res += (y[j] - yh[j]).powi(2);
            ss_tot += (y[j] - ym[j]).powi(2);
        }
    }
    Ok(1.0 - ss_res / ss_tot)
}
