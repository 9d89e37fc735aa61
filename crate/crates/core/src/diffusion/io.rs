use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::model::{GaussianScore, NoiseNet, ScoreModel, SpikeMixture};
use super::schedule::VpSchedule;
use super::train::TrainingMeta;
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};

const FORMAT: &str = "csdm-score-model/1";

/// First line of a saved model; a trained network is followed by
/// `param_count` little-endian `f64` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub format: String,
    pub kind: String,
    pub schedule: VpSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkHeader>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<GaussianScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spikes: Option<SpikeMixture>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkHeader {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub time_features: usize,
    pub data_second_moment: f64,
    pub param_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SavedModel {
    pub model: ScoreModel,
    pub schedule: VpSchedule,
    pub training: Option<TrainingMeta>,
}

pub fn write_model<W: Write>(mut w: W, model: &ScoreModel, sched: &VpSchedule, training: Option<&TrainingMeta>) -> Result<()> {
    let mut header = ModelHeader {
        format: FORMAT.into(),
        kind: model.kind().into(),
        schedule: *sched,
        network: None,
        training: training.cloned(),
        gaussian: None,
        spikes: None,
    };
    match model {
        ScoreModel::Network(net) => {
            header.network = Some(NetworkHeader {
                widths: net.mlp().widths().to_vec(),
                activation: net.mlp().activation(),
                time_features: net.time_features(),
                data_second_moment: net.data_second_moment(),
                param_count: net.mlp().num_params(),
            })
        }
        ScoreModel::Gaussian(g) => header.gaussian = Some(g.clone()),
        ScoreModel::SpikeMixture(s) => header.spikes = Some(s.clone()),
    }
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    if let ScoreModel::Network(net) = model {
        let mut blob = Vec::with_capacity(8 * net.mlp().num_params());
        for p in net.mlp().params() {
            blob.extend_from_slice(&p.to_le_bytes());
        }
        w.write_all(&blob)?;
    }
    Ok(())
}

pub fn read_model<R: BufRead>(mut r: R) -> Result<SavedModel> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: ModelHeader = serde_json::from_str(line.trim_end())?;
    if header.format != FORMAT {
        return Err(Error::invalid(format!("unsupported model format {:?}", header.format)));
    }
    header.schedule.validate()?;
    let model = match (header.kind.as_str(), header.network, header.gaussian, header.spikes) {
        ("trained-network", Some(nh), None, None) => {
            let mut blob = Vec::new();
            r.read_to_end(&mut blob)?;
            if blob.len() != 8 * nh.param_count {
                return Err(Error::DimensionMismatch {
                    context: "model weight blob bytes",
                    expected: 8 * nh.param_count,
                    actual: blob.len(),
                });
            }
            let params = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let mlp = Mlp::from_params(&nh.widths, nh.activation, params)?;
            ScoreModel::Network(NoiseNet::from_parts(mlp, nh.time_features, nh.data_second_moment)?)
        }
        ("analytic-gaussian", None, Some(g), None) => ScoreModel::Gaussian(g),
        ("analytic-spike-mixture", None, None, Some(s)) => ScoreModel::SpikeMixture(s),
        (kind, ..) => return Err(Error::invalid(format!("model header of kind {kind:?} has inconsistent sections"))),
    };
    Ok(SavedModel {
        model,
        schedule: header.schedule,
        training: header.training,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::matrix::Matrix;
    use crate::tensor::rng::RngStream;

    #[test]
    fn network_round_trip_is_bit_exact() {
        let s = VpSchedule::default();
        let mut net = NoiseNet::new(3, &[5], 4, 0.7, &RngStream::new(1)).unwrap();
        net.mlp_mut().params_mut()[0] = std::f64::consts::PI * 1e-300;
        let m = ScoreModel::Network(net);
        let mut buf = Vec::new();
        write_model(&mut buf, &m, &s, None).unwrap();
        let back = read_model(&buf[..]).unwrap();
        assert_eq!(back.model, m);
        assert_eq!(back.schedule, s);
        let mut buf2 = Vec::new();
        write_model(&mut buf2, &back.model, &back.schedule, None).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn analytic_round_trip() {
        let s = VpSchedule::default();
        let cov = Matrix::from_rows(&[vec![2.0, 0.1], vec![0.1, 0.3]]).unwrap();
        let models = [
            ScoreModel::Gaussian(GaussianScore::new(vec![0.1, 1.0 / 3.0], cov).unwrap()),
            ScoreModel::SpikeMixture(SpikeMixture::new(Matrix::identity(2), Some(vec![1.0, 3.0])).unwrap()),
        ];
        for m in models {
            let mut buf = Vec::new();
            write_model(&mut buf, &m, &s, None).unwrap();
            let back = read_model(&buf[..]).unwrap();
            let x = [0.3, -0.2];
            assert_eq!(back.model.score(&s, 0.4, &x).unwrap(), m.score(&s, 0.4, &x).unwrap());
        }
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let s = VpSchedule::default();
        let m = ScoreModel::Network(NoiseNet::new(2, &[3], 2, 1.0, &RngStream::new(1)).unwrap());
        let mut buf = Vec::new();
        write_model(&mut buf, &m, &s, None).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_model(&buf[..]).is_err());
    }
}
