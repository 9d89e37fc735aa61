use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recovery::support_of;
use crate::stats::Summary;
use crate::tensor::matrix::dist2;

pub const ERROR_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Nearest-exemplar comparison of generated samples against a reference set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    /// `min_r |x_i − r|₂` for each sample.
    pub distances: Vec<f64>,
    /// Index of the nearest reference point for each sample.
    pub nearest: Vec<usize>,
    pub summary: Summary,
    /// Mean over samples of `|supp x̂ ∩ supp r| / |supp x̂|`. An empty
    /// `supp x̂` scores 1 only when `supp r` is also empty.
    pub support_precision: f64,
    /// Mean over samples of `|supp x̂ ∩ supp r| / |supp r|`, with the same
    /// convention for an empty `supp r`.
    pub support_recall: f64,
    pub support_threshold: f64,
}

/// Index and squared distance of the nearest reference point.
pub fn nearest_point(x: &[f64], reference: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, r) in reference.iter().enumerate() {
        let mut s = 0.0;
        for (a, b) in x.iter().zip(r) {
            let u = a - b;
            s += u * u;
            if s >= best.1 {
                break;
            }
        }
        if s < best.1 {
            best = (j, s);
        }
    }
    best
}

/// Supports are `{i : |v_i| > threshold·|v|_∞}`.
pub fn end_to_end_error(samples: &[Vec<f64>], reference: &[Vec<f64>], support_threshold: f64) -> Result<ErrorStats> {
    if samples.is_empty() || reference.is_empty() {
        return Err(Error::invalid("error statistics need nonempty sample and reference sets"));
    }
    let d = reference[0].len();
    if let Some(v) = samples.iter().chain(reference).find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            context: "error statistics",
            expected: d,
            actual: v.len(),
        });
    }
    let mut distances = Vec::with_capacity(samples.len());
    let mut nearest = Vec::with_capacity(samples.len());
    let (mut prec, mut rec) = (0.0, 0.0);
    for x in samples {
        let (j, _) = nearest_point(x, reference);
        distances.push(dist2(x, &reference[j]));
        nearest.push(j);
        let sx = support_of(x, support_threshold);
        let sr = support_of(&reference[j], support_threshold);
        let common = sx.iter().filter(|i| sr.binary_search(i).is_ok()).count() as f64;
        let ratio = |n: usize, other: usize| match (n, other) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => common / n as f64,
        };
        prec += ratio(sx.len(), sr.len());
        rec += ratio(sr.len(), sx.len());
    }
    let n = samples.len() as f64;
    let summary = Summary::new(&distances, &ERROR_QUANTILES)?;
    Ok(ErrorStats {
        distances,
        nearest,
        summary,
        support_precision: prec / n,
        support_recall: rec / n,
        support_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sets_have_zero_error() {
        let r = vec![vec![1.0, 0.0, 0.0], vec![0.0, -2.0, 0.5]];
        let e = end_to_end_error(&r, &r, 0.1).unwrap();
        assert_eq!(e.distances, vec![0.0, 0.0]);
        assert_eq!(e.nearest, vec![0, 1]);
        assert_eq!((e.support_precision, e.support_recall), (1.0, 1.0));
    }

    #[test]
    fn single_reference_is_direct_distance() {
        let r = vec![vec![3.0, 0.0]];
        let e = end_to_end_error(&[vec![0.0, 4.0]], &r, 0.1).unwrap();
        assert_eq!(e.distances, vec![5.0]);
        assert_eq!(e.support_precision, 0.0);
        assert_eq!(e.support_recall, 0.0);
    }

    #[test]
    fn partial_support_overlap() {
        let r = vec![vec![1.0, 1.0, 0.0, 0.0]];
        let x = vec![vec![1.0, 0.0, 1.0, 1.0]];
        let e = end_to_end_error(&x, &r, 0.1).unwrap();
        assert!((e.support_precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.support_recall, 0.5);
    }

    #[test]
    fn zero_estimate_has_no_precision() {
        let r = vec![vec![1.0, 0.0]];
        let e = end_to_end_error(&[vec![0.0, 0.0]], &r, 0.1).unwrap();
        assert_eq!((e.support_precision, e.support_recall), (0.0, 0.0));
        let z = vec![vec![0.0, 0.0]];
        let e = end_to_end_error(&z, &z, 0.1).unwrap();
        assert_eq!((e.support_precision, e.support_recall), (1.0, 1.0));
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(end_to_end_error(&[], &[vec![1.0]], 0.1).is_err());
        assert!(end_to_end_error(&[vec![1.0, 2.0]], &[vec![1.0]], 0.1).is_err());
    }
}
