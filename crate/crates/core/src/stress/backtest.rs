use serde::{Deserialize, Serialize};

use super::panel::{FactorPanel, ReturnPanel};
use super::portfolio::{portfolio_return, portfolio_weights, sample_covariance, PortfolioKind, PortfolioOptions};
use super::scenario::{predict_returns, ssa_stress, Predictor, Scenario};
use crate::error::{Error, Result};
use crate::stats::Summary;

/// Quantile levels of the statistics table.
pub const TABLE_LEVELS: [f64; 4] = [0.01, 0.05, 0.10, 0.25];

/// Distribution statistics of a return series. Quantiles interpolate
/// linearly between order statistics, `Q(p) = x_(⌊h⌋) + (h − ⌊h⌋)(x_(⌊h⌋+1) − x_(⌊h⌋))`
/// with `h = (n − 1)p` on the sorted sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub quantiles: Vec<(f64, f64)>,
    /// `VaR_α = −Q_α` at each level.
    pub var: Vec<(f64, f64)>,
}

impl ReturnStats {
    pub fn quantile(&self, level: f64) -> Option<f64> {
        self.quantiles.iter().find(|(p, _)| *p == level).map(|(_, v)| *v)
    }

    /// Mean, median and std rows followed by one row per quantile level.
    pub fn table_rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("Mean".to_string(), self.mean),
            ("Median".to_string(), self.median),
            ("Std".to_string(), self.std),
        ];
        for (p, q) in &self.quantiles {
            rows.push((format!("{}% Quantile", p * 100.0), *q));
        }
        rows
    }
}

pub fn quantile_stats(returns: &[f64], levels: &[f64]) -> Result<ReturnStats> {
    if levels.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("quantile levels must lie in [0, 1]"));
    }
    if returns.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("returns must be finite"));
    }
    let s = Summary::new(returns, levels)?;
    Ok(ReturnStats {
        count: s.count,
        mean: s.mean,
        median: s.median,
        std: s.std,
        var: s.quantiles.iter().map(|&(p, q)| (p, -q)).collect(),
        quantiles: s.quantiles,
    })
}

/// Returns over which the portfolio covariance is estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CovarianceBasis {
    PerPeriod,
    /// Overlapping sums of `horizon` consecutive returns inside the window.
    Cumulative { horizon: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestConfig {
    pub window: usize,
    pub kinds: Vec<PortfolioKind>,
    pub covariance: CovarianceBasis,
    pub portfolio: PortfolioOptions,
    pub levels: Vec<f64>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            window: 60,
            kinds: PortfolioKind::ALL.to_vec(),
            covariance: CovarianceBasis::PerPeriod,
            portfolio: PortfolioOptions::default(),
            levels: TABLE_LEVELS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindSeries {
    pub kind: PortfolioKind,
    /// `V̂_{t+1} = wᵀ ŷ_{t+1}` under the stressed factors.
    pub stressed: Vec<f64>,
    /// `wᵀ y_{t+1}` with the realized returns.
    pub realized: Vec<f64>,
    pub stressed_stats: ReturnStats,
    pub realized_stats: ReturnStats,
    /// Largest optimality residual over the periods, minimum-variance only.
    pub max_kkt_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    pub window: usize,
    pub stressed_factors: Vec<String>,
    pub predictor: String,
    /// Factors and returns are paired on the same date.
    pub alignment: String,
    pub covariance: CovarianceBasis,
    /// Date of each forecast period `t + 1`.
    pub dates: Vec<String>,
    pub series: Vec<KindSeries>,
    pub factor_imputed: Vec<usize>,
    pub return_imputed: Vec<usize>,
}

impl StressReport {
    pub fn series(&self, kind: PortfolioKind) -> Option<&KindSeries> {
        self.series.iter().find(|s| s.kind == kind)
    }

    /// One row per statistic, one stressed and one realized column per kind.
    pub fn write_table<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["statistic".to_string()];
        for s in &self.series {
            header.push(format!("{}_ssa", s.kind.name()));
            header.push(format!("{}_realized", s.kind.name()));
        }
        wr.write_record(&header)?;
        let tables: Vec<(Vec<(String, f64)>, Vec<(String, f64)>)> = self
            .series
            .iter()
            .map(|s| (s.stressed_stats.table_rows(), s.realized_stats.table_rows()))
            .collect();
        if let Some((first, _)) = tables.first() {
            for (r, (name, _)) in first.iter().enumerate() {
                let mut rec = vec![name.clone()];
                for (a, b) in &tables {
                    rec.push(format!("{:?}", a[r].1));
                    rec.push(format!("{:?}", b[r].1));
                }
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Rolling historical scenario analysis. For each period `t` with a full
/// window `t−s+1..=t` and a successor, the factors in `scenario.indices` take
/// their realized values at `t+1` while the rest stay at `t`; the predictor
/// maps the stressed factors to returns, and each portfolio, built from the
/// window's return covariance, is valued on them. The stress values carried
/// by `scenario` are not used.
pub fn rolling_backtest(
    factors: &FactorPanel,
    returns: &ReturnPanel,
    scenario: &Scenario,
    predictor: &Predictor,
    cfg: &BacktestConfig,
) -> Result<StressReport> {
    factors.check_aligned(returns)?;
    let n = factors.len();
    let s = cfg.window;
    if s < 2 || s >= n {
        return Err(Error::invalid(format!("window {s} must lie in 2..{n}")));
    }
    if cfg.kinds.is_empty() {
        return Err(Error::invalid("no portfolio kinds requested"));
    }
    if let CovarianceBasis::Cumulative { horizon } = cfg.covariance {
        if horizon == 0 || horizon + 1 >= s {
            return Err(Error::invalid("cumulative horizon must be positive and shorter than the window"));
        }
    }
    let shape = Scenario {
        indices: scenario.indices.clone(),
        stress: vec![0.0; scenario.indices.len()],
    };
    shape.validate(factors.dim())?;
    if predictor.input_dim() != factors.dim() || predictor.output_dim() != returns.dim() {
        return Err(Error::invalid("predictor does not map the factor panel to the return panel"));
    }
    let mut dates = Vec::new();
    let mut stressed = vec![Vec::new(); cfg.kinds.len()];
    let mut realized = vec![Vec::new(); cfg.kinds.len()];
    let mut kkt: Vec<Option<f64>> = vec![None; cfg.kinds.len()];
    for t in s - 1..n - 1 {
        let next = factors.row(t + 1);
        let sc = Scenario {
            indices: scenario.indices.clone(),
            stress: scenario.indices.iter().map(|&i| next[i]).collect(),
        };
        let x = ssa_stress(factors.row(t), &sc)?;
        let y_hat = predict_returns(predictor, &x)?;
        let window: Vec<Vec<f64>> = (t + 1 - s..=t).map(|i| returns.row(i).to_vec()).collect();
        let cov = sample_covariance(&basis_rows(&window, &cfg.covariance))?;
        for (k, &kind) in cfg.kinds.iter().enumerate() {
            let w = portfolio_weights(kind, &cov, &cfg.portfolio)?;
            if let Some(r) = w.kkt_residual {
                kkt[k] = Some(kkt[k].map_or(r, |m: f64| m.max(r)));
            }
            stressed[k].push(portfolio_return(&w, &y_hat)?);
            realized[k].push(portfolio_return(&w, returns.row(t + 1))?);
        }
        dates.push(factors.times[t + 1].clone());
    }
    let series = cfg
        .kinds
        .iter()
        .enumerate()
        .map(|(k, &kind)| {
            Ok(KindSeries {
                kind,
                stressed_stats: quantile_stats(&stressed[k], &cfg.levels)?,
                realized_stats: quantile_stats(&realized[k], &cfg.levels)?,
                stressed: std::mem::take(&mut stressed[k]),
                realized: std::mem::take(&mut realized[k]),
                max_kkt_residual: kkt[k],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StressReport {
        window: s,
        stressed_factors: scenario.indices.iter().map(|&i| factors.names[i].clone()).collect(),
        predictor: predictor.kind().to_string(),
        alignment: "contemporaneous".into(),
        covariance: cfg.covariance.clone(),
        dates,
        series,
        factor_imputed: factors.imputed.clone(),
        return_imputed: returns.imputed.clone(),
    })
}

fn basis_rows(window: &[Vec<f64>], basis: &CovarianceBasis) -> Vec<Vec<f64>> {
    match *basis {
        CovarianceBasis::PerPeriod => window.to_vec(),
        CovarianceBasis::Cumulative { horizon } => window
            .windows(horizon)
            .map(|block| {
                let mut acc = vec![0.0; block[0].len()];
                for r in block {
                    acc.iter_mut().zip(r).for_each(|(a, v)| *a += v);
                }
                acc
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolated_median() {
        let s = quantile_stats(&[-2.0, -1.0, 0.0, 1.0], &[0.5]).unwrap();
        assert_eq!(s.quantile(0.5), Some(-0.5));
        assert_eq!(s.var, vec![(0.5, 0.5)]);
    }

    #[test]
    fn constant_returns() {
        let s = quantile_stats(&[0.03; 7], &TABLE_LEVELS).unwrap();
        assert_eq!(s.std, 0.0);
        for (p, q) in &s.quantiles {
            assert_eq!(*q, 0.03, "level {p}");
        }
        assert!(s.var.iter().all(|&(_, v)| v == -0.03));
    }

    #[test]
    fn table_layout() {
        let s = quantile_stats(&[0.1, -0.2, 0.05, 0.0], &TABLE_LEVELS).unwrap();
        let names: Vec<String> = s.table_rows().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            ["Mean", "Median", "Std", "1% Quantile", "5% Quantile", "10% Quantile", "25% Quantile"]
        );
        assert!(quantile_stats(&[], &TABLE_LEVELS).is_err());
    }

    #[test]
    fn cumulative_rows() {
        let w = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let r = basis_rows(&w, &CovarianceBasis::Cumulative { horizon: 2 });
        assert_eq!(r, vec![vec![3.0], vec![5.0], vec![7.0]]);
    }
}
