//! Factor panels, principal components, scenario analysis and portfolio
//! risk statistics.

pub mod backtest;
pub mod fidelity;
pub mod panel;
pub mod pca;
pub mod portfolio;
pub mod scenario;

pub use backtest::{quantile_stats, rolling_backtest, BacktestConfig, CovarianceBasis, KindSeries, ReturnStats, StressReport, TABLE_LEVELS};
pub use fidelity::{
    generate_market, ssa_fidelity, synthetic_factor_market, FactorMarketSpec, FidelityReport, GeneratedMarket, KindGap,
    PcGenerationConfig, SyntheticMarket,
};
pub use panel::{FactorPanel, ReturnPanel, Standardizer};
pub use pca::{pca_fit, PcaModel};
pub use portfolio::{
    gmvp_kkt_residual, portfolio_return, portfolio_weights, project_simplex, risk_contributions, sample_covariance,
    PortfolioKind, PortfolioOptions, PortfolioWeights, GMVP_KKT_TOL,
};
pub use scenario::{predict_returns, r_squared, ssa_stress, InputMap, NetworkFitConfig, Predictor, PredictorModel, Scenario};
