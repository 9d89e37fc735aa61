use csdm_core::stress::{
    gmvp_kkt_residual, pca_fit, portfolio_weights, quantile_stats, risk_contributions, ssa_stress, PortfolioKind,
    PortfolioOptions, Scenario, GMVP_KKT_TOL,
};
use csdm_core::tensor::Matrix;
use proptest::prelude::*;

fn rows(n: std::ops::Range<usize>, d: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (n, d).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n))
}

fn covariance() -> impl Strategy<Value = Matrix> {
    (2usize..8, 1e-3f64..1.0).prop_flat_map(|(p, ridge)| {
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, p), p + 2).prop_map(move |b| {
            let mut c = vec![vec![0.0; p]; p];
            for r in &b {
                for i in 0..p {
                    for j in 0..p {
                        c[i][j] += r[i] * r[j] / b.len() as f64;
                    }
                }
            }
            (0..p).for_each(|i| c[i][i] += ridge);
            Matrix::from_rows(&c).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn pca_components_are_orthonormal_and_ordered(data in rows(6..30, 2..6), k in 1usize..6) {
        let k = k.min(data[0].len());
        let model = pca_fit(&data, k).unwrap();
        let c = &model.components;
        for i in 0..model.k() {
            for j in 0..model.k() {
                let ip: f64 = c.row(i).iter().zip(c.row(j)).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((ip - target).abs() <= 1e-10);
            }
        }
        let ev = &model.explained_variance;
        prop_assert!(ev.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        prop_assert!(ev.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        prop_assert!(model.cumulative_explained() <= 1.0 + 1e-12);

        let z: Vec<f64> = (0..model.k()).map(|i| i as f64 - 0.5).collect();
        let back = model.encode(&model.decode(&z).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&z) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn stressing_is_idempotent_and_touches_only_the_stressed_factors(
        x in prop::collection::vec(-3.0f64..3.0, 1..12),
        picks in prop::collection::vec((any::<prop::sample::Index>(), -2.0f64..2.0), 0..6),
    ) {
        let mut indices = Vec::new();
        let mut stress = Vec::new();
        for (ix, v) in picks {
            let i = ix.index(x.len());
            if !indices.contains(&i) {
                indices.push(i);
                stress.push(v);
            }
        }
        let scenario = Scenario { indices, stress };
        let once = ssa_stress(&x, &scenario).unwrap();
        prop_assert_eq!(&ssa_stress(&once, &scenario).unwrap(), &once);
        for i in 0..x.len() {
            match scenario.indices.iter().position(|&j| j == i) {
                Some(p) => prop_assert_eq!(once[i], scenario.stress[p]),
                None => prop_assert_eq!(once[i], x[i]),
            }
        }
    }

    #[test]
    fn portfolio_weights_are_budgeted(cov in covariance()) {
        let opts = PortfolioOptions::default();
        for kind in PortfolioKind::ALL {
            let w = portfolio_weights(kind, &cov, &opts).unwrap();
            prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-10, "{:?}", kind);
            prop_assert!(w.weights.iter().all(|v| *v >= 0.0), "{:?}", kind);
        }
        let g = portfolio_weights(PortfolioKind::GmvpLongOnly, &cov, &opts).unwrap();
        prop_assert!(gmvp_kkt_residual(&cov, &g.weights).unwrap() <= GMVP_KKT_TOL);

        let rp = portfolio_weights(PortfolioKind::RiskParity, &cov, &opts).unwrap();
        let rc = risk_contributions(&cov, &rp.weights);
        let mean = rc.iter().sum::<f64>() / rc.len() as f64;
        let spread = rc.iter().fold(0.0f64, |a, r| a.max((r - mean).abs())) / mean;
        prop_assert!(spread <= 1e-6, "spread {}", spread);
    }

    #[test]
    fn quantiles_are_monotone_and_var_is_their_negative(
        r in prop::collection::vec(-0.2f64..0.2, 1..200),
        mut levels in prop::collection::vec(0.0f64..=1.0, 1..8),
    ) {
        levels.sort_by(f64::total_cmp);
        let s = quantile_stats(&r, &levels).unwrap();
        prop_assert!(s.quantiles.windows(2).all(|w| w[1].1 >= w[0].1));
        for ((p, q), (pv, v)) in s.quantiles.iter().zip(&s.var) {
            prop_assert_eq!(p, pv);
            prop_assert_eq!(*v, -q);
        }
    }
}
