use csdm_core::diffusion::{time_grid, NoiseNet, ScoreModel, SpikeMixture, TimeGrid, VpSchedule};
use csdm_core::tensor::rng::RngStream;
use csdm_core::tensor::Matrix;
use proptest::prelude::*;

fn schedule() -> impl Strategy<Value = VpSchedule> {
    (0.1f64..10.0, 0.0f64..40.0, 0.01f64..2.0).prop_map(|(horizon, a, b)| VpSchedule {
        a,
        b,
        horizon,
        t_min: 1e-3 * horizon,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn alpha_sigma_lie_on_the_unit_circle(sched in schedule(), u in 0.0f64..=1.0) {
        let (a, s) = sched.alpha_sigma(u * sched.horizon).unwrap();
        prop_assert!((a * a + s * s - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn alpha_strictly_decreases(sched in schedule(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        prop_assume!((u - v).abs() > 1e-6);
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        let (a_lo, _) = sched.alpha_sigma(lo * sched.horizon).unwrap();
        let (a_hi, _) = sched.alpha_sigma(hi * sched.horizon).unwrap();
        prop_assert!(a_hi < a_lo);
    }

    #[test]
    fn time_grids_cover_the_interval(sched in schedule(), steps in 1usize..2000, exp in any::<bool>()) {
        let grid = if exp { TimeGrid::Exponential } else { TimeGrid::Uniform };
        let ts = time_grid(&sched, steps, grid).unwrap();
        prop_assert_eq!(ts.len(), steps + 1);
        prop_assert_eq!(ts[0], sched.horizon);
        prop_assert_eq!(ts[steps], sched.t_min);
        prop_assert!(ts.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn network_outputs_are_finite(
        seed in any::<u64>(),
        m in 1usize..12,
        u in 0.0f64..1.0,
        scale in prop::sample::select(vec![1e-6, 1.0, 1e3]),
    ) {
        let sched = VpSchedule::default();
        let net = ScoreModel::Network(NoiseNet::new(m, &[8, 8], 4, 1.0, &RngStream::new(seed)).unwrap());
        let t = sched.t_min + u * (sched.horizon - sched.t_min);
        let x: Vec<f64> = (0..m).map(|i| scale * (i as f64 - 0.5 * m as f64)).collect();
        prop_assert!(net.noise(&sched, t, &x).unwrap().iter().all(|v| v.is_finite()));
        prop_assert!(net.score(&sched, t, &x).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn noise_equals_minus_sigma_times_score(
        seed in any::<u64>(),
        u in 0.0f64..1.0,
        x in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let sched = VpSchedule::default();
        let t = sched.t_min + u * (sched.horizon - sched.t_min);
        let (_, sigma) = sched.alpha_sigma(t).unwrap();
        let points = Matrix::from_rows(&[vec![1.0, 0.0, -1.0], vec![0.0, 2.0, 0.5]]).unwrap();
        let models = [
            ScoreModel::Network(NoiseNet::new(3, &[8], 4, 1.0, &RngStream::new(seed)).unwrap()),
            ScoreModel::SpikeMixture(SpikeMixture::new(points, None).unwrap()),
        ];
        for model in &models {
            let eps = model.noise(&sched, t, &x).unwrap();
            let s = model.score(&sched, t, &x).unwrap();
            for (e, si) in eps.iter().zip(&s) {
                prop_assert!((e + sigma * si).abs() <= 1e-9 * (1.0 + e.abs()));
            }
        }
    }
}
