use csdm_core::pipeline::{synth_sparse_dataset, AmplitudeLaw, SparseDatasetSpec};
use csdm_core::recovery::{debias, fista_continuation, fista_solve, kkt_residual, LassoProblem, SolveOptions, StopReason};
use csdm_core::tensor::gaussian_sketch;
use csdm_core::tensor::matrix::{dist2, norm_inf};
use csdm_core::tensor::rng::{normal_vec, RngStream};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn converged_solutions_carry_a_kkt_certificate(
        seed in any::<u64>(),
        m in 5usize..30,
        extra in 1usize..30,
        frac in 0.01f64..0.9,
    ) {
        let d = m + extra;
        let a = gaussian_sketch(m, d, &RngStream::new(seed)).unwrap();
        let y = normal_vec(&mut RngStream::new(seed).labeled("y").generator(), m);
        let lambda = frac * norm_inf(&a.matrix().tr_mul_vec(&y));
        let p = LassoProblem::from_sketch(&a, y, lambda).unwrap();
        let opts = SolveOptions { max_iter: 200_000, tol: 1e-9, ..SolveOptions::default() };
        let r = fista_solve(&p, None, &opts).unwrap();
        prop_assert_eq!(r.trace.stop_reason, StopReason::Tolerance);
        prop_assert!(kkt_residual(&p, &r.x_hat).unwrap() <= 10.0 * opts.tol);

        let e = &r.trace.entries;
        prop_assert!(e.windows(2).all(|w| w[1].k > w[0].k && w[1].elapsed_s >= w[0].elapsed_s));
        let cut = opts.support_threshold * norm_inf(&r.x_hat);
        let expected: Vec<usize> = (0..d).filter(|&i| r.x_hat[i].abs() > cut).collect();
        prop_assert_eq!(r.support, expected);
    }
}

#[test]
fn noiseless_recovery_with_continuation_and_debiasing() {
    let (d, s) = (256, 5);
    let m = (4.0 * s as f64 * (d as f64).ln()).ceil() as usize;
    let signals = synth_sparse_dataset(&SparseDatasetSpec {
        d,
        sparsity: s,
        n: 100,
        amplitude: AmplitudeLaw::UniformSigned,
        seed: 1,
    })
    .unwrap();
    let opts = SolveOptions { max_iter: 20_000, tol: 1e-10, support_threshold: 1e-3 };
    let good = signals
        .iter()
        .enumerate()
        .filter(|(i, x)| {
            let a = gaussian_sketch(m, d, &RngStream::new(1000 + *i as u64)).unwrap();
            let y = a.apply(x).unwrap();
            let lmax = norm_inf(&a.matrix().tr_mul_vec(&y));
            let lambdas: Vec<f64> = (1..=6).map(|k| lmax * 10f64.powi(-k)).collect();
            let p = LassoProblem::from_sketch(&a, y, lambdas[5]).unwrap();
            let r = fista_continuation(&p, &lambdas, &opts).unwrap();
            let x_d = debias(&r.x_hat, &p, opts.support_threshold).unwrap();
            dist2(&x_d, x) <= 1e-3 * dist2(x, &vec![0.0; d])
        })
        .count();
    assert!(good >= 95, "{good}/100 trials recovered to 1e-3");
}
