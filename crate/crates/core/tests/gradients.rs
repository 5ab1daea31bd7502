use proptest::prelude::*;
use wiretap_core::linalg::SymMatrix;
use wiretap_core::objectives::{
    bccm_rates, dpc_rates, grad_bccm_r2, grad_dpc_weighted, grad_rate_an, grad_rate_mean, rate_an, rate_mean,
    CovariancePair, DpcOrder,
};
use wiretap_core::solver::scp::{random_psd, restart_rng};
use wiretap_core::WiretapChannel;

const STEP: f64 = 1e-5;
const REL: f64 = 1e-5;

fn basis(n: usize, i: usize, j: usize) -> SymMatrix {
    let mut m = nalgebra::DMatrix::zeros(n, n);
    m[(i, j)] = 1.0;
    m[(j, i)] = 1.0;
    SymMatrix::new(m).unwrap()
}

/// Central-difference gradient with the `∂f/∂X_ij` convention of symmetric
/// matrices: the off-diagonal probe moves both entries, so it sees `2G_ij`.
fn fd_gradient(x: &SymMatrix, f: impl Fn(&SymMatrix) -> f64) -> SymMatrix {
    let n = x.dim();
    let mut g = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let e = basis(n, i, j);
            let d = (f(&(x + &e.scale(STEP))) - f(&(x - &e.scale(STEP)))) / (2.0 * STEP);
            let v = if i == j { d } else { 0.5 * d };
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    SymMatrix::new(g).unwrap()
}

fn assert_close(name: &str, analytic: &SymMatrix, numeric: &SymMatrix) {
    let err = (analytic - numeric).frobenius_norm();
    let scale = analytic.frobenius_norm().max(1e-3);
    assert!(err <= REL * scale, "{name}: |analytic - fd| = {err:.3e} vs scale {scale:.3e}");
}

fn instance(seed: u64, n_t: usize, n_r: usize, n_e: usize) -> (WiretapChannel, CovariancePair) {
    let ch = WiretapChannel::random(n_t, n_r, n_e, seed).unwrap();
    let mut rng = restart_rng(seed, 1);
    let q1 = random_psd(&mut rng, n_t, 3.0);
    let q2 = random_psd(&mut rng, n_t, 2.0);
    (ch, CovariancePair { q1, q2 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn every_objective_gradient_matches_central_differences(
        seed in any::<u64>(),
        n_t in 1usize..=4,
        n_r in 1usize..=4,
        n_e in 1usize..=4,
        a1 in 0.0f64..=1.0,
    ) {
        let (ch, pair) = instance(seed, n_t, n_r, n_e);
        let (q1, q2) = (&pair.q1, &pair.q2);
        let with_q1 = |x: &SymMatrix| CovariancePair { q1: x.clone(), q2: q2.clone() };
        let with_q2 = |x: &SymMatrix| CovariancePair { q1: q1.clone(), q2: x.clone() };

        assert_close("mean", &grad_rate_mean(&ch, q1), &fd_gradient(q1, |x| rate_mean(&ch, x)));

        let (d1, d2) = grad_rate_an(&ch, &pair);
        assert_close("an/q1", &d1, &fd_gradient(q1, |x| rate_an(&ch, &with_q1(x))));
        assert_close("an/q2", &d2, &fd_gradient(q2, |x| rate_an(&ch, &with_q2(x))));

        let a2 = 1.0 - a1;
        for order in [DpcOrder::First, DpcOrder::Second] {
            let w = |p: &CovariancePair| { let r = dpc_rates(&ch, p, order); a1 * r.r1 + a2 * r.r2 };
            let (d1, d2) = grad_dpc_weighted(&ch, &pair, order, a1, a2);
            assert_close("dpc/q1", &d1, &fd_gradient(q1, |x| w(&with_q1(x))));
            assert_close("dpc/q2", &d2, &fd_gradient(q2, |x| w(&with_q2(x))));
        }

        let (d1, d2) = grad_bccm_r2(&ch, &pair);
        assert_close("bccm/q1", &d1, &fd_gradient(q1, |x| bccm_rates(&ch, &with_q1(x)).r2));
        assert_close("bccm/q2", &d2, &fd_gradient(q2, |x| bccm_rates(&ch, &with_q2(x)).r2));
    }
}
