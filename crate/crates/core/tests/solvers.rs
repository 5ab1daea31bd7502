use wiretap_core::channel::max_deliverable_energy;
use wiretap_core::solver::{oracle_grid, solve_max_constraints, solve_mimo_mean_scp, solve_miso_mean};
use wiretap_core::{solve, EnergyMode, PowerSpec, Receiver, Scheme, SolverConfig, Status, WiretapChannel};

const P: f64 = 10.0;

/// Seeded 2-antenna MISO instance: a minimum constraint at one receiver and
/// a maximum at the other, alternating with the seed.
fn mixed_instance(seed: u64) -> (WiretapChannel, PowerSpec) {
    let ch = WiretapChannel::random(2, 1, 1, seed).unwrap();
    let (lo, hi) = if seed.is_multiple_of(2) { (Receiver::Eve, Receiver::Bob) } else { (Receiver::Bob, Receiver::Eve) };
    let spec = PowerSpec::new(&ch, P)
        .unwrap()
        .with(lo, EnergyMode::Min, 1.0 + 0.3 * max_deliverable_energy(&ch, P, lo))
        .unwrap()
        .with(hi, EnergyMode::Max, 1.0 + 0.7 * max_deliverable_energy(&ch, P, hi))
        .unwrap();
    (ch, spec)
}

#[test]
fn siso_schemes_reach_the_closed_form() {
    let ch = WiretapChannel::siso(1.0, 0.5);
    let spec = PowerSpec::new(&ch, P).unwrap();
    let cfg = SolverConfig::default();
    for scheme in Scheme::ALL {
        let sol = solve(&ch, &spec, scheme, &cfg).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.rate - 0.5 * (11.0f64 / 3.5).ln()).abs() < 1e-6, "{scheme}: {}", sol.rate);
    }
}

#[test]
fn mixed_constraints_track_the_grid_oracle() {
    let cfg = SolverConfig::default();
    for seed in 0..4 {
        let (ch, spec) = mixed_instance(seed);
        let oracle = oracle_grid(&ch, &spec, Scheme::Mean, 120).unwrap();
        for scheme in [Scheme::Mean, Scheme::An] {
            let sol = solve(&ch, &spec, scheme, &cfg).unwrap();
            assert_eq!(sol.status, Status::Optimal, "seed {seed} {scheme}");
            // The oracle is a feasible point, so the solver may only beat it.
            assert!(sol.rate >= oracle.rate - 1e-9, "seed {seed} {scheme}: {} < {}", sol.rate, oracle.rate);
            assert!(sol.rate - oracle.rate <= 2e-2, "seed {seed} {scheme}: gap {}", sol.rate - oracle.rate);
        }
    }
}

#[test]
fn artificial_noise_never_loses_to_plain_signalling() {
    let cfg = SolverConfig::default();
    for seed in 0..6 {
        let (ch, spec) = mixed_instance(seed);
        let plain = solve(&ch, &spec, Scheme::Plain, &cfg).unwrap();
        let an = solve(&ch, &spec, Scheme::An, &cfg).unwrap();
        assert!(an.rate >= plain.rate - 1e-6, "seed {seed}: an {} plain {}", an.rate, plain.rate);
    }
}

#[test]
fn charnes_cooper_and_scp_agree() {
    let cfg = SolverConfig::default();
    for seed in 0..4 {
        let ch = WiretapChannel::random(3, 1, 1, seed).unwrap();
        let edge = max_deliverable_energy(&ch, P, Receiver::Eve);
        let spec = PowerSpec::new(&ch, P).unwrap().with(Receiver::Eve, EnergyMode::Min, 1.0 + 0.5 * edge).unwrap();
        let cc = solve_miso_mean(&ch, &spec, &cfg).unwrap();
        let scp = solve_mimo_mean_scp(&ch, &spec, &cfg).unwrap();
        assert!((cc.rate - scp.rate).abs() <= 1e-4, "seed {seed}: {} vs {}", cc.rate, scp.rate);
    }
}

#[test]
fn free_noise_adds_nothing_under_maximum_constraints() {
    let cfg = SolverConfig::default();
    for (seed, dims) in [(1, (2, 1, 1)), (2, (2, 2, 2)), (3, (3, 2, 1))] {
        let ch = WiretapChannel::random(dims.0, dims.1, dims.2, seed).unwrap();
        let spec = PowerSpec::new(&ch, P)
            .unwrap()
            .with(Receiver::Eve, EnergyMode::Max, 1.0 + 0.2 * max_deliverable_energy(&ch, P, Receiver::Eve))
            .unwrap();
        let zero_mean = solve_max_constraints(&ch, &spec, &cfg).unwrap();
        assert!(zero_mean.pair.q2.trace() == 0.0);
        for scheme in [Scheme::Mean, Scheme::An] {
            let free = solve(&ch, &spec, scheme, &cfg).unwrap();
            assert!(
                (free.rate - zero_mean.rate).abs() <= 1e-6,
                "seed {seed} {scheme}: {} vs {}",
                free.rate,
                zero_mean.rate
            );
        }
    }
}

#[test]
fn identical_receivers_have_no_secrecy() {
    let h = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.8]);
    let ch = WiretapChannel::new(h.clone(), h).unwrap();
    let spec = PowerSpec::new(&ch, P).unwrap();
    let cfg = SolverConfig::default();
    for scheme in Scheme::ALL {
        assert!(solve(&ch, &spec, scheme, &cfg).unwrap().rate < 1e-7);
    }
}
