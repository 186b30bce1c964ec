use nalgebra::DMatrix;
use proptest::prelude::*;
use zenolab::model::{basis_state, build_gue, QuantumModel, SpectralChargeData};
use zenolab::nhh::{evolve_nhh, nhh_poles};
use zenolab::strobo::{direct_amplitudes, min_phase_gap, pole_series, renewal_amplitudes, strobo_poles};
use zenolab::C64;

fn gue(dim: usize, seed: u64, site: usize) -> QuantumModel {
    build_gue(dim, seed, 1.0).unwrap().with_psi_in(basis_state(dim, site % dim).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn charge_sum_rules(dim in 2usize..=16, seed in any::<u64>(), site in 0usize..16) {
        let m = gue(dim, seed, site);
        let d = SpectralChargeData::from_model(&m).unwrap();
        prop_assert!((d.charges.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let total: C64 = d.weights_in().iter().sum();
        prop_assert!((total - m.overlap()).norm() < 1e-10);
        prop_assert!(d.levels.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn resolvent_matches_inverse(dim in 2usize..=10, seed in any::<u64>(), re in 0.05f64..3.0, im in -4.0f64..4.0) {
        let m = gue(dim, seed, 1);
        let d = SpectralChargeData::from_model(&m).unwrap();
        let s = C64::new(re, im);
        let a = DMatrix::<C64>::identity(dim, dim) * s + &m.hamiltonian * C64::i();
        let inv = a.try_inverse().unwrap();
        let direct = m.psi_d.dotc(&(inv * &m.psi_in));
        prop_assert!((d.v_psi(s).unwrap() - direct).norm() < 1e-9);
    }

    #[test]
    fn strobo_three_way(dim in 2usize..=8, seed in any::<u64>(), site in 0usize..8, tau in 0.1f64..1.0) {
        let m = gue(dim, seed, site);
        let d = SpectralChargeData::from_model(&m).unwrap();
        prop_assume!(min_phase_gap(&d, tau) > 1e-3);
        let Ok(poles) = strobo_poles(&d, tau) else { return Ok(()) };
        let n = 200;
        let a = direct_amplitudes(&m, tau, n).unwrap();
        let b = renewal_amplitudes(&d, tau, n).unwrap();
        let c = pole_series(&poles, n);
        for k in 0..n {
            prop_assert!((a.amplitudes[k] - b.amplitudes[k]).norm() < 1e-8);
            prop_assert!((a.amplitudes[k] - c.amplitudes[k]).norm() < 1e-8);
        }
        let sums = a.partial_sums();
        prop_assert!(sums.iter().all(|s| *s <= 1.0 + 1e-9));
    }

    #[test]
    fn nhh_pole_matrix_equivalence(dim in 2usize..=8, seed in any::<u64>(), site in 0usize..8, tau in 0.05f64..1.0) {
        let m = gue(dim, seed, site);
        let d = SpectralChargeData::from_model(&m).unwrap();
        let poles = nhh_poles(&d, tau).unwrap();
        for i in 0..poles.poles.len() {
            for j in 0..poles.poles.len() {
                prop_assert!((poles.poles[i] + poles.poles[j].conj()).re < 0.0);
            }
        }
        let grid: Vec<f64> = (0..=100).map(|k| 0.2 * k as f64).collect();
        let traj = evolve_nhh(&m, tau, &grid).unwrap();
        for (t, psi) in grid.iter().zip(&traj.psi) {
            prop_assert!((zenolab::nhh::pole_wavefunction(&poles, *t) - psi).norm() < 1e-8);
        }
        prop_assert!(traj.survival.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}
