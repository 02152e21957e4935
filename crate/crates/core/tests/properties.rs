use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use cavitybus_core::fluctuation::{monte_carlo_fidelity, worst_case_fidelity};
use cavitybus_core::model::REF_VELOCITY;
use cavitybus_core::solver::{invert_coupling_bisection, nested_w_property_check, required_angle_closed_form};
use cavitybus_core::{
    coupling_strength, effective_duration, evolve_sequential, invert_coupling, mode_profile, pulse_angle,
    required_angles, solve_positions, step_one_ion, w_overlap_fidelity, CavityMode, DesignProblem, MonteCarloConfig,
    NoiseSpec, PulseSchedule, SingleExcitationState,
};
use proptest::prelude::*;

fn schedule() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0 * PI..2.0 * PI, 1..40)
}

proptest! {
    #[test]
    fn profile_symmetry_and_bound(x in -50e-6f64..50e-6, y in -50e-6f64..50e-6, z in -2e-6f64..2e-6) {
        let m = CavityMode::default();
        let f = mode_profile(&m, x, y, z).unwrap();
        prop_assert!(f.abs() <= 1.0);
        prop_assert_eq!(f, mode_profile(&m, -x, y, z).unwrap());
        prop_assert_eq!(f, mode_profile(&m, x, -y, z).unwrap());
        prop_assert_eq!(f, mode_profile(&m, x, y, -z).unwrap());
    }

    #[test]
    fn effective_duration_identity(v in 1e-3f64..1e6, w in 1e-9f64..1e-2) {
        let m = CavityMode { waist: w, ..CavityMode::default() };
        let t = effective_duration(&m, v).unwrap();
        prop_assert!((t * v / w - PI.sqrt()).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn norm_is_conserved(angles in schedule()) {
        let s = evolve_sequential(&PulseSchedule::new(angles).unwrap()).unwrap();
        prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn folding_steps_is_bit_identical(angles in schedule()) {
        let folded = angles.iter().fold(SingleExcitationState::photon(), |s, &t| step_one_ion(&s, t));
        let direct = evolve_sequential(&PulseSchedule::new(angles).unwrap()).unwrap();
        prop_assert_eq!(folded, direct);
    }

    #[test]
    fn photon_drains_monotonically(angles in prop::collection::vec(0.0..FRAC_PI_2, 1..40)) {
        let mut s = SingleExcitationState::photon();
        let mut last = 1.0;
        for &t in &angles {
            s = step_one_ion(&s, t);
            let b = s.photon_amplitude.norm();
            prop_assert!(b <= last);
            last = b;
        }
    }

    #[test]
    fn fidelity_is_parity_invariant(pairs in prop::collection::vec((-PI..PI, -PI..PI), 1..30)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let neg = |v: &[f64]| PulseSchedule::new(v.iter().map(|x| -x).collect()).unwrap();
        let f = w_overlap_fidelity(&PulseSchedule::new(a.clone()).unwrap(), &PulseSchedule::new(b.clone()).unwrap()).unwrap();
        let g = w_overlap_fidelity(&neg(&a), &neg(&b)).unwrap();
        prop_assert!((f - g).abs() < 1e-14);
        prop_assert!(f.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn recursion_matches_closed_form(n in 1usize..=64) {
        let angles = required_angles(n).unwrap();
        let a = angles.angles();
        for k in 0..n {
            prop_assert!((a[k] - required_angle_closed_form(n, k + 1)).abs() <= 1e-12);
            if k > 0 {
                prop_assert!((a[k].sin() - a[k - 1].tan()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn inversion_round_trip(frac in 1e-12f64..=1.0) {
        let m = CavityMode::default();
        let max = m.max_pulse_angle(REF_VELOCITY, 0.0).unwrap();
        let theta = frac * max;
        let y = invert_coupling(&m, REF_VELOCITY, theta, 0.0).unwrap();
        let t_eff = effective_duration(&m, REF_VELOCITY).unwrap();
        let back = pulse_angle(coupling_strength(&m, y, 0.0).unwrap(), t_eff);
        prop_assert!((back - theta).abs() <= 1e-12);
        prop_assert!(y >= 0.0);
    }

    #[test]
    fn bisection_agrees_with_closed_form(frac in 1e-6f64..(1.0 - 1e-9), z in -100e-9f64..100e-9) {
        let m = CavityMode::default();
        let theta = frac * m.max_pulse_angle(REF_VELOCITY, z).unwrap();
        let a = invert_coupling(&m, REF_VELOCITY, theta, z).unwrap();
        let b = invert_coupling_bisection(&m, REF_VELOCITY, theta, z).unwrap();
        // 1e-9 um
        prop_assert!((a - b).abs() <= 1e-15, "{} vs {}", a, b);
    }
}

#[test]
fn ideal_w_state_up_to_64_ions() {
    for n in 1..=64 {
        let s = evolve_sequential(&required_angles(n).unwrap()).unwrap();
        let target = 1.0 / (n as f64).sqrt();
        for a in &s.ion_amplitudes {
            assert!((a.norm() - target).abs() <= 1e-10, "N = {n}");
        }
        assert!(s.photon_amplitude.norm() <= 1e-10);
    }
}

#[test]
fn zero_noise_fidelity_up_to_64_ions() {
    for n in 1..=64 {
        let ideal = required_angles(n).unwrap();
        assert!((w_overlap_fidelity(&ideal, &ideal).unwrap() - 1.0).abs() <= 1e-12);
    }
    for n in [1, 10, 33, 64] {
        let problem = DesignProblem::reference(n);
        let wc = worst_case_fidelity(&problem, &NoiseSpec::zero()).unwrap();
        assert!((wc.min - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn nested_suffix_holds_for_long_chains() {
    let table: BTreeMap<_, _> = (1..=40)
        .map(|n| (n, solve_positions(&DesignProblem::reference(n)).unwrap()))
        .collect();
    let report = nested_w_property_check(&table, 1e-12);
    assert!(report.passed, "{report:?}");
}

#[test]
fn global_box_ordering() {
    // Global-sign uniform sampling stays inside the worst-case box.
    for n in [2, 5, 10] {
        let problem = DesignProblem::reference(n);
        let noise = NoiseSpec::default();
        let wc = worst_case_fidelity(&problem, &noise).unwrap();
        let mc = monte_carlo_fidelity(
            &problem,
            &noise,
            &MonteCarloConfig {
                n_samples: 2000,
                seed: 7,
                ..MonteCarloConfig::default()
            },
        )
        .unwrap();
        assert!(wc.min <= mc.min, "N = {n}: {} > {}", wc.min, mc.min);
        assert!(mc.min <= mc.mean && mc.mean <= 1.0);
    }
}
