use std::f64::consts::PI;

use orbital_raman::*;
use proptest::prelude::*;

fn model(kind: LevelKind, small_delta: f64) -> SystemModel {
    let energies = EnergySpec { delta_hot: Some(1.5), delta13: Some(8.62), small_delta, ..EnergySpec::default() };
    let dipoles = DipoleSet { mu5: Some(0.1), ..DipoleSet::default() };
    SystemModel::new(kind, energies, dipoles).unwrap()
}

fn kinds() -> impl Strategy<Value = LevelKind> {
    prop_oneof![
        Just(LevelKind::ThreeLevel),
        Just(LevelKind::FourLevelHot),
        Just(LevelKind::FourLevelHigh),
        Just(LevelKind::TwoLevelEffective),
    ]
}

fn run(m: &SystemModel, pulse: RamanPulse, dissipation: Dissipation) -> SimResult {
    let seq = PulseSequence::single(pulse).unwrap();
    let rho0 = DensityMatrix::basis_state(m.dim(), 0);
    simulate(m, &seq, &dissipation, &rho0, &IntegratorConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_evolution_stays_pure(
        kind in kinds(),
        delta in 0.0f64..0.5,
        stokes in 0.0f64..4.0,
        phase in -PI..PI,
    ) {
        let m = model(kind, delta);
        let r = run(&m, RamanPulse::new(0.0, 8.49, 1.93 * PI, stokes * PI * 4.8, phase).unwrap(), Dissipation::closed());
        let d = &r.diagnostics;
        prop_assert!(d.max_trace_defect < 1e-7);
        prop_assert!(d.max_purity_change < 1e-5);
        prop_assert!(d.min_eigenvalue > -1e-6);
    }

    #[test]
    fn dissipative_evolution_stays_physical(
        kind in kinds(),
        delta in 0.0f64..0.5,
        stokes in 0.0f64..4.0,
    ) {
        let m = model(kind, delta);
        let r = run(&m, RamanPulse::new(0.0, 8.49, 1.93 * PI, stokes * PI * 4.8, 0.0).unwrap(), Dissipation::measured());
        let rho = r.final_state();
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-7);
        prop_assert!(rho.hermiticity_defect() < 1e-9);
        prop_assert!(r.diagnostics.min_eigenvalue > -1e-6);
        for k in 0..m.dim() {
            prop_assert!((-1e-7..=1.0 + 1e-7).contains(&rho[(k, k)].re));
        }
    }

    #[test]
    fn single_pulse_transfer_ignores_phase(delta in 0.0f64..0.5, stokes in 0.5f64..3.0, phase in -PI..PI) {
        let m = model(LevelKind::ThreeLevel, delta);
        let p = RamanPulse::new(0.0, 8.49, 1.93 * PI, stokes * PI * 4.8, 0.0).unwrap();
        let a = final_population(&run(&m, p, Dissipation::closed()), "h2").unwrap();
        let b = final_population(&run(&m, p.with_relative_phase(phase), Dissipation::closed()), "h2").unwrap();
        // only the far-detuned cross couplings see the laser phase
        prop_assert!((a - b).abs() < 1e-3, "{} vs {}", a, b);
    }

    #[test]
    fn no_stokes_means_no_transfer(kind in kinds(), delta in 0.0f64..0.5) {
        let m = model(kind, delta);
        let r = run(&m, RamanPulse::new(0.0, 8.49, 1.93 * PI, 0.0, 0.0).unwrap(), Dissipation::closed());
        let target = final_population(&r, m.kind.target_label()).unwrap();
        prop_assert!(target < 1e-9, "{}", target);
    }
}

#[test]
fn sweeps_are_reproducible() {
    let cfg = ExperimentConfig::new(model(LevelKind::ThreeLevel, 0.25)).unwrap();
    let areas = Axis::linspace("stokes_area_rad", 0.0, 3.0 * PI, 9).unwrap();
    let a = rabi_sweep(&cfg, &areas).unwrap();
    let b = rabi_sweep(&cfg, &areas).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(a.metadata.config_hash, b.metadata.config_hash);
}

#[test]
fn rotation_synthesis_round_trips_through_calibration() {
    let cfg = ExperimentConfig::new(model(LevelKind::ThreeLevel, 0.0)).unwrap();
    let deltas = Axis::linspace("delta_mev", 0.0, 0.5, 21).unwrap();
    let areas = Axis::linspace("stokes_area_rad", 1.0 * PI, 3.0 * PI, 21).unwrap();
    let cal = find_pi_condition(&cfg, &deltas, &areas).unwrap();
    assert!(cal.transfer_at_pi > 0.95);
    for theta in [0.25 * PI, 0.5 * PI, PI] {
        let check = verify_rotation(&cfg, &cal, theta, 0.3).unwrap();
        assert!((check.transfer - check.expected).abs() < 0.03, "theta {theta}: {} vs {}", check.transfer, check.expected);
    }
}
