use ringfwm::analysis::jsa_fidelity;
use ringfwm::lingrid::KGrid;
use ringfwm::pipeline::{solve_device, Engine, IDLER_FORWARD, SIGNAL_FORWARD};
use ringfwm::ringscene::{RingScenario, ScenarioDefects};
use ringfwm::settom::{compare_reconstruction, reconstruct, reconstruct_standard, with_seed_phase, SetGauge};
use ringfwm::Error;

fn scenario(strength: f64) -> RingScenario {
    RingScenario {
        grid: KGrid::symmetric(41, 2515.01).unwrap(),
        ..RingScenario::default()
    }
    .with_strength(strength)
}

#[test]
fn inversion_is_exact_without_backscatter() {
    let d = solve_device(&scenario(0.1), &ScenarioDefects::default(), Engine::Full, Default::default()).unwrap();
    let truth = d.jsa(SIGNAL_FORWARD, IDLER_FORWARD).unwrap();
    let recon = reconstruct_standard(&d.set_dataset(SIGNAL_FORWARD, IDLER_FORWARD).unwrap()).unwrap();
    let cmp = compare_reconstruction(&recon.jsa, &truth).unwrap();
    assert!(cmp.fidelity >= 1.0 - 1e-8, "fidelity {}", cmp.fidelity);
    assert!(cmp.purity_gap.abs() < 1e-8);
}

#[test]
fn global_seed_phase_does_not_change_the_inference() {
    let d = solve_device(&scenario(0.1), &ScenarioDefects::default(), Engine::Full, Default::default()).unwrap();
    let data = d.set_dataset(SIGNAL_FORWARD, IDLER_FORWARD).unwrap();
    let a = reconstruct_standard(&data).unwrap();
    let b = reconstruct_standard(&with_seed_phase(&data, 1.234)).unwrap();
    let diff = ringfwm::linalg::rel_diff(a.jsa.values.as_ref(), b.jsa.values.as_ref());
    assert!(diff <= 1e-10, "{diff:e}");
    assert!(jsa_fidelity(&a.jsa, &b.jsa).unwrap() >= 1.0 - 1e-12);
}

#[test]
fn no_nonlinearity_means_no_data() {
    let d = solve_device(&scenario(0.0), &ScenarioDefects::default(), Engine::Full, Default::default()).unwrap();
    let data = d.set_dataset(SIGNAL_FORWARD, IDLER_FORWARD).unwrap();
    assert_eq!(ringfwm::linalg::frobenius(data.beta_12.as_ref()), 0.0);
    assert!(matches!(reconstruct_standard(&data), Err(Error::ZeroNorm(_))));
}

#[test]
fn unknown_port_is_reported() {
    let d = solve_device(&scenario(0.1), &ScenarioDefects::default(), Engine::Perturbative, Default::default()).unwrap();
    assert!(matches!(d.set_dataset("s1f", "x9"), Err(Error::UnknownMode(_))));
}

#[test]
fn term_phases_do_not_move_the_inferred_purity() {
    let d = solve_device(&scenario(0.1), &ScenarioDefects::default(), Engine::Full, Default::default()).unwrap();
    let data = d.set_dataset(SIGNAL_FORWARD, IDLER_FORWARD).unwrap();
    let truth = d.jsa(SIGNAL_FORWARD, IDLER_FORWARD).unwrap();
    let aligned = compare_reconstruction(&reconstruct(&data, SetGauge::Aligned).unwrap().jsa, &truth).unwrap();
    let canonical = compare_reconstruction(&reconstruct(&data, SetGauge::Canonical).unwrap().jsa, &truth).unwrap();
    assert!((aligned.inferred_purity - canonical.inferred_purity).abs() < 1e-12);
    assert!(canonical.fidelity <= aligned.fidelity + 1e-12);
}
