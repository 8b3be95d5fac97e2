//! Frozen reference values: the oracle must keep reproducing them.

mod common;

use common::oscillator_plant;
use sysprop::spectra::{l2_gain, parse_golden, true_cone, true_passivity};

#[test]
fn oscillator_truths_match_golden_file() {
    let rows = parse_golden(include_str!("data/golden.csv")).unwrap();
    assert!(!rows.is_empty());
    let plant = oscillator_plant();
    let gamma = l2_gain(&plant).unwrap();
    let (s, nu) = true_passivity(&plant).unwrap();
    let (c_star, r_min) = true_cone(&plant).unwrap();
    for row in rows {
        assert_eq!(row.plant_id, "oscillator");
        let got = match row.property.as_str() {
            "gamma" => gamma,
            "s" => s,
            "nu" => nu,
            "cone_c" => c_star,
            "cone_r" => r_min,
            other => panic!("unknown golden property {other}"),
        };
        assert!(
            (got - row.value).abs() <= row.tolerance,
            "{}: recomputed {got} vs frozen {} (tol {})",
            row.property,
            row.value,
            row.tolerance
        );
    }
}

#[test]
fn oscillator_initial_quotient_matches_reported_trajectory_start() {
    // The descent from the normalized constant input starts at
    // rho_2 = 0.5631227944; the reference trajectory reports the same
    // value to ten digits.
    let plant = oscillator_plant();
    let mut s = sysprop::probe::ProbeSession::noiseless(plant);
    let u0 = sysprop::config::InitialInput::Ones.build(1, 1000).unwrap();
    let (value, _, _) = sysprop::passivity::rho2(&mut s, &u0).unwrap();
    assert!((value - 0.5631227944).abs() < 1e-9, "rho2(u0) = {value}");
}
