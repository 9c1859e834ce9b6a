//! Seeded property suites, one hundred draws each.

mod common;

use common::Check;

fn assert_check(c: Check) {
    println!("{}", c.summary());
    assert!(c.passed(), "{}", c.summary());
}

#[test]
fn lossless_chains_are_unitary() {
    assert_check(common::unitarity());
}

#[test]
fn transmission_is_reciprocal() {
    assert_check(common::reciprocity());
}

#[test]
fn markovian_pair_repeats_every_half_wavelength() {
    assert_check(common::periodicity());
}

#[test]
fn mirrored_pair_swaps_drive_directions() {
    assert_check(common::mirror_identity());
}

#[test]
fn drive_amplitude_scaling() {
    assert_check(common::drive_scaling());
}

#[test]
fn steady_states_are_physical() {
    assert_check(common::positivity());
}

#[test]
fn spectrum_integrates_to_flux() {
    assert_check(common::flux_sum_rule());
}

#[test]
fn rr_residues_match_quadrature() {
    assert_check(common::residues_vs_quadrature());
}

#[test]
fn green_matrix_reproduces_printed_amplitudes() {
    assert_check(common::green_reconstruction());
}

#[test]
fn group_delay_matches_analytic_derivative() {
    assert_check(common::delay_oracle());
}

#[test]
fn json_round_trip() {
    assert_check(common::serde_round_trip());
}
