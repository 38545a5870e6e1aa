mod common;

const CASES: u32 = 256;

#[test]
fn plane_action_is_functorial() {
    common::plane_action_is_functorial(CASES).unwrap();
}

#[test]
fn plane_action_is_functorial_for_two_planes() {
    common::plane_action_is_functorial_for_two_planes(CASES).unwrap();
}

#[test]
fn grassmann_model_lifts_points_and_planes() {
    common::grassmann_model_lifts_points_and_planes(CASES).unwrap();
}

#[test]
fn induced_jet_maps_are_functorial() {
    common::induced_jet_maps_are_functorial(CASES).unwrap();
}

#[test]
fn induced_jet_map_commutes_with_order_zero() {
    common::induced_jet_map_commutes_with_order_zero(CASES).unwrap();
}

#[test]
fn skew_branches_invert() {
    common::skew_branches_invert(CASES).unwrap();
}

#[test]
fn pullback_keeps_discs_horizontal() {
    common::pullback_keeps_discs_horizontal(CASES).unwrap();
}

#[test]
fn tangency_parameters_are_unique() {
    common::tangency_parameters_are_unique(CASES).unwrap();
}

#[test]
fn jet_fiber_systems_cover() {
    common::jet_fiber_systems_cover(CASES).unwrap();
}
