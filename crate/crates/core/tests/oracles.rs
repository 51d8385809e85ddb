mod support;

use support::*;

#[test]
fn lp_matches_grid_search() {
    let (n, worst) = lp_oracle_check(300, 11);
    assert_eq!(n, 300);
    assert!(worst < 0.02, "worst distance to the grid optimum {worst}");
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let (checked, worst) = gradient_check(120, 4, 5);
    assert!(checked >= 100, "only {checked} parameters had measurable gradients");
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn estimator_matches_recursive_oracle() {
    let (n, worst) = heuristic_oracle_check(200, 8, 3);
    assert_eq!(n, 200);
    assert!(worst < 1e-9, "worst difference {worst}");
}

#[test]
fn two_room_chain_is_locked() {
    assert!(two_room_chain_matches());
}
