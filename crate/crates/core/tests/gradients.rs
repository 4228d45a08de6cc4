//! Finite-difference checks of every graph operation and of the full noise network.

mod common;

use spread_core::rng;

#[test]
fn every_op_matches_finite_differences() {
    let mut r = rng::stream(17, "grad-ops");
    for c in common::op_checks(&mut r) {
        assert!(c.ok(1e-4), "{}: max relative error {:e} over {} entries", c.name, c.max_rel, c.entries);
    }
}

#[test]
fn ditmoo_forward_matches_finite_differences() {
    let mut r = rng::stream(18, "grad-dit");
    let c = common::ditmoo_check(&mut r);
    assert!(c.entries > 500);
    assert!(c.ok(1e-4), "max relative error {:e}", c.max_rel);
}
