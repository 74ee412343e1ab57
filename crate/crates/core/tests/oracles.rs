//! Three-round traces of every learner checked against straight-line
//! reimplementations written with plain arrays.

mod support;

use support::oracles;

#[test]
fn every_learner_matches_its_straight_line_oracle() {
    for (name, deviation) in oracles::all() {
        assert!(deviation <= oracles::TOL, "{name} deviates from its oracle by {deviation:e}");
    }
}
