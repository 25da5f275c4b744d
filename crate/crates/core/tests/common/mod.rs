#![allow(dead_code)]

use std::f64::consts::PI;

use dean_kawasaki::duality::{solve_hj, HJ_OVERSAMPLING};
use dean_kawasaki::torus::{GridField, GridSpec};

/// 4 test functions × 5 (N, s, t) triples.
pub fn hj_fixture() -> Vec<(GridField, usize, f64, f64)> {
    let one = GridSpec::new(1, 64).unwrap();
    let two = GridSpec::new(2, 32).unwrap();
    let phis = [
        GridField::from_fn(one, |x| (2.0 * PI * x[0]).cos()),
        GridField::from_fn(one, |x| 3.0 * (2.0 * PI * x[0]).cos() + (4.0 * PI * x[0]).sin()),
        GridField::from_fn(two, |x| (2.0 * PI * (x[0] + x[1])).cos()),
        GridField::from_fn(two, |x| 2.0 * (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos() - 0.5),
    ];
    let triples = [(1, 0.01, 0.02), (10, 0.05, 0.05), (100, 0.1, 0.1), (10_000, 0.02, 0.3), (1_000_000, 0.2, 0.2)];
    phis.iter().flat_map(|p| triples.iter().map(move |&(n, s, t)| (p.clone(), n, s, t))).collect()
}

/// Largest excursion of `v_{s+t}` outside `[min φ, max φ]` and largest flow
/// defect `|v_{s+t} - (v_s)_t|` over the fixture.
pub fn hj_defects() -> (f64, f64) {
    let mut excursion: f64 = 0.0;
    let mut flow: f64 = 0.0;
    for (phi, n, s, t) in hj_fixture() {
        let fine = GridSpec::new(phi.spec().dim(), HJ_OVERSAMPLING * phi.spec().n()).unwrap();
        let dense = phi.resample(fine).unwrap();
        let full = solve_hj(&phi, n, s + t).unwrap();
        excursion = excursion.max(dense.min() - full.v.min()).max(full.v.max() - dense.max());
        let composed = solve_hj(&solve_hj(&phi, n, s).unwrap().v, n, t).unwrap();
        flow = flow.max(full.v.zip_with(&composed.v, |a, b| (a - b).abs()).unwrap().max());
    }
    (excursion, flow)
}
