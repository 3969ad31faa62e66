//! Re-derives the constant in the consistency tolerance `C (h + dt)` from the
//! exact shrinking disc, and checks that the calibrated value still separates
//! a field that is not a minimizer.

use tvlab_core::certify::{minimizer_suite, ConsistencyTolerance};
use tvlab_core::examples::make_example;
use tvlab_core::grid::{sample_analytic, sample_cell_average, Ball, SpatialBox};

#[test]
fn exact_disc_needs_less_than_the_calibrated_constant() {
    let ex = make_example("disc_solution").unwrap();
    let ut = ex.time_derivative.clone().unwrap();
    let bx = SpatialBox::cube(2, -1.0, 1.0).unwrap();
    let ball = Ball::new(vec![0.0, 0.0], 0.8).unwrap();
    for h in [1.0f64 / 32.0, 1.0 / 64.0] {
        let dt = h / 4.0;
        let times: Vec<f64> = (0..=((0.2 / dt).round() as usize)).map(|m| m as f64 * dt).collect();
        let f = sample_cell_average(&|x: &[f64], t| ex.eval(x, t), &bx, h, &times, 4).unwrap();
        let f_t = sample_cell_average(&|x: &[f64], t| ut(x, t), &bx, h, &times, 4).unwrap();
        let s = minimizer_suite(&f, &f_t, &ball, (0.02, 0.18), 11, 50, 0.0).unwrap();
        let needed = (-s.min_gap).max(0.0) / (h + dt);
        assert!(needed <= ConsistencyTolerance::CALIBRATED.c, "h = {h}: C = {needed}");
    }
}

#[test]
fn calibrated_tolerance_still_flags_a_non_minimizer() {
    let h = 1.0 / 64.0;
    let bx = SpatialBox::cube(2, -0.75, 0.75).unwrap();
    let times: Vec<f64> = (0..=8).map(|m| m as f64 / 8.0).collect();
    let f = sample_analytic(&|x: &[f64], _| x[0].signum() * x[1].abs() / 2.0, &bx, h, &times).unwrap();
    let f_t = f.map(|_| 0.0).unwrap();
    let tolerance = ConsistencyTolerance::CALIBRATED.value(h, h / 4.0);
    let ball = Ball::new(vec![0.0, 0.0], 0.5).unwrap();
    let s = minimizer_suite(&f, &f_t, &ball, (0.0, 1.0), 7, 50, tolerance).unwrap();
    assert!(s.violations > 0, "min gap {} against tolerance {tolerance}", s.min_gap);
}
