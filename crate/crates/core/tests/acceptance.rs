//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines show on every run.

use std::process::ExitCode;
use std::time::Instant;

use tvlab_core::certify::{
    energy_suite, minimizer_suite, ConsistencyTolerance, DrawRanges, EnergySuite, MinimizerSuite, Sign,
};
use tvlab_core::continuity::{degiorgi_nu, expansion_constants, iterate_yn, YnVerdict};
use tvlab_core::continuity::{
    indicator, necessary_bound_check, oscillation_cascade, sup_bound_suite, ConstantsMode, SupBoundSuite,
};
use tvlab_core::examples::make_example;
use tvlab_core::flow::{evolve, residual_div_z, SolverConfig};
use tvlab_core::grid::{sample_analytic, sample_cell_average, Ball, SpaceTimeField, SpatialBox};
use tvlab_core::tvmeasure::tv_slice;
use tvlab_core::DualField;

/// Pinned tolerances, one block per criterion.
mod tol {
    pub const YN_RATIO_REL: f64 = 1e-10;
    pub const YN_STEPS: usize = 20;
    pub const YN_DIVERGE_WITHIN: usize = 200;

    pub const PERIMETER_REL: f64 = 0.02;
    pub const TV_GAP_REL: f64 = 0.05;

    pub const MINIMIZER_DRAWS: usize = 50;

    pub const RESIDUAL_RATIO: f64 = 1.8;

    pub const DG_GAMMA: f64 = 2.0;
    pub const DG_DRAWS: usize = 100;
    /// Allowed relative deficit per draw.
    pub const DG_SLACK: f64 = 0.0;

    pub const U2_SLOPE: f64 = 0.5;
    pub const U2_SLOPE_TOL: f64 = 0.1;
    pub const CASCADE_STAGES: usize = 3;
    pub const CASCADE_XI: f64 = 0.5;

    pub const STEP_INDICATOR: (f64, f64) = (0.5, 0.8);

    pub const NECESSARY_GAMMA: f64 = 2.0;

    pub const SUP_DRAWS: usize = 20;
    pub const SUP_STABILITY: f64 = 2.0;
}

const SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cube(dim: usize, a: f64, b: f64) -> SpatialBox {
    SpatialBox::cube(dim, a, b).unwrap()
}

fn stamps(end: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|m| end * m as f64 / count as f64).collect()
}

fn constants() -> Outcome {
    let c = degiorgi_nu(2, 2.0, Sign::Plus).unwrap();
    let e = expansion_constants(2, 2.0).unwrap();
    let xi = e.cascade_xi();
    let eta = 1.0 - xi / 2.0;
    let pass = c.b == 32.0
        && c.nu == (-22.0f64).exp2()
        && e.sigma == 1.0 / 32.0
        && e.epsilon == 1.0 / 32.0
        && e.delta == 1.0 / 1024.0
        && 2.0 * xi == e.delta / 64.0
        && eta == 1.0 - xi / 2.0;
    outcome(
        pass,
        format!(
            "b = {}, nu = 2^{}, sigma = {}, eps = {}, delta = {}, xi = {xi:e}",
            c.b,
            c.nu.log2(),
            e.sigma,
            e.epsilon,
            e.delta
        ),
    )
}

fn iteration_lemma() -> Outcome {
    let c = degiorgi_nu(2, 2.0, Sign::Plus).unwrap();
    let want = c.b.powi(-2);
    let (seq, _) = iterate_yn(c.nu, &c, tol::YN_STEPS).unwrap();
    let worst = seq
        .windows(2)
        .map(|w| ((w[1] / w[0]) / want - 1.0).abs())
        .fold(0.0, f64::max);
    let (_, verdict) = iterate_yn(2.0 * c.nu, &c, tol::YN_DIVERGE_WITHIN).unwrap();
    let diverged = matches!(verdict, YnVerdict::Diverged { .. });
    let pass = seq.len() == tol::YN_STEPS + 1 && worst <= tol::YN_RATIO_REL && diverged;
    outcome(
        pass,
        format!(
            "max ratio error {worst:e} over {} steps, Y0 = 2 nu gives {verdict:?}",
            tol::YN_STEPS
        ),
    )
}

fn tv_consistency() -> Outcome {
    let hs = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let disc = |x: &[f64], _| if x[0].hypot(x[1]) <= 0.5 { 1.0 } else { 0.0 };
    let slices: Vec<_> = hs
        .iter()
        .map(|&h| {
            let f = sample_cell_average(&disc, &cube(2, -1.0, 1.0), h, &[0.0], 8).unwrap();
            tv_slice(&f, 0, &Ball::new(vec![0.0, 0.0], 0.8).unwrap()).unwrap()
        })
        .collect();
    // Least-squares line TV(h) = a + b h; a is the extrapolated value.
    let n = hs.len() as f64;
    let mh = hs.iter().sum::<f64>() / n;
    let mv = slices.iter().map(|s| s.primal).sum::<f64>() / n;
    let sxy: f64 = hs.iter().zip(&slices).map(|(h, s)| (h - mh) * (s.primal - mv)).sum();
    let sxx: f64 = hs.iter().map(|h| (h - mh).powi(2)).sum();
    let limit = mv - sxy / sxx * mh;
    let rel = (limit - std::f64::consts::PI).abs() / std::f64::consts::PI;
    let fine = slices[2];
    let gap_rel = fine.gap / fine.primal;
    let pass = rel <= tol::PERIMETER_REL && gap_rel <= tol::TV_GAP_REL;
    let prims: Vec<String> = slices.iter().map(|s| format!("{:.4}", s.primal)).collect();
    outcome(
        pass,
        format!(
            "TV {} -> {limit:.4} ({:.2}% from pi), gap/primal {gap_rel:.3} at h = 1/128",
            prims.join(", "),
            100.0 * rel
        ),
    )
}

fn minimizer_runs() -> Vec<(&'static str, MinimizerSuite)> {
    let h = 1.0 / 128.0;
    let tolerance = ConsistencyTolerance::CALIBRATED.value(h, h / 4.0);
    let bx = cube(2, -0.75, 0.75);
    let ball = Ball::new(vec![0.0, 0.0], 0.5).unwrap();
    let times = stamps(1.0, 8);
    ["u1", "u2"]
        .into_iter()
        .map(|name| {
            let ex = make_example(name).unwrap();
            let f = sample_analytic(&|x: &[f64], t| ex.eval(x, t), &bx, h, &times).unwrap();
            let ut = ex.time_derivative.clone().unwrap();
            let ut = sample_analytic(&|x: &[f64], t| ut(x, t), &bx, h, &times).unwrap();
            (
                name,
                minimizer_suite(&f, &ut, &ball, (0.0, 1.0), SEED, tol::MINIMIZER_DRAWS, tolerance).unwrap(),
            )
        })
        .collect()
}

fn minimizers(runs: &[(&str, MinimizerSuite)]) -> Outcome {
    let pass = runs.iter().all(|(_, s)| s.violations == 0);
    let parts: Vec<String> = runs
        .iter()
        .map(|(n, s)| format!("{n}: {} violations, min gap {:.2e}", s.violations, s.min_gap))
        .collect();
    outcome(
        pass,
        format!("{} at tolerance {:.2e}", parts.join("; "), runs[0].1.tolerance),
    )
}

fn one_laplacian_identity() -> Outcome {
    let ex = make_example("F").unwrap();
    let z = ex.dual.clone().unwrap();
    let bx = cube(3, -0.5, 0.5);
    let times = [0.0, 0.125, 0.25];
    let maxima: Vec<f64> = [16.0, 32.0, 64.0]
        .iter()
        .map(|k| {
            let f = sample_analytic(&|x: &[f64], t| ex.eval(x, t), &bx, 1.0 / k, &times).unwrap();
            let dual = DualField::sample(f.grid(), &times, &|x, t, k| z(x, t, k), false).unwrap();
            let r = residual_div_z(&f, &dual).unwrap();
            r.summary_where(|x| {
                let d = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                (0.25..=0.4).contains(&d)
            })
            .max_abs
        })
        .collect();
    let ratios = [maxima[0] / maxima[1], maxima[1] / maxima[2]];
    let pass = ratios.iter().all(|&r| r >= tol::RESIDUAL_RATIO);
    outcome(pass, format!("annulus max residual {maxima:.3?}, ratios {ratios:.2?}"))
}

/// Solver run from a disc with a rectangular dip and a smooth ripple.
fn solver_field(h: f64) -> SpaceTimeField {
    let u0 = |x: &[f64], _| {
        let d = if x[0].hypot(x[1]) < 0.5 { 1.0 } else { 0.0 };
        let s = if (x[0] - 0.55).abs() < 0.25 && (x[1] + 0.5).abs() < 0.3 {
            -0.7
        } else {
            0.0
        };
        d + s + 0.25 * (3.0 * x[0]).sin() * (2.0 * x[1]).cos()
    };
    let f0 = sample_cell_average(&u0, &cube(2, -1.0, 1.0), h, &[0.0], 4).unwrap();
    let cfg = SolverConfig::for_grid(f0.grid());
    let steps = (0.25 / cfg.dt).round() as usize;
    evolve(f0.grid(), f0.slice(0), steps, &cfg).unwrap().field
}

fn energy_run(field: &SpaceTimeField) -> EnergySuite {
    energy_suite(
        field,
        &DrawRanges::for_field(field),
        tol::DG_GAMMA,
        tol::DG_SLACK,
        SEED,
        tol::DG_DRAWS,
    )
    .unwrap()
}

fn dg_membership(s: &EnergySuite) -> Outcome {
    let pass = s.violations == 0 && s.fitted_gamma <= tol::DG_GAMMA;
    outcome(
        pass,
        format!(
            "{} draws at h = 1/64: {} violations, min relative slack {:.3}, fitted gamma {:.3}",
            s.draws.len(),
            s.violations,
            s.min_relative_slack,
            s.fitted_gamma
        ),
    )
}

fn sufficiency() -> Outcome {
    let ladder = [0.25, 0.125, 0.0625, 0.03125, 0.015625];
    let bx = cube(2, -0.375, 0.375);
    let times = [0.0, 0.25];
    let curve = |name: &str| {
        let ex = make_example(name).unwrap();
        let f = sample_analytic(&|x: &[f64], t| ex.eval(x, t), &bx, 1.0 / 512.0, &times).unwrap();
        indicator(&f, &[0.0, 0.0], 0.25, &ladder).unwrap()
    };
    let u2 = curve("u2");
    let slope = u2.fit_range(1.0 / 64.0, 0.25).map(|f| f.0).unwrap_or(f64::NAN);
    let u1 = curve("u1");

    // Continuous but not Lipschitz at the origin, so the radii do not collapse
    // onto the mesh before three stages.
    let h = (-12.0f64).exp2();
    let f0 = sample_analytic(
        &|x: &[f64], _| x[0].signum() * x[0].abs().powf(0.25),
        &cube(1, -1.0, 1.0),
        h,
        &[0.0],
    )
    .unwrap();
    let cfg = SolverConfig::for_grid(f0.grid()).with_dt(1.0 / 64.0);
    let field = evolve(f0.grid(), f0.slice(0), 16, &cfg).unwrap().field;
    let c = expansion_constants(1, 2.0).unwrap();
    let cascade = oscillation_cascade(
        &field,
        &[0.0],
        0.25,
        0.25,
        ConstantsMode::Empirical,
        tol::CASCADE_XI,
        &c,
    )
    .unwrap();

    let pass = (slope - tol::U2_SLOPE).abs() <= tol::U2_SLOPE_TOL
        && u1.decreasing()
        && cascade.passed_stages() >= tol::CASCADE_STAGES;
    let u1v: Vec<String> = u1.values.iter().map(|v| format!("{:.4}", v.1)).collect();
    outcome(
        pass,
        format!(
            "u2 slope {slope:.3}; u1 indicator {}; cascade {} decayed stages ({})",
            u1v.join(" > "),
            cascade.passed_stages(),
            cascade.stop
        ),
    )
}

fn necessity() -> Outcome {
    let ex = make_example("step").unwrap();
    let h = 1.0 / 128.0;
    let f = sample_analytic(&|x: &[f64], t| ex.eval(x, t), &cube(2, -0.75, 0.75), h, &stamps(0.5, 4)).unwrap();
    let point = [h / 2.0, 0.0];
    let curve = indicator(&f, &point, 0.5, &[0.25, 0.125, 0.0625, 0.03125]).unwrap();
    let (lo, hi) = tol::STEP_INDICATOR;
    let in_band = curve.values.iter().all(|v| v.1 >= lo && v.1 <= hi);
    let c = expansion_constants(2, 2.0).unwrap();
    let cascade = oscillation_cascade(&f, &point, 0.5, 0.25, ConstantsMode::Empirical, tol::CASCADE_XI, &c).unwrap();
    let stalled = cascade.stages.len() == 2 && cascade.stages[1].omega * cascade.scale == 1.0;
    let pass = in_band && cascade.failed_stage == Some(1) && stalled;
    let vals: Vec<String> = curve.values.iter().map(|v| format!("{:.4}", v.1)).collect();
    let omegas: Vec<f64> = cascade.stages.iter().map(|s| s.omega * cascade.scale).collect();
    outcome(
        pass,
        format!(
            "indicator {}; cascade failed at {:?}, omega {omegas:?}",
            vals.join(", "),
            cascade.failed_stage
        ),
    )
}

fn necessary_estimate() -> Outcome {
    let h = 1.0 / 128.0;
    let bx = cube(2, -1.0, 1.0);
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    let mut count = 0;
    for (name, t0, rhos) in [
        ("u1", 0.5, &[0.25, 0.125, 0.0625][..]),
        ("u2", 0.5, &[0.25, 0.125, 0.0625][..]),
        ("step", 0.5, &[0.25, 0.125, 0.0625][..]),
        ("disc_solution", 0.125, &[0.0625, 0.03125][..]),
    ] {
        let ex = make_example(name).unwrap();
        let f = sample_analytic(&|x: &[f64], t| ex.eval(x, t), &bx, h, &stamps(t0, 16)).unwrap();
        for &rho in rhos {
            let b = necessary_bound_check(&f, &[0.0, 0.0], t0, rho, tol::NECESSARY_GAMMA).unwrap();
            count += 1;
            worst = worst.min(b.rhs / b.lhs.max(f64::MIN_POSITIVE));
            if !b.holds() {
                failures.push(format!("{name} rho = {rho}: {:.4} > {:.4}", b.lhs, b.rhs));
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("{count} pairs, smallest rhs/lhs {worst:.3}")
    } else {
        format!("{count} pairs, violated: {}", failures.join("; "))
    };
    outcome(failures.is_empty(), detail)
}

fn sup_run(field: &SpaceTimeField) -> SupBoundSuite {
    sup_bound_suite(field, 3.0, (0.08, 0.2), SEED, tol::SUP_DRAWS).unwrap()
}

fn sup_shape(coarse: &SupBoundSuite, fine: &SupBoundSuite) -> Outcome {
    let (a, b) = (coarse.gamma_fit, fine.gamma_fit);
    let ratio = b / a;
    let pass =
        a.is_finite() && b.is_finite() && a > 0.0 && ratio <= tol::SUP_STABILITY && ratio >= 1.0 / tol::SUP_STABILITY;
    outcome(
        pass,
        format!("largest ratio {a:.4} at h = 1/32, {b:.4} at h = 1/64 (x{ratio:.3})"),
    )
}

fn same<T: std::fmt::Debug>(a: &T, b: &T) -> bool {
    format!("{a:?}") == format!("{b:?}")
}

fn main() -> ExitCode {
    let mut lines = Vec::new();
    let mut record = |id: usize, name: &str, started: Instant, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let line = format!(
            "{tag} [{id:>2}] {name}: {} ({:.1}s)",
            o.detail,
            started.elapsed().as_secs_f64()
        );
        println!("{line}");
        lines.push(o.pass);
    };

    let t = Instant::now();
    record(1, "constants arithmetic", t, constants());
    let t = Instant::now();
    record(2, "iteration lemma sharpness", t, iteration_lemma());
    let t = Instant::now();
    record(3, "TV consistency", t, tv_consistency());
    let t = Instant::now();
    let min_runs = minimizer_runs();
    record(4, "minimizer examples", t, minimizers(&min_runs));
    let t = Instant::now();
    record(5, "1-Laplacian identity", t, one_laplacian_identity());

    let t = Instant::now();
    let coarse = solver_field(1.0 / 32.0);
    let fine = solver_field(1.0 / 64.0);
    let solve_time = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let energy = energy_run(&fine);
    record(6, "energy inequality on solver output", t, dg_membership(&energy));
    let t = Instant::now();
    record(7, "sufficiency", t, sufficiency());
    let t = Instant::now();
    record(8, "necessity", t, necessity());
    let t = Instant::now();
    record(9, "necessary estimate", t, necessary_estimate());
    let t = Instant::now();
    let sup = (sup_run(&coarse), sup_run(&fine));
    record(10, "sup-bound shape", t, sup_shape(&sup.0, &sup.1));

    let t = Instant::now();
    let again = minimizer_runs();
    let checks = [
        ("minimizer", same(&min_runs, &again)),
        ("energy", same(&energy, &energy_run(&fine))),
        ("sup-bound coarse", same(&sup.0, &sup_run(&coarse))),
        ("sup-bound fine", same(&sup.1, &sup_run(&fine))),
    ];
    let differing: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let detail = if differing.is_empty() {
        format!("{} seeded suites rerun bit-identically", checks.len())
    } else {
        format!("differing: {}", differing.join(", "))
    };
    record(11, "reproducibility", t, outcome(differing.is_empty(), detail));

    let failed = lines.iter().filter(|p| !**p).count();
    println!(
        "solver fields took {solve_time:.1}s; {} of {} criteria pass",
        lines.len() - failed,
        lines.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
