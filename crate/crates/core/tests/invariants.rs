use proptest::prelude::*;

use tvlab_core::certify::{dg_energy_report, Cutoff, Sign, TimeProfile, TruncationSpec};
use tvlab_core::continuity::{degiorgi_nu, indicator, iterate_yn};
use tvlab_core::flow::{rof_step, SolverConfig};
use tvlab_core::grid::{read_field, write_field, Ball, Cylinder, Grid, SpaceTimeField};
use tvlab_core::tvmeasure::tv_box;

fn grid(n: usize) -> Grid {
    Grid::new(vec![n, n], 1.0 / n as f64, vec![0.0, 0.0]).unwrap()
}

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, len)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tv_is_positively_homogeneous_and_subadditive(u in values(64), v in values(64), c in -3.0f64..3.0, lambda in 0.0f64..3.0) {
        let g = grid(8);
        let tu = tv_box(&g, &u);
        prop_assert!(tu >= 0.0);
        let shifted: Vec<f64> = u.iter().map(|x| x + c).collect();
        prop_assert!(close(tv_box(&g, &shifted), tu, 1e-12));
        let scaled: Vec<f64> = u.iter().map(|x| lambda * x).collect();
        prop_assert!(close(tv_box(&g, &scaled), lambda * tu, 1e-12));
        let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        prop_assert!(tv_box(&g, &sum) <= tu + tv_box(&g, &v) + 1e-12);
    }

    #[test]
    fn indicator_ignores_shifts_and_scales_with_the_field(
        u in values(256 * 2),
        c in -3.0f64..3.0,
        lambda in 0.1f64..4.0,
    ) {
        let g = grid(16);
        let f = SpaceTimeField::new(g, vec![0.0, 0.5], u).unwrap();
        let rhos = [0.3, 0.2];
        let base = indicator(&f, &[0.5, 0.5], 0.5, &rhos).unwrap();
        let shifted = indicator(&f.map(|x| x + c).unwrap(), &[0.5, 0.5], 0.5, &rhos).unwrap();
        let scaled = indicator(&f.map(|x| lambda * x).unwrap(), &[0.5, 0.5], 0.5, &rhos).unwrap();
        for ((b, s), l) in base.values.iter().zip(&shifted.values).zip(&scaled.values) {
            prop_assert!(close(s.1, b.1, 1e-10));
            prop_assert!(close(l.1, lambda * b.1, 1e-10));
        }
    }

    #[test]
    fn nu_decreases_in_gamma_and_dimension(n in 1usize..=3, g1 in 0.5f64..8.0, g2 in 0.5f64..8.0) {
        let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
        let a = degiorgi_nu(n, lo, Sign::Plus).unwrap();
        let b = degiorgi_nu(n, hi, Sign::Minus).unwrap();
        prop_assert!(b.nu <= a.nu);
        if n < 3 {
            prop_assert!(degiorgi_nu(n + 1, lo, Sign::Plus).unwrap().nu < a.nu);
        }
    }

    #[test]
    fn critical_start_decays_geometrically(n in 1usize..=3, gamma in 0.5f64..8.0) {
        let c = degiorgi_nu(n, gamma, Sign::Plus).unwrap();
        let (seq, _) = iterate_yn(c.nu, &c, 6).unwrap();
        let want = c.b.powi(-(n as i32));
        for w in seq.windows(2) {
            prop_assert!(close(w[1] / w[0], want, 1e-9));
        }
    }

    #[test]
    fn energy_budget_is_invariant_under_level_shifts(
        u in values(256 * 3),
        c in -3.0f64..3.0,
        level in -1.0f64..1.0,
        minus in any::<bool>(),
    ) {
        let g = grid(16);
        let f = SpaceTimeField::new(g.clone(), vec![0.0, 0.25, 0.5], u).unwrap();
        let cyl = Cylinder::backward(vec![0.5, 0.5], 0.5, 0.3, 1.0).unwrap();
        let cutoff = Cutoff::radial(&g, Ball::new(vec![0.5, 0.5], 0.3).unwrap(), 0.5, TimeProfile::ramp(0.2, 0.35).unwrap()).unwrap();
        let sign = if minus { Sign::Minus } else { Sign::Plus };
        let a = dg_energy_report(&f, &cyl, &TruncationSpec::new(level, sign), &cutoff, 2.0).unwrap();
        let b = dg_energy_report(&f.map(|x| x + c).unwrap(), &cyl, &TruncationSpec::new(level + c, sign), &cutoff, 2.0).unwrap();
        prop_assert!(close(a.slack, b.slack, 1e-9) || (a.slack - b.slack).abs() < 1e-12);
        prop_assert!(close(a.lhs(), b.lhs(), 1e-9) || (a.lhs() - b.lhs()).abs() < 1e-12);
    }

    #[test]
    fn implicit_step_conserves_mass_and_descends(u in values(64)) {
        let g = grid(8);
        let cfg = SolverConfig::for_grid(&g);
        let out = rof_step(&g, &u, &cfg).unwrap();
        let (m0, m1): (f64, f64) = (u.iter().sum(), out.u_next.iter().sum());
        prop_assert!((m0 - m1).abs() <= 1e-9 * m0.abs().max(1.0));
        prop_assert!(out.report.descent_certified(cfg.tolerance));
        prop_assert!(tv_box(&g, &out.u_next) <= tv_box(&g, &u) * (1.0 + 1e-6) + 1e-9);
    }

    #[test]
    fn field_files_round_trip(u in values(16 * 3)) {
        let g = Grid::new(vec![4, 4], 0.25, vec![-0.5, 0.0]).unwrap();
        let f = SpaceTimeField::new(g, vec![0.0, 0.1, 0.3], u).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.tvf");
        write_field(&f, &path).unwrap();
        let back = read_field(&path).unwrap();
        prop_assert_eq!(back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), f.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back.times(), f.times());
    }
}
