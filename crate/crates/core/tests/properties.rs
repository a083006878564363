use std::f64::consts::PI;

use proptest::prelude::*;
use ptraj_core::diagnostics::{beta_max, gt_profile, loglip_modulus, time_integral, NormSeries, PairSampler};
use ptraj_core::solver::geometric_times;
use ptraj_core::spectral::synthesize_rough_field;
use ptraj_core::tracer::{envelope_bound, envelope_eta_max, torus_distance};
use ptraj_core::WavenumberGrid;

fn point() -> impl Strategy<Value = [f64; 2]> {
    [-20.0..20.0f64, -20.0..20.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn torus_distance_is_a_bounded_symmetric_shift_invariant_metric(
        a in point(), b in point(), s in point(), k in [-3i32..3, -3i32..3],
    ) {
        let d = torus_distance(a, b);
        prop_assert!(d >= 0.0 && d <= PI * 2f64.sqrt() + 1e-12);
        prop_assert!((d - torus_distance(b, a)).abs() <= 1e-12);
        let shift = |p: [f64; 2], v: [f64; 2]| [p[0] + v[0], p[1] + v[1]];
        prop_assert!((d - torus_distance(shift(a, s), shift(b, s))).abs() <= 1e-9);
        let lattice = [2.0 * PI * k[0] as f64, 2.0 * PI * k[1] as f64];
        prop_assert!((d - torus_distance(shift(a, lattice), b)).abs() <= 1e-9);
    }

    #[test]
    fn beta_max_decreases_inside_the_admissible_range(g1 in 0.5..0.999f64, g2 in 0.5..0.999f64) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let (b_lo, b_hi) = (beta_max(lo).unwrap(), beta_max(hi).unwrap());
        prop_assert!(b_hi <= b_lo);
        prop_assert!(b_hi > 0.0 && b_lo <= 5f64.sqrt() - 2.0 + 1e-15);
    }

    #[test]
    fn integral_of_a_constant_is_exact(c in 0.0..100.0f64, s_frac in 0.0..1.0f64, per_decade in 2usize..20) {
        let times = geometric_times(1e-3, 1.0, per_decade);
        let series = NormSeries::from_fn("const", &times, |_| c).unwrap();
        let s_lo = 1e-3 + s_frac * (1.0 - 1e-3);
        let got = time_integral(&series, 1.0, s_lo).unwrap();
        prop_assert!((got - c * (1.0 - s_lo)).abs() <= 1e-12 * (1.0 + c));
    }

    #[test]
    fn geometric_times_are_sorted_with_exact_ends(e_lo in -6.0..-0.5f64, e_hi in -0.4..1.0f64, per_decade in 1usize..30) {
        let (a, b) = (10f64.powf(e_lo), 10f64.powf(e_hi));
        let ts = geometric_times(a, b, per_decade);
        prop_assert!(ts.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(ts[0], a);
        prop_assert_eq!(*ts.last().unwrap(), b);
    }

    #[test]
    fn envelope_starts_at_eta_and_grows_with_the_integral(
        eta_frac in 0.001..0.999f64, i1 in 0.0..3.0f64, i2 in 0.0..3.0f64, c in 0.01..2.0f64,
    ) {
        let eta = eta_frac * envelope_eta_max();
        prop_assert_eq!(envelope_bound(eta, 0.0, 1.0, 0.0, c).unwrap(), eta);
        let (lo, hi) = if i1 <= i2 { (i1, i2) } else { (i2, i1) };
        let (e_lo, e_hi) = (
            envelope_bound(eta, 0.0, 1.0, lo, c).unwrap(),
            envelope_bound(eta, 0.0, 1.0, hi, c).unwrap(),
        );
        prop_assert!(e_lo >= eta * (1.0 - 1e-12));
        prop_assert!(e_hi >= e_lo * (1.0 - 1e-12));
    }

    #[test]
    fn heat_profile_maximiser_without_log_is_one_over_t_minus_one(log_t in -3.0..1.5f64) {
        let t = 10f64.powf(log_t);
        let m = gt_profile(0.0, t).unwrap();
        prop_assert!((m.x_star - (1.0 / t - 1.0)).abs() <= m.cell);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn loglip_constant_is_scale_invariant(seed in 0u64..1000, factor in 1e-3..1e3f64) {
        let grid = WavenumberGrid::new(16).unwrap();
        let u = synthesize_rough_field(grid, 0.1, seed).unwrap();
        let sampler = PairSampler { count: 200, seed };
        let c = loglip_modulus(&u, sampler).unwrap().constant;
        let c_scaled = loglip_modulus(&u.scaled(factor), sampler).unwrap().constant;
        prop_assert!(c > 0.0);
        prop_assert!((c - c_scaled).abs() <= 1e-10 * c);
    }
}
