use std::f64::consts::PI;

use num_complex::Complex64;

use super::*;
use crate::spectral::{synthesize_rough_field, PhysicalField};

fn grid(n: usize) -> WavenumberGrid {
    WavenumberGrid::new(n).unwrap()
}

/// Closed-form Taylor–Green velocity.
fn tg_exact(g: WavenumberGrid, nu: f64, t: f64) -> PhysicalField {
    let d = (-2.0 * nu * t).exp();
    PhysicalField::from_fn(g, |[x1, x2]| {
        [d * x1.sin() * x2.cos(), -d * x1.cos() * x2.sin()]
    })
}

#[test]
fn taylor_green_is_stationary_for_the_nonlinearity() {
    for dealias in [Dealias::TwoThirds, Dealias::None] {
        let u = SpectralVelocity::taylor_green(grid(32), 1.0);
        let b = nonlinear_term(&u, dealias);
        assert!(b.max_abs() < 1e-10, "{dealias:?}: {}", b.max_abs());
    }
}

#[test]
fn single_plane_wave_does_not_advect_itself() {
    let g = grid(16);
    let u = SpectralVelocity::single_mode(g, [1, 0], [Complex64::new(0.0, 0.0), Complex64::new(0.3, -0.2)])
        .unwrap();
    assert!(nonlinear_term(&u, Dealias::TwoThirds).max_abs() <= 1e-12);
    assert_eq!(nonlinear_term(&SpectralVelocity::zeros(g), Dealias::None).max_abs(), 0.0);
}

#[test]
fn nonlinear_term_matches_direct_product() {
    // Oracle: (u·∇)u assembled from lattice samples of u and exact gradients.
    let g = grid(16);
    let u = synthesize_rough_field(g, 0.5, 3).unwrap();
    let b = nonlinear_term(&u, Dealias::None);
    let phys = transform_to_physical(&u);
    let grad = |c: usize, axis: usize| {
        let mut f = SpectralField::zeros(g);
        for i in 0..g.len() {
            if g.is_nyquist(i) {
                continue;
            }
            let k = g.wavevector(i)[axis] as f64;
            f.component_mut(0)[i] = Complex64::new(0.0, k) * u.component(c)[i];
        }
        transform_to_physical(&f).component(0).to_vec()
    };
    let (d11, d21, d12, d22) = (grad(0, 0), grad(0, 1), grad(1, 0), grad(1, 1));
    let (v1, v2) = (phys.component(0), phys.component(1));
    let n1: Vec<f64> = (0..g.len()).map(|i| v1[i] * d11[i] + v2[i] * d21[i]).collect();
    let n2: Vec<f64> = (0..g.len()).map(|i| v1[i] * d12[i] + v2[i] * d22[i]).collect();
    let mut direct = crate::spectral::transform_to_spectral(&PhysicalField::from_components(g, n1, n2).unwrap());
    for c in 0..2 {
        for i in 0..g.len() {
            if g.is_nyquist(i) {
                direct.component_mut(c)[i] = Complex64::new(0.0, 0.0);
            }
        }
    }
    let direct = crate::spectral::leray_project(direct);
    let diff = b.max_abs_diff(&direct).unwrap();
    assert!(diff < 1e-12 * direct.max_abs().max(1.0), "{diff}");
}

#[test]
fn nonlinear_output_is_projected() {
    let u = synthesize_rough_field(grid(32), 0.2, 9).unwrap();
    let b = nonlinear_term(&u, Dealias::TwoThirds);
    assert!(b.divergence_residual() <= 1e-12 * b.max_abs());
    assert_eq!(b.get([0, 0]), [Complex64::new(0.0, 0.0); 2]);
    assert!(b.hermitian_residual() < 1e-14);
}

#[test]
fn two_thirds_mask_empties_high_band() {
    let g = grid(24);
    let u = synthesize_rough_field(g, 0.2, 1).unwrap();
    let b = nonlinear_term(&u, Dealias::TwoThirds);
    for i in 0..g.len() {
        let [a, c] = g.wavevector(i);
        if 3 * a.abs() >= 24 || 3 * c.abs() >= 24 {
            assert_eq!(b.component(0)[i], Complex64::new(0.0, 0.0));
            assert_eq!(b.component(1)[i], Complex64::new(0.0, 0.0));
        }
    }
}

#[test]
fn zero_state_stays_zero() {
    let u = SpectralVelocity::zeros(grid(16));
    let next = step(&u, 0.0, 0.01, &SolverConfig::new(0.1, 0.01, 1.0)).unwrap();
    assert_eq!(next.max_abs(), 0.0);
}

#[test]
fn linear_step_is_the_heat_factor() {
    let g = grid(16);
    let u = SpectralVelocity::single_mode(g, [2, -1], [Complex64::new(0.1, 0.2), Complex64::new(0.2, 0.4)])
        .unwrap();
    let mut cfg = SolverConfig::new(0.3, 0.01, 1.0);
    cfg.nonlinear = false;
    let next = step(&u, 0.0, 0.01, &cfg).unwrap();
    let factor = (-0.3 * 5.0 * 0.01f64).exp();
    let want = u.scaled(factor);
    assert!(next.max_abs_diff(&want).unwrap() <= 1e-16);
    let heat = heat_evolve(&u, 0.3 * 0.01).unwrap();
    assert!(next.max_abs_diff(&heat).unwrap() <= 1e-16);
}

#[test]
fn one_taylor_green_step_is_exact() {
    let u = SpectralVelocity::taylor_green(grid(32), 1.0);
    let cfg = SolverConfig::new(0.1, 1e-3, 1.0);
    let next = step(&u, 0.0, 1e-3, &cfg).unwrap();
    let want = u.scaled((-2.0 * 0.1 * 1e-3f64).exp());
    assert!(next.max_abs_diff(&want).unwrap() < 1e-10);
}

#[test]
fn taylor_green_run_tracks_closed_form() {
    let g = grid(64);
    let cfg = SolverConfig::new(0.1, 1e-3, 1.0);
    let rec = run(&cfg, SpectralVelocity::taylor_green(g, 1.0), &mut []).unwrap();
    let last = rec.snapshots.last().unwrap();
    assert_eq!(last.t, 1.0);
    let err = transform_to_physical(&last.u)
        .max_abs_diff(&tg_exact(g, 0.1, 1.0))
        .unwrap();
    assert!(err < 1e-6, "{err}");
    for s in &rec.log {
        let want = PI * 2f64.sqrt() * (-0.2 * s.t).exp();
        assert!((s.l2 - want).abs() < 1e-9 * want);
    }
}

#[test]
fn energy_budget_closes_at_fourth_order() {
    let g = grid(16);
    let u0 = synthesize_rough_field(g, 1.0, 4).unwrap();
    let residual = |dt: f64| {
        let mut cfg = SolverConfig::new(0.05, dt, 0.4);
        cfg.snapshot_every = 0;
        run(&cfg, u0.clone(), &mut []).unwrap().energy_budget_residual().abs()
    };
    let (r1, r2) = (residual(0.02), residual(0.01));
    assert!(r1 > 0.0 && r2 < r1 / 8.0, "{r1} {r2}");
}

#[test]
fn forced_energy_budget_includes_work() {
    let g = grid(16);
    let mut cfg = SolverConfig::new(0.1, 0.005, 0.5);
    cfg.forcing = Forcing::Oscillating {
        k: [1, 2],
        amplitude: 0.5,
        omega: 3.0,
    };
    cfg.snapshot_every = 0;
    let rec = run(&cfg, synthesize_rough_field(g, 1.0, 2).unwrap(), &mut []).unwrap();
    assert!(rec.log.iter().any(|s| s.work != 0.0));
    let e0 = rec.log[0].l2.powi(2);
    assert!(rec.energy_budget_residual().abs() < 1e-6 * e0);
}

#[test]
fn rough_energy_never_increases() {
    let g = grid(32);
    let mut cfg = SolverConfig::new(0.05, 2e-3, 0.2);
    cfg.snapshot_every = 10;
    let rec = run(&cfg, synthesize_rough_field(g, 0.1, 5).unwrap(), &mut []).unwrap();
    for w in rec.log.windows(2) {
        assert!(w[1].l2 <= w[0].l2 * (1.0 + 1e-14));
    }
    for s in &rec.snapshots {
        assert!(s.u.divergence_residual() <= 1e-12 * s.u.max_abs());
        assert_eq!(s.u.get([0, 0]), [Complex64::new(0.0, 0.0); 2]);
    }
}

#[test]
fn forced_linear_order_is_four() {
    // Taylor–Green is a fixed point of B, so its error is round-off only;
    // the forced heat problem exposes the RK truncation error.
    let g = grid(32);
    let mut cfg = SolverConfig::new(0.2, 0.1, 1.0);
    cfg.nonlinear = false;
    cfg.forcing = Forcing::Oscillating {
        k: [1, 1],
        amplitude: 1.0,
        omega: 7.0,
    };
    cfg.snapshot_every = 0;
    let u0 = SpectralVelocity::zeros(g);
    let final_at = |dt: f64| {
        let mut c = cfg.clone();
        c.dt = dt;
        run(&c, u0.clone(), &mut []).unwrap().final_state().unwrap().clone()
    };
    let reference = final_at(1e-3);
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| final_at(dt).max_abs_diff(&reference).unwrap())
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 3.5, "{errs:?}");
    }
}

#[test]
fn nonlinear_temporal_order_is_four() {
    let g = grid(16);
    let u0 = synthesize_rough_field(g, 1.0, 8).unwrap().scaled(3.0);
    let final_at = |dt: f64| {
        let mut c = SolverConfig::new(0.05, dt, 0.5);
        c.snapshot_every = 0;
        run(&c, u0.clone(), &mut []).unwrap().final_state().unwrap().clone()
    };
    let reference = final_at(1e-3 / 4.0);
    let errs: Vec<f64> = [0.0125, 0.00625, 0.003125]
        .iter()
        .map(|&dt| final_at(dt).max_abs_diff(&reference).unwrap())
        .collect();
    for w in errs.windows(2) {
        assert!((w[0] / w[1]).log2() >= 3.5, "{errs:?}");
    }
}

#[test]
fn heat_semigroup() {
    let g = grid(16);
    let v = SpectralVelocity::single_mode(g, [0, 1], [Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.0)])
        .unwrap();
    let w = heat_evolve(&v, 1.0).unwrap();
    assert!(w.max_abs_diff(&v.scaled((-1f64).exp())).unwrap() < 1e-16);
    assert_eq!(heat_evolve(&v, 0.0).unwrap(), v);
    let r = synthesize_rough_field(g, 0.3, 2).unwrap();
    let ab = heat_evolve(&heat_evolve(&r, 0.3).unwrap(), 0.7).unwrap();
    let direct = heat_evolve(&r, 1.0).unwrap();
    assert!(ab.max_abs_diff(&direct).unwrap() <= 1e-14 * r.max_abs());
    assert!(heat_evolve(&v, -1.0).is_err());
}

#[test]
fn preflight_rejects_large_steps() {
    let u = SpectralVelocity::taylor_green(grid(16), 1.0);
    let cfg = SolverConfig::new(0.1, 1.0, 2.0);
    let err = run(&cfg, u, &mut []).unwrap_err();
    assert!(matches!(err.error, Error::StepTooLarge { .. }));
    assert!(err.to_string().contains("reduce dt"));
}

#[test]
fn blow_up_reports_time_and_partial_record() {
    let g = grid(16);
    // An explosive forcing overflows in finite steps.
    let mut cfg = SolverConfig::new(0.1, 0.1, 10.0);
    cfg.forcing = Forcing::Oscillating {
        k: [1, 0],
        amplitude: 1e307,
        omega: 0.0,
    };
    cfg.nonlinear = false;
    let err = run(&cfg, SpectralVelocity::zeros(g), &mut []).unwrap_err();
    match err.error {
        Error::BlowUp { t } => assert!(t > 0.0 && t <= 10.0),
        e => panic!("{e}"),
    }
    assert!(!err.partial.snapshots.is_empty());
    assert_eq!(err.partial.snapshots[0].t, 0.0);
}

#[test]
fn schedule_merges_geometric_times() {
    let mut cfg = SolverConfig::new(0.1, 0.1, 1.0);
    cfg.snapshot_every = 5;
    cfg.geometric = Some(GeometricSnapshots::default());
    let s = cfg.schedule();
    assert!(s.windows(2).all(|w| w[1].0 > w[0].0));
    assert_eq!(s.last().unwrap(), &(1.0, true));
    assert!((s[0].0 - 1e-4).abs() < 1e-16);
    assert!(s.iter().filter(|x| x.1).count() >= 41);
    assert!(s.iter().any(|&(t, snap)| (t - 0.5).abs() < 1e-15 && snap));
    let t = geometric_times(1e-4, 1.0, 10);
    assert_eq!(t.len(), 41);
    assert!((t[10] - 1e-3).abs() < 1e-15);
}

#[test]
fn observers_see_every_step_and_runs_are_deterministic() {
    let g = grid(16);
    let u0 = synthesize_rough_field(g, 0.5, 11).unwrap();
    let cfg = SolverConfig::new(0.05, 0.01, 0.1);
    let mut seen = Vec::new();
    let mut obs = |t: f64, _: &SpectralVelocity| seen.push(t);
    let a = run(&cfg, u0.clone(), &mut [&mut obs]).unwrap();
    assert_eq!(seen.len(), 11);
    let b = run(&cfg, u0, &mut []).unwrap();
    assert_eq!(a.snapshots, b.snapshots);
    assert_eq!(a.snapshots[0].t, 0.0);
    assert!(a.snapshots.windows(2).all(|w| w[1].t > w[0].t));
}

#[test]
fn record_round_trips_through_a_directory() {
    let g = grid(8);
    let mut cfg = SolverConfig::new(0.05, 0.01, 0.05);
    cfg.forcing = Forcing::Steady(synthesize_rough_field(g, 1.0, 1).unwrap());
    let rec = run(&cfg, synthesize_rough_field(g, 0.5, 2).unwrap(), &mut []).unwrap();
    let dir = tempfile::tempdir().unwrap();
    rec.write_dir(dir.path(), SnapshotsOnDisk::All).unwrap();
    let text = std::fs::read_to_string(dir.path().join("steps.csv")).unwrap();
    assert!(text.starts_with("t,l2,h1\n"));
    let back = RunRecord::read_dir(dir.path()).unwrap();
    assert_eq!(back.config, rec.config);
    assert_eq!(back.snapshots, rec.snapshots);
    assert_eq!(back.log.len(), rec.log.len());
    assert_eq!(back.log[3].h1, rec.log[3].h1);

    let ends = tempfile::tempdir().unwrap();
    rec.write_dir(ends.path(), SnapshotsOnDisk::Ends).unwrap();
    assert_eq!(std::fs::read_dir(ends.path().join("snapshots")).unwrap().count(), 2);
}
