//! Passive tracers `Ẋ = u(X, t)` driven by solver snapshots, and audits of
//! trajectory separation against the log-Lipschitz envelope.
//!
//! Between snapshots the velocity is interpolated linearly in time (which,
//! since evaluation is linear in the coefficients, is the same as blending
//! the two evaluated velocities). Every snapshot interval is split into an
//! integer number of substeps, so halving `dt` refines each interval exactly.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;

use crate::diagnostics::{record_norms, series_name, sup_weighted, BoundReport, NormSeries, Verdict};
use crate::solver::RunRecord;
use crate::spectral::{PointEvaluator, SpectralField};
use crate::{exec, Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Differences below this are treated as round-off when measuring orders.
pub const ROUND_OFF_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Rk4,
    Euler,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Rk4 => "rk4",
            Scheme::Euler => "euler",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rk4" => Some(Scheme::Rk4),
            "euler" => Some(Scheme::Euler),
            _ => None,
        }
    }

    fn advance(&self, x: [f64; 2], t: f64, h: f64, vel: &dyn Fn([f64; 2], f64) -> [f64; 2]) -> [f64; 2] {
        let add = |x: [f64; 2], v: [f64; 2], a: f64| [x[0] + a * v[0], x[1] + a * v[1]];
        match self {
            Scheme::Euler => add(x, vel(x, t), h),
            Scheme::Rk4 => {
                let k1 = vel(x, t);
                let k2 = vel(add(x, k1, 0.5 * h), t + 0.5 * h);
                let k3 = vel(add(x, k2, 0.5 * h), t + 0.5 * h);
                let k4 = vel(add(x, k3, h), t + h);
                [
                    x[0] + h / 6.0 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0]),
                    x[1] + h / 6.0 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1]),
                ]
            }
        }
    }
}

/// Particle paths sampled at common times.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySet {
    pub scheme: Scheme,
    /// Largest substep used.
    pub dt: f64,
    times: Vec<f64>,
    /// Unwrapped positions, `paths[particle][sample]`.
    paths: Vec<Vec<[f64; 2]>>,
}

impl TrajectorySet {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn particles(&self) -> usize {
        self.paths.len()
    }

    /// Position on `[0, 2π)²`.
    pub fn position(&self, particle: usize, sample: usize) -> [f64; 2] {
        self.paths[particle][sample].map(|x| x.rem_euclid(TWO_PI))
    }

    /// Number of times each coordinate has crossed the period.
    pub fn winding(&self, particle: usize, sample: usize) -> [i64; 2] {
        self.paths[particle][sample].map(|x| (x / TWO_PI).floor() as i64)
    }

    pub fn unwrapped(&self, particle: usize, sample: usize) -> [f64; 2] {
        self.paths[particle][sample]
    }

    pub fn final_position(&self, particle: usize) -> [f64; 2] {
        self.position(particle, self.times.len() - 1)
    }
}

/// Minimal-image distance on the torus.
pub fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = |x: f64, y: f64| {
        let r = (x - y).abs().rem_euclid(TWO_PI);
        r.min(TWO_PI - r)
    };
    d(a[0], b[0]).hypot(d(a[1], b[1]))
}

fn substeps(span: f64, dt: f64) -> usize {
    ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Integrates tracers through the run's snapshots from `t = 0` to its end.
pub fn advect(run: &RunRecord, starts: &[[f64; 2]], dt: f64, scheme: Scheme) -> Result<TrajectorySet> {
    advect_level(run, starts, dt, 0, scheme)
}

/// As [`advect`] with every snapshot interval split into
/// `ceil(Δ/dt) · 2^level` substeps, so successive levels halve every substep
/// (including those in intervals shorter than `dt`).
pub fn advect_level(
    run: &RunRecord,
    starts: &[[f64; 2]],
    dt: f64,
    level: u32,
    scheme: Scheme,
) -> Result<TrajectorySet> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::out_of_range("dt", dt, "(0, ∞)"));
    }
    if run.snapshots.len() < 2 {
        return Err(Error::EmptyRun(run.snapshots.len()));
    }
    if starts.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("tracer start positions must be finite".into()));
    }
    let times: Vec<f64> = run.snapshots.iter().map(|s| s.t).collect();
    let evals: Vec<PointEvaluator> = exec::map(&run.snapshots, |s| PointEvaluator::new(&s.u));
    let paths = exec::map(starts, |&x0| {
        let mut x = x0;
        let mut path = Vec::with_capacity(times.len());
        path.push(x);
        for j in 0..times.len() - 1 {
            let (ta, tb) = (times[j], times[j + 1]);
            let span = tb - ta;
            let (ea, eb) = (&evals[j], &evals[j + 1]);
            let vel = |p: [f64; 2], t: f64| {
                let th = ((t - ta) / span).clamp(0.0, 1.0);
                if th == 0.0 {
                    ea.eval(p)
                } else if th == 1.0 {
                    eb.eval(p)
                } else {
                    let (a, b) = (ea.eval(p), eb.eval(p));
                    [a[0] + th * (b[0] - a[0]), a[1] + th * (b[1] - a[1])]
                }
            };
            let m = substeps(span, dt) << level;
            let h = span / m as f64;
            for i in 0..m {
                x = scheme.advance(x, ta + i as f64 * h, h, &vel);
            }
            path.push(x);
        }
        path
    });
    Ok(TrajectorySet {
        scheme,
        dt: dt / f64::from(1u32 << level),
        times,
        paths,
    })
}

/// Integrates tracers through a time-independent field for `duration`
/// (negative runs backwards), sampling after every step.
pub fn advect_frozen(
    u: &SpectralField,
    starts: &[[f64; 2]],
    dt: f64,
    duration: f64,
    scheme: Scheme,
) -> Result<TrajectorySet> {
    if !(dt > 0.0) || !dt.is_finite() || !duration.is_finite() {
        return Err(Error::out_of_range("dt", dt, "(0, ∞)"));
    }
    let m = substeps(duration.abs(), dt);
    let h = duration / m as f64;
    let ev = PointEvaluator::new(u);
    let vel = |p: [f64; 2], _t: f64| ev.eval(p);
    let paths = exec::map(starts, |&x0| {
        let mut x = x0;
        let mut path = vec![x];
        for i in 0..m {
            x = scheme.advance(x, i as f64 * h, h, &vel);
            path.push(x);
        }
        path
    });
    Ok(TrajectorySet {
        scheme,
        dt,
        times: (0..=m).map(|i| i as f64 * h).collect(),
        paths,
    })
}

/// `η(t)` for one pair of trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparationSeries {
    pub samples: Vec<(f64, f64)>,
}

impl SeparationSeries {
    pub fn last(&self) -> f64 {
        self.samples.last().map_or(f64::NAN, |s| s.1)
    }
}

/// Torus distance between particle `i` of `a` and particle `i` of `b`, for
/// every `i`.
pub fn separation_series(a: &TrajectorySet, b: &TrajectorySet) -> Result<Vec<SeparationSeries>> {
    if a.times != b.times {
        return Err(Error::TimeGridMismatch);
    }
    if a.particles() != b.particles() {
        return Err(Error::Invalid(format!(
            "particle counts differ: {} vs {}",
            a.particles(),
            b.particles()
        )));
    }
    Ok((0..a.particles())
        .map(|p| SeparationSeries {
            samples: a
                .times
                .iter()
                .enumerate()
                .map(|(i, &t)| (t, torus_distance(a.unwrapped(p, i), b.unwrapped(p, i))))
                .collect(),
        })
        .collect())
}

/// Separation between two particles of the same set.
pub fn pair_separation(set: &TrajectorySet, p: usize, q: usize) -> SeparationSeries {
    SeparationSeries {
        samples: set
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, torus_distance(set.unwrapped(p, i), set.unwrapped(q, i))))
            .collect(),
    }
}

/// Largest separation for which the envelope is defined.
pub fn envelope_eta_max() -> f64 {
    (-0.5f64).exp()
}

/// `exp(−(√log(1/η_s) − c·∫_s^t‖Au‖)²)`, or `+∞` when the parenthesis is
/// negative (the bound says nothing).
pub fn envelope_bound(eta_s: f64, s: f64, t: f64, au_integral: f64, c: f64) -> Result<f64> {
    if !(eta_s > 0.0 && eta_s < envelope_eta_max()) {
        return Err(Error::out_of_range("eta_s", eta_s, "(0, e^{-1/2})"));
    }
    if !(s < t) {
        return Err(Error::Invalid(format!("need s < t, got s = {s}, t = {t}")));
    }
    let ci = c * au_integral;
    if ci == 0.0 {
        return Ok(eta_s);
    }
    let p = (1.0 / eta_s).ln().sqrt() - ci;
    if p < 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((-p * p).exp())
}

/// `cK (log((1+‖Du(s)‖²)/(1+‖Du(t)‖²)))^{1/2} + cK` with the log argument
/// clamped to at least 1.
pub fn au_integral_bound(du_s: f64, du_t: f64, k: f64, c: f64) -> f64 {
    let ratio = ((1.0 + du_s * du_s) / (1.0 + du_t * du_t)).max(1.0);
    c * k * ratio.ln().sqrt() + c * k
}

/// `sup|u| ≤ c_emb ‖D^{5/4}u‖` on the grid, by Cauchy–Schwarz over the
/// nonzero modes.
pub fn embedding_constant(run: &RunRecord) -> f64 {
    let g = run.grid;
    let sum: f64 = (0..g.len())
        .filter(|&i| g.k_squared(i) > 0.0)
        .map(|i| g.k_squared(i).powf(-1.25))
        .sum();
    (sum / g.area()).sqrt()
}

/// Audit of `η(s) ≤ k s^{1/4}` along its derivation.
///
/// Checks the interpolation inequality `‖D^{5/4}u‖² ≤ ‖D^{3/2}u‖‖Du‖` at every
/// snapshot, fits `k_chain = sup s^{3/4}‖D^{5/4}u(s)‖`, sets
/// `k = 8 c_emb k_chain` (since `η' ≤ 2 sup|u| ≤ 2 c_emb k_chain s^{-3/4}`)
/// and compares it with integrator-pair separations started at `a`
/// (rk4 against Euler, and rk4 at `dt` against `dt/2`).
pub fn eta_initial_audit(run: &RunRecord, a: [f64; 2], s_list: &[f64], dt: f64) -> Result<BoundReport> {
    let norms = record_norms(run, &[1.0, 1.25, 1.5])?;
    eta_initial_audit_with(run, &norms, a, s_list, dt)
}

/// As [`eta_initial_audit`] with precomputed norm series.
pub fn eta_initial_audit_with(
    run: &RunRecord,
    norms: &[NormSeries],
    a: [f64; 2],
    s_list: &[f64],
    dt: f64,
) -> Result<BoundReport> {
    let find = |s: f64| {
        let name = series_name(s);
        norms
            .iter()
            .find(|n| n.name == name)
            .ok_or(Error::MissingSeries(name))
    };
    let (d1, d54, d32) = (find(1.0)?, find(1.25)?, find(1.5)?);
    if d1.times() != d54.times() || d1.times() != d32.times() {
        return Err(Error::TimeGridMismatch);
    }
    let mut interp_gap: f64 = 0.0;
    for ((a1, a54), a32) in d1.samples().iter().zip(d54.samples()).zip(d32.samples()) {
        let rhs = a32.1 * a1.1;
        if rhs > 0.0 {
            interp_gap = interp_gap.max(a54.1 * a54.1 / rhs - 1.0);
        }
    }
    let chain = sup_weighted(d54, 0.75);
    let c_emb = embedding_constant(run);
    let k = 8.0 * c_emb * chain.constant;

    let rk = advect(run, &[a], dt, Scheme::Rk4)?;
    let eu = advect(run, &[a], dt, Scheme::Euler)?;
    let half = advect_level(run, &[a], dt, 1, Scheme::Rk4)?;
    let pairs = [
        separation_series(&rk, &eu)?.remove(0),
        separation_series(&rk, &half)?.remove(0),
    ];
    let wanted = |t: f64| {
        t > 0.0 && (s_list.is_empty() || s_list.iter().any(|&s| (s - t).abs() <= 1e-12 * s.abs().max(1.0)))
    };
    let mut fitted: f64 = 0.0;
    let mut arg = f64::NAN;
    for series in &pairs {
        for &(t, eta) in &series.samples {
            if wanted(t) {
                let q = eta / t.powf(0.25);
                if q > fitted {
                    fitted = q;
                    arg = t;
                }
            }
        }
    }
    let residual = fitted - k;
    let verdict = if interp_gap > 1e-12 || residual > 0.0 {
        Verdict::Violated
    } else if chain.verdict.holds() || chain.arg == 0.0 {
        Verdict::HoldsAtDeskScale
    } else {
        Verdict::Inconclusive
    };
    Ok(BoundReport {
        name: "eta(s) <= k s^1/4".into(),
        constant: k,
        sup_residual: residual,
        arg,
        n: Some(run.grid.n()),
        dt: Some(dt),
        verdict,
        extras: vec![
            ("interpolation_gap".into(), interp_gap),
            ("k_chain".into(), chain.constant),
            ("k_chain_at".into(), chain.arg),
            ("c_emb".into(), c_emb),
            ("observed_k".into(), fitted),
        ],
    })
}

/// Cumulative trapezoid `∫_0^{t_j} ‖Au‖` on the run's snapshot grid.
pub fn cumulative_au(run: &RunRecord) -> Result<Vec<f64>> {
    let au = record_norms(run, &[2.0])?.remove(0);
    let mut out = vec![0.0];
    for w in au.samples().windows(2) {
        let last = *out.last().unwrap();
        out.push(last + 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1));
    }
    Ok(out)
}

/// Outcome of checking the separation envelope on a set of pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeAudit {
    pub c: f64,
    /// `(s, t)` samples where the envelope is finite.
    pub checked: usize,
    pub vacuous: usize,
    /// Samples with `η(s)` outside `(0, e^{-1/2})`.
    pub skipped: usize,
    pub violations: usize,
}

impl EnvelopeAudit {
    pub fn pass_fraction(&self) -> f64 {
        if self.checked == 0 {
            f64::NAN
        } else {
            1.0 - self.violations as f64 / self.checked as f64
        }
    }
}

fn admissible(eta: f64) -> bool {
    eta > 0.0 && eta < envelope_eta_max()
}

/// Smallest `c` for which the envelope holds on every `(s, t)` sample.
pub fn calibrate_envelope(pairs: &[SeparationSeries], cum_au: &[f64]) -> f64 {
    let mut c: f64 = 0.0;
    for p in pairs {
        let eta = &p.samples;
        for i in 0..eta.len() {
            if !admissible(eta[i].1) {
                continue;
            }
            let root_s = (1.0 / eta[i].1).ln().sqrt();
            for j in i + 1..eta.len() {
                let integral = cum_au[j] - cum_au[i];
                if eta[j].1 <= eta[i].1 || integral <= 0.0 {
                    continue;
                }
                let root_t = if eta[j].1 >= 1.0 {
                    0.0
                } else {
                    (1.0 / eta[j].1).ln().sqrt()
                };
                c = c.max((root_s - root_t) / integral);
            }
        }
    }
    c * (1.0 + 1e-12)
}

/// Checks `η(t) ≤ envelope_bound(η(s), s, t, ∫_s^t‖Au‖, c)` on all samples.
pub fn audit_envelope(pairs: &[SeparationSeries], cum_au: &[f64], c: f64) -> EnvelopeAudit {
    let mut audit = EnvelopeAudit {
        c,
        checked: 0,
        vacuous: 0,
        skipped: 0,
        violations: 0,
    };
    for p in pairs {
        let eta = &p.samples;
        for i in 0..eta.len() {
            if !admissible(eta[i].1) {
                audit.skipped += eta.len() - i - 1;
                continue;
            }
            for j in i + 1..eta.len() {
                let bound = envelope_bound(eta[i].1, eta[i].0, eta[j].0, cum_au[j] - cum_au[i], c)
                    .expect("admissible sample");
                if bound.is_infinite() {
                    audit.vacuous += 1;
                    continue;
                }
                audit.checked += 1;
                if eta[j].1 > bound {
                    audit.violations += 1;
                }
            }
        }
    }
    audit
}

/// Unit direction of the start perturbations.
pub const PERTURBATION_DIRECTION: [f64; 2] = [1.0 / SQRT_2, 1.0 / SQRT_2];

/// Reference particle at `a` followed by one particle per admissible `ε`.
pub fn perturbed_starts(a: [f64; 2], eps: &[f64]) -> Vec<[f64; 2]> {
    let d = PERTURBATION_DIRECTION;
    std::iter::once(a)
        .chain(eps.iter().map(|&e| [a[0] + e * d[0], a[1] + e * d[1]]))
        .collect()
}

/// Perturbation pairs advected at `dt` with rk4: one series per `ε`.
pub fn perturbation_pairs(run: &RunRecord, a: [f64; 2], eps: &[f64], dt: f64) -> Result<Vec<SeparationSeries>> {
    perturbation_pairs_level(run, a, eps, dt, 0)
}

fn perturbation_pairs_level(
    run: &RunRecord,
    a: [f64; 2],
    eps: &[f64],
    dt: f64,
    level: u32,
) -> Result<Vec<SeparationSeries>> {
    let set = advect_level(run, &perturbed_starts(a, eps), dt, level, Scheme::Rk4)?;
    Ok((1..set.particles()).map(|q| pair_separation(&set, 0, q)).collect())
}

/// Levels `l` with `dt_list[l] = dt_list[0] / 2^l`.
fn halving_levels(dt_list: &[f64]) -> Result<Vec<u32>> {
    let bad = || Error::Invalid("dt_list must start at some dt and halve at each entry".into());
    let &dt0 = dt_list.first().ok_or_else(bad)?;
    if !(dt0 > 0.0) {
        return Err(bad());
    }
    dt_list
        .iter()
        .enumerate()
        .map(|(l, &dt)| {
            let want = dt0 / f64::from(1u32 << l);
            if l < 31 && (dt - want).abs() <= 1e-12 * want {
                Ok(l as u32)
            } else {
                Err(bad())
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniquenessReport {
    /// Admissible perturbation sizes, in the given (decreasing) order.
    pub eps: Vec<f64>,
    pub rejected_eps: Vec<f64>,
    /// `η(T)` per admissible `ε`.
    pub eta_final: Vec<f64>,
    /// `η(T)` strictly decreases along `eps`.
    pub eta_monotone: bool,
    /// `max(η(T)/ε) / min(η(T)/ε)`.
    pub ratio_spread: f64,
    pub dts: Vec<f64>,
    /// Final positions of consecutive rk4 refinements, `|X_dt − X_dt/2|`.
    pub dt_differences: Vec<f64>,
    /// Observed orders between consecutive differences above the floor.
    pub orders: Vec<f64>,
    pub euler_differences: Vec<f64>,
    pub euler_orders: Vec<f64>,
    /// Envelope constant calibrated on these pairs, with its in-sample audit.
    pub envelope: EnvelopeAudit,
    pub pairs: Vec<SeparationSeries>,
    /// Largest snapshot time with `∫_0^t (1+‖Du‖²) < 1/c²`.
    pub t_star: f64,
}

impl UniquenessReport {
    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_ratio(&self) -> f64 {
        self.eps
            .iter()
            .zip(&self.eta_final)
            .map(|(e, h)| h / e)
            .fold(0.0, f64::max)
    }
}

fn observed_orders(dts: &[f64], diffs: &[f64]) -> Vec<f64> {
    diffs
        .windows(2)
        .zip(dts.windows(2))
        .take_while(|(d, _)| d[0] > ROUND_OFF_FLOOR && d[1] > ROUND_OFF_FLOOR)
        .map(|(d, h)| (d[0] / d[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// Stability of trajectories under start perturbations and integrator
/// refinement, plus the in-sample envelope calibration.
///
/// Floating-point integration of a fixed field is always unique, so the
/// claim is exercised as continuity of `η(T)` in `ε` and in `dt`.
pub fn uniqueness_experiment(
    run: &RunRecord,
    a: [f64; 2],
    eps_list: &[f64],
    dt_list: &[f64],
) -> Result<UniquenessReport> {
    let levels = halving_levels(dt_list)?;
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Invalid("eps_list must be decreasing".into()));
    }
    let (eps, rejected_eps): (Vec<f64>, Vec<f64>) = eps_list.iter().partition(|&&e| admissible(e));
    let (dt0, finest) = (dt_list[0], *levels.last().unwrap());

    let pairs = perturbation_pairs_level(run, a, &eps, dt0, finest)?;
    let eta_final: Vec<f64> = pairs.iter().map(SeparationSeries::last).collect();
    let eta_monotone = eta_final.windows(2).all(|w| w[1] < w[0]);
    let ratios: Vec<f64> = eps.iter().zip(&eta_final).map(|(e, h)| h / e).collect();
    let ratio_spread = if ratios.is_empty() {
        f64::NAN
    } else {
        ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min)
    };

    let finals = |scheme: Scheme| -> Result<Vec<[f64; 2]>> {
        let sets = exec::map(&levels, |&l| advect_level(run, &[a], dt0, l, scheme));
        sets.into_iter()
            .map(|s| s.map(|s| s.unwrapped(0, s.times().len() - 1)))
            .collect()
    };
    let diffs = |x: &[[f64; 2]]| -> Vec<f64> {
        x.windows(2)
            .map(|w| (w[0][0] - w[1][0]).hypot(w[0][1] - w[1][1]))
            .collect()
    };
    let rk = finals(Scheme::Rk4)?;
    let eu = finals(Scheme::Euler)?;
    let dt_differences = diffs(&rk);
    let euler_differences = diffs(&eu);
    let orders = observed_orders(dt_list, &dt_differences);
    let euler_orders = observed_orders(dt_list, &euler_differences);

    let cum = cumulative_au(run)?;
    let c = calibrate_envelope(&pairs, &cum);
    let envelope = audit_envelope(&pairs, &cum, c);

    let du = record_norms(run, &[1.0])?.remove(0);
    let mut k2 = 0.0;
    let mut t_star = 0.0;
    let limit = if c > 0.0 { 1.0 / (c * c) } else { f64::INFINITY };
    for w in du.samples().windows(2) {
        k2 += 0.5 * (w[1].0 - w[0].0) * (2.0 + w[0].1 * w[0].1 + w[1].1 * w[1].1);
        if k2 >= limit {
            break;
        }
        t_star = w[1].0;
    }

    Ok(UniquenessReport {
        eps,
        rejected_eps,
        eta_final,
        eta_monotone,
        ratio_spread,
        dts: dt_list.to_vec(),
        dt_differences,
        orders,
        euler_differences,
        euler_orders,
        envelope,
        pairs,
        t_star,
    })
}

/// Out-of-sample envelope check with a frozen `c`.
pub fn envelope_out_of_sample(
    run: &RunRecord,
    a: [f64; 2],
    eps_list: &[f64],
    dt: f64,
    c: f64,
) -> Result<EnvelopeAudit> {
    let eps: Vec<f64> = eps_list.iter().copied().filter(|&e| admissible(e)).collect();
    let pairs = perturbation_pairs(run, a, &eps, dt)?;
    Ok(audit_envelope(&pairs, &cumulative_au(run)?, c))
}

/// `trajectories.csv`: `t,particle_id,x1,x2,wind1,wind2`.
pub fn trajectories_csv(set: &TrajectorySet) -> String {
    let mut out = String::from("t,particle_id,x1,x2,wind1,wind2\n");
    for (i, &t) in set.times.iter().enumerate() {
        for p in 0..set.particles() {
            let [x1, x2] = set.position(p, i);
            let [w1, w2] = set.winding(p, i);
            writeln!(out, "{t},{p},{x1},{x2},{w1},{w2}").unwrap();
        }
    }
    out
}

/// `separations.csv`: `pair,t,eta,envelope,vacuous_flag`, the envelope taken
/// from the first positive sample of each pair.
pub fn separations_csv(pairs: &[SeparationSeries], cum_au: &[f64], c: f64) -> String {
    let mut out = String::from("pair,t,eta,envelope,vacuous_flag\n");
    for (p, series) in pairs.iter().enumerate() {
        let base = series.samples.iter().position(|s| s.0 > 0.0 && admissible(s.1));
        for (j, &(t, eta)) in series.samples.iter().enumerate() {
            let env = match base {
                Some(i) if j > i => {
                    envelope_bound(series.samples[i].1, series.samples[i].0, t, cum_au[j] - cum_au[i], c)
                        .unwrap_or(f64::NAN)
                }
                Some(i) if j == i => series.samples[i].1,
                _ => f64::NAN,
            };
            let vacuous = u8::from(env.is_infinite() || env.is_nan());
            writeln!(out, "{p},{t},{eta},{env},{vacuous}").unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{run, SolverConfig};
    use crate::spectral::{synthesize_rough_field, SpectralVelocity, WavenumberGrid};
    use num_complex::Complex64;

    fn grid(n: usize) -> WavenumberGrid {
        WavenumberGrid::new(n).unwrap()
    }

    /// `(sin x₂, 0)`.
    fn shear(g: WavenumberGrid) -> SpectralVelocity {
        SpectralVelocity::single_mode(g, [0, 1], [Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.0)])
            .unwrap()
    }

    /// Field translated by `shift`: `v(x) = u(x − shift)`.
    fn translated(u: &SpectralField, shift: [f64; 2]) -> SpectralField {
        let g = u.grid();
        let mut v = u.clone();
        for c in 0..2 {
            let comp = v.component_mut(c);
            for (i, z) in comp.iter_mut().enumerate() {
                let [k1, k2] = g.wavevector(i);
                *z *= Complex64::from_polar(1.0, -(k1 as f64 * shift[0] + k2 as f64 * shift[1]));
            }
        }
        v
    }

    #[test]
    fn zero_field_leaves_particles_in_place() {
        let g = grid(8);
        let rec = run(&SolverConfig::new(0.1, 0.1, 0.5), SpectralVelocity::zeros(g), &mut []).unwrap();
        let set = advect(&rec, &[[1.0, 2.0], [7.0, -1.0]], 0.05, Scheme::Rk4).unwrap();
        assert_eq!(set.final_position(0), [1.0, 2.0]);
        assert_eq!(set.unwrapped(1, 5), [7.0, -1.0]);
        assert_eq!(set.winding(1, 0), [1, -1]);
    }

    #[test]
    fn shear_orbit_is_a_translation() {
        let g = grid(8);
        let set = advect_frozen(&shear(g), &[[0.0, PI / 2.0]], 1e-2, 10.0, Scheme::Rk4).unwrap();
        let end = set.times().len() - 1;
        let p = set.position(0, end);
        assert!((p[0] - 10.0f64.rem_euclid(TWO_PI)).abs() < 1e-12);
        assert!((p[1] - PI / 2.0).abs() < 1e-15);
        assert_eq!(set.winding(0, end), [1, 0]);
    }

    #[test]
    fn frozen_field_is_reversible() {
        let g = grid(16);
        let u = synthesize_rough_field(g, 1.0, 3).unwrap();
        let start = [[1.0, 4.0], [3.0, 0.5]];
        let fwd = advect_frozen(&u, &start, 1e-3, 1.0, Scheme::Rk4).unwrap();
        let ends: Vec<_> = (0..2).map(|p| fwd.unwrapped(p, fwd.times().len() - 1)).collect();
        let back = advect_frozen(&u, &ends, 1e-3, -1.0, Scheme::Rk4).unwrap();
        for (p, s) in start.iter().enumerate() {
            let e = back.unwrapped(p, back.times().len() - 1);
            assert!((e[0] - s[0]).hypot(e[1] - s[1]) < 1e-8);
        }
    }

    #[test]
    fn reversal_error_is_fourth_order() {
        let g = grid(16);
        let u = synthesize_rough_field(g, 1.0, 5).unwrap().scaled(3.0);
        let err = |dt: f64| {
            let f = advect_frozen(&u, &[[2.0, 2.0]], dt, 2.0, Scheme::Rk4).unwrap();
            let e = f.unwrapped(0, f.times().len() - 1);
            let b = advect_frozen(&u, &[e], dt, -2.0, Scheme::Rk4).unwrap();
            let x = b.unwrapped(0, b.times().len() - 1);
            (x[0] - 2.0).hypot(x[1] - 2.0)
        };
        let (a, b) = (err(0.1), err(0.05));
        assert!(a > 1e-12 && (a / b).log2() > 3.5, "{a} {b}");
    }

    #[test]
    fn translation_equivariance() {
        let g = grid(16);
        let u = synthesize_rough_field(g, 0.5, 8).unwrap();
        let shift = [3.0 * g.spacing(), 5.0 * g.spacing()];
        let v = translated(&u, shift);
        let starts = [[0.7, 1.9], [4.0, 5.5]];
        let moved: Vec<_> = starts.iter().map(|s| [s[0] + shift[0], s[1] + shift[1]]).collect();
        let a = advect_frozen(&u, &starts, 1e-2, 0.5, Scheme::Rk4).unwrap();
        let b = advect_frozen(&v, &moved, 1e-2, 0.5, Scheme::Rk4).unwrap();
        for p in 0..2 {
            for i in 0..a.times().len() {
                let (x, y) = (a.unwrapped(p, i), b.unwrapped(p, i));
                assert!((x[0] + shift[0] - y[0]).abs() <= 1e-10);
                assert!((x[1] + shift[1] - y[1]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn separations() {
        let g = grid(8);
        let set = advect_frozen(&SpectralVelocity::zeros(g), &[[1.0, 1.0], [1.0, 1.0]], 0.1, 1.0, Scheme::Rk4).unwrap();
        assert!(separation_series(&set, &set).unwrap().iter().all(|s| s.samples.iter().all(|x| x.1 == 0.0)));
        // On the line x₂ = π/2 the shear is a uniform translation.
        let a = advect_frozen(&shear(g), &[[0.0, PI / 2.0]], 0.1, 1.0, Scheme::Rk4).unwrap();
        let b = advect_frozen(&shear(g), &[[1e-3, PI / 2.0]], 0.1, 1.0, Scheme::Rk4).unwrap();
        let s = separation_series(&a, &b).unwrap().remove(0);
        assert!(s.samples.iter().all(|x| (x.1 - 1e-3).abs() < 1e-12));
        let r = separation_series(&b, &a).unwrap().remove(0);
        assert_eq!(s, r);
        let short = advect_frozen(&shear(g), &[[0.0, 0.0]], 0.1, 0.5, Scheme::Rk4).unwrap();
        assert!(matches!(separation_series(&a, &short), Err(Error::TimeGridMismatch)));
    }

    #[test]
    fn torus_distance_uses_minimal_image() {
        assert!((torus_distance([0.1, 0.0], [TWO_PI - 0.1, 0.0]) - 0.2).abs() < 1e-12);
        assert!((torus_distance([0.0, 0.0], [PI, PI]) - PI * SQRT_2).abs() < 1e-12);
        assert!((torus_distance([0.0, 0.0], [3.0 * TWO_PI, 0.0])).abs() < 1e-12);
    }

    #[test]
    fn envelope_examples() {
        let v = envelope_bound(1e-8, 0.1, 0.2, 2.0, 1.0).unwrap();
        let want = (-((1e8f64).ln().sqrt() - 2.0).powi(2)).exp();
        assert!((v - want).abs() < 1e-15);
        assert!((v - 5.23e-3).abs() < 1e-5);
        assert_eq!(envelope_bound(0.3, 0.0, 1.0, 0.0, 5.0).unwrap(), 0.3);
        assert_eq!(envelope_bound(0.3, 0.0, 1.0, 7.0, 0.0).unwrap(), 0.3);
        assert_eq!(envelope_bound(0.3, 0.0, 1.0, 10.0, 1.0).unwrap(), f64::INFINITY);
        assert!(envelope_bound(1e-300, 0.0, 1.0, 1.0, 1.0).unwrap() < 1e-200);
        assert!(envelope_bound(0.7, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(envelope_bound(0.1, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn au_bound_examples() {
        assert_eq!(au_integral_bound(3.0, 3.0, 2.0, 0.5), 1.0);
        assert!((au_integral_bound(10.0, 1.0, 1.0, 1.0) - 2.981).abs() < 1e-3);
        assert_eq!(au_integral_bound(10.0, 1.0, 0.0, 1.0), 0.0);
        assert_eq!(au_integral_bound(1.0, 10.0, 1.0, 1.0), 1.0);
    }

    fn tg_run() -> RunRecord {
        let mut cfg = SolverConfig::new(0.1, 1e-2, 1.0);
        cfg.geometric = Some(Default::default());
        run(&cfg, SpectralVelocity::taylor_green(grid(16), 1.0), &mut []).unwrap()
    }

    #[test]
    fn taylor_green_perturbations_stay_linear() {
        let rec = tg_run();
        // Near the hyperbolic point (0, 0) the strain is at most 1.
        let a = [0.05, 0.02];
        let eps = [0.9, 1e-3, 1e-4, 1e-5];
        let r = uniqueness_experiment(&rec, a, &eps, &[0.02, 0.01, 0.005]).unwrap();
        assert_eq!(r.rejected_eps, vec![0.9]);
        assert!(r.eta_monotone);
        for (e, h) in r.eps.iter().zip(&r.eta_final) {
            assert!(*h <= e * 1f64.exp() * 1.01);
        }
        assert!(r.ratio_spread < 1.05);
        assert!(r.envelope.violations == 0);
    }

    #[test]
    fn eta_audit_on_taylor_green() {
        let rec = tg_run();
        let r = eta_initial_audit(&rec, [1.0, 2.0], &[], 0.01).unwrap();
        assert!(r.extra("interpolation_gap").unwrap() <= 1e-12);
        assert!(r.sup_residual <= 0.0);
        let norms = record_norms(&rec, &[1.25]).unwrap();
        let s = norms[0].positive();
        assert!(s[0].0.powf(0.75) * s[0].1 < s[5].0.powf(0.75) * s[5].1);
        assert!(matches!(
            eta_initial_audit_with(&rec, &norms, [1.0, 2.0], &[], 0.01),
            Err(Error::MissingSeries(_))
        ));
    }

    #[test]
    fn calibration_makes_the_envelope_hold() {
        let g = grid(16);
        let mut cfg = SolverConfig::new(0.05, 5e-3, 0.5);
        cfg.geometric = Some(Default::default());
        let rec = run(&cfg, synthesize_rough_field(g, 0.3, 2).unwrap(), &mut []).unwrap();
        let pairs = perturbation_pairs(&rec, [1.0, 1.0], &[1e-2, 1e-3, 1e-4], 5e-3).unwrap();
        let cum = cumulative_au(&rec).unwrap();
        let c = calibrate_envelope(&pairs, &cum);
        assert!(c > 0.0);
        let audit = audit_envelope(&pairs, &cum, c);
        assert_eq!(audit.violations, 0);
        assert!(audit.checked > 0);
        let csv = separations_csv(&pairs, &cum, c);
        assert!(csv.starts_with("pair,t,eta,envelope,vacuous_flag\n"));
    }

    #[test]
    fn trajectory_csv_layout() {
        let g = grid(8);
        let set = advect_frozen(&shear(g), &[[0.0, PI / 2.0]], 0.5, 1.0, Scheme::Euler).unwrap();
        let csv = trajectories_csv(&set);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "t,particle_id,x1,x2,wind1,wind2");
        assert_eq!(lines.len(), 1 + 3);
    }
}
