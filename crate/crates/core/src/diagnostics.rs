//! Scalar functionals of solver runs and empirical audits of the a-priori
//! bounds they are supposed to satisfy.

use std::f64::consts::{E, PI};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::solver::{geometric_times, heat_evolve, RunRecord};
use crate::spectral::{
    h2minus_norm, loglip_weight, sobolev_norm, PointEvaluator, SpectralField, SpectralVelocity,
};
use crate::{exec, Error, Result};

/// Relative change below which a supremum counts as stable under refinement.
pub const BOUNDED_REL_CHANGE: f64 = 0.25;
/// Relative change below which a column of integrals counts as Cauchy.
pub const CAUCHY_REL_CHANGE: f64 = 0.10;

/// A time series of one norm.
#[derive(Clone, Debug, PartialEq)]
pub struct NormSeries {
    pub name: String,
    samples: Vec<(f64, f64)>,
}

impl NormSeries {
    pub fn new(name: impl Into<String>, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyRun(0));
        }
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Invalid("series times must be strictly increasing".into()));
        }
        if samples.iter().any(|&(t, v)| !(t >= 0.0) || !v.is_finite() || v < 0.0) {
            return Err(Error::Invalid("series values must be finite and nonnegative".into()));
        }
        Ok(NormSeries {
            name: name.into(),
            samples,
        })
    }

    /// Samples `f` at the given times.
    pub fn from_fn(name: impl Into<String>, times: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(name, times.iter().map(|&t| (t, f(t))).collect())
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }

    /// Samples with `t > 0`.
    pub fn positive(&self) -> Vec<(f64, f64)> {
        self.samples.iter().copied().filter(|s| s.0 > 0.0).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    HoldsAtDeskScale,
    Violated,
    Inconclusive,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::HoldsAtDeskScale => "holds-at-desk-scale",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    pub fn holds(&self) -> bool {
        *self == Verdict::HoldsAtDeskScale
    }
}

/// An empirically fitted constant for one bound.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub name: String,
    /// Fitted constant, i.e. the observed supremum.
    pub constant: f64,
    /// Observed supremum minus `constant`; positive means the bound fails.
    pub sup_residual: f64,
    /// Argument (time or separation) at which the supremum was attained.
    pub arg: f64,
    pub n: Option<usize>,
    pub dt: Option<f64>,
    pub verdict: Verdict,
    /// Named auxiliary numbers (refinement changes, alternative weights, …).
    pub extras: Vec<(String, f64)>,
}

impl BoundReport {
    fn fitted(name: impl Into<String>, sup: f64, arg: f64, verdict: Verdict) -> Self {
        BoundReport {
            name: name.into(),
            constant: sup,
            sup_residual: 0.0,
            arg,
            n: None,
            dt: None,
            verdict,
            extras: Vec::new(),
        }
    }

    pub fn with_run(mut self, run: &RunRecord) -> Self {
        self.n = Some(run.grid.n());
        self.dt = Some(run.config.dt);
        self
    }

    pub fn extra(&self, key: &str) -> Option<f64> {
        self.extras.iter().find(|(k, _)| k == key).map(|e| e.1)
    }

    /// Same constant checked against a different observed supremum.
    pub fn check(&self, observed_sup: f64) -> BoundReport {
        let mut r = self.clone();
        r.sup_residual = observed_sup - self.constant;
        if r.sup_residual > 0.0 {
            r.verdict = Verdict::Violated;
        }
        r
    }
}

/// One series per exponent, sampled at every snapshot.
pub fn record_norms(run: &RunRecord, exponents: &[f64]) -> Result<Vec<NormSeries>> {
    if run.snapshots.len() < 2 {
        return Err(Error::EmptyRun(run.snapshots.len()));
    }
    for &s in exponents {
        sobolev_norm(&SpectralField::zeros(run.grid), s)?;
    }
    let rows: Vec<Vec<f64>> = exec::map(&run.snapshots, |snap| {
        exponents
            .iter()
            .map(|&s| sobolev_norm(&snap.u, s).expect("exponent checked"))
            .collect()
    });
    exponents
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let samples = run
                .snapshots
                .iter()
                .zip(&rows)
                .map(|(snap, row)| (snap.t, row[j]))
                .collect();
            NormSeries::new(series_name(s), samples)
        })
        .collect()
}

pub fn series_name(s: f64) -> String {
    format!("D^{s}")
}

/// Trapezoid rule for `∫_{s_lo}^{T} value(t)^p dt` on the sample grid; the
/// integrand is interpolated linearly when `s_lo` falls between samples.
pub fn time_integral(series: &NormSeries, p: f64, s_lo: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::out_of_range("p", p, "[1, ∞)"));
    }
    let s = &series.samples;
    let (t0, t1) = (s[0].0, s[s.len() - 1].0);
    if !(s_lo >= t0 && s_lo <= t1) {
        return Err(Error::out_of_range("s_lo", s_lo, "the series time range"));
    }
    let f = |v: f64| v.powf(p);
    let start = s.partition_point(|x| x.0 <= s_lo);
    let mut acc = 0.0;
    let (mut ta, mut fa) = if start == 0 {
        (s[0].0, f(s[0].1))
    } else {
        let (a, b) = (s[start - 1], s.get(start).copied().unwrap_or(s[start - 1]));
        let fv = if b.0 > a.0 {
            let th = (s_lo - a.0) / (b.0 - a.0);
            f(a.1) + th * (f(b.1) - f(a.1))
        } else {
            f(a.1)
        };
        (s_lo, fv)
    };
    for &(t, v) in &s[start..] {
        let fb = f(v);
        acc += 0.5 * (t - ta) * (fa + fb);
        ta = t;
        fa = fb;
    }
    Ok(acc)
}

/// `sup_t t^w · value(t)` with a single-series verdict: holds when the
/// supremum is not attained at the smallest positive sample time.
pub fn sup_weighted(series: &NormSeries, w: f64) -> BoundReport {
    let (mut best, mut arg) = (f64::NEG_INFINITY, f64::NAN);
    for &(t, v) in &series.samples {
        let x = t.powf(w) * v;
        if x > best {
            best = x;
            arg = t;
        }
    }
    let t_min = series
        .samples
        .iter()
        .map(|s| s.0)
        .find(|&t| t > 0.0)
        .unwrap_or(0.0);
    let verdict = if arg > t_min || (w == 0.0 && arg == 0.0) {
        Verdict::HoldsAtDeskScale
    } else {
        Verdict::Inconclusive
    };
    let mut r = BoundReport::fitted(format!("sup t^{w} {}", series.name), best, arg, verdict);
    r.extras.push(("t_min".into(), t_min));
    r
}

/// Combines a base supremum with refined recomputations (N doubled, dt
/// halved, …): bounded when the base sup sits away from the smallest sample
/// and every refinement moves it by less than [`BOUNDED_REL_CHANGE`].
pub fn refinement_verdict(base: &BoundReport, refined: &[&BoundReport]) -> BoundReport {
    let mut r = base.clone();
    let mut worst: f64 = 0.0;
    for (i, other) in refined.iter().enumerate() {
        let change = (other.constant - base.constant).abs() / base.constant.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(change);
        r.extras.push((format!("change_{i}"), change));
    }
    let away = refined
        .iter()
        .chain(std::iter::once(&base))
        .all(|b| b.verdict == Verdict::HoldsAtDeskScale);
    r.extras.push(("max_change".into(), worst));
    r.verdict = if worst >= BOUNDED_REL_CHANGE || !worst.is_finite() {
        Verdict::Violated
    } else if away {
        Verdict::HoldsAtDeskScale
    } else {
        Verdict::Inconclusive
    };
    r
}

/// `β = (√5−2)^{ln(1/(1−γ))/ln 2}` for `γ ∈ [1/2, 1)`.
pub fn beta_max(gamma: f64) -> Result<f64> {
    if !(0.5..1.0).contains(&gamma) {
        return Err(Error::out_of_range("gamma", gamma, "[1/2, 1)"));
    }
    let base = 5f64.sqrt() - 2.0;
    if gamma == 0.5 {
        return Ok(base);
    }
    Ok(base.powf((1.0 / (1.0 - gamma)).ln() / 2f64.ln()))
}

/// Admissible Lebesgue exponent `1 + β`.
pub fn lebesgue_exponent(gamma: f64) -> Result<f64> {
    Ok(1.0 + beta_max(gamma)?)
}

/// Random pair sampler for [`loglip_modulus`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairSampler {
    pub count: usize,
    pub seed: u64,
}

pub const LOGLIP_MIN_SEPARATION: f64 = 1e-8;

/// Pairs `(X, Y)` with `|X − Y|` log-uniform in `[1e-8, e^{-1/2})`.
pub fn sample_pairs(sampler: PairSampler) -> Vec<([f64; 2], [f64; 2])> {
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let (lo, hi) = (LOGLIP_MIN_SEPARATION.ln(), -0.5);
    let mut out = Vec::with_capacity(sampler.count);
    while out.len() < sampler.count {
        let x = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
        let r = rng.gen_range(lo..hi).exp();
        let a: f64 = rng.gen_range(0.0..2.0 * PI);
        let y = [x[0] + r * a.cos(), x[1] + r * a.sin()];
        let d = ((y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2)).sqrt();
        if d > 0.0 && d < (-0.5f64).exp() {
            out.push((x, y));
        }
    }
    out
}

/// Empirical constant `c` in `|u(X)−u(Y)| ≤ c W(u) |X−Y| (−log|X−Y|)^{1/2}`.
///
/// `W` is [`loglip_weight`]; the `extras` also carry the constant measured
/// against the homogeneous `‖D²u‖` coefficient norm.
pub fn loglip_modulus(u: &SpectralVelocity, sampler: PairSampler) -> Result<BoundReport> {
    if sampler.count == 0 {
        return Err(Error::Invalid("pair sampler count must be at least 1".into()));
    }
    let pairs = sample_pairs(sampler);
    let w = loglip_weight(u);
    let h2 = u.weighted_energy(|k2| k2 * k2).sqrt();
    if w == 0.0 {
        let mut r = BoundReport::fitted("loglip", 0.0, f64::NAN, Verdict::HoldsAtDeskScale);
        r.extras.push(("c_homogeneous".into(), 0.0));
        return Ok(r);
    }
    let ev = PointEvaluator::new(u);
    let ratios = exec::map(&pairs, |(x, y)| {
        let (a, b) = (ev.eval(*x), ev.eval(*y));
        let num = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let d = ((y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2)).sqrt();
        (num / (d * (-d.ln()).sqrt()), d)
    });
    let (mut best, mut arg) = (0.0, f64::NAN);
    for &(q, d) in &ratios {
        if q > best {
            best = q;
            arg = d;
        }
    }
    let c = best / w;
    let verdict = if c.is_finite() {
        Verdict::HoldsAtDeskScale
    } else {
        Verdict::Violated
    };
    let mut r = BoundReport::fitted("loglip", c, arg, verdict);
    r.n = Some(u.grid().n());
    r.extras.push(("weight".into(), w));
    r.extras.push(("c_homogeneous".into(), best / h2));
    Ok(r)
}

/// Maximiser of `g_t(x) = (1+x)² e^{−2xt} / (log(e+x))^r`.
///
/// The search runs over `x > −1` (log-spaced in `1 + x`, from
/// `10⁻³ min(1, 1/t)` to `1 + 10³/t`) and is refined by golden-section
/// search. The lower end must reach below zero since the maximiser is
/// `1/t − 1` for `r = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtMax {
    pub x_star: f64,
    pub value: f64,
    /// Width of the coarse grid cell containing `x_star`.
    pub cell: f64,
}

pub const GT_GRID_POINTS: usize = 4001;

pub fn gt_log(r: f64, t: f64, x: f64) -> f64 {
    let y = 1.0 + x;
    2.0 * y.ln() - 2.0 * x * t - r * (E + x).ln().ln()
}

pub fn gt_profile(r: f64, t: f64) -> Result<GtMax> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::out_of_range("r", r, "[0, ∞)"));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::out_of_range("t", t, "(0, ∞)"));
    }
    let y_lo: f64 = 1e-3 * (1.0f64).min(1.0 / t);
    let y_hi: f64 = 1.0 + 1e3 / t;
    let (a, b) = (y_lo.ln(), y_hi.ln());
    let m = GT_GRID_POINTS - 1;
    let ys: Vec<f64> = (0..=m).map(|j| (a + (b - a) * j as f64 / m as f64).exp()).collect();
    let lg = |y: f64| gt_log(r, t, y - 1.0);
    let mut j = 0;
    for i in 1..ys.len() {
        if lg(ys[i]) > lg(ys[j]) {
            j = i;
        }
    }
    let (mut lo, mut hi) = (ys[j.saturating_sub(1)], ys[(j + 1).min(m)]);
    let cell = (hi - lo) / 2.0;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = hi - g * (hi - lo);
        let d = lo + g * (hi - lo);
        if lg(c) >= lg(d) {
            hi = d;
        } else {
            lo = c;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let y = 0.5 * (lo + hi);
    let y = if lg(ys[j]) > lg(y) { ys[j] } else { y };
    Ok(GtMax {
        x_star: y - 1.0,
        value: lg(y).exp(),
        cell,
    })
}

/// One row of the heat `H^{2-}_r` table.
#[derive(Clone, Debug, PartialEq)]
pub struct H2MinusRow {
    pub r: f64,
    pub s_lo: f64,
    pub integral: f64,
}

/// Time samples per decade used by [`heat_h2minus_study`].
pub const HEAT_PER_DECADE: usize = 40;

/// `∫_{s_lo}^{T} ‖e^{tΔ} v₀‖_{H^{2-}_r} dt` for every `r` and `s_lo`.
pub fn heat_h2minus_study(
    v0: &SpectralVelocity,
    r_list: &[f64],
    t_final: f64,
    s_lo_list: &[f64],
) -> Result<Vec<H2MinusRow>> {
    if !(t_final > 0.0) {
        return Err(Error::out_of_range("T", t_final, "(0, ∞)"));
    }
    for &r in r_list {
        h2minus_norm(&SpectralField::zeros(v0.grid()), r)?;
    }
    if s_lo_list.iter().any(|&s| !(s > 0.0 && s < t_final)) {
        return Err(Error::Invalid("s_lo values must lie in (0, T)".into()));
    }
    let Some(s_min) = s_lo_list.iter().copied().reduce(f64::min) else {
        return Ok(Vec::new());
    };
    let mut times = geometric_times(s_min, t_final, HEAT_PER_DECADE);
    times.extend_from_slice(s_lo_list);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
    let mut rows = Vec::new();
    for &r in r_list {
        let vals = exec::map(&times, |&t| {
            let v = heat_evolve(v0, t).expect("t > 0");
            h2minus_norm(&v, r).expect("r > 0")
        });
        let series = NormSeries::new(
            format!("H2-_{r}"),
            times.iter().copied().zip(vals).collect(),
        )?;
        for &s_lo in s_lo_list {
            rows.push(H2MinusRow {
                r,
                s_lo,
                integral: time_integral(&series, 1.0, s_lo)?,
            });
        }
    }
    Ok(rows)
}

/// Relative change of the `r` column between two cutoffs.
pub fn h2minus_change(rows: &[H2MinusRow], r: f64, s_coarse: f64, s_fine: f64) -> Option<f64> {
    let at = |s: f64| rows.iter().find(|x| x.r == r && x.s_lo == s).map(|x| x.integral);
    Some(at(s_fine)? / at(s_coarse)? - 1.0)
}

/// Cauchy check of `∫_{s_lo}^{T} ‖Au‖ dt` as `s_lo` decreases.
pub fn au_l1_check(run: &RunRecord, s_lo_list: &[f64]) -> Result<BoundReport> {
    let series = record_norms(run, &[2.0])?.remove(0);
    integral_cauchy("int |Au|", &series, 1.0, s_lo_list).map(|r| r.with_run(run))
}

/// Integrals `∫_{s}^{T} value^p` over a decreasing list of cutoffs; holds when
/// the last two differ by less than [`CAUCHY_REL_CHANGE`].
pub fn integral_cauchy(
    name: &str,
    series: &NormSeries,
    p: f64,
    s_lo_list: &[f64],
) -> Result<BoundReport> {
    if s_lo_list.is_empty() {
        return Err(Error::Invalid("need at least one cutoff".into()));
    }
    let vals: Vec<f64> = s_lo_list
        .iter()
        .map(|&s| time_integral(series, p, s))
        .collect::<Result<_>>()?;
    let last = *vals.last().unwrap();
    let change = if vals.len() >= 2 {
        let prev = vals[vals.len() - 2];
        (last - prev).abs() / prev.abs().max(f64::MIN_POSITIVE)
    } else {
        f64::NAN
    };
    let verdict = if change < CAUCHY_REL_CHANGE {
        Verdict::HoldsAtDeskScale
    } else if change.is_nan() {
        Verdict::Inconclusive
    } else {
        Verdict::Violated
    };
    let mut r = BoundReport::fitted(name, last, *s_lo_list.last().unwrap(), verdict);
    r.extras.push(("last_change".into(), change));
    for (s, v) in s_lo_list.iter().zip(&vals) {
        r.extras.push((format!("int_from_{s:e}"), *v));
    }
    Ok(r)
}

/// `norms.csv`: `t` plus one column per series; all series share times.
pub fn norms_csv(series: &[NormSeries]) -> Result<String> {
    let mut out = String::from("t");
    for s in series {
        write!(out, ",{}", s.name).unwrap();
    }
    out.push('\n');
    let Some(first) = series.first() else {
        return Ok(out);
    };
    if series.iter().any(|s| s.times() != first.times()) {
        return Err(Error::TimeGridMismatch);
    }
    for (i, &(t, _)) in first.samples.iter().enumerate() {
        write!(out, "{t}").unwrap();
        for s in series {
            write!(out, ",{}", s.samples[i].1).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// `bounds.csv`: `bound,constant,sup_residual,verdict,N,dt`.
pub fn bounds_csv(reports: &[BoundReport]) -> String {
    let mut out = String::from("bound,constant,sup_residual,verdict,N,dt\n");
    for r in reports {
        let n = r.n.map_or(String::new(), |n| n.to_string());
        let dt = r.dt.map_or(String::new(), |d| d.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.name.replace(',', ";"),
            r.constant,
            r.sup_residual,
            r.verdict.name(),
            n,
            dt
        )
        .unwrap();
    }
    out
}

/// `gt.csv`: `r,t,x_star,value`.
pub fn gt_csv(rows: &[(f64, f64, GtMax)]) -> String {
    let mut out = String::from("r,t,x_star,value\n");
    for (r, t, m) in rows {
        writeln!(out, "{r},{t},{},{}", m.x_star, m.value).unwrap();
    }
    out
}

/// `h2minus.csv`: `r,s_lo,integral`.
pub fn h2minus_csv(rows: &[H2MinusRow]) -> String {
    let mut out = String::from("r,s_lo,integral\n");
    for row in rows {
        writeln!(out, "{},{},{}", row.r, row.s_lo, row.integral).unwrap();
    }
    out
}
