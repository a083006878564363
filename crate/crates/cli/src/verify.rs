//! Re-checks a finished artifact directory: every assertion in
//! `summary.json` must be consistent with its own numbers, and the numbers
//! the study derived from its CSVs are recomputed from the CSVs on disk.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use ptraj_core::counterexample::BranchLabel;
use ptraj_core::diagnostics::{gt_profile, sup_weighted, time_integral, NormSeries};

use crate::config::Kind;
use crate::csv::Table;
use crate::summary::{short, Summary};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.ok { "ok  " } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Verification {
    pub checks: Vec<Check>,
}

impl Verification {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    fn push(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            ok,
            detail: detail.into(),
        });
    }

    /// Recomputed value must reproduce the recorded one.
    fn same(&mut self, name: impl Into<String>, recorded: f64, recomputed: f64) {
        let ok = close(recorded, recomputed);
        self.push(name, ok, format!("recorded {}, recomputed {}", short(recorded), short(recomputed)));
    }
}

fn close(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn table(dir: &Path, name: &str) -> Result<Table, String> {
    let p = dir.join(name);
    let text = std::fs::read_to_string(&p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
    Table::parse(&text).map_err(|e| format!("{}: {e}", p.display()))
}

fn col(t: &Table, file: &str, name: &str) -> Result<Vec<f64>, String> {
    t.column(name).ok_or_else(|| format!("{file} lacks column `{name}`"))
}

fn max(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn assertion_value(s: &Summary, name: &str) -> Option<f64> {
    s.assertion(name).map(|a| a.value.0)
}

fn cfg_f64(s: &Summary, key: &str) -> Result<f64, String> {
    s.config
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format!("summary config lacks `{key}`"))
}

/// Verifies `dir`; `Err` means the directory could not be read at all.
pub fn verify(dir: &Path) -> Result<Verification, String> {
    let summary = Summary::read(&dir.join("summary.json"))?;
    let mut v = Verification::default();
    for a in &summary.assertions {
        let holds = a.op.holds(a.value.0, a.threshold.0);
        v.push(
            format!("assertion `{}`", a.name),
            holds == a.pass,
            format!("{} {} {} recorded as {}", short(a.value.0), a.op.symbol(), short(a.threshold.0), if a.pass { "pass" } else { "fail" }),
        );
    }
    let expected_status = if summary.status == crate::summary::Status::BlowUp {
        crate::summary::Status::BlowUp
    } else if summary.all_pass() {
        crate::summary::Status::Pass
    } else {
        crate::summary::Status::AssertionFailed
    };
    v.push("status", summary.status == expected_status, format!("{:?}", summary.status));
    for f in &summary.files {
        v.push(format!("file {f}"), dir.join(f).is_file(), "listed in summary");
    }
    if summary.status == crate::summary::Status::BlowUp {
        return Ok(v);
    }
    let kind = Kind::parse(&summary.kind).ok_or_else(|| format!("unknown kind `{}`", summary.kind))?;
    match kind {
        Kind::TaylorGreenOracle => verify_taylor_green(dir, &summary, &mut v)?,
        Kind::Counterexamples => verify_counterexamples(dir, &summary, &mut v)?,
        Kind::HeatH2Minus => verify_heat(dir, &summary, &mut v)?,
        Kind::RoughRun | Kind::BoundsAudit => verify_bounds(dir, &summary, &mut v)?,
        Kind::TrajectoryUniqueness => verify_uniqueness(dir, &summary, &mut v)?,
        Kind::LoglipAudit => verify_loglip(dir, &summary, &mut v)?,
    }
    Ok(v)
}

fn verify_taylor_green(dir: &Path, s: &Summary, v: &mut Verification) -> Result<(), String> {
    let t = table(dir, "oracle.csv")?;
    let err = col(&t, "oracle.csv", "max_error")?;
    let e = col(&t, "oracle.csv", "energy")?;
    let ex = col(&t, "oracle.csv", "energy_exact")?;
    let rel = max(e.iter().zip(&ex).map(|(a, b)| (a - b).abs() / b));
    if let Some(x) = assertion_value(s, "max pointwise velocity error") {
        v.same("max velocity error from oracle.csv", x, max(err));
    }
    if let Some(x) = assertion_value(s, "max relative energy error") {
        v.same("energy error from oracle.csv", x, rel);
    }
    // Independent of oracle.csv: the solver's own step log.
    let nu = cfg_f64(s, "nu")?;
    let tol = cfg_f64(s, "tolerance")?;
    let steps = table(dir, "run/steps.csv")?;
    let times = col(&steps, "steps.csv", "t")?;
    let l2 = col(&steps, "steps.csv", "l2")?;
    let worst = max(times.iter().zip(&l2).map(|(&t, &n)| {
        let exact = 2.0 * PI * PI * (-4.0 * nu * t).exp();
        (n * n - exact).abs() / exact
    }));
    v.push("energy from run/steps.csv", worst < tol, format!("max relative error {worst} < {tol}"));
    Ok(())
}

fn label_from_name(name: &str, t0: f64) -> Option<BranchLabel> {
    match name {
        "zero" => Some(BranchLabel::Zero),
        "log-branch" => Some(BranchLabel::Log),
        _ => {
            let d = name.strip_prefix("perturbed(")?.strip_suffix(')')?.parse().ok()?;
            Some(BranchLabel::Perturbed { delta: d, t0 })
        }
    }
}

fn verify_counterexamples(dir: &Path, s: &Summary, v: &mut Verification) -> Result<(), String> {
    let t = table(dir, "counterexamples.csv")?;
    let names = t.text_column("branch").ok_or("counterexamples.csv lacks `branch`")?;
    let times = col(&t, "counterexamples.csv", "t")?;
    let xs = col(&t, "counterexamples.csv", "x")?;
    let res = col(&t, "counterexamples.csv", "residual")?;
    let t0 = cfg_f64(s, "t0")?;
    let mut seen: Vec<&str> = names.iter().map(String::as_str).collect();
    seen.dedup();
    for name in seen {
        let Some(label) = label_from_name(name, t0) else {
            v.push(format!("branch {name}"), false, "unknown branch label");
            continue;
        };
        let rows: Vec<usize> = (0..names.len()).filter(|&i| names[i] == name).collect();
        let recomputed = max(rows.iter().map(|&i| label.residual(times[i])));
        let recorded = max(rows.iter().map(|&i| res[i]));
        v.same(format!("{name} residual column"), recorded, recomputed);
        if let Some(x) = assertion_value(s, &format!("{name} ODE residual")) {
            v.same(format!("{name} residual assertion"), x, recorded);
        }
        if label == BranchLabel::Log {
            let probe = (-2f64).exp();
            if let Some(&i) = rows.iter().min_by(|&&a, &&b| (times[a] - probe).abs().total_cmp(&(times[b] - probe).abs())) {
                let exact = -1.0 / times[i].ln();
                let err = (xs[i] - exact).abs() / exact;
                if let Some(x) = assertion_value(s, "log-branch relative error at t=e^-2") {
                    v.same("log-branch value", x, err);
                }
            }
        }
    }
    Ok(())
}

fn verify_heat(dir: &Path, s: &Summary, v: &mut Verification) -> Result<(), String> {
    let t = table(dir, "h2minus.csv")?;
    let r = col(&t, "h2minus.csv", "r")?;
    let s_lo = col(&t, "h2minus.csv", "s_lo")?;
    let val = col(&t, "h2minus.csv", "integral")?;
    let mut cutoffs = s_lo.clone();
    cutoffs.sort_by(|a, b| b.total_cmp(a));
    cutoffs.dedup();
    if cutoffs.len() >= 2 {
        let (coarse, fine) = (cutoffs[cutoffs.len() - 2], cutoffs[cutoffs.len() - 1]);
        let mut rs = r.clone();
        rs.dedup();
        for rv in rs {
            let at = |c: f64| (0..r.len()).find(|&i| r[i] == rv && s_lo[i] == c).map(|i| val[i]);
            if let (Some(a), Some(b), Some(m)) = (at(coarse), at(fine), s.get_metric(&format!("change_r{rv}"))) {
                v.same(format!("r={rv} change"), m, b / a - 1.0);
            }
        }
    }
    let g = table(dir, "gt.csv")?;
    let (gr, gt, gx) = (col(&g, "gt.csv", "r")?, col(&g, "gt.csv", "t")?, col(&g, "gt.csv", "x_star")?);
    for i in 0..gr.len() {
        let m = gt_profile(gr[i], gt[i]).map_err(|e| e.to_string())?;
        v.same(format!("g_t maximizer r={} t={}", gr[i], gt[i]), gx[i], m.x_star);
    }
    Ok(())
}

fn norm_series(norms: &Table, name: &str) -> Option<NormSeries> {
    let t = norms.column("t")?;
    let y = norms.column(name)?;
    NormSeries::new(name, t.into_iter().zip(y).collect()).ok()
}

fn verify_bounds(dir: &Path, s: &Summary, v: &mut Verification) -> Result<(), String> {
    let b = table(dir, "bounds.csv")?;
    let names = b.text_column("bound").ok_or("bounds.csv lacks `bound`")?;
    let consts = col(&b, "bounds.csv", "constant")?;
    let verdicts = b.text_column("verdict").ok_or("bounds.csv lacks `verdict`")?;
    v.push(
        "bounds.csv rows match summary",
        names.len() == s.bounds.len(),
        format!("{} rows, {} in summary", names.len(), s.bounds.len()),
    );
    for (i, e) in s.bounds.iter().enumerate().take(names.len()) {
        v.push(
            format!("bound `{}` verdict", e.name),
            verdicts[i] == e.verdict && close(consts[i], e.constant.0),
            format!("csv {} {}, summary {} {}", consts[i], verdicts[i], e.constant.0, e.verdict),
        );
    }
    let norms = table(dir, "norms.csv")?;
    let n0 = s.config.get("N").cloned().unwrap_or_default();
    for e in &s.bounds {
        if e.n.map(|n| n.to_string()) != Some(n0.clone()) {
            continue;
        }
        let dt0 = s.config.get("dt").and_then(|d| d.parse::<f64>().ok());
        if e.dt.map(|d| d.0) != dt0 {
            continue;
        }
        if let Some(rest) = e.name.strip_prefix("sup t^") {
            let Some((w, series)) = rest.split_once(' ') else { continue };
            let (Ok(w), Some(ns)) = (w.parse::<f64>(), norm_series(&norms, series)) else { continue };
            v.same(format!("{} from norms.csv", e.name), e.constant.0, sup_weighted(&ns, w).constant);
        } else if let Some(rest) = e.name.strip_prefix("int ") {
            let (series, p) = match rest.split_once('^') {
                Some((a, b)) if b.contains('^') => {
                    let (x, y) = b.split_once('^').unwrap();
                    (format!("{a}^{x}"), y.parse::<f64>().unwrap_or(f64::NAN))
                }
                _ => (rest.to_string(), 1.0),
            };
            let Some(ns) = norm_series(&norms, &series) else { continue };
            let Some(arg) = Some(e.arg.0).filter(|a| a.is_finite()) else { continue };
            if let Ok(val) = time_integral(&ns, p, arg) {
                v.same(format!("{} from norms.csv", e.name), e.constant.0, val);
            }
        }
    }
    Ok(())
}

fn verify_uniqueness(dir: &Path, s: &Summary, v: &mut Verification) -> Result<(), String> {
    let p = table(dir, "perturbations.csv")?;
    let eps = col(&p, "perturbations.csv", "eps")?;
    let eta = col(&p, "perturbations.csv", "eta_T")?;
    let ratios: Vec<f64> = eps.iter().zip(&eta).map(|(e, h)| h / e).collect();
    let spread = max(ratios.iter().copied()) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    if let Some(x) = assertion_value(s, "eta(T)/eps spread") {
        v.same("eta/eps spread from perturbations.csv", x, spread);
    }
    let mono = eta.windows(2).all(|w| w[1] < w[0]);
    if let Some(x) = assertion_value(s, "eta(T) decreasing as eps decreases") {
        v.same("monotone eta from perturbations.csv", x, if mono { 1.0 } else { 0.0 });
    }
    let r = table(dir, "refinement.csv")?;
    let orders = col(&r, "refinement.csv", "rk4_order")?;
    let min_order = orders.iter().copied().filter(|o| !o.is_nan()).fold(f64::INFINITY, f64::min);
    if let Some(x) = assertion_value(s, "rk4 dt-halving order") {
        v.same("rk4 order from refinement.csv", x, min_order);
    }
    let sep = table(dir, "separations.csv")?;
    let env = col(&sep, "separations.csv", "envelope")?;
    let flags = col(&sep, "separations.csv", "vacuous_flag")?;
    let consistent = env.iter().zip(&flags).all(|(e, f)| (*f == 1.0) == !e.is_finite());
    v.push("separations.csv vacuous flags", consistent, "flag set exactly where the envelope is not finite");
    Ok(())
}

fn verify_loglip(dir: &Path, s: &Summary, v: &mut Verification) -> Result<(), String> {
    let t = table(dir, "loglip.csv")?;
    let n = col(&t, "loglip.csv", "N")?;
    let c = col(&t, "loglip.csv", "c")?;
    let base_n = cfg_f64(s, "N")?;
    let base: Vec<f64> = (0..n.len()).filter(|&i| n[i] == base_n).map(|i| c[i]).collect();
    let spread = max(base.iter().copied()) / base.iter().copied().fold(f64::INFINITY, f64::min);
    if let Some(x) = assertion_value(s, &format!("max/min c across fields at N={base_n}")) {
        v.same("field spread from loglip.csv", x, spread);
    }
    Ok(())
}
