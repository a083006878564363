//! One function per experiment kind. Each writes its CSVs into the artifact
//! directory and records assertions, bounds and metrics in the summary.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ptraj_core::counterexample::{
    counterexamples_csv, lorentz_norm_constant, nonunique_branches_at, weak_l1_csv, weak_l1_demo, BranchLabel,
};
use ptraj_core::diagnostics::{
    au_l1_check, bounds_csv, gt_csv, gt_profile, h2minus_change, h2minus_csv, heat_h2minus_study,
    integral_cauchy, lebesgue_exponent, loglip_modulus, norms_csv, record_norms, refinement_verdict,
    series_name, sup_weighted, BoundReport, NormSeries, PairSampler, CAUCHY_REL_CHANGE,
};
use ptraj_core::solver::{run, GeometricSnapshots, RunRecord, SolverConfig};
use ptraj_core::spectral::{
    io, synthesize_power_law, synthesize_rough_field, transform_to_physical, PhysicalField, SpectralVelocity,
    WavenumberGrid,
};
use ptraj_core::tracer::{
    advect, cumulative_au, envelope_out_of_sample, eta_initial_audit_with, perturbed_starts, separations_csv,
    trajectories_csv, uniqueness_experiment, Scheme,
};
use ptraj_core::{exec, Error};

use crate::config::{ExperimentConfig, InitialData, Kind};
use crate::summary::{Assertion, Op, Status, Summary};

/// Environment variable overriding the artifact root (default `runs`).
pub const OUTPUT_ROOT_VAR: &str = "PTRAJ_OUTPUT_ROOT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Failure before a summary could be produced (exit status 2).
#[derive(Debug, Clone, PartialEq)]
pub struct CliError(pub String);

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub const EXIT_CODE: i32 = 2;
}

/// Ways a study can stop early.
#[derive(Debug)]
enum Stop {
    Invalid(String),
    BlowUp(String),
}

impl From<Error> for Stop {
    fn from(e: Error) -> Self {
        match e {
            Error::BlowUp { .. } => Stop::BlowUp(e.to_string()),
            Error::StepTooLarge { .. } => Stop::Invalid(format!("field `dt`: {e}")),
            e => Stop::Invalid(e.to_string()),
        }
    }
}

impl From<crate::config::ConfigError> for Stop {
    fn from(e: crate::config::ConfigError) -> Self {
        Stop::Invalid(e.0)
    }
}

impl From<std::io::Error> for Stop {
    fn from(e: std::io::Error) -> Self {
        Stop::Invalid(e.to_string())
    }
}

type Step<T = ()> = Result<T, Stop>;

#[derive(Clone, Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub summary: Summary,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.summary.status.exit_code()
    }
}

/// Runs the study named by `cfg.kind` under `root` and writes
/// `experiment.cfg`, the study CSVs and `summary.json`.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<Outcome, CliError> {
    let threads = cfg.usize("threads").map_err(|e| CliError(e.0))?;
    with_threads(threads, || run_in_pool(cfg, root))
}

#[cfg(feature = "parallel")]
fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    if threads == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<R>(_threads: usize, f: impl FnOnce() -> R) -> R {
    f()
}

fn run_in_pool(cfg: &ExperimentConfig, root: &Path) -> Result<Outcome, CliError> {
    let dir = root.join(cfg.output().map_err(|e| CliError(e.0))?);
    fs::create_dir_all(&dir).map_err(|e| CliError(format!("field `output`: cannot create {}: {e}", dir.display())))?;
    fs::write(dir.join("experiment.cfg"), cfg.echo())
        .map_err(|e| CliError(format!("field `output`: {} is not writable: {e}", dir.display())))?;
    let config: BTreeMap<String, String> = cfg.entries().map(|(k, v)| (k.into(), v.into())).collect();
    let mut summary = Summary::new(cfg.kind.name(), config);
    let mut out = Artifacts {
        dir: dir.clone(),
        summary: &mut summary,
    };
    let result = match cfg.kind {
        Kind::TaylorGreenOracle => taylor_green(cfg, &mut out),
        Kind::RoughRun => rough_run(cfg, &mut out),
        Kind::BoundsAudit => bounds_audit(cfg, &mut out),
        Kind::TrajectoryUniqueness => trajectory_uniqueness(cfg, &mut out),
        Kind::LoglipAudit => loglip_audit(cfg, &mut out),
        Kind::HeatH2Minus => heat_h2minus(cfg, &mut out),
        Kind::Counterexamples => counterexamples(cfg, &mut out),
    };
    match result {
        Ok(()) => {}
        Err(Stop::Invalid(msg)) => return Err(CliError(msg)),
        Err(Stop::BlowUp(msg)) => {
            summary.status = Status::BlowUp;
            summary.error = Some(msg);
        }
    }
    summary.finish();
    summary.files = list_files(&dir);
    fs::write(dir.join("summary.json"), summary.to_json())
        .map_err(|e| CliError(format!("cannot write summary: {e}")))?;
    Ok(Outcome { dir, summary })
}

fn list_files(dir: &Path) -> Vec<String> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<String>) {
        let Ok(entries) = fs::read_dir(dir) else { return };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(base, &p, out);
            } else if let Ok(rel) = p.strip_prefix(base) {
                let rel = rel.to_string_lossy().replace('\\', "/");
                if rel != "summary.json" {
                    out.push(rel);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

struct Artifacts<'a> {
    dir: PathBuf,
    summary: &'a mut Summary,
}

impl Artifacts<'_> {
    fn write(&self, name: &str, contents: &str) -> Step {
        fs::write(self.dir.join(name), contents)?;
        Ok(())
    }

    fn assert(&mut self, a: Assertion) {
        self.summary.assert(a);
    }

    fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.summary.metric(key, value);
    }

    fn bound(&mut self, r: &BoundReport) {
        self.summary.bound(r);
    }
}

// ---------------------------------------------------------------- solver runs

/// Resolution and step of one solver run; the rest comes from the config.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Cell {
    n: usize,
    dt: f64,
    seed: Option<u64>,
}

impl Cell {
    fn base(cfg: &ExperimentConfig) -> Step<Cell> {
        Ok(Cell {
            n: cfg.usize("N")?,
            dt: cfg.positive("dt")?,
            seed: None,
        })
    }

    fn label(&self) -> String {
        format!("N{}_dt{}", self.n, self.dt)
    }
}

fn initial_velocity(cfg: &ExperimentConfig, grid: WavenumberGrid, seed: Option<u64>) -> Step<SpectralVelocity> {
    let init = if cfg.kind == Kind::TaylorGreenOracle {
        InitialData::TaylorGreen
    } else {
        cfg.init()?
    };
    Ok(match init {
        InitialData::TaylorGreen => SpectralVelocity::taylor_green(grid, 1.0),
        InitialData::Rough { delta, seed: s } => synthesize_rough_field(grid, delta, seed.unwrap_or(s))
            .map_err(|e| Stop::Invalid(format!("field `delta`: {e}")))?,
        InitialData::File(path) => {
            let (f, _) = io::read_field(&path).map_err(|e| Stop::Invalid(format!("field `init`: {e}")))?;
            if f.grid() != grid {
                return Err(Stop::Invalid(format!(
                    "field `N`: {} holds an N = {} field, config has N = {}",
                    path.display(),
                    f.grid().n(),
                    grid.n()
                )));
            }
            SpectralVelocity::try_from_field(f, 1e-8).map_err(|e| Stop::Invalid(format!("field `init`: {e}")))?
        }
    })
}

fn solver_config(cfg: &ExperimentConfig, dt: f64) -> Step<SolverConfig> {
    let mut sc = SolverConfig::new(cfg.positive("nu")?, dt, cfg.positive("T")?);
    sc.dealias = cfg.dealias()?;
    sc.snapshot_every = cfg.usize("snapshot_every")?;
    sc.forcing = cfg.forcing()?;
    let frac = cfg.f64("t_min_frac")?;
    sc.geometric = (frac > 0.0).then(|| GeometricSnapshots {
        t_min_frac: frac,
        per_decade: cfg.usize("per_decade").unwrap_or(10),
    });
    Ok(sc)
}

/// Runs one cell; on failure the partial record is written to `dir/label`.
fn solve(cfg: &ExperimentConfig, cell: Cell, dir: &Path, label: &str) -> Step<RunRecord> {
    let grid = WavenumberGrid::new(cell.n).map_err(|e| Stop::Invalid(format!("field `N`: {e}")))?;
    let u0 = initial_velocity(cfg, grid, cell.seed)?;
    let sc = solver_config(cfg, cell.dt)?;
    let which = cfg.snapshots_on_disk()?;
    match run(&sc, u0, &mut []) {
        Ok(rec) => {
            rec.write_dir(&dir.join(label), which)?;
            Ok(rec)
        }
        Err(failure) => {
            if matches!(failure.error, Error::BlowUp { .. }) {
                failure.partial.write_dir(&dir.join(label), which)?;
            }
            Err(failure.error.into())
        }
    }
}

/// Runs independent cells concurrently, in order.
fn solve_cells(cfg: &ExperimentConfig, cells: &[(Cell, String)], dir: &Path) -> Step<Vec<RunRecord>> {
    exec::map(cells, |(cell, label)| solve(cfg, *cell, dir, label))
        .into_iter()
        .collect()
}

// ---------------------------------------------------------------- shared diagnostics

fn norm_exponents(cfg: &ExperimentConfig, extra: &[f64]) -> Step<Vec<f64>> {
    let mut e = cfg.list("exponents")?;
    e.extend_from_slice(extra);
    e.sort_by(f64::total_cmp);
    e.dedup();
    Ok(e)
}

fn find<'a>(norms: &'a [NormSeries], s: f64) -> Step<&'a NormSeries> {
    let name = series_name(s);
    norms
        .iter()
        .find(|n| n.name == name)
        .ok_or(Stop::Invalid(format!("missing series {name}")))
}

/// `(s, w)` pairs for the weighted suprema `sup t^w ‖D^s u‖`.
fn weighted_bounds(cfg: &ExperimentConfig) -> Step<Vec<(f64, f64)>> {
    let mut out = vec![(1.5, 1.0), (1.0, 0.5)];
    for a in cfg.list("alphas")? {
        let sw = (1.0 + a, 0.5 + a);
        if !out.contains(&sw) {
            out.push(sw);
        }
    }
    Ok(out)
}

fn sup_bounds(run: &RunRecord, norms: &[NormSeries], pairs: &[(f64, f64)]) -> Step<Vec<BoundReport>> {
    pairs
        .iter()
        .map(|&(s, w)| Ok(sup_weighted(find(norms, s)?, w).with_run(run)))
        .collect()
}

fn integral_bounds(
    cfg: &ExperimentConfig,
    run: &RunRecord,
    norms: &[NormSeries],
    s_lo_list: &[f64],
) -> Step<Vec<BoundReport>> {
    let mut out = Vec::new();
    let mut alphas = cfg.list("alphas")?;
    if !alphas.contains(&0.5) {
        alphas.push(0.5);
    }
    for a in alphas {
        let s = 1.0 + a;
        out.push(integral_cauchy(&format!("int {}", series_name(s)), find(norms, s)?, 1.0, s_lo_list)?.with_run(run));
    }
    let p = lebesgue_exponent(0.5)?;
    out.push(integral_cauchy(&format!("int {}^{p}", series_name(1.5)), find(norms, 1.5)?, p, s_lo_list)?.with_run(run));
    out.push(au_l1_check(run, s_lo_list)?);
    Ok(out)
}

fn integrity_checks(out: &mut Artifacts, run: &RunRecord) {
    out.metric("energy_budget_residual", run.energy_budget_residual());
    out.metric("snapshots", run.snapshots.len() as f64);
    let fin = run.final_state().map_or(f64::NAN, |u| u.divergence_residual() / u.max_abs().max(f64::MIN_POSITIVE));
    out.assert(Assertion::new("final divergence residual", fin, Op::Le, 1e-10));
    if run.config.forcing != ptraj_core::solver::Forcing::Zero {
        return;
    }
    let energies: Vec<f64> = run.log.iter().map(|s| s.l2 * s.l2).collect();
    let worst_rise = energies
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0].max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    out.assert(Assertion::new("energy non-increasing (max relative rise)", worst_rise, Op::Le, 1e-12));
}

// ---------------------------------------------------------------- kinds

fn taylor_green(cfg: &ExperimentConfig, out: &mut Artifacts) -> Step {
    let cell = Cell::base(cfg)?;
    let rec = solve(cfg, cell, &out.dir, "run")?;
    let nu = rec.config.nu;
    let tol = cfg.positive("tolerance")?;
    let mut csv = String::from("t,max_error,energy,energy_exact,energy_rel_error\n");
    let (mut worst_u, mut worst_e): (f64, f64) = (0.0, 0.0);
    for s in &rec.snapshots {
        let decay = (-2.0 * nu * s.t).exp();
        let exact = PhysicalField::from_fn(rec.grid, |[x, y]| {
            [decay * x.sin() * y.cos(), -decay * x.cos() * y.sin()]
        });
        let err = transform_to_physical(&s.u).max_abs_diff(&exact)?;
        let energy = ptraj_core::spectral::sobolev_norm(&s.u, 0.0)?.powi(2);
        let energy_exact = 2.0 * PI * PI * (-4.0 * nu * s.t).exp();
        let rel = (energy - energy_exact).abs() / energy_exact;
        worst_u = worst_u.max(err);
        worst_e = worst_e.max(rel);
        csv.push_str(&format!("{},{err},{energy},{energy_exact},{rel}\n", s.t));
    }
    out.write("oracle.csv", &csv)?;
    let norms = record_norms(&rec, &norm_exponents(cfg, &[])?)?;
    out.write("norms.csv", &norms_csv(&norms)?)?;
    out.assert(Assertion::new("max pointwise velocity error", worst_u, Op::Lt, tol));
    out.assert(Assertion::new("max relative energy error", worst_e, Op::Lt, tol));
    out.metric("energy_budget_residual", rec.energy_budget_residual());
    Ok(())
}

fn rough_run(cfg: &ExperimentConfig, out: &mut Artifacts) -> Step {
    let rec = solve(cfg, Cell::base(cfg)?, &out.dir, "run")?;
    let norms = record_norms(&rec, &norm_exponents(cfg, &[1.0, 1.25, 1.5, 2.0])?)?;
    out.write("norms.csv", &norms_csv(&norms)?)?;
    let s_lo = default_cutoffs(&rec);
    // (2, 1) is exploratory: t‖Au‖ is reported, not asserted.
    let mut reports = sup_bounds(&rec, &norms, &[(1.5, 1.0), (1.0, 0.5), (1.25, 0.75), (2.0, 1.0)])?;
    reports.extend(integral_bounds_fixed(&rec, &norms, &s_lo)?);
    for r in &reports {
        out.bound(r);
    }
    out.write("bounds.csv", &bounds_csv(&reports))?;
    integrity_checks(out, &rec);
    Ok(())
}

/// Cutoffs `10^{-2}, 10^{-3}, …` down to the smallest positive snapshot.
fn default_cutoffs(rec: &RunRecord) -> Vec<f64> {
    let t_min = rec.snapshots.iter().map(|s| s.t).find(|&t| t > 0.0).unwrap_or(1.0);
    let t_final = rec.config.t_final;
    (2..)
        .map(|j| t_final * 10f64.powi(-j))
        .take_while(|&s| s >= t_min * (1.0 - 1e-12))
        .collect()
}

fn integral_bounds_fixed(rec: &RunRecord, norms: &[NormSeries], s_lo: &[f64]) -> Step<Vec<BoundReport>> {
    if s_lo.is_empty() {
        return Ok(Vec::new());
    }
    let p = lebesgue_exponent(0.5)?;
    Ok(vec![
        integral_cauchy(&format!("int {}", series_name(1.5)), find(norms, 1.5)?, 1.0, s_lo)?.with_run(rec),
        integral_cauchy(&format!("int {}^{p}", series_name(1.5)), find(norms, 1.5)?, p, s_lo)?.with_run(rec),
        au_l1_check(rec, s_lo)?,
    ])
}

fn bounds_audit(cfg: &ExperimentConfig, out: &mut Artifacts) -> Step {
    let base = Cell::base(cfg)?;
    let mut cells = vec![(base, "run".to_string())];
    if cfg.bool("refine")? {
        let fine_n = Cell { n: 2 * base.n, ..base };
        let fine_dt = Cell { dt: base.dt / 2.0, ..base };
        cells.push((fine_n, format!("refine_{}", fine_n.label())));
        cells.push((fine_dt, format!("refine_{}", fine_dt.label())));
    }
    let runs = solve_cells(cfg, &cells, &out.dir)?;
    let pairs = weighted_bounds(cfg)?;
    let mut needed = vec![1.0, 1.25, 1.5, 2.0];
    needed.extend(pairs.iter().map(|p| p.0));
    let exps = norm_exponents(cfg, &needed)?;
    let norms: Vec<Vec<NormSeries>> = runs.iter().map(|r| record_norms(r, &exps)).collect::<Result<_, _>>()?;
    out.write("norms.csv", &norms_csv(&norms[0])?)?;
    for ((_, label), n) in cells.iter().zip(&norms).skip(1) {
        out.write(&format!("norms_{label}.csv"), &norms_csv(n)?)?;
    }

    let mut reports = Vec::new();
    let per_run: Vec<Vec<BoundReport>> = runs
        .iter()
        .zip(&norms)
        .map(|(r, n)| sup_bounds(r, n, &pairs))
        .collect::<Result<_, _>>()?;
    for (j, base_report) in per_run[0].iter().enumerate() {
        let refined: Vec<&BoundReport> = per_run[1..].iter().map(|v| &v[j]).collect();
        let combined = refinement_verdict(base_report, &refined);
        let change = combined.extra("max_change").unwrap_or(0.0);
        out.assert(Assertion::flag(format!("{} attained away from t_min", combined.name), base_report.verdict.holds()));
        if !refined.is_empty() {
            out.assert(Assertion::new(format!("{} refinement change", combined.name), change, Op::Lt, 0.25));
        }
        reports.push(combined);
        reports.extend(refined.into_iter().cloned());
    }

    let s_lo = cfg.list("s_lo_list")?;
    for r in integral_bounds(cfg, &runs[0], &norms[0], &s_lo)? {
        if !r.name.starts_with("int |Au|") {
            let change = r.extra("last_change").unwrap_or(f64::NAN);
            out.assert(Assertion::new(format!("{} Cauchy change", r.name), change, Op::Lt, CAUCHY_REL_CHANGE));
        }
        reports.push(r);
    }
    let p = lebesgue_exponent(0.5)?;
    out.metric("lebesgue_exponent", p);
    out.assert(Assertion::new("lebesgue exponent - (sqrt5 - 1)", (p - (5f64.sqrt() - 1.0)).abs(), Op::Le, 0.0));

    let start = cfg.point("tracer_start")?;
    let tracer_dt = cfg.positive("tracer_dt")?;
    let eta = eta_initial_audit_with(&runs[0], &norms[0], start, &[], tracer_dt)?;
    out.write("trajectories.csv", &trajectories_csv(&advect(&runs[0], &[start], tracer_dt, Scheme::Rk4)?))?;
    reports.push(eta);

    for r in &reports {
        out.bound(r);
    }
    out.write("bounds.csv", &bounds_csv(&reports))?;
    integrity_checks(out, &runs[0]);
    Ok(())
}

fn trajectory_uniqueness(cfg: &ExperimentConfig, out: &mut Artifacts) -> Step {
    let base = Cell::base(cfg)?;
    let oos_cell = match cfg.init()? {
        InitialData::Rough { .. } => Cell {
            seed: Some(cfg.u64("oos_seed")?),
            ..base
        },
        _ => base,
    };
    let runs = solve_cells(cfg, &[(base, "run".into()), (oos_cell, "run_oos".into())], &out.dir)?;
    let (rec, oos_rec) = (&runs[0], &runs[1]);
    let start = cfg.point("tracer_start")?;
    let eps = cfg.list("eps_list")?;
    let dts = cfg.list("dt_list")?;
    if dts.is_empty() {
        return Err(Stop::Invalid("field `dt_list` must not be empty".into()));
    }
    let report = uniqueness_experiment(rec, start, &eps, &dts).map_err(|e| Stop::Invalid(format!("fields `eps_list`/`dt_list`: {e}")))?;
    let c = report.envelope.c;
    let oos = envelope_out_of_sample(oos_rec, cfg.point("oos_start")?, &eps, *dts.last().unwrap(), c)?;

    let mut starts = vec![start];
    starts.extend(perturbed_starts(start, &report.eps));
    out.write("trajectories.csv", &trajectories_csv(&advect(rec, &starts, dts[0], Scheme::Rk4)?))?;
    out.write("separations.csv", &separations_csv(&report.pairs, &cumulative_au(rec)?, c))?;
    let mut pert = String::from("eps,eta_T,ratio\n");
    for (e, h) in report.eps.iter().zip(&report.eta_final) {
        pert.push_str(&format!("{e},{h},{}\n", h / e));
    }
    out.write("perturbations.csv", &pert)?;
    let mut refine = String::from("dt,rk4_difference,euler_difference,rk4_order,euler_order\n");
    for (i, dt) in dts.iter().enumerate().skip(1) {
        let cell = |v: &[f64], j: usize| v.get(j).map_or(String::new(), |x| x.to_string());
        refine.push_str(&format!(
            "{dt},{},{},{},{}\n",
            cell(&report.dt_differences, i - 1),
            cell(&report.euler_differences, i - 1),
            cell(&report.orders, i.wrapping_sub(2)),
            cell(&report.euler_orders, i.wrapping_sub(2)),
        ));
    }
    out.write("refinement.csv", &refine)?;

    out.assert(Assertion::new("rk4 dt-halving order", report.min_order(), Op::Ge, cfg.f64("min_order")?));
    out.assert(Assertion::flag("eta(T) decreasing as eps decreases", report.eta_monotone));
    out.assert(Assertion::new("eta(T)/eps spread", report.ratio_spread, Op::Le, cfg.f64("max_ratio_spread")?));
    out.assert(Assertion::new(
        "out-of-sample envelope pass fraction",
        oos.pass_fraction(),
        Op::Ge,
        cfg.f64("envelope_pass")?,
    ));
    out.metric("envelope_c", c);
    out.metric("t_star", report.t_star);
    out.metric("max_eta_over_eps", report.max_ratio());
    out.metric("rejected_eps", report.rejected_eps.len() as f64);
    out.metric("in_sample_checked", report.envelope.checked as f64);
    out.metric("in_sample_pass_fraction", report.envelope.pass_fraction());
    out.metric("oos_checked", oos.checked as f64);
    out.metric("oos_vacuous", oos.vacuous as f64);
    out.metric("oos_violations", oos.violations as f64);
    if let Some(o) = report.euler_orders.iter().copied().reduce(f64::min) {
        out.metric("euler_min_order", o);
    }
    integrity_checks(out, rec);
    Ok(())
}

/// Per-field constants at one resolution.
fn loglip_fields(n: usize, delta: f64, seed: u64, fields: usize, pairs: usize) -> Step<Vec<BoundReport>> {
    let grid = WavenumberGrid::new(n).map_err(|e| Stop::Invalid(format!("field `N`: {e}")))?;
    (0..fields as u64)
        .map(|i| {
            let u = synthesize_rough_field(grid, delta, seed + i).map_err(|e| Stop::Invalid(format!("field `delta`: {e}")))?;
            Ok(loglip_modulus(&u, PairSampler { count: pairs, seed: seed + i })?)
        })
        .collect()
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn loglip_audit(cfg: &ExperimentConfig, out: &mut Artifacts) -> Step {
    let (n, delta, seed) = (cfg.usize("N")?, cfg.f64("delta")?, cfg.u64("seed")?);
    let pairs = cfg.usize("pairs")?;
    let base = loglip_fields(n, delta, seed, cfg.usize("fields")?, pairs)?;
    let fine_n = cfg.usize("refine_N")?;
    let fine = loglip_fields(fine_n, delta, seed, cfg.usize("refine_fields")?, pairs)?;
    let mut csv = String::from("N,field,seed,c,weight,c_homogeneous\n");
    for (set, nn) in [(&base, n), (&fine, fine_n)] {
        for (i, r) in set.iter().enumerate() {
            csv.push_str(&format!(
                "{nn},{i},{},{},{},{}\n",
                seed + i as u64,
                r.constant,
                r.extra("weight").unwrap_or(f64::NAN),
                r.extra("c_homogeneous").unwrap_or(f64::NAN)
            ));
        }
    }
    out.write("loglip.csv", &csv)?;
    let cs: Vec<f64> = base.iter().map(|r| r.constant).collect();
    let cf: Vec<f64> = fine.iter().map(|r| r.constant).collect();
    let max_c = cs.iter().copied().fold(0.0, f64::max);
    let max_f = cf.iter().copied().fold(0.0, f64::max);
    let across_fields = spread(&cs);
    let across_n = (max_c / max_f).max(max_f / max_c);
    out.metric(format!("c_max_N{n}"), max_c);
    out.metric(format!("c_max_N{fine_n}"), max_f);
    out.metric(format!("c_spread_fields_N{fine_n}"), spread(&cf));
    out.assert(Assertion::new(format!("max/min c across fields at N={n}"), across_fields, Op::Lt, 2.0));
    out.assert(Assertion::new(format!("c_max ratio N={n} vs N={fine_n}"), across_n, Op::Lt, 2.0));
    let mut reports: Vec<BoundReport> = Vec::new();
    for (set, label) in [(&base, n), (&fine, fine_n)] {
        if let Some(worst) = set.iter().max_by(|a, b| a.constant.total_cmp(&b.constant)) {
            let mut r = worst.clone();
            r.name = format!("loglip c_max N={label}");
            reports.push(r);
        }
    }
    for r in &reports {
        out.bound(r);
    }
    out.write("bounds.csv", &bounds_csv(&reports))?;
    Ok(())
}

fn heat_h2minus(cfg: &ExperimentConfig, out: &mut Artifacts) -> Step {
    let grid = WavenumberGrid::new(cfg.usize("N")?).map_err(|e| Stop::Invalid(format!("field `N`: {e}")))?;
    let v0 = synthesize_power_law(grid, cfg.positive("slope")?, cfg.u64("seed")?)?;
    let r_list = cfg.list("r_list")?;
    let mut s_lo = cfg.list("s_lo_list")?;
    s_lo.sort_by(|a, b| b.total_cmp(a));
    let rows = heat_h2minus_study(&v0, &r_list, cfg.positive("T")?, &s_lo)
        .map_err(|e| Stop::Invalid(format!("fields `r_list`/`s_lo_list`: {e}")))?;
    out.write("h2minus.csv", &h2minus_csv(&rows))?;
    if s_lo.len() >= 2 {
        let (coarse, fine) = (s_lo[s_lo.len() - 2], s_lo[s_lo.len() - 1]);
        for &r in &r_list {
            let change = h2minus_change(&rows, r, coarse, fine).unwrap_or(f64::NAN);
            out.metric(format!("change_r{r}"), change);
            if r == 3.0 {
                out.assert(Assertion::new("r=3 Cauchy change", change, Op::Lt, cfg.positive("cauchy_tol")?));
            }
            if r == 1.0 {
                out.assert(Assertion::new("r=1 growth", change, Op::Ge, 0.20));
            }
        }
    }

    let gt_times = cfg.list("gt_times")?;
    let mut gt_rows = Vec::new();
    for r in cfg.list("gt_r")? {
        for &t in &gt_times {
            gt_rows.push((r, t, gt_profile(r, t).map_err(|e| Stop::Invalid(format!("fields `gt_r`/`gt_times`: {e}")))?));
        }
    }
    out.write("gt.csv", &gt_csv(&gt_rows))?;
    let mut worst_cells: f64 = 0.0;
    let mut any_r0 = false;
    for (r, t, m) in &gt_rows {
        if *r == 0.0 {
            any_r0 = true;
            worst_cells = worst_cells.max((m.x_star - (1.0 / t - 1.0)).abs() / m.cell);
        }
    }
    if any_r0 {
        out.assert(Assertion::new("r=0 |x* - (1/t - 1)| in grid cells", worst_cells, Op::Le, 1.0));
    }
    let xt: Vec<f64> = gt_rows
        .iter()
        .filter(|(r, t, _)| *r == 2.0 && [0.01, 0.1, 1.0].contains(t))
        .map(|(_, t, m)| m.x_star * t)
        .collect();
    if xt.len() == 3 {
        let max = xt.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = xt.iter().copied().fold(f64::INFINITY, f64::min);
        let scale = xt.iter().map(|x| x.abs()).fold(0.0, f64::max);
        out.assert(Assertion::new("r=2 spread of x*·t over t in {0.01,0.1,1}", (max - min) / scale, Op::Lt, 0.10));
    }
    Ok(())
}

fn counterexamples(cfg: &ExperimentConfig, out: &mut Artifacts) -> Step {
    let (t0, t1, delta) = (cfg.f64("t0")?, cfg.positive("t1")?, cfg.f64("delta")?);
    let probe = (-2f64).exp();
    let stops: Vec<f64> = [probe].into_iter().filter(|&t| t > t0 && t < t1).collect();
    let branches = nonunique_branches_at(t0, t1, delta, &stops).map_err(|e| Stop::Invalid(format!("fields `t0`/`t1`/`delta`: {e}")))?;
    out.write("counterexamples.csv", &counterexamples_csv(&branches))?;
    let tol = cfg.positive("residual_tol")?;
    for b in &branches {
        out.assert(Assertion::new(format!("{} ODE residual", b.label.name()), b.max_residual(), Op::Le, tol));
        out.metric(format!("{}_max_error", b.label.name()), b.max_error());
        if let Some(tb) = b.blow_up {
            out.metric(format!("{}_blow_up", b.label.name()), tb);
        }
    }
    if let Some(log) = branches.iter().find(|b| b.label == BranchLabel::Log) {
        if let Some((t, x)) = stops.first().and_then(|&t| log.value_near(t)) {
            let exact = -1.0 / t.ln();
            out.assert(Assertion::new("log-branch relative error at t=e^-2", (x - exact).abs() / exact, Op::Lt, 0.01));
        }
    }
    let area = cfg.positive("area")?;
    let lc = lorentz_norm_constant(area)?;
    out.metric("lorentz_norm_constant", lc);
    if (area - 4.0 * PI * PI).abs() <= 1e-12 * area {
        out.assert(Assertion::new("lorentz constant vs 4pi (relative)", (lc - 4.0 * PI).abs() / (4.0 * PI), Op::Le, 1e-12));
    }
    let table = weak_l1_demo(cfg.positive("weak_T")?, &cfg.list("lambdas")?, &cfg.list("weak_s_list")?)?;
    out.write("weak_l1.csv", &weak_l1_csv(&table))?;
    let worst = table.levels.iter().map(|&(_, m, c)| m / c).fold(0.0, f64::max);
    out.assert(Assertion::new("weak-L1 measure / (C/lambda)", worst, Op::Le, 1.0));
    Ok(())
}
