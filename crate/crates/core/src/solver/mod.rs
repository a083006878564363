//! Time integration of `du/dt + νAu + B(u,u) = f` on the periodic square.
//!
//! The viscous term is integrated exactly through the factor
//! `e^{-ν|k|² dt}` and the remaining `−B(u,u) + f` with classical RK4
//! (Lawson's integrating-factor scheme). `B(u,u) = Π (u·∇)u` is evaluated
//! pseudo-spectrally in convective form with optional 2/3-rule dealiasing.

mod record;

use std::sync::Arc;

use num_complex::Complex64;

use crate::spectral::fft::{self, Fft2};
use crate::spectral::{
    project_in_place, sobolev_norm, transform_to_physical, SpectralField, SpectralVelocity,
    WavenumberGrid,
};
use crate::{exec, Error, Result};

pub use record::{RunRecord, Snapshot, SnapshotsOnDisk, StepLog};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Aliasing treatment of the quadratic product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dealias {
    /// Keep only `|k_i| < N/3` in the factors and in the product.
    TwoThirds,
    /// Full band (Nyquist modes are still dropped from derivatives).
    None,
}

impl Dealias {
    pub fn name(&self) -> &'static str {
        match self {
            Dealias::TwoThirds => "two-thirds",
            Dealias::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "two-thirds" | "2/3" => Some(Dealias::TwoThirds),
            "none" => Some(Dealias::None),
            _ => None,
        }
    }
}

/// Body force.
#[derive(Clone, Debug, PartialEq)]
pub enum Forcing {
    Zero,
    /// Time-independent forcing field.
    Steady(SpectralVelocity),
    /// `amplitude · cos(ωt) · (k⊥/|k|) sin(k·x)`.
    Oscillating {
        k: [i64; 2],
        amplitude: f64,
        omega: f64,
    },
}

impl Forcing {
    pub fn name(&self) -> &'static str {
        match self {
            Forcing::Zero => "zero",
            Forcing::Steady(_) => "steady",
            Forcing::Oscillating { .. } => "oscillating",
        }
    }

    /// Which regularity hypothesis on `f` the run exercises.
    pub fn hypothesis(&self) -> &'static str {
        match self {
            Forcing::Zero => "f = 0",
            // Any grid field is smooth; both hypotheses hold.
            Forcing::Steady(_) | Forcing::Oscillating { .. } => {
                "f in L2(0,T;H) and L-inf(0,T;H^1/2)"
            }
        }
    }

    /// Spectral forcing at time `t`, or `None` when it vanishes.
    pub fn at(&self, grid: WavenumberGrid, t: f64) -> Result<Option<SpectralField>> {
        match self {
            Forcing::Zero => Ok(None),
            Forcing::Steady(f) => {
                if f.grid() != grid {
                    return Err(Error::GridMismatch {
                        left: grid.n(),
                        right: f.grid().n(),
                    });
                }
                Ok(Some((**f).clone()))
            }
            Forcing::Oscillating {
                k,
                amplitude,
                omega,
            } => {
                let norm = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
                if norm == 0.0 {
                    return Err(Error::Invalid("forcing wavevector must be nonzero".into()));
                }
                let a = amplitude * (omega * t).cos() / norm;
                // sin(k·x) has coefficient −i/2 at k.
                let z = Complex64::new(0.0, -0.5 * a);
                let mut f = SpectralField::zeros(grid);
                f.set_real_mode(*k, [z * -(k[1] as f64), z * k[0] as f64])?;
                Ok(Some(f))
            }
        }
    }
}

/// Geometric snapshot times `T q^j`, `q = 10^{-1/per_decade}`, down to
/// `t_min_frac · T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometricSnapshots {
    pub t_min_frac: f64,
    pub per_decade: usize,
}

impl Default for GeometricSnapshots {
    fn default() -> Self {
        GeometricSnapshots {
            t_min_frac: 1e-4,
            per_decade: 10,
        }
    }
}

/// Ascending geometric grid from `t_min` to `t_max` (both included).
pub fn geometric_times(t_min: f64, t_max: f64, per_decade: usize) -> Vec<f64> {
    assert!(t_min > 0.0 && t_max > t_min && per_decade > 0);
    let decades = (t_max / t_min).log10();
    let count = (decades * per_decade as f64 - 1e-9).ceil().max(1.0) as usize;
    let mut out: Vec<f64> = (0..=count)
        .map(|j| t_max * 10f64.powf(-(j as f64) / per_decade as f64))
        .filter(|&t| t >= t_min * (1.0 - 1e-12))
        .collect();
    if out.last().map_or(true, |&t| t > t_min * (1.0 + 1e-12)) {
        out.push(t_min);
    }
    out.reverse();
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Kinematic viscosity ν > 0.
    pub nu: f64,
    /// Largest time step.
    pub dt: f64,
    pub t_final: f64,
    pub dealias: Dealias,
    pub forcing: Forcing,
    /// Record a snapshot every this many uniform steps (0 disables).
    pub snapshot_every: usize,
    /// Extra snapshots accumulating geometrically at `t = 0`.
    pub geometric: Option<GeometricSnapshots>,
    /// Test hook: `false` drops `B(u,u)`, leaving the forced heat equation.
    pub nonlinear: bool,
}

impl SolverConfig {
    pub fn new(nu: f64, dt: f64, t_final: f64) -> Self {
        SolverConfig {
            nu,
            dt,
            t_final,
            dealias: Dealias::TwoThirds,
            forcing: Forcing::Zero,
            snapshot_every: 1,
            geometric: None,
            nonlinear: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(Error::out_of_range("nu", self.nu, "(0, ∞)"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::out_of_range("dt", self.dt, "(0, ∞)"));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::out_of_range("T", self.t_final, "(0, ∞)"));
        }
        if let Some(g) = self.geometric {
            if !(g.t_min_frac > 0.0 && g.t_min_frac < 1.0) || g.per_decade == 0 {
                return Err(Error::Invalid(
                    "geometric snapshots need 0 < t_min_frac < 1 and per_decade > 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Time stops visited by [`run`], each flagged when a snapshot is taken.
    pub fn schedule(&self) -> Vec<(f64, bool)> {
        let t_final = self.t_final;
        let steps = (t_final / self.dt - 1e-9).ceil().max(1.0) as usize;
        let mut stops: Vec<(f64, bool)> = (1..=steps)
            .map(|n| {
                let t = if n == steps { t_final } else { n as f64 * self.dt };
                let snap = n == steps || (self.snapshot_every > 0 && n % self.snapshot_every == 0);
                (t, snap)
            })
            .collect();
        if let Some(g) = self.geometric {
            for t in geometric_times(g.t_min_frac * t_final, t_final, g.per_decade) {
                stops.push((t, true));
            }
            stops.sort_by(|a, b| a.0.total_cmp(&b.0));
            let tol = 1e-12 * t_final;
            let mut merged: Vec<(f64, bool)> = Vec::with_capacity(stops.len());
            for (t, snap) in stops {
                match merged.last_mut() {
                    Some(last) if (t - last.0).abs() <= tol => last.1 |= snap,
                    _ => merged.push((t, snap)),
                }
            }
            stops = merged;
        }
        stops
    }
}

/// Advective step bound `0.5 Δx / ‖u‖_∞` (lattice maximum).
pub fn stability_bound(u: &SpectralVelocity) -> f64 {
    let speed = transform_to_physical(u).max_speed();
    if speed == 0.0 {
        f64::INFINITY
    } else {
        0.5 * u.grid().spacing() / speed
    }
}

/// Reusable workspace for nonlinear evaluations and steps on one grid.
pub struct Stepper {
    grid: WavenumberGrid,
    plan: Arc<Fft2>,
    mask: Vec<bool>,
    bufs: [Vec<Complex64>; 3],
    factors: Option<(f64, f64, Vec<f64>, Vec<f64>)>,
}

impl Stepper {
    pub fn new(grid: WavenumberGrid, dealias: Dealias) -> Self {
        let n = grid.n() as i64;
        let mask = (0..grid.len())
            .map(|i| {
                let [a, b] = grid.wavevector(i);
                !grid.is_nyquist(i)
                    && match dealias {
                        Dealias::TwoThirds => 3 * a.abs() < n && 3 * b.abs() < n,
                        Dealias::None => true,
                    }
            })
            .collect();
        Stepper {
            grid,
            plan: fft::plan(grid.n()),
            mask,
            bufs: [0, 1, 2].map(|_| vec![ZERO; grid.len()]),
            factors: None,
        }
    }

    /// `B(u,u) = Π (u·∇)u`, dealiased and projected.
    pub fn nonlinear_term(&mut self, u: &SpectralField) -> SpectralField {
        let grid = self.grid;
        let len = grid.len();
        let (u1, u2) = (u.component(0), u.component(1));
        {
            let [a, b, c] = &mut self.bufs;
            // Pack pairs of real fields as re + i·im so three inverse FFTs
            // deliver u, ∇u₁ and ∇u₂.
            for i in 0..len {
                if !self.mask[i] {
                    a[i] = ZERO;
                    b[i] = ZERO;
                    c[i] = ZERO;
                    continue;
                }
                let [k1, k2] = grid.wavevector(i);
                let (k1, k2) = (k1 as f64, k2 as f64);
                a[i] = u1[i] + I * u2[i];
                let (d11, d21) = (I * k1 * u1[i], I * k2 * u1[i]);
                let (d12, d22) = (I * k1 * u2[i], I * k2 * u2[i]);
                b[i] = d11 + I * d21;
                c[i] = d12 + I * d22;
            }
        }
        for buf in &mut self.bufs {
            self.plan.inverse(buf);
        }
        {
            let [a, b, c] = &mut self.bufs;
            let chunk = grid.n();
            exec::for_each_chunk_mut(a, chunk, |row, a| {
                let off = row * chunk;
                for j in 0..a.len() {
                    let (v1, v2) = (a[j].re, a[j].im);
                    let gb = b[off + j];
                    let gc = c[off + j];
                    let n1 = v1 * gb.re + v2 * gb.im;
                    let n2 = v1 * gc.re + v2 * gc.im;
                    a[j] = Complex64::new(n1, n2);
                }
            });
        }
        self.plan.forward(&mut self.bufs[0]);
        let scale = 0.5 / len as f64;
        let z = &self.bufs[0];
        let mut out = SpectralField::zeros(grid);
        {
            let (o1, o2) = out.components_mut();
            for i in 0..len {
                if !self.mask[i] {
                    continue;
                }
                let zc = z[grid.conjugate_index(i)].conj();
                o1[i] = (z[i] + zc) * scale;
                o2[i] = (z[i] - zc) * (-I * scale);
            }
        }
        project_in_place(&mut out);
        out
    }

    fn rhs(
        &mut self,
        u: &SpectralField,
        t: f64,
        forcing: &Forcing,
        nonlinear: bool,
    ) -> Result<SpectralField> {
        let mut out = if nonlinear {
            let mut b = self.nonlinear_term(u);
            b.scale(-1.0);
            b
        } else {
            SpectralField::zeros(self.grid)
        };
        if let Some(f) = forcing.at(self.grid, t)? {
            let f = crate::spectral::leray_project(f);
            out.add_scaled(1.0, &f)?;
        }
        Ok(out)
    }

    fn factors(&mut self, nu: f64, dt: f64) -> (&[f64], &[f64]) {
        let stale = !matches!(&self.factors, Some((n, d, _, _)) if *n == nu && *d == dt);
        if stale {
            let grid = self.grid;
            let full = (0..grid.len())
                .map(|i| (-nu * grid.k_squared(i) * dt).exp())
                .collect();
            let half = (0..grid.len())
                .map(|i| (-nu * grid.k_squared(i) * 0.5 * dt).exp())
                .collect();
            self.factors = Some((nu, dt, full, half));
        }
        let (_, _, full, half) = self.factors.as_ref().unwrap();
        (full, half)
    }

    /// One integrating-factor RK4 step from `t` to `t + dt`.
    pub fn step(
        &mut self,
        u: &SpectralVelocity,
        t: f64,
        dt: f64,
        config: &SolverConfig,
    ) -> Result<SpectralVelocity> {
        let (nl, forcing) = (config.nonlinear, &config.forcing);
        let u0: &SpectralField = u;
        let ka = self.rhs(u0, t, forcing, nl)?;
        // stage states are built component-wise from the factors
        let combine = |s: &mut Stepper, f: &dyn Fn(usize, usize, f64, f64) -> Complex64| {
            let grid = s.grid;
            let (full, half) = s.factors(config.nu, dt);
            let mut out = SpectralField::zeros(grid);
            for c in 0..2 {
                let dst = out.component_mut(c);
                for i in 0..dst.len() {
                    dst[i] = f(c, i, full[i], half[i]);
                }
            }
            out
        };
        let h = 0.5 * dt;
        let ua = combine(self, &|c, i, _, e2| (u0.component(c)[i] + ka.component(c)[i] * h) * e2);
        let kb = self.rhs(&ua, t + h, forcing, nl)?;
        let ub = combine(self, &|c, i, _, e2| u0.component(c)[i] * e2 + kb.component(c)[i] * h);
        let kc = self.rhs(&ub, t + h, forcing, nl)?;
        let uc = combine(self, &|c, i, e, e2| {
            u0.component(c)[i] * e + kc.component(c)[i] * (dt * e2)
        });
        let kd = self.rhs(&uc, t + dt, forcing, nl)?;
        let sixth = dt / 6.0;
        let next = combine(self, &|c, i, e, e2| {
            u0.component(c)[i] * e
                + (ka.component(c)[i] * e
                    + (kb.component(c)[i] + kc.component(c)[i]) * (2.0 * e2)
                    + kd.component(c)[i])
                    * sixth
        });
        let energy = next.weighted_energy(|_| 1.0);
        if !energy.is_finite() {
            return Err(Error::BlowUp { t: t + dt });
        }
        Ok(SpectralVelocity::from_field_unchecked(next))
    }
}

/// `B(u,u)` with a fresh workspace.
pub fn nonlinear_term(u: &SpectralVelocity, dealias: Dealias) -> SpectralVelocity {
    let mut s = Stepper::new(u.grid(), dealias);
    SpectralVelocity::from_field_unchecked(s.nonlinear_term(u))
}

/// Single step with a fresh workspace.
pub fn step(u: &SpectralVelocity, t: f64, dt: f64, config: &SolverConfig) -> Result<SpectralVelocity> {
    config.validate()?;
    Stepper::new(u.grid(), config.dealias).step(u, t, dt, config)
}

/// Heat semigroup `û(k) ↦ e^{-|k|² t} û(k)`.
pub fn heat_evolve(v0: &SpectralVelocity, t: f64) -> Result<SpectralVelocity> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::out_of_range("t", t, "[0, ∞)"));
    }
    let mut v = v0.clone();
    if t != 0.0 {
        v.field_mut().apply_multiplier(|k2| (-k2 * t).exp());
    }
    Ok(v)
}

/// Callback invoked after every step (and once at `t = 0`).
pub trait Observer {
    fn observe(&mut self, t: f64, u: &SpectralVelocity);
}

impl<F: FnMut(f64, &SpectralVelocity)> Observer for F {
    fn observe(&mut self, t: f64, u: &SpectralVelocity) {
        self(t, u)
    }
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub partial: RunRecord,
    pub error: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} snapshots)", self.error, self.partial.snapshots.len())
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn step_log(t: f64, u: &SpectralVelocity, forcing: &Forcing) -> StepLog {
    let work = match forcing.at(u.grid(), t) {
        Ok(Some(f)) => {
            let mut acc = 0.0;
            for c in 0..2 {
                for (a, b) in f.component(c).iter().zip(u.component(c)) {
                    acc += (a.conj() * b).re;
                }
            }
            acc * u.grid().area()
        }
        _ => 0.0,
    };
    StepLog {
        t,
        l2: sobolev_norm(u, 0.0).unwrap_or(f64::NAN),
        h1: sobolev_norm(u, 1.0).unwrap_or(f64::NAN),
        work,
    }
}

/// Integrates from `0` to `T`, recording snapshots per the schedule.
pub fn run(
    config: &SolverConfig,
    u0: SpectralVelocity,
    observers: &mut [&mut dyn Observer],
) -> std::result::Result<RunRecord, RunFailure> {
    let grid = u0.grid();
    let mut record = RunRecord {
        config: config.clone(),
        grid,
        snapshots: Vec::new(),
        log: Vec::new(),
        threads: exec::threads(),
    };
    let fail = |record: RunRecord, error| Err(RunFailure {
        partial: record,
        error,
    });
    if let Err(e) = config.validate() {
        return fail(record, e);
    }
    let bound = stability_bound(&u0);
    if config.dt > bound {
        return fail(
            record,
            Error::StepTooLarge {
                dt: config.dt,
                bound,
            },
        );
    }
    if let Forcing::Steady(f) = &config.forcing {
        if f.grid() != grid {
            return fail(
                record,
                Error::GridMismatch {
                    left: grid.n(),
                    right: f.grid().n(),
                },
            );
        }
    }
    let mut stepper = Stepper::new(grid, config.dealias);
    for obs in observers.iter_mut() {
        obs.observe(0.0, &u0);
    }
    record.log.push(step_log(0.0, &u0, &config.forcing));
    record.snapshots.push(Snapshot {
        t: 0.0,
        u: u0.clone(),
    });
    let mut u = u0;
    let mut t = 0.0;
    for (t_next, snap) in config.schedule() {
        let dt = t_next - t;
        u = match stepper.step(&u, t, dt, config) {
            Ok(next) => next,
            Err(e) => return fail(record, e),
        };
        t = t_next;
        for obs in observers.iter_mut() {
            obs.observe(t, &u);
        }
        record.log.push(step_log(t, &u, &config.forcing));
        if snap {
            record.snapshots.push(Snapshot { t, u: u.clone() });
        }
    }
    Ok(record)
}

#[cfg(test)]
mod tests;
