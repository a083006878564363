//! Spectral representation of periodic vector fields on `[0, 2π)²`.
//!
//! Coefficients follow the convention
//!
//! ```text
//! û(k) = N⁻² Σ_x u(x) e^{-ik·x},      u(x) = Σ_k û(k) e^{ik·x}
//! ```
//!
//! over the integer wavevectors `k ∈ {-N/2, …, N/2-1}²`, stored in FFT order
//! (index `i` along an axis is wavenumber `i` for `i < N/2`, `i - N`
//! otherwise). The flat index of `(i1, i2)` is `i1 * N + i2`; axis 1 is `x₁`.
//!
//! Norm scaling: [`sobolev_norm`] reports the `L²(Ω)` integral norm,
//! `‖u‖² = |Ω| Σ_k |û(k)|²` with `|Ω| = 4π²`. The two weighted sums that are
//! defined directly on Fourier coefficients ([`h2minus_norm`] and
//! [`loglip_weight`]) are evaluated on the raw coefficient sums, without the
//! `|Ω|` factor.

mod eval;
pub(crate) mod fft;
pub mod io;

use std::f64::consts::{E, PI};
use std::ops::Deref;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub use eval::PointEvaluator;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest exponent accepted by [`fractional_derivative`] and [`sobolev_norm`].
pub const MAX_DERIVATIVE_ORDER: f64 = 4.0;

/// Square `N × N` grid of integer wavevectors on the `2π`-periodic square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WavenumberGrid {
    n: usize,
}

impl WavenumberGrid {
    /// Side length of the periodic domain.
    pub const PERIOD: f64 = 2.0 * PI;

    pub fn new(n: usize) -> Result<Self> {
        if n % 2 != 0 {
            return Err(Error::OddResolution(n));
        }
        if !(8..=4096).contains(&n) {
            return Err(Error::ResolutionOutOfRange(n));
        }
        Ok(WavenumberGrid { n })
    }

    /// Modes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of wavevectors (and of collocation points), `N²`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `|Ω| = 4π²`.
    pub fn area(&self) -> f64 {
        Self::PERIOD * Self::PERIOD
    }

    /// Collocation spacing `2π/N`.
    pub fn spacing(&self) -> f64 {
        Self::PERIOD / self.n as f64
    }

    /// Wavenumber stored at axis index `i`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Axis index holding wavenumber `k`, if it is on the grid.
    pub fn axis_index(&self, k: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        if k < -half || k >= half {
            None
        } else if k >= 0 {
            Some(k as usize)
        } else {
            Some((k + self.n as i64) as usize)
        }
    }

    #[inline]
    pub fn wavevector(&self, idx: usize) -> [i64; 2] {
        [self.wavenumber(idx / self.n), self.wavenumber(idx % self.n)]
    }

    pub fn index(&self, k: [i64; 2]) -> Option<usize> {
        Some(self.axis_index(k[0])? * self.n + self.axis_index(k[1])?)
    }

    /// `|k|²`, the Stokes eigenvalue at flat index `idx`.
    #[inline]
    pub fn k_squared(&self, idx: usize) -> f64 {
        let [a, b] = self.wavevector(idx);
        (a * a + b * b) as f64
    }

    /// True when either component sits at the unpaired Nyquist wavenumber `-N/2`.
    pub fn is_nyquist(&self, idx: usize) -> bool {
        let half = -((self.n / 2) as i64);
        let [a, b] = self.wavevector(idx);
        a == half || b == half
    }

    /// Flat index of `-k` (modulo the grid).
    #[inline]
    pub fn conjugate_index(&self, idx: usize) -> usize {
        let n = self.n;
        let (i1, i2) = (idx / n, idx % n);
        ((n - i1) % n) * n + (n - i2) % n
    }

    /// All wavevectors in storage order.
    pub fn wavevectors(&self) -> impl Iterator<Item = [i64; 2]> + '_ {
        (0..self.len()).map(move |i| self.wavevector(i))
    }

    /// Collocation point at flat index `idx`.
    pub fn lattice_point(&self, idx: usize) -> [f64; 2] {
        let h = self.spacing();
        [(idx / self.n) as f64 * h, (idx % self.n) as f64 * h]
    }

    fn check_same(&self, other: &WavenumberGrid) -> Result<()> {
        if self.n != other.n {
            return Err(Error::GridMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(())
    }
}

/// Validated grid constructor.
pub fn make_grid(n: usize) -> Result<WavenumberGrid> {
    WavenumberGrid::new(n)
}

/// Arbitrary two-component spectral vector field.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: WavenumberGrid,
    coeffs: [Vec<Complex64>; 2],
}

impl SpectralField {
    pub fn zeros(grid: WavenumberGrid) -> Self {
        SpectralField {
            grid,
            coeffs: [vec![ZERO; grid.len()], vec![ZERO; grid.len()]],
        }
    }

    pub fn from_components(
        grid: WavenumberGrid,
        c1: Vec<Complex64>,
        c2: Vec<Complex64>,
    ) -> Result<Self> {
        if c1.len() != grid.len() || c2.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "expected {} coefficients per component, got {} and {}",
                grid.len(),
                c1.len(),
                c2.len()
            )));
        }
        Ok(SpectralField {
            grid,
            coeffs: [c1, c2],
        })
    }

    pub fn grid(&self) -> WavenumberGrid {
        self.grid
    }

    pub fn component(&self, i: usize) -> &[Complex64] {
        &self.coeffs[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.coeffs[i]
    }

    pub(crate) fn components_mut(&mut self) -> (&mut [Complex64], &mut [Complex64]) {
        let [a, b] = &mut self.coeffs;
        (a, b)
    }

    /// Coefficient pair at wavevector `k`; zero if `k` is off the grid.
    pub fn get(&self, k: [i64; 2]) -> [Complex64; 2] {
        match self.grid.index(k) {
            Some(i) => [self.coeffs[0][i], self.coeffs[1][i]],
            None => [ZERO; 2],
        }
    }

    pub fn set(&mut self, k: [i64; 2], value: [Complex64; 2]) -> Result<()> {
        let i = self
            .grid
            .index(k)
            .ok_or_else(|| Error::Invalid(format!("wavevector {k:?} is off the grid")))?;
        self.coeffs[0][i] = value[0];
        self.coeffs[1][i] = value[1];
        Ok(())
    }

    /// Sets `û(k) = value` and `û(-k) = conj(value)`.
    pub fn set_real_mode(&mut self, k: [i64; 2], value: [Complex64; 2]) -> Result<()> {
        self.set(k, value)?;
        self.set([-k[0], -k[1]], [value[0].conj(), value[1].conj()])
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.coeffs {
            c.iter_mut().for_each(|z| *z *= factor);
        }
    }

    /// Per-mode real multiplier `m(|k|²)`.
    pub fn apply_multiplier(&mut self, m: impl Fn(f64) -> f64) {
        let grid = self.grid;
        let (a, b) = self.components_mut();
        for (i, (za, zb)) in a.iter_mut().zip(b.iter_mut()).enumerate() {
            let f = m(grid.k_squared(i));
            *za *= f;
            *zb *= f;
        }
    }

    /// `self + factor * other`.
    pub fn add_scaled(&mut self, factor: f64, other: &SpectralField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for (dst, src) in self.coeffs.iter_mut().zip(&other.coeffs) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s * factor);
        }
        Ok(())
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|c| c.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &SpectralField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max))
    }

    /// `max_k |k·û(k)|`.
    pub fn divergence_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.grid.len() {
            let [k1, k2] = self.grid.wavevector(i);
            let d = self.coeffs[0][i] * k1 as f64 + self.coeffs[1][i] * k2 as f64;
            worst = worst.max(d.norm());
        }
        worst
    }

    /// `max_k |û(-k) - conj(û(k))|` over non-Nyquist modes.
    pub fn hermitian_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.grid.len() {
            if self.grid.is_nyquist(i) {
                continue;
            }
            let j = self.grid.conjugate_index(i);
            for c in &self.coeffs {
                worst = worst.max((c[j] - c[i].conj()).norm());
            }
        }
        worst
    }

    /// Raw sum `Σ_k w(|k|²) |û(k)|²`.
    pub fn weighted_energy(&self, w: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.grid.len() {
            let e = self.coeffs[0][i].norm_sqr() + self.coeffs[1][i].norm_sqr();
            if e != 0.0 {
                acc += w(self.grid.k_squared(i)) * e;
            }
        }
        acc
    }
}

/// Divergence-free, zero-mean, Hermitian-symmetric spectral velocity.
///
/// Obtained from [`leray_project`] or from operations that preserve the
/// invariants. Derefs to the underlying [`SpectralField`] for read access.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralVelocity(SpectralField);

impl SpectralVelocity {
    pub fn zeros(grid: WavenumberGrid) -> Self {
        SpectralVelocity(SpectralField::zeros(grid))
    }

    /// Accepts `field` if its divergence and mean are within `tol` (relative
    /// to the largest coefficient).
    pub fn try_from_field(field: SpectralField, tol: f64) -> Result<Self> {
        let scale = field.max_abs().max(f64::MIN_POSITIVE);
        let div = field.divergence_residual() / scale;
        let mean = field.get([0, 0]);
        if div > tol || mean[0].norm() + mean[1].norm() > tol * scale {
            return Err(Error::Invalid(format!(
                "field is not a zero-mean divergence-free velocity (relative divergence {div:e})"
            )));
        }
        Ok(SpectralVelocity(field))
    }

    /// Taylor–Green vortex `amplitude · (sin x₁ cos x₂, −cos x₁ sin x₂)`.
    pub fn taylor_green(grid: WavenumberGrid, amplitude: f64) -> Self {
        let mut f = SpectralField::zeros(grid);
        // sin x₁ cos x₂ = Σ ± e^{i(±x₁ ± x₂)}/(4i)
        let q = amplitude / 4.0;
        for (s1, s2) in [(1i64, 1i64), (1, -1), (-1, 1), (-1, -1)] {
            let c1 = Complex64::new(0.0, -q * s1 as f64);
            let c2 = Complex64::new(0.0, q * s2 as f64);
            f.set([s1, s2], [c1, c2]).expect("N >= 8");
        }
        SpectralVelocity(f)
    }

    /// Single real Fourier mode `û(k) = value`, `û(-k) = conj(value)`;
    /// `value` must be orthogonal to `k`.
    pub fn single_mode(grid: WavenumberGrid, k: [i64; 2], value: [Complex64; 2]) -> Result<Self> {
        let mut f = SpectralField::zeros(grid);
        f.set_real_mode(k, value)?;
        Self::try_from_field(f, 1e-12)
    }

    pub fn into_field(self) -> SpectralField {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut f = self.0.clone();
        f.scale(factor);
        SpectralVelocity(f)
    }

    /// `(1 - θ) a + θ b`.
    pub fn lerp(a: &Self, b: &Self, theta: f64) -> Result<Self> {
        let mut f = a.0.clone();
        f.scale(1.0 - theta);
        f.add_scaled(theta, &b.0)?;
        Ok(SpectralVelocity(f))
    }

    pub(crate) fn from_field_unchecked(field: SpectralField) -> Self {
        SpectralVelocity(field)
    }

    pub(crate) fn field_mut(&mut self) -> &mut SpectralField {
        &mut self.0
    }
}

impl Deref for SpectralVelocity {
    type Target = SpectralField;

    fn deref(&self) -> &SpectralField {
        &self.0
    }
}

impl AsRef<SpectralField> for SpectralVelocity {
    fn as_ref(&self) -> &SpectralField {
        &self.0
    }
}

/// Real two-component field sampled on the `N × N` collocation lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalField {
    grid: WavenumberGrid,
    samples: [Vec<f64>; 2],
}

impl PhysicalField {
    pub fn from_components(grid: WavenumberGrid, u1: Vec<f64>, u2: Vec<f64>) -> Result<Self> {
        if u1.len() != grid.len() || u2.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "expected {} samples per component",
                grid.len()
            )));
        }
        Ok(PhysicalField {
            grid,
            samples: [u1, u2],
        })
    }

    /// Samples `f` at every lattice point.
    pub fn from_fn(grid: WavenumberGrid, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let (mut u1, mut u2) = (Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len()));
        for i in 0..grid.len() {
            let [a, b] = f(grid.lattice_point(i));
            u1.push(a);
            u2.push(b);
        }
        PhysicalField {
            grid,
            samples: [u1, u2],
        }
    }

    pub fn grid(&self) -> WavenumberGrid {
        self.grid
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.samples[i]
    }

    pub fn sample(&self, idx: usize) -> [f64; 2] {
        [self.samples[0][idx], self.samples[1][idx]]
    }

    /// Lattice quadrature of the `L²(Ω)` norm.
    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self.samples.iter().flatten().map(|v| v * v).sum();
        (sum * self.grid.area() / self.grid.len() as f64).sqrt()
    }

    /// `max_x |u(x)|` over the lattice.
    pub fn max_speed(&self) -> f64 {
        self.samples[0]
            .iter()
            .zip(&self.samples[1])
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &PhysicalField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }
}

/// Collocation values of a spectral field.
pub fn transform_to_physical(u: &SpectralField) -> PhysicalField {
    let grid = u.grid();
    let plan = fft::plan(grid.n());
    let samples = [0, 1].map(|c| {
        let mut buf = u.component(c).to_vec();
        plan.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect::<Vec<_>>()
    });
    PhysicalField { grid, samples }
}

/// Fourier coefficients of a lattice field.
pub fn transform_to_spectral(v: &PhysicalField) -> SpectralField {
    let grid = v.grid();
    let plan = fft::plan(grid.n());
    let scale = 1.0 / grid.len() as f64;
    let coeffs = [0, 1].map(|c| {
        let mut buf: Vec<Complex64> = v
            .component(c)
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        plan.forward(&mut buf);
        buf.iter_mut().for_each(|z| *z *= scale);
        buf
    });
    SpectralField { grid, coeffs }
}

/// Leray projection onto divergence-free, zero-mean fields:
/// `û ↦ û − (k·û/|k|²) k`, with the mean mode zeroed.
pub fn leray_project(mut v: SpectralField) -> SpectralVelocity {
    project_in_place(&mut v);
    SpectralVelocity(v)
}

pub(crate) fn project_in_place(v: &mut SpectralField) {
    let grid = v.grid();
    let (a, b) = v.components_mut();
    for i in 0..grid.len() {
        let [k1, k2] = grid.wavevector(i);
        if k1 == 0 && k2 == 0 {
            a[i] = ZERO;
            b[i] = ZERO;
            continue;
        }
        let (k1, k2) = (k1 as f64, k2 as f64);
        let p = (a[i] * k1 + b[i] * k2) / (k1 * k1 + k2 * k2);
        a[i] -= p * k1;
        b[i] -= p * k2;
    }
}

fn check_order(s: f64) -> Result<()> {
    if !(0.0..=MAX_DERIVATIVE_ORDER).contains(&s) {
        return Err(Error::out_of_range("s", s, "[0, 4]"));
    }
    Ok(())
}

/// `D^s u`, the multiplier `|k|^s`.
pub fn fractional_derivative(u: &SpectralVelocity, s: f64) -> Result<SpectralVelocity> {
    check_order(s)?;
    let mut f = u.0.clone();
    if s != 0.0 {
        f.apply_multiplier(|k2| k2.powf(0.5 * s));
    }
    Ok(SpectralVelocity(f))
}

/// `‖D^s u‖ = (|Ω| Σ_k |k|^{2s} |û(k)|²)^{1/2}`.
pub fn sobolev_norm(u: &SpectralField, s: f64) -> Result<f64> {
    check_order(s)?;
    let area = u.grid().area();
    let sum = if s == 0.0 {
        u.weighted_energy(|_| 1.0)
    } else if s == 1.0 {
        u.weighted_energy(|k2| k2)
    } else if s == 2.0 {
        u.weighted_energy(|k2| k2 * k2)
    } else {
        u.weighted_energy(|k2| k2.powf(s))
    };
    Ok((area * sum).sqrt())
}

/// `(Σ_k |û(k)|² (1+|k|²)² / (log(e+|k|²))^r)^{1/2}`.
pub fn h2minus_norm(u: &SpectralField, r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::out_of_range("r", r, "(0, ∞)"));
    }
    Ok(u
        .weighted_energy(|k2| (1.0 + k2).powi(2) / (E + k2).ln().powf(r))
        .sqrt())
}

/// `(Σ_k (1+|k|⁴) |û(k)|²)^{1/2}`, the `H^{1+d/2}` weight for `d = 2`.
pub fn loglip_weight(u: &SpectralField) -> f64 {
    u.weighted_energy(|k2| 1.0 + k2 * k2).sqrt()
}

/// Rough random velocity with `|û(k)| = |k|^{-1-δ}` before projection.
///
/// Each mode in the upper half-plane receives a uniform phase and a uniform
/// direction on the circle; the lower half-plane is filled by conjugation and
/// the result is Leray-projected. Nyquist modes are left empty.
pub fn synthesize_rough_field(
    grid: WavenumberGrid,
    decay: f64,
    seed: u64,
) -> Result<SpectralVelocity> {
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::out_of_range("delta", decay, "(0, 1]"));
    }
    synthesize_power_law(grid, 1.0 + decay, seed)
}

/// As [`synthesize_rough_field`] with an arbitrary slope `|û(k)| = |k|^{-slope}`.
pub fn synthesize_power_law(
    grid: WavenumberGrid,
    slope: f64,
    seed: u64,
) -> Result<SpectralVelocity> {
    if !(slope > 0.0) || !slope.is_finite() {
        return Err(Error::out_of_range("slope", slope, "(0, ∞)"));
    }
    // Draws go shell by shell (max(|k1|,|k2|) ascending), so a field at 2N
    // shares every mode of the field at N with the same seed.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralField::zeros(grid);
    let half = grid.n() as i64 / 2;
    for m in 1..half {
        for k1 in 0..=m {
            for k2 in -m..=m {
                if k1.abs().max(k2.abs()) != m || !(k1 > 0 || (k1 == 0 && k2 > 0)) {
                    continue;
                }
                let phase: f64 = rng.gen_range(0.0..2.0 * PI);
                let angle: f64 = rng.gen_range(0.0..2.0 * PI);
                let amp = ((k1 * k1 + k2 * k2) as f64).powf(-0.5 * slope);
                let z = Complex64::from_polar(amp, phase);
                let value = [z * angle.cos(), z * angle.sin()];
                f.set_real_mode([k1, k2], value)?;
            }
        }
    }
    Ok(leray_project(f))
}

/// Exact trigonometric-sum evaluation `u(X) = Σ_k û(k) e^{ik·X}` at each point.
pub fn evaluate_velocity(u: &SpectralField, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    PointEvaluator::new(u).eval_many(points)
}
