//! Explicit scalar examples behind the failure of the naive uniqueness route.
//!
//! `Ẋ = X²/t` with `X(0) = 0` is solved by both `X ≡ 0` and `X = −1/log t`.
//! The origin cannot be reached numerically, so each branch starts at
//! `t₀ > 0` from its closed-form value and is integrated with RK4 on
//! geometrically growing steps `h = t/100`.

use std::fmt::Write as _;

use crate::{Error, Result};

/// Step as a fraction of the current time.
pub const STEP_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BranchLabel {
    Zero,
    Log,
    /// Started from `X(t₀) = δ`.
    Perturbed { delta: f64, t0: f64 },
}

impl BranchLabel {
    pub fn name(&self) -> String {
        match self {
            BranchLabel::Zero => "zero".into(),
            BranchLabel::Log => "log-branch".into(),
            BranchLabel::Perturbed { delta, .. } => format!("perturbed({delta})"),
        }
    }

    /// Exact solution through this branch's starting value.
    pub fn closed_form(&self, t: f64) -> f64 {
        match *self {
            BranchLabel::Zero => 0.0,
            BranchLabel::Log => -1.0 / t.ln(),
            BranchLabel::Perturbed { delta, t0 } => {
                if delta == 0.0 {
                    0.0
                } else {
                    1.0 / (1.0 / delta - (t / t0).ln())
                }
            }
        }
    }

    /// Analytic derivative of [`closed_form`](Self::closed_form).
    pub fn closed_form_derivative(&self, t: f64) -> f64 {
        match *self {
            BranchLabel::Zero => 0.0,
            BranchLabel::Log => {
                let l = t.ln();
                1.0 / (t * l * l)
            }
            BranchLabel::Perturbed { delta, t0 } => {
                if delta == 0.0 {
                    0.0
                } else {
                    let d = 1.0 / delta - (t / t0).ln();
                    1.0 / (t * d * d)
                }
            }
        }
    }

    /// Relative defect `|X' − X²/t| / max(1, |X'|)` of the closed form.
    pub fn residual(&self, t: f64) -> f64 {
        let x = self.closed_form(t);
        let dx = self.closed_form_derivative(t);
        (dx - x * x / t).abs() / dx.abs().max(1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarOdeBranch {
    pub label: BranchLabel,
    pub times: Vec<f64>,
    /// RK4 values at `times`.
    pub values: Vec<f64>,
    /// Finite-time singularity of this branch, when it lies before `t₁`.
    pub blow_up: Option<f64>,
}

impl ScalarOdeBranch {
    /// Largest `|numerical − closed form|` relative to `max(1, |closed form|)`.
    pub fn max_error(&self) -> f64 {
        self.times
            .iter()
            .zip(&self.values)
            .map(|(&t, &x)| {
                let c = self.label.closed_form(t);
                (x - c).abs() / c.abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.times
            .iter()
            .map(|&t| self.label.residual(t))
            .fold(0.0, f64::max)
    }

    /// Value at the sample closest to `t`.
    pub fn value_near(&self, t: f64) -> Option<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.values)
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|(&s, &x)| (s, x))
    }
}

fn rhs(t: f64, x: f64) -> f64 {
    x * x / t
}

fn integrate(label: BranchLabel, t0: f64, t1: f64, x0: f64, stops: &[f64]) -> ScalarOdeBranch {
    let blow_up = match label {
        BranchLabel::Perturbed { delta, t0 } if delta > 0.0 => {
            let tb = t0 * (1.0 / delta).exp();
            (tb < t1).then_some(tb)
        }
        _ => None,
    };
    let end = blow_up.map_or(t1, |tb| t1.min(tb));
    let mut times = vec![t0];
    let mut values = vec![x0];
    let (mut t, mut x) = (t0, x0);
    let mut next_stop = stops.iter().copied().filter(|&s| s > t0 && s < end).peekable();
    while t < end {
        let mut h = STEP_FRACTION * t;
        let mut target = t + h;
        if let Some(&s) = next_stop.peek() {
            if target >= s {
                target = s;
                next_stop.next();
            }
        }
        if target >= end {
            target = end;
        }
        h = target - t;
        if blow_up.is_some() && end - target < 1e-9 * end {
            break;
        }
        let k1 = rhs(t, x);
        let k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1);
        let k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2);
        let k4 = rhs(t + h, x + h * k3);
        let xn = x + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4);
        if !xn.is_finite() {
            break;
        }
        t = target;
        x = xn;
        times.push(t);
        values.push(x);
    }
    ScalarOdeBranch {
        label,
        times,
        values,
        blow_up,
    }
}

/// Zero, log and `δ`-perturbed branches on `[t₀, t₁]`; `stops` are extra
/// times that the step sequence must hit exactly.
pub fn nonunique_branches_at(t0: f64, t1: f64, delta: f64, stops: &[f64]) -> Result<Vec<ScalarOdeBranch>> {
    if !(t0 > 0.0 && t0 < t1 && t1 < 1.0) {
        return Err(Error::Invalid(format!(
            "need 0 < t0 < t1 < 1, got t0 = {t0}, t1 = {t1}"
        )));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::out_of_range("delta", delta, "[0, ∞)"));
    }
    let perturbed = BranchLabel::Perturbed { delta, t0 };
    Ok(vec![
        integrate(BranchLabel::Zero, t0, t1, 0.0, stops),
        integrate(BranchLabel::Log, t0, t1, -1.0 / t0.ln(), stops),
        integrate(perturbed, t0, t1, delta, stops),
    ])
}

pub fn nonunique_branches(t0: f64, t1: f64, delta: f64) -> Result<Vec<ScalarOdeBranch>> {
    nonunique_branches_at(t0, t1, delta, &[])
}

/// `∫₀^{area} t^{-1/2} dt = 2√area`.
pub fn lorentz_norm_constant(area: f64) -> Result<f64> {
    if !(area > 0.0) || !area.is_finite() {
        return Err(Error::out_of_range("area", area, "(0, ∞)"));
    }
    Ok(2.0 * area.sqrt())
}

/// Weak-L¹ certificate and L¹ failure of `a(t) = 1/t` on `(0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakL1Table {
    pub t_final: f64,
    /// `(λ, μ{a > λ}, C/λ)` with `C = 1`.
    pub levels: Vec<(f64, f64, f64)>,
    /// `(s, ∫_s^T a dt)`.
    pub integrals: Vec<(f64, f64)>,
}

pub fn weak_l1_demo(t_final: f64, lambdas: &[f64], s_list: &[f64]) -> Result<WeakL1Table> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::out_of_range("T", t_final, "(0, ∞)"));
    }
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Invalid("levels must be positive".into()));
    }
    if s_list.iter().any(|&s| !(s > 0.0 && s <= t_final)) {
        return Err(Error::Invalid("cutoffs must lie in (0, T]".into()));
    }
    Ok(WeakL1Table {
        t_final,
        levels: lambdas
            .iter()
            .map(|&l| (l, t_final.min(1.0 / l), 1.0 / l))
            .collect(),
        integrals: s_list.iter().map(|&s| (s, (t_final / s).ln())).collect(),
    })
}

/// `counterexamples.csv`: `branch,t,x,closed_form,residual`.
pub fn counterexamples_csv(branches: &[ScalarOdeBranch]) -> String {
    let mut out = String::from("branch,t,x,closed_form,residual\n");
    for b in branches {
        let name = b.label.name();
        for (&t, &x) in b.times.iter().zip(&b.values) {
            writeln!(
                out,
                "{name},{t},{x},{},{}",
                b.label.closed_form(t),
                b.label.residual(t)
            )
            .unwrap();
        }
    }
    out
}

/// `weak_l1.csv`: `kind,arg,value,reference` rows for levels and cutoffs.
pub fn weak_l1_csv(table: &WeakL1Table) -> String {
    let mut out = String::from("kind,arg,value,reference\n");
    for &(l, m, c) in &table.levels {
        writeln!(out, "measure,{l},{m},{c}").unwrap();
    }
    for &(s, v) in &table.integrals {
        writeln!(out, "integral,{s},{v},").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn log_branch_reaches_one_half() {
        let t = (-2f64).exp();
        let b = nonunique_branches_at(1e-6, 0.3, 0.0, &[t]).unwrap();
        let (s, x) = b[1].value_near(t).unwrap();
        assert_eq!(s, t);
        assert!((x - 0.5).abs() < 0.005, "{x}");
        assert!(b[1].max_error() < 1e-6);
    }

    #[test]
    fn zero_branch_stays_zero() {
        let b = nonunique_branches(1e-6, 0.3, 0.0).unwrap();
        assert!(b[0].values.iter().all(|&x| x == 0.0));
        assert!(b[2].values.iter().all(|&x| x == 0.0));
        assert_eq!(b[2].blow_up, None);
    }

    #[test]
    fn residuals_are_round_off() {
        let b = nonunique_branches(1e-6, 0.3, 1e-2).unwrap();
        for br in &b {
            assert!(br.max_residual() <= 1e-10, "{:?}", br.label);
        }
    }

    #[test]
    fn perturbed_branch_blow_up_is_reported() {
        // t₀ e^{1/δ} = 1e-3 · e² < 0.3
        let b = nonunique_branches(1e-3, 0.3, 0.5).unwrap();
        let tb = b[2].blow_up.unwrap();
        assert!((tb - 1e-3 * 2f64.exp()).abs() < 1e-15);
        assert!(*b[2].times.last().unwrap() < tb);
        assert!(b[2].values.iter().all(|x| x.is_finite()));
        let tame = nonunique_branches(1e-6, 0.3, 1e-2).unwrap();
        assert_eq!(tame[2].blow_up, None);
        assert!(tame[2].max_error() < 1e-8);
    }

    #[test]
    fn branches_separate_monotonically() {
        let b = nonunique_branches(1e-6, 0.9, 0.0).unwrap();
        let gap: Vec<f64> = b[1]
            .values
            .iter()
            .zip(&b[0].values)
            .map(|(a, z)| (a - z).abs())
            .collect();
        assert!(gap.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_windows() {
        assert!(nonunique_branches(0.0, 0.5, 0.0).is_err());
        assert!(nonunique_branches(0.5, 0.4, 0.0).is_err());
        assert!(nonunique_branches(0.1, 1.0, 0.0).is_err());
        assert!(nonunique_branches(0.1, 0.5, -1.0).is_err());
    }

    #[test]
    fn lorentz_constant() {
        assert!((lorentz_norm_constant(4.0 * PI * PI).unwrap() - 4.0 * PI).abs() < 1e-12);
        assert_eq!(lorentz_norm_constant(1.0).unwrap(), 2.0);
        assert!(lorentz_norm_constant(1e-300).unwrap() < 1e-149);
        let (a, b) = (lorentz_norm_constant(3.0).unwrap(), lorentz_norm_constant(12.0).unwrap());
        assert!((b - 2.0 * a).abs() < 1e-15);
        assert!(lorentz_norm_constant(0.0).is_err());
    }

    #[test]
    fn weak_l1_rows() {
        let t = weak_l1_demo(1.0, &[10.0, 1.0, 0.5], &[1e-6]).unwrap();
        assert_eq!(t.levels[0], (10.0, 0.1, 0.1));
        assert_eq!(t.levels[1].1, 1.0);
        assert_eq!(t.levels[2].1, 1.0);
        assert!((t.integrals[0].1 - 6.0 * 10f64.ln()).abs() < 1e-12);
        assert!((t.integrals[0].1 - 13.82).abs() < 5e-3);
        assert!(weak_l1_demo(0.0, &[], &[]).is_err());
        assert!(weak_l1_csv(&t).starts_with("kind,arg,value,reference\n"));
    }

    #[test]
    fn csv_layout() {
        let b = nonunique_branches(0.01, 0.02, 0.1).unwrap();
        let csv = counterexamples_csv(&b);
        assert!(csv.starts_with("branch,t,x,closed_form,residual\n"));
        assert!(csv.contains("\nlog-branch,"));
    }
}
