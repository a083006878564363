//! Plain-text experiment configuration.
//!
//! One `key = value` pair per line; `#` starts a comment. Lists are comma
//! separated. Every key a kind understands has a default, except `kind`
//! itself and `nu` for the kinds that run the solver. [`ExperimentConfig::echo`]
//! prints the fully defaulted configuration, which parses back to the same
//! value.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use ptraj_core::solver::{Dealias, Forcing, SnapshotsOnDisk};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    TaylorGreenOracle,
    RoughRun,
    HeatH2Minus,
    LoglipAudit,
    BoundsAudit,
    TrajectoryUniqueness,
    Counterexamples,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::TaylorGreenOracle,
        Kind::RoughRun,
        Kind::HeatH2Minus,
        Kind::LoglipAudit,
        Kind::BoundsAudit,
        Kind::TrajectoryUniqueness,
        Kind::Counterexamples,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Kind::TaylorGreenOracle => "taylor-green-oracle",
            Kind::RoughRun => "rough-run",
            Kind::HeatH2Minus => "heat-h2minus",
            Kind::LoglipAudit => "loglip-audit",
            Kind::BoundsAudit => "bounds-audit",
            Kind::TrajectoryUniqueness => "trajectory-uniqueness",
            Kind::Counterexamples => "counterexamples",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Keys without a default.
    fn required(&self) -> &'static [&'static str] {
        match self {
            Kind::TaylorGreenOracle | Kind::RoughRun | Kind::BoundsAudit | Kind::TrajectoryUniqueness => &["nu"],
            _ => &[],
        }
    }

    fn defaults(&self) -> Vec<(&'static str, String)> {
        let rough_run = || {
            vec![
                ("N", "128".to_string()),
                ("T", "1".into()),
                ("dt", "0.001".into()),
                ("init", "rough".into()),
                ("delta", "0.05".into()),
                ("seed", "1".into()),
                ("exponents", "0,1,1.25,1.5,1.75,2".into()),
                ("t_min_frac", "0.0001".into()),
                ("per_decade", "10".into()),
                ("snapshot_every", "10".into()),
                ("dealias", "two-thirds".into()),
                ("snapshots_on_disk", "ends".into()),
            ]
        };
        let mut d: Vec<(&'static str, String)> = match self {
            Kind::TaylorGreenOracle => vec![
                ("N", "64".into()),
                ("T", "1".into()),
                ("dt", "0.001".into()),
                ("exponents", "0,1,1.5,2".into()),
                ("t_min_frac", "0".into()),
                ("per_decade", "10".into()),
                ("snapshot_every", "100".into()),
                ("dealias", "two-thirds".into()),
                ("snapshots_on_disk", "ends".into()),
                ("tolerance", "1e-6".into()),
            ],
            Kind::RoughRun => {
                let mut v = rough_run();
                v.extend([
                    ("forcing", "zero".to_string()),
                    ("forcing_k", "1,0".into()),
                    ("forcing_amplitude", "0".into()),
                    ("forcing_omega", "0".into()),
                ]);
                v
            }
            Kind::BoundsAudit => {
                let mut v = rough_run();
                v.extend([
                    ("refine", "true".to_string()),
                    ("s_lo_list", "0.01,0.001,0.0001".into()),
                    ("alphas", "0.25,0.5".into()),
                    ("tracer_start", "1,2".into()),
                    ("tracer_dt", "0.01".into()),
                ]);
                v
            }
            Kind::TrajectoryUniqueness => {
                let mut v = rough_run();
                v.extend([
                    ("tracer_start", "1,2".to_string()),
                    ("eps_list", "0.001,0.0001,0.00001,0.000001,0.0000001".into()),
                    ("dt_list", "0.01,0.005,0.0025,0.00125,0.000625".into()),
                    ("oos_seed", "2".into()),
                    ("oos_start", "4,5".into()),
                    ("min_order", "3.5".into()),
                    ("max_ratio_spread", "10".into()),
                    ("envelope_pass", "0.95".into()),
                ]);
                v
            }
            Kind::LoglipAudit => vec![
                ("N", "128".into()),
                ("delta", "0.05".into()),
                ("seed", "1".into()),
                ("fields", "100".into()),
                ("pairs", "10000".into()),
                ("refine_N", "256".into()),
                ("refine_fields", "25".into()),
            ],
            Kind::HeatH2Minus => vec![
                ("N", "256".into()),
                ("T", "1".into()),
                ("slope", "1.05".into()),
                ("seed", "1".into()),
                ("r_list", "1,2,3".into()),
                ("s_lo_list", "0.01,0.001,0.0001".into()),
                ("cauchy_tol", "0.05".into()),
                ("gt_r", "0,2".into()),
                ("gt_times", "0.001,0.01,0.1,1,10".into()),
            ],
            Kind::Counterexamples => vec![
                ("t0", "1e-6".into()),
                ("t1", "0.3".into()),
                ("delta", "0.01".into()),
                ("area", format!("{}", 4.0 * PI * PI)),
                ("weak_T", "1".into()),
                ("lambdas", "0.5,1,10,100".into()),
                ("weak_s_list", "0.1,0.01,0.001,0.0001,0.00001,0.000001".into()),
                ("residual_tol", "1e-10".into()),
            ],
        };
        d.push(("threads", "0".into()));
        d.push(("output", self.name().into()));
        d
    }
}

/// Configuration error; the message names the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> CResult<T> {
    Err(ConfigError(msg.into()))
}

/// Initial velocity recipe.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    TaylorGreen,
    Rough { delta: f64, seed: u64 },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CResult<Self> {
        let mut raw = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("line {}: expected key = value", lineno + 1));
            };
            let (k, v) = (k.trim(), v.trim());
            if raw.insert(k.to_string(), v.to_string()).is_some() {
                return err(format!("duplicate key `{k}`"));
            }
        }
        let kind_name = raw
            .remove("kind")
            .ok_or_else(|| ConfigError("missing required field `kind`".into()))?;
        let kind = Kind::parse(&kind_name).ok_or_else(|| {
            let names: Vec<_> = Kind::ALL.iter().map(Kind::name).collect();
            ConfigError(format!("unknown kind `{kind_name}`; expected one of {}", names.join(", ")))
        })?;
        let mut values: BTreeMap<String, String> = kind
            .defaults()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        for key in kind.required() {
            if !raw.contains_key(*key) {
                return err(format!("missing required field `{key}` for kind {}", kind.name()));
            }
        }
        for (k, v) in raw {
            if !values.contains_key(&k) && !kind.required().contains(&k.as_str()) {
                return err(format!("unknown field `{k}` for kind {}", kind.name()));
            }
            values.insert(k, v);
        }
        let cfg = ExperimentConfig { kind, values };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Overrides one key (same checks as in a file).
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> CResult<()> {
        if !self.values.contains_key(key) {
            return err(format!("unknown field `{key}` for kind {}", self.kind.name()));
        }
        self.values.insert(key.into(), value.into());
        self.validate()
    }

    /// Fully defaulted `key = value` listing.
    pub fn echo(&self) -> String {
        let mut out = format!("kind = {}\n", self.kind.name());
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn str(&self, key: &str) -> CResult<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ConfigError(format!("missing required field `{key}`")))
    }

    pub fn f64(&self, key: &str) -> CResult<f64> {
        let v = self.str(key)?;
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => err(format!("field `{key}`: `{v}` is not a finite number")),
        }
    }

    pub fn positive(&self, key: &str) -> CResult<f64> {
        let x = self.f64(key)?;
        if x > 0.0 {
            Ok(x)
        } else {
            err(format!("field `{key}` must be positive, got {x}"))
        }
    }

    pub fn usize(&self, key: &str) -> CResult<usize> {
        let v = self.str(key)?;
        v.parse()
            .or_else(|_| err(format!("field `{key}`: `{v}` is not a nonnegative integer")))
    }

    pub fn u64(&self, key: &str) -> CResult<u64> {
        let v = self.str(key)?;
        v.parse()
            .or_else(|_| err(format!("field `{key}`: `{v}` is not a nonnegative integer")))
    }

    pub fn bool(&self, key: &str) -> CResult<bool> {
        match self.str(key)? {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => err(format!("field `{key}`: `{v}` is not a boolean")),
        }
    }

    pub fn list(&self, key: &str) -> CResult<Vec<f64>> {
        let v = self.str(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| match s.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => err(format!("field `{key}`: `{}` is not a finite number", s.trim())),
            })
            .collect()
    }

    pub fn point(&self, key: &str) -> CResult<[f64; 2]> {
        match self.list(key)?.as_slice() {
            &[a, b] => Ok([a, b]),
            _ => err(format!("field `{key}` needs two comma-separated numbers")),
        }
    }

    pub fn dealias(&self) -> CResult<Dealias> {
        let v = self.str("dealias")?;
        Dealias::parse(v).ok_or_else(|| ConfigError(format!("field `dealias`: unknown rule `{v}`")))
    }

    pub fn snapshots_on_disk(&self) -> CResult<SnapshotsOnDisk> {
        let v = self.str("snapshots_on_disk")?;
        SnapshotsOnDisk::parse(v)
            .ok_or_else(|| ConfigError(format!("field `snapshots_on_disk`: expected all, ends or none, got `{v}`")))
    }

    pub fn init(&self) -> CResult<InitialData> {
        match self.str("init")? {
            "taylor-green" => Ok(InitialData::TaylorGreen),
            "rough" => Ok(InitialData::Rough {
                delta: self.f64("delta")?,
                seed: self.u64("seed")?,
            }),
            v if v.starts_with("file:") => Ok(InitialData::File(PathBuf::from(&v[5..]))),
            v => err(format!(
                "field `init`: expected taylor-green, rough or file:<path>, got `{v}`"
            )),
        }
    }

    /// Body force; only `rough-run` exposes the forcing keys.
    pub fn forcing(&self) -> CResult<Forcing> {
        if !self.has("forcing") {
            return Ok(Forcing::Zero);
        }
        match self.str("forcing")? {
            "zero" => Ok(Forcing::Zero),
            "oscillating" => {
                let k = self.point("forcing_k")?;
                if k.iter().any(|x| x.fract() != 0.0) || k == [0.0, 0.0] {
                    return err("field `forcing_k` must be a nonzero integer wavevector");
                }
                Ok(Forcing::Oscillating {
                    k: [k[0] as i64, k[1] as i64],
                    amplitude: self.f64("forcing_amplitude")?,
                    omega: self.f64("forcing_omega")?,
                })
            }
            v => err(format!("field `forcing`: expected zero or oscillating, got `{v}`")),
        }
    }

    pub fn output(&self) -> CResult<PathBuf> {
        Ok(PathBuf::from(self.str("output")?))
    }

    /// Parses every key the kind uses, so bad values surface before any work.
    fn validate(&self) -> CResult<()> {
        self.usize("threads")?;
        self.output()?;
        let has = |k: &str| self.values.contains_key(k);
        for key in ["nu", "T", "dt", "slope", "tolerance", "t1", "area", "weak_T", "residual_tol", "cauchy_tol"] {
            if has(key) {
                self.positive(key)?;
            }
        }
        if has("N") {
            let n = self.usize("N")?;
            ptraj_core::spectral::WavenumberGrid::new(n)
                .map_err(|e| ConfigError(format!("field `N`: {e}")))?;
        }
        if has("refine_N") {
            ptraj_core::spectral::WavenumberGrid::new(self.usize("refine_N")?)
                .map_err(|e| ConfigError(format!("field `refine_N`: {e}")))?;
        }
        for key in ["seed", "oos_seed"] {
            if has(key) {
                self.u64(key)?;
            }
        }
        for key in ["per_decade", "snapshot_every", "fields", "pairs", "refine_fields"] {
            if has(key) {
                self.usize(key)?;
            }
        }
        for key in [
            "exponents", "r_list", "s_lo_list", "eps_list", "dt_list", "alphas", "gt_r", "gt_times", "lambdas",
            "weak_s_list",
        ] {
            if has(key) {
                self.list(key)?;
            }
        }
        for key in ["tracer_start", "oos_start"] {
            if has(key) {
                self.point(key)?;
            }
        }
        for key in ["t_min_frac", "delta", "t0", "min_order", "max_ratio_spread", "envelope_pass", "tracer_dt"] {
            if has(key) {
                self.f64(key)?;
            }
        }
        if has("refine") {
            self.bool("refine")?;
        }
        if has("dealias") {
            self.dealias()?;
        }
        if has("snapshots_on_disk") {
            self.snapshots_on_disk()?;
        }
        if has("init") {
            self.init()?;
        }
        self.forcing()?;
        if has("t_min_frac") {
            let f = self.f64("t_min_frac")?;
            if !(0.0..1.0).contains(&f) {
                return err(format!("field `t_min_frac` must lie in [0, 1), got {f}"));
            }
            if f > 0.0 && self.usize("per_decade")? == 0 {
                return err("field `per_decade` must be positive");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_nu_is_named() {
        let e = ExperimentConfig::parse("kind = taylor-green-oracle\nN = 32\n").unwrap_err();
        assert!(e.0.contains("`nu`"), "{e}");
    }

    #[test]
    fn missing_kind_and_unknown_keys() {
        assert!(ExperimentConfig::parse("nu = 1").unwrap_err().0.contains("`kind`"));
        let e = ExperimentConfig::parse("kind = counterexamples\nbogus = 1").unwrap_err();
        assert!(e.0.contains("`bogus`"));
        let e = ExperimentConfig::parse("kind = nope").unwrap_err();
        assert!(e.0.contains("unknown kind"));
    }

    #[test]
    fn bad_values_are_named() {
        let e = ExperimentConfig::parse("kind = rough-run\nnu = 0.1\nN = 33").unwrap_err();
        assert!(e.0.contains("`N`"));
        let e = ExperimentConfig::parse("kind = rough-run\nnu = -1").unwrap_err();
        assert!(e.0.contains("`nu`"));
        let e = ExperimentConfig::parse("kind = heat-h2minus\nr_list = 1,x").unwrap_err();
        assert!(e.0.contains("`r_list`"));
    }

    #[test]
    fn echo_round_trips() {
        for kind in Kind::ALL {
            let text = format!("kind = {}\nnu = 0.05 # viscosity\n", kind.name());
            let text = if kind.required().is_empty() {
                format!("kind = {}\n", kind.name())
            } else {
                text
            };
            let cfg = ExperimentConfig::parse(&text).unwrap();
            let back = ExperimentConfig::parse(&cfg.echo()).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn typed_access() {
        let cfg = ExperimentConfig::parse("kind = trajectory-uniqueness\nnu = 0.05\ninit = rough").unwrap();
        assert_eq!(cfg.list("eps_list").unwrap().len(), 5);
        assert_eq!(cfg.point("tracer_start").unwrap(), [1.0, 2.0]);
        assert_eq!(cfg.init().unwrap(), InitialData::Rough { delta: 0.05, seed: 1 });
        let f = ExperimentConfig::parse("kind = rough-run\nnu = 1\ninit = file:/tmp/x.csv").unwrap();
        assert_eq!(f.init().unwrap(), InitialData::File("/tmp/x.csv".into()));
    }
}
