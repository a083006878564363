//! `summary.json`: assertions, bound reports, scalar metrics and the config.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use ptraj_core::diagnostics::BoundReport;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A float that survives JSON: non-finite values are written as the strings
/// `"inf"`, `"-inf"` and `"nan"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let x = self.0;
        if x.is_finite() {
            s.serialize_f64(x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(x) => Ok(Num(x)),
            Raw::S(s) => match s.as_str() {
                "nan" => Ok(Num(f64::NAN)),
                "inf" => Ok(Num(f64::INFINITY)),
                "-inf" => Ok(Num(f64::NEG_INFINITY)),
                _ => Err(serde::de::Error::custom(format!("not a number: {s}"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Op {
    /// NaN never satisfies a comparison.
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Op::Lt => value < threshold,
            Op::Le => value <= threshold,
            Op::Ge => value >= threshold,
            Op::Gt => value > threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Ge => ">=",
            Op::Gt => ">",
        }
    }
}

/// A hard check `value op threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub value: Num,
    pub op: Op,
    pub threshold: Num,
    pub pass: bool,
}

impl Assertion {
    pub fn new(name: impl Into<String>, value: f64, op: Op, threshold: f64) -> Self {
        Assertion {
            name: name.into(),
            value: Num(value),
            op,
            threshold: Num(threshold),
            pass: op.holds(value, threshold),
        }
    }

    /// A yes/no fact, stored as `value ∈ {0, 1} >= 1`.
    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Assertion::new(name, if ok { 1.0 } else { 0.0 }, Op::Ge, 1.0)
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} {} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            short(self.value.0),
            self.op.symbol(),
            short(self.threshold.0)
        )
    }
}

/// Human-readable number: plain decimals for moderate magnitudes.
pub fn short(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-3..1e6).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub name: String,
    pub constant: Num,
    pub sup_residual: Num,
    pub arg: Num,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub dt: Option<Num>,
    pub verdict: String,
    pub extras: BTreeMap<String, Num>,
}

impl From<&BoundReport> for BoundEntry {
    fn from(r: &BoundReport) -> Self {
        BoundEntry {
            name: r.name.clone(),
            constant: Num(r.constant),
            sup_residual: Num(r.sup_residual),
            arg: Num(r.arg),
            n: r.n,
            dt: r.dt.map(Num),
            verdict: r.verdict.name().to_string(),
            extras: r.extras.iter().map(|(k, v)| (k.clone(), Num(*v))).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    AssertionFailed,
    BlowUp,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::AssertionFailed => 1,
            Status::BlowUp => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: String,
    pub status: Status,
    pub assertions: Vec<Assertion>,
    pub bounds: Vec<BoundEntry>,
    pub metrics: BTreeMap<String, Num>,
    pub threads: usize,
    pub config: BTreeMap<String, String>,
    /// Files written next to `summary.json`, relative to the artifact directory.
    pub files: Vec<String>,
    pub error: Option<String>,
}

impl Summary {
    pub fn new(kind: &str, config: BTreeMap<String, String>) -> Self {
        Summary {
            kind: kind.to_string(),
            status: Status::Pass,
            assertions: Vec::new(),
            bounds: Vec::new(),
            metrics: BTreeMap::new(),
            threads: ptraj_core::exec::threads(),
            config,
            files: Vec::new(),
            error: None,
        }
    }

    pub fn assert(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), Num(value));
    }

    pub fn bound(&mut self, r: &BoundReport) {
        self.bounds.push(r.into());
    }

    pub fn all_pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }

    pub fn get_metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).map(|n| n.0)
    }

    /// Sets the status from the assertions unless a blow-up was recorded.
    pub fn finish(&mut self) {
        if self.status != Status::BlowUp {
            self.status = if self.all_pass() {
                Status::Pass
            } else {
                Status::AssertionFailed
            };
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("malformed {}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_numbers_round_trip() {
        let mut s = Summary::new("counterexamples", BTreeMap::new());
        s.metric("a", f64::INFINITY);
        s.metric("b", f64::NAN);
        s.metric("c", 0.1 + 0.2);
        s.assert(Assertion::new("x", f64::NEG_INFINITY, Op::Lt, 0.0));
        let back: Summary = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(back.get_metric("a"), Some(f64::INFINITY));
        assert!(back.get_metric("b").unwrap().is_nan());
        assert_eq!(back.get_metric("c"), Some(0.1 + 0.2));
        assert!(back.assertions[0].pass);
    }

    #[test]
    fn nan_fails_every_op() {
        for op in [Op::Lt, Op::Le, Op::Ge, Op::Gt] {
            assert!(!op.holds(f64::NAN, 1.0));
        }
        assert!(!Assertion::flag("f", false).pass);
    }

    #[test]
    fn status_follows_assertions() {
        let mut s = Summary::new("k", BTreeMap::new());
        s.assert(Assertion::new("ok", 1.0, Op::Le, 1.0));
        s.finish();
        assert_eq!(s.status.exit_code(), 0);
        s.assert(Assertion::new("bad", 2.0, Op::Lt, 1.0));
        s.finish();
        assert_eq!(s.status.exit_code(), 1);
        s.status = Status::BlowUp;
        s.finish();
        assert_eq!(s.status.exit_code(), 3);
    }
}
