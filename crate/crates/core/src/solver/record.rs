//! Run records and their on-disk layout.
//!
//! ```text
//! <dir>/config.txt          key=value echo of the solver configuration
//! <dir>/steps.csv           t,l2,h1 per step
//! <dir>/snapshots/NNNNN.csv spectral-field files stamped with their time
//! <dir>/forcing.csv         steady forcing field, when present
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dealias, Forcing, GeometricSnapshots, SolverConfig};
use crate::spectral::{io, SpectralVelocity, WavenumberGrid};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub u: SpectralVelocity,
}

/// Scalars logged after every step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub t: f64,
    /// `‖u‖`
    pub l2: f64,
    /// `‖Du‖`
    pub h1: f64,
    /// `(f, u)`; zero without forcing. Not persisted.
    pub work: f64,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: SolverConfig,
    pub grid: WavenumberGrid,
    pub snapshots: Vec<Snapshot>,
    pub log: Vec<StepLog>,
    /// Worker threads available to the batch kernels during the run.
    pub threads: usize,
}

/// Which snapshots [`RunRecord::write_dir`] persists.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotsOnDisk {
    All,
    /// First and last only.
    Ends,
    None,
}

impl SnapshotsOnDisk {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(Self::All),
            "ends" => Some(Self::Ends),
            "none" => Some(Self::None),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::All => "all",
            Self::Ends => "ends",
            Self::None => "none",
        }
    }
}

impl RunRecord {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn final_state(&self) -> Option<&SpectralVelocity> {
        self.snapshots.last().map(|s| &s.u)
    }

    /// `‖u(T)‖² − ‖u(0)‖² + 2ν∫‖Du‖² − 2∫(f,u)` over the step log, using
    /// composite Simpson when the log is uniform with an even number of
    /// intervals and the trapezoid rule otherwise.
    pub fn energy_budget_residual(&self) -> f64 {
        let log = &self.log;
        if log.len() < 2 {
            return 0.0;
        }
        let nu = self.config.nu;
        let integrand: Vec<f64> = log
            .iter()
            .map(|s| 2.0 * nu * s.h1 * s.h1 - 2.0 * s.work)
            .collect();
        let times: Vec<f64> = log.iter().map(|s| s.t).collect();
        let first = log[0].l2;
        let last = log[log.len() - 1].l2;
        last * last - first * first + integrate(&times, &integrand)
    }

    /// Config echo as `key=value` lines.
    pub fn config_echo(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let g = c.geometric;
        writeln!(out, "N={}", self.grid.n()).unwrap();
        writeln!(out, "nu={}", c.nu).unwrap();
        writeln!(out, "dt={}", c.dt).unwrap();
        writeln!(out, "T={}", c.t_final).unwrap();
        writeln!(out, "dealias={}", c.dealias.name()).unwrap();
        match &c.forcing {
            Forcing::Oscillating {
                k,
                amplitude,
                omega,
            } => writeln!(
                out,
                "forcing=oscillating\nforcing_k={},{}\nforcing_amplitude={amplitude}\nforcing_omega={omega}",
                k[0], k[1]
            )
            .unwrap(),
            f => writeln!(out, "forcing={}", f.name()).unwrap(),
        }
        writeln!(out, "forcing_hypothesis={}", c.forcing.hypothesis()).unwrap();
        writeln!(out, "snapshot_every={}", c.snapshot_every).unwrap();
        match g {
            Some(g) => {
                writeln!(out, "t_min_frac={}", g.t_min_frac).unwrap();
                writeln!(out, "per_decade={}", g.per_decade).unwrap();
            }
            None => writeln!(out, "t_min_frac=none").unwrap(),
        }
        writeln!(out, "nonlinear={}", c.nonlinear).unwrap();
        writeln!(out, "threads={}", self.threads).unwrap();
        out
    }

    pub fn steps_csv(&self) -> String {
        let mut out = String::from("t,l2,h1\n");
        for s in &self.log {
            writeln!(out, "{},{},{}", s.t, s.l2, s.h1).unwrap();
        }
        out
    }

    pub fn write_dir(&self, dir: &Path, which: SnapshotsOnDisk) -> Result<()> {
        fs::create_dir_all(dir.join("snapshots"))?;
        fs::write(dir.join("config.txt"), self.config_echo())?;
        fs::write(dir.join("steps.csv"), self.steps_csv())?;
        if let Forcing::Steady(f) = &self.config.forcing {
            io::write_field(&dir.join("forcing.csv"), f, None)?;
        }
        let last = self.snapshots.len().saturating_sub(1);
        for (i, s) in self.snapshots.iter().enumerate() {
            let keep = match which {
                SnapshotsOnDisk::All => true,
                SnapshotsOnDisk::Ends => i == 0 || i == last,
                SnapshotsOnDisk::None => false,
            };
            if keep {
                io::write_field(&dir.join(format!("snapshots/{i:05}.csv")), &s.u, Some(s.t))?;
            }
        }
        Ok(())
    }

    /// Loads a directory written by [`RunRecord::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let cfg_path = dir.join("config.txt");
        let text = fs::read_to_string(&cfg_path)?;
        let bad = |reason: String| Error::Format {
            path: cfg_path.clone(),
            reason,
        };
        let kv: std::collections::HashMap<&str, &str> = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        let num = |k: &str| -> Result<f64> {
            kv.get(k)
                .ok_or_else(|| bad(format!("missing `{k}`")))?
                .parse::<f64>()
                .map_err(|e| bad(format!("`{k}`: {e}")))
        };
        let grid = WavenumberGrid::new(num("N")? as usize)?;
        let forcing = match kv.get("forcing").copied() {
            Some("zero") | None => Forcing::Zero,
            Some("steady") => {
                let (f, _) = io::read_field(&dir.join("forcing.csv"))?;
                Forcing::Steady(SpectralVelocity::try_from_field(f, 1e-10)?)
            }
            Some("oscillating") => {
                let k: Vec<i64> = kv
                    .get("forcing_k")
                    .ok_or_else(|| bad("missing `forcing_k`".into()))?
                    .split(',')
                    .map(|s| s.trim().parse::<i64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| bad(e.to_string()))?;
                if k.len() != 2 {
                    return Err(bad("`forcing_k` needs two integers".into()));
                }
                Forcing::Oscillating {
                    k: [k[0], k[1]],
                    amplitude: num("forcing_amplitude")?,
                    omega: num("forcing_omega")?,
                }
            }
            Some(other) => return Err(bad(format!("unknown forcing `{other}`"))),
        };
        let geometric = match kv.get("t_min_frac").copied() {
            None | Some("none") => None,
            Some(_) => Some(GeometricSnapshots {
                t_min_frac: num("t_min_frac")?,
                per_decade: num("per_decade")? as usize,
            }),
        };
        let config = SolverConfig {
            nu: num("nu")?,
            dt: num("dt")?,
            t_final: num("T")?,
            dealias: kv
                .get("dealias")
                .and_then(|s| Dealias::parse(s))
                .ok_or_else(|| bad("bad `dealias`".into()))?,
            forcing,
            snapshot_every: num("snapshot_every")? as usize,
            geometric,
            nonlinear: kv.get("nonlinear").map_or(true, |v| *v == "true"),
        };
        let threads = num("threads").map(|t| t as usize).unwrap_or(1);

        let steps_path = dir.join("steps.csv");
        let steps = fs::read_to_string(&steps_path)?;
        let mut log = Vec::new();
        for line in steps.lines().skip(1).filter(|l| !l.is_empty()) {
            let v: Vec<f64> = line
                .split(',')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e: std::num::ParseFloatError| Error::Format {
                    path: steps_path.clone(),
                    reason: e.to_string(),
                })?;
            if v.len() != 3 {
                return Err(Error::Format {
                    path: steps_path.clone(),
                    reason: "expected t,l2,h1".into(),
                });
            }
            log.push(StepLog {
                t: v[0],
                l2: v[1],
                h1: v[2],
                work: 0.0,
            });
        }

        let mut files: Vec<_> = fs::read_dir(dir.join("snapshots"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        let mut snapshots = Vec::with_capacity(files.len());
        for p in files {
            let (f, t) = io::read_field(&p)?;
            let t = t.ok_or_else(|| Error::Format {
                path: p.clone(),
                reason: "snapshot lacks a time stamp".into(),
            })?;
            snapshots.push(Snapshot {
                t,
                u: SpectralVelocity::try_from_field(f, 1e-10)?,
            });
        }
        Ok(RunRecord {
            config,
            grid,
            snapshots,
            log,
            threads,
        })
    }
}

fn integrate(t: &[f64], f: &[f64]) -> f64 {
    let n = t.len() - 1;
    let h = t[1] - t[0];
    let uniform = t
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs());
    if uniform && n % 2 == 0 {
        let mut acc = f[0] + f[n];
        for (i, v) in f.iter().enumerate().take(n).skip(1) {
            acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        acc * h / 3.0
    } else {
        t.windows(2)
            .zip(f.windows(2))
            .map(|(tw, fw)| 0.5 * (tw[1] - tw[0]) * (fw[0] + fw[1]))
            .sum()
    }
}
