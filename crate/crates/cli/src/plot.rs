//! Static SVG plots from an artifact directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use ptraj_core::diagnostics::gt_log;

use crate::csv::Table;

/// CSVs that [`plot_emit`] knows how to draw.
pub const PLOTTABLE: [&str; 7] = [
    "norms.csv",
    "bounds.csv",
    "separations.csv",
    "gt.csv",
    "h2minus.csv",
    "oracle.csv",
    "counterexamples.csv",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotError(pub String);

impl fmt::Display for PlotError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for PlotError {}

struct Curve {
    label: String,
    points: Vec<(f64, f64)>,
    dashed: bool,
}

impl Curve {
    fn solid(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Curve {
            label: label.into(),
            points,
            dashed: false,
        }
    }
}

struct Axes<'a> {
    title: &'a str,
    x: &'a str,
    y: &'a str,
    log_x: bool,
    log_y: bool,
}

fn range(vals: impl Iterator<Item = f64>, log: bool) -> Option<(f64, f64)> {
    let (lo, hi) = vals
        .filter(|v| v.is_finite() && (!log || *v > 0.0))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !(lo <= hi) {
        return None;
    }
    Some(if lo == hi {
        if log {
            (lo / 2.0, hi * 2.0)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    } else if log {
        (lo, hi)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    })
}

fn draw(path: &Path, axes: &Axes, curves: &[Curve]) -> Result<(), PlotError> {
    let keep = |c: &Curve| -> Vec<(f64, f64)> {
        c.points
            .iter()
            .copied()
            .filter(|&(x, y)| x.is_finite() && y.is_finite() && (!axes.log_x || x > 0.0) && (!axes.log_y || y > 0.0))
            .collect()
    };
    let curves: Vec<(&Curve, Vec<(f64, f64)>)> = curves.iter().map(|c| (c, keep(c))).filter(|(_, p)| !p.is_empty()).collect();
    let xs = range(curves.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)), axes.log_x);
    let ys = range(curves.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)), axes.log_y);
    let (Some(xr), Some(yr)) = (xs, ys) else {
        return Err(PlotError(format!("{}: nothing to plot", path.display())));
    };
    let err = |e: &dyn fmt::Display| PlotError(format!("{}: {e}", path.display()));
    let root = SVGBackend::new(path, (900, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    macro_rules! body {
        ($chart:expr) => {{
            let mut chart = $chart.map_err(|e| err(&e))?;
            chart
                .configure_mesh()
                .x_desc(axes.x)
                .y_desc(axes.y)
                .draw()
                .map_err(|e| err(&e))?;
            for (i, (c, pts)) in curves.iter().enumerate() {
                let color = Palette99::pick(i).to_rgba();
                let style = ShapeStyle::from(&color).stroke_width(2);
                let series = if c.dashed {
                    chart.draw_series(DashedLineSeries::new(pts.iter().copied(), 6, 4, style))
                } else {
                    chart.draw_series(LineSeries::new(pts.iter().copied(), style))
                };
                series
                    .map_err(|e| err(&e))?
                    .label(c.label.clone())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(|e| err(&e))?;
        }};
    }
    let builder = || {
        let mut b = ChartBuilder::on(&root);
        b.caption(axes.title, ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(45)
            .y_label_area_size(70);
        b
    };
    match (axes.log_x, axes.log_y) {
        (true, true) => body!(builder().build_cartesian_2d((xr.0..xr.1).log_scale(), (yr.0..yr.1).log_scale())),
        (true, false) => body!(builder().build_cartesian_2d((xr.0..xr.1).log_scale(), yr.0..yr.1)),
        (false, true) => body!(builder().build_cartesian_2d(xr.0..xr.1, (yr.0..yr.1).log_scale())),
        (false, false) => body!(builder().build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)),
    }
    root.present().map_err(|e| err(&e))?;
    Ok(())
}

fn file_stem(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
        .collect();
    while s.contains("__") {
        s = s.replace("__", "_");
    }
    s.trim_matches('_').to_string()
}

/// `(s, w)` from a bound named `sup t^{w} D^{s}`.
fn parse_sup_name(name: &str) -> Option<(f64, f64)> {
    let rest = name.strip_prefix("sup t^")?;
    let (w, series) = rest.split_once(' ')?;
    let s = series.strip_prefix("D^")?;
    Some((s.parse().ok()?, w.parse().ok()?))
}

/// Series name and power from a bound named `int D^{s}` or `int D^{s}^{p}`.
fn parse_int_name(name: &str) -> Option<(String, f64)> {
    let rest = name.strip_prefix("int D^")?;
    match rest.split_once('^') {
        Some((s, p)) => Some((format!("D^{s}"), p.parse().ok()?)),
        None => Some((format!("D^{rest}"), 1.0)),
    }
}

fn series_points(norms: &Table, col: &str, f: impl Fn(f64, f64) -> f64) -> Option<Vec<(f64, f64)>> {
    let t = norms.column("t")?;
    let v = norms.column(col)?;
    Some(t.iter().zip(&v).map(|(&t, &v)| (t, f(t, v))).collect())
}

fn plot_norms(dir: &Path, norms: &Table, out: &mut Vec<PathBuf>) -> Result<(), PlotError> {
    let curves: Vec<Curve> = norms
        .header
        .iter()
        .filter(|h| h.as_str() != "t")
        .filter_map(|h| series_points(norms, h, |t, v| t * v).map(|p| Curve::solid(format!("t·‖{h}u‖"), p)))
        .collect();
    let path = dir.join("norms.svg");
    draw(
        &path,
        &Axes {
            title: "t·‖D^s u(t)‖",
            x: "t",
            y: "t·‖D^s u‖",
            log_x: true,
            log_y: true,
        },
        &curves,
    )?;
    out.push(path);
    Ok(())
}

fn plot_bounds(dir: &Path, bounds: &Table, norms: Option<&Table>, out: &mut Vec<PathBuf>) -> Result<(), PlotError> {
    let names = bounds.text_column("bound").unwrap_or_default();
    let constants = bounds.column("constant").unwrap_or_default();
    let ns = bounds.text_column("N").unwrap_or_default();
    for (i, name) in names.iter().enumerate() {
        let tag = ns.get(i).filter(|s| !s.is_empty()).map_or(String::new(), |n| format!("_N{n}"));
        let path = dir.join(format!("bound_{:02}_{}{}.svg", i, file_stem(name), tag));
        let c = constants.get(i).copied().unwrap_or(f64::NAN);
        let drawn = if let (Some((s, w)), Some(norms)) = (parse_sup_name(name), norms) {
            let Some(pts) = series_points(norms, &format!("D^{s}"), |t, v| t.powf(w) * v) else {
                continue;
            };
            let (lo, hi) = range(pts.iter().map(|p| p.0), true).unwrap_or((1e-4, 1.0));
            let level = Curve {
                label: format!("constant {c:.4e}"),
                points: vec![(lo, c), (hi, c)],
                dashed: true,
            };
            draw(
                &path,
                &Axes {
                    title: name,
                    x: "t",
                    y: "weighted norm",
                    log_x: true,
                    log_y: true,
                },
                &[Curve::solid(name.clone(), pts), level],
            )
        } else if let (Some((col, p)), Some(norms)) = (parse_int_name(name), norms) {
            let Some(pts) = series_points(norms, &col, |_, v| v.powf(p)) else {
                continue;
            };
            // ∫_s^T as a function of the cutoff s (trapezoid from the right).
            let mut acc = 0.0;
            let mut tail = Vec::with_capacity(pts.len());
            for w in pts.windows(2).rev() {
                acc += 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
                tail.push((w[0].0, acc));
            }
            draw(
                &path,
                &Axes {
                    title: name,
                    x: "cutoff s",
                    y: "integral from s to T",
                    log_x: true,
                    log_y: false,
                },
                &[Curve::solid(name.clone(), tail)],
            )
        } else {
            let args = bounds.column("sup_residual").unwrap_or_default();
            let r = args.get(i).copied().unwrap_or(f64::NAN);
            draw(
                &path,
                &Axes {
                    title: name,
                    x: "quantity",
                    y: "value",
                    log_x: false,
                    log_y: false,
                },
                &[
                    Curve::solid(format!("constant {c:.4e}"), vec![(0.0, c), (1.0, c)]),
                    Curve::solid(format!("observed {:.4e}", c + r), vec![(0.0, c + r), (1.0, c + r)]),
                ],
            )
        };
        drawn?;
        out.push(path);
    }
    Ok(())
}

fn plot_separations(dir: &Path, sep: &Table, out: &mut Vec<PathBuf>) -> Result<(), PlotError> {
    let (Some(pair), Some(t), Some(eta), Some(env)) =
        (sep.column("pair"), sep.column("t"), sep.column("eta"), sep.column("envelope"))
    else {
        return Err(PlotError("separations.csv lacks pair,t,eta,envelope".into()));
    };
    let mut curves = Vec::new();
    let mut ids: Vec<i64> = pair.iter().map(|&p| p as i64).collect();
    ids.dedup();
    for id in ids {
        let rows: Vec<usize> = (0..pair.len()).filter(|&i| pair[i] as i64 == id).collect();
        curves.push(Curve::solid(format!("η pair {id}"), rows.iter().map(|&i| (t[i], eta[i])).collect()));
        curves.push(Curve {
            label: format!("envelope pair {id}"),
            points: rows.iter().map(|&i| (t[i], env[i])).collect(),
            dashed: true,
        });
    }
    let path = dir.join("separations.svg");
    draw(
        &path,
        &Axes {
            title: "separation η(t) and envelope",
            x: "t",
            y: "η",
            log_x: true,
            log_y: true,
        },
        &curves,
    )?;
    out.push(path);
    Ok(())
}

fn plot_gt(dir: &Path, gt: &Table, out: &mut Vec<PathBuf>) -> Result<(), PlotError> {
    let (Some(r), Some(t), Some(xs)) = (gt.column("r"), gt.column("t"), gt.column("x_star")) else {
        return Err(PlotError("gt.csv lacks r,t,x_star".into()));
    };
    let mut curves = Vec::new();
    for i in 0..r.len() {
        let (r, t, x_star) = (r[i], t[i], xs[i]);
        let peak = gt_log(r, t, x_star);
        let hi = (1.0 + 20.0 / t).ln();
        let lo = (1e-3 * (1.0f64).min(1.0 / t)).ln();
        let pts = (0..=400)
            .map(|j| {
                let y = (lo + (hi - lo) * j as f64 / 400.0).exp();
                (y, (gt_log(r, t, y - 1.0) - peak).exp())
            })
            .collect();
        curves.push(Curve::solid(format!("r={r}, t={t}"), pts));
    }
    let path = dir.join("gt.svg");
    draw(
        &path,
        &Axes {
            title: "g_t(x) / max g_t",
            x: "1 + x",
            y: "normalized g_t",
            log_x: true,
            log_y: false,
        },
        &curves,
    )?;
    out.push(path);
    Ok(())
}

fn grouped(table: &Table, key: &str, x: &str, y: &str) -> Option<Vec<(String, Vec<(f64, f64)>)>> {
    let k = table.text_column(key)?;
    let (xs, ys) = (table.column(x)?, table.column(y)?);
    let mut groups: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for i in 0..k.len() {
        match groups.iter_mut().find(|g| g.0 == k[i]) {
            Some(g) => g.1.push((xs[i], ys[i])),
            None => groups.push((k[i].clone(), vec![(xs[i], ys[i])])),
        }
    }
    for g in &mut groups {
        g.1.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Some(groups)
}

fn plot_grouped(
    dir: &Path,
    table: &Table,
    (key, x, y): (&str, &str, &str),
    file: &str,
    axes: Axes,
    out: &mut Vec<PathBuf>,
) -> Result<(), PlotError> {
    let groups = grouped(table, key, x, y).ok_or_else(|| PlotError(format!("{file}: missing columns {key},{x},{y}")))?;
    let curves: Vec<Curve> = groups
        .into_iter()
        .map(|(k, p)| Curve::solid(format!("{key}={k}"), p))
        .collect();
    let path = dir.join(file);
    draw(&path, &axes, &curves)?;
    out.push(path);
    Ok(())
}

/// Writes every plot the directory's CSVs support and returns the paths.
pub fn plot_emit(dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let read = |name: &str| -> Result<Option<Table>, PlotError> {
        let p = dir.join(name);
        if !p.is_file() {
            return Ok(None);
        }
        let text = fs::read_to_string(&p).map_err(|e| PlotError(format!("{}: {e}", p.display())))?;
        Table::parse(&text).map(Some).map_err(|e| PlotError(format!("{}: {e}", p.display())))
    };
    let tables: Vec<Option<Table>> = PLOTTABLE.iter().map(|n| read(n)).collect::<Result<_, _>>()?;
    if tables.iter().all(Option::is_none) {
        return Err(PlotError(format!(
            "{} has no plottable CSVs; expected one of: {}",
            dir.display(),
            PLOTTABLE.join(", ")
        )));
    }
    let [norms, bounds, sep, gt, h2, oracle, cx] = <[Option<Table>; 7]>::try_from(tables).ok().unwrap();
    let mut out = Vec::new();
    if let Some(n) = &norms {
        plot_norms(dir, n, &mut out)?;
    }
    if let Some(b) = &bounds {
        plot_bounds(dir, b, norms.as_ref(), &mut out)?;
    }
    if let Some(s) = &sep {
        plot_separations(dir, s, &mut out)?;
    }
    if let Some(g) = &gt {
        plot_gt(dir, g, &mut out)?;
    }
    if let Some(h) = &h2 {
        plot_grouped(
            dir,
            h,
            ("r", "s_lo", "integral"),
            "h2minus.svg",
            Axes {
                title: "heat H^{2-}_r integrals",
                x: "s_lo",
                y: "integral",
                log_x: true,
                log_y: true,
            },
            &mut out,
        )?;
    }
    if let Some(o) = &oracle {
        let curves = [
            series_points(o, "max_error", |_, v| v).map(|p| Curve::solid("max velocity error", p)),
            series_points(o, "energy_rel_error", |_, v| v).map(|p| Curve::solid("relative energy error", p)),
        ];
        let curves: Vec<Curve> = curves.into_iter().flatten().collect();
        let path = dir.join("oracle.svg");
        draw(
            &path,
            &Axes {
                title: "Taylor–Green oracle errors",
                x: "t",
                y: "error",
                log_x: false,
                log_y: true,
            },
            &curves,
        )?;
        out.push(path);
    }
    if let Some(c) = &cx {
        plot_grouped(
            dir,
            c,
            ("branch", "t", "x"),
            "counterexamples.svg",
            Axes {
                title: "scalar ODE branches",
                x: "t",
                y: "X(t)",
                log_x: true,
                log_y: false,
            },
            &mut out,
        )?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_names_parse() {
        assert_eq!(parse_sup_name("sup t^0.75 D^1.25"), Some((1.25, 0.75)));
        assert_eq!(parse_sup_name("loglip"), None);
        assert_eq!(parse_int_name("int D^1.5"), Some(("D^1.5".into(), 1.0)));
        let (c, p) = parse_int_name("int D^1.5^1.2360679774997898").unwrap();
        assert_eq!(c, "D^1.5");
        assert!((p - 1.2360679774997898).abs() < 1e-15);
    }

    #[test]
    fn empty_directory_lists_expected_files() {
        let d = tempfile::tempdir().unwrap();
        let e = plot_emit(d.path()).unwrap_err();
        for f in PLOTTABLE {
            assert!(e.0.contains(f), "{e}");
        }
    }

    #[test]
    fn draws_small_tables() {
        let d = tempfile::tempdir().unwrap();
        fs::write(d.path().join("norms.csv"), "t,D^1.5\n0,1\n0.1,2\n1,3\n").unwrap();
        fs::write(
            d.path().join("bounds.csv"),
            "bound,constant,sup_residual,verdict,N,dt\nsup t^1 D^1.5,3,0,holds-at-desk-scale,16,0.01\nloglip,0.5,0,holds-at-desk-scale,16,\n",
        )
        .unwrap();
        fs::write(d.path().join("gt.csv"), "r,t,x_star,value\n0,1,0,1\n").unwrap();
        let files = plot_emit(d.path()).unwrap();
        assert_eq!(files.len(), 4);
        for f in files {
            let svg = fs::read_to_string(f).unwrap();
            assert!(svg.starts_with("<svg"));
        }
    }
}
