//! Loss-versus-step figures as SVG, always written next to the exact data
//! they draw (`series,step,full_loss`). The SVG is rendered from that CSV, so
//! either file can be regenerated from the other's source.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{num, read_csv, MetricRow, RunRecord, RunSpec};

pub const DATA_HEADER: &str = "series,step,full_loss";

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMode {
    /// One curve per run.
    All,
    /// The run with the lowest final full loss for each algorithm.
    BestPerOptimizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub log_y: bool,
    pub title: String,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            log_y: true,
            title: String::new(),
        }
    }
}

/// A persisted run: metric rows plus the algorithm name from its spec file.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub name: String,
    pub algorithm: String,
    pub rows: Vec<MetricRow>,
    pub aborted: bool,
}

impl LoadedRun {
    pub fn from_record(r: &RunRecord) -> Self {
        Self {
            name: r.spec_hash.clone(),
            algorithm: r.spec.optimizer.algorithm.to_string(),
            rows: r.rows.clone(),
            aborted: r.aborted(),
        }
    }
}

/// Reads run CSVs; directories contribute every `<hash>.csv` inside them.
pub fn load_runs(paths: &[PathBuf]) -> Result<Vec<LoadedRun>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| is_run_csv(f))
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    files
        .iter()
        .map(|f| {
            let (rows, abort) = read_csv(f)?;
            let stem = f
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("run")
                .to_string();
            let spec_path = f.with_file_name(format!("{stem}.spec.json"));
            let algorithm = match fs::read_to_string(&spec_path) {
                Ok(text) => serde_json::from_str::<RunSpec>(&text)
                    .map_err(|e| Error::Parse(format!("{}: {e}", spec_path.display())))?
                    .optimizer
                    .algorithm
                    .to_string(),
                Err(_) => stem.clone(),
            };
            Ok(LoadedRun {
                name: stem,
                algorithm,
                rows,
                aborted: abort.is_some(),
            })
        })
        .collect()
}

fn is_run_csv(f: &Path) -> bool {
    let name = f.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".csv") && !name.ends_with(".params.csv") && name.len() == 16 + 4
}

pub fn select_series(runs: &[LoadedRun], mode: PlotMode) -> Vec<Series> {
    let to_series = |label: String, r: &LoadedRun| Series {
        label,
        points: r.rows.iter().map(|row| (row.step, row.full_loss)).collect(),
    };
    match mode {
        PlotMode::All => runs
            .iter()
            .map(|r| to_series(format!("{} {}", r.algorithm, r.name), r))
            .collect(),
        PlotMode::BestPerOptimizer => {
            let mut best: BTreeMap<&str, &LoadedRun> = BTreeMap::new();
            for r in runs.iter().filter(|r| !r.aborted) {
                let Some(last) = r.rows.last() else { continue };
                let better = match best.get(r.algorithm.as_str()) {
                    Some(b) => {
                        last.full_loss < b.rows.last().map_or(f64::INFINITY, |x| x.full_loss)
                    }
                    None => true,
                };
                if better {
                    best.insert(&r.algorithm, r);
                }
            }
            best.into_iter()
                .map(|(alg, r)| to_series(alg.to_string(), r))
                .collect()
        }
    }
}

pub fn data_csv(series: &[Series]) -> String {
    let mut out = String::from(DATA_HEADER);
    out.push('\n');
    for s in series {
        let label = s.label.replace([',', '\n'], " ");
        for (step, loss) in &s.points {
            let _ = writeln!(out, "{label},{step},{}", num(*loss));
        }
    }
    out
}

pub fn parse_data_csv(text: &str) -> Result<Vec<Series>> {
    let mut lines = text.lines();
    if lines.next() != Some(DATA_HEADER) {
        return Err(Error::Parse(format!(
            "plot data must start with `{DATA_HEADER}`"
        )));
    }
    let mut out: Vec<Series> = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut f = line.rsplitn(3, ',');
        let (Some(loss), Some(step), Some(label)) = (f.next(), f.next(), f.next()) else {
            return Err(Error::Parse(format!(
                "plot data line {}: expected 3 fields",
                i + 2
            )));
        };
        let bad = |e: String| Error::Parse(format!("plot data line {}: {e}", i + 2));
        let point = (
            step.parse().map_err(|e| bad(format!("{e}")))?,
            loss.parse().map_err(|e| bad(format!("{e}")))?,
        );
        match out.last_mut() {
            Some(s) if s.label == label => s.points.push(point),
            _ => out.push(Series {
                label: label.to_string(),
                points: vec![point],
            }),
        }
    }
    Ok(out)
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt_coord(x: f64) -> String {
    format!("{x:.2}")
}

/// Renders the series; points with non-finite (or, on a log axis,
/// non-positive) loss are dropped.
pub fn render_svg(series: &[Series], style: &PlotStyle) -> Result<String> {
    if series.is_empty() {
        return Err(Error::invalid("records", "nothing to plot"));
    }
    let transform = |y: f64| if style.log_y { y.log10() } else { y };
    let usable = |y: f64| y.is_finite() && (!style.log_y || y > 0.0);
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(_, y)| usable(*y))
                .map(|&(x, y)| (x as f64, transform(y)))
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return Err(Error::invalid("records", "no plottable points"));
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if style.log_y {
        y0 = y0.floor();
        y1 = y1.ceil();
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    if !style.title.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            fmt_coord(LEFT + pw / 2.0),
            esc(&style.title)
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let x = x0 + (x1 - x0) * i as f64 / 5.0;
        let px = fmt_coord(sx(x));
        let _ = writeln!(
            out,
            r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle">{}</text>"#,
            fmt_coord(TOP + ph),
            fmt_coord(TOP + ph + 5.0),
            fmt_coord(TOP + ph + 20.0),
            x.round()
        );
    }
    let y_ticks: Vec<f64> = if style.log_y {
        let step = ((y1 - y0) / 8.0).ceil().max(1.0);
        let mut v = Vec::new();
        let mut y = y0;
        while y <= y1 + 1e-9 {
            v.push(y);
            y += step;
        }
        v
    } else {
        (0..=5).map(|i| y0 + (y1 - y0) * i as f64 / 5.0).collect()
    };
    for y in y_ticks {
        let py = fmt_coord(sy(y));
        let label = if style.log_y {
            format!("1e{}", y as i64)
        } else {
            format!("{y:.3e}")
        };
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py}" x2="{LEFT}" y2="{py}" stroke="black"/><text x="{}" y="{py}" text-anchor="end" dominant-baseline="middle">{label}</text>"#,
            fmt_coord(LEFT - 5.0),
            fmt_coord(LEFT - 8.0)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#,
        fmt_coord(LEFT + pw / 2.0),
        fmt_coord(HEIGHT - 15.0)
    );
    let y_label = if style.log_y {
        "full_loss (log scale)"
    } else {
        "full_loss"
    };
    let _ = writeln!(
        out,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{y_label}</text>"#,
        fmt_coord(TOP + ph / 2.0),
        fmt_coord(TOP + ph / 2.0)
    );
    for (i, (s, p)) in series.iter().zip(&pts).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = p
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt_coord(sx(x)), fmt_coord(sy(y))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" dominant-baseline="middle">{}</text>"#,
            fmt_coord(lx),
            fmt_coord(ly),
            fmt_coord(lx + 20.0),
            fmt_coord(ly),
            fmt_coord(lx + 26.0),
            fmt_coord(ly),
            esc(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Writes `<stem>.csv` and `<stem>.svg` into `dir`, rendering the SVG from
/// the written data.
pub fn emit_plot(
    series: &[Series],
    style: &PlotStyle,
    dir: &Path,
    stem: &str,
) -> Result<(PathBuf, PathBuf)> {
    if series.is_empty() {
        return Err(Error::invalid("records", "empty record set"));
    }
    fs::create_dir_all(dir)?;
    let data = data_csv(series);
    let svg = render_svg(&parse_data_csv(&data)?, style)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let svg_path = dir.join(format!("{stem}.svg"));
    fs::write(&csv_path, data)?;
    fs::write(&svg_path, svg)?;
    Ok((svg_path, csv_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series() -> Vec<Series> {
        vec![
            Series {
                label: "adamw".into(),
                points: vec![(10, 1.0), (20, 0.1), (30, 0.01)],
            },
            Series {
                label: "lion".into(),
                points: vec![(10, 2.0), (20, 0.5), (30, 0.0)],
            },
        ]
    }

    #[test]
    fn data_round_trips() {
        let s = series();
        assert_eq!(parse_data_csv(&data_csv(&s)).unwrap(), s);
    }

    #[test]
    fn svg_has_axes_and_one_polyline_per_series() {
        let svg = render_svg(&series(), &PlotStyle::default()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">step<") && svg.contains("full_loss"));
        assert!(svg.contains(">adamw<") && svg.contains(">lion<"));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(render_svg(&[], &PlotStyle::default()).is_err());
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plot(&[], &PlotStyle::default(), dir.path(), "x").is_err());
    }

    #[test]
    fn best_per_optimizer_picks_lowest_final_loss() {
        let run = |alg: &str, name: &str, last: f64| LoadedRun {
            name: name.into(),
            algorithm: alg.into(),
            rows: vec![MetricRow {
                step: 1,
                train_loss: last,
                full_loss: last,
                update_norm: 0.0,
                lr: 0.1,
                momentum: 0.0,
            }],
            aborted: false,
        };
        let runs = vec![
            run("adamw", "a", 0.5),
            run("adamw", "b", 0.2),
            run("lion", "c", 0.3),
        ];
        let s = select_series(&runs, PlotMode::BestPerOptimizer);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].label.as_str(), s[0].points[0].1), ("adamw", 0.2));
    }
}
