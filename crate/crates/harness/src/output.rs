//! CSV logs and SVG learning curves.

use std::fmt::Write as _;
use std::path::Path;

use crate::aggregate::{Aggregate, AggregateRow};
use crate::error::{HarnessError, Result};
use crate::fmt_f64;
use crate::runner::Row;

pub const RUN_HEADER: [&str; 7] = [
    "episode",
    "steps",
    "train_return",
    "eval_return",
    "sigma",
    "distance",
    "solved_streak",
];

pub const AGGREGATE_HEADER: [&str; 7] = ["series", "episode", "steps", "median", "p25", "p75", "runs"];

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::format(path, format!("{other:?}")),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::Reader::from_path(path).map_err(|e| csv_err(path, e))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(HarnessError::format(path, format!("unexpected header {header:?}")));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(path: &Path, record: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = record.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| HarnessError::format(path, format!("invalid value {raw:?} in column {}", i + 1)))
}

/// Writes one run's rows; an empty run gives a header-only file.
pub fn write_run_csv(rows: &[Row], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(RUN_HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.episode.to_string(),
            r.steps.to_string(),
            fmt_f64(r.train_return),
            fmt_f64(r.eval_return),
            fmt_f64(r.sigma),
            fmt_f64(r.distance),
            r.solved_streak.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_run_csv(path: &Path) -> Result<Vec<Row>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &RUN_HEADER)?;
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            Ok(Row {
                episode: field(path, &rec, 0)?,
                steps: field(path, &rec, 1)?,
                train_return: field(path, &rec, 2)?,
                eval_return: field(path, &rec, 3)?,
                sigma: field(path, &rec, 4)?,
                distance: field(path, &rec, 5)?,
                solved_streak: field(path, &rec, 6)?,
            })
        })
        .collect()
}

/// A named aggregate curve, one per noise strategy in a plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub rows: Vec<AggregateRow>,
}

pub fn write_aggregate_csv(series: &[(String, &Aggregate)], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(AGGREGATE_HEADER).map_err(|e| csv_err(path, e))?;
    for (name, agg) in series {
        for r in &agg.rows {
            w.write_record([
                name.clone(),
                r.episode.to_string(),
                fmt_f64(r.steps),
                fmt_f64(r.median),
                fmt_f64(r.p25),
                fmt_f64(r.p75),
                r.runs.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads an aggregate file back, grouping rows by series in file order.
pub fn read_aggregate_csv(path: &Path) -> Result<Vec<Series>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &AGGREGATE_HEADER)?;
    let mut out: Vec<Series> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let name = rec.get(0).unwrap_or("").to_string();
        let row = AggregateRow {
            episode: field(path, &rec, 1)?,
            steps: field(path, &rec, 2)?,
            median: field(path, &rec, 3)?,
            p25: field(path, &rec, 4)?,
            p75: field(path, &rec, 5)?,
            runs: field(path, &rec, 6)?,
        };
        match out.last_mut() {
            Some(s) if s.name == name => s.rows.push(row),
            _ => out.push(Series { name, rows: vec![row] }),
        }
    }
    Ok(out)
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Renders median evaluation return against episode, with a shaded
/// interquartile band per series.
pub fn render_svg(series: &[Series]) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 20.0, 20.0, 60.0);
    let points = || {
        series
            .iter()
            .flat_map(|s| s.rows.iter())
            .filter(|r| r.median.is_finite())
    };
    let x_max = points().map(|r| r.episode as f64).fold(1.0, f64::max);
    let mut y_min = points().map(|r| r.p25).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let mut y_max = points()
        .map(|r| r.p75)
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    if y_max - y_min < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let px = |x: f64| left + (x / x_max) * (w - left - right);
    let py = |y: f64| top + (1.0 - (y - y_min) / (y_max - y_min)) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let (x0, y0, x1, y1) = (left, h - bottom, w - right, top);
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (f * x_max, y_min + f * (y_max - y_min));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(xv),
            y0 + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">episode</text>"#,
        (x0 + x1) / 2.0,
        h - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18,{:.1}) rotate(-90)" text-anchor="middle">evaluation return</text>"#,
        (y0 + y1) / 2.0
    );
    for (i, series) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let rows: Vec<&AggregateRow> = series.rows.iter().filter(|r| r.median.is_finite()).collect();
        if rows.is_empty() {
            continue;
        }
        let upper = rows.iter().map(|r| format!("{:.2},{:.2}", px(r.episode as f64), py(r.p75)));
        let lower = rows.iter().rev().map(|r| format!("{:.2},{:.2}", px(r.episode as f64), py(r.p25)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.episode as f64), py(r.median)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="12" height="3" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            x1 - 180.0,
            ly - 4.0,
            x1 - 162.0,
            ly,
            escape(&series.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v == v.round() && v.abs() < 1e6 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(series: &[Series], path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(series)).map_err(|e| HarnessError::io(path, e))
}
