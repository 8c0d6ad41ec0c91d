//! Static SVG plots of delay against user count or load.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::str::FromStr;

use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    DelayVsUsers,
    DelayVsLoad,
}

impl PlotKind {
    fn x_column(self) -> &'static str {
        match self {
            PlotKind::DelayVsUsers => "N",
            PlotKind::DelayVsLoad => "lambda_tot",
        }
    }

    fn x_label(self) -> &'static str {
        match self {
            PlotKind::DelayVsUsers => "number of users N",
            PlotKind::DelayVsLoad => "total arrival rate",
        }
    }
}

impl FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "delay_vs_users" => Ok(PlotKind::DelayVsUsers),
            "delay_vs_load" => Ok(PlotKind::DelayVsLoad),
            other => Err(format!("unknown plot kind '{other}' (expected delay_vs_users or delay_vs_load)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlotOptions {
    /// Draw the dashed `2N/(1-λ)` reference curve.
    pub bound_overlay: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Point {
    x: f64,
    y: f64,
    users: f64,
    load: f64,
}

type Series = BTreeMap<String, Vec<Point>>;

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, SimError> {
    headers.iter().position(|h| h == name).ok_or_else(|| SimError::MissingColumn(name.to_string()))
}

fn parse(record: &csv::StringRecord, idx: usize, name: &str) -> Result<Option<f64>, SimError> {
    let raw = record.get(idx).unwrap_or("").trim();
    if raw == "NA" || raw.is_empty() {
        return Ok(None);
    }
    raw.parse()
        .map(Some)
        .map_err(|_| SimError::BadValue { column: name.to_string(), value: raw.to_string() })
}

/// Groups rows by protocol. Uses aggregate rows when the table has any,
/// otherwise every row.
fn read_series<R: Read>(table: R, kind: PlotKind) -> Result<Series, SimError> {
    let mut reader = csv::Reader::from_reader(table);
    let headers = reader.headers()?.clone();
    let x_name = kind.x_column();
    let protocol = column(&headers, "protocol")?;
    let x_col = column(&headers, x_name)?;
    let delay = column(&headers, "delay")?;
    let users = column(&headers, "N")?;
    let load = column(&headers, "lambda_tot")?;
    let replication = headers.iter().position(|h| h == "replication");

    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record?);
    }
    let has_aggregate = replication.is_some_and(|i| rows.iter().any(|r| r.get(i) == Some("-1")));

    let mut series = Series::new();
    for r in &rows {
        if has_aggregate && replication.and_then(|i| r.get(i)) != Some("-1") {
            continue;
        }
        let (Some(x), Some(y)) = (parse(r, x_col, x_name)?, parse(r, delay, "delay")?) else {
            continue;
        };
        let point = Point {
            x,
            y,
            users: parse(r, users, "N")?.unwrap_or(f64::NAN),
            load: parse(r, load, "lambda_tot")?.unwrap_or(f64::NAN),
        };
        series.entry(r.get(protocol).unwrap_or("").to_string()).or_default().push(point);
    }
    for points in series.values_mut() {
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
    }
    Ok(series)
}

fn colour(protocol: &str, index: usize) -> &'static str {
    const FALLBACK: [&str; 4] = ["#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
    match protocol {
        "cima" => "#1f77b4",
        "tdma" => "#d62728",
        "backoff" => "#2ca02c",
        _ => FALLBACK[index % FALLBACK.len()],
    }
}

/// Roughly five round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut out = Vec::new();
    let mut t = (lo / step).ceil() * step;
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn reference_bound(users: f64, load: f64) -> Option<f64> {
    (load < 1.0 && users.is_finite() && load.is_finite()).then(|| 2.0 * users / (1.0 - load))
}

/// Renders an SVG document from a CSV result table.
pub fn render_plot<R: Read>(table: R, kind: PlotKind, options: PlotOptions) -> Result<String, SimError> {
    let series = read_series(table, kind)?;
    let all: Vec<&Point> = series.values().flatten().collect();

    let mut overlay: Vec<(f64, f64)> = Vec::new();
    if options.bound_overlay && !all.is_empty() {
        let x_lo = all.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let x_hi = all.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let fixed = match kind {
            PlotKind::DelayVsUsers => all[0].load,
            PlotKind::DelayVsLoad => all[0].users,
        };
        let steps = 60;
        for i in 0..=steps {
            let x = x_lo + (x_hi - x_lo) * i as f64 / steps as f64;
            let y = match kind {
                PlotKind::DelayVsUsers => reference_bound(x, fixed),
                PlotKind::DelayVsLoad => reference_bound(fixed, x),
            };
            if let Some(y) = y {
                overlay.push((x, y));
            }
        }
    }

    let xs = all.iter().map(|p| p.x).chain(overlay.iter().map(|p| p.0));
    let ys = all.iter().map(|p| p.y).chain(overlay.iter().map(|p| p.1));
    let (mut x_lo, mut x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let y_hi = ys.fold(0.0f64, f64::max);
    if !x_lo.is_finite() {
        (x_lo, x_hi) = (0.0, 1.0);
    }
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    let y_lo = 0.0;
    let y_hi = if y_hi > 0.0 { y_hi * 1.05 } else { 1.0 };

    let (width, height) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 30.0, 60.0);
    let pw = width - left - right;
    let ph = height - top - bottom;
    let sx = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * pw;
    let sy = |y: f64| top + ph - (y - y_lo) / (y_hi - y_lo) * ph;

    let mut svg = String::new();
    let w = &mut svg;
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(w, r#"<rect width="{width}" height="{height}" fill="white"/>"#).unwrap();

    for t in ticks(x_lo, x_hi) {
        let x = sx(t);
        writeln!(w, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="gainsboro"/>"#, top, top + ph).unwrap();
        writeln!(w, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, top + ph + 16.0, fmt_num(t)).unwrap();
    }
    for t in ticks(y_lo, y_hi) {
        let y = sy(t);
        writeln!(w, r#"<line x1="{left:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="gainsboro"/>"#, left + pw).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, fmt_num(t)).unwrap();
    }
    writeln!(
        w,
        r#"<rect x="{left:.2}" y="{top:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        height - 18.0,
        kind.x_label()
    )
    .unwrap();
    writeln!(
        w,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">mean delay (slots)</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    )
    .unwrap();

    let legend_x = left + pw + 15.0;
    let mut legend_y = top + 10.0;
    for (i, (name, points)) in series.iter().enumerate() {
        let c = colour(name, i);
        let path: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.y))).collect();
        writeln!(w, r#"<polyline class="series" data-protocol="{name}" points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, path.join(" ")).unwrap();
        for p in points {
            writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, sx(p.x), sy(p.y)).unwrap();
        }
        writeln!(
            w,
            r#"<line x1="{legend_x:.2}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="{c}" stroke-width="2"/>"#,
            legend_x + 20.0
        )
        .unwrap();
        writeln!(w, r#"<text class="legend" x="{:.2}" y="{:.2}">{name}</text>"#, legend_x + 26.0, legend_y + 4.0).unwrap();
        legend_y += 18.0;
    }
    if !overlay.is_empty() {
        let path: Vec<String> = overlay.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        writeln!(
            w,
            r#"<polyline class="bound" points="{}" fill="none" stroke="black" stroke-dasharray="6 4"/>"#,
            path.join(" ")
        )
        .unwrap();
        writeln!(
            w,
            r#"<line x1="{legend_x:.2}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="black" stroke-dasharray="6 4"/>"#,
            legend_x + 20.0
        )
        .unwrap();
        writeln!(w, r#"<text class="legend" x="{:.2}" y="{:.2}">2N/(1-λ)</text>"#, legend_x + 26.0, legend_y + 4.0).unwrap();
    }
    writeln!(w, "</svg>").unwrap();
    Ok(svg)
}
