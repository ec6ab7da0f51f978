//! SVG line plots and heat maps from the CSV artifacts.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// A numeric CSV table; `#` lines are skipped, the first other line is the header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Config("CSV file has no header".into()))?;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let rows = lines
            .enumerate()
            .map(|(k, l)| {
                let row = l
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Config(format!("row {}: {e}", k + 1)))?;
                if row.len() != columns.len() {
                    return Err(Error::Config(format!("row {} has {} cells, expected {}", k + 1, row.len(), columns.len())));
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { columns, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Config(format!("no column named {name:?}")))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Lines of `series` against `x`, with an optional shaded band between two columns.
pub fn line_plot(table: &Table, x: &str, series: &[&str], band: Option<(&str, &str)>, title: &str) -> Result<String> {
    let xs = table.column(x)?;
    let ys: Vec<Vec<f64>> = series.iter().map(|c| table.column(c)).collect::<Result<_>>()?;
    let band = band.map(|(a, b)| Ok::<_, Error>((table.column(a)?, table.column(b)?))).transpose()?;
    let (x0, x1) = range(xs.iter().copied());
    let all_y = ys.iter().flatten().copied().chain(band.iter().flat_map(|(a, b)| a.iter().chain(b).copied()));
    let (y0, y1) = range(all_y);
    let px = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = open(title);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="11">{x0:.3}</text>"#, HEIGHT - MARGIN + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{x1:.3}</text>"#, WIDTH - MARGIN, HEIGHT - MARGIN + 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{y0:.3}</text>"#, MARGIN - 4.0, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{y1:.3}</text>"#, MARGIN - 4.0, MARGIN + 10.0);
    if let Some((lo, hi)) = &band {
        let mut pts: Vec<String> = xs.iter().zip(hi).map(|(&a, &b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
        pts.extend(xs.iter().zip(lo).rev().map(|(&a, &b)| format!("{:.2},{:.2}", px(a), py(b))));
        let _ = writeln!(s, r##"<polygon points="{}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>"##, pts.join(" "));
    }
    for (k, (name, y)) in series.iter().zip(&ys).enumerate() {
        let pts: Vec<String> = xs.iter().zip(y).map(|(&a, &b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
        let colour = PALETTE[k % PALETTE.len()];
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{colour}">{}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn colour_map(t: f64) -> String {
    // Blue to white to red.
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let u = t * 2.0;
        (u, u, 1.0)
    } else {
        let u = (1.0 - t) * 2.0;
        (1.0, u, u)
    };
    format!("#{:02x}{:02x}{:02x}", (r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8)
}

/// Heat map of `value` over the tensor grid given by the `x` and `y` columns.
pub fn heat_map(table: &Table, x: &str, y: &str, value: &str, title: &str) -> Result<String> {
    let xs = table.column(x)?;
    let ys = table.column(y)?;
    let vs = table.column(value)?;
    let axis = |v: &[f64]| {
        let mut a = v.to_vec();
        a.sort_by(f64::total_cmp);
        a.dedup();
        a
    };
    let (ax, ay) = (axis(&xs), axis(&ys));
    let (v0, v1) = range(vs.iter().copied());
    let cw = (WIDTH - 2.0 * MARGIN) / ax.len() as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / ay.len() as f64;
    let mut s = open(title);
    for ((&px, &py), &v) in xs.iter().zip(&ys).zip(&vs) {
        let i = ax.partition_point(|&a| a < px);
        let j = ay.partition_point(|&a| a < py);
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            MARGIN + i as f64 * cw,
            HEIGHT - MARGIN - (j as f64 + 1.0) * ch,
            cw + 0.05,
            ch + 0.05,
            colour_map((v - v0) / (v1 - v0))
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{value}: {v0:.3} (blue) to {v1:.3} (red)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Picks a sensible plot for a CSV artifact: a heat map when there is a `y`
/// coordinate column, otherwise lines against `x` (or the first column),
/// shading `q05`–`q95` when both are present.
pub fn auto_plot(table: &Table, column: Option<&str>, title: &str) -> Result<String> {
    if table.has("x") && table.has("y") && table.columns.iter().position(|c| c == "y") == Some(1) {
        let value = match column {
            Some(c) => c.to_string(),
            None => table.columns.get(2).cloned().ok_or_else(|| Error::Config("no value column to plot".into()))?,
        };
        return heat_map(table, "x", "y", &value, title);
    }
    let x = if table.has("x") { "x".to_string() } else { table.columns[0].clone() };
    let series: Vec<&str> = match column {
        Some(c) => vec![c],
        None => {
            let preferred: Vec<&str> = ["mean", "truth"].into_iter().filter(|c| table.has(c)).collect();
            if preferred.is_empty() {
                table.columns.iter().map(String::as_str).filter(|c| *c != x).collect()
            } else {
                preferred
            }
        }
    };
    let band = (table.has("q05") && table.has("q95")).then_some(("q05", "q95"));
    line_plot(table, &x, &series, band, title)
}
