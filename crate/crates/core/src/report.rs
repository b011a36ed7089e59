//! CSV and SVG artifacts.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;
use crate::evaluation::SuccessMatrix;

/// Writes a comment line carrying the config hash, a header row and the rows.
pub fn write_csv<W: Write>(mut out: W, config_hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    writeln!(out, "# config_hash={config_hash}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(std::io::Error::from)?;
    for r in rows {
        w.write_record(r).map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &std::path::Path, config_hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(f, config_hash, header, rows)
}

/// Shortest round-trip formatting; identical values give identical bytes.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub const MATRIX_HEADER: [&str; 4] = ["i", "j", "rate", "n_examples"];

/// Long format: one row per ordered pair.
pub fn matrix_rows(m: &SuccessMatrix) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(m.len() * m.len());
    for i in 0..m.len() {
        for j in 0..m.len() {
            rows.push(vec![
                m.labels[i].clone(),
                m.labels[j].clone(),
                num(m.rates[i][j]),
                m.n_examples.to_string(),
            ]);
        }
    }
    rows
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Heatmap of a success matrix, rates mapped from white (0) to dark blue (1).
pub fn heatmap_svg(m: &SuccessMatrix, title: &str) -> String {
    let n = m.len();
    let cell = if n <= 10 { 40 } else { 400 / n.max(1) };
    let left = 60;
    let top = 50;
    let width = left + cell * n + 20;
    let height = top + cell * n + 20;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, escape(title));
    for i in 0..n {
        let y = top + i * cell;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 4,
            y + cell / 2 + 4,
            escape(&m.labels[i])
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + i * cell + cell / 2,
            top - 6,
            escape(&m.labels[i])
        );
        for j in 0..n {
            let r = m.rates[i][j].clamp(0.0, 1.0);
            let shade = |c0: f64, c1: f64| (c0 + (c1 - c0) * r).round() as u8;
            let fill = format!("#{:02x}{:02x}{:02x}", shade(255.0, 8.0), shade(255.0, 48.0), shade(255.0, 107.0));
            let x = left + j * cell;
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#999"><title>{} / {}: {:.3}</title></rect>"##,
                escape(&m.labels[i]),
                escape(&m.labels[j]),
                m.rates[i][j]
            );
            if cell >= 30 {
                let colour = if r > 0.5 { "#fff" } else { "#000" };
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" text-anchor="middle" fill="{colour}">{:.2}</text>"#,
                    x + cell / 2,
                    y + cell / 2 + 4,
                    m.rates[i][j]
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Line chart of named `(x, y)` series.
pub fn line_chart_svg(series: &[(String, Vec<(f64, f64)>)], title: &str, x_label: &str, y_label: &str) -> String {
    const COLOURS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
    let (w, h, left, top, right, bottom) = (560.0, 360.0, 60.0, 40.0, 140.0, 50.0);
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    y0 = y0.min(0.0);
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(fx), top + ph + 15.0, short(fx));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 4.0, sy(fy) + 4.0, short(fy));
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" transform="rotate(-90 15 {:.1})" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (k, (name, points)) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        let ly = top + 12.0 + 16.0 * k as f64;
        let lx = left + pw + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 16.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 20.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn short(x: f64) -> String {
    if x.abs() >= 1000.0 {
        format!("{:.0}", x)
    } else {
        format!("{:.2}", x)
    }
}
