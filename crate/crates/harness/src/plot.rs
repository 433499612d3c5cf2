//! Log-log SVG of gradient queries against the Hessian budget.
//!
//! Markers carry `class="point"`. The reference line carries
//! `class="reference"` and `data-slope`; the root element records
//! `data-px-per-decade-x` and `data-px-per-decade-y`, so the slope can be
//! recovered from the line's pixel coordinates.

use std::fmt::Write as _;
use std::path::Path;

use crate::sweep::HEADER;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: u64, msg: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub const REFERENCE_SLOPE: f64 = -0.5;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 60.0;

/// `(n_H, grad_queries)` for every successful row.
pub fn read_points(csv_path: &Path) -> Result<Vec<(f64, f64)>, PlotError> {
    let text = std::fs::read(csv_path)?;
    parse_points(&text, &csv_path.display().to_string())
}

pub fn parse_points(bytes: &[u8], origin: &str) -> Result<Vec<(f64, f64)>, PlotError> {
    let err = |line: u64, msg: String| PlotError::Parse { path: origin.to_string(), line, msg };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = reader.headers().map_err(|e| err(line_of(&e), e.to_string()))?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(err(
            1,
            format!("header does not match the result schema: {}", header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let col = |name: &str| HEADER.iter().position(|h| *h == name).expect("schema column");
    let (nh_col, gq_col) = (col("n_H"), col("grad_queries"));
    let mut points = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| err(line_of(&e), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let n_h: u64 = rec[nh_col].parse().map_err(|_| err(line, format!("bad n_H '{}'", &rec[nh_col])))?;
        let gq = &rec[gq_col];
        if gq.is_empty() {
            continue;
        }
        let gq: u64 = gq.parse().map_err(|_| err(line, format!("bad grad_queries '{gq}'")))?;
        if n_h > 0 && gq > 0 {
            points.push((n_h as f64, gq as f64));
        }
    }
    Ok(points)
}

fn line_of(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}

/// Decade range `[floor(log10 min), ceil(log10 max)]`, at least one decade wide.
fn decades(values: impl Iterator<Item = f64>) -> (i32, i32) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v.log10());
        hi = hi.max(v.log10());
    }
    if !lo.is_finite() {
        return (0, 1);
    }
    let (lo, mut hi) = (lo.floor() as i32, hi.ceil() as i32);
    if hi <= lo {
        hi = lo + 1;
    }
    (lo, hi)
}

pub fn render_svg(points: &[(f64, f64)]) -> String {
    let (x_lo, x_hi) = decades(points.iter().map(|p| p.0));
    let (y_lo, y_hi) = decades(points.iter().map(|p| p.1));
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px_x = plot_w / f64::from(x_hi - x_lo);
    let px_y = plot_h / f64::from(y_hi - y_lo);
    let sx = |v: f64| MARGIN_L + (v.log10() - f64::from(x_lo)) * px_x;
    let sy = |v: f64| MARGIN_T + plot_h - (v.log10() - f64::from(y_lo)) * px_y;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-px-per-decade-x="{px_x}" data-px-per-decade-y="{px_y}">"#
    );
    s.push_str("<style>.axis{stroke:#000;stroke-width:1}.tick{font:12px sans-serif}.point{fill:#1f77b4}.reference{stroke:#d62728;stroke-dasharray:6 4}</style>\n");
    let (x0, x1, y0, y1) = (MARGIN_L, MARGIN_L + plot_w, MARGIN_T, MARGIN_T + plot_h);
    let _ = writeln!(s, r#"<line class="axis" x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}"/>"#);
    let _ = writeln!(s, r#"<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
    for k in x_lo..=x_hi {
        let x = sx(10f64.powi(k));
        let _ = writeln!(s, r#"<line class="axis" x1="{x}" y1="{y1}" x2="{x}" y2="{}"/>"#, y1 + 5.0);
        let _ = writeln!(s, r#"<text class="tick" x="{x}" y="{}" text-anchor="middle">1e{k}</text>"#, y1 + 20.0);
    }
    for k in y_lo..=y_hi {
        let y = sy(10f64.powi(k));
        let _ = writeln!(s, r#"<line class="axis" x1="{}" y1="{y}" x2="{x0}" y2="{y}"/>"#, x0 - 5.0);
        let _ = writeln!(s, r#"<text class="tick" x="{}" y="{}" text-anchor="end">1e{k}</text>"#, x0 - 8.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text class="tick" x="{}" y="{}" text-anchor="middle">n_H (Hessian queries)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text class="tick" transform="rotate(-90)" x="{}" y="20" text-anchor="middle">gradient queries</text>"#,
        -(y0 + y1) / 2.0
    );
    for &(n, q) in points {
        let _ = writeln!(
            s,
            r#"<circle class="point" cx="{}" cy="{}" r="4"><title>n_H={n} grad_queries={q}</title></circle>"#,
            sx(n),
            sy(q)
        );
    }
    if let Some(&(n0, q0)) = points.iter().min_by(|a, b| a.0.total_cmp(&b.0)) {
        // Anchored at the leftmost point, spanning the x range.
        let (a, b) = (10f64.powi(x_lo), 10f64.powi(x_hi));
        let at = |n: f64| q0 * (n / n0).powf(REFERENCE_SLOPE);
        let _ = writeln!(
            s,
            r#"<line class="reference" data-slope="{REFERENCE_SLOPE}" x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
            sx(a),
            sy(at(a)),
            sx(b),
            sy(at(b))
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_tradeoff_plot(csv_path: &Path, out: &Path) -> Result<usize, PlotError> {
    let points = read_points(csv_path)?;
    std::fs::write(out, render_svg(&points))?;
    Ok(points.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        HEADER.join(",") + "\n"
    }

    #[test]
    fn empty_data_gives_axes_only() {
        let pts = parse_points(header().as_bytes(), "t").unwrap();
        let svg = render_svg(&pts);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(!svg.contains("class=\"point\""));
        assert!(!svg.contains("class=\"reference\""));
        assert!(svg.contains("class=\"axis\""));
    }

    #[test]
    fn error_rows_are_skipped_and_bad_fields_report_the_line() {
        let ok = format!("{}0,quad_cos,2,auto,0.1,1,exact,0,,,,,,error: x,0,1\n1,quad_cos,2,auto,0.1,2,exact,0,9,1,1,0.1,0.5,eps_critical,0,1\n", header());
        assert_eq!(parse_points(ok.as_bytes(), "t").unwrap(), vec![(2.0, 9.0)]);
        let bad = format!("{}0,quad_cos,2,auto,0.1,one,exact,0,9,1,1,0.1,0.5,eps_critical,0,1\n", header());
        match parse_points(bad.as_bytes(), "t") {
            Err(PlotError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let short = format!("{}0,quad_cos\n", header());
        assert!(matches!(parse_points(short.as_bytes(), "t"), Err(PlotError::Parse { line: 2, .. })));
        assert!(matches!(parse_points(b"a,b\n", "t"), Err(PlotError::Parse { line: 1, .. })));
    }
}
