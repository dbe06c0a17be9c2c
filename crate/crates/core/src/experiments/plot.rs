use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{config, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 30.0, 50.0);
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Series {
    name: String,
    points: Vec<(f64, f64, f64)>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

/// Log-log line plot of `y_cols` against `x_col` as a standalone SVG.
///
/// A y column `c` is read from `c` or `c_mean`; a `c_se` column, when
/// present, gives symmetric error bars.
pub fn emit_plot(csv_path: &Path, x_col: &str, y_cols: &[&str], out_svg: &Path) -> Result<()> {
    let mut reader = csv::Reader::from_path(csv_path)?;
    let headers = reader.headers()?.clone();
    let xi = column(&headers, x_col).ok_or_else(|| config(format!("no column {x_col:?}")))?;
    let mut specs = Vec::new();
    for &y in y_cols {
        let yi = column(&headers, y)
            .or_else(|| column(&headers, &format!("{y}_mean")))
            .ok_or_else(|| config(format!("no column {y:?}")))?;
        specs.push((y, yi, column(&headers, &format!("{y}_se"))));
    }
    if specs.is_empty() {
        return Err(config("no y columns requested"));
    }
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    let num = |r: &csv::StringRecord, i: usize| r.get(i).and_then(|s| s.trim().parse::<f64>().ok());
    let series: Vec<Series> = specs
        .iter()
        .map(|&(name, yi, se)| Series {
            name: name.to_string(),
            points: records
                .iter()
                .filter_map(|r| {
                    let (x, y) = (num(r, xi)?, num(r, yi)?);
                    let e = se.and_then(|s| num(r, s)).unwrap_or(0.0).max(0.0);
                    (x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()).then_some((x, y, e))
                })
                .collect(),
        })
        .collect();
    let all: Vec<&(f64, f64, f64)> = series.iter().flat_map(|s| &s.points).collect();
    if all.is_empty() {
        return Err(config("no positive values to plot on log axes"));
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &&(x, y, e) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        let lo = if y - e > 0.0 { y - e } else { y };
        y0 = y0.min(lo);
        y1 = y1.max(y + e);
    }
    let (lx0, mut lx1) = (x0.log10(), x1.log10());
    let (mut ly0, mut ly1) = (y0.log10().floor(), y1.log10().ceil());
    if lx1 <= lx0 {
        lx1 = lx0 + 1.0;
    }
    if ly1 <= ly0 {
        ly0 -= 1.0;
        ly1 += 1.0;
    }
    let (ml, mr, mt, mb) = MARGIN;
    let px = |x: f64| ml + (x.log10() - lx0) / (lx1 - lx0) * (WIDTH - ml - mr);
    let py = |y: f64| HEIGHT - mb - (y.log10() - ly0) / (ly1 - ly0) * (HEIGHT - mt - mb);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{ml} {mt} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = HEIGHT - mb,
        r = WIDTH - mr
    );
    for k in ly0 as i32..=ly1 as i32 {
        let y = py(10f64.powi(k));
        let _ = writeln!(
            svg,
            r##"<line x1="{ml}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="#ddd"/><text x="{t}" y="{ty:.2}" text-anchor="end">1e{k}</text>"##,
            r = WIDTH - mr,
            t = ml - 6.0,
            ty = y + 4.0
        );
    }
    let mut xs: Vec<f64> = all.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in xs {
        let sx = px(x);
        let _ = writeln!(
            svg,
            r#"<line x1="{sx:.2}" y1="{b}" x2="{sx:.2}" y2="{b2}" stroke="black"/><text x="{sx:.2}" y="{t}" text-anchor="middle">{x}</text>"#,
            b = HEIGHT - mb,
            b2 = HEIGHT - mb + 5.0,
            t = HEIGHT - mb + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{cx}" y="{y}" text-anchor="middle">{}</text>"#,
        escape(x_col),
        cx = (ml + WIDTH - mr) / 2.0,
        y = HEIGHT - 10.0
    );
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = s.points.iter().map(|&(x, y, _)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, y, e) in &s.points {
            let (cx, cy) = (px(x), py(y));
            let _ = writeln!(svg, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{color}"/>"#);
            if e > 0.0 {
                let lo = if y - e > 0.0 { py(y - e) } else { HEIGHT - mb };
                let _ = writeln!(
                    svg,
                    r#"<line x1="{cx:.2}" y1="{lo:.2}" x2="{cx:.2}" y2="{hi:.2}" stroke="{color}"/>"#,
                    hi = py(y + e)
                );
            }
        }
        let ly = mt + 16.0 * k as f64 + 8.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{a}" y1="{ly}" x2="{b}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{t}" y="{ty}">{}</text>"#,
            escape(&s.name),
            a = WIDTH - mr - 150.0,
            b = WIDTH - mr - 130.0,
            t = WIDTH - mr - 124.0,
            ty = ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    fs::write(out_svg, svg)?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn three_rows_make_an_svg() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("s.csv");
        fs::write(&csv, "n,prior_w2_mean,prior_w2_se,posterior_w1_mean\n512,0.4,0.05,0.3\n1024,0.3,0.02,0.2\n2048,0.2,0.01,0.15\n").unwrap();
        let svg = dir.path().join("p.svg");
        emit_plot(&csv, "n", &["prior_w2", "posterior_w1"], &svg).unwrap();
        let text = fs::read_to_string(&svg).unwrap();
        assert!(text.starts_with("<?xml"));
        assert!(text.trim_end().ends_with("</svg>"));
        assert_eq!(text.matches("<polyline").count(), 2);
    }

    #[test]
    fn missing_column_and_empty_range_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("s.csv");
        fs::write(&csv, "n,a\n1,0\n2,0\n").unwrap();
        let svg = dir.path().join("p.svg");
        assert!(matches!(emit_plot(&csv, "n", &["b"], &svg), Err(Error::Config(_))));
        assert!(matches!(emit_plot(&csv, "n", &["a"], &svg), Err(Error::Config(_))));
    }
}
