//! Minimal SVG line plots and heat maps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Line plot of each series; `log_y` plots log10 of positive values.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> String {
    let ty = |y: f64| if log_y { y.max(1e-300).log10() } else { y };
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.1.is_finite() && (!log_y || p.1 > 0.0));
    let (x0, x1) = span(pts().map(|p| p.0).fold(f64::INFINITY, f64::min), pts().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max));
    let (mut y0, mut y1) = span(
        pts().map(|p| ty(p.1)).fold(f64::INFINITY, f64::min),
        pts().map(|p| ty(p.1)).fold(f64::NEG_INFINITY, f64::max),
    );
    if log_y {
        y0 = y0.floor();
        y1 = y1.ceil().max(y0 + 1.0);
    }
    if !x0.is_finite() || !y0.is_finite() {
        y0 = 0.0;
        y1 = 1.0;
    }
    let (x0, x1) = if x0.is_finite() { (x0, x1) } else { (0.0, 1.0) };
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (ty(y) - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(fx),
            TOP + ph + 16.0,
            trim(fx)
        );
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let label = if log_y { format!("1e{}", trim(fy)) } else { trim(fy) };
        let py = TOP + ph - ph * i as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#, LEFT - 6.0, py + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, esc(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite() && (!log_y || p.1 > 0.0))
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        for p in &path {
            let (x, y) = p.split_once(',').unwrap();
            let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>"#);
        }
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let _ = writeln!(out, r#"<rect x="{:.1}" y="{:.1}" width="12" height="3" fill="{color}"/>"#, W - RIGHT + 10.0, ly - 4.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, W - RIGHT + 28.0, esc(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

/// Heat map with `values[row][col]` in `[0, 1]`; empty cells are hatched grey.
pub fn heat_map(title: &str, x_label: &str, y_label: &str, cols: &[String], rows: &[String], values: &[Vec<Option<f64>>]) -> String {
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let cw = pw / cols.len().max(1) as f64;
    let rh = ph / rows.len().max(1) as f64;
    let mut out = String::new();
    header(&mut out, title);
    for (r, row) in values.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let fill = match v {
                Some(v) => shade(*v),
                None => "#bbbbbb".to_string(),
            };
            let x = LEFT + c as f64 * cw;
            let y = TOP + r as f64 * rh;
            let _ = writeln!(out, r#"<rect x="{x:.1}" y="{y:.1}" width="{cw:.1}" height="{rh:.1}" fill="{fill}"/>"#);
            if let Some(v) = v {
                let ink = if *v < 0.5 { "white" } else { "black" };
                let _ = writeln!(
                    out,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="9" fill="{ink}">{v:.2}</text>"#,
                    x + cw / 2.0,
                    y + rh / 2.0 + 3.0
                );
            }
        }
    }
    for (c, l) in cols.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + (c as f64 + 0.5) * cw,
            TOP + ph + 16.0,
            esc(l)
        );
    }
    for (r, l) in rows.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            TOP + (r as f64 + 0.5) * rh + 4.0,
            esc(l)
        );
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, esc(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(y_label)
    );
    out.push_str("</svg>\n");
    out
}

fn shade(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let r = (68.0 + t * (253.0 - 68.0)) as u8;
    let g = (1.0 + t * (231.0 - 1.0)) as u8;
    let b = (84.0 + t * (37.0 - 84.0)) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn trim(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_closed_svg() {
        let s = Series { name: "a<b".into(), points: vec![(1.0, 10.0), (2.0, 100.0)] };
        let svg = line_plot("t", "x", "y", &[s], true);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn empty_plot_does_not_panic() {
        let svg = line_plot("t", "x", "y", &[], false);
        assert!(svg.contains("</svg>"));
    }

    #[test]
    fn heat_map_marks_missing_cells() {
        let svg = heat_map("h", "p", "depth", &["0.1".into(), "0.2".into()], &["1".into()], &[vec![Some(0.9), None]]);
        assert!(svg.contains("#bbbbbb"));
        assert!(svg.contains("0.90"));
    }
}
