//! Minimal deterministic SVG line plots for loss curves.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

/// Renders one series as an SVG polyline with labeled value extremes.
pub fn line_plot(title: &str, xs: &[u64], ys: &[f64]) -> String {
    let n = xs.len();
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-family="monospace" font-size="16" text-anchor="middle">{title}</text>"#,
        WIDTH / 2.0
    );

    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    if n > 0 {
        let x_min = *xs.first().unwrap() as f64;
        let x_max = (*xs.last().unwrap() as f64).max(x_min + 1.0);
        let mut y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut y_max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if (y_max - y_min).abs() < 1e-12 {
            y_min -= 0.5;
            y_max += 0.5;
        }
        let to_x = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * plot_w;
        let to_y = |y: f64| MARGIN + (y_max - y) / (y_max - y_min) * plot_h;

        let mut points = String::new();
        for (&x, &y) in xs.iter().zip(ys) {
            let _ = write!(points, "{:.2},{:.2} ", to_x(x as f64), to_y(y));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
            points.trim_end()
        );
        let _ = writeln!(
            out,
            r#"<text x="8" y="{}" font-family="monospace" font-size="12">{y_max:.4}</text>"#,
            MARGIN + 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="8" y="{}" font-family="monospace" font-size="12">{y_min:.4}</text>"#,
            MARGIN + plot_h
        );
        let _ = writeln!(
            out,
            r#"<text x="{MARGIN}" y="{}" font-family="monospace" font-size="12">{x_min}</text>"#,
            HEIGHT - 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="12" text-anchor="end">{x_max}</text>"#,
            MARGIN + plot_w,
            HEIGHT - 16.0
        );
    }
    out.push_str("</svg>\n");
    out
}
