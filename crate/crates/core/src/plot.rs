//! Minimal SVG writers for line plots and heatmaps. Convenience output
//! only; CSV/JSON remain the source of truth.

use std::io::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn finite_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// One polyline per named series.
pub fn line_plot<W: Write>(
    mut out: W,
    title: &str,
    series: &[(&str, Vec<(f64, f64)>)],
) -> std::io::Result<()> {
    let (x_lo, x_hi) = finite_bounds(series.iter().flat_map(|(_, s)| s.iter().map(|p| p.0)));
    let (y_lo, y_hi) = finite_bounds(series.iter().flat_map(|(_, s)| s.iter().map(|p| p.1)));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(
        out,
        r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        title
    )?;
    for (frac, label_x, label_y) in [(0.0, x_lo, y_lo), (1.0, x_hi, y_hi)] {
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11">{:.3e}</text>"#,
            MARGIN + frac * (WIDTH - 2.0 * MARGIN) - 12.0,
            HEIGHT - MARGIN + 18.0,
            label_x
        )?;
        writeln!(
            out,
            r#"<text x="4" y="{:.1}" font-size="11">{:.3e}</text>"#,
            HEIGHT - MARGIN - frac * (HEIGHT - 2.0 * MARGIN),
            label_y
        )?;
    }
    writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    )?;
    for (i, (label, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            path.join(" "),
            color
        )?;
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{}">{}</text>"#,
            WIDTH - MARGIN - 120.0,
            MARGIN + 16.0 * (i + 1) as f64,
            color,
            label
        )?;
    }
    writeln!(out, "</svg>")
}

fn color_stop(t: f64) -> (u8, u8, u8) {
    // dark blue -> cyan -> yellow
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t) as u8;
    if t < 0.5 {
        let u = t * 2.0;
        ((20.0 + 30.0 * u) as u8, (30.0 + 170.0 * u) as u8, (90.0 + 120.0 * u) as u8)
    } else {
        let u = (t - 0.5) * 2.0;
        (lerp(50.0, 250.0).max((50.0 + 200.0 * u) as u8), 200, (210.0 - 170.0 * u) as u8)
    }
}

/// Row-major heatmap of `nx * ny` values.
pub fn heatmap<W: Write>(
    mut out: W,
    title: &str,
    nx: usize,
    ny: usize,
    values: &[f64],
) -> std::io::Result<()> {
    assert_eq!(values.len(), nx * ny);
    let (lo, hi) = finite_bounds(values.iter().copied());
    let cell_w = (WIDTH - 2.0 * MARGIN) / nx as f64;
    let cell_h = (HEIGHT - 2.0 * MARGIN) / ny as f64;
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(
        out,
        r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{} [{:.3e}, {:.3e}]</text>"#,
        WIDTH / 2.0,
        title,
        lo,
        hi
    )?;
    for iy in 0..ny {
        for ix in 0..nx {
            let v = values[iy * nx + ix];
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            let (r, g, b) = color_stop(t);
            writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
                MARGIN + ix as f64 * cell_w,
                HEIGHT - MARGIN - (iy + 1) as f64 * cell_h,
                cell_w + 0.5,
                cell_h + 0.5
            )?;
        }
    }
    writeln!(out, "</svg>")
}
