//! Minimal standalone SVG: per-box heatmaps and line charts.

use std::fmt::Write as _;

use ftcs_core::flow::Point;

pub enum Palette {
    /// Blue through white to red, symmetric about zero.
    Diverging,
    /// White to dark red from zero to the maximum.
    Sequential,
    /// Red for label 1, blue for label 2.
    Labels,
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn hex(c: [f64; 3]) -> String {
    format!(
        "#{:02x}{:02x}{:02x}",
        c[0].round() as u8,
        c[1].round() as u8,
        c[2].round() as u8
    )
}

fn color(palette: &Palette, v: f64, limit: f64) -> String {
    const BLUE: [f64; 3] = [33.0, 102.0, 172.0];
    const WHITE: [f64; 3] = [247.0, 247.0, 247.0];
    const RED: [f64; 3] = [178.0, 24.0, 43.0];
    match palette {
        Palette::Labels => {
            if v == 1.0 {
                hex(RED)
            } else {
                hex(BLUE)
            }
        }
        Palette::Diverging => {
            let t = if limit > 0.0 {
                (v / limit).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            if t >= 0.0 {
                hex(lerp(WHITE, RED, t))
            } else {
                hex(lerp(WHITE, BLUE, -t))
            }
        }
        Palette::Sequential => {
            let t = if limit > 0.0 {
                (v / limit).clamp(0.0, 1.0)
            } else {
                0.0
            };
            hex(lerp(WHITE, RED, t))
        }
    }
}

/// One filled rectangle per box; `size` is the full box width and height.
pub fn heatmap(
    title: &str,
    centers: &[Point],
    size: (f64, f64),
    values: &[f64],
    palette: Palette,
) -> String {
    let (w, h) = size;
    let xmin = centers.iter().map(|c| c.x).fold(f64::INFINITY, f64::min) - w / 2.0;
    let xmax = centers
        .iter()
        .map(|c| c.x)
        .fold(f64::NEG_INFINITY, f64::max)
        + w / 2.0;
    let ymin = centers.iter().map(|c| c.y).fold(f64::INFINITY, f64::min) - h / 2.0;
    let ymax = centers
        .iter()
        .map(|c| c.y)
        .fold(f64::NEG_INFINITY, f64::max)
        + h / 2.0;
    let scale = 1000.0 / (xmax - xmin).max(1e-300);
    let width = 1000.0;
    let height = (ymax - ymin) * scale;
    let limit = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut s = String::with_capacity(centers.len() * 96);
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{:.1}" viewBox="0 -30 {width} {:.1}">"#,
        height + 30.0,
        height + 30.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="4" y="-10" font-family="sans-serif" font-size="16">{title}</text>"#
    )
    .unwrap();
    for (c, &v) in centers.iter().zip(values) {
        let x = (c.x - w / 2.0 - xmin) * scale;
        let y = (ymax - c.y - h / 2.0) * scale;
        writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            w * scale + 0.05,
            h * scale + 0.05,
            color(&palette, v, limit)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Polylines with markers; logarithmic axes when `log_log` is set.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, Vec<(f64, f64)>)],
    log_log: bool,
) -> String {
    let tx = |v: f64| if log_log { v.ln() } else { v };
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, p)| p.iter().map(|&(x, y)| (tx(x), tx(y))))
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if !(y1 > y0) {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let (w, h, m) = (640.0, 400.0, 60.0);
    let px = |x: f64| m + (tx(x) - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (tx(y) - y0) / (y1 - y0) * (h - 2.0 * m);
    let colors = ["#b2182b", "#2166ac", "#1b7837", "#762a83"];
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<text x="{m}" y="24" font-size="15">{title}</text>"#).unwrap();
    writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    )
    .unwrap();
    let axis = if log_log { " (log)" } else { "" };
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}{axis}</text>"#,
        w / 2.0,
        h - 18.0
    )
    .unwrap();
    writeln!(s, r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{y_label}{axis}</text>"#, h / 2.0, h / 2.0).unwrap();
    let untx = |v: f64| if log_log { v.exp() } else { v };
    for (k, v) in [(x0, y0), (x1, y1)].iter().enumerate() {
        let (gx, gy) = (untx(v.0), untx(v.1));
        writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{gx:.3e}</text>"#,
            if k == 0 { m } else { w - m },
            h - m + 16.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{gy:.3e}</text>"#,
            m - 4.0,
            if k == 0 { h - m } else { m + 4.0 }
        )
        .unwrap();
    }
    for (i, (name, points)) in series.iter().enumerate() {
        let c = colors[i % colors.len()];
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        )
        .unwrap();
        for &(x, y) in points {
            writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{c}"/>"#,
                px(x),
                py(y)
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{c}">{name}</text>"#,
            w - m - 150.0,
            m + 16.0 * (i as f64 + 1.0)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_has_one_rect_per_box() {
        let centers = vec![Point::new(0.5, 0.5), Point::new(1.5, 0.5)];
        let s = heatmap("t", &centers, (1.0, 1.0), &[-1.0, 1.0], Palette::Diverging);
        assert_eq!(s.matches("<rect").count(), 2);
        assert!(s.contains("#b2182b") && s.contains("#2166ac"));
    }

    #[test]
    fn chart_draws_each_series() {
        let s = line_chart(
            "g",
            "eps",
            "gap",
            &[
                ("a", vec![(0.05, 0.01), (0.1, 0.02)]),
                ("b", vec![(0.05, 0.2), (0.1, 0.1)]),
            ],
            true,
        );
        assert_eq!(s.matches("<polyline").count(), 2);
        assert_eq!(s.matches("<circle").count(), 4);
    }
}
