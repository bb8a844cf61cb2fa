//! Minimal SVG scatter plot: color by label, marker shape by resolution.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 540.0;
const MARGIN: f64 = 48.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub struct Marker {
    pub x: f64,
    pub y: f64,
    pub label: Option<u32>,
    pub resolution: usize,
}

fn color(label: Option<u32>) -> &'static str {
    match label {
        Some(l) => PALETTE[l as usize % PALETTE.len()],
        None => "#333333",
    }
}

fn shape(out: &mut String, kind: usize, x: f64, y: f64, fill: &str, class: &str) {
    let r = 3.5;
    let _ = match kind % 4 {
        0 => writeln!(out, r#"<circle class="{class}" cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}"/>"#),
        1 => writeln!(
            out,
            r#"<rect class="{class}" x="{:.2}" y="{:.2}" width="{}" height="{}" fill="{fill}"/>"#,
            x - r,
            y - r,
            2.0 * r,
            2.0 * r
        ),
        2 => writeln!(
            out,
            r#"<polygon class="{class}" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{fill}"/>"#,
            x,
            y - r,
            x - r,
            y + r,
            x + r,
            y + r
        ),
        _ => writeln!(
            out,
            r#"<polygon class="{class}" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{fill}"/>"#,
            x,
            y - r,
            x + r,
            y,
            x,
            y + r,
            x - r,
            y
        ),
    };
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn scatter(markers: &[Marker], title: &str) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for m in markers {
        x0 = x0.min(m.x);
        x1 = x1.max(m.x);
        y0 = y0.min(m.y);
        y1 = y1.max(m.y);
    }
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (sx, sy) = (span(x0, x1), span(y0, y1));
    let px = |x: f64| MARGIN + (x - x0) / sx * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / sy * (HEIGHT - 2.0 * MARGIN);

    let mut resolutions: Vec<usize> = markers.iter().map(|m| m.resolution).collect();
    resolutions.sort_unstable();
    resolutions.dedup();

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
<text x="{MARGIN}" y="28" font-family="sans-serif" font-size="14">{}</text>
<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">PC1</text>
<text x="14" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">PC2</text>"#,
        escape(title),
        WIDTH / 2.0,
        HEIGHT - 12.0,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for m in markers {
        let kind = resolutions.binary_search(&m.resolution).unwrap_or(0);
        shape(&mut out, kind, px(m.x), py(m.y), color(m.label), "marker");
    }
    for (i, r) in resolutions.iter().enumerate() {
        let y = MARGIN + 16.0 * i as f64;
        shape(&mut out, i, WIDTH - 110.0, y, "#555555", "legend");
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11">r = {r}</text>"#,
            WIDTH - 98.0,
            y + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}
