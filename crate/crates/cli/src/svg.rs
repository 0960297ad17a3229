//! Band diagrams as SVG 1.1. Coordinates are printed with three decimals and
//! no metadata, so equal inputs give equal bytes.

use std::f64::consts::PI;
use std::fmt::Write;

use thinnet_core::BandStructure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvgStyle {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub band_fill: &'static str,
}

impl Default for SvgStyle {
    fn default() -> Self {
        SvgStyle { width: 900.0, height: 200.0, margin: 40.0, band_fill: "#4a7ab5" }
    }
}

/// At most this many gridlines are labelled.
const MAX_LABELS: usize = 12;

pub fn render_band_svg(b: &BandStructure, style: &SvgStyle) -> String {
    let SvgStyle { width: w, height: h, margin: m, band_fill } = *style;
    let cutoff = b.cutoff.max(f64::MIN_POSITIVE);
    let x = |lambda: f64| m + (lambda / cutoff).clamp(0.0, 1.0) * (w - 2.0 * m);
    let axis_y = h - 60.0;
    let band_top = axis_y - 40.0;

    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.3}" height="{h:.3}" viewBox="0 0 {w:.3} {h:.3}">"#
    )
    .unwrap();
    writeln!(s, "<title>{} ({})</title>", escape(&b.group), model_name(b)).unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{w:.3}" height="{h:.3}" fill="white"/>"#).unwrap();

    // gridlines at omega = l pi / 2
    let grid: Vec<f64> = (1..).map(|l| (l as f64 * PI / 2.0).powi(2)).take_while(|&g| g <= cutoff).collect();
    let stride = grid.len().div_ceil(MAX_LABELS).max(1);
    writeln!(s, r##"<g class="grid" stroke="#bbbbbb" stroke-width="0.5" stroke-dasharray="2,3">"##).unwrap();
    for g in &grid {
        let gx = x(*g);
        writeln!(s, r#"<line x1="{gx:.3}" y1="{:.3}" x2="{gx:.3}" y2="{:.3}"/>"#, band_top - 30.0, axis_y).unwrap();
    }
    writeln!(s, "</g>").unwrap();

    writeln!(s, r#"<g class="bands" fill="{band_fill}">"#).unwrap();
    for &(lo, hi) in &b.bands {
        let (x0, x1) = (x(lo), x(hi));
        writeln!(
            s,
            r#"<rect x="{x0:.3}" y="{band_top:.3}" width="{:.3}" height="40.000"/>"#,
            (x1 - x0).max(0.5)
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();

    writeln!(s, r##"<g class="touching" stroke="#ffffff" stroke-width="1">"##).unwrap();
    for t in &b.touching {
        let tx = x(*t);
        writeln!(s, r#"<line x1="{tx:.3}" y1="{band_top:.3}" x2="{tx:.3}" y2="{axis_y:.3}"/>"#).unwrap();
    }
    writeln!(s, "</g>").unwrap();

    for g in &b.gaps {
        let (x0, x1) = (x(g.lo), x(g.hi));
        let y = axis_y + 8.0;
        writeln!(
            s,
            r##"<path class="gap" d="M {x0:.3} {:.3} L {x0:.3} {y:.3} L {x1:.3} {y:.3} L {x1:.3} {:.3}" fill="none" stroke="#c0392b" stroke-width="1"/>"##,
            y - 4.0,
            y - 4.0
        )
        .unwrap();
    }

    let dy = band_top - 14.0;
    for f in &b.flat_bands {
        let fx = x(f.lambda);
        writeln!(
            s,
            r##"<polygon class="flat" points="{fx:.3},{:.3} {:.3},{dy:.3} {fx:.3},{:.3} {:.3},{dy:.3}" fill="#222222"/>"##,
            dy - 6.0,
            fx + 5.0,
            dy + 6.0,
            fx - 5.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text class="mult" x="{fx:.3}" y="{:.3}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            dy - 9.0,
            f.multiplicity
        )
        .unwrap();
    }

    writeln!(
        s,
        r##"<line class="axis" x1="{m:.3}" y1="{axis_y:.3}" x2="{:.3}" y2="{axis_y:.3}" stroke="#000000" stroke-width="1"/>"##,
        w - m
    )
    .unwrap();
    for (i, g) in grid.iter().enumerate() {
        if (i + 1) % stride != 0 {
            continue;
        }
        writeln!(
            s,
            r#"<text class="tick" x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="10" text-anchor="middle">{:.2}</text>"#,
            x(*g),
            axis_y + 24.0,
            g
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text class="label" x="{:.3}" y="{:.3}" font-family="sans-serif" font-size="12" text-anchor="end">&#955;</text>"#,
        w - m,
        h - 12.0
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

fn model_name(b: &BandStructure) -> String {
    match b.model {
        thinnet_core::BandModel::Kirchhoff => "kirchhoff".into(),
        thinnet_core::BandModel::Borderline { c } => format!("borderline c={c}"),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
