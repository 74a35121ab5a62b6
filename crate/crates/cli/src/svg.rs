//! Minimal SVG scatter of loss against sparsity.

use std::fmt::Write as _;

use suwr_core::pareto::{FrontKind, ParetoFront};

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

fn style(kind: FrontKind) -> (&'static str, bool) {
    match kind {
        FrontKind::LocalOptimal => ("#1f6fb4", true),
        FrontKind::GlobalOptimal => ("#e07b10", true),
        FrontKind::Measured => ("#c0282d", false),
    }
}

/// Fronts as lines with markers; measured points as markers only.
pub fn fronts_svg(fronts: &[&ParetoFront]) -> String {
    let ymax = fronts
        .iter()
        .flat_map(|f| f.points.iter().map(|p| p.loss))
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.05;
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |s: f64| LEFT + s.clamp(0.0, 1.0) * pw;
    let sy = |l: f64| TOP + ph - (l / ymax).clamp(0.0, 1.0) * ph;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<path d="M{LEFT},{TOP} V{} H{}" stroke="black" fill="none"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for k in 0..=4 {
        let s = k as f64 / 4.0;
        let l = ymax * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{s:.2}</text>"#,
            sx(s),
            TOP + ph + 18.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{l:.2}</text>"#,
            LEFT - 6.0,
            sy(l) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">sparsity</text>"#,
        LEFT + pw / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">loss</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (i, f) in fronts.iter().enumerate() {
        let (color, line) = style(f.kind);
        let mut pts: Vec<(f64, f64)> = f.points.iter().map(|p| (p.sparsity, p.loss)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if line && pts.len() > 1 {
            let d: Vec<String> = pts.iter().map(|&(s, l)| format!("{:.2},{:.2}", sx(s), sy(l))).collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#,
                d.join(" ")
            );
        }
        for &(s, l) in &pts {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(s),
                sy(l)
            );
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            LEFT + pw + 16.0,
            ly - 4.0,
            LEFT + pw + 26.0,
            ly,
            f.kind
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use suwr_core::pareto::FrontPoint;

    #[test]
    fn draws_lines_for_fronts_and_dots_for_measurements() {
        let p = |s, l| FrontPoint {
            lambda: None,
            sparsity: s,
            loss: l,
        };
        let local = ParetoFront::new(FrontKind::LocalOptimal, vec![p(0.0, 2.0), p(1.0, 0.0)]);
        let measured = ParetoFront::new(FrontKind::Measured, vec![p(0.5, 1.5)]);
        let svg = fronts_svg(&[&local, &measured]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 3 + 2);
        assert!(svg.contains("local-optimal") && svg.contains("measured"));
    }
}
