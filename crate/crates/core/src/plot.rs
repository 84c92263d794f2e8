//! Standalone SVG Bland-Altman plots.

use std::fmt::Write;

use crate::stats::ParameterAgreement;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

/// Linear map from a data interval onto a pixel interval.
#[derive(Debug, Clone, Copy)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub from: f64,
    pub to: f64,
}

impl Axis {
    fn padded(lo: f64, hi: f64, from: f64, to: f64) -> Self {
        let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
        Axis {
            lo: lo - 0.08 * span,
            hi: hi + 0.08 * span,
            from,
            to,
        }
    }

    pub fn map(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }
}

/// Horizontal axis (mean of the two methods) and vertical axis (difference).
pub fn axes(p: &ParameterAgreement) -> (Axis, Axis) {
    let means = p.pairs.iter().map(|[a, b]| (a + b) / 2.0);
    let diffs = p.pairs.iter().map(|[a, b]| a - b);
    let (xlo, xhi) = means.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let ba = &p.bland_altman;
    let (ylo, yhi) = diffs
        .chain([ba.loa_lower, ba.loa_upper, 0.0])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    (
        Axis::padded(xlo, xhi, LEFT, WIDTH - RIGHT),
        Axis::padded(ylo, yhi, HEIGHT - BOTTOM, TOP),
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn ticks(axis: &Axis) -> Vec<f64> {
    let raw = (axis.hi - axis.lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(raw);
    let first = (axis.lo / step).ceil() as i64;
    let last = (axis.hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Dots at (mean, difference) per walk, a solid bias line and dashed
/// limits of agreement.
pub fn bland_altman_svg(p: &ParameterAgreement, reference: &str) -> String {
    let (x, y) = axes(p);
    let ba = &p.bland_altman;
    let unit = if p.unit.is_empty() { String::new() } else { format!(" [{}]", p.unit) };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}: {} vs {}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(&p.parameter),
        escape(reference),
        escape(&p.method)
    );
    let (px0, px1, py0, py1) = (x.map(x.lo), x.map(x.hi), y.map(y.lo), y.map(y.hi));
    let _ = writeln!(
        s,
        r#"<rect x="{px0:.2}" y="{py1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        px1 - px0,
        py0 - py1
    );
    for t in ticks(&x) {
        let px = x.map(t);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{py0:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            py0 + 5.0,
            py0 + 18.0,
            fmt_tick(t)
        );
    }
    for t in ticks(&y) {
        let py = y.map(t);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{px0:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            px0 - 5.0,
            px0 - 8.0,
            py + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Mean of both methods{}</text>"#,
        (px0 + px1) / 2.0,
        HEIGHT - 12.0,
        escape(&unit)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">Difference{}</text>"#,
        (py0 + py1) / 2.0,
        escape(&unit)
    );
    for (label, value, dash) in [
        ("+1.96 SD", ba.loa_upper, true),
        ("Bias", ba.bias, false),
        ("-1.96 SD", ba.loa_lower, true),
    ] {
        let py = y.map(value);
        let style = if dash { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<line class="{}" x1="{px0:.2}" y1="{py:.2}" x2="{px1:.2}" y2="{py:.2}" stroke="firebrick"{style}/><text x="{:.2}" y="{:.2}">{label} {}</text>"#,
            if dash { "loa" } else { "bias" },
            px1 + 6.0,
            py + 4.0,
            fmt_tick(value)
        );
    }
    for [a, b] in &p.pairs {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue" fill-opacity="0.7"/>"#,
            x.map((a + b) / 2.0),
            y.map(a - b)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}
