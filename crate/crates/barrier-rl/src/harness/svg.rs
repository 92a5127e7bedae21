//! Tiny deterministic SVG renderer for the report plots: line charts with
//! optional shaded bands and a horizontal reference line, and bar charts with
//! error whiskers. No text shaping, no external assets; byte-stable output.

use std::fmt::Write;

pub struct Series {
    pub label: String,
    pub color: &'static str,
    /// (x, y) center line.
    pub points: Vec<(f64, f64)>,
    /// Optional (x, lo, hi) band.
    pub band: Vec<(f64, f64, f64)>,
}

pub const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 55.0;

fn fmt(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e7 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        ML + (v - self.x0) / (self.x1 - self.x0).max(1e-12) * (W - ML - MR)
    }

    fn y(&self, v: f64) -> f64 {
        H - MB - (v - self.y0) / (self.y1 - self.y0).max(1e-12) * (H - MT - MB)
    }
}

fn axes(out: &mut String, frame: &Frame, title: &str, x_label: &str, y_label: &str) {
    let _ = write!(
        out,
        r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>
<text x="{tx}" y="24" font-family="monospace" font-size="15" text-anchor="middle">{title}</text>
<line x1="{ML}" y1="{yb}" x2="{xr}" y2="{yb}" stroke="black" stroke-width="1"/>
<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{yb}" stroke="black" stroke-width="1"/>
<text x="{tx}" y="{xl}" font-family="monospace" font-size="12" text-anchor="middle">{x_label}</text>
<text x="16" y="{ty}" font-family="monospace" font-size="12" text-anchor="middle" transform="rotate(-90 16 {ty})">{y_label}</text>
"#,
        tx = (ML + W - MR) / 2.0,
        yb = H - MB,
        xr = W - MR,
        xl = H - 14.0,
        ty = (MT + H - MB) / 2.0,
    );
    for i in 0..=4 {
        let fx = frame.x0 + (frame.x1 - frame.x0) * i as f64 / 4.0;
        let fy = frame.y0 + (frame.y1 - frame.y0) * i as f64 / 4.0;
        let px = frame.x(fx);
        let py = frame.y(fy);
        let _ = write!(
            out,
            r#"<line x1="{px}" y1="{yb}" x2="{px}" y2="{yb2}" stroke="black"/>
<text x="{px}" y="{tlx}" font-family="monospace" font-size="11" text-anchor="middle">{lx}</text>
<line x1="{xa}" y1="{py}" x2="{xa2}" y2="{py}" stroke="black"/>
<text x="{tly}" y="{pyt}" font-family="monospace" font-size="11" text-anchor="end">{ly}</text>
"#,
            yb = H - MB,
            yb2 = H - MB + 5.0,
            tlx = H - MB + 20.0,
            lx = fmt(fx),
            xa = ML - 5.0,
            xa2 = ML,
            tly = ML - 8.0,
            pyt = py + 4.0,
            ly = fmt(fy),
        );
    }
}

/// Line chart with optional bands and an optional horizontal reference line.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    hline: Option<(f64, &str)>,
) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(x);
            ys.push(y);
        }
        for &(_, lo, hi) in &s.band {
            ys.push(lo);
            ys.push(hi);
        }
    }
    if let Some((v, _)) = hline {
        ys.push(v);
    }
    let (x0, x1) = bounds(&xs);
    let (mut y0, mut y1) = bounds(&ys);
    let pad = (y1 - y0).max(1e-9) * 0.08;
    y0 -= pad;
    y1 += pad;
    let frame = Frame { x0, x1, y0, y1 };

    let mut out = String::new();
    let _ = write!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">"#);
    out.push('\n');
    axes(&mut out, &frame, title, x_label, y_label);

    for s in series {
        if !s.band.is_empty() {
            let mut d = String::from("M");
            for &(x, lo, _) in &s.band {
                let _ = write!(d, " {:.2} {:.2}", frame.x(x), frame.y(lo));
            }
            for &(x, _, hi) in s.band.iter().rev() {
                let _ = write!(d, " L {:.2} {:.2}", frame.x(x), frame.y(hi));
            }
            d.push('Z');
            let _ = write!(
                out,
                "<path d=\"{d}\" fill=\"{}\" opacity=\"0.15\" stroke=\"none\"/>\n",
                s.color
            );
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.x(x), frame.y(y)))
            .collect();
        let _ = write!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"/>\n",
            pts.join(" "),
            s.color
        );
    }
    if let Some((v, label)) = hline {
        let py = frame.y(v);
        let _ = write!(
            out,
            "<line x1=\"{ML}\" y1=\"{py:.2}\" x2=\"{x1}\" y2=\"{py:.2}\" stroke=\"black\" stroke-dasharray=\"6 4\"/>\n<text x=\"{x2}\" y=\"{ty:.2}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{label}</text>\n",
            x1 = W - MR,
            x2 = W - MR - 4.0,
            ty = py - 5.0,
        );
    }
    for (i, s) in series.iter().enumerate() {
        let ly = MT + 14.0 * i as f64 + 4.0;
        let _ = write!(
            out,
            "<rect x=\"{x}\" y=\"{y:.2}\" width=\"14\" height=\"4\" fill=\"{c}\"/>\n<text x=\"{tx}\" y=\"{ty:.2}\" font-family=\"monospace\" font-size=\"11\">{l}</text>\n",
            x = ML + 10.0,
            y = ly - 2.0,
            c = s.color,
            tx = ML + 30.0,
            ty = ly + 3.0,
            l = s.label
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Bar chart with symmetric error whiskers.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64, f64)]) -> String {
    let mut ys: Vec<f64> = vec![0.0];
    for &(_, v, e) in bars {
        ys.push(v + e);
        ys.push(v - e);
    }
    let (mut y0, mut y1) = bounds(&ys);
    let pad = (y1 - y0).max(1e-9) * 0.1;
    y0 = (y0 - pad).min(0.0);
    y1 += pad;
    let frame = Frame { x0: 0.0, x1: bars.len() as f64, y0, y1 };

    let mut out = String::new();
    let _ = write!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">"#);
    out.push('\n');
    axes(&mut out, &frame, title, "", y_label);
    let slot = (W - ML - MR) / bars.len() as f64;
    for (i, (label, v, e)) in bars.iter().enumerate() {
        let cx = ML + slot * (i as f64 + 0.5);
        let bw = slot * 0.5;
        let y = frame.y(*v);
        let ybase = frame.y(0.0);
        let (top, height) = if y <= ybase { (y, ybase - y) } else { (ybase, y - ybase) };
        let color = PALETTE[i % PALETTE.len()];
        let _ = write!(
            out,
            "<rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{bw:.2}\" height=\"{height:.2}\" fill=\"{color}\" opacity=\"0.8\"/>\n",
            x = cx - bw / 2.0,
        );
        let (elo, ehi) = (frame.y(v - e), frame.y(v + e));
        let _ = write!(
            out,
            "<line x1=\"{cx:.2}\" y1=\"{elo:.2}\" x2=\"{cx:.2}\" y2=\"{ehi:.2}\" stroke=\"black\" stroke-width=\"1.5\"/>\n<text x=\"{cx:.2}\" y=\"{ty}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{label}</text>\n",
            ty = H - MB + 34.0,
        );
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in vals {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_render_and_are_deterministic() {
        let series = vec![Series {
            label: "a".into(),
            color: PALETTE[0],
            points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, 1.5)],
            band: vec![(0.0, 0.8, 1.2), (1.0, 1.7, 2.3), (2.0, 1.2, 1.8)],
        }];
        let a = line_chart("t", "x", "y", &series, Some((1.0, "budget")));
        let b = line_chart("t", "x", "y", &series, Some((1.0, "budget")));
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("budget"));

        let bars = vec![("l".to_string(), 3.0, 0.5), ("m".to_string(), 5.0, 1.0)];
        let c = bar_chart("t", "y", &bars);
        assert!(c.contains("<rect"));
    }
}
