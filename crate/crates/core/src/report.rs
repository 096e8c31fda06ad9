//! Force-plot data and a small SVG renderer.

use std::fmt::Write as _;

use serde::Serialize;

use crate::attribution::{Attribution, Method};
use crate::oracle::FeatureVector;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForcePlotData {
    pub method: Method,
    pub base_value: f64,
    pub contributions: Vec<f64>,
    pub final_value: f64,
    pub feature_names: Vec<String>,
    pub feature_values: Vec<f64>,
}

impl ForcePlotData {
    pub fn new(attr: &Attribution, x: &FeatureVector, base_value: f64, final_value: f64) -> Self {
        Self {
            method: attr.method,
            base_value,
            contributions: attr.scores.clone(),
            final_value,
            feature_names: x.display_names(),
            feature_values: x.values().to_vec(),
        }
    }

    /// `final - base - Σ contributions`; zero for methods without discrepancy.
    pub fn additive_gap(&self) -> f64 {
        self.final_value - self.base_value - self.contributions.iter().sum::<f64>()
    }

    pub fn to_svg(&self) -> String {
        const W: f64 = 720.0;
        const ROW: f64 = 22.0;
        const LEFT: f64 = 180.0;
        const RIGHT: f64 = 40.0;
        let d = self.contributions.len();
        let height = 60.0 + ROW * (d as f64 + 1.0);

        // Running positions from base through each contribution.
        let mut stops = vec![self.base_value];
        let mut acc = self.base_value;
        for c in &self.contributions {
            acc += c;
            stops.push(acc);
        }
        stops.push(self.final_value);
        let lo = stops.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = stops.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
        let px = |v: f64| LEFT + (v - lo) / span * (W - LEFT - RIGHT);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            s,
            r#"<text x="8" y="18">{} base={:.4} f(x)={:.4}</text>"#,
            self.method.label(),
            self.base_value,
            self.final_value
        );
        let mut pos = self.base_value;
        for (i, c) in self.contributions.iter().enumerate() {
            let y = 36.0 + ROW * i as f64;
            let (a, b) = (px(pos), px(pos + c));
            let (x0, w) = if a <= b { (a, b - a) } else { (b, a - b) };
            let fill = if *c >= 0.0 { "#d62728" } else { "#1f77b4" };
            let _ = writeln!(
                s,
                r#"<text x="8" y="{:.1}">{} = {:.4}</text>"#,
                y + 14.0,
                escape(&self.feature_names[i]),
                self.feature_values[i]
            );
            let _ = writeln!(
                s,
                r#"<rect x="{x0:.2}" y="{y:.1}" width="{:.2}" height="{:.1}" fill="{fill}"/>"#,
                w.max(0.5),
                ROW - 4.0
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.1}">{:+.4}</text>"#, x0 + w.max(0.5) + 4.0, y + 14.0, c);
            pos += c;
        }
        let y = 36.0 + ROW * d as f64;
        for (v, colour) in [(self.base_value, "#555"), (self.final_value, "#000")] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="30" x2="{:.2}" y2="{:.1}" stroke="{colour}" stroke-dasharray="3,3"/>"#,
                px(v),
                px(v),
                y + ROW
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
