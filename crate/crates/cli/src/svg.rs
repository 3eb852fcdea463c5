//! Minimal standalone SVG charts.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 48.0;

fn frame(title: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{PAD}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n\
         <line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>\n\
         {body}</svg>\n",
        b = H - PAD,
        r = W - PAD,
    )
}

/// Line chart of several series over a shared x range; `y_max` fixes the
/// vertical scale.
pub fn line_chart(title: &str, x: &[f64], series: &[(&str, &str, Vec<f64>)], y_max: f64) -> String {
    let (x0, x1) = (
        x.first().copied().unwrap_or(0.0),
        x.last().copied().unwrap_or(1.0),
    );
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let sx = |v: f64| PAD + (v - x0) / span * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v / y_max).clamp(0.0, 1.0) * (H - 2.0 * PAD);
    let mut body = String::new();
    for (idx, (name, color, ys)) in series.iter().enumerate() {
        let pts: Vec<String> = x
            .iter()
            .zip(ys)
            .filter(|(_, y)| y.is_finite())
            .map(|(a, b)| format!("{:.2},{:.2}", sx(*a), sy(*b)))
            .collect();
        let _ = writeln!(
            body,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            body,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{name}</text>",
            W - PAD - 120.0,
            PAD + 16.0 * idx as f64
        );
    }
    frame(title, &body)
}

pub fn histogram(title: &str, labels: &[String], counts: &[usize]) -> String {
    let max = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let bw = (W - 2.0 * PAD) / counts.len().max(1) as f64;
    let mut body = String::new();
    for (b, (&c, label)) in counts.iter().zip(labels).enumerate() {
        let h = c as f64 / max * (H - 2.0 * PAD);
        let x = PAD + b as f64 * bw;
        let _ = writeln!(
            body,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"steelblue\"/>",
            H - PAD - h,
            bw * 0.9
        );
        let _ = writeln!(
            body,
            "<text x=\"{x:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{label}</text>",
            H - PAD + 14.0
        );
    }
    frame(title, &body)
}
