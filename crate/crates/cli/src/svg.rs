//! SVG figures: a signal trace above a class bar (1D), or the image next to
//! its label map (2D).

use std::fmt::Write;

use classgain::model::{ClassificationScheme, SampleSet, Shape};

const PALETTE: [&str; 8] = [
    "#ffffff", "#9e9e9e", "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn class_colour(class: usize) -> &'static str {
    PALETTE[class % PALETTE.len()]
}

pub fn render(x: &SampleSet<f64>, z: &ClassificationScheme) -> String {
    match x.shape() {
        Shape::Linear(_) => strip(x, z),
        Shape::Grid { height, width } => grids(x, z, height, width),
    }
}

fn strip(x: &SampleSet<f64>, z: &ClassificationScheme) -> String {
    let (w, plot_h, bar_h, pad) = (800.0, 240.0, 30.0, 10.0);
    let n = x.len();
    let (lo, hi) = (x.min(), x.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let dx = (w - 2.0 * pad) / n.max(2).saturating_sub(1) as f64;
    let total_h = plot_h + bar_h + 3.0 * pad;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{total_h}" viewBox="0 0 {w} {total_h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{total_h}" fill="white"/>"#);
    let points: Vec<String> = x
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let px = pad + k as f64 * dx;
            let py = pad + plot_h * (1.0 - (v - lo) / span);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="black" stroke-width="1" points="{}"/>"#,
        points.join(" ")
    );
    // Class bar: one cell per sample, outlined as in a printed strip.
    let cell = (w - 2.0 * pad) / n as f64;
    let y = plot_h + 2.0 * pad;
    for (k, &label) in z.labels().iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{y}" width="{:.2}" height="{bar_h}" fill="{}"/>"#,
            pad + k as f64 * cell,
            cell + 0.05,
            class_colour(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{y}" width="{:.2}" height="{bar_h}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad
    );
    s.push_str("</svg>\n");
    s
}

fn grids(x: &SampleSet<f64>, z: &ClassificationScheme, height: usize, width: usize) -> String {
    let cell = (320.0 / width.max(height) as f64).max(1.0);
    let (gw, gh, gap) = (cell * width as f64, cell * height as f64, 20.0);
    let total_w = 2.0 * gw + 3.0 * gap;
    let total_h = gh + 2.0 * gap;
    let (lo, hi) = (x.min(), x.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" viewBox="0 0 {total_w} {total_h}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{total_w}" height="{total_h}" fill="white"/>"#
    );
    for r in 0..height {
        for c in 0..width {
            let k = r * width + c;
            let level = (255.0 * (x.values()[k] - lo) / span).round() as u8;
            let (px, py) = (gap + c as f64 * cell, gap + r as f64 * cell);
            let _ = writeln!(
                s,
                r#"<rect x="{px:.2}" y="{py:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({level},{level},{level})"/>"#
            );
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{py:.2}" width="{cell:.2}" height="{cell:.2}" fill="{}"/>"#,
                px + gw + gap,
                class_colour(z.labels()[k])
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<rect x="{:.2}" y="{gap}" width="{gw:.2}" height="{gh:.2}" fill="none" stroke="black"/>"#,
        2.0 * gap + gw
    );
    s.push_str("</svg>\n");
    s
}
