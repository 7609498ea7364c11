//! Minimal SVG plots for density estimates and residual curves.

use std::fmt::Write as _;

use crate::diagnostics::{Density, Kde2d};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn frame(title: &str, x: (f64, f64), y: (f64, f64), x_label: &str, y_label: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    writeln!(s, "<polyline points=\"{x0},{y1} {x0},{y0} {x1},{y0}\" fill=\"none\" stroke=\"black\"/>").unwrap();
    writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>", WIDTH / 2.0).unwrap();
    writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>", WIDTH / 2.0, HEIGHT - 10.0).unwrap();
    writeln!(s, "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{y_label}</text>", HEIGHT / 2.0, HEIGHT / 2.0).unwrap();
    writeln!(s, "<text x=\"{x0}\" y=\"{}\" text-anchor=\"middle\">{:.3}</text>", y0 + 16.0, x.0).unwrap();
    writeln!(s, "<text x=\"{x1}\" y=\"{}\" text-anchor=\"middle\">{:.3}</text>", y0 + 16.0, x.1).unwrap();
    writeln!(s, "<text x=\"{}\" y=\"{y0}\" text-anchor=\"end\">{:.3}</text>", x0 - 4.0, y.0).unwrap();
    writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3}</text>", x0 - 4.0, y1 + 4.0, y.1).unwrap();
    s
}

fn to_px(v: f64, (lo, hi): (f64, f64), a: f64, b: f64) -> f64 {
    a + (v - lo) / (hi - lo) * (b - a)
}

/// One or more curves sharing axes.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, curves: &[(&[f64], &[f64])]) -> String {
    let xr = range(curves.iter().flat_map(|(x, _)| x.iter().copied()));
    let yr = range(curves.iter().flat_map(|(_, y)| y.iter().copied()));
    let mut s = frame(title, xr, yr, x_label, y_label);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    for (k, (xs, ys)) in curves.iter().enumerate() {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys.iter())
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| {
                format!(
                    "{:.2},{:.2}",
                    to_px(x, xr, MARGIN, WIDTH - MARGIN),
                    to_px(y, yr, HEIGHT - MARGIN, MARGIN)
                )
            })
            .collect();
        writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            pts.join(" "),
            colors[k % colors.len()]
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn heat_map(title: &str, k: &Kde2d) -> String {
    let xr = range(k.xs.iter().copied());
    let yr = range(k.ys.iter().copied());
    let max = k.density.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut s = frame(title, xr, yr, "F1", "F2");
    let cw = (WIDTH - 2.0 * MARGIN) / k.xs.len() as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / k.ys.len() as f64;
    for (i, x) in k.xs.iter().enumerate() {
        for (j, y) in k.ys.iter().enumerate() {
            let d = k.density[i * k.ys.len() + j] / max;
            if d < 1e-3 {
                continue;
            }
            let shade = (255.0 * (1.0 - d)).round() as u8;
            writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({shade},{shade},255)\"/>",
                to_px(*x, xr, MARGIN, WIDTH - MARGIN) - cw / 2.0,
                to_px(*y, yr, HEIGHT - MARGIN, MARGIN) - ch / 2.0,
                cw,
                ch
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn density_plot(title: &str, density: &Density) -> String {
    match density {
        Density::One(k) => line_plot(title, "value", "density", &[(&k.grid, &k.density)]),
        Density::Two(k) => heat_map(title, k),
    }
}
