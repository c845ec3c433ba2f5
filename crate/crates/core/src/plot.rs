//! Minimal static SVG charts for reports.

use std::fmt::Write as _;

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];
const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 36.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"10\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// One panel of grouped bars: `series[s].1[b]` is the height of bar `b` in
/// series `s`.
pub struct BarPanel {
    pub title: String,
    pub categories: Vec<String>,
    pub series: Vec<(String, Vec<f64>)>,
}

/// Panels stacked vertically, with a shared legend.
pub fn grouped_bars(panels: &[BarPanel]) -> String {
    let height = panels.len() as f64 * (PANEL_H + MARGIN) + MARGIN;
    let mut out = header(PANEL_W + 2.0 * MARGIN, height);
    if let Some(first) = panels.first() {
        for (s, (name, _)) in first.series.iter().enumerate() {
            let x = MARGIN + s as f64 * 110.0;
            writeln!(
                out,
                "<rect x=\"{x}\" y=\"8\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"17\">{}</text>",
                PALETTE[s % PALETTE.len()],
                x + 14.0,
                escape(name)
            )
            .unwrap();
        }
    }
    for (p, panel) in panels.iter().enumerate() {
        let top = MARGIN + p as f64 * (PANEL_H + MARGIN);
        let max = panel.series.iter().flat_map(|(_, v)| v.iter().copied()).fold(0.0f64, f64::max).max(1e-12);
        writeln!(out, "<text x=\"{MARGIN}\" y=\"{}\" font-weight=\"bold\">{}</text>", top + 12.0, escape(&panel.title))
            .unwrap();
        let base = top + PANEL_H - 14.0;
        writeln!(
            out,
            "<line x1=\"{MARGIN}\" y1=\"{base}\" x2=\"{}\" y2=\"{base}\" stroke=\"black\"/>",
            MARGIN + PANEL_W
        )
        .unwrap();
        let n_cat = panel.categories.len().max(1) as f64;
        let group_w = PANEL_W / n_cat;
        let bar_w = group_w * 0.8 / panel.series.len().max(1) as f64;
        let plot_h = PANEL_H - 36.0;
        for (c, label) in panel.categories.iter().enumerate() {
            let gx = MARGIN + c as f64 * group_w;
            for (s, (_, values)) in panel.series.iter().enumerate() {
                let v = values.get(c).copied().unwrap_or(0.0);
                let h = plot_h * v / max;
                writeln!(
                    out,
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                    gx + group_w * 0.1 + s as f64 * bar_w,
                    base - h,
                    bar_w,
                    h,
                    PALETTE[s % PALETTE.len()]
                )
                .unwrap();
            }
            writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
                gx + group_w / 2.0,
                base + 11.0,
                escape(label)
            )
            .unwrap();
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter of `(x, y)` points with the per-`x` mean joined by a line.
pub fn scatter_with_means(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let mut out = header(PANEL_W + 2.0 * MARGIN, PANEL_H + 2.0 * MARGIN);
    let (x0, x1) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (x0, x1) = if x0.is_finite() && x1 > x0 { (x0, x1) } else { (0.0, 1.0) };
    let (y0, y1) = if y0.is_finite() && y1 > y0 { (y0, y1) } else { (-1.0, 1.0) };
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * PANEL_W;
    let sy = |y: f64| MARGIN + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;
    writeln!(out, "<text x=\"{MARGIN}\" y=\"20\" font-weight=\"bold\">{}</text>", escape(title)).unwrap();
    writeln!(
        out,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{PANEL_W}\" height=\"{PANEL_H}\" fill=\"none\" stroke=\"black\"/>"
    )
    .unwrap();
    writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        MARGIN + PANEL_W / 2.0,
        PANEL_H + 2.0 * MARGIN - 6.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(out, "<text x=\"4\" y=\"{}\">{}</text>", MARGIN - 4.0, escape(y_label)).unwrap();
    for (v, anchor) in [(y0, PANEL_H + MARGIN), (y1, MARGIN + 8.0)] {
        writeln!(out, "<text x=\"4\" y=\"{anchor}\">{v:.2}</text>").unwrap();
    }
    for &(x, y) in points {
        writeln!(out, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>", sx(x), sy(y), PALETTE[0]).unwrap();
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let path: Vec<String> = xs
        .iter()
        .map(|&x| {
            let ys: Vec<f64> = points.iter().filter(|p| p.0 == x).map(|p| p.1).collect();
            let m = ys.iter().sum::<f64>() / ys.len() as f64;
            writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{x}</text>",
                sx(x),
                MARGIN + PANEL_H + 12.0
            )
            .unwrap();
            format!("{:.2},{:.2}", sx(x), sy(m))
        })
        .collect();
    writeln!(out, "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\"/>", path.join(" "), PALETTE[1]).unwrap();
    out.push_str("</svg>\n");
    out
}
