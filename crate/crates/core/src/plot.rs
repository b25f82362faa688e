//! Dependency-free SVG renderings of confusion matrices, learning curves and
//! label position distributions.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::corpus::LabelSchema;
use crate::evaluation::{CurvePoint, EvalReport};

const PALETTE: [&str; 6] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open(width: usize, height: usize) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Heat map shaded by row-normalized counts; rows gold, columns predicted.
pub fn confusion_svg(report: &EvalReport) -> String {
    let c = report.labels.len();
    let (cell, left, top) = (70, 130, 60);
    let mut out = open(left + c * cell + 20, top + c * cell + 40);
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">predicted</text>",
        left + c * cell / 2
    );
    for (j, label) in report.labels.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{}</text>",
            left + j * cell + cell / 2,
            top - 8,
            escape(label)
        );
    }
    for (i, row) in report.confusion.rows().into_iter().enumerate() {
        let total = row.sum().max(1) as f64;
        let y = top + i * cell;
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{}</text>",
            left - 6,
            y + cell / 2 + 4,
            escape(&report.labels[i])
        );
        for (j, &count) in row.iter().enumerate() {
            let share = count as f64 / total;
            let x = left + j * cell;
            let ink = if share > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                out,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"#08306b\" \
                 fill-opacity=\"{share:.3}\" stroke=\"#999\"/>\n\
                 <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{ink}\">{count}</text>",
                x + cell / 2,
                y + cell / 2 + 4
            );
        }
    }
    let _ = writeln!(
        out,
        "<text x=\"12\" y=\"{}\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">gold</text>",
        top + c * cell / 2,
        top + c * cell / 2
    );
    out.push_str("</svg>\n");
    out
}

/// Accuracy against training-set size.
pub fn curve_svg(points: &[CurvePoint]) -> String {
    let (w, h, pad) = (480.0, 320.0, 50.0);
    let mut out = open(w as usize, h as usize);
    let max_x = points
        .iter()
        .map(|p| p.train_size)
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let sx = |v: f64| pad + v / max_x * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - v / 100.0 * (h - 2.0 * pad);
    let _ = writeln!(
        out,
        "<line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>",
        b = h - pad,
        r = w - pad
    );
    for tick in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"10\">{tick}</text>",
            pad - 4.0,
            sy(tick) + 3.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">training abstracts</text>\n\
         <text x=\"14\" y=\"{m}\" transform=\"rotate(-90 14 {m})\" text-anchor=\"middle\">accuracy (%)</text>",
        w / 2.0,
        h - 12.0,
        m = h / 2.0
    );
    let path: Vec<String> = points
        .iter()
        .map(|p| format!("{:.1},{:.1}", sx(p.train_size as f64), sy(p.accuracy)))
        .collect();
    if !path.is_empty() {
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
            path.join(" "),
            PALETTE[0]
        );
    }
    for p in points {
        let (x, y) = (sx(p.train_size as f64), sy(p.accuracy));
        let _ = writeln!(
            out,
            "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"{}\"/>\n\
             <text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">{}</text>",
            PALETTE[0],
            h - pad + 14.0,
            p.train_size
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Stacked bars: one bar per normalized position, one segment per label.
pub fn distribution_svg(schema: &LabelSchema, matrix: &Array2<f64>) -> String {
    let bins = matrix.nrows();
    let (bar, gap, pad, h) = (36.0, 8.0, 50.0, 300.0);
    let w = pad * 2.0 + bins as f64 * (bar + gap) + 140.0;
    let mut out = open(w as usize, h as usize);
    let plot_h = h - 2.0 * pad;
    for (b, row) in matrix.rows().into_iter().enumerate() {
        let x = pad + b as f64 * (bar + gap);
        let mut y = h - pad;
        for (k, &share) in row.iter().enumerate() {
            let seg = share * plot_h;
            y -= seg;
            let _ = writeln!(
                out,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar}\" height=\"{seg:.1}\" fill=\"{}\"/>",
                PALETTE[k % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{}</text>",
            x + bar / 2.0,
            h - pad + 14.0,
            b + 1
        );
    }
    let legend_x = pad + bins as f64 * (bar + gap) + 10.0;
    for (k, label) in schema.labels().iter().enumerate() {
        let y = pad + k as f64 * 18.0;
        let _ = writeln!(
            out,
            "<rect x=\"{legend_x:.1}\" y=\"{y:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\">{}</text>",
            PALETTE[k % PALETTE.len()],
            legend_x + 16.0,
            y + 10.0,
            escape(label)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">normalized sentence position</text>",
        pad + bins as f64 * (bar + gap) / 2.0,
        h - 12.0
    );
    out.push_str("</svg>\n");
    out
}
