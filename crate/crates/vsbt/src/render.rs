//! CSV and SVG emission for a finished segmentation.
//!
//! The SVG is a self-contained document: inline attributes, no external
//! assets. The top panel draws the series colored by model label with
//! vertical lines at the learned split times; the bottom panel draws the
//! change probabilities as a step curve at t + ½.

use std::fmt::Write as _;
use std::path::Path;

use crate::persist::{PersistError, ResultsFile};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const WIDTH: f64 = 860.0;
const TOP_H: f64 = 290.0;
const BOTTOM_H: f64 = 130.0;
const MARGIN: f64 = 45.0;
const GAP: f64 = 30.0;

/// Rows t, x_t, label, change_prob; the change column is empty on the
/// last row because changes sit between t and t+1.
pub fn series_csv(results: &ResultsFile) -> String {
    let n = results.series.len();
    let mut out = String::from("t,x,label,change_prob\n");
    for t in 1..=n {
        let change = if t < n {
            format!("{}", results.report.change_prob[t - 1])
        } else {
            String::new()
        };
        let _ = writeln!(
            out,
            "{t},{},{},{change}",
            results.series[t - 1],
            results.report.labels[t - 1]
        );
    }
    out
}

pub fn write_series_csv(results: &ResultsFile, path: &Path) -> Result<(), PersistError> {
    std::fs::write(path, series_csv(results))?;
    Ok(())
}

struct Scale {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        let frac = if self.hi > self.lo {
            (v - self.lo) / (self.hi - self.lo)
        } else {
            0.5
        };
        self.px_lo + frac * (self.px_hi - self.px_lo)
    }
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

/// Render the segmentation figure.
pub fn segmentation_svg(results: &ResultsFile) -> String {
    let n = results.series.len();
    let x = &results.series;
    let labels = &results.report.labels;
    let height = TOP_H + GAP + BOTTOM_H + MARGIN;

    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in x {
        y_min = y_min.min(v);
        y_max = y_max.max(v);
    }
    let pad = 0.05 * (y_max - y_min).max(1e-9);
    let tx = Scale {
        lo: 1.0,
        hi: n.max(2) as f64,
        px_lo: MARGIN,
        px_hi: WIDTH - 15.0,
    };
    let ty = Scale {
        lo: y_min - pad,
        hi: y_max + pad,
        px_lo: MARGIN + TOP_H,
        px_hi: MARGIN,
    };
    let cy = Scale {
        lo: 0.0,
        hi: 1.0,
        px_lo: MARGIN + TOP_H + GAP + BOTTOM_H,
        px_hi: MARGIN + TOP_H + GAP,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"##
    );
    let _ = writeln!(
        svg,
        r##"<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="#ffffff"/>"##
    );

    // panel frames
    for (top, h, label) in [
        (MARGIN, TOP_H, "series / estimated models"),
        (MARGIN + TOP_H + GAP, BOTTOM_H, "change probability"),
    ] {
        let _ = writeln!(
            svg,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#888888" stroke-width="1"/>"##,
            px(MARGIN),
            px(top),
            px(WIDTH - 15.0 - MARGIN),
            px(h)
        );
        let _ = writeln!(
            svg,
            r##"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="#444444">{label}</text>"##,
            px(MARGIN),
            px(top - 6.0)
        );
    }

    // series segments colored by the left point's label
    for t in 1..n {
        let color = PALETTE[labels[t - 1] % PALETTE.len()];
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="1.3"/>"##,
            px(tx.map(t as f64)),
            px(ty.map(x[t - 1])),
            px(tx.map((t + 1) as f64)),
            px(ty.map(x[t]))
        );
    }
    for t in 1..=n {
        let color = PALETTE[labels[t - 1] % PALETTE.len()];
        let _ = writeln!(
            svg,
            r##"<circle cx="{}" cy="{}" r="2" fill="{color}"/>"##,
            px(tx.map(t as f64)),
            px(ty.map(x[t - 1]))
        );
    }

    // learned split times as vertical dashed lines over the top panel
    for split in &results.report.split_times {
        let sx = tx.map(split.time);
        let _ = writeln!(
            svg,
            r##"<line class="split" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#222222" stroke-width="1" stroke-dasharray="5,4"/>"##,
            px(sx),
            px(MARGIN),
            px(sx),
            px(MARGIN + TOP_H)
        );
        let _ = writeln!(
            svg,
            r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="#222222">{:.1}</text>"##,
            px(sx + 3.0),
            px(MARGIN + 14.0),
            split.time
        );
    }

    // change-probability step curve at t + 1/2
    if !results.report.change_prob.is_empty() {
        let mut d = String::new();
        for (i, &p) in results.report.change_prob.iter().enumerate() {
            let cx_px = tx.map(i as f64 + 1.5);
            let cy_px = cy.map(p);
            if i == 0 {
                let _ = write!(d, "M {} {}", px(cx_px), px(cy_px));
            } else {
                let _ = write!(d, " L {} {}", px(cx_px), px(cy_px));
            }
        }
        let _ = writeln!(
            svg,
            r##"<path d="{d}" fill="none" stroke="#d62728" stroke-width="1.4"/>"##
        );
        for frac in [0.0, 0.5, 1.0] {
            let _ = writeln!(
                svg,
                r##"<text x="{}" y="{}" font-family="sans-serif" font-size="10" fill="#666666">{frac}</text>"##,
                px(MARGIN - 28.0),
                px(cy.map(frac) + 3.0)
            );
        }
    }

    let _ = writeln!(svg, "</svg>");
    svg
}

pub fn write_segmentation_svg(results: &ResultsFile, path: &Path) -> Result<(), PersistError> {
    std::fs::write(path, segmentation_svg(results))?;
    Ok(())
}
