//! Critical-difference diagram: learners placed on an average-rank axis,
//! with one bar per group of learners that are not significantly different.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{KrvError, Result};
use crate::stats::RankReport;

const WIDTH: f64 = 640.0;
const MARGIN: f64 = 60.0;
const AXIS_Y: f64 = 90.0;
const BAR_GAP: f64 = 10.0;
const LABEL_GAP: f64 = 22.0;

/// Groups drawn as bars: those with at least two members.
pub fn drawn_groups(report: &RankReport) -> Vec<&[usize]> {
    report
        .groups
        .iter()
        .filter(|g| g.len() >= 2)
        .map(Vec::as_slice)
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// SVG text of the diagram. Rank 1 sits at the left end of the axis.
pub fn nemenyi_svg(report: &RankReport) -> String {
    let g = report.learners.len().max(2);
    let span = WIDTH - 2.0 * MARGIN;
    let x = |rank: f64| MARGIN + (rank - 1.0) / (g as f64 - 1.0) * span;
    let bars = drawn_groups(report);
    let bars_bottom = AXIS_Y + 20.0 + bars.len() as f64 * BAR_GAP;
    let height = bars_bottom + 30.0 + report.learners.len() as f64 * LABEL_GAP;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height:.0}" viewBox="0 0 {WIDTH} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);

    // CD ruler
    let cd_end = x(1.0 + report.cd.min(g as f64 - 1.0));
    let _ = writeln!(
        s,
        r#"<g class="cd"><line x1="{:.2}" y1="30" x2="{:.2}" y2="30" stroke="black" stroke-width="2"/><line x1="{:.2}" y1="25" x2="{:.2}" y2="35" stroke="black"/><line x1="{:.2}" y1="25" x2="{:.2}" y2="35" stroke="black"/><text x="{:.2}" y="20" text-anchor="middle">CD = {:.4}</text></g>"#,
        x(1.0),
        cd_end,
        x(1.0),
        x(1.0),
        cd_end,
        cd_end,
        (x(1.0) + cd_end) / 2.0,
        report.cd
    );

    // axis with integer ticks
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{:.2}" y1="{AXIS_Y}" x2="{:.2}" y2="{AXIS_Y}" stroke="black"/>"#,
        x(1.0),
        x(g as f64)
    );
    for r in 1..=g {
        let xr = x(r as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{xr:.2}" y1="{}" x2="{xr:.2}" y2="{AXIS_Y}" stroke="black"/><text x="{xr:.2}" y="{}" text-anchor="middle">{r}</text>"#,
            AXIS_Y - 6.0,
            AXIS_Y - 10.0
        );
    }

    // group bars
    for (i, group) in bars.iter().enumerate() {
        let lo = group
            .iter()
            .map(|&j| report.avg_ranks[j])
            .fold(f64::INFINITY, f64::min);
        let hi = group
            .iter()
            .map(|&j| report.avg_ranks[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let y = AXIS_Y + 20.0 + i as f64 * BAR_GAP;
        let _ = writeln!(
            s,
            r#"<line class="group" x1="{:.2}" y1="{y}" x2="{:.2}" y2="{y}" stroke="black" stroke-width="4"/>"#,
            x(lo) - 3.0,
            x(hi) + 3.0
        );
    }

    // learner markers, best rank first
    let mut order: Vec<usize> = (0..report.learners.len()).collect();
    order.sort_by(|&a, &b| {
        report.avg_ranks[a]
            .total_cmp(&report.avg_ranks[b])
            .then(a.cmp(&b))
    });
    for (row, &j) in order.iter().enumerate() {
        let xr = x(report.avg_ranks[j]);
        let y = bars_bottom + 20.0 + row as f64 * LABEL_GAP;
        let _ = writeln!(
            s,
            r#"<g class="learner"><line x1="{xr:.2}" y1="{AXIS_Y}" x2="{xr:.2}" y2="{y}" stroke="gray"/><circle cx="{xr:.2}" cy="{AXIS_Y}" r="3"/><text x="{:.2}" y="{:.2}">{} ({:.3})</text></g>"#,
            xr + 4.0,
            y + 4.0,
            escape(&report.learners[j]),
            report.avg_ranks[j]
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_nemenyi_diagram(report: &RankReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, nemenyi_svg(report)).map_err(|e| KrvError::io(path, e))
}
