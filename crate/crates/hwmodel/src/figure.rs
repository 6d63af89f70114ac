//! Deterministic SVG figures: two-zone bifurcation diagrams, winner-size
//! heatmaps over (phi, alpha), and per-pattern stability range charts.
//!
//! Output is plain SVG 1.1 text built with fixed coordinate formatting, so
//! identical inputs yield byte-identical files.

use std::path::Path;

use crate::error::Result;
use crate::sweep::{BifurcationReport, PartitionCell, PatternRanges};

const BASE_PALETTE: [&str; 16] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ac", "#1f77b4", "#8c564b", "#2ca02c", "#d62728", "#9467bd", "#17becf",
];

/// Stable color for the i-th legend entry; beyond the base palette the hue
/// walks a fixed golden-angle sequence.
fn palette(i: usize) -> String {
    if i < BASE_PALETTE.len() {
        return BASE_PALETTE[i].to_string();
    }
    let hue = ((i - BASE_PALETTE.len()) as f64 * 137.508) % 360.0;
    let (r, g, b) = hsv_to_rgb(hue, 0.55, 0.80);
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (u8, u8, u8) {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    )
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear map from data space to the pixel box (y axis points up).
struct Frame {
    px0: f64,
    py0: f64,
    px1: f64,
    py1: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn sx(&self, x: f64) -> f64 {
        self.px0 + (x - self.xmin) / (self.xmax - self.xmin) * (self.px1 - self.px0)
    }

    fn sy(&self, y: f64) -> f64 {
        self.py1 - (y - self.ymin) / (self.ymax - self.ymin) * (self.py1 - self.py0)
    }

    fn axes(&self, x_label: &str, y_label: &str) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#222222\" stroke-width=\"1\"/>\n",
            fmt(self.px0),
            fmt(self.py0),
            fmt(self.px1 - self.px0),
            fmt(self.py1 - self.py0),
        ));
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = self.xmin + t * (self.xmax - self.xmin);
            let yv = self.ymin + t * (self.ymax - self.ymin);
            let px = self.sx(xv);
            let py = self.sy(yv);
            s.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#222222\" stroke-width=\"1\"/>\n",
                fmt(px),
                fmt(self.py1),
                fmt(self.py1 + 4.0),
            ));
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
                fmt(px),
                fmt(self.py1 + 16.0),
                fmt_tick(xv),
            ));
            s.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#222222\" stroke-width=\"1\"/>\n",
                fmt(self.px0 - 4.0),
                fmt(py),
                fmt(self.px0),
            ));
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
                fmt(self.px0 - 7.0),
                fmt(py + 4.0),
                fmt_tick(yv),
            ));
        }
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
            fmt(0.5 * (self.px0 + self.px1)),
            fmt(self.py1 + 36.0),
            xml_escape(x_label),
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">{}</text>\n",
            fmt(self.px0 - 44.0),
            fmt(0.5 * (self.py0 + self.py1)),
            fmt(self.px0 - 44.0),
            fmt(0.5 * (self.py0 + self.py1)),
            xml_escape(y_label),
        ));
        s
    }
}

fn fmt_tick(v: f64) -> String {
    format!("{v:.2}")
}

fn svg_open(width: f64, height: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n<text x=\"{cx}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{t}</text>\n",
        w = fmt(width),
        h = fmt(height),
        cx = fmt(width / 2.0),
        t = xml_escape(title),
    )
}

fn legend_entry(x: f64, y: f64, color: &str, dashed: bool, label: &str) -> String {
    let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
    format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"{}/>\n<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
        fmt(x),
        fmt(y),
        fmt(x + 26.0),
        fmt(y),
        color,
        dash,
        fmt(x + 32.0),
        fmt(y + 4.0),
        xml_escape(label),
    )
}

/// Polyline segments of consecutive rows sharing a flag value; each segment
/// is drawn solid when the flag holds and dashed otherwise.
fn branch_paths(
    frame: &Frame,
    points: &[(f64, f64, bool)],
    color: &str,
) -> String {
    let mut s = String::new();
    let mut run: Vec<(f64, f64)> = Vec::new();
    let mut run_flag = true;
    let flush = |run: &mut Vec<(f64, f64)>, flag: bool, s: &mut String| {
        if run.len() >= 2 {
            let pts: Vec<String> = run
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt(frame.sx(x)), fmt(frame.sy(y))))
                .collect();
            let dash = if flag { "" } else { " stroke-dasharray=\"6 4\"" };
            s.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{}/>\n",
                pts.join(" "),
                color,
                dash
            ));
        }
        run.clear();
    };
    for &(x, y, flag) in points {
        if run.is_empty() {
            run_flag = flag;
        }
        if flag != run_flag {
            let last = *run.last().unwrap();
            flush(&mut run, run_flag, &mut s);
            run.push(last);
            run_flag = flag;
        }
        run.push((x, y));
    }
    flush(&mut run, run_flag, &mut s);
    s
}

/// Two-zone bifurcation diagram: equilibrium shares against phi, solid where
/// locally stable and dashed where not, with both thresholds marked.
pub fn bifurcation_svg(report: &BifurcationReport) -> String {
    let (w, h) = (760.0, 480.0);
    let phis: Vec<f64> = report.rows.iter().map(|r| r.phi).collect();
    let frame = Frame {
        px0: 70.0,
        py0: 50.0,
        px1: w - 210.0,
        py1: h - 60.0,
        xmin: phis.first().copied().unwrap_or(0.0),
        xmax: phis.last().copied().unwrap_or(1.0),
        ymin: -0.05,
        ymax: 1.05,
    };
    let mut s = svg_open(w, h, &format!("two-zone equilibria, alpha = {}", report.alpha));
    s.push_str(&format!("<desc>{}</desc>\n", xml_escape(&report.discriminant_note)));
    s.push_str(&frame.axes("phi", "zone share at equilibrium"));

    let disp: Vec<(f64, f64, bool)> = report
        .rows
        .iter()
        .map(|r| (r.phi, 0.5, r.dispersion_stable))
        .collect();
    let top: Vec<(f64, f64, bool)> = report
        .rows
        .iter()
        .map(|r| (r.phi, 1.0, r.corner_stable))
        .collect();
    let bottom: Vec<(f64, f64, bool)> = report
        .rows
        .iter()
        .map(|r| (r.phi, 0.0, r.corner_stable))
        .collect();
    s.push_str(&branch_paths(&frame, &disp, "#4e79a7"));
    s.push_str(&branch_paths(&frame, &top, "#e15759"));
    s.push_str(&branch_paths(&frame, &bottom, "#e15759"));

    for (value, label) in [
        (report.phi_star, "phi*"),
        (report.phi_double_star, "phi**"),
    ] {
        if let Some(v) = value {
            let px = frame.sx(v);
            s.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#777777\" stroke-width=\"1\" stroke-dasharray=\"3 3\"/>\n",
                fmt(px),
                fmt(frame.py0),
                fmt(frame.py1),
            ));
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{} = {}</text>\n",
                fmt(px),
                fmt(frame.py0 - 6.0),
                label,
                fmt(v),
            ));
        }
    }

    let lx = w - 190.0;
    s.push_str(&legend_entry(lx, 70.0, "#4e79a7", false, "dispersion (stable)"));
    s.push_str(&legend_entry(lx, 90.0, "#4e79a7", true, "dispersion (unstable)"));
    s.push_str(&legend_entry(lx, 110.0, "#e15759", false, "corner branches"));
    s.push_str(&legend_entry(lx, 130.0, "#777777", true, "thresholds"));
    let switch = report
        .phi_double_star
        .map_or("no winner switch in range".to_string(), |v| {
            format!("winner switches at phi = {}", fmt(v))
        });
    s.push_str(&format!(
        "<text x=\"{}\" y=\"150\" font-size=\"11\">{}</text>\n",
        fmt(lx),
        xml_escape(&switch),
    ));
    s.push_str("</svg>\n");
    s
}

/// Heatmap of winner support sizes over the (phi, alpha) grid; one fixed
/// color per distinct size, mirrored in the legend.
pub fn partition_heatmap_svg(cells: &[PartitionCell]) -> String {
    let mut phis: Vec<f64> = cells.iter().map(|c| c.phi).collect();
    phis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    phis.dedup();
    let mut alphas: Vec<f64> = cells.iter().map(|c| c.alpha).collect();
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    alphas.dedup();
    let mut sizes: Vec<usize> = cells.iter().map(|c| c.winner_m).collect();
    sizes.sort_unstable();
    sizes.dedup();

    let (w, h) = (760.0, 480.0);
    let frame = Frame {
        px0: 70.0,
        py0: 50.0,
        px1: w - 210.0,
        py1: h - 60.0,
        xmin: 0.0,
        xmax: phis.len() as f64,
        ymin: 0.0,
        ymax: alphas.len() as f64,
    };
    let mut s = svg_open(w, h, "global winner size over (phi, alpha)");
    let cw = (frame.px1 - frame.px0) / phis.len() as f64;
    let ch = (frame.py1 - frame.py0) / alphas.len() as f64;
    for c in cells {
        let xi = phis.iter().position(|&p| p == c.phi).unwrap();
        let yi = alphas.iter().position(|&a| a == c.alpha).unwrap();
        let color_idx = sizes.iter().position(|&m| m == c.winner_m).unwrap();
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
            fmt(frame.px0 + xi as f64 * cw),
            fmt(frame.py1 - (yi + 1) as f64 * ch),
            fmt(cw + 0.05),
            fmt(ch + 0.05),
            palette(color_idx),
        ));
    }
    // Axis labels in data units: ticks reuse the index frame, so draw custom
    // value labels at the corners instead.
    s.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#222222\" stroke-width=\"1\"/>\n",
        fmt(frame.px0),
        fmt(frame.py0),
        fmt(frame.px1 - frame.px0),
        fmt(frame.py1 - frame.py0),
    ));
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let phi = phis[0] + t * (phis[phis.len() - 1] - phis[0]);
        let alpha = alphas[0] + t * (alphas[alphas.len() - 1] - alphas[0]);
        let px = frame.px0 + t * (frame.px1 - frame.px0);
        let py = frame.py1 - t * (frame.py1 - frame.py0);
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            fmt(px),
            fmt(frame.py1 + 16.0),
            fmt_tick(phi),
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            fmt(frame.px0 - 7.0),
            fmt(py + 4.0),
            fmt_tick(alpha),
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">phi</text>\n",
        fmt(0.5 * (frame.px0 + frame.px1)),
        fmt(frame.py1 + 36.0),
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">alpha</text>\n",
        fmt(frame.px0 - 44.0),
        fmt(0.5 * (frame.py0 + frame.py1)),
        fmt(frame.px0 - 44.0),
        fmt(0.5 * (frame.py0 + frame.py1)),
    ));
    let lx = w - 190.0;
    s.push_str(&format!(
        "<text x=\"{}\" y=\"56\" font-size=\"12\">winner M</text>\n",
        fmt(lx)
    ));
    for (i, m) in sizes.iter().enumerate() {
        let y = 70.0 + i as f64 * 18.0;
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n<text x=\"{}\" y=\"{}\" font-size=\"11\">M = {}</text>\n",
            fmt(lx),
            fmt(y - 10.0),
            palette(i),
            fmt(lx + 18.0),
            fmt(y),
            m,
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Horizontal bars of locally stable phi ranges per pattern, with the
/// global-winner stretches overlaid.
pub fn range_chart_svg(ranges: &[PatternRanges], alpha: f64) -> String {
    let row_h = 14.0;
    let (w, top, bottom) = (760.0, 50.0, 60.0);
    let h = top + bottom + row_h * ranges.len() as f64;
    let frame = Frame {
        px0: 120.0,
        py0: top,
        px1: w - 200.0,
        py1: h - bottom,
        xmin: 0.0,
        xmax: 1.0,
        ymin: 0.0,
        ymax: 1.0,
    };
    let mut s = svg_open(w, h, &format!("locally stable phi ranges, alpha = {alpha}"));
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let px = frame.sx(t);
        s.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            fmt(px),
            fmt(frame.py0),
            fmt(frame.py1),
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            fmt(px),
            fmt(frame.py1 + 16.0),
            fmt_tick(t),
        ));
    }
    for (i, r) in ranges.iter().enumerate() {
        let y = top + i as f64 * row_h;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{} (M={})</text>\n",
            fmt(frame.px0 - 6.0),
            fmt(y + row_h - 4.0),
            r.pattern_id,
            r.m,
        ));
        for iv in &r.locally_stable {
            s.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#9ecae9\"/>\n",
                fmt(frame.sx(iv.lo)),
                fmt(y + 2.0),
                fmt(frame.sx(iv.hi) - frame.sx(iv.lo)),
                fmt(row_h - 4.0),
            ));
        }
        for iv in &r.global_winner {
            s.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#d62728\"/>\n",
                fmt(frame.sx(iv.lo)),
                fmt(y + row_h / 2.0 - 2.0),
                fmt(frame.sx(iv.hi) - frame.sx(iv.lo)),
                fmt(4.0),
            ));
        }
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">phi</text>\n",
        fmt(0.5 * (frame.px0 + frame.px1)),
        fmt(frame.py1 + 36.0),
    ));
    let lx = w - 190.0;
    s.push_str(&format!(
        "<rect x=\"{}\" y=\"60\" width=\"12\" height=\"12\" fill=\"#9ecae9\"/>\n<text x=\"{}\" y=\"70\" font-size=\"11\">locally stable</text>\n",
        fmt(lx),
        fmt(lx + 18.0),
    ));
    s.push_str(&format!(
        "<rect x=\"{}\" y=\"80\" width=\"12\" height=\"12\" fill=\"#d62728\"/>\n<text x=\"{}\" y=\"90\" font-size=\"11\">global winner</text>\n",
        fmt(lx),
        fmt(lx + 18.0),
    ));
    s.push_str("</svg>\n");
    s
}

/// Writes an SVG string to disk.
pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg)?;
    Ok(())
}
