//! Hand-written SVG 1.1 figures. Each file carries its provenance as JSON
//! inside `<metadata>`.

use super::analyze::{load_bundle, AnalysisBundle, ConfusionEntry, GroupPag, RocOutput};
use super::{Provenance, Result, RunConfig, Stage, StageWriter};
use std::fmt::Write as _;

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Svg {
    buf: String,
}

impl Svg {
    fn new(width: u32, height: u32, title: &str, prov: &Provenance) -> Self {
        let mut buf = String::new();
        buf.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            buf,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">"
        );
        let _ = writeln!(buf, "<title>{}</title>", esc(title));
        let meta = serde_json::to_string(prov).expect("provenance serializes");
        let _ = writeln!(buf, "<metadata>{}</metadata>", esc(&meta));
        let _ = writeln!(buf, "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
        Self { buf }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(self.buf, "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\">{}</text>", esc(s));
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        let _ = writeln!(self.buf, "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" {style}/>");
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, style: &str) {
        let _ = writeln!(self.buf, "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" {style}/>");
    }

    fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }
}

/// ROC overlay. Curves are drawn in data coordinates inside a scaled group,
/// so each polyline's `points` are exactly the `(fpr, tpr)` pairs of the ROC JSON.
pub fn render_roc_svg(curves: &[RocOutput], prov: &Provenance) -> String {
    let (x0, y0, size) = (60.0, 340.0, 300.0);
    let mut svg = Svg::new(560, 400, "ROC curves", prov);
    svg.rect(x0, y0 - size, size, size, "fill=\"none\" stroke=\"black\"");
    svg.line(x0, y0, x0 + size, y0 - size, "stroke=\"#999\" stroke-dasharray=\"4,4\"");
    for t in 0..=4 {
        let v = t as f64 / 4.0;
        svg.text(x0 + v * size, y0 + 16.0, "middle", &format!("{v:.2}"));
        svg.text(x0 - 6.0, y0 - v * size + 4.0, "end", &format!("{v:.2}"));
    }
    svg.text(x0 + size / 2.0, y0 + 34.0, "middle", "False positive rate");
    svg.text(18.0, y0 - size / 2.0, "middle", "True positive rate");
    let _ = writeln!(svg.buf, "<g transform=\"translate({x0},{y0}) scale({size},-{size})\">");
    for (i, c) in curves.iter().enumerate() {
        let pts: Vec<String> = c.points.iter().map(|p| format!("{},{}", p.0, p.1)).collect();
        let _ = writeln!(
            svg.buf,
            "<polyline id=\"roc-{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"0.006\" points=\"{}\"/>",
            esc(&c.model),
            COLORS[i % COLORS.len()],
            pts.join(" ")
        );
    }
    svg.buf.push_str("</g>\n");
    for (i, c) in curves.iter().enumerate() {
        let y = 60.0 + 20.0 * i as f64;
        svg.line(375.0, y - 4.0, 395.0, y - 4.0, &format!("stroke=\"{}\" stroke-width=\"2\"", COLORS[i % COLORS.len()]));
        svg.text(400.0, y, "start", &format!("{} AUC {:.3} [{:.3}, {:.3}]", c.model, c.auc, c.ci_low, c.ci_high));
    }
    if curves.is_empty() {
        svg.text(x0 + size / 2.0, y0 - size / 2.0, "middle", "no ROC curve available");
    }
    svg.finish()
}

/// Overlaid PAG histograms, one colour per group, on shared bins.
pub fn render_histogram_svg(groups: &[GroupPag], n_bins: usize, prov: &Provenance) -> String {
    let (x0, y0, w, h) = (60.0, 330.0, 420.0, 280.0);
    let mut svg = Svg::new(620, 380, "PAG distributions", prov);
    svg.line(x0, y0, x0 + w, y0, "stroke=\"black\"");
    svg.line(x0, y0, x0, y0 - h, "stroke=\"black\"");
    svg.text(x0 + w / 2.0, y0 + 36.0, "middle", "PAG (years)");
    let all: Vec<f64> = groups.iter().flat_map(|g| g.values.iter().copied()).collect();
    for (i, g) in groups.iter().enumerate() {
        let y = 50.0 + 20.0 * i as f64;
        svg.rect(x0 + w + 15.0, y - 10.0, 12.0, 12.0, &format!("fill=\"{}\" fill-opacity=\"0.5\"", COLORS[i % COLORS.len()]));
        svg.text(x0 + w + 32.0, y, "start", &format!("{} (n = {})", g.group, g.n));
    }
    if all.is_empty() || n_bins == 0 {
        svg.text(x0 + w / 2.0, y0 - h / 2.0, "middle", "n = 0");
        return svg.finish();
    }
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / n_bins as f64;
    let bin = |v: f64| (((v - lo) / width).floor() as usize).min(n_bins - 1);
    let counts: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| {
            let mut c = vec![0; n_bins];
            for &v in &g.values {
                c[bin(v)] += 1;
            }
            c
        })
        .collect();
    let peak = counts.iter().flatten().copied().max().unwrap_or(1).max(1) as f64;
    let bw = w / n_bins as f64;
    for (i, c) in counts.iter().enumerate() {
        for (k, &n) in c.iter().enumerate() {
            if n > 0 {
                let bh = h * n as f64 / peak;
                svg.rect(x0 + k as f64 * bw, y0 - bh, bw, bh, &format!("fill=\"{}\" fill-opacity=\"0.5\"", COLORS[i % COLORS.len()]));
            }
        }
    }
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        svg.text(x0 + w * t as f64 / 4.0, y0 + 16.0, "middle", &format!("{v:.1}"));
    }
    svg.text(x0 - 6.0, y0 - h + 4.0, "end", &format!("{peak}"));
    svg.text(x0 - 6.0, y0 + 4.0, "end", "0");
    svg.finish()
}

/// Strip plot of PAG per group with mean ± SD bars. An empty group is drawn
/// with an explicit `n = 0` note.
pub fn render_group_svg(groups: &[GroupPag], prov: &Provenance) -> String {
    let (x0, y0, w, h) = (70.0, 330.0, 480.0, 280.0);
    let mut svg = Svg::new(600, 390, "PAG by group", prov);
    svg.line(x0, y0, x0 + w, y0, "stroke=\"black\"");
    svg.line(x0, y0, x0, y0 - h, "stroke=\"black\"");
    svg.text(20.0, y0 - h / 2.0, "middle", "PAG");
    let all: Vec<f64> = groups.iter().flat_map(|g| g.values.iter().copied()).collect();
    let lo = all.iter().copied().fold(0.0, f64::min) - 1.0;
    let hi = all.iter().copied().fold(0.0, f64::max) + 1.0;
    let y_of = |v: f64| y0 - h * (v - lo) / (hi - lo);
    svg.line(x0, y_of(0.0), x0 + w, y_of(0.0), "stroke=\"#bbb\" stroke-dasharray=\"3,3\"");
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        svg.text(x0 - 6.0, y_of(v) + 4.0, "end", &format!("{v:.1}"));
    }
    let slot = w / groups.len().max(1) as f64;
    for (i, g) in groups.iter().enumerate() {
        let cx = x0 + slot * (i as f64 + 0.5);
        svg.text(cx, y0 + 18.0, "middle", &format!("{} (n = {})", g.group, g.n));
        if g.n == 0 {
            svg.text(cx, y0 - h / 2.0, "middle", "n = 0");
            continue;
        }
        let color = COLORS[i % COLORS.len()];
        for (k, &v) in g.values.iter().enumerate() {
            // deterministic spread: golden-ratio sequence in [-0.25, 0.25] of the slot
            let jitter = ((k as f64 * 0.618_033_988_75).fract() - 0.5) * 0.5 * slot;
            let _ = writeln!(svg.buf, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\" fill-opacity=\"0.6\"/>", cx + jitter, y_of(v));
        }
        if let (Some(m), sd) = (g.mean, g.sd.unwrap_or(0.0)) {
            svg.line(cx - slot * 0.3, y_of(m), cx + slot * 0.3, y_of(m), "stroke=\"black\" stroke-width=\"2\"");
            svg.line(cx, y_of(m - sd), cx, y_of(m + sd), "stroke=\"black\"");
        }
    }
    svg.finish()
}

/// One 2 × 2 grid per operating point: rows are the true class, columns the call.
pub fn render_confusion_svg(entries: &[ConfusionEntry], prov: &Provenance) -> String {
    let cell = 60.0;
    let panel = 2.0 * cell + 80.0;
    let width = (panel * entries.len().max(1) as f64 + 40.0) as u32;
    let mut svg = Svg::new(width, 260, "Confusion matrices", prov);
    if entries.is_empty() {
        svg.text(width as f64 / 2.0, 130.0, "middle", "n = 0");
    }
    for (i, e) in entries.iter().enumerate() {
        let x = 70.0 + panel * i as f64;
        let y = 70.0;
        svg.text(x + cell, 30.0, "middle", &format!("FPR @ {:.2}", e.fpr_target));
        svg.text(x + cell, 48.0, "middle", &format!("TPR {:.3}, FPR {:.3}", e.achieved_tpr, e.achieved_fpr));
        let cells = [[e.tp, e.fn_], [e.fp, e.tn]];
        let total = (e.tp + e.fn_ + e.fp + e.tn).max(1) as f64;
        for (r, row) in cells.iter().enumerate() {
            for (c, &n) in row.iter().enumerate() {
                let shade = 255.0 - 180.0 * n as f64 / total;
                let fill = format!("fill=\"rgb({0:.0},{0:.0},255)\" stroke=\"black\"", shade);
                svg.rect(x + c as f64 * cell, y + r as f64 * cell, cell, cell, &fill);
                svg.text(x + (c as f64 + 0.5) * cell, y + (r as f64 + 0.5) * cell + 4.0, "middle", &n.to_string());
            }
        }
        svg.text(x - 6.0, y + 0.5 * cell + 4.0, "end", "csPC");
        svg.text(x - 6.0, y + 1.5 * cell + 4.0, "end", "ncsPC");
        svg.text(x + 0.5 * cell, y + 2.0 * cell + 16.0, "middle", "pred +");
        svg.text(x + 1.5 * cell, y + 2.0 * cell + 16.0, "middle", "pred -");
    }
    svg.finish()
}

pub fn render_all(bundle: &AnalysisBundle) -> Vec<(&'static str, String)> {
    let prov = &bundle.provenance;
    vec![
        ("pag_distribution.svg", render_histogram_svg(&bundle.groups[..2.min(bundle.groups.len())], 20, prov)),
        ("pag_subgroups.svg", render_group_svg(&bundle.groups, prov)),
        ("roc.svg", render_roc_svg(&bundle.roc, prov)),
        ("confusion.svg", render_confusion_svg(&bundle.confusion, prov)),
    ]
}

pub fn cmd_plot(cfg: &RunConfig) -> Result<()> {
    let bundle = load_bundle(cfg)?;
    let mut w = StageWriter::new(cfg, Stage::Plot)?;
    for (name, svg) in render_all(&bundle) {
        w.write(name, svg.as_bytes())?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance { seed: 9, config_hash: "ab12".into(), artifact_version: super::super::ARTIFACT_VERSION.into() }
    }

    fn polyline_points(svg: &str, id: &str) -> Vec<(f64, f64)> {
        let tag = format!("<polyline id=\"roc-{id}\"");
        let start = svg.find(&tag).unwrap();
        let rest = &svg[start..];
        let p = rest.find("points=\"").unwrap() + 8;
        let end = rest[p..].find('"').unwrap();
        rest[p..p + end]
            .split(' ')
            .map(|xy| {
                let (x, y) = xy.split_once(',').unwrap();
                (x.parse().unwrap(), y.parse().unwrap())
            })
            .collect()
    }

    #[test]
    fn roc_polyline_equals_json_points() {
        let roc = RocOutput {
            model: "II".into(),
            points: vec![(0.0, 0.0, None), (0.0, 1.0 / 3.0, Some(0.9)), (0.1, 0.7, Some(0.5)), (1.0, 1.0, Some(0.1))],
            auc: 0.9,
            ci_low: 0.8,
            ci_high: 0.95,
            n_replicates: 10,
            seed: 1,
        };
        let svg = render_roc_svg(std::slice::from_ref(&roc), &prov());
        let expected: Vec<(f64, f64)> = roc.points.iter().map(|p| (p.0, p.1)).collect();
        assert_eq!(polyline_points(&svg, "II"), expected);
        assert!(svg.contains("<metadata>{\"seed\":9,\"config_hash\":\"ab12\""));
        assert_eq!(svg, render_roc_svg(&[roc], &prov()));
    }

    #[test]
    fn empty_group_gets_n_zero_note() {
        let groups = vec![
            GroupPag { group: "ncsPC".into(), n: 2, mean: Some(0.5), sd: Some(0.7), display: String::new(), values: vec![0.0, 1.0] },
            GroupPag { group: "csPC PI-RADS<=2".into(), n: 0, mean: None, sd: None, display: "-".into(), values: vec![] },
        ];
        let svg = render_group_svg(&groups, &prov());
        assert!(svg.contains(">n = 0<"));
        assert!(svg.contains("csPC PI-RADS&lt;=2 (n = 0)"));
        let hist = render_histogram_svg(&groups[1..], 10, &prov());
        assert!(hist.contains(">n = 0<"));
        assert!(render_confusion_svg(&[], &prov()).contains(">n = 0<"));
    }
}
