//! Minimal standalone SVG figures.

use std::fmt::Write as _;

use crate::formats::{CurveFile, RasterClass, RasterFile};

const W: f64 = 720.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut x, mut y) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for (a, b) in points.filter(|(a, b)| a.is_finite() && b.is_finite()) {
            x = (x.0.min(a), x.1.max(a));
            y = (y.0.min(b), y.1.max(b));
        }
        let pad = |r: (f64, f64)| {
            if !(r.0 <= r.1) {
                (0.0, 1.0)
            } else if r.1 - r.0 < 1e-12 {
                (r.0 - 0.5, r.1 + 0.5)
            } else {
                let d = 0.04 * (r.1 - r.0);
                (r.0 - d, r.1 + d)
            }
        };
        Frame { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
        let (x0, x1, y0, y1) = (MARGIN, W - MARGIN, H - MARGIN, MARGIN);
        let _ = writeln!(s, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
        for k in 0..=5 {
            let f = k as f64 / 5.0;
            let (xv, yv) = (self.x.0 + f * (self.x.1 - self.x.0), self.y.0 + f * (self.y.1 - self.y.0));
            let (xp, yp) = (self.px(xv), self.py(yv));
            let _ = writeln!(s, r#"<line x1="{xp:.1}" y1="{y0}" x2="{xp:.1}" y2="{}" stroke="black"/>"#, y0 + 5.0);
            let _ = writeln!(s, r#"<text x="{xp:.1}" y="{}" text-anchor="middle">{}</text>"#, y0 + 18.0, tick(xv));
            let _ = writeln!(s, r#"<line x1="{}" y1="{yp:.1}" x2="{x0}" y2="{yp:.1}" stroke="black"/>"#, x0 - 5.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 8.0, yp + 4.0, tick(yv));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 18.0, escape(xlabel));
        let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#, H / 2.0, H / 2.0, escape(ylabel));
        s
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e4) {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(s: &mut String, f: &Frame, pts: &[(f64, f64)], color: &str, dashed: bool) {
    if pts.len() < 2 {
        return;
    }
    let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
    let dash = if dashed { r#" stroke-dasharray="5,4""# } else { "" };
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, coords.join(" "));
}

fn marker(s: &mut String, f: &Frame, (x, y): (f64, f64), color: &str, label: &str) {
    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"><title>{}</title></circle>"#, f.px(x), f.py(y), escape(label));
}

/// Amplitude against `omega`: stable segments solid, unstable dashed.
pub fn branch_plot(branches: &[CurveFile], title: &str) -> String {
    let frame = Frame::fit(branches.iter().flat_map(|b| b.rows.iter().map(|r| (r.omega, r.xmax))));
    let mut s = frame.open(title, "omega", "max x");
    for (k, b) in branches.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut run: Vec<(f64, f64)> = Vec::new();
        let mut stable = None;
        for r in &b.rows {
            let p = (r.omega, r.xmax);
            if stable.is_some_and(|st| st != r.stable) {
                run.push(p);
                polyline(&mut s, &frame, &run, color, stable == Some(false));
                run.clear();
            }
            stable = Some(r.stable);
            run.push(p);
        }
        polyline(&mut s, &frame, &run, color, stable == Some(false));
        for r in b.rows.iter().filter(|r| !r.flags.is_empty()) {
            let c = if r.has_flag("SN") { "black" } else if r.has_flag("PF") { "red" } else { "orange" };
            marker(&mut s, &frame, (r.omega, r.xmax), c, &r.flags);
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Tongue curves in the `(omega, A)` plane over an optional raster of periodic cells.
pub fn tongue_plot(tongues: &[CurveFile], raster: Option<&RasterFile>, title: &str, gamma_plane: bool) -> String {
    let second = |r: &crate::formats::OrbitRow| if gamma_plane { r.gamma } else { r.a };
    let mut pts: Vec<(f64, f64)> = tongues.iter().flat_map(|t| t.rows.iter().map(|r| (r.omega, second(r)))).collect();
    if let Some(r) = raster {
        pts.extend(r.rows.iter().map(|c| (c.omega, c.a)));
    }
    let frame = Frame::fit(pts.into_iter());
    let mut s = frame.open(title, "omega", if gamma_plane { "gamma" } else { "A" });
    if let Some(r) = raster {
        cells(&mut s, &frame, r);
    }
    for (k, t) in tongues.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let line: Vec<(f64, f64)> = t.rows.iter().map(|r| (r.omega, second(r))).collect();
        polyline(&mut s, &frame, &line, color, false);
        for r in t.rows.iter().filter(|r| r.has_flag("cusp")) {
            marker(&mut s, &frame, (r.omega, second(r)), "black", "cusp");
        }
    }
    s.push_str("</svg>\n");
    s
}

fn cell_color(row: &crate::formats::RasterRow) -> Option<&'static str> {
    match row.class {
        RasterClass::Periodic if row.n == 1 => None,
        RasterClass::Periodic => Some(PALETTE[(row.n as usize - 2) % PALETTE.len()]),
        RasterClass::QuasiPeriodic => Some("#404040"),
        RasterClass::Unresolved => Some("#bbbbbb"),
    }
}

fn cells(s: &mut String, frame: &Frame, r: &RasterFile) {
    let step = |v: Vec<f64>| {
        let mut v = v;
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    };
    let dw = step(r.rows.iter().map(|c| c.omega).collect());
    let da = step(r.rows.iter().map(|c| c.a).collect());
    let wpx = if dw.is_finite() { (frame.px(dw) - frame.px(0.0)).abs() } else { 4.0 };
    let hpx = if da.is_finite() { (frame.py(0.0) - frame.py(da)).abs() } else { 4.0 };
    for c in &r.rows {
        if let Some(color) = cell_color(c) {
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.6"/>"#,
                frame.px(c.omega) - wpx / 2.0,
                frame.py(c.a) - hpx / 2.0,
                wpx,
                hpx
            );
        }
    }
}

/// Classification raster; period-1 cells are left blank.
pub fn raster_plot(r: &RasterFile, title: &str) -> String {
    let frame = Frame::fit(r.rows.iter().map(|c| (c.omega, c.a)));
    let mut s = frame.open(title, "omega", "A");
    cells(&mut s, &frame, r);
    s.push_str("</svg>\n");
    s
}

/// One-parameter scan: sampled maximum of `x` against `omega`.
pub fn xmax_scan_plot(r: &RasterFile, title: &str) -> String {
    let frame = Frame::fit(r.rows.iter().map(|c| (c.omega, c.xmax)));
    let mut s = frame.open(title, "omega", "max x");
    for c in r.rows.iter().filter(|c| c.xmax.is_finite()) {
        let color = cell_color(c).unwrap_or("black");
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="1.6" fill="{color}"/>"#, frame.px(c.omega), frame.py(c.xmax));
    }
    s.push_str("</svg>\n");
    s
}
