//! Static SVG figures: phase portraits, states, coefficient profiles and
//! space-time heatmaps. Nothing here feeds back into computations.

use std::fmt::Write as _;

use crate::model::{Grid, PiecewiseProfile};
use crate::nonlinearity::Nonlinearity;
use crate::phase_plane::InvariantRegion;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Maps data coordinates onto the plotting area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    svg: String,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64), title: &str, xlabel: &str, ylabel: &str) -> Self {
        let pad = |r: (f64, f64)| if r.1 > r.0 { r } else { (r.0 - 0.5, r.0 + 0.5) };
        let mut f = Frame { x: pad(x), y: pad(y), svg: String::new() };
        let _ = writeln!(
            f.svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(f.svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            f.svg,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(title)
        );
        let _ =
            writeln!(f.svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(xlabel));
        let _ = writeln!(
            f.svg,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(ylabel)
        );
        f.axes();
        f
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }

    fn axes(&mut self) {
        let (x0, x1, y0, y1) = (MARGIN, W - MARGIN, H - MARGIN, MARGIN);
        let _ = writeln!(
            self.svg,
            r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for k in 0..=4 {
            let t = k as f64 / 4.0;
            let xv = self.x.0 + t * (self.x.1 - self.x.0);
            let yv = self.y.0 + t * (self.y.1 - self.y.0);
            let (px, py) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                self.svg,
                r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y0 + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                self.svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                x0 - 4.0,
                py + 4.0,
                tick(yv)
            );
        }
    }

    fn polyline(&mut self, pts: impl IntoIterator<Item = (f64, f64)>, color: &str, dashed: bool) {
        let mut d = String::new();
        for (x, y) in pts {
            if x.is_finite() && y.is_finite() {
                let _ = write!(d, "{:.2},{:.2} ", self.px(x), self.py(y));
            }
        }
        let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            self.svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            d.trim_end()
        );
    }

    fn legend(&mut self, labels: &[&str]) {
        for (i, l) in labels.iter().enumerate() {
            let y = MARGIN + 14.0 + 16.0 * i as f64;
            let c = COLORS[i % COLORS.len()];
            let _ = writeln!(
                self.svg,
                r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{c}" stroke-width="2"/>"#,
                W - MARGIN - 110.0,
                W - MARGIN - 90.0
            );
            let _ = writeln!(self.svg, r#"<text x="{}" y="{}">{}</text>"#, W - MARGIN - 85.0, y + 4.0, escape(l));
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

/// Orbits in the `(m, m_x)` plane with the boundary of `Γ_μ` dashed.
pub fn phase_portrait(orbits: &[Vec<(f64, f64)>], mu: f64, nl: &Nonlinearity, title: &str) -> String {
    let region = InvariantRegion::new(mu).ok();
    let ms: Vec<f64> = (0..=400).map(|i| -1.0 + 2.0 * i as f64 / 400.0).collect();
    let upper: Vec<(f64, f64)> =
        region.map(|r| ms.iter().map(|&m| (m, r.boundary_slope(m, nl))).collect()).unwrap_or_default();
    let ys = range(orbits.iter().flatten().map(|p| p.1).chain(upper.iter().map(|p| p.1)));
    let lim = ys.0.abs().max(ys.1.abs()).max(1e-3) * 1.05;
    let xs = range(orbits.iter().flatten().map(|p| p.0).chain([-1.0, 1.0]));
    let mut f = Frame::new((xs.0 * 1.05, xs.1 * 1.05), (-lim, lim), title, "m", "m_x");
    f.polyline(upper.iter().copied(), "black", true);
    f.polyline(upper.iter().map(|&(m, s)| (m, -s)), "black", true);
    for (i, o) in orbits.iter().enumerate() {
        f.polyline(o.iter().copied(), COLORS[i % COLORS.len()], false);
    }
    f.finish()
}

/// Curves in physical space over `grid`.
pub fn states_plot(grid: &Grid, series: &[(&str, &[f64])], title: &str) -> String {
    let ys = range(series.iter().flat_map(|(_, v)| v.iter().copied()).chain([-1.0, 1.0]));
    let mut f = Frame::new((grid.lo, grid.hi), (ys.0 * 1.05, ys.1 * 1.05), title, "x", "m");
    for (i, (_, v)) in series.iter().enumerate() {
        f.polyline(v.iter().enumerate().map(|(j, y)| (grid.x(j), *y)), COLORS[i % COLORS.len()], false);
    }
    f.legend(&series.iter().map(|s| s.0).collect::<Vec<_>>());
    f.finish()
}

/// A coefficient profile on a log10 scale.
pub fn profile_plot(profile: &PiecewiseProfile, title: &str) -> String {
    let logs: Vec<f64> = profile.values().iter().map(|v| v.log10()).collect();
    let ys = range(logs.iter().copied());
    let mut f = Frame::new((profile.lo(), profile.hi()), (ys.0 - 0.5, ys.1 + 0.5), title, "x", "log10 coefficient");
    let pts: Vec<(f64, f64)> = (0..profile.len())
        .flat_map(|i| {
            let (a, b) = profile.cell(i);
            [(a, logs[i]), (b, logs[i])]
        })
        .collect();
    f.polyline(pts, COLORS[0], false);
    f.finish()
}

/// `m(x, t)` as coloured cells, blue for `-1` through white to red for `+1`.
pub fn heatmap(grid: &Grid, times: &[f64], snapshots: &[Vec<f64>], title: &str) -> String {
    let t = range(times.iter().copied());
    let mut f = Frame::new((grid.lo, grid.hi), t, title, "x", "t");
    let cols = grid.n.min(200);
    for (k, snap) in snapshots.iter().enumerate() {
        let t0 = times[k];
        let t1 = times.get(k + 1).copied().unwrap_or(t.1);
        if t1 <= t0 {
            continue;
        }
        let (ya, yb) = (f.py(t1), f.py(t0));
        for c in 0..cols {
            let i0 = c * (grid.n - 1) / cols;
            let i1 = (c + 1) * (grid.n - 1) / cols;
            let v = snap[i0].clamp(-1.0, 1.0);
            let (r, g, b) = if v >= 0.0 {
                (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
            } else {
                (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
            };
            let (xa, xb) = (f.px(grid.x(i0)), f.px(grid.x(i1)));
            let _ = writeln!(
                f.svg,
                r#"<rect x="{xa:.2}" y="{ya:.2}" width="{:.2}" height="{:.2}" fill="rgb({:.0},{:.0},{:.0})"/>"#,
                (xb - xa).max(0.5),
                (yb - ya).max(0.5),
                r,
                g,
                b
            );
        }
    }
    f.finish()
}
