//! Self-contained SVG rendering of recovery sweeps.

use std::fmt::Write;

use crate::recovery::{RegionSweep, Verdict};

const WIDTH: f64 = 680.0;
const HEIGHT: f64 = 560.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const BLUE: &str = "#2f6fd6";
const RED: &str = "#d63a2f";

fn color(v: Verdict) -> &'static str {
    match v {
        Verdict::Recovers => BLUE,
        _ => RED,
    }
}

struct Frame {
    lo: f64,
    hi: f64,
    start: f64,
    len: f64,
}

impl Frame {
    fn map(&self, v: f64) -> f64 {
        if self.hi == self.lo {
            self.start + self.len / 2.0
        } else {
            self.start + (v - self.lo) / (self.hi - self.lo) * self.len
        }
    }
}

/// Renders the sweep as a raster of blue (recovers) and red cells, the
/// dashed boundary of each condition, axes and a legend.
///
/// Runs of equal color within a column share one rectangle, so the size
/// grows with the number of color changes rather than the cell count.
pub fn sweep_svg(sweep: &RegionSweep) -> String {
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let (nx, ny) = (sweep.x.steps, sweep.y.steps);
    let cw = pw / nx as f64;
    let ch = ph / ny as f64;
    // cell centers sit on the axis values, so the frame extends half a cell
    let half = |lo: f64, hi: f64, n: usize| {
        if n > 1 {
            (hi - lo) / (n - 1) as f64 / 2.0
        } else {
            0.0
        }
    };
    let hx = half(sweep.x.lo, sweep.x.hi, nx);
    let hy = half(sweep.y.lo, sweep.y.hi, ny);
    let fx = Frame {
        lo: sweep.x.lo - hx,
        hi: sweep.x.hi + hx,
        start: LEFT,
        len: pw,
    };
    let fy = Frame {
        lo: sweep.y.lo - hy,
        hi: sweep.y.hi + hy,
        start: TOP + ph,
        len: -ph,
    };

    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="13">"#
    );
    s.push('\n');
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle">r = {}, p = {}, eta = {}, beta_pos = {}, beta_neg = {}, nu = {}</text>"#,
        LEFT + pw / 2.0,
        sweep.model.r,
        sweep.model.p,
        sweep.model.eta,
        sweep.bias.beta_pos,
        sweep.bias.beta_neg,
        sweep.bias.nu
    );

    s.push_str(r#"<g shape-rendering="crispEdges">"#);
    s.push('\n');
    for ix in 0..nx {
        let x = LEFT + ix as f64 * cw;
        let mut iy = 0;
        while iy < ny {
            let c = color(sweep.cell(ix, iy).verdict);
            let mut end = iy + 1;
            while end < ny && color(sweep.cell(ix, end).verdict) == c {
                end += 1;
            }
            // row 0 is at the bottom
            let y = TOP + ph - end as f64 * ch;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{c}"/>"#,
                cw + 0.05,
                (end - iy) as f64 * ch + 0.05
            );
            iy = end;
        }
    }
    s.push_str("</g>\n");

    for b in &sweep.boundary {
        for seg in &b.segments {
            let pts: Vec<String> = seg
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", fx.map(x), fy.map(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline data-condition="{}" points="{}" fill="none" stroke="black" stroke-width="2" stroke-dasharray="7 5"/>"#,
                b.condition,
                pts.join(" ")
            );
        }
    }

    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = sweep.x.lo + t * (sweep.x.hi - sweep.x.lo);
        let yv = sweep.y.lo + t * (sweep.y.hi - sweep.y.lo);
        let (px, py) = (fx.map(xv), fy.map(yv));
        let base = TOP + ph;
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{base}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            base + 5.0,
            base + 20.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        sweep.x.axis
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        sweep.y.axis
    );

    let lx = WIDTH - RIGHT + 15.0;
    let _ = writeln!(
        s,
        r#"<rect x="{lx}" y="{}" width="16" height="16" fill="{BLUE}"/><text x="{}" y="{}">recovers h*</text>"#,
        TOP,
        lx + 22.0,
        TOP + 13.0
    );
    let _ = writeln!(
        s,
        r#"<rect x="{lx}" y="{}" width="16" height="16" fill="{RED}"/><text x="{}" y="{}">fails</text>"#,
        TOP + 26.0,
        lx + 22.0,
        TOP + 39.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="2" stroke-dasharray="7 5"/><text x="{}" y="{}">boundary</text>"#,
        TOP + 60.0,
        lx + 16.0,
        TOP + 60.0,
        lx + 22.0,
        TOP + 64.0
    );
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bias::BiasParams;
    use crate::distribution::TrueModel;
    use crate::recovery::{recovery_region, AxisSpec};

    #[test]
    fn full_size_svg_is_small_and_complete() {
        let m = TrueModel::new(1.0 / 3.0, 0.5, 0.1).unwrap();
        let x = AxisSpec::parse("eta:0:0.499", 200).unwrap();
        let y = AxisSpec::parse("beta:0.005:1", 200).unwrap();
        let sweep = recovery_region(&m, &BiasParams::NONE, x, y).unwrap();
        let svg = sweep_svg(&sweep);
        assert!(svg.len() < 2_000_000);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains(BLUE) && svg.contains(RED));
        assert!(svg.contains("stroke-dasharray"));
        assert!(!svg.contains("href"));
    }

    #[test]
    fn ticks_are_trimmed() {
        assert_eq!(tick(0.5), "0.5");
        assert_eq!(tick(0.0), "0");
        assert_eq!(tick(1.0), "1");
        assert_eq!(tick(0.12345), "0.123");
    }
}
