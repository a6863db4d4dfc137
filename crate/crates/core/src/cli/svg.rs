//! Deterministic SVG rendering: line plots and heatmaps with contour
//! overlays. Coordinates are printed with fixed precision and colours come
//! from a fixed palette, so equal inputs give byte-identical documents.

use std::fmt::Write;

/// Viridis stops; luminance increases monotonically along the list.
const PALETTE: [(u8, u8, u8); 9] = [
    (0x44, 0x01, 0x54),
    (0x47, 0x2d, 0x7b),
    (0x3b, 0x52, 0x8b),
    (0x2c, 0x72, 0x8e),
    (0x21, 0x91, 0x8c),
    (0x28, 0xae, 0x80),
    (0x5e, 0xc9, 0x62),
    (0xad, 0xdc, 0x30),
    (0xfd, 0xe7, 0x25),
];

/// Series colours for line plots.
pub const LINE_COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Colour for `t ∈ [0, 1]`; values outside are clamped.
pub fn palette(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let s = t * (PALETTE.len() - 1) as f64;
    let k = (s.floor() as usize).min(PALETTE.len() - 2);
    let f = s - k as f64;
    let (a, b) = (PALETTE[k], PALETTE[k + 1]);
    let mix = |x: u8, y: u8| (x as f64 + f * (y as f64 - x as f64)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick positions covering `[lo, hi]` with a 1-2-5 step.
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), decimals)
}

/// Range with padding; degenerate ranges are widened.
fn padded_range(values: impl Iterator<Item = f64>, pad: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        let w = 0.1 * lo.abs().max(1e-12);
        return (lo - w, hi + w);
    }
    let p = pad * (hi - lo);
    (lo - p, hi + p)
}

#[derive(Clone, Debug)]
pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"12\" shape-rendering=\"crispEdges\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        width / 2.0,
        escape(title)
    );
}

#[allow(clippy::too_many_arguments)]
fn axes(
    out: &mut String,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    (px0, px1): (f64, f64),
    (py0, py1): (f64, f64),
    x_label: &str,
    y_label: &str,
) {
    let sx = |x: f64| px0 + (x - x0) / (x1 - x0) * (px1 - px0);
    let sy = |y: f64| py1 - (y - y0) / (y1 - y0) * (py1 - py0);
    let _ = writeln!(
        out,
        "<rect x=\"{px0:.2}\" y=\"{py0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#000000\"/>",
        px1 - px0,
        py1 - py0
    );
    let (xt, xd) = ticks(x0, x1);
    for t in xt {
        let x = sx(t);
        let _ = writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{py1:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#000000\"/><text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{t:.xd$}</text>",
            py1 + 5.0,
            py1 + 19.0
        );
    }
    let (yt, yd) = ticks(y0, y1);
    for t in yt {
        let y = sy(t);
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{px0:.2}\" y2=\"{y:.2}\" stroke=\"#000000\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{t:.yd$}</text>",
            px0 - 5.0,
            px0 - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        (px0 + px1) / 2.0,
        py1 + 42.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"20\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {:.2})\">{}</text>",
        (py0 + py1) / 2.0,
        (py0 + py1) / 2.0,
        escape(y_label)
    );
}

/// Line plot of one or more series sharing the axes.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, W, H, title);
    let xr = padded_range(series.iter().flat_map(|s| s.x.iter().copied()), 0.0);
    let yr = padded_range(series.iter().flat_map(|s| s.y.iter().copied()), 0.05);
    let (px, py) = ((LEFT, W - RIGHT), (TOP, H - BOTTOM));
    axes(&mut out, xr, yr, px, py, x_label, y_label);
    for (k, s) in series.iter().enumerate() {
        let color = LINE_COLORS[k % LINE_COLORS.len()];
        let mut pts = String::new();
        for (&x, &y) in s.x.iter().zip(s.y) {
            if !(x.is_finite() && y.is_finite()) {
                continue;
            }
            let x_px = px.0 + (x - xr.0) / (xr.1 - xr.0) * (px.1 - px.0);
            let y_px = py.1 - (y - yr.0) / (yr.1 - yr.0) * (py.1 - py.0);
            let _ = write!(pts, "{x_px:.2},{y_px:.2} ");
        }
        let _ = writeln!(
            out,
            "<polyline shape-rendering=\"geometricPrecision\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.trim_end()
        );
        let ly = TOP + 16.0 + 20.0 * k as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            W - RIGHT + 15.0,
            W - RIGHT + 40.0,
            W - RIGHT + 46.0,
            ly + 4.0,
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Cell-centred scalar field on a rectangle, row-major with one row per y.
#[derive(Clone, Copy, Debug)]
pub struct FieldView<'a> {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub values: &'a [f64],
}

impl FieldView<'_> {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    fn x_center(&self, i: usize) -> f64 {
        self.x_range.0 + (i as f64 + 0.5) * (self.x_range.1 - self.x_range.0) / self.nx as f64
    }

    fn y_center(&self, j: usize) -> f64 {
        self.y_range.0 + (j as f64 + 0.5) * (self.y_range.1 - self.y_range.0) / self.ny as f64
    }
}

/// Contour lines of a field sampled on the heatmap grid.
#[derive(Clone, Debug)]
pub struct ContourSet<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
    pub levels: Vec<f64>,
    pub color: &'a str,
}

/// Marching-squares segments of `level` between cell centres, in data
/// coordinates.
pub fn contour_segments(field: &FieldView, level: f64) -> Vec<((f64, f64), (f64, f64))> {
    let mut segs = Vec::new();
    if field.nx < 2 || field.ny < 2 {
        return segs;
    }
    for j in 0..field.ny - 1 {
        for i in 0..field.nx - 1 {
            let corners = [
                (field.x_center(i), field.y_center(j), field.at(i, j)),
                (field.x_center(i + 1), field.y_center(j), field.at(i + 1, j)),
                (field.x_center(i + 1), field.y_center(j + 1), field.at(i + 1, j + 1)),
                (field.x_center(i), field.y_center(j + 1), field.at(i, j + 1)),
            ];
            if corners.iter().any(|c| !c.2.is_finite()) {
                continue;
            }
            let mut crossings = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (corners[e], corners[(e + 1) % 4]);
                if (a.2 < level) != (b.2 < level) {
                    let t = (level - a.2) / (b.2 - a.2);
                    crossings.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
                }
            }
            match crossings.len() {
                2 => segs.push((crossings[0], crossings[1])),
                4 => {
                    // saddle: pair edges according to the centre value
                    let centre = corners.iter().map(|c| c.2).sum::<f64>() / 4.0;
                    if (centre < level) == (corners[0].2 < level) {
                        segs.push((crossings[0], crossings[1]));
                        segs.push((crossings[2], crossings[3]));
                    } else {
                        segs.push((crossings[0], crossings[3]));
                        segs.push((crossings[1], crossings[2]));
                    }
                }
                _ => {}
            }
        }
    }
    segs
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorScale {
    Linear,
    /// Logarithmic; non-positive cells are left blank.
    Log,
}

/// Heatmap with a colour bar and optional contour overlays. Non-finite
/// cells are left blank.
pub fn heatmap(
    title: &str,
    x_label: &str,
    y_label: &str,
    field: &FieldView,
    contours: &[ContourSet],
    scale: ColorScale,
) -> String {
    let plot_h = H - TOP - BOTTOM;
    let aspect = (field.x_range.1 - field.x_range.0) / (field.y_range.1 - field.y_range.0);
    let plot_w = (plot_h * aspect).clamp(200.0, 900.0);
    let width = LEFT + plot_w + RIGHT;
    let mut out = String::new();
    header(&mut out, width, H, title);
    let (px, py) = ((LEFT, LEFT + plot_w), (TOP, H - BOTTOM));
    let map = |v: f64| match scale {
        ColorScale::Linear => v,
        ColorScale::Log if v > 0.0 => v.ln(),
        ColorScale::Log => f64::NAN,
    };
    let (lo, hi) = padded_range(field.values.iter().map(|&v| map(v)), 0.0);
    let cw = plot_w / field.nx as f64;
    let ch = plot_h / field.ny as f64;
    for j in 0..field.ny {
        for i in 0..field.nx {
            let v = map(field.at(i, j));
            if !v.is_finite() {
                continue;
            }
            let x = px.0 + i as f64 * cw;
            let y = py.1 - (j + 1) as f64 * ch;
            let _ = writeln!(
                out,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                cw,
                ch,
                palette((v - lo) / (hi - lo))
            );
        }
    }
    let sx = |x: f64| px.0 + (x - field.x_range.0) / (field.x_range.1 - field.x_range.0) * plot_w;
    let sy = |y: f64| py.1 - (y - field.y_range.0) / (field.y_range.1 - field.y_range.0) * plot_h;
    for (k, set) in contours.iter().enumerate() {
        let view = FieldView { values: set.values, ..*field };
        let mut d = String::new();
        for &level in &set.levels {
            for ((x0, y0), (x1, y1)) in contour_segments(&view, level) {
                let _ = write!(d, "M{:.2} {:.2}L{:.2} {:.2}", sx(x0), sy(y0), sx(x1), sy(y1));
            }
        }
        if !d.is_empty() {
            let _ = writeln!(
                out,
                "<path shape-rendering=\"geometricPrecision\" d=\"{d}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1\"/>",
                set.color
            );
        }
        let ly = (TOP + H - BOTTOM) / 2.0 + 20.0 * k as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{}\" stroke-width=\"2\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            px.1 + 75.0,
            px.1 + 95.0,
            set.color,
            px.1 + 100.0,
            ly + 4.0,
            escape(set.label)
        );
    }
    axes(&mut out, field.x_range, field.y_range, px, py, x_label, y_label);
    // colour bar
    let bar_x = px.1 + 20.0;
    let steps = 32;
    let bh = plot_h / steps as f64;
    for s in 0..steps {
        let t = (s as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{bar_x:.2}\" y=\"{:.2}\" width=\"16\" height=\"{:.2}\" fill=\"{}\"/>",
            py.1 - (s + 1) as f64 * bh,
            bh,
            palette(t)
        );
    }
    let (lo, hi) = match scale {
        ColorScale::Linear => (lo, hi),
        ColorScale::Log => (lo.exp(), hi.exp()),
    };
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\">{hi:.3e}</text><text x=\"{:.2}\" y=\"{:.2}\">{lo:.3e}</text>",
        bar_x + 20.0,
        py.0 + 10.0,
        bar_x + 20.0,
        py.1
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_endpoints() {
        assert_eq!(palette(0.0), "#440154");
        assert_eq!(palette(1.0), "#fde725");
        assert_eq!(palette(2.0), "#fde725");
        assert_eq!(palette(f64::NAN), "#440154");
    }

    #[test]
    fn ticks_cover_range() {
        let (t, d) = ticks(0.0, 20.0);
        assert_eq!(t, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(d, 0);
        let (t, d) = ticks(-0.013, 0.048);
        assert!(t.len() >= 3 && d == 2);
    }

    #[test]
    fn circle_contour_has_points_near_radius() {
        let n = 41;
        let values: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k % n, k / n);
                let x = -1.0 + (i as f64 + 0.5) * 2.0 / n as f64;
                let y = -1.0 + (j as f64 + 0.5) * 2.0 / n as f64;
                x * x + y * y
            })
            .collect();
        let view = FieldView {
            x_range: (-1.0, 1.0),
            y_range: (-1.0, 1.0),
            nx: n,
            ny: n,
            values: &values,
        };
        let segs = contour_segments(&view, 0.25);
        assert!(segs.len() > 20);
        for ((x0, y0), _) in segs {
            assert!(((x0 * x0 + y0 * y0).sqrt() - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.0, 0.5, 0.25];
        let s = [Series { label: "a", x: &x, y: &y }];
        assert_eq!(line_plot("t", "x", "y", &s), line_plot("t", "x", "y", &s));
    }
}
