use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use super::{Category, DayWheel, WeldCurve};
use crate::error::{Error, Result};

/// Maps a coefficient in `[-1, 1]` to a colour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Colormap {
    /// Blue at -1, white at 0, red at +1.
    #[default]
    Diverging,
    /// The classic jet map: blue, cyan, yellow, red.
    Jet,
}

impl Colormap {
    pub fn rgb(self, value: f64) -> (u8, u8, u8) {
        let v = if value.is_nan() { 0.0 } else { value.clamp(-1.0, 1.0) };
        let to_byte = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
        match self {
            Colormap::Diverging => {
                if v < 0.0 {
                    let w = 1.0 + v;
                    (to_byte(w), to_byte(w), 255)
                } else {
                    let w = 1.0 - v;
                    (255, to_byte(w), to_byte(w))
                }
            }
            Colormap::Jet => {
                let t = 0.5 * (v + 1.0);
                let channel = |centre: f64| to_byte(1.5 - (4.0 * t - centre).abs());
                (channel(3.0), channel(2.0), channel(1.0))
            }
        }
    }

    pub fn hex(self, value: f64) -> String {
        let (r, g, b) = self.rgb(value);
        format!("#{r:02x}{g:02x}{b:02x}")
    }
}

impl std::str::FromStr for Colormap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diverging" => Ok(Colormap::Diverging),
            "jet" => Ok(Colormap::Jet),
            other => Err(Error::Config(format!(
                "unknown colormap '{other}' (expected diverging or jet)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WheelStyle {
    /// Width and height of the wheel area in pixels.
    pub size: f64,
    pub colormap: Colormap,
    /// Where sector 0 starts, in degrees clockwise from 12 o'clock.
    pub start_angle_deg: f64,
    pub clockwise: bool,
}

impl Default for WheelStyle {
    fn default() -> Self {
        WheelStyle {
            size: 480.0,
            colormap: Colormap::default(),
            start_angle_deg: 0.0,
            clockwise: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveStyle {
    pub width: f64,
    pub height: f64,
    pub knot_radius: f64,
}

impl Default for CurveStyle {
    fn default() -> Self {
        CurveStyle {
            width: 800.0,
            height: 480.0,
            knot_radius: 3.0,
        }
    }
}

const LEGEND_HEIGHT: f64 = 56.0;

/// Fixed-precision coordinate so output is byte-stable.
fn c(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        c(width),
        c(height),
        c(width),
        c(height)
    );
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##, c(width), c(height));
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders a day wheel: a central disk for scale 0 and one ring per further scale, with a
/// colour bar legend. Every region is a `<path class="sector">`.
pub fn render_wheel_svg(wheel: &DayWheel, style: &WheelStyle) -> String {
    let size = style.size;
    let (cx, cy) = (size / 2.0, size / 2.0);
    let radius = 0.45 * size;
    let ring = radius / (wheel.max_scale + 1) as f64;
    let direction = if style.clockwise { 1.0 } else { -1.0 };
    let point = |r: f64, turn: f64| {
        let theta = (style.start_angle_deg / 360.0 + direction * turn) * 2.0 * PI;
        (cx + r * theta.sin(), cy - r * theta.cos())
    };
    // Sweep flag 1 draws clockwise on screen (SVG y points down).
    let (fwd, back) = if style.clockwise { (1, 0) } else { (0, 1) };

    let mut out = String::new();
    svg_open(&mut out, size, size + LEGEND_HEIGHT);
    out.push_str("<g id=\"wheel\" stroke=\"#404040\" stroke-width=\"0.5\">\n");
    for sector in &wheel.sectors {
        let fill = style.colormap.hex(sector.value);
        let node = sector.node;
        let d = if node.scale == 0 {
            let (x0, y0) = (cx, cy - ring);
            format!(
                "M {} {} A {r} {r} 0 1 1 {} {} A {r} {r} 0 1 1 {} {} Z",
                c(x0),
                c(y0),
                c(cx),
                c(cy + ring),
                c(x0),
                c(y0),
                r = c(ring)
            )
        } else {
            let count = (1u64 << node.scale) as f64;
            let (t0, t1) = (node.index as f64 / count, (node.index + 1) as f64 / count);
            let (inner, outer) = (node.scale as f64 * ring, (node.scale + 1) as f64 * ring);
            let large = u8::from(t1 - t0 > 0.5);
            let (ox0, oy0) = point(outer, t0);
            let (ox1, oy1) = point(outer, t1);
            let (ix1, iy1) = point(inner, t1);
            let (ix0, iy0) = point(inner, t0);
            format!(
                "M {} {} A {ro} {ro} 0 {large} {fwd} {} {} L {} {} A {ri} {ri} 0 {large} {back} {} {} Z",
                c(ox0),
                c(oy0),
                c(ox1),
                c(oy1),
                c(ix1),
                c(iy1),
                c(ix0),
                c(iy0),
                ro = c(outer),
                ri = c(inner)
            )
        };
        let _ = writeln!(
            out,
            r#"<path class="sector" data-scale="{}" data-index="{}" data-value="{}" fill="{fill}" d="{d}"/>"#,
            node.scale,
            node.index,
            c(sector.value)
        );
    }
    out.push_str("</g>\n");
    colour_bar(&mut out, style.colormap, size, size);
    out.push_str("</svg>\n");
    out
}

fn colour_bar(out: &mut String, colormap: Colormap, width: f64, top: f64) {
    const STEPS: usize = 21;
    let bar_width = 0.6 * width;
    let x0 = 0.2 * width;
    let step = bar_width / STEPS as f64;
    out.push_str("<g id=\"legend\">\n");
    for k in 0..STEPS {
        let v = -1.0 + 2.0 * k as f64 / (STEPS - 1) as f64;
        let _ = writeln!(
            out,
            r#"<rect class="legend" x="{}" y="{}" width="{}" height="14" fill="{}"/>"#,
            c(x0 + k as f64 * step),
            c(top + 8.0),
            c(step),
            colormap.hex(v)
        );
    }
    for (v, label) in [(-1.0, "-1"), (0.0, "0"), (1.0, "+1")] {
        let x = x0 + (v + 1.0) / 2.0 * bar_width;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{label}</text>"#,
            c(x),
            c(top + 38.0)
        );
    }
    out.push_str("</g>\n");
}

fn category_colour(category: Category) -> &'static str {
    match category {
        Category::OnlyA => "#d62728",
        Category::OnlyB => "#2ca02c",
        Category::Mixed => "#1f77b4",
        Category::Empty => "#000000",
        Category::Endpoint | Category::Unlabeled => "#7f7f7f",
    }
}

/// Renders a pseudo-welding curve as a polyline with coloured knots and a category legend.
pub fn render_curve_svg(curve: &WeldCurve, style: &CurveStyle) -> String {
    let margin = 24.0;
    let (min_x, max_x, min_y, max_y) = curve.knots.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), k| (a.min(k.x), b.max(k.x), c.min(k.y), d.max(k.y)),
    );
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);
    let scale = ((style.width - 2.0 * margin) / span_x).min((style.height - 2.0 * margin) / span_y);
    // Centre the drawing; y grows upward in curve space.
    let ox = margin + 0.5 * (style.width - 2.0 * margin - span_x * scale);
    let oy = margin + 0.5 * (style.height - 2.0 * margin - span_y * scale);
    let map = |x: f64, y: f64| (ox + (x - min_x) * scale, oy + (max_y - y) * scale);

    let mut out = String::new();
    svg_open(&mut out, style.width, style.height + LEGEND_HEIGHT);
    let points: Vec<String> = curve
        .knots
        .iter()
        .map(|k| {
            let (x, y) = map(k.x, k.y);
            format!("{},{}", c(x), c(y))
        })
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline class="curve" fill="none" stroke="#303030" stroke-width="1" points="{}"/>"##,
        points.join(" ")
    );
    out.push_str("<g id=\"knots\">\n");
    for k in &curve.knots {
        let (x, y) = map(k.x, k.y);
        let (scale_attr, index_attr) = match k.node {
            Some(n) => (n.scale.to_string(), n.index.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            r#"<circle class="knot {}" data-scale="{scale_attr}" data-index="{index_attr}" cx="{}" cy="{}" r="{}" fill="{}"/>"#,
            k.category,
            c(x),
            c(y),
            c(style.knot_radius),
            category_colour(k.category)
        );
    }
    out.push_str("</g>\n");

    let class_name = |i: usize, fallback: &str| {
        curve.classes.get(i).map_or(fallback.to_string(), |s| escape(s))
    };
    let mut entries = vec![(Category::Endpoint, "endpoint".to_string())];
    if curve.knots.iter().any(|k| k.category == Category::Unlabeled) {
        entries.push((Category::Unlabeled, "unlabeled".to_string()));
    } else {
        entries.extend([
            (Category::OnlyA, format!("only {}", class_name(0, "A"))),
            (Category::OnlyB, format!("only {}", class_name(1, "B"))),
            (Category::Mixed, "mixed".to_string()),
            (Category::Empty, "empty".to_string()),
        ]);
    }
    out.push_str("<g id=\"legend\">\n");
    for (i, (category, text)) in entries.iter().enumerate() {
        let x = margin + i as f64 * 130.0;
        let y = style.height + 24.0;
        let _ = writeln!(
            out,
            r#"<circle cx="{}" cy="{}" r="5" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{text}</text>"#,
            c(x),
            c(y),
            category_colour(*category),
            c(x + 10.0),
            c(y + 4.0)
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::CoefficientTree;
    use crate::viz::{day_wheel, pseudo_welding_curve};

    #[test]
    fn colormap_endpoints() {
        assert_eq!(Colormap::Diverging.hex(0.0), "#ffffff");
        assert_eq!(Colormap::Diverging.hex(1.0), "#ff0000");
        assert_eq!(Colormap::Diverging.hex(-1.0), "#0000ff");
        assert_eq!(Colormap::Jet.hex(-1.0), "#000080");
        assert_eq!(Colormap::Jet.hex(1.0), "#800000");
        assert_eq!(Colormap::Jet.rgb(0.0).1, 255);
        assert_eq!(Colormap::Diverging.hex(5.0), "#ff0000");
        assert_eq!("jet".parse::<Colormap>().unwrap(), Colormap::Jet);
        assert!("viridis".parse::<Colormap>().is_err());
    }

    #[test]
    fn wheel_svg_has_one_path_per_sector() {
        let w = day_wheel(&CoefficientTree::uniform(4, 1.0).unwrap(), 2).unwrap();
        let svg = render_wheel_svg(&w, &WheelStyle::default());
        assert_eq!(svg.matches(r#"class="sector""#).count(), 7);
        assert_eq!(svg, render_wheel_svg(&w, &WheelStyle::default()));
        assert!(svg.matches("fill=\"#ffffff\" d=").count() == 7);
    }

    #[test]
    fn curve_svg_without_labels_uses_default_colour() {
        let t = CoefficientTree::dirac(0.3, 4).unwrap();
        let curve = pseudo_welding_curve(&t, 3, None).unwrap();
        let svg = render_curve_svg(&curve, &CurveStyle::default());
        assert_eq!(svg.matches("class=\"knot").count(), 17);
        assert_eq!(svg.matches("class=\"knot unlabeled\"").count(), 15);
        assert!(!svg.contains("class=\"knot onlyA\""));
        assert_eq!(svg, render_curve_svg(&curve, &CurveStyle::default()));
    }
}
