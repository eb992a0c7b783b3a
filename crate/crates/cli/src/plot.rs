//! Static SVG figures written directly as text.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use bohm_core::analysis::ProjectionPicture;
use bohm_core::grid::FringeProfile;
use bohm_core::optics::Plane2D;
use bohm_core::trajectories::{Arm, Trajectory};
use bohm_core::{InterferometerGeometry, Vec2, WwLabel};

pub const PLOT_DIR: &str = "plots";
pub const TRAJECTORY_PLOT: &str = "trajectories.svg";
pub const SHEETS_PLOT: &str = "sheets.svg";
pub const FRINGE_PLOT: &str = "fringe.svg";

const R_COLOR: &str = "#1f5fa8";
const T_COLOR: &str = "#c23b22";
const OTHER_COLOR: &str = "#777777";

pub struct PlotInput<'a> {
    pub title: String,
    pub geometry: &'a InterferometerGeometry,
    pub trajectories: &'a [Trajectory],
    pub picture: &'a ProjectionPicture,
    pub fringe: Option<&'a FringeProfile>,
    pub visibility: Option<f64>,
}

/// Maps a world rectangle onto a pixel rectangle, y pointing up.
#[derive(Debug, Clone, Copy)]
struct Frame {
    lo: Vec2,
    hi: Vec2,
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn fit(lo: Vec2, hi: Vec2, left: f64, top: f64, max_w: f64, max_h: f64) -> Self {
        let span = hi - lo;
        let scale = (max_w / span.x).min(max_h / span.y);
        Self { lo, hi, left, top, width: span.x * scale, height: span.y * scale }
    }

    fn px(&self, p: &Vec2) -> (f64, f64) {
        let u = (p.x - self.lo.x) / (self.hi.x - self.lo.x);
        let v = (p.y - self.lo.y) / (self.hi.y - self.lo.y);
        (self.left + u * self.width, self.top + (1.0 - v) * self.height)
    }
}

struct Svg {
    width: f64,
    height: f64,
    body: String,
    clip_id: usize,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self { width, height, body: String::new(), clip_id: 0 }
    }

    fn raw(&mut self, s: &str) {
        self.body.push_str(s);
        self.body.push('\n');
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let esc = s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        self.raw(&format!(r#"<text x="{x:.1}" y="{y:.1}" font-size="{size}" text-anchor="{anchor}" font-family="sans-serif">{esc}</text>"#));
    }

    fn begin_clip(&mut self, f: &Frame) -> String {
        self.clip_id += 1;
        let id = format!("clip{}", self.clip_id);
        self.raw(&format!(r#"<clipPath id="{id}"><rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}"/></clipPath>"#, f.left, f.top, f.width, f.height));
        self.raw(&format!(r#"<g clip-path="url(#{id})">"#));
        id
    }

    fn end_group(&mut self) {
        self.raw("</g>");
    }

    fn frame_box(&mut self, f: &Frame) {
        self.raw(&format!(r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333" stroke-width="1"/>"##, f.left, f.top, f.width, f.height));
    }

    fn polyline(&mut self, f: &Frame, pts: &[Vec2], style: &str) {
        if pts.len() < 2 {
            return;
        }
        let mut d = String::with_capacity(pts.len() * 14);
        let mut last = (f64::NAN, f64::NAN);
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = f.px(p);
            // Drop points closer than about half a pixel to the previous one.
            if (x - last.0).hypot(y - last.1) < 0.4 && i + 1 < pts.len() {
                continue;
            }
            let _ = write!(d, "{x:.2},{y:.2} ");
            last = (x, y);
        }
        self.raw(&format!(r#"<polyline points="{}" fill="none" {style}/>"#, d.trim_end()));
    }

    fn segment(&mut self, f: &Frame, a: &Vec2, b: &Vec2, style: &str) {
        let (x1, y1) = f.px(a);
        let (x2, y2) = f.px(b);
        self.raw(&format!(r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" {style}/>"#));
    }

    fn polygon(&mut self, f: &Frame, pts: &[Vec2], style: &str) {
        let d: Vec<String> = pts.iter().map(|p| f.px(p)).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        self.raw(&format!(r#"<polygon points="{}" {style}/>"#, d.join(" ")));
    }

    fn circle(&mut self, f: &Frame, c: &Vec2, r: f64, style: &str) {
        let (x, y) = f.px(c);
        self.raw(&format!(r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" {style}/>"#));
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

fn arm_color(a: Option<Arm>) -> &'static str {
    match a {
        Some(Arm::R) => R_COLOR,
        Some(Arm::T) => T_COLOR,
        None => OTHER_COLOR,
    }
}

fn label_color(w: WwLabel) -> &'static str {
    match w {
        WwLabel::R => R_COLOR,
        WwLabel::T => T_COLOR,
        WwLabel::None => OTHER_COLOR,
    }
}

/// Tagged traces take the label colour; untagged ones fall back to the arm.
fn trace_color(tr: Option<&Trajectory>, w: WwLabel) -> &'static str {
    match w {
        WwLabel::None => arm_color(tr.and_then(|t| t.origin_arm)),
        _ => label_color(w),
    }
}

fn world_bounds(g: &InterferometerGeometry, trajs: &[Trajectory]) -> (Vec2, Vec2) {
    let c = &g.constants;
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    let mut add = |p: &Vec2| {
        lo = lo.inf(p);
        hi = hi.sup(p);
    };
    add(&g.source.center(g.source.birth_time, c));
    add(&g.beam_splitter.point);
    for m in &g.mirrors {
        add(&m.point);
    }
    for p in &g.region_i {
        add(p);
    }
    for tr in trajs {
        for p in &tr.points {
            add(&p.x);
        }
    }
    let pad = Vec2::repeat(0.05 * (hi - lo).max() + 2.0 * g.source.sigma0);
    (lo - pad, hi + pad)
}

fn plane_line(svg: &mut Svg, f: &Frame, p: &Plane2D, half: f64, style: &str) {
    let t = p.tangent();
    svg.segment(f, &(p.point - t * half), &(p.point + t * half), style);
}

fn geometry_overlay(svg: &mut Svg, f: &Frame, g: &InterferometerGeometry) {
    let big = 2.0 * (f.hi - f.lo).norm();
    svg.polygon(f, &g.region_i, r##"fill="#f3e7b0" stroke="#c9a227" stroke-width="1""##);
    plane_line(svg, f, &g.beam_splitter, big, r##"stroke="#444" stroke-width="1" stroke-dasharray="6,4""##);
    let s = 3.0 * g.source.sigma0;
    for m in &g.mirrors {
        plane_line(svg, f, m, s, r##"stroke="#111" stroke-width="4""##);
    }
    if let Some((a, b)) = &g.ww_tag_planes {
        for p in [a, b] {
            plane_line(svg, f, p, s, r##"stroke="#2a8f3a" stroke-width="2" stroke-dasharray="3,3""##);
        }
    }
    plane_line(svg, f, &g.beam_splitter, s, r##"stroke="#111" stroke-width="2""##);
    // Detector boundaries run from the far edge of region I towards the exit.
    let centroid = g.region_i.iter().fold(Vec2::zeros(), |a, p| a + p) / g.region_i.len().max(1) as f64;
    let t = g.beam_splitter.tangent();
    let e = if (centroid - g.beam_splitter.point).dot(&t) >= 0.0 { t } else { -t };
    for d in &g.detectors {
        let edge = &d.half_plane;
        let start = g.region_i.iter().map(|p| (p - edge.point).dot(&e)).fold(f64::NEG_INFINITY, f64::max);
        let a = edge.point + e * start;
        svg.segment(f, &a, &(a + e * big), r##"stroke="#8a5a9e" stroke-width="1" stroke-dasharray="2,3""##);
        let (x, y) = f.px(&(a + e * s + edge.unit_normal * s));
        svg.text(x, y, 12.0, "middle", &format!("{:?}", d.id));
    }
}

fn trajectory_plot(input: &PlotInput<'_>) -> String {
    let (lo, hi) = world_bounds(input.geometry, input.trajectories);
    let mut svg = Svg::new(900.0, 700.0);
    let f = Frame::fit(lo, hi, 40.0, 50.0, 820.0, 600.0);
    svg.text(450.0, 28.0, 16.0, "middle", &input.title);
    svg.begin_clip(&f);
    geometry_overlay(&mut svg, &f, input.geometry);
    for tr in input.trajectories {
        let pts: Vec<Vec2> = tr.points.iter().map(|p| p.x).collect();
        svg.polyline(&f, &pts, &format!(r#"stroke="{}" stroke-width="0.7" stroke-opacity="0.6""#, arm_color(tr.origin_arm)));
    }
    svg.end_group();
    svg.frame_box(&f);
    let y = f.top + f.height + 22.0;
    svg.raw(&format!(r#"<line x1="50" y1="{y:.1}" x2="70" y2="{y:.1}" stroke="{R_COLOR}" stroke-width="2"/>"#));
    svg.text(75.0, y + 4.0, 12.0, "start", "r arm");
    svg.raw(&format!(r#"<line x1="130" y1="{y:.1}" x2="150" y2="{y:.1}" stroke="{T_COLOR}" stroke-width="2"/>"#));
    svg.text(155.0, y + 4.0, 12.0, "start", "t arm");
    svg.text(220.0, y + 4.0, 12.0, "start", "dashed: splitter plane; shaded: region I; thick: mirrors");
    svg.finish()
}

fn sheets_plot(input: &PlotInput<'_>) -> String {
    let pic = input.picture;
    let final_label: Vec<WwLabel> = input.trajectories.iter().map(|t| t.last().w).collect();
    let mut labels: Vec<WwLabel> = final_label.clone();
    labels.sort();
    labels.dedup();
    let (lo, hi) = world_bounds(input.geometry, input.trajectories);
    let panels = labels.len() + 1;
    let (panel_w, panel_h) = (320.0, 420.0);
    let width = 40.0 + panels as f64 * (panel_w + 30.0);
    let used_h = Frame::fit(lo, hi, 0.0, 0.0, panel_w, panel_h).height;
    let mut svg = Svg::new(width, used_h + 110.0);
    svg.text(0.5 * width, 28.0, 16.0, "middle", &input.title);
    for (k, w) in labels.iter().chain(std::iter::once(&WwLabel::None)).enumerate() {
        let projection = k == labels.len();
        let (left, top) = (40.0 + k as f64 * (panel_w + 30.0), 70.0);
        let f = Frame::fit(lo, hi, left, top, panel_w, panel_h);
        let caption = if projection { "projection (labels ignored)".to_string() } else { format!("sheet w = {}", w.as_str()) };
        svg.text(left, top - 8.0, 13.0, "start", &caption);
        svg.begin_clip(&f);
        svg.polygon(&f, &input.geometry.region_i, r##"fill="#f3e7b0" stroke="none""##);
        plane_line(&mut svg, &f, &input.geometry.beam_splitter, 2.0 * (hi - lo).norm(), r##"stroke="#444" stroke-width="1" stroke-dasharray="6,4""##);
        if projection {
            for (i, line) in pic.polylines.iter().enumerate() {
                let color = trace_color(input.trajectories.get(i), final_label.get(i).copied().unwrap_or(WwLabel::None));
                svg.polyline(&f, line, &format!(r#"stroke="{color}" stroke-width="0.6" stroke-opacity="0.5""#));
            }
            for m in &pic.markers {
                svg.circle(&f, &m.position, 2.2, r##"fill="none" stroke="#000" stroke-width="0.8""##);
            }
        } else {
            for s in pic.sheets.iter().filter(|s| final_label.get(s.trajectory) == Some(w)) {
                let style = if s.label == *w {
                    format!(r#"stroke="{}" stroke-width="0.7" stroke-opacity="0.7""#, trace_color(input.trajectories.get(s.trajectory), *w))
                } else {
                    r##"stroke="#999" stroke-width="0.5" stroke-opacity="0.5" stroke-dasharray="2,2""##.to_string()
                };
                svg.polyline(&f, &s.points, &style);
            }
        }
        svg.end_group();
        svg.frame_box(&f);
        if projection {
            svg.text(left, top + f.height + 20.0, 12.0, "start", &format!("{} crossing markers", pic.markers.len()));
        }
    }
    svg.finish()
}

fn fringe_plot(profile: &FringeProfile, visibility: Option<f64>, title: &str) -> String {
    let n = profile.samples.len();
    let half = 0.5 * (profile.end - profile.start).norm();
    let max = profile.samples.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut svg = Svg::new(800.0, 460.0);
    svg.text(400.0, 28.0, 16.0, "middle", title);
    let f = Frame { lo: Vec2::new(-half, 0.0), hi: Vec2::new(half, 1.05 * max), left: 70.0, top: 50.0, width: 690.0, height: 340.0 };
    let q = |s: f64| f.px(&Vec2::new(s, 0.0)).0;
    let (a, b) = (-half + 0.5 * half, half - 0.5 * half);
    svg.raw(&format!(r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#eef3fa"/>"##, q(a), f.top, q(b) - q(a), f.height));
    let pts: Vec<Vec2> = profile.samples.iter().enumerate().map(|(i, v)| Vec2::new(-half + 2.0 * half * i as f64 / (n.max(2) - 1) as f64, *v)).collect();
    svg.polyline(&f, &pts, r##"stroke="#1f5fa8" stroke-width="1.5""##);
    svg.frame_box(&f);
    for k in 0..=4 {
        let s = -half + 0.5 * half * k as f64;
        let x = q(s);
        let y = f.top + f.height;
        svg.raw(&format!(r##"<line x1="{x:.1}" y1="{y:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333"/>"##, y + 5.0));
        svg.text(x, y + 18.0, 11.0, "middle", &format!("{s:.2}"));
    }
    for k in 0..=4 {
        let v = max * k as f64 / 4.0;
        let (_, y) = f.px(&Vec2::new(0.0, v));
        svg.text(f.left - 6.0, y + 4.0, 11.0, "end", &format!("{v:.3e}"));
    }
    svg.text(415.0, 425.0, 12.0, "middle", &format!("offset along the splitter normal at t = {:.3} (shaded: central half)", profile.time));
    if let Some(v) = visibility {
        svg.text(755.0, 68.0, 13.0, "end", &format!("visibility {v:.4}"));
    }
    svg.finish()
}

/// Writes the figures under `<dir>/plots`; the fringe profile only when a scan exists.
pub fn render_plots(input: &PlotInput<'_>, dir: &Path) -> io::Result<Vec<PathBuf>> {
    let pdir = dir.join(PLOT_DIR);
    fs::create_dir_all(&pdir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> io::Result<()> {
        let path = pdir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put(TRAJECTORY_PLOT, trajectory_plot(input))?;
    put(SHEETS_PLOT, sheets_plot(input))?;
    let stale = pdir.join(FRINGE_PLOT);
    match input.fringe {
        Some(p) => put(FRINGE_PLOT, fringe_plot(p, input.visibility, &input.title))?,
        None if stale.exists() => fs::remove_file(stale)?,
        None => {}
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bohm_core::analysis::build_projection_picture;
    use bohm_core::trajectories::run_ensemble;
    use bohm_core::{Scenario, ScenarioParams};

    #[test]
    fn figures_are_complete_svg_and_fringe_is_optional() {
        let s = Scenario::new(ScenarioParams::default()).unwrap();
        let run = run_ensemble(&s, 4, 1).unwrap();
        let picture = build_projection_picture(&run.trajectories, 1e-7).unwrap();
        let profile = FringeProfile { time: 1.0, start: Vec2::new(0.0, -1.0), end: Vec2::new(0.0, 1.0), samples: (0..33).map(|i| (i as f64 * 0.4).cos().powi(2)).collect() };
        let input = PlotInput { title: "a < b & c".into(), geometry: &s.geometry, trajectories: &run.trajectories, picture: &picture, fringe: Some(&profile), visibility: Some(0.97) };
        let dir = tempfile::tempdir().unwrap();
        let files = render_plots(&input, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        for f in &files {
            let text = fs::read_to_string(f).unwrap();
            assert!(text.starts_with("<?xml") && text.trim_end().ends_with("</svg>"));
            assert_eq!(text.matches("<g ").count(), text.matches("</g>").count());
            assert!(!text.contains("NaN"));
        }
        assert!(fs::read_to_string(&files[0]).unwrap().contains("a &lt; b &amp; c"));
        let files = render_plots(&PlotInput { fringe: None, ..input }, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        assert!(!dir.path().join(PLOT_DIR).join(FRINGE_PLOT).exists());
    }
}
