//! Image modalities: the target's recent path and the airspace snapshot.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{Equirectangular, LatLon};
use crate::track::{AircraftState, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Bounds {
    /// Square-ish box of `half_deg` degrees around `c`.
    pub fn around(c: LatLon, half_deg: f64) -> Self {
        Bounds { lat_min: c.lat - half_deg, lat_max: c.lat + half_deg, lon_min: c.lon - half_deg, lon_max: c.lon + half_deg }
    }

    pub fn center(&self) -> LatLon {
        LatLon::new(0.5 * (self.lat_min + self.lat_max), 0.5 * (self.lon_min + self.lon_max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RasterConfig {
    pub width: usize,
    pub height: usize,
    pub history_window_s: f64,
    pub vector_horizon_s: f64,
    pub area_bounds: Bounds,
    pub margin_frac: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            width: 64,
            height: 64,
            history_window_s: 120.0,
            vector_horizon_s: 60.0,
            area_bounds: Bounds::around(crate::features::AirportRef::default().position(), 1.0),
            margin_frac: 0.1,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 32 {
            return Err(Error::BadConfig("image width and height must be at least 32".into()));
        }
        if !(self.history_window_s > 0.0) || !(self.vector_horizon_s >= 0.0) {
            return Err(Error::BadConfig("history window must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.margin_frac) {
            return Err(Error::BadConfig("margin_frac must lie in [0, 0.5)".into()));
        }
        let b = &self.area_bounds;
        LatLon::new(b.lat_min, b.lon_min).validate()?;
        LatLon::new(b.lat_max, b.lon_max).validate()?;
        if !(b.lat_max > b.lat_min && b.lon_max > b.lon_min) {
            return Err(Error::BadConfig("area bounds are empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    History,
    Snapshot,
}

pub type Rgb = [f32; 3];
pub const WHITE: Rgb = [1.0, 1.0, 1.0];
pub const BLUE: Rgb = [0.0, 0.0, 1.0];
pub const RED: Rgb = [1.0, 0.0, 0.0];

/// Row-major `height × width × 3` image with channel values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImage {
    pub kind: ImageKind,
    pub t: f64,
    pub callsign: String,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSidecar {
    pub kind: ImageKind,
    pub t: f64,
    pub callsign: String,
    /// [height, width, channels]
    pub shape: [usize; 3],
}

impl SceneImage {
    fn blank(kind: ImageKind, t: f64, callsign: &str, cfg: &RasterConfig) -> Self {
        let mut pixels = Vec::with_capacity(cfg.width * cfg.height * 3);
        for _ in 0..cfg.width * cfg.height {
            pixels.extend_from_slice(&WHITE);
        }
        SceneImage { kind, t, callsign: callsign.to_owned(), width: cfg.width, height: cfg.height, pixels }
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = 3 * (y as usize * self.width + x as usize);
            self.pixels[i..i + 3].copy_from_slice(&c);
        }
    }

    /// Coordinates of every pixel equal to `c`, row by row.
    pub fn pixels_of(&self, c: Rgb) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.pixel(x, y) == c {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Channel-major copy (`3 × height × width`) as network input.
    pub fn to_chw(&self) -> Vec<f64> {
        let hw = self.width * self.height;
        let mut out = vec![0.0; 3 * hw];
        for (p, rgb) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * hw + p] = rgb[c] as f64;
            }
        }
        out
    }

    pub fn sidecar(&self) -> ImageSidecar {
        ImageSidecar { kind: self.kind, t: self.t, callsign: self.callsign.clone(), shape: [self.height, self.width, 3] }
    }

    /// Raw little-endian f32 pixels plus a JSON sidecar at `<path>.json`.
    pub fn write_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = crate::io::f32s_to_le_bytes(&self.pixels);
        crate::io::write_atomic(path, |w| Ok(w.write_all(&bytes)?))?;
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        crate::io::write_json_pretty(Path::new(&side), &self.sidecar())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let data: Vec<u8> = self.pixels.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        crate::io::write_atomic(path, |w| {
            let mut enc = png::Encoder::new(w, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(std::io::Error::other)?;
            writer.write_image_data(&data).map_err(std::io::Error::other)?;
            writer.finish().map_err(std::io::Error::other)?;
            Ok(())
        })
    }
}

/// Clips the segment to the rectangle `[0, w-1] × [0, h-1]` (Liang-Barsky).
fn clip(p: (f64, f64), q: (f64, f64), w: f64, h: f64) -> Option<((f64, f64), (f64, f64))> {
    let (dx, dy) = (q.0 - p.0, q.1 - p.1);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (den, num) in [(-dx, p.0), (dx, w - 1.0 - p.0), (-dy, p.1), (dy, h - 1.0 - p.1)] {
        if den == 0.0 {
            if num < 0.0 {
                return None;
            }
        } else {
            let r = num / den;
            if den < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then_some(((p.0 + t0 * dx, p.1 + t0 * dy), (p.0 + t1 * dx, p.1 + t1 * dy)))
}

/// Bresenham line, 1 px wide, no anti-aliasing.
pub fn draw_line(img: &mut SceneImage, p: (f64, f64), q: (f64, f64), c: Rgb) {
    let Some((p, q)) = clip(p, q, img.width as f64, img.height as f64) else { return };
    let (mut x0, mut y0) = (p.0.round() as i64, p.1.round() as i64);
    let (x1, y1) = (q.0.round() as i64, q.1.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        img.put(x0, y0, c);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Maps projected (east, north) nm to pixel coordinates, north up.
#[derive(Debug, Clone, Copy)]
struct Frame {
    mid: (f64, f64),
    scale: f64,
    center_px: (f64, f64),
}

impl Frame {
    fn fit(lo: (f64, f64), hi: (f64, f64), cfg: &RasterConfig) -> Self {
        let span = (hi.0 - lo.0).max(hi.1 - lo.1);
        let half_px = (cfg.width.min(cfg.height) as f64 / 2.0 - 1.0) * (1.0 - 2.0 * cfg.margin_frac);
        let scale = if span > 0.0 { half_px / (span / 2.0) } else { 0.0 };
        Frame {
            mid: ((lo.0 + hi.0) / 2.0, (lo.1 + hi.1) / 2.0),
            scale,
            center_px: ((cfg.width / 2) as f64, (cfg.height / 2) as f64),
        }
    }

    fn px(&self, e: f64, n: f64) -> (f64, f64) {
        (self.center_px.0 + (e - self.mid.0) * self.scale, self.center_px.1 - (n - self.mid.1) * self.scale)
    }
}

/// Pixels per nautical mile of the snapshot frame.
pub fn snapshot_scale(cfg: &RasterConfig) -> f64 {
    snapshot_frame(cfg).1.scale
}

fn snapshot_frame(cfg: &RasterConfig) -> (Equirectangular, Frame) {
    let b = &cfg.area_bounds;
    let proj = Equirectangular::new(b.center());
    let (e0, n0) = proj.project(LatLon::new(b.lat_min, b.lon_min));
    let (e1, n1) = proj.project(LatLon::new(b.lat_max, b.lon_max));
    (proj, Frame::fit((e0, n0), (e1, n1), cfg))
}

/// The path flown over the last `history_window_s` before `t`, fitted to the
/// frame; blue polyline on white with the current position marked.
pub fn render_history(traj: &Trajectory, t: f64, cfg: &RasterConfig) -> Result<SceneImage> {
    let t0 = t - cfg.history_window_s;
    let mut pts: Vec<LatLon> = traj
        .points
        .iter()
        .filter(|p| p.t >= t0 && p.t <= t)
        .map(|p| LatLon::new(p.lat, p.lon))
        .collect();
    if traj.covers(t) && traj.points.iter().all(|p| p.t != t) {
        let p = traj.state_at(t)?;
        pts.push(LatLon::new(p.lat, p.lon));
    }
    if pts.len() < 2 {
        return Err(Error::EmptyWindow);
    }
    let current = *pts.last().expect("non-empty");
    let proj = Equirectangular::new(current);
    let xy: Vec<(f64, f64)> = pts.iter().map(|p| proj.project(*p)).collect();
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(e, n) in &xy {
        lo = (lo.0.min(e), lo.1.min(n));
        hi = (hi.0.max(e), hi.1.max(n));
    }
    let frame = Frame::fit(lo, hi, cfg);
    let mut img = SceneImage::blank(ImageKind::History, t, &traj.callsign, cfg);
    for w in xy.windows(2) {
        draw_line(&mut img, frame.px(w[0].0, w[0].1), frame.px(w[1].0, w[1].1), BLUE);
    }
    let (cx, cy) = frame.px(xy[xy.len() - 1].0, xy[xy.len() - 1].1);
    let (cx, cy) = (cx.round() as i64, cy.round() as i64);
    for (dx, dy) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
        img.put(cx + dx, cy + dy, BLUE);
    }
    Ok(img)
}

/// All aircraft as dead-reckoned velocity vectors in the fixed area frame;
/// the target in red, drawn last.
pub fn render_snapshot(states: &[AircraftState], target: &str, t: f64, cfg: &RasterConfig) -> Result<SceneImage> {
    let tgt = states.iter().find(|s| s.callsign == target).ok_or_else(|| Error::TargetMissing(target.to_owned()))?;
    let (proj, frame) = snapshot_frame(cfg);
    let mut img = SceneImage::blank(ImageKind::Snapshot, t, target, cfg);
    let vector = |s: &AircraftState| {
        let (e, n) = proj.project(LatLon::new(s.lat, s.lon));
        let d = s.gs * cfg.vector_horizon_s / 3600.0;
        let h = s.hdg.to_radians();
        (frame.px(e, n), frame.px(e + d * h.sin(), n + d * h.cos()))
    };
    for s in states.iter().filter(|s| s.callsign != target) {
        let (p, q) = vector(s);
        draw_line(&mut img, p, q, BLUE);
    }
    let (p, q) = vector(tgt);
    draw_line(&mut img, p, q, RED);
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::destination;
    use crate::track::TrackPoint;

    fn cfg() -> RasterConfig {
        RasterConfig::default()
    }

    fn northbound(lat0: f64, lon0: f64) -> Trajectory {
        let start = LatLon::new(lat0, lon0);
        let pts = (0..=120)
            .map(|i| {
                let p = destination(start, 0.0, 250.0 * i as f64 / 3600.0);
                TrackPoint { t: i as f64, lat: p.lat, lon: p.lon, alt: 5000.0, gs: 250.0, hdg: 0.0 }
            })
            .collect();
        Trajectory::new("SIA1", pts).unwrap()
    }

    #[test]
    fn hovering_point_is_centered_dot() {
        let pts = (0..10)
            .map(|i| TrackPoint { t: i as f64, lat: 1.0, lon: 103.0, alt: 0.0, gs: 0.0, hdg: 0.0 })
            .collect();
        let tr = Trajectory::new("X", pts).unwrap();
        let img = render_history(&tr, 9.0, &cfg()).unwrap();
        let lit = img.pixels_of(BLUE);
        assert!(lit.contains(&(32, 32)));
        assert!(lit.iter().all(|&(x, y)| x.abs_diff(32) + y.abs_diff(32) <= 1));
        let white = img.pixels_of(WHITE).len();
        assert_eq!(white + lit.len(), 64 * 64);
    }

    #[test]
    fn northbound_track_is_vertical_line() {
        let img = render_history(&northbound(1.0, 103.0), 120.0, &cfg()).unwrap();
        let lit = img.pixels_of(BLUE);
        assert!(lit.len() > 40);
        // the position marker widens the top end by one pixel
        assert!(lit.iter().all(|&(x, _)| x.abs_diff(32) <= 1));
        let ys: Vec<usize> = lit.iter().map(|p| p.1).collect();
        assert!(ys.iter().max().unwrap() - ys.iter().min().unwrap() > 40);
    }

    #[test]
    fn history_is_translation_invariant_in_longitude() {
        let a = render_history(&northbound(1.0, 103.0), 120.0, &cfg()).unwrap();
        let b = render_history(&northbound(1.0, 104.5), 120.0, &cfg()).unwrap();
        assert_eq!(a.pixels, b.pixels);
    }

    #[test]
    fn history_needs_two_points() {
        let tr = northbound(1.0, 103.0);
        let c = RasterConfig { history_window_s: 0.5, ..cfg() };
        assert!(matches!(render_history(&tr, 60.0, &c), Err(Error::EmptyWindow)));
    }

    fn state(cs: &str, p: LatLon, gs: f64, hdg: f64) -> AircraftState {
        AircraftState { callsign: cs.into(), lat: p.lat, lon: p.lon, gs, hdg }
    }

    #[test]
    fn stationary_target_is_single_red_dot() {
        let c = cfg();
        let img = render_snapshot(&[state("A", c.area_bounds.center(), 0.0, 0.0)], "A", 0.0, &c).unwrap();
        assert_eq!(img.pixels_of(RED), vec![(32, 32)]);
        assert!(img.pixels_of(BLUE).is_empty());
    }

    #[test]
    fn eastbound_vector_has_five_nm_length() {
        let c = cfg();
        let img = render_snapshot(&[state("A", c.area_bounds.center(), 300.0, 90.0)], "A", 0.0, &c).unwrap();
        let red = img.pixels_of(RED);
        assert!(red.iter().all(|&(_, y)| y == 32));
        let len_px = (red.iter().map(|p| p.0).max().unwrap() - red.iter().map(|p| p.0).min().unwrap()) as f64;
        let expected = 5.0 * snapshot_scale(&c);
        assert!((len_px - expected).abs() <= 1.0, "{len_px} vs {expected}");
        assert!(red.iter().all(|&(x, _)| x >= 32));
    }

    #[test]
    fn relabeling_others_keeps_image() {
        let c = cfg();
        let ctr = c.area_bounds.center();
        let other = destination(ctr, 45.0, 10.0);
        let a = render_snapshot(&[state("T", ctr, 250.0, 10.0), state("B", other, 220.0, 200.0)], "T", 0.0, &c).unwrap();
        let b = render_snapshot(&[state("Z", other, 220.0, 200.0), state("T", ctr, 250.0, 10.0)], "T", 0.0, &c).unwrap();
        assert_eq!(a.pixels, b.pixels);
        assert!(matches!(render_snapshot(&[], "T", 0.0, &c), Err(Error::TargetMissing(_))));
    }

    #[test]
    fn far_away_traffic_writes_nothing_out_of_frame() {
        let c = cfg();
        let far = LatLon::new(40.0, 10.0);
        let img = render_snapshot(&[state("T", c.area_bounds.center(), 0.0, 0.0), state("F", far, 500.0, 90.0)], "T", 0.0, &c).unwrap();
        assert!(img.pixels_of(BLUE).is_empty());
        assert_eq!(img.pixels.len(), 64 * 64 * 3);
    }
}
