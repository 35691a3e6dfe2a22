//! Monochrome camera: image type, PGM round trip, scene rendering.
//!
//! The rendered scene is deliberately schematic, matching what the pile
//! detector keys on: a mid-gray background, two full-width bright LED
//! strips, and dark silhouettes where deposited piles stand between the
//! camera and the far wall. A pile close enough to swallow a strip stops
//! being detectable, which is the desired near-field cutoff.

use crate::error::{Result, SimError};
use crate::geom::{wrap_angle, Pose};
use crate::world::DepositMap;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "P5")?;
        writeln!(w, "{} {}", self.width, self.height)?;
        writeln!(w, "255")?;
        w.write_all(&self.pixels)?;
        Ok(())
    }

    /// Reads binary (P5) or ASCII (P2) PGM with 8-bit depth.
    pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let mut token = |bytes: &[u8]| -> Result<String> {
            while pos < bytes.len() {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else if bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(SimError::Parse("truncated pgm header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = token(&bytes)?;
        if magic != "P5" && magic != "P2" {
            return Err(SimError::Parse(format!("pgm magic `{magic}`")));
        }
        let dim = |t: String| -> Result<usize> {
            t.parse()
                .map_err(|e| SimError::Parse(format!("pgm header: {e}")))
        };
        let width = dim(token(&bytes)?)?;
        let height = dim(token(&bytes)?)?;
        let maxval = dim(token(&bytes)?)?;
        if width == 0 || height == 0 || maxval == 0 || maxval > 255 {
            return Err(SimError::Parse(format!(
                "pgm {width}x{height} maxval {maxval} unsupported"
            )));
        }
        let n = width * height;
        let pixels = if magic == "P5" {
            pos += 1; // single whitespace after maxval
            if bytes.len() < pos + n {
                return Err(SimError::Parse("pgm pixel data truncated".into()));
            }
            bytes[pos..pos + n].to_vec()
        } else {
            let mut px = Vec::with_capacity(n);
            for _ in 0..n {
                px.push(
                    token(&bytes)?
                        .parse::<u8>()
                        .map_err(|e| SimError::Parse(format!("pgm pixel: {e}")))?,
                );
            }
            px
        };
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    /// Piles farther than this render too faintly to darken pixels.
    pub max_range_m: f64,
    pub background: u8,
    pub strip_value: u8,
    pub pile_value: u8,
    /// Rows of the two LED strips, as (top, bottom) half-open bands.
    pub strip_a_rows: (usize, usize),
    pub strip_b_rows: (usize, usize),
    /// Gaussian pixel noise sigma in gray levels; zero disables.
    pub pixel_noise: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            width: 320,
            height: 240,
            fov_deg: 60.0,
            max_range_m: 2.5,
            background: 120,
            strip_value: 255,
            pile_value: 30,
            strip_a_rows: (40, 60),
            strip_b_rows: (180, 200),
            pixel_noise: 1.5,
        }
    }
}

impl CameraConfig {
    pub fn fov_rad(&self) -> f64 {
        self.fov_deg.to_radians()
    }

    /// Bearing offset from the optical axis for a column center,
    /// left edge looking left (positive offset).
    pub fn column_bearing(&self, column: usize) -> f64 {
        (0.5 - (column as f64 + 0.5) / self.width as f64) * self.fov_rad()
    }

    /// Vertical focal length in pixels (square pixels assumed).
    pub fn focal_px(&self) -> f64 {
        self.width as f64 / 2.0 / (self.fov_rad() / 2.0).tan()
    }
}

/// Render the scene for a robot at `pose`: background, both LED strips,
/// pile silhouettes. Deterministic; apply [`add_pixel_noise`] separately
/// when sensor noise is wanted.
pub fn render_camera(pose: &Pose, deposits: &DepositMap, cfg: &CameraConfig) -> GrayImage {
    let mut img = GrayImage::new(cfg.width, cfg.height, cfg.background);
    for band in [cfg.strip_a_rows, cfg.strip_b_rows] {
        for y in band.0..band.1.min(cfg.height) {
            for x in 0..cfg.width {
                img.set(x, y, cfg.strip_value);
            }
        }
    }
    let horizon = cfg.height / 2;
    let focal = cfg.focal_px();
    for pile in &deposits.piles {
        let d = pose.pos.dist(pile.position);
        if d < 1e-6 || d > cfg.max_range_m || pile.height_m <= 0.0 {
            continue;
        }
        let bearing = wrap_angle(pose.pos.bearing_to(pile.position) - pose.heading);
        if bearing.abs() > cfg.fov_rad() {
            continue;
        }
        let radius = pile.height_m / deposits.repose_angle_rad.tan();
        let half_w = (radius / d).atan();
        let half_h_px = ((pile.height_m / d).atan() * focal).max(1.0);
        for x in 0..cfg.width {
            let off = cfg.column_bearing(x);
            if (off - bearing).abs() > half_w {
                continue;
            }
            let lo = (horizon as f64 - half_h_px).max(0.0) as usize;
            let hi = ((horizon as f64 + half_h_px) as usize).min(cfg.height - 1);
            for y in lo..=hi {
                img.set(x, y, cfg.pile_value);
            }
        }
    }
    img
}

pub fn add_pixel_noise<R: Rng + ?Sized>(img: &mut GrayImage, sigma: f64, rng: &mut R) {
    if sigma <= 0.0 {
        return;
    }
    let dist = Normal::new(0.0, sigma).expect("sigma checked positive");
    for y in 0..img.height() {
        for x in 0..img.width() {
            let v = f64::from(img.get(x, y)) + dist.sample(rng);
            img.set(x, y, v.round().clamp(0.0, 255.0) as u8);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::media::Pellet;

    fn deposits_with_pile(at: Vec2, n: usize) -> DepositMap {
        let mut d = DepositMap::new(0.1, 35f64.to_radians());
        let p = Pellet::new(0.008, 8.0e-6, 0.9, 0.0).unwrap();
        for _ in 0..n {
            d.add_deposit(at, &p);
        }
        d
    }

    #[test]
    fn pgm_round_trip_binary() {
        let mut img = GrayImage::new(7, 5, 9);
        img.set(3, 2, 200);
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        let back = GrayImage::read_pgm(&buf[..]).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pgm_reads_ascii() {
        let text = "P2\n# comment\n3 2\n255\n0 10 20\n30 40 50\n";
        let img = GrayImage::read_pgm(text.as_bytes()).unwrap();
        assert_eq!(img.width(), 3);
        assert_eq!(img.get(2, 1), 50);
    }

    #[test]
    fn pgm_rejects_garbage() {
        assert!(GrayImage::read_pgm(&b"P6\n1 1\n255\nx"[..]).is_err());
        assert!(GrayImage::read_pgm(&b"P5\n4 4\n255\nxy"[..]).is_err());
        assert!(GrayImage::read_pgm(&b"P5\n0 0\n255\n"[..]).is_err());
    }

    #[test]
    fn empty_scene_has_strips_only() {
        let cfg = CameraConfig::default();
        let img = render_camera(
            &Pose::new(0.9, 0.6, 0.0),
            &DepositMap::new(0.1, 0.6),
            &cfg,
        );
        assert_eq!(img.get(10, 50), 255);
        assert_eq!(img.get(10, 190), 255);
        assert_eq!(img.get(10, 120), 120);
        assert!(img.pixels().iter().all(|&p| p == 120 || p == 255));
    }

    #[test]
    fn pile_darkens_columns_between_strips() {
        let cfg = CameraConfig::default();
        let d = deposits_with_pile(Vec2::new(1.5, 0.6), 12);
        let img = render_camera(&Pose::new(0.9, 0.6, 0.0), &d, &cfg);
        let mid = cfg.width / 2;
        assert_eq!(img.get(mid, 120), cfg.pile_value);
        assert_eq!(img.get(mid, 50), 255, "strip survives a distant pile");
        assert_eq!(img.get(5, 120), cfg.background, "edge columns clear");
    }

    #[test]
    fn pile_behind_camera_invisible() {
        let cfg = CameraConfig::default();
        let d = deposits_with_pile(Vec2::new(0.2, 0.6), 12);
        let img = render_camera(&Pose::new(0.9, 0.6, 0.0), &d, &cfg);
        assert!(img.pixels().iter().all(|&p| p != cfg.pile_value));
    }

    #[test]
    fn rendering_is_deterministic_and_noise_is_seeded() {
        let cfg = CameraConfig::default();
        let d = deposits_with_pile(Vec2::new(1.4, 0.7), 6);
        let pose = Pose::new(0.8, 0.5, 0.2);
        let a = render_camera(&pose, &d, &cfg);
        let b = render_camera(&pose, &d, &cfg);
        assert_eq!(a, b);
        let mut n1 = a.clone();
        let mut n2 = a.clone();
        let fan = crate::rng::SeedFanout::new(5);
        add_pixel_noise(&mut n1, 1.5, &mut fan.stream("cam"));
        add_pixel_noise(&mut n2, 1.5, &mut fan.stream("cam"));
        assert_eq!(n1, n2);
        assert_ne!(n1, a);
    }
}
