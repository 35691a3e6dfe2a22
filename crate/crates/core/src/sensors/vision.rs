//! Pile detection in camera frames.
//!
//! A column shows a pile when something dark sits in it while both LED
//! strips are still visible: at least one pixel below the dark threshold
//! and at least two maximal bright runs. Requiring the strips rejects the
//! two failure modes of a bare darkness test, sensor dropout (no bright
//! runs at all) and a wall or carried clump filling the view (one merged
//! run or none).

use crate::sensors::camera::{CameraConfig, GrayImage};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisionConfig {
    /// Pixels strictly below this count as dark.
    pub dark_below: u8,
    /// Pixels at or above this count as bright.
    pub bright_at_least: u8,
    pub min_dark_pixels: usize,
    pub min_bright_runs: usize,
}

impl Default for VisionConfig {
    fn default() -> Self {
        VisionConfig {
            dark_below: 64,
            bright_at_least: 250,
            min_dark_pixels: 1,
            min_bright_runs: 2,
        }
    }
}

/// Inclusive column span.
pub type ColumnSpan = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PileDetection {
    /// Maximal runs of pile columns, left to right.
    pub groups: Vec<ColumnSpan>,
    /// Widest group, leftmost on ties.
    pub chosen: Option<ColumnSpan>,
}

pub fn column_is_pile(img: &GrayImage, x: usize, cfg: &VisionConfig) -> bool {
    let mut dark = 0usize;
    let mut runs = 0usize;
    let mut in_run = false;
    for y in 0..img.height() {
        let v = img.get(x, y);
        if v < cfg.dark_below {
            dark += 1;
        }
        if v >= cfg.bright_at_least {
            if !in_run {
                runs += 1;
                in_run = true;
            }
        } else {
            in_run = false;
        }
    }
    dark >= cfg.min_dark_pixels && runs >= cfg.min_bright_runs
}

pub fn detect_piles(img: &GrayImage, cfg: &VisionConfig) -> PileDetection {
    let mut groups: Vec<ColumnSpan> = Vec::new();
    let mut open: Option<usize> = None;
    for x in 0..img.width() {
        let hit = column_is_pile(img, x, cfg);
        match (hit, open) {
            (true, None) => open = Some(x),
            (false, Some(start)) => {
                groups.push((start, x - 1));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        groups.push((start, img.width() - 1));
    }
    let chosen = groups
        .iter()
        .copied()
        .max_by(|a, b| {
            let wa = a.1 - a.0;
            let wb = b.1 - b.0;
            wa.cmp(&wb).then(b.0.cmp(&a.0))
        });
    PileDetection { groups, chosen }
}

/// Bearing offset of a detected group's center from the optical axis,
/// radians, positive to the robot's left.
pub fn group_bearing(span: ColumnSpan, cam: &CameraConfig) -> f64 {
    let mid = (span.0 + span.1) as f64 / 2.0;
    (0.5 - (mid + 0.5) / cam.width as f64) * cam.fov_rad()
}
