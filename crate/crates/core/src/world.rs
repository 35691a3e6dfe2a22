//! Arena, light beacons and deposited material.
//!
//! Two colored emitters face each other across the arena: blue over the
//! excavation zone, red over the deposit wall. Intensity at the robot falls
//! off with distance and with the angle between the robot's facing and the
//! bearing to the emitter, so sweeping in place gives a single intensity
//! peak per channel to home on.

use crate::error::{Result, SimError};
use crate::geom::{Rect, Vec2};
use crate::media::Pellet;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LightChannel {
    Blue,
    Red,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub bounds: Rect,
    pub excavation_zone: Rect,
    pub blue_emitter: Vec2,
    pub red_emitter: Vec2,
    /// Sharpness of the directional response, higher is narrower.
    pub lobe_exponent: f64,
    /// Distance at which intensity halves once, meters.
    pub falloff_distance_m: f64,
}

impl Default for Arena {
    fn default() -> Self {
        Arena {
            bounds: Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.8, 1.2)),
            excavation_zone: Rect::new(Vec2::new(0.0, 0.0), Vec2::new(0.3, 1.2)),
            blue_emitter: Vec2::new(0.0, 0.6),
            red_emitter: Vec2::new(1.8, 0.6),
            lobe_exponent: 8.0,
            falloff_distance_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightReading {
    pub intensity: f64,
    /// Set when the raw response exceeded the sensor range and was clipped.
    pub clamped: bool,
}

impl Arena {
    pub fn validate(&self) -> Result<()> {
        if !self.bounds.is_proper() {
            return Err(SimError::Geometry("arena bounds degenerate".into()));
        }
        if !self.bounds.contains_rect(&self.excavation_zone) {
            return Err(SimError::Geometry(
                "excavation zone outside arena".into(),
            ));
        }
        if self.lobe_exponent <= 0.0 || self.falloff_distance_m <= 0.0 {
            return Err(SimError::Geometry("light model parameters".into()));
        }
        Ok(())
    }

    pub fn emitter(&self, channel: LightChannel) -> Vec2 {
        match channel {
            LightChannel::Blue => self.blue_emitter,
            LightChannel::Red => self.red_emitter,
        }
    }

    /// Directional intensity in [0, 1] seen at `pos` facing `heading`.
    pub fn light_intensity(
        &self,
        pos: Vec2,
        heading: f64,
        channel: LightChannel,
    ) -> Result<LightReading> {
        if !self.bounds.contains(pos) {
            return Err(SimError::Geometry(format!(
                "position ({}, {}) outside arena",
                pos.x, pos.y
            )));
        }
        let emitter = self.emitter(channel);
        let bearing = pos.bearing_to(emitter);
        let off = crate::geom::wrap_angle(bearing - heading);
        let lobe = ((1.0 + off.cos()) / 2.0).powf(self.lobe_exponent);
        let d = pos.dist(emitter);
        let raw = lobe / (1.0 + (d / self.falloff_distance_m).powi(2));
        let clamped = raw > 1.0;
        Ok(LightReading {
            intensity: raw.min(1.0),
            clamped,
        })
    }
}

/// One conical pile of deposited media.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pile {
    pub position: Vec2,
    pub mass_kg: f64,
    pub volume_m3: f64,
    pub height_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepositMap {
    pub piles: Vec<Pile>,
    /// Deposits landing within this distance of an existing pile merge
    /// into it.
    pub merge_radius_m: f64,
    /// Angle of repose of deposited clumps, radians.
    pub repose_angle_rad: f64,
}

impl DepositMap {
    pub fn new(merge_radius_m: f64, repose_angle_rad: f64) -> Self {
        DepositMap {
            piles: Vec::new(),
            merge_radius_m,
            repose_angle_rad,
        }
    }

    fn cone_height(&self, volume_m3: f64) -> f64 {
        // V = pi h^3 / (3 tan^2 a) for a cone at repose angle a.
        let t = self.repose_angle_rad.tan();
        (3.0 * volume_m3 * t * t / std::f64::consts::PI).cbrt()
    }

    /// Drop a pellet at `position`: merge into the nearest pile within the
    /// merge radius, else start a new pile. Returns the pile index.
    pub fn add_deposit(&mut self, position: Vec2, pellet: &Pellet) -> usize {
        let nearest = self
            .piles
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.position.dist(position)))
            .filter(|&(_, d)| d <= self.merge_radius_m)
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        let idx = match nearest {
            Some((i, _)) => {
                let p = &mut self.piles[i];
                p.mass_kg += pellet.mass_kg;
                p.volume_m3 += pellet.volume_m3;
                i
            }
            None => {
                self.piles.push(Pile {
                    position,
                    mass_kg: pellet.mass_kg,
                    volume_m3: pellet.volume_m3,
                    height_m: 0.0,
                });
                self.piles.len() - 1
            }
        };
        self.piles[idx].height_m = self.cone_height(self.piles[idx].volume_m3);
        idx
    }

    pub fn total_mass(&self) -> f64 {
        self.piles.iter().map(|p| p.mass_kg).sum()
    }

    /// Terrain height contributed by piles at `pos`; cones overlap by max.
    pub fn height_at(&self, pos: Vec2) -> f64 {
        let t = self.repose_angle_rad.tan();
        self.piles
            .iter()
            .map(|p| {
                let r = pos.dist(p.position);
                (p.height_m - r * t).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn light_peaks_at_bearing_and_decays_with_distance() {
        let a = Arena::default();
        let pos = Vec2::new(0.9, 0.6);
        let facing = a.light_intensity(pos, PI, LightChannel::Blue).unwrap();
        let away = a.light_intensity(pos, 0.0, LightChannel::Blue).unwrap();
        assert!(facing.intensity > away.intensity);
        assert!(!facing.clamped);

        let near = a
            .light_intensity(Vec2::new(0.3, 0.6), PI, LightChannel::Blue)
            .unwrap();
        assert!(near.intensity > facing.intensity);
    }

    #[test]
    fn heading_sweep_is_unimodal_everywhere() {
        let a = Arena::default();
        let mut rng_state = 0x12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let pos = Vec2::new(0.05 + 1.7 * next(), 0.05 + 1.1 * next());
            for channel in [LightChannel::Blue, LightChannel::Red] {
                let n = 360;
                let vals: Vec<f64> = (0..n)
                    .map(|k| {
                        let h = k as f64 / n as f64 * std::f64::consts::TAU;
                        a.light_intensity(pos, h, channel).unwrap().intensity
                    })
                    .collect();
                let mut maxima = 0;
                for i in 0..n {
                    let prev = vals[(i + n - 1) % n];
                    let next_v = vals[(i + 1) % n];
                    if vals[i] > prev && vals[i] > next_v {
                        maxima += 1;
                    }
                }
                assert_eq!(maxima, 1, "at ({}, {})", pos.x, pos.y);
            }
        }
    }

    #[test]
    fn outside_arena_is_an_error() {
        let a = Arena::default();
        assert!(a
            .light_intensity(Vec2::new(-0.1, 0.5), 0.0, LightChannel::Blue)
            .is_err());
    }

    #[test]
    fn deposits_merge_within_radius_and_split_outside() {
        let mut d = DepositMap::new(0.1, 35f64.to_radians());
        let pellet = Pellet::new(0.008, 8.0e-6, 0.9, 0.0).unwrap();
        let i0 = d.add_deposit(Vec2::new(1.7, 0.6), &pellet);
        let i1 = d.add_deposit(Vec2::new(1.72, 0.65), &pellet);
        assert_eq!(i0, i1);
        assert_eq!(d.piles.len(), 1);
        let i2 = d.add_deposit(Vec2::new(1.7, 0.9), &pellet);
        assert_ne!(i0, i2);
        assert_eq!(d.piles.len(), 2);
        assert_relative_eq!(d.total_mass(), 0.024, epsilon = 1e-15);
    }

    #[test]
    fn pile_height_grows_monotonically_with_mass() {
        let mut d = DepositMap::new(0.1, 35f64.to_radians());
        let pellet = Pellet::new(0.008, 8.0e-6, 0.9, 0.0).unwrap();
        let mut prev = 0.0;
        for _ in 0..10 {
            let i = d.add_deposit(Vec2::new(1.7, 0.6), &pellet);
            assert!(d.piles[i].height_m > prev);
            prev = d.piles[i].height_m;
        }
        // Height at the pile center is the pile height; it fades to zero at
        // the cone edge.
        assert_relative_eq!(d.height_at(Vec2::new(1.7, 0.6)), prev, epsilon = 1e-12);
        assert_eq!(d.height_at(Vec2::new(0.2, 0.2)), 0.0);
    }

    #[test]
    fn cone_geometry_matches_closed_form() {
        let d = DepositMap::new(0.1, 35f64.to_radians());
        let v = 3.27e-4;
        let h = d.cone_height(v);
        let t = 35f64.to_radians().tan();
        assert_relative_eq!(PI * h.powi(3) / (3.0 * t * t), v, max_relative = 1e-12);
    }
}
