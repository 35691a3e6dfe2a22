//! Minimal planar geometry. The simulation is 2D with heights handled as
//! scalar fields, so a hand-rolled vector type beats pulling in a linear
//! algebra stack.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dist(self, other: Vec2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn add_scaled(self, dir: Vec2, k: f64) -> Vec2 {
        Vec2::new(self.x + dir.x * k, self.y + dir.y * k)
    }

    /// Unit vector at `heading` radians, zero pointing along +x.
    pub fn from_heading(heading: f64) -> Vec2 {
        Vec2::new(heading.cos(), heading.sin())
    }

    pub fn bearing_to(self, target: Vec2) -> f64 {
        (target.y - self.y).atan2(target.x - self.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Rect { min, max }
    }

    pub fn is_proper(&self) -> bool {
        self.max.x > self.min.x && self.max.y > self.min.y
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, r: &Rect) -> bool {
        self.contains(r.min) && self.contains(r.max)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }
}

/// Planar pose: position plus heading in radians, zero along +x,
/// counterclockwise positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub pos: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose {
            pos: Vec2::new(x, y),
            heading,
        }
    }

    pub fn ahead(&self, dist: f64) -> Vec2 {
        self.pos.add_scaled(Vec2::from_heading(self.heading), dist)
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    } else if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn wrap_stays_in_range() {
        for k in -720..=720 {
            let a = wrap_angle(k as f64 * 0.05);
            assert!(a > -PI - 1e-12 && a <= PI + 1e-12);
        }
        assert_relative_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-FRAC_PI_2 * 5.0), -FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn rect_contains_and_clamp() {
        let r = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(2.0, 1.0));
        assert!(r.contains(Vec2::new(2.0, 1.0)));
        assert!(!r.contains(Vec2::new(2.001, 0.5)));
        let c = r.clamp(Vec2::new(-1.0, 3.0));
        assert_eq!(c, Vec2::new(0.0, 1.0));
    }

    #[test]
    fn pose_ahead_points_along_heading() {
        let p = Pose::new(1.0, 1.0, FRAC_PI_2);
        let q = p.ahead(0.5);
        assert_relative_eq!(q.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(q.y, 1.5, epsilon = 1e-12);
    }
}
