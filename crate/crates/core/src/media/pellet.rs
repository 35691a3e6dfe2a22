//! Separated clumps of media, from jaw grab to deposit.

use crate::error::{Result, SimError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pellet {
    pub mass_kg: f64,
    pub volume_m3: f64,
    /// How well the clump holds together in transit, in [0, 1].
    pub cohesion: f64,
    /// Entanglement still tying the clump to the bulk it came from, in
    /// newtons. Drops to zero only once tearing fully severed it.
    pub residual_bond_n: f64,
}

impl Pellet {
    pub fn empty() -> Self {
        Pellet {
            mass_kg: 0.0,
            volume_m3: 0.0,
            cohesion: 0.0,
            residual_bond_n: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.mass_kg <= 0.0
    }

    pub fn new(mass_kg: f64, volume_m3: f64, cohesion: f64, residual_bond_n: f64) -> Result<Self> {
        if mass_kg < 0.0 || volume_m3 < 0.0 || !(0.0..=1.0).contains(&cohesion) {
            return Err(SimError::domain(format!(
                "pellet mass {mass_kg}, volume {volume_m3}, cohesion {cohesion}"
            )));
        }
        if mass_kg > 0.0 && volume_m3 <= 0.0 {
            return Err(SimError::domain(
                "pellet with mass needs positive volume".to_string(),
            ));
        }
        Ok(Pellet {
            mass_kg,
            volume_m3,
            cohesion,
            residual_bond_n,
        })
    }

    /// Packing fraction implied by mass, volume and particle density.
    pub fn packing_fraction(&self, particle_density: f64) -> f64 {
        if self.volume_m3 <= 0.0 {
            0.0
        } else {
            self.mass_kg / (self.volume_m3 * particle_density)
        }
    }
}

/// Jaw squeezes re-entangle the clump with itself; each squeeze closes a
/// fixed fraction `gain` of the remaining cohesion deficit. Mass and volume
/// are untouched.
pub fn recompact(pellet: Pellet, n_squeezes: u32, gain: f64) -> Pellet {
    if n_squeezes == 0 {
        return pellet;
    }
    let deficit = 1.0 - pellet.cohesion;
    let factor = (-gain * f64::from(n_squeezes)).exp();
    Pellet {
        cohesion: 1.0 - deficit * factor,
        ..pellet
    }
}
