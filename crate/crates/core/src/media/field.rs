//! Spatial state of the granular bed.
//!
//! The arena floor is a uniform grid of cells, each holding staple mass,
//! packing fraction, compression history and orientation coherence. The
//! robot interacts with the bed through engagements: grabbing a spot ties a
//! prospective clump to the bulk by an entanglement bond priced by the
//! tensile law at that cell's compression history. Tear cycles work the
//! bond down; separation removes the clump's mass from the bed and hands
//! back a pellet that remembers how much bond was never severed.

use crate::error::{Result, SimError};
use crate::geom::{Rect, Vec2};
use crate::media::constitutive::{
    mean_tensile_force, sample_tensile_force, ConstitutiveParams, COMPRESSION_LIMIT,
};
use crate::media::pellet::Pellet;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// U-shaped staple: 12 mm crown, 6 mm legs, standard office wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StapleSpec {
    pub crown_m: f64,
    pub leg_m: f64,
    pub mass_kg: f64,
}

impl Default for StapleSpec {
    fn default() -> Self {
        StapleSpec {
            crown_m: 0.012,
            leg_m: 0.006,
            mass_kg: 5.7e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaConfig {
    pub cell_size_m: f64,
    /// Solid density of the staple steel, kg/m^3.
    pub particle_density: f64,
    pub staple: StapleSpec,
    pub scattered_phi_mean: f64,
    pub scattered_phi_std: f64,
    pub pushed_phi_mean: f64,
    pub pushed_phi_std: f64,
    pub pushed_compression_mean: f64,
    pub pushed_compression_std: f64,
    /// How upright the staples sit, 0 raked flat to 1 standing proud.
    /// Rained-in beds keep legs lofted; pushing flattens them down.
    pub scattered_alignment: f64,
    pub pushed_alignment: f64,
    /// Cohesion of a freshly torn clump before any squeezes.
    pub fresh_cohesion: f64,
    /// Fraction of the cohesion deficit closed per jaw squeeze.
    pub squeeze_gain: f64,
    /// Bond strength as a multiple of the mean tensile force at
    /// `bond_strain` for the cell's compression history.
    pub bond_scale: f64,
    /// Lognormal sigma of grab-to-grab bond variation.
    pub bond_sigma: f64,
    pub bond_strain: f64,
    /// Jaw fill fraction is uniform on [grab_fill_min, 1].
    pub grab_fill_min: f64,
    pub tear_strain_init: f64,
    pub tear_strain_step: f64,
    pub tear_strain_max: f64,
    /// Strain retained after a slip, as a fraction.
    pub tear_slip_relax: f64,
    /// Newtons of bond severed per newton of force margin.
    pub tear_efficiency: f64,
    /// Horizontal pulls shear across the entanglement instead of lifting
    /// through it; relative efficiency.
    pub tear_mode_horizontal: f64,
    /// Uniform relative noise on each bond removal.
    pub tear_noise: f64,
    /// Compression added to nearby cells by each successful tear; working
    /// the bed packs its surroundings.
    pub tear_compression_spread: f64,
    pub tear_spread_radius_m: f64,
    /// How far separation may pull mass from around the grab point.
    pub jaw_reach_m: f64,
    /// Below this a cell is too empty to engage.
    pub min_engage_mass_kg: f64,
}

impl Default for MediaConfig {
    fn default() -> Self {
        MediaConfig {
            cell_size_m: 0.05,
            particle_density: 7850.0,
            staple: StapleSpec::default(),
            scattered_phi_mean: 0.117,
            scattered_phi_std: 0.002,
            pushed_phi_mean: 0.072,
            pushed_phi_std: 0.005,
            pushed_compression_mean: 0.15,
            pushed_compression_std: 0.08,
            scattered_alignment: 0.6,
            pushed_alignment: 0.2,
            fresh_cohesion: 0.3,
            squeeze_gain: 0.8,
            bond_scale: 1.7,
            bond_sigma: 0.45,
            bond_strain: 0.30,
            grab_fill_min: 0.5,
            tear_strain_init: 0.05,
            tear_strain_step: 0.06,
            tear_strain_max: 0.34,
            tear_slip_relax: 0.5,
            tear_efficiency: 0.5,
            tear_mode_horizontal: 0.8,
            tear_noise: 0.2,
            tear_compression_spread: 0.0005,
            tear_spread_radius_m: 0.07,
            jaw_reach_m: 0.06,
            min_engage_mass_kg: 5e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediaCell {
    pub mass_kg: f64,
    pub volume_fraction: f64,
    /// Compression history, non-decreasing over a cell's lifetime.
    pub compression_history: f64,
    pub alignment: f64,
}

impl MediaCell {
    fn empty() -> Self {
        MediaCell {
            mass_kg: 0.0,
            volume_fraction: 0.0,
            compression_history: 0.0,
            alignment: 0.0,
        }
    }
}

/// A live grab: the prospective clump and its remaining tie to the bulk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Engagement {
    pub bond_n: f64,
    pub strain: f64,
    pub fill_fraction: f64,
    pub cohesion: f64,
    /// Compression history frozen at grab time.
    pub compression: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TearMode {
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TearOutcome {
    pub engaged: bool,
    pub resistance_n: f64,
    pub bond_removed_n: f64,
    pub bond_remaining_n: f64,
    pub slipped: bool,
}

impl TearOutcome {
    fn nothing() -> Self {
        TearOutcome {
            engaged: false,
            resistance_n: 0.0,
            bond_removed_n: 0.0,
            bond_remaining_n: 0.0,
            slipped: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrepMode {
    Scattered,
    Pushed,
}

#[derive(Debug, Clone)]
pub struct MediaField {
    bounds: Rect,
    cell_size: f64,
    nx: usize,
    ny: usize,
    cells: Vec<MediaCell>,
    engagements: BTreeMap<usize, Engagement>,
    params: ConstitutiveParams<f64>,
    cfg: MediaConfig,
}

impl MediaField {
    fn new_empty(arena: &Rect, cfg: MediaConfig, params: ConstitutiveParams<f64>) -> Result<Self> {
        if !arena.is_proper() {
            return Err(SimError::Geometry("arena rect is degenerate".into()));
        }
        if cfg.cell_size_m <= 0.0 {
            return Err(SimError::Geometry(format!(
                "cell size {} must be positive",
                cfg.cell_size_m
            )));
        }
        params.validate()?;
        let nx = (arena.width() / cfg.cell_size_m).ceil() as usize;
        let ny = (arena.height() / cfg.cell_size_m).ceil() as usize;
        Ok(MediaField {
            bounds: *arena,
            cell_size: cfg.cell_size_m,
            nx,
            ny,
            cells: vec![MediaCell::empty(); nx * ny],
            engagements: BTreeMap::new(),
            params,
            cfg,
        })
    }

    /// Loose preparation: staples strewn over `region` at the scattered
    /// packing fraction, zero compression history.
    pub fn prepare_scattered<R: Rng + ?Sized>(
        arena: &Rect,
        region: &Rect,
        total_mass_kg: f64,
        cfg: MediaConfig,
        params: ConstitutiveParams<f64>,
        rng: &mut R,
    ) -> Result<Self> {
        Self::prepare(arena, region, total_mass_kg, cfg, params, PrepMode::Scattered, rng)
    }

    /// Plowed preparation: the same mass pushed into `region`, looser
    /// packing with a nonzero, spatially varying compression history.
    pub fn prepare_pushed<R: Rng + ?Sized>(
        arena: &Rect,
        region: &Rect,
        total_mass_kg: f64,
        cfg: MediaConfig,
        params: ConstitutiveParams<f64>,
        rng: &mut R,
    ) -> Result<Self> {
        Self::prepare(arena, region, total_mass_kg, cfg, params, PrepMode::Pushed, rng)
    }

    pub fn prepare<R: Rng + ?Sized>(
        arena: &Rect,
        region: &Rect,
        total_mass_kg: f64,
        cfg: MediaConfig,
        params: ConstitutiveParams<f64>,
        mode: PrepMode,
        rng: &mut R,
    ) -> Result<Self> {
        if !region.is_proper() || !arena.contains_rect(region) {
            return Err(SimError::Geometry(format!(
                "prepared region {region:?} must lie inside the arena {arena:?}"
            )));
        }
        if total_mass_kg <= 0.0 || !total_mass_kg.is_finite() {
            return Err(SimError::domain(format!("total mass {total_mass_kg}")));
        }
        let mut field = Self::new_empty(arena, cfg, params)?;
        let (phi_mean, phi_std, align) = match mode {
            PrepMode::Scattered => (
                field.cfg.scattered_phi_mean,
                field.cfg.scattered_phi_std,
                field.cfg.scattered_alignment,
            ),
            PrepMode::Pushed => (
                field.cfg.pushed_phi_mean,
                field.cfg.pushed_phi_std,
                field.cfg.pushed_alignment,
            ),
        };
        let phi_dist = Normal::new(phi_mean, phi_std)
            .map_err(|e| SimError::domain(format!("phi: {e}")))?;
        let comp_dist = Normal::new(
            field.cfg.pushed_compression_mean,
            field.cfg.pushed_compression_std,
        )
        .map_err(|e| SimError::domain(format!("compression: {e}")))?;

        let idxs = field.cells_in(region);
        if idxs.is_empty() {
            return Err(SimError::Geometry("region covers no cells".into()));
        }
        let mut weights = Vec::with_capacity(idxs.len());
        for &i in &idxs {
            let phi = phi_dist.sample(rng).clamp(0.004, 0.9);
            let c = match mode {
                PrepMode::Scattered => 0.0,
                PrepMode::Pushed => comp_dist.sample(rng).clamp(0.0, COMPRESSION_LIMIT),
            };
            field.cells[i] = MediaCell {
                mass_kg: 0.0,
                volume_fraction: phi,
                compression_history: c,
                alignment: align,
            };
            weights.push(phi);
        }
        let wsum: f64 = weights.iter().sum();
        let mut assigned = 0.0;
        for (k, &i) in idxs.iter().enumerate() {
            let m = if k + 1 == idxs.len() {
                // Last cell takes the remainder so the bed holds exactly the
                // requested mass, not a float-rounded neighbor of it.
                total_mass_kg - assigned
            } else {
                total_mass_kg * weights[k] / wsum
            };
            field.cells[i].mass_kg = m.max(0.0);
            assigned += m;
        }
        Ok(field)
    }

    pub fn bounds(&self) -> &Rect {
        &self.bounds
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn cells(&self) -> &[MediaCell] {
        &self.cells
    }

    pub fn config(&self) -> &MediaConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ConstitutiveParams<f64> {
        &self.params
    }

    pub fn cell_index(&self, pos: Vec2) -> Option<usize> {
        if !self.bounds.contains(pos) {
            return None;
        }
        let ix = (((pos.x - self.bounds.min.x) / self.cell_size) as usize).min(self.nx - 1);
        let iy = (((pos.y - self.bounds.min.y) / self.cell_size) as usize).min(self.ny - 1);
        Some(iy * self.nx + ix)
    }

    pub fn cell_center(&self, idx: usize) -> Vec2 {
        let ix = idx % self.nx;
        let iy = idx / self.nx;
        Vec2::new(
            self.bounds.min.x + (ix as f64 + 0.5) * self.cell_size,
            self.bounds.min.y + (iy as f64 + 0.5) * self.cell_size,
        )
    }

    fn cells_in(&self, region: &Rect) -> Vec<usize> {
        (0..self.cells.len())
            .filter(|&i| region.contains(self.cell_center(i)))
            .collect()
    }

    fn cells_within(&self, pos: Vec2, radius: f64) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.cells.len())
            .filter(|&i| self.cell_center(i).dist(pos) <= radius)
            .collect();
        out.sort_by(|&a, &b| {
            self.cell_center(a)
                .dist(pos)
                .partial_cmp(&self.cell_center(b).dist(pos))
                .unwrap()
                .then(a.cmp(&b))
        });
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.mass_kg).sum()
    }

    pub fn region_mass(&self, region: &Rect) -> f64 {
        self.cells_in(region)
            .iter()
            .map(|&i| self.cells[i].mass_kg)
            .sum()
    }

    /// Mass-weighted mean packing fraction over `region`; zero when empty.
    pub fn volume_fraction(&self, region: &Rect) -> f64 {
        let idxs = self.cells_in(region);
        let m: f64 = idxs.iter().map(|&i| self.cells[i].mass_kg).sum();
        if m <= 0.0 {
            return 0.0;
        }
        idxs.iter()
            .map(|&i| self.cells[i].mass_kg * self.cells[i].volume_fraction)
            .sum::<f64>()
            / m
    }

    pub fn mean_compression(&self, region: &Rect) -> f64 {
        let idxs = self.cells_in(region);
        let m: f64 = idxs.iter().map(|&i| self.cells[i].mass_kg).sum();
        if m <= 0.0 {
            return 0.0;
        }
        idxs.iter()
            .map(|&i| self.cells[i].mass_kg * self.cells[i].compression_history)
            .sum::<f64>()
            / m
    }

    /// Fullest engageable cell whose center lies within `radius`.
    pub fn richest_cell_near(&self, pos: Vec2, radius: f64) -> Option<usize> {
        self.cells_within(pos, radius)
            .into_iter()
            .filter(|&i| self.cells[i].mass_kg >= self.cfg.min_engage_mass_kg)
            .max_by(|&a, &b| {
                self.cells[a]
                    .mass_kg
                    .partial_cmp(&self.cells[b].mass_kg)
                    .unwrap()
                    .then(b.cmp(&a))
            })
    }

    pub fn available_mass_near(&self, pos: Vec2, radius: f64) -> f64 {
        self.cells_within(pos, radius)
            .iter()
            .map(|&i| self.cells[i].mass_kg)
            .sum()
    }

    pub fn engagement_at(&self, pos: Vec2) -> Option<&Engagement> {
        self.cell_index(pos).and_then(|i| self.engagements.get(&i))
    }

    /// One tear cycle at `location`. Creates the engagement on first
    /// contact, then pits the sampled tensile resistance against the grip:
    /// a positive margin severs bond, a negative one slips the jaw and
    /// relaxes the working strain.
    pub fn tear_step<R: Rng + ?Sized>(
        &mut self,
        location: Vec2,
        mode: TearMode,
        grip_force_n: f64,
        rng: &mut R,
    ) -> Result<TearOutcome> {
        if grip_force_n < 0.0 || !grip_force_n.is_finite() {
            return Err(SimError::domain(format!("grip force {grip_force_n}")));
        }
        let Some(idx) = self.cell_index(location) else {
            return Ok(TearOutcome::nothing());
        };
        if self.cells[idx].mass_kg < self.cfg.min_engage_mass_kg
            && !self.engagements.contains_key(&idx)
        {
            return Ok(TearOutcome::nothing());
        }
        let cell = self.cells[idx];
        let cfg = self.cfg.clone();
        let params = self.params;
        let eng = match self.engagements.entry(idx) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(v) => {
                let c = cell.compression_history.min(COMPRESSION_LIMIT);
                let base = mean_tensile_force(cfg.bond_strain, c, &params)?;
                let noise = LogNormal::new(0.0, cfg.bond_sigma)
                    .map_err(|e| SimError::domain(format!("bond sigma: {e}")))?
                    .sample(rng);
                let fill = rng.random_range(cfg.grab_fill_min..=1.0);
                v.insert(Engagement {
                    bond_n: cfg.bond_scale * base * noise,
                    strain: cfg.tear_strain_init,
                    fill_fraction: fill,
                    cohesion: cfg.fresh_cohesion,
                    compression: c,
                })
            }
        };
        let resistance =
            sample_tensile_force(eng.strain, eng.compression, &params, rng)?;
        let margin = grip_force_n - resistance;
        let outcome = if margin <= 0.0 {
            eng.strain = (eng.strain * cfg.tear_slip_relax).max(cfg.tear_strain_init * 0.2);
            TearOutcome {
                engaged: true,
                resistance_n: resistance,
                bond_removed_n: 0.0,
                bond_remaining_n: eng.bond_n,
                slipped: true,
            }
        } else {
            let eff = match mode {
                TearMode::Vertical => cfg.tear_efficiency,
                TearMode::Horizontal => cfg.tear_efficiency * cfg.tear_mode_horizontal,
            };
            let noise = 1.0 + cfg.tear_noise * (rng.random::<f64>() * 2.0 - 1.0);
            let removed = (eff * margin * noise).min(eng.bond_n);
            eng.bond_n -= removed;
            eng.strain = (eng.strain + cfg.tear_strain_step).min(cfg.tear_strain_max);
            let remaining = eng.bond_n;
            self.spread_compression(location);
            TearOutcome {
                engaged: true,
                resistance_n: resistance,
                bond_removed_n: removed,
                bond_remaining_n: remaining,
                slipped: false,
            }
        };
        Ok(outcome)
    }

    fn spread_compression(&mut self, location: Vec2) {
        let step = self.cfg.tear_compression_spread;
        if step <= 0.0 {
            return;
        }
        for i in self.cells_within(location, self.cfg.tear_spread_radius_m) {
            let c = &mut self.cells[i].compression_history;
            *c = (*c + step).min(COMPRESSION_LIMIT);
        }
    }

    /// One in-jaw squeeze of the engaged clump; true when a grab was there
    /// to squeeze.
    pub fn squeeze(&mut self, location: Vec2) -> bool {
        let Some(idx) = self.cell_index(location) else {
            return false;
        };
        let gain = self.cfg.squeeze_gain;
        match self.engagements.get_mut(&idx) {
            Some(e) => {
                e.cohesion = 1.0 - (1.0 - e.cohesion) * (-gain).exp();
                true
            }
            None => false,
        }
    }

    /// Close the jaw and lift: the engaged clump leaves the bed as a pellet,
    /// drawing mass from cells around the grab point, nearest first. With no
    /// engagement or no mass the pellet is empty and the bed is untouched.
    pub fn separate(&mut self, location: Vec2, jaw_volume_m3: f64) -> Result<Pellet> {
        if jaw_volume_m3 <= 0.0 || !jaw_volume_m3.is_finite() {
            return Err(SimError::domain(format!("jaw volume {jaw_volume_m3}")));
        }
        let Some(idx) = self.cell_index(location) else {
            return Ok(Pellet::empty());
        };
        let Some(eng) = self.engagements.remove(&idx) else {
            return Ok(Pellet::empty());
        };
        let phi = self.cells[idx].volume_fraction;
        if phi <= 0.0 {
            return Ok(Pellet::empty());
        }
        let target_mass =
            eng.fill_fraction * jaw_volume_m3 * phi * self.cfg.particle_density;
        let mut taken = 0.0;
        for i in self.cells_within(location, self.cfg.jaw_reach_m) {
            if taken >= target_mass {
                break;
            }
            let take = (target_mass - taken).min(self.cells[i].mass_kg);
            self.cells[i].mass_kg -= take;
            if self.cells[i].mass_kg <= 1e-15 {
                self.cells[i].mass_kg = 0.0;
                self.cells[i].volume_fraction = 0.0;
            }
            taken += take;
        }
        if taken <= 0.0 {
            return Ok(Pellet::empty());
        }
        Pellet::new(
            taken,
            taken / (phi * self.cfg.particle_density),
            eng.cohesion,
            eng.bond_n,
        )
    }

    /// Return mass to the bed (dropped pellets, transit shedding). Lands in
    /// the cell under `pos`, clamped to the arena, and blends packing at the
    /// loose scattered fraction.
    pub fn add_mass(&mut self, pos: Vec2, mass_kg: f64) {
        if mass_kg <= 0.0 {
            return;
        }
        let idx = self
            .cell_index(self.bounds.clamp(pos))
            .expect("clamped position is in bounds");
        let cell = &mut self.cells[idx];
        let new_phi = self.cfg.scattered_phi_mean;
        let total = cell.mass_kg + mass_kg;
        cell.volume_fraction =
            (cell.mass_kg * cell.volume_fraction + mass_kg * new_phi) / total;
        cell.mass_kg = total;
        if cell.alignment == 0.0 {
            cell.alignment = self.cfg.scattered_alignment;
        }
    }

    /// Mass-weighted orientation coherence over `region`.
    pub fn alignment(&self, region: &Rect) -> f64 {
        let idxs = self.cells_in(region);
        let m: f64 = idxs.iter().map(|&i| self.cells[i].mass_kg).sum();
        if m <= 0.0 {
            return 0.0;
        }
        idxs.iter()
            .map(|&i| self.cells[i].mass_kg * self.cells[i].alignment)
            .sum::<f64>()
            / m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedFanout;

    fn arena() -> Rect {
        Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.8, 1.2))
    }

    fn zone() -> Rect {
        Rect::new(Vec2::new(0.0, 0.0), Vec2::new(0.3, 1.2))
    }

    fn field(mode: PrepMode, seed: u64) -> MediaField {
        let mut rng = SeedFanout::new(seed).stream("media/prep");
        MediaField::prepare(
            &arena(),
            &zone(),
            1.0,
            MediaConfig::default(),
            ConstitutiveParams::default_calibrated(),
            mode,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn preparation_conserves_mass_exactly() {
        for mode in [PrepMode::Scattered, PrepMode::Pushed] {
            let f = field(mode, 5);
            assert_eq!(f.total_mass(), 1.0);
            assert_eq!(f.region_mass(&zone()), 1.0);
        }
    }

    #[test]
    fn preparation_modes_differ_as_measured() {
        let s = field(PrepMode::Scattered, 1);
        let p = field(PrepMode::Pushed, 1);
        let phi_s = s.volume_fraction(&zone());
        let phi_p = p.volume_fraction(&zone());
        assert!((phi_s - 0.117).abs() < 0.003, "scattered phi {phi_s}");
        assert!((phi_p - 0.072).abs() < 0.006, "pushed phi {phi_p}");
        assert!(phi_s > phi_p);
        assert_eq!(s.mean_compression(&zone()), 0.0);
        assert!(p.mean_compression(&zone()) > 0.05);
        assert!(s.alignment(&zone()) > p.alignment(&zone()));
    }

    #[test]
    fn outside_region_is_empty() {
        let f = field(PrepMode::Scattered, 2);
        let rest = Rect::new(Vec2::new(0.35, 0.0), Vec2::new(1.8, 1.2));
        assert_eq!(f.region_mass(&rest), 0.0);
        assert_eq!(f.volume_fraction(&rest), 0.0);
    }

    #[test]
    fn bad_geometry_rejected() {
        let mut rng = SeedFanout::new(0).stream("x");
        let out = Rect::new(Vec2::new(-0.1, 0.0), Vec2::new(0.3, 1.2));
        assert!(MediaField::prepare_scattered(
            &arena(),
            &out,
            1.0,
            MediaConfig::default(),
            ConstitutiveParams::default_calibrated(),
            &mut rng
        )
        .is_err());
        let degenerate = Rect::new(Vec2::new(0.2, 0.2), Vec2::new(0.2, 0.2));
        assert!(MediaField::prepare_scattered(
            &arena(),
            &degenerate,
            1.0,
            MediaConfig::default(),
            ConstitutiveParams::default_calibrated(),
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn tear_works_bond_down_and_separate_conserves() {
        let mut f = field(PrepMode::Scattered, 3);
        let mut rng = SeedFanout::new(3).stream("media/tear");
        let spot = Vec2::new(0.175, 0.625);
        let before = f.total_mass();
        let mut last_bond = f64::INFINITY;
        let mut steps = 0;
        loop {
            let mode = if steps % 2 == 0 {
                TearMode::Vertical
            } else {
                TearMode::Horizontal
            };
            let out = f.tear_step(spot, mode, 30.0, &mut rng).unwrap();
            assert!(out.engaged);
            assert!(out.bond_remaining_n <= last_bond);
            last_bond = out.bond_remaining_n;
            steps += 1;
            if out.bond_remaining_n == 0.0 {
                break;
            }
            assert!(steps < 500, "bond never severed");
        }
        assert_eq!(f.total_mass(), before, "tearing moves no mass");
        let pellet = f.separate(spot, 1.2e-5).unwrap();
        assert!(pellet.mass_kg > 0.0);
        assert_eq!(pellet.residual_bond_n, 0.0);
        let phi = pellet.packing_fraction(7850.0);
        assert!(phi > 0.05 && phi < 0.2, "pellet phi {phi}");
        assert!(
            (f.total_mass() + pellet.mass_kg - before).abs() < 1e-12,
            "separation leaked mass"
        );
    }

    #[test]
    fn separate_without_history_is_empty() {
        let mut f = field(PrepMode::Scattered, 4);
        let before = f.total_mass();
        let p = f.separate(Vec2::new(0.2, 0.6), 1.2e-5).unwrap();
        assert!(p.is_empty());
        assert_eq!(f.total_mass(), before);
        let p = f.separate(Vec2::new(5.0, 5.0), 1.2e-5).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn tear_outside_bed_reports_nothing() {
        let mut f = field(PrepMode::Scattered, 4);
        let mut rng = SeedFanout::new(4).stream("t");
        let out = f
            .tear_step(Vec2::new(1.0, 0.6), TearMode::Vertical, 30.0, &mut rng)
            .unwrap();
        assert!(!out.engaged);
        let out = f
            .tear_step(Vec2::new(9.0, 9.0), TearMode::Vertical, 30.0, &mut rng)
            .unwrap();
        assert!(!out.engaged);
    }

    #[test]
    fn zero_grip_never_severs() {
        let mut f = field(PrepMode::Scattered, 6);
        let mut rng = SeedFanout::new(6).stream("t");
        for _ in 0..20 {
            let out = f
                .tear_step(Vec2::new(0.15, 0.6), TearMode::Vertical, 0.0, &mut rng)
                .unwrap();
            assert!(out.engaged);
            assert_eq!(out.bond_removed_n, 0.0);
            assert!(out.slipped);
        }
        assert!(f.tear_step(Vec2::new(0.15, 0.6), TearMode::Vertical, -1.0, &mut rng).is_err());
    }

    #[test]
    fn compression_history_never_decreases() {
        let mut f = field(PrepMode::Pushed, 7);
        let mut rng = SeedFanout::new(7).stream("t");
        let before: Vec<f64> = f.cells().iter().map(|c| c.compression_history).collect();
        for k in 0..40 {
            let spot = Vec2::new(0.05 + 0.01 * (k % 20) as f64, 0.6);
            let _ = f.tear_step(spot, TearMode::Vertical, 30.0, &mut rng).unwrap();
        }
        for (a, b) in before.iter().zip(f.cells()) {
            assert!(b.compression_history >= *a);
            assert!(b.compression_history <= COMPRESSION_LIMIT);
        }
    }

    #[test]
    fn pushed_bonds_take_more_tearing_than_scattered() {
        // Monte Carlo over preparations: the same grip severs a pushed grab
        // in no fewer steps, on average, than a scattered one.
        let fan = SeedFanout::new(2025);
        let mut means = Vec::new();
        for mode in [PrepMode::Scattered, PrepMode::Pushed] {
            let mut total = 0u64;
            let n = 1000;
            for i in 0..n {
                let mut prep = fan.stream_indexed("prep", i);
                let mut f = MediaField::prepare(
                    &arena(),
                    &zone(),
                    1.0,
                    MediaConfig::default(),
                    ConstitutiveParams::default_calibrated(),
                    mode,
                    &mut prep,
                )
                .unwrap();
                let mut rng = fan.stream_indexed("tear", i);
                let spot = Vec2::new(0.125, 0.575);
                let mut steps = 0u64;
                loop {
                    steps += 1;
                    let m = if steps % 2 == 1 {
                        TearMode::Vertical
                    } else {
                        TearMode::Horizontal
                    };
                    if f.tear_step(spot, m, 30.0, &mut rng).unwrap().bond_remaining_n == 0.0 {
                        break;
                    }
                    if steps > 400 {
                        break;
                    }
                }
                total += steps;
            }
            means.push(total as f64 / n as f64);
        }
        assert!(
            means[0] <= means[1],
            "scattered {} vs pushed {} tear steps",
            means[0],
            means[1]
        );
    }

    #[test]
    fn add_mass_blends_packing() {
        let mut f = field(PrepMode::Pushed, 8);
        let spot = Vec2::new(0.9, 0.6);
        f.add_mass(spot, 0.01);
        let idx = f.cell_index(spot).unwrap();
        assert_eq!(f.cells()[idx].mass_kg, 0.01);
        assert!((f.cells()[idx].volume_fraction - 0.117).abs() < 1e-12);
        // Out-of-bounds drops clamp to the nearest wall cell.
        let before = f.total_mass();
        f.add_mass(Vec2::new(2.5, 0.6), 0.005);
        assert!((f.total_mass() - before - 0.005).abs() < 1e-15);
    }

    #[test]
    fn squeeze_raises_cohesion_toward_one() {
        let mut f = field(PrepMode::Scattered, 9);
        let mut rng = SeedFanout::new(9).stream("t");
        let spot = Vec2::new(0.22, 0.41);
        assert!(!f.squeeze(spot), "no engagement yet");
        f.tear_step(spot, TearMode::Vertical, 30.0, &mut rng).unwrap();
        let c0 = f.engagement_at(spot).unwrap().cohesion;
        for _ in 0..3 {
            assert!(f.squeeze(spot));
        }
        let c3 = f.engagement_at(spot).unwrap().cohesion;
        assert!(c3 > c0);
        assert!((0.9..1.0).contains(&c3));
    }
}
