//! Virtual uniaxial tension rig.
//!
//! Mirrors the bench procedure used to characterize the medium: pack a box,
//! optionally pre-compress the packing by a known distance, then pull a
//! grabbed clump out while logging force against strain. Compression history
//! is the compression distance over the free length of the packed sample,
//! and strain is pull distance over that same length, so one protocol run
//! produces force-strain traces at a known set of compression histories.

mod fit;

pub use fit::{fit_constitutive, fit_objective, CalibrationTargets, TargetRow};

use crate::error::{Result, SimError};
use crate::media::{mean_tensile_force, ConstitutiveParams, YieldWalk};
use crate::real::Real;
use crate::rng::SeedFanout;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigProtocol {
    /// Packed box interior, meters.
    pub box_length_m: f64,
    pub box_width_m: f64,
    pub box_height_m: f64,
    /// Sample mass loaded into the box, kilograms.
    pub sample_mass_kg: f64,
    /// Free sample length after packing, before any compression, meters.
    pub free_length_m: f64,
    /// Plate travel for each compression setting, meters.
    pub compression_distances_m: Vec<f64>,
    /// Pull travel of the grab, meters.
    pub pull_distance_m: f64,
    pub trials_per_setting: usize,
    /// Strain samples per trace, evenly spaced from zero to full pull.
    pub strain_samples: usize,
}

impl Default for RigProtocol {
    fn default() -> Self {
        RigProtocol {
            box_length_m: 0.26,
            box_width_m: 0.101,
            box_height_m: 0.117,
            sample_mass_kg: 1.0,
            free_length_m: 0.189,
            compression_distances_m: vec![0.0, 0.0125, 0.025, 0.05],
            pull_distance_m: 0.064,
            trials_per_setting: 3,
            strain_samples: 200,
        }
    }
}

impl RigProtocol {
    pub const MAX_COMPRESSION_DISTANCE_M: f64 = 0.06;

    /// Compression history for a plate travel distance.
    pub fn compression_history(&self, distance_m: f64) -> Result<f64> {
        if !(0.0..=Self::MAX_COMPRESSION_DISTANCE_M).contains(&distance_m) {
            return Err(SimError::domain(format!(
                "compression distance {distance_m} outside [0, {}]",
                Self::MAX_COMPRESSION_DISTANCE_M
            )));
        }
        Ok(distance_m / self.free_length_m)
    }

    pub fn max_strain(&self) -> f64 {
        self.pull_distance_m / self.free_length_m
    }
}

/// One logged pull: strain grid, force trace, yield event strains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceStrainCurve<T> {
    pub compression_history: T,
    pub strains: Vec<T>,
    pub forces_n: Vec<T>,
    pub yield_strains: Vec<T>,
}

impl<T: Real> ForceStrainCurve<T> {
    pub fn validate(&self) -> Result<()> {
        if self.strains.len() != self.forces_n.len() || self.strains.is_empty() {
            return Err(SimError::domain("curve shape mismatch".to_string()));
        }
        if self.strains[0] != T::zero() || self.forces_n[0] != T::zero() {
            return Err(SimError::domain("curve must start at origin".to_string()));
        }
        for w in self.strains.windows(2) {
            if w[1] <= w[0] {
                return Err(SimError::domain("strain grid not increasing".to_string()));
            }
        }
        if self.forces_n.iter().any(|f| *f < T::zero() || !f.is_finite()) {
            return Err(SimError::domain("negative or non-finite force".to_string()));
        }
        Ok(())
    }

    /// Force at the grid point nearest `strain`.
    pub fn force_at(&self, strain: T) -> T {
        let mut best = 0usize;
        let mut gap = T::infinity();
        for (i, &s) in self.strains.iter().enumerate() {
            let d = (s - strain).abs();
            if d < gap {
                gap = d;
                best = i;
            }
        }
        self.forces_n[best]
    }

    /// Index of the grid point nearest `strain` and whether the request
    /// missed every grid point and was snapped.
    pub fn nearest_index(&self, strain: T) -> (usize, bool) {
        let mut best = 0usize;
        let mut gap = T::infinity();
        for (i, &s) in self.strains.iter().enumerate() {
            let d = (s - strain).abs();
            if d < gap {
                gap = d;
                best = i;
            }
        }
        (best, gap > T::of(1e-9))
    }

    /// CSV rows `strain,force_N,yield_event`; each comment line in `meta`
    /// is prefixed with `# `.
    pub fn write_csv<W: Write>(&self, mut w: W, meta: &[String]) -> Result<()> {
        for line in meta {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "strain,force_N,yield_event")?;
        let mut prev = T::zero();
        for (i, (&s, &f)) in self.strains.iter().zip(&self.forces_n).enumerate() {
            let hit = self
                .yield_strains
                .iter()
                .any(|&y| (i == 0 && y == prev) || (y > prev && y <= s));
            writeln!(w, "{s},{f},{}", u8::from(hit))?;
            prev = s;
        }
        Ok(())
    }
}

/// Run one pull at the given compression distance. The whole trace shares a
/// single stick-slip realization, so successive samples are consistent.
pub fn run_tensile_trial<T: Real>(
    protocol: &RigProtocol,
    params: &ConstitutiveParams<T>,
    compression_distance_m: f64,
    seed: u64,
) -> Result<ForceStrainCurve<T>> {
    params.validate()?;
    let c = T::of(protocol.compression_history(compression_distance_m)?);
    if protocol.strain_samples < 2 {
        return Err(SimError::domain("need at least two strain samples"));
    }
    let max_strain = T::of(protocol.max_strain());
    let mut rng = SeedFanout::new(seed).stream("rig/pull");
    let walk = YieldWalk::draw(max_strain, params, &mut rng)?;
    let n = protocol.strain_samples;
    let mut strains = Vec::with_capacity(n);
    let mut forces = Vec::with_capacity(n);
    for i in 0..n {
        let s = max_strain * T::of(i as f64) / T::of((n - 1) as f64);
        let f = mean_tensile_force(s, c, params)? * walk.modulation_at(s, params);
        strains.push(s);
        forces.push(f.max(T::zero()));
    }
    let curve = ForceStrainCurve {
        compression_history: c,
        strains,
        forces_n: forces,
        yield_strains: walk.events().to_vec(),
    };
    curve.validate()?;
    Ok(curve)
}

/// All trials at one compression setting plus per-grid-point aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SettingCurves<T> {
    pub compression_distance_m: f64,
    pub compression_history: T,
    pub trials: Vec<ForceStrainCurve<T>>,
    pub mean_n: Vec<T>,
    pub std_n: Vec<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolDataset<T> {
    pub settings: Vec<SettingCurves<T>>,
    pub strains: Vec<T>,
}

/// Full protocol: every compression setting, `trials_per_setting` pulls each.
pub fn run_protocol<T: Real>(
    protocol: &RigProtocol,
    params: &ConstitutiveParams<T>,
    master_seed: u64,
) -> Result<ProtocolDataset<T>> {
    let fan = SeedFanout::new(master_seed);
    let mut settings = Vec::new();
    let mut strains = Vec::new();
    for (si, &dist) in protocol.compression_distances_m.iter().enumerate() {
        let mut trials = Vec::new();
        for ti in 0..protocol.trials_per_setting {
            let seed = fan
                .child("rig/setting", si as u64)
                .child("trial", ti as u64)
                .master();
            trials.push(run_tensile_trial(protocol, params, dist, seed)?);
        }
        if si == 0 {
            strains = trials[0].strains.clone();
        }
        let npts = trials[0].strains.len();
        let mut mean = Vec::with_capacity(npts);
        let mut std = Vec::with_capacity(npts);
        let nt = T::of(trials.len() as f64);
        for i in 0..npts {
            let m = trials.iter().map(|t| t.forces_n[i]).sum::<T>() / nt;
            let ss = trials
                .iter()
                .map(|t| (t.forces_n[i] - m) * (t.forces_n[i] - m))
                .sum::<T>();
            mean.push(m);
            std.push(if trials.len() > 1 {
                (ss / (nt - T::one())).sqrt()
            } else {
                T::zero()
            });
        }
        settings.push(SettingCurves {
            compression_distance_m: dist,
            compression_history: T::of(protocol.compression_history(dist)?),
            trials,
            mean_n: mean,
            std_n: std,
        });
    }
    Ok(ProtocolDataset { settings, strains })
}

impl<T: Real> ProtocolDataset<T> {
    pub fn total_rows(&self) -> usize {
        self.settings.iter().map(|s| s.mean_n.len()).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow<T> {
    pub requested_strain: T,
    pub grid_strain: T,
    pub compression_distance_m: f64,
    pub compression_history: T,
    pub mean_n: T,
    pub std_n: T,
    /// Set when the requested strain fell between grid points and the
    /// nearest sample was used instead.
    pub off_grid: bool,
}

/// Mean and trial-to-trial std of force at each requested strain for every
/// compression setting.
pub fn summarize<T: Real>(data: &ProtocolDataset<T>, strains: &[T]) -> Vec<SummaryRow<T>> {
    let mut rows = Vec::new();
    for &req in strains {
        for s in &data.settings {
            let (idx, off) = s.trials[0].nearest_index(req);
            rows.push(SummaryRow {
                requested_strain: req,
                grid_strain: s.trials[0].strains[idx],
                compression_distance_m: s.compression_distance_m,
                compression_history: s.compression_history,
                mean_n: s.mean_n[idx],
                std_n: s.std_n[idx],
                off_grid: off,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> ConstitutiveParams<f64> {
        ConstitutiveParams::default_calibrated()
    }

    #[test]
    fn default_protocol_shape() {
        let p = RigProtocol::default();
        assert_eq!(p.compression_distances_m.len(), 4);
        assert_relative_eq!(p.max_strain(), 0.064 / 0.189, epsilon = 1e-12);
        assert_relative_eq!(
            p.compression_history(0.05).unwrap(),
            0.05 / 0.189,
            epsilon = 1e-12
        );
        assert!(p.compression_history(-0.01).is_err());
        assert!(p.compression_history(0.061).is_err());
    }

    #[test]
    fn trial_trace_invariants() {
        let p = RigProtocol::default();
        for seed in 0..5 {
            let c = run_tensile_trial(&p, &params(), 0.025, seed).unwrap();
            c.validate().unwrap();
            assert_eq!(c.strains.len(), 200);
            assert_eq!(c.forces_n[0], 0.0);
            assert_relative_eq!(*c.strains.last().unwrap(), p.max_strain());
        }
    }

    #[test]
    fn trial_is_deterministic() {
        let p = RigProtocol::default();
        let a = run_tensile_trial(&p, &params(), 0.05, 7).unwrap();
        let b = run_tensile_trial(&p, &params(), 0.05, 7).unwrap();
        assert_eq!(a, b);
        let c = run_tensile_trial(&p, &params(), 0.05, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dataset_row_count_and_zero_noise_std() {
        let proto = RigProtocol {
            strain_samples: 50,
            ..RigProtocol::default()
        };
        let data = run_protocol(&proto, &params(), 11).unwrap();
        assert_eq!(data.total_rows(), 4 * 50);

        let quiet = ConstitutiveParams {
            yield_rate: 0.0,
            ..params()
        };
        let data = run_protocol(&proto, &quiet, 11).unwrap();
        for s in &data.settings {
            assert!(s.std_n.iter().all(|&v| v < 1e-12), "std {:?}", s.std_n);
        }
    }

    #[test]
    fn mean_ordering_follows_compression() {
        let data = run_protocol(&RigProtocol::default(), &params(), 3).unwrap();
        let at = |s: &SettingCurves<f64>| s.trials[0].nearest_index(0.30).0;
        let means: Vec<f64> = data.settings.iter().map(|s| s.mean_n[at(s)]).collect();
        for w in means.windows(2) {
            assert!(w[1] > w[0], "means not ordered: {means:?}");
        }
    }

    #[test]
    fn summary_shape_and_off_grid_flag() {
        let data = run_protocol(&RigProtocol::default(), &params(), 3).unwrap();
        let rows = summarize(&data, &[0.10, 0.20, 0.30]);
        assert_eq!(rows.len(), 12);
        // 0.339/199 steps never land exactly on these strains.
        assert!(rows.iter().all(|r| r.off_grid));
        for r in &rows {
            assert!((r.requested_strain - r.grid_strain).abs() < 0.339 / 199.0);
        }
        let on = summarize(&data, &[data.strains[10]]);
        assert!(!on[0].off_grid);
    }

    #[test]
    fn csv_round_trip_format() {
        let p = RigProtocol {
            strain_samples: 8,
            ..RigProtocol::default()
        };
        let c = run_tensile_trial(&p, &params(), 0.0, 1).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf, &["config_hash=deadbeef".to_string()])
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# config_hash=deadbeef");
        assert_eq!(lines.next().unwrap(), "strain,force_N,yield_event");
        assert_eq!(lines.count(), 8);
        let events_flagged: usize = text
            .lines()
            .skip(2)
            .filter(|l| l.ends_with(",1"))
            .count();
        // Every yield strain inside the grid shows up in exactly one bin.
        let inside = c
            .yield_strains
            .iter()
            .filter(|&&y| y > 0.0 && y <= *c.strains.last().unwrap())
            .count();
        let mut bins = std::collections::BTreeSet::new();
        for &y in &c.yield_strains {
            for w in 0..c.strains.len() - 1 {
                if y > c.strains[w] && y <= c.strains[w + 1] {
                    bins.insert(w + 1);
                }
            }
        }
        assert_eq!(events_flagged, bins.len());
        assert!(bins.len() <= inside);
    }
}
