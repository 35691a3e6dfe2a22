//! Trial runner and experiment statistics.
//!
//! A trial drops the robot into a freshly prepared bed and lets it forage
//! for two simulated hours; an experiment repeats that over seeded trials
//! and reduces the event logs to the numbers the bed-preparation comparison
//! turns on: excavation success rate, cycle time, and transported mass.

use crate::agent::{AgentConfig, AgentRngs, Event, EventKind, FsmState, Robot};
use crate::error::{Result, SimError};
use crate::geom::Vec2;
use crate::media::{ConstitutiveParams, MediaConfig, MediaField, Pellet, PrepMode};
use crate::rng::SeedFanout;
use crate::sensors::SensorConfig;
use crate::stats::{mean_std, welch_t_test};
use crate::world::{Arena, DepositMap};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub duration_s: f64,
    pub dt_s: f64,
    pub n_trials: u32,
    /// Staple mass spread over the excavation zone at preparation.
    pub media_mass_kg: f64,
    /// A starter pile by the deposit wall; trials begin with material
    /// already placed, as the arena is seeded before each run.
    pub seed_pile_kg: f64,
    pub seed_pile_pos: Vec2,
    pub merge_radius_m: f64,
    pub repose_angle_rad: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            duration_s: 7200.0,
            dt_s: 0.1,
            n_trials: 5,
            media_mass_kg: 2.0,
            seed_pile_kg: 0.1,
            seed_pile_pos: Vec2::new(1.7, 0.6),
            merge_radius_m: 0.1,
            repose_angle_rad: 35f64.to_radians(),
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(SimError::config("harness.duration_s", "must be >= 0"));
        }
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(SimError::config("harness.dt_s", "must be positive"));
        }
        if self.n_trials == 0 {
            return Err(SimError::config("harness.n_trials", "must be >= 1"));
        }
        if self.media_mass_kg <= 0.0 {
            return Err(SimError::config("harness.media_mass_kg", "must be positive"));
        }
        if self.seed_pile_kg < 0.0 {
            return Err(SimError::config("harness.seed_pile_kg", "must be >= 0"));
        }
        if self.merge_radius_m <= 0.0 {
            return Err(SimError::config("harness.merge_radius_m", "must be positive"));
        }
        if !(self.repose_angle_rad > 0.0
            && self.repose_angle_rad < std::f64::consts::FRAC_PI_2)
        {
            return Err(SimError::config(
                "harness.repose_angle_rad",
                "must be in (0, pi/2)",
            ));
        }
        Ok(())
    }
}

/// Everything a trial needs, bundled so one value pins a whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub arena: Arena,
    pub media: MediaConfig,
    pub constitutive: ConstitutiveParams<f64>,
    pub sensors: SensorConfig,
    pub agent: AgentConfig,
    pub harness: HarnessConfig,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            arena: Arena::default(),
            media: MediaConfig::default(),
            constitutive: ConstitutiveParams::default_calibrated(),
            sensors: SensorConfig::default(),
            agent: AgentConfig::default(),
            harness: HarnessConfig::default(),
        }
    }
}

/// One excavation cycle: everything between consecutive arrivals at the
/// dig face, resolved by whether the pellet separated there reached the
/// deposit end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub start_s: f64,
    pub end_s: f64,
    pub success: bool,
    pub pellet_mass_kg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub prep_mode: PrepMode,
    pub seed: u64,
    pub events: Vec<Event>,
    pub cycles: Vec<CycleRecord>,
    pub total_transported_kg: f64,
}

impl TrialLog {
    /// Times at which pellets landed on the deposit side, for
    /// pellets-over-time series.
    pub fn deposit_times(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.event == EventKind::PelletDeposited)
            .map(|e| e.t_s)
            .collect()
    }

    pub fn success_rate(&self) -> Option<f64> {
        if self.cycles.is_empty() {
            return None;
        }
        let ok = self.cycles.iter().filter(|c| c.success).count();
        Some(ok as f64 / self.cycles.len() as f64)
    }

    pub fn mean_cycle_min(&self) -> Option<f64> {
        if self.cycles.is_empty() {
            return None;
        }
        let total: f64 = self.cycles.iter().map(|c| c.end_s - c.start_s).sum();
        Some(total / self.cycles.len() as f64 / 60.0)
    }
}

/// Largest inter-deposit gap over the median gap; the linearity measure for
/// pellets-over-time. `None` below three deposits, where gaps have no
/// meaningful median.
pub fn max_gap_over_median(times: &[f64]) -> Option<f64> {
    if times.len() < 3 {
        return None;
    }
    let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = gaps[gaps.len() / 2];
    let max = *gaps.last().unwrap();
    if median <= 0.0 {
        return Some(f64::INFINITY);
    }
    Some(max / median)
}

/// A finished trial together with the world it left behind, for callers
/// that audit the bed and pile map against the event log.
#[derive(Debug, Clone)]
pub struct TrialWorld {
    pub log: TrialLog,
    pub deposits: DepositMap,
    /// Mass still in the bed when time ran out.
    pub media_mass_kg: f64,
    /// Mass in the jaws when time ran out.
    pub carried_kg: f64,
    /// Bed plus starter pile right after preparation.
    pub initial_mass_kg: f64,
}

/// Run one seeded trial: prepare the bed, place the starter pile, and step
/// the robot until time runs out. The log is a pure function of
/// (experiment, mode, seed).
pub fn run_trial(exp: &Experiment, mode: PrepMode, seed: u64) -> Result<TrialLog> {
    run_trial_world(exp, mode, seed).map(|w| w.log)
}

/// [`run_trial`], keeping the end-of-trial world.
pub fn run_trial_world(exp: &Experiment, mode: PrepMode, seed: u64) -> Result<TrialWorld> {
    exp.harness.validate()?;
    let fan = SeedFanout::new(seed);
    let mut prep_rng = fan.stream("media/prep");
    let mut media = MediaField::prepare(
        &exp.arena.bounds,
        &exp.arena.excavation_zone,
        exp.harness.media_mass_kg,
        exp.media.clone(),
        exp.constitutive,
        mode,
        &mut prep_rng,
    )?;
    let mut deposits = DepositMap::new(exp.harness.merge_radius_m, exp.harness.repose_angle_rad);
    if exp.harness.seed_pile_kg > 0.0 {
        let volume = exp.harness.seed_pile_kg
            / (exp.media.scattered_phi_mean * exp.media.particle_density);
        let starter = Pellet::new(exp.harness.seed_pile_kg, volume, 1.0, 0.0)?;
        deposits.add_deposit(exp.harness.seed_pile_pos, &starter);
    }
    let mut rngs = AgentRngs::from_fanout(&fan);
    let mut robot = Robot::new(exp.agent.clone(), exp.sensors.clone(), &exp.arena)?;

    let initial_mass = media.total_mass() + deposits.total_mass();
    let dt = exp.harness.dt_s;
    let steps = (exp.harness.duration_s / dt).round() as u64;
    let mut events = Vec::new();
    for k in 0..steps {
        let t = k as f64 * dt;
        events.extend(robot.step(t, dt, &exp.arena, &mut media, &mut deposits, &mut rngs)?);
    }

    let carried = robot.carried.map_or(0.0, |p| p.mass_kg);
    let ledger = media.total_mass() + deposits.total_mass() + carried;
    if (ledger - initial_mass).abs() > 1e-6 {
        return Err(SimError::domain(format!(
            "mass ledger drifted: {ledger} vs {initial_mass}"
        )));
    }

    let cycles = assemble_cycles(&events, exp.harness.duration_s);
    let total_transported_kg = events
        .iter()
        .filter(|e| e.event == EventKind::PelletDeposited)
        .filter_map(|e| e.pellet_mass_kg)
        .fold(0.0, |acc, m| acc + m);
    Ok(TrialWorld {
        log: TrialLog {
            prep_mode: mode,
            seed,
            events,
            cycles,
            total_transported_kg,
        },
        deposits,
        media_mass_kg: media.total_mass(),
        carried_kg: carried,
        initial_mass_kg: initial_mass,
    })
}

struct OpenCycle {
    start_s: f64,
    separated_kg: Option<f64>,
    retained: bool,
    deposited_kg: Option<f64>,
    dropped: bool,
}

/// Fold the event stream into cycles. A cycle opens when the robot reaches
/// the dig face and closes at the next arrival after a pellet separated;
/// fruitless attempts in between (nothing engaged, bite abandoned) extend
/// the cycle rather than splitting it. The tail of the log only counts if
/// its pellet already resolved — was dropped, or landed on a pile.
fn assemble_cycles(events: &[Event], duration_s: f64) -> Vec<CycleRecord> {
    let mut cycles = Vec::new();
    let mut open: Option<OpenCycle> = None;
    for e in events {
        match e.event {
            EventKind::Transition
                if e.state_to == FsmState::Excavate
                    && e.state_from == FsmState::ApproachExcavate =>
            {
                match open.as_mut() {
                    None => {
                        open = Some(OpenCycle {
                            start_s: e.t_s,
                            separated_kg: None,
                            retained: false,
                            deposited_kg: None,
                            dropped: false,
                        });
                    }
                    Some(o) if o.separated_kg.is_some() => {
                        cycles.push(CycleRecord {
                            start_s: o.start_s,
                            end_s: e.t_s,
                            success: o.retained,
                            pellet_mass_kg: o.deposited_kg.or(o.separated_kg).unwrap(),
                        });
                        open = Some(OpenCycle {
                            start_s: e.t_s,
                            separated_kg: None,
                            retained: false,
                            deposited_kg: None,
                            dropped: false,
                        });
                    }
                    Some(_) => {}
                }
            }
            EventKind::PelletSeparated => {
                if let Some(o) = open.as_mut() {
                    o.separated_kg = e.pellet_mass_kg;
                }
            }
            EventKind::PelletRetained => {
                if let Some(o) = open.as_mut() {
                    o.retained = true;
                }
            }
            EventKind::PelletDeposited => {
                if let Some(o) = open.as_mut() {
                    o.deposited_kg = e.pellet_mass_kg;
                }
            }
            EventKind::PelletDropped => {
                if let Some(o) = open.as_mut() {
                    o.dropped = true;
                }
            }
            _ => {}
        }
    }
    if let Some(o) = open {
        if o.separated_kg.is_some() && (o.deposited_kg.is_some() || o.dropped) {
            cycles.push(CycleRecord {
                start_s: o.start_s,
                end_s: duration_s,
                success: o.retained,
                pellet_mass_kg: o.deposited_kg.or(o.separated_kg).unwrap(),
            });
        }
    }
    cycles
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub prep_mode: PrepMode,
    pub n_trials: usize,
    pub success_rate_mean: f64,
    /// `None` for a single trial: the spread is undefined, not zero.
    pub success_rate_std: Option<f64>,
    pub cycle_time_mean_min: f64,
    pub cycle_time_std_min: Option<f64>,
    pub mass_mean_kg: f64,
    pub mass_std_kg: Option<f64>,
    pub failures: u32,
    pub per_trial_success_rate: Vec<f64>,
    pub per_trial_mean_cycle_min: Vec<f64>,
    pub per_trial_mass_kg: Vec<f64>,
    /// Every cycle duration in the condition, pooled across trials.
    pub cycle_times_min: Vec<f64>,
}

/// Reduce finished trials to condition statistics. Success and mass spreads
/// are over trials; cycle-time spread is over the pooled cycles, the way
/// per-cycle durations are quoted.
pub fn condition_stats(mode: PrepMode, trials: &[TrialLog]) -> Result<ConditionStats> {
    if trials.is_empty() {
        return Err(SimError::InsufficientData("no trials".into()));
    }
    let mut per_success = Vec::with_capacity(trials.len());
    let mut per_cycle_min = Vec::with_capacity(trials.len());
    let mut per_mass = Vec::with_capacity(trials.len());
    let mut pooled_min = Vec::new();
    let mut failures = 0u32;
    for t in trials {
        let rate = t.success_rate().ok_or_else(|| {
            SimError::InsufficientData(format!("trial {} produced no cycles", t.seed))
        })?;
        per_success.push(rate);
        per_cycle_min.push(t.mean_cycle_min().unwrap());
        per_mass.push(t.total_transported_kg);
        failures += t.cycles.iter().filter(|c| !c.success).count() as u32;
        pooled_min.extend(t.cycles.iter().map(|c| (c.end_s - c.start_s) / 60.0));
    }
    let (success_rate_mean, success_rate_std) = mean_std(&per_success).unwrap();
    let (mass_mean_kg, mass_std_kg) = mean_std(&per_mass).unwrap();
    let (cycle_time_mean_min, cycle_time_std_min) = mean_std(&pooled_min).unwrap();
    Ok(ConditionStats {
        prep_mode: mode,
        n_trials: trials.len(),
        success_rate_mean,
        success_rate_std,
        cycle_time_mean_min,
        cycle_time_std_min,
        mass_mean_kg,
        mass_std_kg,
        failures,
        per_trial_success_rate: per_success,
        per_trial_mean_cycle_min: per_cycle_min,
        per_trial_mass_kg: per_mass,
        cycle_times_min: pooled_min,
    })
}

/// Deterministic per-trial seeds, decorrelated between modes so the two
/// conditions never share preparation or robot randomness.
pub fn trial_seeds(master_seed: u64, mode: PrepMode, n_trials: u32) -> Vec<u64> {
    let fan = SeedFanout::new(master_seed);
    let label = match mode {
        PrepMode::Scattered => "trial/scattered",
        PrepMode::Pushed => "trial/pushed",
    };
    (0..n_trials)
        .map(|i| fan.child(label, u64::from(i)).master())
        .collect()
}

pub fn run_experiment(
    exp: &Experiment,
    mode: PrepMode,
    n_trials: u32,
    master_seed: u64,
) -> Result<ConditionStats> {
    let trials = run_trials(exp, mode, n_trials, master_seed)?;
    condition_stats(mode, &trials)
}

/// The trials behind [`run_experiment`], for callers that also want logs.
pub fn run_trials(
    exp: &Experiment,
    mode: PrepMode,
    n_trials: u32,
    master_seed: u64,
) -> Result<Vec<TrialLog>> {
    trial_seeds(master_seed, mode, n_trials)
        .into_iter()
        .map(|seed| run_trial(exp, mode, seed))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub p_value: f64,
    pub mass_ratio: f64,
    pub success_delta: f64,
}

/// Welch test on per-trial success rates, plus the mass ratio and success
/// gap between conditions. Needs at least two trials per side for the
/// variance estimates to exist.
pub fn compare_conditions(a: &ConditionStats, b: &ConditionStats) -> Result<ComparisonReport> {
    if a.n_trials < 2 || b.n_trials < 2 {
        return Err(SimError::InsufficientData(format!(
            "comparison needs >= 2 trials per condition, got {} and {}",
            a.n_trials, b.n_trials
        )));
    }
    if b.mass_mean_kg <= 0.0 {
        return Err(SimError::domain(format!(
            "mass ratio undefined against mean {} kg",
            b.mass_mean_kg
        )));
    }
    let p_value = welch_t_test(&a.per_trial_success_rate, &b.per_trial_success_rate)?;
    Ok(ComparisonReport {
        p_value,
        mass_ratio: a.mass_mean_kg / b.mass_mean_kg,
        success_delta: a.success_rate_mean - b.success_rate_mean,
    })
}
