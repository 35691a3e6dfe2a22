//! The robot: maneuver primitives, jaw model, and the finite state machine
//! driving excavate → transport → deposit → return cycles.
//!
//! Kinematics are planar and quasi-static: a primitive applies its
//! displacement when its duration elapses, so trial statistics come from
//! event timing rather than trajectory dynamics. The machine switches on
//! environmental signals only — color homing, the rangefinder, the pitch
//! IMU, the jaw encoder and the antenna — mirroring how the physical
//! controller is wired to its sensors.

use crate::error::{Result, SimError};
use crate::geom::{wrap_angle, Pose, Rect, Vec2};
use crate::media::{MediaField, Pellet, TearMode};
use crate::rng::{SeedFanout, Stream};
use crate::sensors::{
    add_pixel_noise, antenna_probe, detect_piles, group_bearing, imu_pitch_blocked, rangefinder,
    render_camera, rgb_read, MotionWindow, SensorConfig, TurnScan,
};
use crate::world::{Arena, DepositMap, LightChannel};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FsmState {
    TurnToExcavate,
    ApproachExcavate,
    Excavate,
    JawCheck,
    TurnToDeposit,
    Transport,
    AntennaSearch,
    Deposit,
    Reverse,
}

/// The legal transition set. Excavation bounces between tearing and the jaw
/// check until material stays in the jaws. There is no shortcut home from
/// the deposit-bound branch: the robot has no sensor for a pellet shaken
/// loose mid-turn, so it finishes the delivery loop empty-jawed and only
/// discovers the loss when nothing lands on the pile.
pub const FSM_EDGES: [(FsmState, FsmState); 15] = [
    (FsmState::TurnToExcavate, FsmState::ApproachExcavate),
    (FsmState::ApproachExcavate, FsmState::Excavate),
    (FsmState::ApproachExcavate, FsmState::Reverse),
    (FsmState::Excavate, FsmState::JawCheck),
    (FsmState::Excavate, FsmState::TurnToExcavate),
    (FsmState::JawCheck, FsmState::Excavate),
    (FsmState::JawCheck, FsmState::TurnToDeposit),
    (FsmState::JawCheck, FsmState::TurnToExcavate),
    (FsmState::TurnToDeposit, FsmState::Transport),
    (FsmState::Transport, FsmState::AntennaSearch),
    (FsmState::Transport, FsmState::Reverse),
    (FsmState::AntennaSearch, FsmState::Deposit),
    (FsmState::Deposit, FsmState::TurnToExcavate),
    (FsmState::Reverse, FsmState::TurnToExcavate),
    (FsmState::Reverse, FsmState::TurnToDeposit),
];

pub fn is_legal_transition(from: FsmState, to: FsmState) -> bool {
    FSM_EDGES.contains(&(from, to))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Transition,
    PelletSeparated,
    PelletRetained,
    PelletDropped,
    PelletDeposited,
    CrutchManeuver,
    ExcavationAborted,
    NoMaterial,
}

/// One log record. Non-transition events carry the state they occurred in
/// as both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t_s: f64,
    pub state_from: FsmState,
    pub state_to: FsmState,
    pub event: EventKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pellet_mass_kg: Option<f64>,
}

/// One motion primitive: how far it moves (meters, or radians for turns),
/// how long it takes, and whether it is gentle enough to run while
/// carrying a pellet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Maneuver {
    pub displacement: f64,
    pub duration_s: f64,
    pub carry_safe: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverSet {
    pub wheg_drive: Maneuver,
    pub crutch: Maneuver,
    pub sweep: Maneuver,
    pub turn_left: Maneuver,
    pub turn_right: Maneuver,
    pub reverse: Maneuver,
}

impl Default for ManeuverSet {
    fn default() -> Self {
        ManeuverSet {
            wheg_drive: Maneuver {
                displacement: 0.05,
                duration_s: 1.4,
                carry_safe: false,
            },
            crutch: Maneuver {
                displacement: 0.05,
                duration_s: 2.0,
                carry_safe: false,
            },
            sweep: Maneuver {
                displacement: 0.045,
                duration_s: 1.5,
                carry_safe: true,
            },
            turn_left: Maneuver {
                displacement: 5f64.to_radians(),
                duration_s: 1.4,
                carry_safe: true,
            },
            turn_right: Maneuver {
                displacement: -(5f64.to_radians()),
                duration_s: 1.4,
                carry_safe: true,
            },
            reverse: Maneuver {
                displacement: -0.12,
                duration_s: 2.5,
                carry_safe: true,
            },
        }
    }
}

impl ManeuverSet {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("maneuvers.wheg_drive", &self.wheg_drive),
            ("maneuvers.crutch", &self.crutch),
            ("maneuvers.sweep", &self.sweep),
            ("maneuvers.turn_left", &self.turn_left),
            ("maneuvers.turn_right", &self.turn_right),
            ("maneuvers.reverse", &self.reverse),
        ];
        for (name, m) in all {
            if m.duration_s <= 0.0 || !m.duration_s.is_finite() {
                return Err(SimError::config(
                    name,
                    format!("duration {} must be positive", m.duration_s),
                ));
            }
        }
        if !self.sweep.carry_safe {
            return Err(SimError::config("maneuvers.sweep", "must be carry-safe"));
        }
        if self.crutch.carry_safe {
            return Err(SimError::config(
                "maneuvers.crutch",
                "pitches the body, not carry-safe",
            ));
        }
        if self.turn_left.displacement <= 0.0 || self.turn_right.displacement >= 0.0 {
            return Err(SimError::config(
                "maneuvers.turn_left",
                "left turns positive, right negative",
            ));
        }
        Ok(())
    }
}

/// Jaw geometry: the encoder angle scales with how full the jaws are, and
/// the closed-on-material check passes only strictly above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JawModel {
    pub capacity_m3: f64,
    pub close_threshold_deg: f64,
    pub grip_force_n: f64,
}

impl Default for JawModel {
    fn default() -> Self {
        JawModel {
            capacity_m3: 1.2e-5,
            close_threshold_deg: 30.0,
            grip_force_n: 30.0,
        }
    }
}

impl JawModel {
    pub fn validate(&self) -> Result<()> {
        if self.capacity_m3 <= 0.0 {
            return Err(SimError::config("jaw.capacity_m3", "must be positive"));
        }
        if self.close_threshold_deg <= 0.0 || self.close_threshold_deg >= 90.0 {
            return Err(SimError::config(
                "jaw.close_threshold_deg",
                "must lie strictly between 0 and 90",
            ));
        }
        if self.grip_force_n <= 0.0 {
            return Err(SimError::config("jaw.grip_force_n", "must be positive"));
        }
        Ok(())
    }

    pub fn angle_for_volume(&self, volume_m3: f64) -> f64 {
        90.0 * (volume_m3 / self.capacity_m3).clamp(0.0, 1.0)
    }

    /// True when the jaws are held open past the close threshold.
    pub fn blocked_open(&self, jaw_angle_deg: f64) -> bool {
        jaw_angle_deg > self.close_threshold_deg
    }
}

/// Timing and bite size of the excavation loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcavateSchedule {
    pub vertical_s: f64,
    pub horizontal_s: f64,
    pub squeeze_s: f64,
    pub back_away_s: f64,
    pub close_s: f64,
    pub reapproach_s: f64,
    pub back_away_m: f64,
    /// Tear loops per attempt before giving up.
    pub max_loops: u32,
    /// Jaw volume gained per non-slipping tear, as a fraction of capacity.
    pub bite_fraction: f64,
    /// Uniform relative noise on each bite.
    pub bite_noise: f64,
}

impl Default for ExcavateSchedule {
    fn default() -> Self {
        ExcavateSchedule {
            vertical_s: 1.5,
            horizontal_s: 1.5,
            squeeze_s: 1.0,
            back_away_s: 1.2,
            close_s: 0.8,
            reapproach_s: 1.0,
            back_away_m: 0.06,
            max_loops: 20,
            bite_fraction: 0.12,
            bite_noise: 0.2,
        }
    }
}

impl ExcavateSchedule {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("excavate.vertical_s", self.vertical_s),
            ("excavate.horizontal_s", self.horizontal_s),
            ("excavate.squeeze_s", self.squeeze_s),
            ("excavate.back_away_s", self.back_away_s),
            ("excavate.close_s", self.close_s),
            ("excavate.reapproach_s", self.reapproach_s),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(SimError::config(name, "must be a positive duration"));
            }
        }
        if self.back_away_m <= 0.0 {
            return Err(SimError::config("excavate.back_away_m", "must be positive"));
        }
        if self.max_loops == 0 {
            return Err(SimError::config("excavate.max_loops", "must be at least 1"));
        }
        if self.bite_fraction <= 0.0 || self.bite_fraction > 1.0 {
            return Err(SimError::config(
                "excavate.bite_fraction",
                "must be in (0, 1]",
            ));
        }
        if !(0.0..1.0).contains(&self.bite_noise) {
            return Err(SimError::config("excavate.bite_noise", "must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub maneuvers: ManeuverSet,
    pub jaw: JawModel,
    pub excavate: ExcavateSchedule,
    pub start: Pose,
    /// Square body side; half of it insets the pose from the walls.
    pub footprint_m: f64,
    /// Radius searched for workable media around the jaw tips.
    pub approach_search_m: f64,
    /// Transport ends this far (by x) from the deposit wall.
    pub arrival_offset_m: f64,
    /// Rangefinder reading that triggers a reverse.
    pub obstacle_stop_m: f64,
    pub camera_check_s: f64,
    pub antenna_probes: u32,
    pub antenna_step_s: f64,
    /// Probed height that counts as an existing pile worth facing.
    pub deposit_pile_height_m: f64,
    /// How far ahead of the body center a pellet is placed.
    pub deposit_reach_m: f64,
    pub deposit_s: f64,
    /// A doomed pellet lets go within this many turn increments.
    pub drop_window: u32,
    /// Staple-shedding rate per transport step, scaled by how loose the
    /// pellet still is.
    pub transit_shed_rate: f64,
    /// Uniform relative jitter on primitive durations.
    pub duration_jitter: f64,
    /// Consecutive crutch maneuvers before reversing out.
    pub crutch_cap: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            maneuvers: ManeuverSet::default(),
            jaw: JawModel::default(),
            excavate: ExcavateSchedule::default(),
            start: Pose::new(0.9, 0.6, 0.0),
            footprint_m: 0.32,
            approach_search_m: 0.12,
            arrival_offset_m: 0.38,
            obstacle_stop_m: 0.08,
            camera_check_s: 2.0,
            antenna_probes: 8,
            antenna_step_s: 0.8,
            deposit_pile_height_m: 0.02,
            deposit_reach_m: 0.21,
            deposit_s: 3.0,
            drop_window: 6,
            transit_shed_rate: 0.5,
            duration_jitter: 0.1,
            crutch_cap: 5,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self, sensors: &SensorConfig) -> Result<()> {
        self.maneuvers.validate()?;
        self.jaw.validate()?;
        self.excavate.validate()?;
        if self.footprint_m <= 0.0 {
            return Err(SimError::config("footprint_m", "must be positive"));
        }
        if (self.maneuvers.turn_left.displacement - sensors.scan_step_rad).abs() > 1e-9 {
            return Err(SimError::config(
                "maneuvers.turn_left",
                "turn increment must equal the sensor scan step",
            ));
        }
        for (name, v) in [
            ("approach_search_m", self.approach_search_m),
            ("arrival_offset_m", self.arrival_offset_m),
            ("obstacle_stop_m", self.obstacle_stop_m),
            ("camera_check_s", self.camera_check_s),
            ("antenna_step_s", self.antenna_step_s),
            ("deposit_reach_m", self.deposit_reach_m),
            ("deposit_s", self.deposit_s),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(SimError::config(name, "must be positive"));
            }
        }
        if self.antenna_probes == 0 {
            return Err(SimError::config("antenna_probes", "must be at least 1"));
        }
        if self.drop_window == 0 {
            return Err(SimError::config("drop_window", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.duration_jitter) {
            return Err(SimError::config("duration_jitter", "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.transit_shed_rate) {
            return Err(SimError::config("transit_shed_rate", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Independent randomness for each signal path, so reseeding one module
/// leaves the others' draws untouched.
#[derive(Debug, Clone)]
pub struct AgentRngs {
    pub sensors: Stream,
    pub media: Stream,
    pub fsm: Stream,
}

impl AgentRngs {
    pub fn from_fanout(fan: &SeedFanout) -> Self {
        AgentRngs {
            sensors: fan.stream("sensors"),
            media: fan.stream("media/interact"),
            fsm: fan.stream("fsm"),
        }
    }
}

/// A live excavation attempt: where the jaws grabbed, what has been worked
/// into them, and how long the robot has been at it.
#[derive(Debug, Clone, Copy)]
struct Attempt {
    loc: Vec2,
    accrued_m3: f64,
    loops: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ExcPhase {
    Reapproach,
    Vertical,
    Horizontal,
    Squeeze,
    BackAway,
}

#[derive(Debug, Clone)]
enum Control {
    Idle,
    Scanning {
        scan: TurnScan,
        timer: f64,
        increments: u32,
        drop_at: Option<u32>,
    },
    Snapping {
        timer: f64,
        target: f64,
    },
    CameraCheck {
        timer: f64,
    },
    Driving {
        timer: f64,
    },
    Crutching {
        timer: f64,
    },
    Excavating {
        phase: ExcPhase,
        timer: f64,
    },
    Checking {
        timer: f64,
    },
    Probing {
        k: u32,
        timer: f64,
        best_height: f64,
        best_offset: f64,
    },
    Depositing {
        timer: f64,
        target: Vec2,
    },
    Reversing {
        timer: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Robot {
    pub pose: Pose,
    pub jaw_angle_deg: f64,
    pub carried: Option<Pellet>,
    pub fsm: FsmState,
    pub stuck: MotionWindow,
    cfg: AgentConfig,
    sensors: SensorConfig,
    control: Control,
    attempt: Option<Attempt>,
    crutch_streak: u32,
    reverse_resume: FsmState,
}

impl Robot {
    pub fn new(cfg: AgentConfig, sensors: SensorConfig, arena: &Arena) -> Result<Self> {
        cfg.validate(&sensors)?;
        arena.validate()?;
        let window = sensors.pitch_window;
        let mut robot = Robot {
            pose: cfg.start,
            jaw_angle_deg: 0.0,
            carried: None,
            fsm: FsmState::TurnToExcavate,
            stuck: MotionWindow::new(window),
            cfg,
            sensors,
            control: Control::Idle,
            attempt: None,
            crutch_streak: 0,
            reverse_resume: FsmState::TurnToExcavate,
        };
        robot.pose.pos = robot.inner_bounds(arena).clamp(robot.pose.pos);
        Ok(robot)
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    /// True when the jaw encoder reads past the close threshold, the signal
    /// that material stayed in the jaws.
    pub fn jaw_check(&self) -> bool {
        self.cfg.jaw.blocked_open(self.jaw_angle_deg)
    }

    fn inner_bounds(&self, arena: &Arena) -> Rect {
        let inset = self.cfg.footprint_m / 2.0;
        Rect::new(
            Vec2::new(arena.bounds.min.x + inset, arena.bounds.min.y + inset),
            Vec2::new(arena.bounds.max.x - inset, arena.bounds.max.y - inset),
        )
    }

    fn nose(&self) -> Vec2 {
        self.pose.ahead(self.cfg.footprint_m / 2.0)
    }

    /// Apply a forward displacement (negative moves backward), clamped to
    /// keep the body inside the walls. Returns (commanded, achieved) travel.
    fn advance(&mut self, arena: &Arena, dist_m: f64) -> (f64, f64) {
        let proposed = self.pose.ahead(dist_m);
        let clamped = self.inner_bounds(arena).clamp(proposed);
        let achieved = self.pose.pos.dist(clamped);
        self.pose.pos = clamped;
        (dist_m.abs(), achieved)
    }

    fn jittered(&self, base_s: f64, rng: &mut Stream) -> f64 {
        base_s * (1.0 + self.cfg.duration_jitter * (rng.random::<f64>() * 2.0 - 1.0))
    }

    fn go(&mut self, t_s: f64, to: FsmState, events: &mut Vec<Event>) {
        debug_assert!(
            is_legal_transition(self.fsm, to),
            "illegal transition {:?} -> {:?}",
            self.fsm,
            to
        );
        if to == FsmState::Reverse {
            // The controller resumes the leg it was on when it backed off,
            // deposit-bound or not; it has no sense of what the jaws hold.
            self.reverse_resume = if self.fsm == FsmState::Transport {
                FsmState::TurnToDeposit
            } else {
                FsmState::TurnToExcavate
            };
        }
        events.push(Event {
            t_s,
            state_from: self.fsm,
            state_to: to,
            event: EventKind::Transition,
            pellet_mass_kg: None,
        });
        self.fsm = to;
        self.control = Control::Idle;
        self.crutch_streak = 0;
        self.stuck.clear();
    }

    fn emit(&self, t_s: f64, kind: EventKind, mass: Option<f64>, events: &mut Vec<Event>) {
        events.push(Event {
            t_s,
            state_from: self.fsm,
            state_to: self.fsm,
            event: kind,
            pellet_mass_kg: mass,
        });
    }

    /// Advance the robot by one tick. Timers within the current state burn
    /// down across calls; behaviors act when their primitive completes.
    pub fn step(
        &mut self,
        t_s: f64,
        dt: f64,
        arena: &Arena,
        media: &mut MediaField,
        deposits: &mut DepositMap,
        rngs: &mut AgentRngs,
    ) -> Result<Vec<Event>> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(SimError::domain(format!("step dt {dt}")));
        }
        debug_assert!(
            self.carried.is_none()
                || matches!(
                    self.fsm,
                    FsmState::TurnToDeposit
                        | FsmState::Transport
                        | FsmState::AntennaSearch
                        | FsmState::Deposit
                        | FsmState::Reverse
                ),
            "carrying in {:?}",
            self.fsm
        );
        let mut events = Vec::new();
        match self.fsm {
            FsmState::TurnToExcavate => self.tick_scan(
                t_s,
                dt,
                arena,
                media,
                deposits,
                LightChannel::Blue,
                rngs,
                &mut events,
            )?,
            FsmState::TurnToDeposit => self.tick_scan(
                t_s,
                dt,
                arena,
                media,
                deposits,
                LightChannel::Red,
                rngs,
                &mut events,
            )?,
            FsmState::ApproachExcavate => {
                self.tick_approach(t_s, dt, arena, media, deposits, rngs, &mut events)?
            }
            FsmState::Excavate => self.tick_excavate(t_s, dt, arena, media, rngs, &mut events)?,
            FsmState::JawCheck => self.tick_jaw_check(t_s, dt, media, rngs, &mut events)?,
            FsmState::Transport => {
                self.tick_transport(t_s, dt, arena, media, deposits, rngs, &mut events)?
            }
            FsmState::AntennaSearch => self.tick_antenna(t_s, dt, deposits, rngs, &mut events)?,
            FsmState::Deposit => self.tick_deposit(t_s, dt, deposits, rngs, &mut events)?,
            FsmState::Reverse => self.tick_reverse(t_s, dt, arena, rngs, &mut events)?,
        }
        Ok(events)
    }

    #[allow(clippy::too_many_arguments)]
    fn tick_scan(
        &mut self,
        t_s: f64,
        dt: f64,
        arena: &Arena,
        media: &mut MediaField,
        deposits: &DepositMap,
        channel: LightChannel,
        rngs: &mut AgentRngs,
        events: &mut Vec<Event>,
    ) -> Result<()> {
        let depositing = channel == LightChannel::Red;
        match std::mem::replace(&mut self.control, Control::Idle) {
            Control::Idle => {
                let mut scan = TurnScan::new(&self.sensors);
                let first =
                    rgb_read(&self.pose, arena, &self.sensors, &mut rngs.sensors)?.channel(channel);
                scan.observe(self.pose.heading, first);
                let drop_at = match &self.carried {
                    Some(p) if depositing && p.residual_bond_n > self.cfg.jaw.grip_force_n => {
                        Some(rngs.fsm.random_range(1..=self.cfg.drop_window))
                    }
                    _ => None,
                };
                let timer = self.jittered(self.cfg.maneuvers.turn_left.duration_s, &mut rngs.fsm);
                self.control = Control::Scanning {
                    scan,
                    timer,
                    increments: 0,
                    drop_at,
                };
            }
            Control::Scanning {
                mut scan,
                mut timer,
                mut increments,
                drop_at,
            } => {
                timer -= dt;
                if timer > 1e-9 {
                    self.control = Control::Scanning {
                        scan,
                        timer,
                        increments,
                        drop_at,
                    };
                    return Ok(());
                }
                self.pose.heading = wrap_angle(self.pose.heading + self.sensors.scan_step_rad);
                increments += 1;
                if drop_at == Some(increments) {
                    let pellet = self.carried.take().expect("drop scheduled while carrying");
                    media.add_mass(self.nose(), pellet.mass_kg);
                    self.jaw_angle_deg = 0.0;
                    self.emit(t_s, EventKind::PelletDropped, Some(pellet.mass_kg), events);
                }
                let v =
                    rgb_read(&self.pose, arena, &self.sensors, &mut rngs.sensors)?.channel(channel);
                if scan.observe(self.pose.heading, v) {
                    let target = scan.best_heading();
                    let timer =
                        self.jittered(self.cfg.maneuvers.turn_left.duration_s, &mut rngs.fsm);
                    self.control = Control::Snapping { timer, target };
                } else {
                    let timer =
                        self.jittered(self.cfg.maneuvers.turn_left.duration_s, &mut rngs.fsm);
                    self.control = Control::Scanning {
                        scan,
                        timer,
                        increments,
                        drop_at,
                    };
                }
            }
            Control::Snapping { mut timer, target } => {
                timer -= dt;
                if timer > 1e-9 {
                    self.control = Control::Snapping { timer, target };
                    return Ok(());
                }
                self.pose.heading = wrap_angle(target);
                if depositing {
                    self.control = Control::CameraCheck {
                        timer: self.cfg.camera_check_s,
                    };
                } else {
                    self.go(t_s, FsmState::ApproachExcavate, events);
                }
            }
            Control::CameraCheck { mut timer } => {
                timer -= dt;
                if timer > 1e-9 {
                    self.control = Control::CameraCheck { timer };
                    return Ok(());
                }
                let mut img = render_camera(&self.pose, deposits, &self.sensors.camera);
                add_pixel_noise(&mut img, self.sensors.camera.pixel_noise, &mut rngs.sensors);
                let detection = detect_piles(&img, &self.sensors.vision);
                if let Some(span) = detection.chosen {
                    let bearing = group_bearing(span, &self.sensors.camera);
                    self.pose.heading = wrap_angle(self.pose.heading + bearing);
                }
                match &self.carried {
                    Some(p) if p.volume_m3 >= self.cfg.jaw.capacity_m3 / 4.0 => {
                        let mass = p.mass_kg;
                        self.emit(t_s, EventKind::PelletRetained, Some(mass), events);
                    }
                    _ => {}
                }
                self.go(t_s, FsmState::Transport, events);
            }
            _ => unreachable!("scan states only use scan controls"),
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn tick_approach(
        &mut self,
        t_s: f64,
        dt: f64,
        arena: &Arena,
        media: &mut MediaField,
        deposits: &DepositMap,
        rngs: &mut AgentRngs,
        events: &mut Vec<Event>,
    ) -> Result<()> {
        match std::mem::replace(&mut self.control, Control::Idle) {
            Control::Idle => {
                if !self.approach_checks(t_s, arena, media, deposits, events) {
                    let timer =
                        self.jittered(self.cfg.maneuvers.wheg_drive.duration_s, &mut rngs.fsm);
                    self.control = Control::Driving { timer };
                }
            }
            Control::Driving { mut timer } => {
                timer -= dt;
                if timer > 1e-9 {
                    self.control = Control::Driving { timer };
                    return Ok(());
                }
                let d = self.cfg.maneuvers.wheg_drive.displacement;
                let (cmd, got) = self.advance(arena, d);
                self.stuck.push(cmd, got);
                if !self.approach_checks(t_s, arena, media, deposits, events) {
                    let timer =
                        self.jittered(self.cfg.maneuvers.wheg_drive.duration_s, &mut rngs.fsm);
                    self.control = Control::Driving { timer };
                }
            }
            Control::Crutching { mut timer } => {
                timer -= dt;
                if timer > 1e-9 {
                    self.control = Control::Crutching { timer };
                    return Ok(());
                }
                let d = self.cfg.maneuvers.crutch.displacement;
                self.advance(arena, d);
                self.stuck.clear();
                if !self.approach_checks(t_s, arena, media, deposits, events) {
                    let timer =
                        self.jittered(self.cfg.maneuvers.wheg_drive.duration_s, &mut rngs.fsm);
                    self.control = Control::Driving { timer };
                }
            }
            _ => unreachable!("approach only drives and crutches"),
        }
        Ok(())
    }

    /// Arrival, obstacle and stall checks between approach primitives.
    /// Returns true when control moved on (transition taken or crutch
    /// scheduled).
    fn approach_checks(
        &mut self,
        t_s: f64,
        arena: &Arena,
        media: &MediaField,
        deposits: &DepositMap,
        events: &mut Vec<Event>,
    ) -> bool {
        let nose = self.nose();
        let engageable = media.config().min_engage_mass_kg;
        if arena.excavation_zone.contains(nose)
            && media.available_mass_near(nose, self.cfg.approach_search_m) >= engageable
        {
            self.go(t_s, FsmState::Excavate, events);
            return true;
        }
        if let Some(d) = rangefinder(&self.pose, arena, deposits, &self.sensors) {
            if d < self.cfg.obstacle_stop_m {
                self.go(t_s, FsmState::Reverse, events);
                return true;
            }
        }
        if imu_pitch_blocked(&self.stuck, &self.sensors) {
            self.crutch_streak += 1;
            if self.crutch_streak > self.cfg.crutch_cap {
                self.go(t_s, FsmState::Reverse, events);
            } else {
                self.emit(t_s, EventKind::CrutchManeuver, None, events);
                self.control = Control::Crutching {
                    timer: self.cfg.maneuvers.crutch.duration_s,
                };
            }
            return true;
        }
        false
    }

    fn tick_excavate(
        &mut self,
        t_s: f64,
        dt: f64,
        arena: &Arena,
        media: &mut MediaField,
        rngs: &mut AgentRngs,
        events: &mut Vec<Event>,
    ) -> Result<()> {
        match std::mem::replace(&mut self.control, Control::Idle) {
            Control::Idle => match self.attempt {
                Some(_) => {
                    self.control = Control::Excavating {
                        phase: ExcPhase::Reapproach,
                        timer: self.cfg.excavate.reapproach_s,
                    };
                }
                None => {
                    let nose = self.nose();
                    match media.richest_cell_near(nose, self.cfg.approach_search_m) {
                        Some(idx) => {
                            self.attempt = Some(Attempt {
                                loc: media.cell_center(idx),
                                accrued_m3: 0.0,
                                loops: 0,
                            });
                            self.control = Control::Excavating {
                                phase: ExcPhase::Vertical,
                                timer: self.cfg.excavate.vertical_s,
                            };
                        }
                        None => {
                            self.emit(t_s, EventKind::NoMaterial, None, events);
                            self.go(t_s, FsmState::TurnToExcavate, events);
                        }
                    }
                }
            },
            Control::Excavating { phase, mut timer } => {
                timer -= dt;
                if timer > 1e-9 {
                    self.control = Control::Excavating { phase, timer };
                    return Ok(());
                }
                match phase {
                    ExcPhase::Reapproach => {
                        self.advance(arena, self.cfg.excavate.back_away_m);
                        self.control = Control::Excavating {
                            phase: ExcPhase::Vertical,
                            timer: self.cfg.excavate.vertical_s,
                        };
                    }
                    ExcPhase::Vertical | ExcPhase::Horizontal => {
                        let loc = self.attempt.expect("attempt open while tearing").loc;
                        let mode = if phase == ExcPhase::Vertical {
                            TearMode::Vertical
                        } else {
                            TearMode::Horizontal
                        };
                        let out =
                            media.tear_step(loc, mode, self.cfg.jaw.grip_force_n, &mut rngs.media)?;
                        if out.engaged && !out.slipped {
                            let noise = 1.0
                                + self.cfg.excavate.bite_noise
                                    * (rngs.fsm.random::<f64>() * 2.0 - 1.0);
                            let bite =
                                self.cfg.excavate.bite_fraction * self.cfg.jaw.capacity_m3 * noise;
                            self.attempt.as_mut().expect("attempt open").accrued_m3 += bite;
                        }
                        let accrued = self.attempt.expect("attempt open").accrued_m3;
                        let fill = media.engagement_at(loc).map_or(1.0, |e| e.fill_fraction);
                        self.jaw_angle_deg = self.cfg.jaw.angle_for_volume(fill * accrued);
                        self.control = if phase == ExcPhase::Vertical {
                            Control::Excavating {
                                phase: ExcPhase::Horizontal,
                                timer: self.cfg.excavate.horizontal_s,
                            }
                        } else {
                            Control::Excavating {
                                phase: ExcPhase::Squeeze,
                                timer: self.cfg.excavate.squeeze_s,
                            }
                        };
                    }
                    ExcPhase::Squeeze => {
                        let loc = self.attempt.expect("attempt open while squeezing").loc;
                        media.squeeze(loc);
                        self.control = Control::Excavating {
                            phase: ExcPhase::BackAway,
                            timer: self.cfg.excavate.back_away_s,
                        };
                    }
                    ExcPhase::BackAway => {
                        self.advance(arena, -self.cfg.excavate.back_away_m);
                        let attempt = self.attempt.as_mut().expect("attempt open at back-away");
                        attempt.loops += 1;
                        let loops = attempt.loops;
                        let accrued = attempt.accrued_m3;
                        let loc = attempt.loc;
                        let fill = media.engagement_at(loc).map_or(1.0, |e| e.fill_fraction);
                        let would_pass = self
                            .cfg
                            .jaw
                            .blocked_open(self.cfg.jaw.angle_for_volume(fill * accrued));
                        if loops >= self.cfg.excavate.max_loops && !would_pass {
                            self.attempt = None;
                            self.jaw_angle_deg = 0.0;
                            self.emit(t_s, EventKind::ExcavationAborted, None, events);
                            self.go(t_s, FsmState::TurnToExcavate, events);
                        } else {
                            self.go(t_s, FsmState::JawCheck, events);
                        }
                    }
                }
            }
            _ => unreachable!("excavate only excavates"),
        }
        Ok(())
    }

    fn tick_jaw_check(
        &mut self,
        t_s: f64,
        dt: f64,
        media: &mut MediaField,
        rngs: &mut AgentRngs,
        events: &mut Vec<Event>,
    ) -> Result<()> {
        match std::mem::replace(&mut self.control, Control::Idle) {
            Control::Idle => {
                let timer = self.jittered(self.cfg.excavate.close_s, &mut rngs.fsm);
                self.control = Control::Checking { timer };
            }
            Control::Checking { mut timer } => {
                timer -= dt;
                if timer > 1e-9 {
                    self.control = Control::Checking { timer };
                    return Ok(());
                }
                let attempt = self.attempt.expect("attempt open at jaw check");
                let fill = media
                    .engagement_at(attempt.loc)
                    .map_or(1.0, |e| e.fill_fraction);
                self.jaw_angle_deg = self.cfg.jaw.angle_for_volume(fill * attempt.accrued_m3);
                if self.jaw_check() {
                    let pellet = media.separate(attempt.loc, attempt.accrued_m3)?;
                    self.attempt = None;
                    if pellet.volume_m3 < self.cfg.jaw.capacity_m3 / 4.0 {
                        if !pellet.is_empty() {
                            media.add_mass(attempt.loc, pellet.mass_kg);
                        }
                        self.jaw_angle_deg = 0.0;
                        self.emit(t_s, EventKind::NoMaterial, None, events);
                        self.go(t_s, FsmState::TurnToExcavate, events);
                    } else {
                        self.jaw_angle_deg = self.cfg.jaw.angle_for_volume(pellet.volume_m3);
                        self.emit(t_s, EventKind::PelletSeparated, Some(pellet.mass_kg), events);
                        self.carried = Some(pellet);
                        self.go(t_s, FsmState::TurnToDeposit, events);
                    }
                } else {
                    self.go(t_s, FsmState::Excavate, events);
                }
            }
            _ => unreachable!("jaw check only checks"),
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn tick_transport(
        &mut self,
        t_s: f64,
        dt: f64,
        arena: &Arena,
        media: &mut MediaField,
        deposits: &DepositMap,
        rngs: &mut AgentRngs,
        events: &mut Vec<Event>,
    ) -> Result<()> {
        match std::mem::replace(&mut self.control, Control::Idle) {
            Control::Idle => {
                let timer = self.jittered(self.cfg.maneuvers.sweep.duration_s, &mut rngs.fsm);
                self.control = Control::Driving { timer };
            }
            Control::Driving { mut timer } => {
                timer -= dt;
                if timer > 1e-9 {
                    self.control = Control::Driving { timer };
                    return Ok(());
                }
                let d = self.cfg.maneuvers.sweep.displacement;
                let (cmd, got) = self.advance(arena, d);
                self.stuck.push(cmd, got);
                self.shed_in_transit(media, rngs);
                if self.pose.pos.x >= arena.bounds.max.x - self.cfg.arrival_offset_m {
                    self.go(t_s, FsmState::AntennaSearch, events);
                    return Ok(());
                }
                if let Some(d) = rangefinder(&self.pose, arena, deposits, &self.sensors) {
                    if d < self.cfg.obstacle_stop_m {
                        self.go(t_s, FsmState::Reverse, events);
                        return Ok(());
                    }
                }
                let timer = self.jittered(self.cfg.maneuvers.sweep.duration_s, &mut rngs.fsm);
                self.control = Control::Driving { timer };
            }
            _ => unreachable!("transport only sweeps"),
        }
        Ok(())
    }

    /// Loose pellets shake off single staples while the robot sweeps along;
    /// shed mass lands back on the bed under the robot.
    fn shed_in_transit(&mut self, media: &mut MediaField, rngs: &mut AgentRngs) {
        let staple = media.config().staple.mass_kg;
        if let Some(p) = &mut self.carried {
            let loose = (1.0 - p.cohesion).max(0.0);
            if p.mass_kg > 20.0 * staple
                && rngs.fsm.random::<f64>() < self.cfg.transit_shed_rate * loose
            {
                p.mass_kg -= staple;
                media.add_mass(self.pose.pos, staple);
            }
        }
    }

    fn tick_antenna(
        &mut self,
        t_s: f64,
        dt: f64,
        deposits: &DepositMap,
        rngs: &mut AgentRngs,
        events: &mut Vec<Event>,
    ) -> Result<()> {
        match std::mem::replace(&mut self.control, Control::Idle) {
            Control::Idle => {
                self.control = Control::Probing {
                    k: 0,
                    timer: self.cfg.antenna_step_s,
                    best_height: f64::NEG_INFINITY,
                    best_offset: 0.0,
                };
            }
            Control::Probing {
                mut k,
                mut timer,
                mut best_height,
                mut best_offset,
            } => {
                timer -= dt;
                if timer > 1e-9 {
                    self.control = Control::Probing {
                        k,
                        timer,
                        best_height,
                        best_offset,
                    };
                    return Ok(());
                }
                let offset = if k == 0 {
                    0.0
                } else {
                    let rank = k.div_ceil(2) as f64;
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    sign * rank * self.sensors.scan_step_rad
                };
                let probe = Pose {
                    pos: self.pose.pos,
                    heading: wrap_angle(self.pose.heading + offset),
                };
                let h = antenna_probe(&probe, deposits, &self.sensors);
                if h > best_height {
                    best_height = h;
                    best_offset = offset;
                }
                k += 1;
                if k >= self.cfg.antenna_probes {
                    if best_height > self.cfg.deposit_pile_height_m {
                        self.pose.heading = wrap_angle(self.pose.heading + best_offset);
                    }
                    let target = self.pose.ahead(self.cfg.deposit_reach_m);
                    let timer = self.jittered(self.cfg.deposit_s, &mut rngs.fsm);
                    self.go(t_s, FsmState::Deposit, events);
                    self.control = Control::Depositing { timer, target };
                } else {
                    self.control = Control::Probing {
                        k,
                        timer: self.cfg.antenna_step_s,
                        best_height,
                        best_offset,
                    };
                }
            }
            _ => unreachable!("antenna search only probes"),
        }
        Ok(())
    }

    fn tick_deposit(
        &mut self,
        t_s: f64,
        dt: f64,
        deposits: &mut DepositMap,
        rngs: &mut AgentRngs,
        events: &mut Vec<Event>,
    ) -> Result<()> {
        match std::mem::replace(&mut self.control, Control::Idle) {
            Control::Idle => {
                let timer = self.jittered(self.cfg.deposit_s, &mut rngs.fsm);
                let target = self.pose.ahead(self.cfg.deposit_reach_m);
                self.control = Control::Depositing { timer, target };
            }
            Control::Depositing { mut timer, target } => {
                timer -= dt;
                if timer > 1e-9 {
                    self.control = Control::Depositing { timer, target };
                    return Ok(());
                }
                if let Some(pellet) = self.carried.take() {
                    deposits.add_deposit(target, &pellet);
                    self.emit(t_s, EventKind::PelletDeposited, Some(pellet.mass_kg), events);
                }
                self.jaw_angle_deg = 0.0;
                self.go(t_s, FsmState::TurnToExcavate, events);
            }
            _ => unreachable!("deposit only deposits"),
        }
        Ok(())
    }

    fn tick_reverse(
        &mut self,
        t_s: f64,
        dt: f64,
        arena: &Arena,
        rngs: &mut AgentRngs,
        events: &mut Vec<Event>,
    ) -> Result<()> {
        match std::mem::replace(&mut self.control, Control::Idle) {
            Control::Idle => {
                let timer = self.jittered(self.cfg.maneuvers.reverse.duration_s, &mut rngs.fsm);
                self.control = Control::Reversing { timer };
            }
            Control::Reversing { mut timer } => {
                timer -= dt;
                if timer > 1e-9 {
                    self.control = Control::Reversing { timer };
                    return Ok(());
                }
                self.advance(arena, self.cfg.maneuvers.reverse.displacement);
                self.stuck.clear();
                self.go(t_s, self.reverse_resume, events);
            }
            _ => unreachable!("reverse only reverses"),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{ConstitutiveParams, MediaConfig, PrepMode};
    use crate::rng::SeedFanout;

    fn scattered_media(mass_kg: f64, seed: u64) -> MediaField {
        let arena = Arena::default();
        let mut rng = SeedFanout::new(seed).stream("media/prep");
        MediaField::prepare(
            &arena.bounds,
            &arena.excavation_zone,
            mass_kg,
            MediaConfig::default(),
            ConstitutiveParams::default_calibrated(),
            PrepMode::Scattered,
            &mut rng,
        )
        .unwrap()
    }

    fn robot() -> Robot {
        Robot::new(
            AgentConfig::default(),
            SensorConfig::default(),
            &Arena::default(),
        )
        .unwrap()
    }

    fn deposits() -> DepositMap {
        DepositMap::new(0.1, 35f64.to_radians())
    }

    #[test]
    fn edge_table_is_consistent() {
        for (i, a) in FSM_EDGES.iter().enumerate() {
            for b in &FSM_EDGES[i + 1..] {
                assert_ne!(a, b, "duplicate edge");
            }
        }
        let states = [
            FsmState::TurnToExcavate,
            FsmState::ApproachExcavate,
            FsmState::Excavate,
            FsmState::JawCheck,
            FsmState::TurnToDeposit,
            FsmState::Transport,
            FsmState::AntennaSearch,
            FsmState::Deposit,
            FsmState::Reverse,
        ];
        for s in states {
            assert!(
                FSM_EDGES.iter().any(|(from, _)| *from == s),
                "{s:?} has no exit"
            );
            assert!(
                FSM_EDGES.iter().any(|(_, to)| *to == s)
                    || s == FsmState::TurnToExcavate,
                "{s:?} unreachable"
            );
        }
        assert!(!is_legal_transition(
            FsmState::Deposit,
            FsmState::Transport
        ));
    }

    #[test]
    fn jaw_close_threshold_is_strict() {
        let jaw = JawModel::default();
        let third = jaw.capacity_m3 / 3.0;
        assert_eq!(jaw.angle_for_volume(third), 30.0);
        assert!(!jaw.blocked_open(jaw.angle_for_volume(third)));
        assert!(jaw.blocked_open(jaw.angle_for_volume(third * 1.01)));
        assert_eq!(jaw.angle_for_volume(jaw.capacity_m3 * 2.0), 90.0);
        assert_eq!(jaw.angle_for_volume(0.0), 0.0);
    }

    #[test]
    fn configs_reject_inconsistent_setups() {
        let mut bad = ManeuverSet::default();
        bad.sweep.carry_safe = false;
        assert!(bad.validate().is_err());

        let mut bad = ManeuverSet::default();
        bad.wheg_drive.duration_s = 0.0;
        assert!(bad.validate().is_err());

        let sensors = SensorConfig::default();
        let mut cfg = AgentConfig::default();
        cfg.maneuvers.turn_left.displacement = sensors.scan_step_rad * 2.0;
        assert!(cfg.validate(&sensors).is_err());

        let mut cfg = AgentConfig::default();
        cfg.jaw.close_threshold_deg = 95.0;
        assert!(cfg.validate(&sensors).is_err());

        assert!(AgentConfig::default().validate(&sensors).is_ok());
    }

    #[test]
    fn pitch_blockage_schedules_a_crutch() {
        let arena = Arena::default();
        let mut media = scattered_media(1.0, 11);
        let mut deposits = deposits();
        let fan = SeedFanout::new(3);
        let mut rngs = AgentRngs::from_fanout(&fan);
        let mut robot = robot();
        robot.fsm = FsmState::ApproachExcavate;
        robot.pose = Pose::new(1.2, 0.6, 0.0);
        for _ in 0..4 {
            robot.stuck.push(0.05, 0.004);
        }
        let events = robot
            .step(0.0, 0.1, &arena, &mut media, &mut deposits, &mut rngs)
            .unwrap();
        assert!(events
            .iter()
            .any(|e| e.event == EventKind::CrutchManeuver));
        assert_eq!(robot.fsm, FsmState::ApproachExcavate);
    }

    #[test]
    fn repeated_blockage_reverses_out() {
        let arena = Arena::default();
        let mut media = scattered_media(1.0, 12);
        let mut deposits = deposits();
        let fan = SeedFanout::new(4);
        let mut rngs = AgentRngs::from_fanout(&fan);
        let mut robot = robot();
        robot.fsm = FsmState::ApproachExcavate;
        robot.pose = Pose::new(1.2, 0.3, std::f64::consts::FRAC_PI_2);
        let mut crutches = 0;
        let mut t = 0.0;
        for _ in 0..10_000 {
            for _ in 0..4 {
                robot.stuck.push(0.05, 0.004);
            }
            let events = robot
                .step(t, 0.1, &arena, &mut media, &mut deposits, &mut rngs)
                .unwrap();
            t += 0.1;
            crutches += events
                .iter()
                .filter(|e| e.event == EventKind::CrutchManeuver)
                .count();
            if robot.fsm == FsmState::Reverse {
                break;
            }
        }
        assert_eq!(robot.fsm, FsmState::Reverse);
        assert_eq!(crutches as u32, robot.cfg.crutch_cap);
    }

    #[test]
    fn doomed_pellet_drops_during_the_turn() {
        let arena = Arena::default();
        let mut media = scattered_media(1.0, 13);
        let mut deposits = deposits();
        let fan = SeedFanout::new(5);
        let mut rngs = AgentRngs::from_fanout(&fan);
        let mut robot = robot();
        let pellet = Pellet::new(4e-3, 4e-6, 0.8, 55.0).unwrap();
        assert!(pellet.residual_bond_n > robot.config().jaw.grip_force_n);
        robot.carried = Some(pellet);
        robot.fsm = FsmState::TurnToDeposit;
        robot.pose = Pose::new(1.0, 0.6, 0.0);
        let before = media.total_mass();
        let mut dropped = false;
        let mut t = 0.0;
        for _ in 0..2_000 {
            let events = robot
                .step(t, 0.1, &arena, &mut media, &mut deposits, &mut rngs)
                .unwrap();
            t += 0.1;
            if events.iter().any(|e| e.event == EventKind::PelletDropped) {
                dropped = true;
                break;
            }
        }
        assert!(dropped, "over-bonded pellet must drop");
        assert!(robot.carried.is_none());
        assert_eq!(robot.fsm, FsmState::TurnToDeposit);
        assert!((media.total_mass() - before - 4e-3).abs() < 1e-12);
        let mut retained = false;
        let mut deposited = false;
        for _ in 0..20_000 {
            let events = robot
                .step(t, 0.1, &arena, &mut media, &mut deposits, &mut rngs)
                .unwrap();
            t += 0.1;
            retained |= events.iter().any(|e| e.event == EventKind::PelletRetained);
            deposited |= events.iter().any(|e| e.event == EventKind::PelletDeposited);
            if robot.fsm == FsmState::TurnToExcavate {
                break;
            }
        }
        assert_eq!(robot.fsm, FsmState::TurnToExcavate, "never finished the loop");
        assert!(!retained, "dropped pellet must not count as retained");
        assert!(!deposited, "empty jaws must deposit nothing");
        assert!((deposits.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn secure_pellet_survives_the_turn() {
        let arena = Arena::default();
        let mut media = scattered_media(1.0, 14);
        let mut deposits = deposits();
        let fan = SeedFanout::new(6);
        let mut rngs = AgentRngs::from_fanout(&fan);
        let mut robot = robot();
        let pellet = Pellet::new(4e-3, 4e-6, 0.8, 5.0).unwrap();
        robot.carried = Some(pellet);
        robot.fsm = FsmState::TurnToDeposit;
        robot.pose = Pose::new(1.0, 0.6, 0.0);
        let mut t = 0.0;
        for _ in 0..5_000 {
            let events = robot
                .step(t, 0.1, &arena, &mut media, &mut deposits, &mut rngs)
                .unwrap();
            t += 0.1;
            assert!(
                !events.iter().any(|e| e.event == EventKind::PelletDropped),
                "secure pellet dropped"
            );
            if robot.fsm == FsmState::Transport {
                return;
            }
        }
        panic!("never reached transport");
    }

    #[test]
    fn full_cycles_run_clean() {
        let arena = Arena::default();
        let mut media = scattered_media(2.0, 21);
        let mut deposits = deposits();
        let seed_pellet = Pellet::new(0.1, 0.1 / (0.117 * 7850.0), 1.0, 0.0).unwrap();
        deposits.add_deposit(Vec2::new(1.7, 0.6), &seed_pellet);
        let fan = SeedFanout::new(7);
        let mut rngs = AgentRngs::from_fanout(&fan);
        let mut robot = robot();
        let initial = media.total_mass() + deposits.total_mass();
        let dt = 0.1;
        let mut t = 0.0;
        let mut deposited = 0;
        while t < 2_400.0 {
            let events = robot
                .step(t, dt, &arena, &mut media, &mut deposits, &mut rngs)
                .unwrap();
            t += dt;
            for e in &events {
                if e.event == EventKind::Transition {
                    assert!(
                        is_legal_transition(e.state_from, e.state_to),
                        "illegal {:?} -> {:?}",
                        e.state_from,
                        e.state_to
                    );
                }
                if e.event == EventKind::PelletDeposited {
                    deposited += 1;
                }
            }
            let carried = robot.carried.map_or(0.0, |p| p.mass_kg);
            let ledger = media.total_mass() + deposits.total_mass() + carried;
            assert!(
                (ledger - initial).abs() < 1e-9,
                "mass leak at t={t}: {ledger} vs {initial}"
            );
            assert!(arena.bounds.contains(robot.pose.pos));
        }
        assert!(deposited >= 2, "only {deposited} deposits in 40 min");
        assert!(deposits.total_mass() > 0.1);
    }
}
