//! Deterministic 2D simulator of a differential-drive vehicle navigating to a
//! goal among unsafe zones and a single obstacle, with a fixed energy budget.
//!
//! The simulator is a pure function of `(WorldConfig, seed, SpawnMode, actions)`.
//! A [`World`] owns the configuration; [`WorldState`] values are plain data and
//! can be cloned freely or shared between threads.

mod sensors;
mod trace;

pub use sensors::{Observation, BEAMS_PER_ARRAY, OBSERVATION_DIM};
pub use trace::{
    read_trace_file, run_episode, write_trace_file, EpisodeTrace, Policy, RandomPolicy, TraceBlock,
    TraceBlocks, TraceHeader, TraceRow, TraceStep, TraceWriter, ZeroPolicy,
};

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Largest representable wheel command strictly below 1.
pub const MAX_WHEEL_COMMAND: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid world configuration: {0}")]
    Config(String),
    #[error("object placement failed after {attempts} attempts: {constraint}")]
    Placement { constraint: String, attempts: usize },
    #[error("cannot step a terminal state (t={step}, mode={mode:?})")]
    TerminalStep { step: u32, mode: MissionMode },
    #[error("invalid spawn mode: {0}")]
    Spawn(String),
}

/// A point or displacement in the arena plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_to(self, other: Vec2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// The arena is the square `[-h, h]²`.
    pub arena_half_extent: f64,
    pub n_unsafe_zones: usize,
    pub unsafe_radius: f64,
    pub obstacle_radius: f64,
    pub goal_radius: f64,
    pub initial_energy: u32,
    pub max_episode_steps: u32,
    /// Meters travelled per step by a wheel at command 1.
    pub wheel_speed_scale: f64,
    pub axle_width: f64,
    pub min_spawn_separation: f64,
    pub sensor_max_range: f64,
    /// When false, energy saturates at zero and only the step cap ends an
    /// episode that neither collides nor reaches the goal (training mode).
    pub energy_terminates: bool,
    pub max_placement_attempts: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            arena_half_extent: 2.0,
            n_unsafe_zones: 8,
            unsafe_radius: 0.2,
            obstacle_radius: 0.1,
            goal_radius: 0.3,
            initial_energy: 250,
            max_episode_steps: 500,
            wheel_speed_scale: 0.05,
            axle_width: 0.2,
            min_spawn_separation: 0.5,
            sensor_max_range: 3.0,
            energy_terminates: true,
            max_placement_attempts: 10_000,
        }
    }
}

impl WorldConfig {
    /// Training episodes run to the step cap even after the energy budget is
    /// spent, so exploration is not cut short.
    pub fn training(&self) -> Self {
        Self {
            energy_terminates: false,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let positive = [
            ("arena_half_extent", self.arena_half_extent),
            ("unsafe_radius", self.unsafe_radius),
            ("obstacle_radius", self.obstacle_radius),
            ("goal_radius", self.goal_radius),
            ("wheel_speed_scale", self.wheel_speed_scale),
            ("axle_width", self.axle_width),
            ("min_spawn_separation", self.min_spawn_separation),
            ("sensor_max_range", self.sensor_max_range),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(EnvError::Config(format!(
                    "{name} must be finite and > 0, got {value}"
                )));
            }
        }
        if self.unsafe_radius <= self.obstacle_radius {
            return Err(EnvError::Config(format!(
                "unsafe_radius ({}) must exceed obstacle_radius ({})",
                self.unsafe_radius, self.obstacle_radius
            )));
        }
        if self.initial_energy == 0 {
            return Err(EnvError::Config("initial_energy must be >= 1".into()));
        }
        if self.max_episode_steps == 0 {
            return Err(EnvError::Config("max_episode_steps must be >= 1".into()));
        }
        if self.max_placement_attempts == 0 {
            return Err(EnvError::Config(
                "max_placement_attempts must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Upper bound on the number of steps of any episode.
    pub fn step_limit(&self) -> u32 {
        if self.energy_terminates {
            self.initial_energy.min(self.max_episode_steps)
        } else {
            self.max_episode_steps
        }
    }

    /// Short content hash identifying this configuration in trace headers.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Journey status of the vehicle. The numeric codes are the ones used by
/// trace files, the DTMC format, and property atoms (`m=2` is a collision).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MissionMode {
    Travelling = 0,
    InUnsafeZone = 1,
    Collided = 2,
    GoalReached = 3,
}

impl MissionMode {
    pub const ALL: [MissionMode; 4] = [
        MissionMode::Travelling,
        MissionMode::InUnsafeZone,
        MissionMode::Collided,
        MissionMode::GoalReached,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, MissionMode::Collided | MissionMode::GoalReached)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpawnMode {
    Random,
    /// The vehicle starts at a distance in `[min, max]` from the obstacle.
    NearObstacle {
        min: f64,
        max: f64,
    },
}

/// Wheel velocity commands. Construction clamps both components into the
/// open interval (-1, 1).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub left: f64,
    pub right: f64,
}

impl Action {
    pub fn new(left: f64, right: f64) -> Self {
        Self {
            left: clamp_command(left),
            right: clamp_command(right),
        }
    }
}

fn clamp_command(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-MAX_WHEEL_COMMAND, MAX_WHEEL_COMMAND)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub position: Vec2,
    /// Radians in (-π, π].
    pub heading: f64,
    pub goal: Vec2,
    pub unsafe_zones: Vec<Vec2>,
    pub obstacle: Vec2,
    pub energy: u32,
    pub step_count: u32,
    pub unsafe_time: u32,
    pub mode: MissionMode,
}

impl WorldState {
    pub fn distance_to_goal(&self) -> f64 {
        distance(self, self.goal)
    }

    pub fn distance_to_obstacle(&self) -> f64 {
        distance(self, self.obstacle)
    }

    /// Distance to the nearest unsafe zone centre, `None` without zones.
    pub fn nearest_unsafe_distance(&self) -> Option<f64> {
        self.unsafe_zones
            .iter()
            .map(|&u| distance(self, u))
            .min_by(f64::total_cmp)
    }
}

/// Quantities needed to evaluate the shaped reward of a single transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardInputs {
    pub goal_distance_before: f64,
    pub goal_distance_after: f64,
    pub in_unsafe: bool,
    pub collided: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminationCause {
    Goal,
    Collision,
    EnergyDepleted,
    StepCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: WorldState,
    pub reward_inputs: RewardInputs,
    pub termination: Option<TerminationCause>,
}

impl StepOutcome {
    pub fn terminated(&self) -> bool {
        self.termination.is_some()
    }
}

/// Euclidean distance from the vehicle to `target`.
pub fn distance(state: &WorldState, target: Vec2) -> f64 {
    state.position.distance_to(target)
}

fn wrap_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped == -PI {
        PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone)]
pub struct World {
    config: WorldConfig,
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn reset(&self, seed: u64, spawn: SpawnMode) -> Result<WorldState, EnvError> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.arena_half_extent;
        let sep = cfg.min_spawn_separation;
        let mut placed: Vec<Vec2> = Vec::with_capacity(cfg.n_unsafe_zones + 3);

        let sample_free = |rng: &mut ChaCha8Rng, placed: &[Vec2], what: &str| {
            for _ in 0..cfg.max_placement_attempts {
                let p = Vec2::new(rng.random_range(-h..=h), rng.random_range(-h..=h));
                if placed.iter().all(|q| p.distance_to(*q) >= sep) {
                    return Ok(p);
                }
            }
            Err(EnvError::Placement {
                constraint: format!(
                    "{what} must be at least min_spawn_separation={sep} m from every placed object"
                ),
                attempts: cfg.max_placement_attempts,
            })
        };

        let (position, obstacle) = match spawn {
            SpawnMode::Random => {
                let position = sample_free(&mut rng, &placed, "vehicle")?;
                placed.push(position);
                let obstacle = sample_free(&mut rng, &placed, "obstacle")?;
                placed.push(obstacle);
                (position, obstacle)
            }
            SpawnMode::NearObstacle { min, max } => {
                if !(min.is_finite() && max.is_finite() && 0.0 <= min && min < max) {
                    return Err(EnvError::Spawn(format!(
                        "NearObstacle requires 0 <= min < max, got [{min}, {max}]"
                    )));
                }
                let obstacle = sample_free(&mut rng, &placed, "obstacle")?;
                placed.push(obstacle);
                let mut vehicle = None;
                for _ in 0..cfg.max_placement_attempts {
                    let r = rng.random_range(min..=max);
                    let phi = rng.random_range(0.0..2.0 * PI);
                    let p = Vec2::new(obstacle.x + r * phi.cos(), obstacle.y + r * phi.sin());
                    let d = p.distance_to(obstacle);
                    if p.x.abs() <= h && p.y.abs() <= h && d >= min && d <= max {
                        vehicle = Some(p);
                        break;
                    }
                }
                let position = vehicle.ok_or_else(|| EnvError::Placement {
                    constraint: format!(
                        "vehicle must lie inside the arena within [{min}, {max}] m of the obstacle"
                    ),
                    attempts: cfg.max_placement_attempts,
                })?;
                placed.push(position);
                (position, obstacle)
            }
        };

        let goal = sample_free(&mut rng, &placed, "goal")?;
        placed.push(goal);
        let mut unsafe_zones = Vec::with_capacity(cfg.n_unsafe_zones);
        for i in 0..cfg.n_unsafe_zones {
            let u = sample_free(&mut rng, &placed, &format!("unsafe zone {i}"))?;
            placed.push(u);
            unsafe_zones.push(u);
        }
        let heading = wrap_angle(rng.random_range(-PI..PI));

        let mut state = WorldState {
            position,
            heading,
            goal,
            unsafe_zones,
            obstacle,
            energy: cfg.initial_energy,
            step_count: 0,
            unsafe_time: 0,
            mode: MissionMode::Travelling,
        };
        state.mode = self.classify(&state);
        Ok(state)
    }

    /// Mode of `state` with precedence Collided > GoalReached > InUnsafeZone >
    /// Travelling. All thresholds are strict.
    pub fn classify(&self, state: &WorldState) -> MissionMode {
        let cfg = &self.config;
        if state.distance_to_obstacle() < cfg.obstacle_radius {
            MissionMode::Collided
        } else if state.distance_to_goal() < cfg.goal_radius {
            MissionMode::GoalReached
        } else if self.in_unsafe_zone(state) {
            MissionMode::InUnsafeZone
        } else {
            MissionMode::Travelling
        }
    }

    pub fn in_unsafe_zone(&self, state: &WorldState) -> bool {
        state
            .unsafe_zones
            .iter()
            .any(|&u| distance(state, u) < self.config.unsafe_radius)
    }

    /// Reason an episode in `state` is over, if it is.
    pub fn termination_cause(&self, state: &WorldState) -> Option<TerminationCause> {
        match state.mode {
            MissionMode::Collided => Some(TerminationCause::Collision),
            MissionMode::GoalReached => Some(TerminationCause::Goal),
            _ if self.config.energy_terminates && state.energy == 0 => {
                Some(TerminationCause::EnergyDepleted)
            }
            _ if state.step_count >= self.config.max_episode_steps => {
                Some(TerminationCause::StepCap)
            }
            _ => None,
        }
    }

    pub fn is_terminal(&self, state: &WorldState) -> bool {
        self.termination_cause(state).is_some()
    }

    pub fn step(&self, state: &WorldState, action: Action) -> Result<StepOutcome, EnvError> {
        if self.is_terminal(state) {
            return Err(EnvError::TerminalStep {
                step: state.step_count,
                mode: state.mode,
            });
        }
        let cfg = &self.config;
        let action = Action::new(action.left, action.right);
        let linear = 0.5 * (action.left + action.right) * cfg.wheel_speed_scale;
        let angular = (action.right - action.left) / cfg.axle_width * cfg.wheel_speed_scale;

        let h = cfg.arena_half_extent;
        let mut next = state.clone();
        next.position = Vec2::new(
            (state.position.x + linear * state.heading.cos()).clamp(-h, h),
            (state.position.y + linear * state.heading.sin()).clamp(-h, h),
        );
        next.heading = wrap_angle(state.heading + angular);
        next.energy = state.energy.saturating_sub(1);
        next.step_count = state.step_count + 1;
        next.mode = self.classify(&next);
        if next.mode == MissionMode::InUnsafeZone {
            next.unsafe_time += 1;
        }

        let reward_inputs = RewardInputs {
            goal_distance_before: state.distance_to_goal(),
            goal_distance_after: next.distance_to_goal(),
            in_unsafe: self.in_unsafe_zone(&next),
            collided: next.mode == MissionMode::Collided,
        };
        let termination = self.termination_cause(&next);
        Ok(StepOutcome {
            next_state: next,
            reward_inputs,
            termination,
        })
    }

    pub fn observe(&self, state: &WorldState) -> Observation {
        sensors::observe(state, self.config.sensor_max_range)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> World {
        World::new(WorldConfig::default()).unwrap()
    }

    fn bare_state(position: Vec2, heading: f64) -> WorldState {
        WorldState {
            position,
            heading,
            goal: Vec2::new(1.9, 1.9),
            unsafe_zones: vec![],
            obstacle: Vec2::new(-1.9, -1.9),
            energy: 250,
            step_count: 0,
            unsafe_time: 0,
            mode: MissionMode::Travelling,
        }
    }

    #[test]
    fn reset_starts_with_full_energy() {
        let s = world().reset(42, SpawnMode::Random).unwrap();
        assert_eq!(s.energy, 250);
        assert_eq!(s.step_count, 0);
        assert_eq!(s.unsafe_zones.len(), 8);
    }

    #[test]
    fn reset_is_deterministic() {
        let w = world();
        let a = w.reset(42, SpawnMode::Random).unwrap();
        let b = w.reset(42, SpawnMode::Random).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, w.reset(43, SpawnMode::Random).unwrap());
    }

    #[test]
    fn near_obstacle_spawn_respects_band() {
        let w = world();
        let s = w
            .reset(7, SpawnMode::NearObstacle { min: 0.2, max: 0.3 })
            .unwrap();
        let d = s.distance_to_obstacle();
        assert!((0.2..=0.3).contains(&d), "d(o) = {d}");
    }

    #[test]
    fn reset_places_objects_apart_and_inside() {
        let w = world();
        for seed in 0..200 {
            let s = w.reset(seed, SpawnMode::Random).unwrap();
            let mut pts = vec![s.position, s.goal, s.obstacle];
            pts.extend(&s.unsafe_zones);
            for (i, p) in pts.iter().enumerate() {
                assert!(p.x.abs() <= 2.0 && p.y.abs() <= 2.0);
                for q in &pts[i + 1..] {
                    assert!(p.distance_to(*q) >= 0.5);
                }
            }
            assert_eq!(s.mode, MissionMode::Travelling);
        }
    }

    #[test]
    fn impossible_packing_is_a_placement_error() {
        let cfg = WorldConfig {
            n_unsafe_zones: 200,
            max_placement_attempts: 50,
            ..WorldConfig::default()
        };
        let err = World::new(cfg)
            .unwrap()
            .reset(1, SpawnMode::Random)
            .unwrap_err();
        match err {
            EnvError::Placement { constraint, .. } => {
                assert!(constraint.contains("min_spawn_separation"))
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_spawn_band_rejected() {
        let err = world()
            .reset(1, SpawnMode::NearObstacle { min: 0.3, max: 0.2 })
            .unwrap_err();
        assert!(matches!(err, EnvError::Spawn(_)));
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = WorldConfig {
            unsafe_radius: 0.05,
            ..WorldConfig::default()
        };
        assert!(World::new(bad).is_err());
        let bad = WorldConfig {
            initial_energy: 0,
            ..WorldConfig::default()
        };
        assert!(World::new(bad).is_err());
        let bad = WorldConfig {
            sensor_max_range: -1.0,
            ..WorldConfig::default()
        };
        assert!(World::new(bad).is_err());
    }

    #[test]
    fn zero_action_only_spends_energy() {
        let w = world();
        let s = bare_state(Vec2::new(0.3, -0.4), 1.0);
        let out = w.step(&s, Action::new(0.0, 0.0)).unwrap();
        assert_eq!(out.next_state.position, s.position);
        assert_eq!(out.next_state.heading, s.heading);
        assert_eq!(out.next_state.energy, 249);
        assert_eq!(out.next_state.step_count, 1);
    }

    #[test]
    fn full_forward_advances_along_heading() {
        let cfg = WorldConfig {
            wheel_speed_scale: 0.1,
            ..WorldConfig::default()
        };
        let w = World::new(cfg).unwrap();
        let s = bare_state(Vec2::new(0.0, 0.0), 0.0);
        let out = w.step(&s, Action::new(1.0, 1.0)).unwrap();
        assert!((out.next_state.position.x - 0.1).abs() < 1e-12);
        assert_eq!(out.next_state.position.y, 0.0);
        assert_eq!(out.next_state.heading, 0.0);
    }

    #[test]
    fn opposite_wheels_rotate_in_place() {
        let w = world();
        let s = bare_state(Vec2::new(0.5, 0.5), 0.0);
        let out = w.step(&s, Action::new(-1.0, 1.0)).unwrap();
        assert_eq!(out.next_state.position, s.position);
        // (1 - (-1)) / 0.2 * 0.05
        assert!((out.next_state.heading - 0.5).abs() < 1e-12);
    }

    #[test]
    fn position_clamped_to_arena() {
        let w = world();
        let s = bare_state(Vec2::new(1.99, 0.0), 0.0);
        let out = w.step(&s, Action::new(0.9, 0.9)).unwrap();
        assert_eq!(out.next_state.position.x, 2.0);
    }

    #[test]
    fn action_is_clamped_into_open_interval() {
        let a = Action::new(5.0, -5.0);
        assert!(a.left < 1.0 && a.right > -1.0);
        assert_eq!(Action::new(f64::NAN, 0.2).left, 0.0);
    }

    #[test]
    fn distance_examples() {
        let s = bare_state(Vec2::new(0.0, 0.0), 0.0);
        assert_eq!(distance(&s, Vec2::new(3.0, 4.0)), 5.0);
        assert_eq!(distance(&s, Vec2::new(0.0, 0.0)), 0.0);
        let shifted = bare_state(Vec2::new(10.0, -7.0), 0.0);
        assert!((distance(&shifted, Vec2::new(13.0, -3.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn classify_examples() {
        let w = world();
        let mut s = bare_state(Vec2::new(0.0, 0.0), 0.0);
        s.obstacle = Vec2::new(0.05, 0.0);
        s.goal = Vec2::new(0.0, 0.1);
        s.unsafe_zones = vec![Vec2::new(0.0, 0.0)];
        assert_eq!(w.classify(&s), MissionMode::Collided);

        s.obstacle = Vec2::new(1.5, 1.5);
        assert_eq!(w.classify(&s), MissionMode::GoalReached);

        s.goal = Vec2::new(1.0, 1.0);
        assert_eq!(w.classify(&s), MissionMode::InUnsafeZone);

        s.unsafe_zones = vec![Vec2::new(-1.0, 0.0)];
        assert_eq!(w.classify(&s), MissionMode::Travelling);
    }

    #[test]
    fn thresholds_are_strict() {
        let w = world();
        let mut s = bare_state(Vec2::new(0.0, 0.0), 0.0);
        s.obstacle = Vec2::new(0.1, 0.0);
        s.goal = Vec2::new(0.0, 0.3);
        s.unsafe_zones = vec![Vec2::new(-0.2, 0.0)];
        assert_eq!(w.classify(&s), MissionMode::Travelling);
    }

    #[test]
    fn stepping_terminal_state_is_an_error() {
        let w = world();
        let mut s = bare_state(Vec2::new(0.0, 0.0), 0.0);
        s.mode = MissionMode::GoalReached;
        assert!(matches!(
            w.step(&s, Action::default()),
            Err(EnvError::TerminalStep { .. })
        ));
        let mut s = bare_state(Vec2::new(0.0, 0.0), 0.0);
        s.energy = 0;
        assert!(w.step(&s, Action::default()).is_err());
    }

    #[test]
    fn training_mode_runs_past_depleted_energy() {
        let w = World::new(WorldConfig::default().training()).unwrap();
        let mut s = bare_state(Vec2::new(0.0, 0.0), 0.0);
        s.energy = 1;
        let out = w.step(&s, Action::default()).unwrap();
        assert_eq!(out.next_state.energy, 0);
        assert!(!out.terminated());
        let out = w.step(&out.next_state, Action::default()).unwrap();
        assert_eq!(out.next_state.energy, 0);
    }

    #[test]
    fn unsafe_time_accumulates() {
        let w = world();
        let mut s = bare_state(Vec2::new(0.0, 0.0), 0.0);
        s.unsafe_zones = vec![Vec2::new(0.05, 0.0)];
        let out = w.step(&s, Action::default()).unwrap();
        assert_eq!(out.next_state.mode, MissionMode::InUnsafeZone);
        assert_eq!(out.next_state.unsafe_time, 1);
        assert!(out.reward_inputs.in_unsafe);
    }

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let a = wrap_angle(k as f64 * 0.7);
            assert!(a > -PI && a <= PI);
        }
        assert_eq!(wrap_angle(-PI), PI);
    }
}
