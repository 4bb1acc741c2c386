//! Abstract states over trace rows and maximum-likelihood DTMC estimation.
//!
//! An abstract state is `(m, e_bin, do_bin, du_bin)`: the mission mode, a
//! coarse energy bin, and near/mid/far bins for the obstacle distance and the
//! distance to the nearest unsafe zone.

mod dtmc;
mod estimator;

pub use dtmc::{export_dtmc, import_dtmc, parse_dtmc, render_dtmc, Dtmc, ROW_SUM_TOLERANCE};
pub use estimator::{estimate_dtmc, estimate_dtmc_from_file, DtmcEstimator};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{EpisodeTrace, MissionMode, TraceRow, WorldState};

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error("invalid abstraction config: {0}")]
    Config(String),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid DTMC: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbstractionConfig {
    /// Number of positive-energy bins. Bin 0 is reserved for `e = 0`.
    pub energy_bins: u32,
    pub energy_bin_width: u32,
    /// Increasing distance thresholds; `k` thresholds give `k + 1` bins.
    pub distance_thresholds: Vec<f64>,
}

impl Default for AbstractionConfig {
    fn default() -> Self {
        Self {
            energy_bins: 10,
            energy_bin_width: 25,
            distance_thresholds: vec![0.3, 1.0],
        }
    }
}

impl AbstractionConfig {
    pub fn validate(&self) -> Result<(), AbstractionError> {
        if self.energy_bins == 0 || self.energy_bin_width == 0 {
            return Err(AbstractionError::Config(
                "energy_bins and energy_bin_width must be positive".into(),
            ));
        }
        let t = &self.distance_thresholds;
        if t.iter().any(|v| !(v.is_finite() && *v > 0.0)) || t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AbstractionError::Config(format!(
                "distance thresholds must be positive and strictly increasing, got {t:?}"
            )));
        }
        if t.len() > u8::MAX as usize - 1 {
            return Err(AbstractionError::Config(
                "too many distance thresholds".into(),
            ));
        }
        Ok(())
    }

    /// `0` for an empty battery, then `ceil(e / width)` capped at `energy_bins`.
    pub fn energy_bin(&self, energy: u32) -> u32 {
        if energy == 0 {
            0
        } else {
            energy.div_ceil(self.energy_bin_width).min(self.energy_bins)
        }
    }

    /// Number of thresholds at or below `d`; a missing distance is the far bin.
    pub fn distance_bin(&self, d: Option<f64>) -> u8 {
        match d {
            Some(d) => self.distance_thresholds.iter().filter(|t| **t <= d).count() as u8,
            None => self.distance_thresholds.len() as u8,
        }
    }

    pub fn distance_bin_count(&self) -> usize {
        self.distance_thresholds.len() + 1
    }

    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AbstractState {
    pub m: MissionMode,
    pub energy_bin: u32,
    pub d_obstacle_bin: u8,
    pub d_unsafe_bin: u8,
}

impl AbstractState {
    pub fn new(m: MissionMode, energy_bin: u32, d_obstacle_bin: u8, d_unsafe_bin: u8) -> Self {
        Self {
            m,
            energy_bin,
            d_obstacle_bin,
            d_unsafe_bin,
        }
    }

    /// Goal, collision, or an empty battery.
    pub fn is_terminal(&self) -> bool {
        self.m.is_terminal() || self.energy_bin == 0
    }

    /// Value of a named coordinate, as used by property atoms.
    pub fn field(&self, name: &str) -> Option<i64> {
        match name {
            "m" => Some(self.m.code() as i64),
            "e" => Some(self.energy_bin as i64),
            "do" => Some(self.d_obstacle_bin as i64),
            "du" => Some(self.d_unsafe_bin as i64),
            _ => None,
        }
    }

    pub const FIELDS: [&'static str; 4] = ["m", "e", "do", "du"];
}

pub fn abstract_state(ws: &WorldState, cfg: &AbstractionConfig) -> AbstractState {
    AbstractState {
        m: ws.mode,
        energy_bin: cfg.energy_bin(ws.energy),
        d_obstacle_bin: cfg.distance_bin(Some(ws.distance_to_obstacle())),
        d_unsafe_bin: cfg.distance_bin(ws.nearest_unsafe_distance()),
    }
}

pub fn abstract_row(
    row: &TraceRow,
    cfg: &AbstractionConfig,
) -> Result<AbstractState, AbstractionError> {
    let m = MissionMode::from_code(row.m).ok_or_else(|| {
        AbstractionError::MalformedTrace(format!("step {}: unknown mode code {}", row.t, row.m))
    })?;
    Ok(AbstractState {
        m,
        energy_bin: cfg.energy_bin(row.e),
        d_obstacle_bin: cfg.distance_bin(Some(row.d_obstacle)),
        d_unsafe_bin: cfg.distance_bin(row.d_unsafe_min),
    })
}

/// Checks that only the last state is terminal.
fn check_sequence(seq: &[AbstractState]) -> Result<(), AbstractionError> {
    let Some(last) = seq.last() else {
        return Err(AbstractionError::MalformedTrace("empty trace".into()));
    };
    if !last.is_terminal() {
        return Err(AbstractionError::MalformedTrace(format!(
            "trace ends in non-terminal state {last:?}"
        )));
    }
    if let Some(i) = seq[..seq.len() - 1]
        .iter()
        .position(AbstractState::is_terminal)
    {
        return Err(AbstractionError::MalformedTrace(format!(
            "terminal state {:?} at step {i} before the end of the trace",
            seq[i]
        )));
    }
    Ok(())
}

pub fn abstract_trace(
    trace: &EpisodeTrace,
    cfg: &AbstractionConfig,
) -> Result<Vec<AbstractState>, AbstractionError> {
    let seq: Vec<_> = trace
        .steps
        .iter()
        .map(|s| abstract_state(&s.state, cfg))
        .collect();
    check_sequence(&seq)?;
    Ok(seq)
}

pub fn abstract_rows(
    rows: &[TraceRow],
    cfg: &AbstractionConfig,
) -> Result<Vec<AbstractState>, AbstractionError> {
    let seq = rows
        .iter()
        .map(|r| abstract_row(r, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    check_sequence(&seq)?;
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{run_episode, SpawnMode, Vec2, World, WorldConfig, ZeroPolicy};
    use proptest::prelude::*;

    fn far_state() -> WorldState {
        WorldState {
            position: Vec2::new(0.0, 0.0),
            heading: 0.0,
            goal: Vec2::new(1.5, 0.0),
            unsafe_zones: vec![Vec2::new(-1.2, 0.0), Vec2::new(0.0, 1.1)],
            obstacle: Vec2::new(0.0, -1.0),
            energy: 250,
            step_count: 0,
            unsafe_time: 0,
            mode: MissionMode::Travelling,
        }
    }

    #[test]
    fn full_energy_far_from_everything() {
        let s = abstract_state(&far_state(), &AbstractionConfig::default());
        assert_eq!(s, AbstractState::new(MissionMode::Travelling, 10, 2, 2));
        assert!(!s.is_terminal());
    }

    #[test]
    fn bins_match_hand_computation() {
        let cfg = AbstractionConfig::default();
        let expected = [
            (0, 0),
            (1, 1),
            (25, 1),
            (26, 2),
            (125, 5),
            (249, 10),
            (250, 10),
            (400, 10),
        ];
        for (e, b) in expected {
            assert_eq!(cfg.energy_bin(e), b, "e={e}");
        }
        assert_eq!(cfg.distance_bin(Some(0.0)), 0);
        assert_eq!(cfg.distance_bin(Some(0.299)), 0);
        assert_eq!(cfg.distance_bin(Some(0.3)), 1);
        assert_eq!(cfg.distance_bin(Some(0.999)), 1);
        assert_eq!(cfg.distance_bin(Some(1.0)), 2);
        assert_eq!(cfg.distance_bin(None), 2);
    }

    #[test]
    fn terminal_by_mode_or_energy() {
        let mut ws = far_state();
        ws.mode = MissionMode::Collided;
        ws.obstacle = Vec2::new(0.05, 0.0);
        let s = abstract_state(&ws, &AbstractionConfig::default());
        assert_eq!(s.m, MissionMode::Collided);
        assert_eq!(s.d_obstacle_bin, 0);
        assert!(s.is_terminal());
        let mut ws = far_state();
        ws.energy = 0;
        ws.mode = MissionMode::InUnsafeZone;
        assert!(abstract_state(&ws, &AbstractionConfig::default()).is_terminal());
    }

    #[test]
    fn energy_depletion_trace_has_251_states() {
        let world = World::new(WorldConfig::default()).unwrap();
        let trace = run_episode(&world, &mut ZeroPolicy, 0, SpawnMode::Random).unwrap();
        let seq = abstract_trace(&trace, &AbstractionConfig::default()).unwrap();
        assert_eq!(seq.len(), 251);
        assert!(seq.last().unwrap().is_terminal());
        // Stationary vehicle: consecutive states repeat, and are kept.
        assert_eq!(seq[0].d_obstacle_bin, seq[1].d_obstacle_bin);
        assert_eq!(seq[0].energy_bin, seq[1].energy_bin);
        let rows = trace.rows(&world);
        assert_eq!(
            abstract_rows(&rows, &AbstractionConfig::default()).unwrap(),
            seq
        );
    }

    #[test]
    fn single_transition_goal_trace() {
        let seq = [
            AbstractState::new(MissionMode::Travelling, 10, 2, 2),
            AbstractState::new(MissionMode::GoalReached, 10, 2, 2),
        ];
        assert!(check_sequence(&seq).is_ok());
    }

    #[test]
    fn non_terminal_ending_rejected() {
        let seq = [AbstractState::new(MissionMode::Travelling, 10, 2, 2)];
        assert!(matches!(
            check_sequence(&seq),
            Err(AbstractionError::MalformedTrace(_))
        ));
        assert!(check_sequence(&[]).is_err());
        let early = [
            AbstractState::new(MissionMode::Collided, 10, 0, 2),
            AbstractState::new(MissionMode::GoalReached, 10, 2, 2),
        ];
        assert!(check_sequence(&early).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AbstractionConfig::default().validate().is_ok());
        let bad = AbstractionConfig {
            distance_thresholds: vec![1.0, 0.3],
            ..AbstractionConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AbstractionConfig {
            energy_bins: 0,
            ..AbstractionConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn bins_partition_and_are_monotone(e1 in 0u32..400, e2 in 0u32..400, d1 in 0.0f64..5.0, d2 in 0.0f64..5.0) {
            let cfg = AbstractionConfig::default();
            let (elo, ehi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(cfg.energy_bin(elo) <= cfg.energy_bin(ehi));
            prop_assert!(cfg.energy_bin(ehi) <= cfg.energy_bins);
            prop_assert_eq!(cfg.energy_bin(elo) == 0, elo == 0);
            let (dlo, dhi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(cfg.distance_bin(Some(dlo)) <= cfg.distance_bin(Some(dhi)));
            prop_assert!((cfg.distance_bin(Some(dhi)) as usize) < cfg.distance_bin_count());
        }
    }
}
