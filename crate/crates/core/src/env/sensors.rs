use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Vec2, WorldState};

pub const BEAMS_PER_ARRAY: usize = 16;
pub const OBSERVATION_DIM: usize = 3 * BEAMS_PER_ARRAY;

const SECTOR_WIDTH: f64 = 2.0 * PI / BEAMS_PER_ARRAY as f64;

/// Pseudo-lidar readings, one 16-beam array per object class. A reading is
/// `1 - d / max_range` for the nearest object in the beam's sector, and 0 when
/// nothing is in range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub goal: [f64; BEAMS_PER_ARRAY],
    pub unsafe_zones: [f64; BEAMS_PER_ARRAY],
    pub obstacle: [f64; BEAMS_PER_ARRAY],
}

impl Observation {
    pub fn zeros() -> Self {
        Self {
            goal: [0.0; BEAMS_PER_ARRAY],
            unsafe_zones: [0.0; BEAMS_PER_ARRAY],
            obstacle: [0.0; BEAMS_PER_ARRAY],
        }
    }

    /// Flattened as goal, unsafe, obstacle.
    pub fn to_vec(&self) -> Vec<f64> {
        self.values().collect()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.goal
            .iter()
            .chain(&self.unsafe_zones)
            .chain(&self.obstacle)
            .copied()
    }

    pub fn from_slice(values: &[f64]) -> Option<Self> {
        if values.len() != OBSERVATION_DIM {
            return None;
        }
        let mut obs = Self::zeros();
        obs.goal.copy_from_slice(&values[..16]);
        obs.unsafe_zones.copy_from_slice(&values[16..32]);
        obs.obstacle.copy_from_slice(&values[32..]);
        Some(obs)
    }
}

/// Beam index whose sector contains the bearing of `target` relative to the
/// vehicle heading. Sectors are `[k·22.5°, (k+1)·22.5°)` counter-clockwise.
pub(crate) fn beam_index(origin: Vec2, heading: f64, target: Vec2) -> usize {
    let bearing = ((target.y - origin.y).atan2(target.x - origin.x) - heading).rem_euclid(2.0 * PI);
    ((bearing / SECTOR_WIDTH) as usize).min(BEAMS_PER_ARRAY - 1)
}

fn fill(array: &mut [f64; BEAMS_PER_ARRAY], state: &WorldState, targets: &[Vec2], range: f64) {
    for &target in targets {
        let d = state.position.distance_to(target);
        let reading = (1.0 - d / range).max(0.0);
        let beam = beam_index(state.position, state.heading, target);
        if reading > array[beam] {
            array[beam] = reading;
        }
    }
}

pub(crate) fn observe(state: &WorldState, max_range: f64) -> Observation {
    let mut obs = Observation::zeros();
    fill(&mut obs.goal, state, &[state.goal], max_range);
    fill(&mut obs.unsafe_zones, state, &state.unsafe_zones, max_range);
    fill(&mut obs.obstacle, state, &[state.obstacle], max_range);
    obs
}
