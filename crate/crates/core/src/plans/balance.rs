use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::env::{SpawnMode, Vec2, World, WorldConfig};

pub const MIN_BALANCE_RESETS: usize = 1_000;
pub const BALANCE_GRID: usize = 4;
pub const BALANCE_TOLERANCE: f64 = 0.25;

/// Placement counts of one object class over a square grid covering the
/// arena, row-major from the lower-left cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub class: String,
    /// Empty when the class has no objects.
    pub counts: Vec<u64>,
    pub expected_per_cell: f64,
    /// max over cells of |count - expected| / expected.
    pub max_relative_deviation: Option<f64>,
    pub flagged_cells: Vec<usize>,
}

impl ClassHistogram {
    fn new(class: &str, counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Self {
                class: class.to_string(),
                counts: Vec::new(),
                expected_per_cell: 0.0,
                max_relative_deviation: None,
                flagged_cells: Vec::new(),
            };
        }
        let expected = total as f64 / counts.len() as f64;
        let deviations: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64 - expected).abs() / expected)
            .collect();
        Self {
            class: class.to_string(),
            expected_per_cell: expected,
            max_relative_deviation: deviations.iter().copied().reduce(f64::max),
            flagged_cells: deviations
                .iter()
                .enumerate()
                .filter(|(_, d)| **d > BALANCE_TOLERANCE)
                .map(|(i, _)| i)
                .collect(),
            counts,
        }
    }

    pub fn is_balanced(&self) -> bool {
        self.flagged_cells.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub n_resets: usize,
    pub seed: u64,
    pub grid: usize,
    pub tolerance: f64,
    pub classes: Vec<ClassHistogram>,
}

impl BalanceReport {
    pub fn is_balanced(&self) -> bool {
        self.classes.iter().all(ClassHistogram::is_balanced)
    }

    pub fn class(&self, name: &str) -> Option<&ClassHistogram> {
        self.classes.iter().find(|c| c.class == name)
    }
}

fn cell(p: Vec2, half: f64) -> usize {
    let idx = |v: f64| {
        let f = (v + half) / (2.0 * half) * BALANCE_GRID as f64;
        (f.floor().max(0.0) as usize).min(BALANCE_GRID - 1)
    };
    idx(p.y) * BALANCE_GRID + idx(p.x)
}

/// Histograms of random-reset placements for the vehicle, goal, obstacle and
/// unsafe zones, each checked against a uniform expectation.
pub fn audit_scenario_balance(
    config: &WorldConfig,
    n_resets: usize,
    seed: u64,
) -> Result<BalanceReport, PlanError> {
    if n_resets < MIN_BALANCE_RESETS {
        return Err(PlanError::Usage(format!(
            "balance audit needs at least {MIN_BALANCE_RESETS} resets, got {n_resets}"
        )));
    }
    let world = World::new(config.clone())?;
    let half = config.arena_half_extent;
    let cells = BALANCE_GRID * BALANCE_GRID;
    let mut vehicle = vec![0u64; cells];
    let mut goal = vec![0u64; cells];
    let mut obstacle = vec![0u64; cells];
    let mut zones = vec![0u64; cells];
    for i in 0..n_resets {
        let s = world.reset(seed.wrapping_add(i as u64), SpawnMode::Random)?;
        vehicle[cell(s.position, half)] += 1;
        goal[cell(s.goal, half)] += 1;
        obstacle[cell(s.obstacle, half)] += 1;
        for &z in &s.unsafe_zones {
            zones[cell(z, half)] += 1;
        }
    }
    Ok(BalanceReport {
        n_resets,
        seed,
        grid: BALANCE_GRID,
        tolerance: BALANCE_TOLERANCE,
        classes: vec![
            ClassHistogram::new("vehicle", vehicle),
            ClassHistogram::new("goal", goal),
            ClassHistogram::new("obstacle", obstacle),
            ClassHistogram::new("unsafe_zone", zones),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_placement_is_balanced() {
        let report = audit_scenario_balance(&WorldConfig::default(), 10_000, 17).unwrap();
        for c in &report.classes {
            assert_eq!(
                c.counts.iter().sum::<u64>() as f64,
                c.expected_per_cell * 16.0
            );
            assert!(c.max_relative_deviation.unwrap() < 0.25, "{c:?}");
        }
        assert!(report.is_balanced());
        assert_eq!(
            report
                .class("unsafe_zone")
                .unwrap()
                .counts
                .iter()
                .sum::<u64>(),
            80_000
        );
    }

    #[test]
    fn too_few_resets_rejected() {
        assert!(matches!(
            audit_scenario_balance(&WorldConfig::default(), 999, 0),
            Err(PlanError::Usage(_))
        ));
    }

    #[test]
    fn no_unsafe_zones_gives_empty_histogram() {
        let cfg = WorldConfig {
            n_unsafe_zones: 0,
            ..WorldConfig::default()
        };
        let report = audit_scenario_balance(&cfg, 1_000, 3).unwrap();
        let z = report.class("unsafe_zone").unwrap();
        assert!(z.counts.is_empty() && z.max_relative_deviation.is_none() && z.is_balanced());
        assert_eq!(
            report.class("goal").unwrap().counts.iter().sum::<u64>(),
            1_000
        );
    }

    #[test]
    fn skewed_counts_are_flagged() {
        let mut counts = vec![100u64; 16];
        counts[5] = 200;
        let h = ClassHistogram::new("x", counts);
        assert_eq!(h.flagged_cells, vec![5]);
        assert!((h.max_relative_deviation.unwrap() - (200.0 - 106.25) / 106.25).abs() < 1e-12);
    }

    #[test]
    fn grid_cells_cover_the_arena() {
        assert_eq!(cell(Vec2::new(-2.0, -2.0), 2.0), 0);
        assert_eq!(cell(Vec2::new(2.0, 2.0), 2.0), 15);
        assert_eq!(cell(Vec2::new(0.1, -1.9), 2.0), 2);
    }
}
