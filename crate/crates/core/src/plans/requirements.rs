use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AggregateReport, PlanError};

pub const SR1_MIN_GOAL_RATE: f64 = 0.6;
pub const SR2_MAX_UNSAFE_TIME: f64 = 20.0;
pub const SR3_MAX_COLLISION_RATE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Requirement {
    SR1,
    SR2,
    SR3,
}

impl Requirement {
    pub const ALL: [Requirement; 3] = [Requirement::SR1, Requirement::SR2, Requirement::SR3];

    pub fn threshold(self) -> f64 {
        match self {
            Requirement::SR1 => SR1_MIN_GOAL_RATE,
            Requirement::SR2 => SR2_MAX_UNSAFE_TIME,
            Requirement::SR3 => SR3_MAX_COLLISION_RATE,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Requirement::SR1 => "goal reached before energy runs out with probability >= 0.6",
            Requirement::SR2 => "cumulative time in unsafe zones <= 20 steps per mission",
            Requirement::SR3 => "collision with the obstacle with probability <= 0.1",
        }
    }

    /// Whether `measured` satisfies the requirement's threshold.
    pub fn holds(self, measured: f64) -> bool {
        match self {
            Requirement::SR1 => measured >= self.threshold(),
            Requirement::SR2 | Requirement::SR3 => measured <= self.threshold(),
        }
    }

    fn comparator(self) -> &'static str {
        match self {
            Requirement::SR1 => ">=",
            Requirement::SR2 | Requirement::SR3 => "<=",
        }
    }
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// The metrics a verdict is computed from. Missing values are allowed here
/// so that partial evidence can be detected rather than defaulted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Reference to the report the metrics came from.
    pub source: String,
    pub goal_rate: Option<f64>,
    pub mean_unsafe_time: Option<f64>,
    pub unsafe_exceedance_rate: Option<f64>,
    pub collision_rate: Option<f64>,
}

impl From<&AggregateReport> for MetricSummary {
    fn from(r: &AggregateReport) -> Self {
        Self {
            source: r.regime.clone(),
            goal_rate: Some(r.goal_rate),
            mean_unsafe_time: Some(r.mean_unsafe_time),
            unsafe_exceedance_rate: Some(r.unsafe_exceedance_rate),
            collision_rate: Some(r.collision_rate),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementVerdict {
    pub id: Requirement,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
    pub evidence: String,
    /// For SR2 only: fraction of trials whose own unsafe time exceeded 20.
    pub exceedance_rate: Option<f64>,
}

impl fmt::Display for RequirementVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] measured {:.4} {} {} -> {}",
            self.id,
            self.evidence,
            self.measured,
            self.id.comparator(),
            self.threshold,
            if self.pass { "PASS" } else { "FAIL" }
        )?;
        if let Some(rate) = self.exceedance_rate {
            write!(f, " (per-trial exceedance rate {rate:.4})")?;
        }
        Ok(())
    }
}

/// SR1 to SR3 verdicts for every report, in input order.
pub fn evaluate_requirements(
    reports: &[MetricSummary],
) -> Result<Vec<RequirementVerdict>, PlanError> {
    if reports.is_empty() {
        return Err(PlanError::Usage("no reports to evaluate".into()));
    }
    let mut verdicts = Vec::with_capacity(reports.len() * 3);
    for report in reports {
        for id in Requirement::ALL {
            let (metric, name) = match id {
                Requirement::SR1 => (report.goal_rate, "goal_rate"),
                Requirement::SR2 => (report.mean_unsafe_time, "mean_unsafe_time"),
                Requirement::SR3 => (report.collision_rate, "collision_rate"),
            };
            let measured = metric.filter(|v| v.is_finite()).ok_or_else(|| {
                PlanError::IncompleteEvidence(format!("{}: {name} missing for {id}", report.source))
            })?;
            verdicts.push(RequirementVerdict {
                id,
                measured,
                threshold: id.threshold(),
                pass: id.holds(measured),
                evidence: report.source.clone(),
                exceedance_rate: if id == Requirement::SR2 {
                    report.unsafe_exceedance_rate
                } else {
                    None
                },
            });
        }
    }
    Ok(verdicts)
}
