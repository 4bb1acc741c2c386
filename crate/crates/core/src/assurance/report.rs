use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ArtefactId, ArtifactRecord, AssuranceError, Ledger};
use crate::pctl::CheckResult;
use crate::plans::{evaluate_requirements, AggregateReport, MetricSummary, RequirementVerdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckingEntry {
    pub name: String,
    pub formula: String,
    /// `None` when the value is infinite.
    pub value: Option<f64>,
    /// `None` for `=?` queries.
    pub verdict: Option<bool>,
    pub method: String,
}

impl ModelCheckingEntry {
    pub fn from_result(name: &str, formula: &str, result: &CheckResult) -> Self {
        Self {
            name: name.to_string(),
            formula: formula.to_string(),
            value: result.value.is_finite().then_some(result.value),
            verdict: result.verdict,
            method: result.method.to_string(),
        }
    }
}

/// Property results over the learned DTMC. The entries named `C1`, `C2` and
/// `R0` fill the goal, collision and unsafe-time rows of the stage 5 table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckingResults {
    pub dtmc_states: usize,
    pub dtmc_transitions: usize,
    pub config_hash: String,
    pub entries: Vec<ModelCheckingEntry>,
}

impl ModelCheckingResults {
    pub fn entry(&self, name: &str) -> Option<&ModelCheckingEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn value(&self, name: &str) -> Option<f64> {
        self.entry(name).and_then(|e| e.value)
    }

    /// Metrics for requirement verdicts; `None` unless C1, C2 and R0 all
    /// have finite values.
    pub fn metric_summary(&self) -> Option<MetricSummary> {
        let s = MetricSummary {
            source: "model-checking".into(),
            goal_rate: self.value("C1"),
            mean_unsafe_time: self.value("R0"),
            unsafe_exceedance_rate: None,
            collision_rate: self.value("C2"),
        };
        (s.goal_rate.is_some() && s.mean_unsafe_time.is_some() && s.collision_rate.is_some())
            .then_some(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReports {
    pub stage4: String,
    /// Present once verification results (Z) are committed.
    pub stage5: Option<String>,
    pub verdicts: Vec<RequirementVerdict>,
}

impl StageReports {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{:.2}", 100.0 * v))
}

fn num(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.2}"))
}

fn table(out: &mut String, columns: &[&str], rows: [(&str, Vec<String>); 4]) {
    let _ = writeln!(out, "| Metric | {} |", columns.join(" | "));
    let _ = writeln!(out, "|---|{}", "---:|".repeat(columns.len()));
    for (label, cells) in rows {
        let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
    }
}

fn verdict_section(out: &mut String, verdicts: &[RequirementVerdict]) {
    let _ = writeln!(out, "\n## Requirement verdicts\n");
    for v in verdicts {
        let _ = writeln!(out, "- {v}");
    }
}

pub fn render_stage4(internal: &AggregateReport, verdicts: &[RequirementVerdict]) -> String {
    let mut out = String::from("# Stage 4: model learning\n\n");
    table(
        &mut out,
        &["Internal test"],
        [
            (
                "Goal reached with e>0 (%)",
                vec![pct(Some(internal.goal_rate))],
            ),
            (
                "Mean energy on success",
                vec![num(internal.mean_energy_on_success)],
            ),
            (
                "Mean unsafe time (steps)",
                vec![num(Some(internal.mean_unsafe_time))],
            ),
            ("Collision (%)", vec![pct(Some(internal.collision_rate))]),
        ],
    );
    let _ = writeln!(
        out,
        "\nTrials: {}. Trials with unsafe time above 20 steps: {}%.",
        internal.n_trials,
        pct(Some(internal.unsafe_exceedance_rate))
    );
    verdict_section(&mut out, verdicts);
    out
}

pub fn render_stage5(
    general: &AggregateReport,
    targeted: &AggregateReport,
    checking: &ModelCheckingResults,
    verdicts: &[RequirementVerdict],
) -> String {
    let mut out = String::from("# Stage 5: model verification\n\n");
    table(
        &mut out,
        &["General", "Targeted", "Model checking"],
        [
            (
                "Goal reached with e>0 (%)",
                vec![
                    pct(Some(general.goal_rate)),
                    pct(Some(targeted.goal_rate)),
                    pct(checking.value("C1")),
                ],
            ),
            (
                "Mean energy on success",
                vec![
                    num(general.mean_energy_on_success),
                    num(targeted.mean_energy_on_success),
                    "n/a".into(),
                ],
            ),
            (
                "Mean unsafe time (steps)",
                vec![
                    num(Some(general.mean_unsafe_time)),
                    num(Some(targeted.mean_unsafe_time)),
                    num(checking.value("R0")),
                ],
            ),
            (
                "Collision (%)",
                vec![
                    pct(Some(general.collision_rate)),
                    pct(Some(targeted.collision_rate)),
                    pct(checking.value("C2")),
                ],
            ),
        ],
    );
    let _ = writeln!(
        out,
        "\nTrials: general {}, targeted {}. DTMC: {} states, {} transitions (abstraction {}).",
        general.n_trials,
        targeted.n_trials,
        checking.dtmc_states,
        checking.dtmc_transitions,
        checking.config_hash
    );
    let _ = writeln!(out, "\n## Properties\n");
    for e in &checking.entries {
        let verdict = match e.verdict {
            Some(true) => " -> PASS",
            Some(false) => " -> FAIL",
            None => "",
        };
        let value = e.value.map_or("infinity".into(), |v| format!("{v:.6}"));
        let _ = writeln!(
            out,
            "- {}: `{}` = {value}{verdict} ({})",
            e.name, e.formula, e.method
        );
    }
    verdict_section(&mut out, verdicts);
    out
}

fn load<T: DeserializeOwned>(
    ledger: &Ledger,
    record: &ArtifactRecord,
) -> Result<T, AssuranceError> {
    let bytes = ledger.read_payload(record)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        AssuranceError::Integrity(format!(
            "payload of {}[{}] seq {} is not a valid report: {e}",
            record.body.id, record.body.label, record.body.seq
        ))
    })
}

fn evidence_line(out: &mut String, records: &[&ArtifactRecord]) {
    let _ = writeln!(out, "\n## Evidence\n");
    for r in records {
        let _ = writeln!(
            out,
            "- {}[{}] v{} seq {} sha256 {}",
            r.body.id, r.body.label, r.body.version, r.body.seq, r.body.sha256
        );
    }
}

fn verdicts(summaries: &[MetricSummary]) -> Result<Vec<RequirementVerdict>, AssuranceError> {
    evaluate_requirements(summaries).map_err(|e| AssuranceError::Integrity(e.to_string()))
}

/// Builds the stage 4 report from the internal test results (X[internal])
/// and, when verification results exist, the stage 5 report from
/// Z[general], Z[targeted] and Z[model-checking]. Output depends only on
/// the ledger contents.
pub fn generate_report(ledger: &Ledger) -> Result<StageReports, AssuranceError> {
    let x = ledger.require(ArtefactId::X, Some("internal"))?;
    let internal: AggregateReport = load(ledger, x)?;
    let v4 = verdicts(&[MetricSummary::from(&internal)])?;
    let mut stage4 = render_stage4(&internal, &v4);
    evidence_line(&mut stage4, &[x]);
    let mut all = v4;

    let stage5 = if ledger.has(ArtefactId::Z) {
        let g = ledger.require(ArtefactId::Z, Some("general"))?;
        let t = ledger.require(ArtefactId::Z, Some("targeted"))?;
        let c = ledger.require(ArtefactId::Z, Some("model-checking"))?;
        let general: AggregateReport = load(ledger, g)?;
        let targeted: AggregateReport = load(ledger, t)?;
        let checking: ModelCheckingResults = load(ledger, c)?;
        let mut summaries = vec![
            MetricSummary::from(&general),
            MetricSummary::from(&targeted),
        ];
        summaries.extend(checking.metric_summary());
        let v5 = verdicts(&summaries)?;
        let mut text = render_stage5(&general, &targeted, &checking, &v5);
        evidence_line(&mut text, &[g, t, c]);
        all.extend(v5);
        Some(text)
    } else {
        None
    };
    Ok(StageReports {
        stage4,
        stage5,
        verdicts: all,
    })
}
