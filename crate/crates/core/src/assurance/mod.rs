//! Assurance evidence: a hash-chained artefact ledger enforcing stage
//! input/output dependencies, the erroneous-behaviour log, and the result
//! reports for model learning and model verification.

mod erroneous;
mod ledger;
mod report;

pub use erroneous::{
    log_erroneous, ErroneousBehaviourEntry, ViolationKind, WindowStep, DEFAULT_WINDOW,
    UNSAFE_TIME_LIMIT,
};
pub use ledger::{
    sha256_file, verify_chain, ArtifactRecord, ChainFailure, Ledger, ParentRef, RecordBody,
    VerificationReport, LEDGER_FILE,
};
pub use report::{
    generate_report, render_stage4, render_stage5, ModelCheckingEntry, ModelCheckingResults,
    StageReports,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssuranceError {
    #[error(
        "{artefact} cannot be recorded: missing input artefact(s) {}",
        join(missing)
    )]
    Dependency {
        artefact: ArtefactId,
        missing: Vec<ArtefactId>,
    },
    #[error("missing artefact {artefact}{}", label.as_ref().map(|l| format!("[{l}]")).unwrap_or_default())]
    Missing {
        artefact: ArtefactId,
        label: Option<String>,
    },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(ids: &[ArtefactId]) -> String {
    ids.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Artefact identifiers of the six assurance stages. Letters not listed
/// (F, G, I to K, Q to T, W, Y, BB, CC) are unused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArtefactId {
    A,
    B,
    C,
    D,
    E,
    H,
    L,
    M,
    N,
    O,
    P,
    U,
    V,
    X,
    Z,
    AA,
    DD,
    EE,
    FF,
}

impl ArtefactId {
    pub const ALL: [ArtefactId; 19] = [
        ArtefactId::A,
        ArtefactId::B,
        ArtefactId::C,
        ArtefactId::D,
        ArtefactId::E,
        ArtefactId::H,
        ArtefactId::L,
        ArtefactId::M,
        ArtefactId::N,
        ArtefactId::O,
        ArtefactId::P,
        ArtefactId::U,
        ArtefactId::V,
        ArtefactId::X,
        ArtefactId::Z,
        ArtefactId::AA,
        ArtefactId::DD,
        ArtefactId::EE,
        ArtefactId::FF,
    ];

    /// Stage that produces the artefact. A to D are the scoping inputs and
    /// are committed in stage 1; EE is committed alongside stage 6.
    pub fn stage(self) -> u8 {
        use ArtefactId::*;
        match self {
            A | B | C | D | E => 1,
            H => 2,
            L | M | N | O | P => 3,
            U | V | X => 4,
            Z | AA => 5,
            DD | EE | FF => 6,
        }
    }

    pub fn title(self) -> &'static str {
        use ArtefactId::*;
        match self {
            A => "System safety requirements",
            B => "Description of operating environment of system",
            C => "System description",
            D => "RL component description",
            E => "Safety requirements allocated to RL component",
            H => "RL safety requirements",
            L => "Data requirements",
            M => "Data requirements justification report",
            N => "Training plan",
            O => "Internal test plan",
            P => "Verification plan",
            U => "RL model development log",
            V => "RL model",
            X => "Internal test results",
            Z => "RL verification results",
            AA => "Verification log",
            DD => "Erroneous behaviour log",
            EE => "Operational scenarios",
            FF => "Integration testing results",
        }
    }

    /// Artefacts that must be committed before this one.
    pub fn required_inputs(self) -> &'static [ArtefactId] {
        use ArtefactId::*;
        match self {
            A | B | C | D => &[],
            E => &[A, B, C, D],
            H => &[E],
            L | M | N | O | P => &[H],
            U | V | X => &[H, N, O],
            Z | AA => &[H, P, V],
            EE => &[A, B, C],
            DD | FF => &[A, B, C, V, EE],
        }
    }
}

impl fmt::Display for ArtefactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ArtefactId {
    type Err = AssuranceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArtefactId::ALL
            .into_iter()
            .find(|id| id.to_string() == s)
            .ok_or_else(|| AssuranceError::Usage(format!("unknown artefact id {s:?}")))
    }
}
