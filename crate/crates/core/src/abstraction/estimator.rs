use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use super::{abstract_rows, AbstractState, AbstractionConfig, AbstractionError, Dtmc};
use crate::env::{MissionMode, TraceBlocks};

const FILE_CHUNK: usize = 512;

/// Transition counts accumulated from abstract state sequences.
///
/// Counts are integers, so merging estimators built from disjoint trace
/// subsets gives the same result in any order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DtmcEstimator {
    counts: BTreeMap<AbstractState, BTreeMap<AbstractState, u64>>,
    initial: BTreeMap<AbstractState, u64>,
    terminals: BTreeMap<AbstractState, u64>,
    n_traces: u64,
}

impl DtmcEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_traces(&self) -> u64 {
        self.n_traces
    }

    /// Adds one abstracted trace. The sequence must be non-empty and end in
    /// its only terminal state.
    pub fn add_sequence(&mut self, seq: &[AbstractState]) -> Result<(), AbstractionError> {
        super::check_sequence(seq)?;
        *self.initial.entry(seq[0]).or_default() += 1;
        for w in seq.windows(2) {
            *self
                .counts
                .entry(w[0])
                .or_default()
                .entry(w[1])
                .or_default() += 1;
        }
        *self.terminals.entry(*seq.last().unwrap()).or_default() += 1;
        self.n_traces += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: DtmcEstimator) {
        for (s, row) in other.counts {
            let mine = self.counts.entry(s).or_default();
            for (t, c) in row {
                *mine.entry(t).or_default() += c;
            }
        }
        for (s, c) in other.initial {
            *self.initial.entry(s).or_default() += c;
        }
        for (s, c) in other.terminals {
            *self.terminals.entry(s).or_default() += c;
        }
        self.n_traces += other.n_traces;
    }

    /// Normalises counts into maximum-likelihood transition probabilities.
    /// States are indexed in their natural order; only visited states appear.
    pub fn finish(&self, config_hash: &str) -> Result<Dtmc, AbstractionError> {
        if self.n_traces == 0 {
            return Err(AbstractionError::Usage(
                "cannot estimate a DTMC from zero traces".into(),
            ));
        }
        let mut visited: Vec<AbstractState> = self
            .counts
            .iter()
            .flat_map(|(s, row)| std::iter::once(s).chain(row.keys()))
            .chain(self.initial.keys())
            .chain(self.terminals.keys())
            .copied()
            .collect();
        visited.sort();
        visited.dedup();
        let index: BTreeMap<AbstractState, usize> =
            visited.iter().enumerate().map(|(i, s)| (*s, i)).collect();

        let n = visited.len();
        let mut rows = Vec::with_capacity(n);
        let mut support = Vec::with_capacity(n);
        for (i, s) in visited.iter().enumerate() {
            match self.counts.get(s) {
                Some(row) if !s.is_terminal() => {
                    let total: u64 = row.values().sum();
                    rows.push(
                        row.iter()
                            .map(|(t, c)| (index[t], *c as f64 / total as f64))
                            .collect(),
                    );
                    support.push(total);
                }
                _ => {
                    rows.push(vec![(i, 1.0)]);
                    support.push(0);
                }
            }
        }
        let initial = visited
            .iter()
            .map(|s| *self.initial.get(s).unwrap_or(&0) as f64 / self.n_traces as f64)
            .collect();
        let reward = visited
            .iter()
            .map(|s| {
                if s.m == MissionMode::InUnsafeZone {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Dtmc::new(
            visited,
            initial,
            rows,
            reward,
            support,
            config_hash.to_string(),
        )
    }
}

/// Maximum-likelihood DTMC from in-memory abstract sequences.
pub fn estimate_dtmc(
    sequences: &[Vec<AbstractState>],
    config_hash: &str,
) -> Result<Dtmc, AbstractionError> {
    let mut est = DtmcEstimator::new();
    for seq in sequences {
        est.add_sequence(seq)?;
    }
    est.finish(config_hash)
}

/// Streams a trace file, abstracting blocks in parallel chunks. The chain's
/// config hash combines the traces' world config hash with the abstraction's.
pub fn estimate_dtmc_from_file(
    path: &Path,
    cfg: &AbstractionConfig,
) -> Result<Dtmc, AbstractionError> {
    cfg.validate()?;
    let mut blocks = TraceBlocks::open(path)?;
    let mut est = DtmcEstimator::new();
    let mut world_hash: Option<String> = None;
    loop {
        let chunk: Vec<_> = blocks.by_ref().take(FILE_CHUNK).collect::<Result<_, _>>()?;
        if chunk.is_empty() {
            break;
        }
        for b in &chunk {
            match &world_hash {
                None => world_hash = Some(b.header.config_hash.clone()),
                Some(h) if *h != b.header.config_hash => {
                    return Err(AbstractionError::MalformedTrace(format!(
                        "trace {} has config hash {}, expected {h}",
                        b.header.seed, b.header.config_hash
                    )));
                }
                Some(_) => {}
            }
        }
        let partial = chunk
            .par_iter()
            .map(|b| {
                let seq = abstract_rows(&b.rows, cfg).map_err(|e| match e {
                    AbstractionError::MalformedTrace(m) => {
                        AbstractionError::MalformedTrace(format!("trace {}: {m}", b.header.seed))
                    }
                    other => other,
                })?;
                let mut est = DtmcEstimator::new();
                est.add_sequence(&seq)?;
                Ok(est)
            })
            .collect::<Result<Vec<_>, AbstractionError>>()?;
        for p in partial {
            est.merge(p);
        }
    }
    let hash = match world_hash {
        Some(w) => format!("{w}-{}", cfg.config_hash()),
        None => cfg.config_hash(),
    };
    est.finish(&hash)
}
