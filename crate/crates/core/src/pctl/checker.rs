use serde::{Deserialize, Serialize};

use super::ast::{PathFormula, PctlFormula, StateExpr};
use super::solver::{solve, SolveMethod, SolverOptions};
use super::PctlError;
use crate::abstraction::{AbstractState, Dtmc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    /// Probability or expected reward from the initial distribution;
    /// infinite when some initial state does not reach the target surely.
    pub value: f64,
    pub verdict: Option<bool>,
    pub method: SolveMethod,
    pub per_state: Vec<f64>,
    /// States whose expected reward is infinite.
    pub infinite_states: Vec<usize>,
}

fn eval_expr(e: &StateExpr, s: &AbstractState) -> Result<bool, PctlError> {
    Ok(match e {
        StateExpr::True => true,
        StateExpr::False => false,
        StateExpr::Atom { field, op, value } => {
            let lhs = s.field(field).ok_or_else(|| PctlError::Semantic {
                pos: None,
                message: format!(
                    "unknown state field `{field}` (known: {})",
                    AbstractState::FIELDS.join(", ")
                ),
            })?;
            op.apply(lhs, *value)
        }
        StateExpr::Not(a) => !eval_expr(a, s)?,
        StateExpr::And(a, b) => eval_expr(a, s)? && eval_expr(b, s)?,
        StateExpr::Or(a, b) => eval_expr(a, s)? || eval_expr(b, s)?,
    })
}

/// States satisfying `e`.
pub fn sat(dtmc: &Dtmc, e: &StateExpr) -> Result<Vec<bool>, PctlError> {
    dtmc.states().iter().map(|s| eval_expr(e, s)).collect()
}

fn predecessors(dtmc: &Dtmc) -> Vec<Vec<usize>> {
    let mut pred = vec![Vec::new(); dtmc.n_states()];
    for (i, row) in dtmc.rows().iter().enumerate() {
        for &(j, p) in row {
            if p > 0.0 {
                pred[j].push(i);
            }
        }
    }
    pred
}

/// States reaching `from` backwards through states allowed by `through`.
fn backward_reach(pred: &[Vec<usize>], from: &[bool], through: &[bool]) -> Vec<bool> {
    let mut seen = from.to_vec();
    let mut stack: Vec<usize> = (0..from.len()).filter(|&i| from[i]).collect();
    while let Some(j) = stack.pop() {
        for &i in &pred[j] {
            if !seen[i] && through[i] {
                seen[i] = true;
                stack.push(i);
            }
        }
    }
    seen
}

/// (prob0, prob1) state sets for `phi U psi`.
fn precompute(pred: &[Vec<usize>], phi: &[bool], psi: &[bool]) -> (Vec<bool>, Vec<bool>) {
    let n = phi.len();
    let can_reach = backward_reach(pred, psi, phi);
    let no: Vec<bool> = can_reach.iter().map(|r| !r).collect();
    let transient: Vec<bool> = (0..n).map(|i| phi[i] && !psi[i]).collect();
    let may_fail = backward_reach(pred, &no, &transient);
    let yes = may_fail.iter().map(|r| !r).collect();
    (no, yes)
}

/// Per-state probabilities of `phi U psi`.
pub fn prob_until(
    dtmc: &Dtmc,
    phi: &StateExpr,
    psi: &StateExpr,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveMethod), PctlError> {
    let (phi, psi) = (sat(dtmc, phi)?, sat(dtmc, psi)?);
    let pred = predecessors(dtmc);
    let (no, yes) = precompute(&pred, &phi, &psi);
    let n = dtmc.n_states();
    let maybe: Vec<usize> = (0..n).filter(|&i| !no[i] && !yes[i]).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in maybe.iter().enumerate() {
        slot[i] = k;
    }
    let mut a = Vec::with_capacity(maybe.len());
    let mut b = Vec::with_capacity(maybe.len());
    for &i in &maybe {
        let mut row = Vec::new();
        let mut bi = 0.0;
        for &(j, p) in dtmc.row(i) {
            if yes[j] {
                bi += p;
            } else if slot[j] != usize::MAX {
                row.push((slot[j], p));
            }
        }
        a.push(row);
        b.push(bi);
    }
    let (x, method) = solve(&a, &b, opts)?;
    let mut values: Vec<f64> = yes.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
    for (k, &i) in maybe.iter().enumerate() {
        values[i] = x[k].clamp(0.0, 1.0);
    }
    Ok((values, method))
}

fn weighted(dtmc: &Dtmc, per_state: &[f64]) -> f64 {
    dtmc.initial()
        .iter()
        .zip(per_state)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, v)| if v.is_infinite() { *v } else { p * v })
        .sum()
}

pub fn check_prob_with(
    dtmc: &Dtmc,
    path: &PathFormula,
    opts: &SolverOptions,
) -> Result<CheckResult, PctlError> {
    let (phi, psi) = path.desugar();
    let (per_state, method) = prob_until(dtmc, &phi, &psi, opts)?;
    Ok(CheckResult {
        value: weighted(dtmc, &per_state).clamp(0.0, 1.0),
        verdict: None,
        method,
        per_state,
        infinite_states: Vec::new(),
    })
}

pub fn check_prob(dtmc: &Dtmc, path: &PathFormula) -> Result<CheckResult, PctlError> {
    check_prob_with(dtmc, path, &SolverOptions::default())
}

/// Expected reward accumulated in states visited strictly before reaching
/// `target`. States that miss the target with positive probability get an
/// infinite value.
pub fn check_reward_with(
    dtmc: &Dtmc,
    label: &str,
    target: &StateExpr,
    opts: &SolverOptions,
) -> Result<CheckResult, PctlError> {
    let reward = dtmc.reward(label).ok_or_else(|| {
        PctlError::Usage(format!(
            "unknown reward structure \"{label}\" (known: \"unsafe\")"
        ))
    })?;
    let n = dtmc.n_states();
    let psi = sat(dtmc, target)?;
    let pred = predecessors(dtmc);
    let (_, yes) = precompute(&pred, &vec![true; n], &psi);
    let unknown: Vec<usize> = (0..n).filter(|&i| yes[i] && !psi[i]).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in unknown.iter().enumerate() {
        slot[i] = k;
    }
    let mut a = Vec::with_capacity(unknown.len());
    let mut b = Vec::with_capacity(unknown.len());
    for &i in &unknown {
        a.push(
            dtmc.row(i)
                .iter()
                .filter(|(j, _)| slot[*j] != usize::MAX)
                .map(|&(j, p)| (slot[j], p))
                .collect(),
        );
        b.push(reward[i]);
    }
    let (x, method) = solve(&a, &b, opts)?;
    let mut per_state: Vec<f64> = yes
        .iter()
        .map(|&y| if y { 0.0 } else { f64::INFINITY })
        .collect();
    for (k, &i) in unknown.iter().enumerate() {
        per_state[i] = x[k];
    }
    let infinite_states = (0..n).filter(|&i| !yes[i]).collect();
    Ok(CheckResult {
        value: weighted(dtmc, &per_state),
        verdict: None,
        method,
        per_state,
        infinite_states,
    })
}

pub fn check_reward(
    dtmc: &Dtmc,
    label: &str,
    target: &StateExpr,
) -> Result<CheckResult, PctlError> {
    check_reward_with(dtmc, label, target, &SolverOptions::default())
}

pub fn evaluate_with(
    dtmc: &Dtmc,
    formula: &PctlFormula,
    opts: &SolverOptions,
) -> Result<CheckResult, PctlError> {
    let mut result = match formula {
        PctlFormula::Prob { path, .. } => check_prob_with(dtmc, path, opts)?,
        PctlFormula::Reward { label, path, .. } => {
            let target = match path {
                PathFormula::Eventually(t) => t,
                PathFormula::Until(StateExpr::True, t) => t,
                PathFormula::Until(c, _) => {
                    return Err(PctlError::Semantic {
                        pos: None,
                        message: format!(
                            "reward properties accumulate until a target; constraint `{c}` must be `true`"
                        ),
                    })
                }
            };
            check_reward_with(dtmc, label, target, opts)?
        }
    };
    result.verdict = formula.bound().verdict(result.value);
    Ok(result)
}

pub fn evaluate(dtmc: &Dtmc, formula: &PctlFormula) -> Result<CheckResult, PctlError> {
    evaluate_with(dtmc, formula, &SolverOptions::default())
}
