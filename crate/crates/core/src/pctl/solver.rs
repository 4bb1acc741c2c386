//! Solvers for `x = b + A x` where `A` is substochastic and `I - A` is
//! nonsingular (every unknown leaves the unknown set with positive probability).

use std::fmt;

use serde::{Deserialize, Serialize};

use super::PctlError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Systems with at most this many unknowns are solved directly.
    pub direct_threshold: usize,
    /// Stop value iteration when no entry changes by more than this.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            direct_threshold: 2_000,
            tolerance: 1e-12,
            max_sweeps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMethod {
    /// Graph analysis alone determined every value.
    Precomputation,
    Gaussian {
        unknowns: usize,
    },
    /// Gauss-Seidel over strongly connected components in dependency order.
    /// `sweeps` counts one pass over the acyclic part plus every iteration
    /// spent inside cyclic components.
    ValueIteration {
        unknowns: usize,
        sweeps: usize,
    },
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveMethod::Precomputation => write!(f, "precomputation"),
            SolveMethod::Gaussian { unknowns } => {
                write!(f, "gaussian elimination ({unknowns} unknowns)")
            }
            SolveMethod::ValueIteration { unknowns, sweeps } => {
                write!(f, "value iteration ({unknowns} unknowns, {sweeps} sweeps)")
            }
        }
    }
}

/// Solves `x_i = b_i + Σ_j a[i][j] x_j`. Rows of `a` are sparse over unknown
/// indices.
pub fn solve(
    a: &[Vec<(usize, f64)>],
    b: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveMethod), PctlError> {
    let n = b.len();
    if n == 0 {
        return Ok((Vec::new(), SolveMethod::Precomputation));
    }
    if n <= opts.direct_threshold {
        Ok((gaussian(a, b)?, SolveMethod::Gaussian { unknowns: n }))
    } else {
        let (x, sweeps) = value_iteration(a, b, opts)?;
        Ok((
            x,
            SolveMethod::ValueIteration {
                unknowns: n,
                sweeps,
            },
        ))
    }
}

/// Dense Gaussian elimination with partial pivoting on `(I - A) x = b`.
pub fn gaussian(a: &[Vec<(usize, f64)>], b: &[f64]) -> Result<Vec<f64>, PctlError> {
    let n = b.len();
    let w = n + 1;
    let mut m = vec![0.0; n * w];
    for i in 0..n {
        m[i * w + i] = 1.0;
        for &(j, p) in &a[i] {
            m[i * w + j] -= p;
        }
        m[i * w + n] = b[i];
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| m[r * w + col].abs().total_cmp(&m[s * w + col].abs()))
            .unwrap();
        if m[pivot * w + col].abs() < 1e-300 {
            return Err(PctlError::Numeric(format!(
                "singular system at column {col} of {n}"
            )));
        }
        if pivot != col {
            for k in 0..w {
                m.swap(col * w + k, pivot * w + k);
            }
        }
        let d = m[col * w + col];
        for r in col + 1..n {
            let f = m[r * w + col] / d;
            if f != 0.0 {
                for k in col..w {
                    m[r * w + k] -= f * m[col * w + k];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = m[i * w + n];
        for k in i + 1..n {
            s -= m[i * w + k] * x[k];
        }
        x[i] = s / m[i * w + i];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(PctlError::Numeric("non-finite solution".into()));
    }
    Ok(x)
}

/// Strongly connected components in reverse topological order: every edge
/// leaving a component points into one listed earlier.
pub fn sccs(a: &[Vec<(usize, f64)>]) -> Vec<Vec<usize>> {
    let n = a.len();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            if let Some(&(w, _)) = a[v].get(*edge) {
                *edge += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    out.push(comp);
                }
            }
        }
    }
    out
}

/// Gauss-Seidel value iteration, one component at a time. Self-loops are
/// eliminated exactly, so an acyclic system needs a single pass.
pub fn value_iteration(
    a: &[Vec<(usize, f64)>],
    b: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, usize), PctlError> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let update = |x: &[f64], i: usize| -> f64 {
        let mut s = b[i];
        let mut self_p = 0.0;
        for &(j, p) in &a[i] {
            if j == i {
                self_p += p;
            } else {
                s += p * x[j];
            }
        }
        s / (1.0 - self_p)
    };
    let mut sweeps = 1;
    for comp in sccs(a) {
        if comp.len() == 1 {
            x[comp[0]] = update(&x, comp[0]);
            continue;
        }
        let mut iterations = 0;
        loop {
            if sweeps + iterations >= opts.max_sweeps {
                return Err(PctlError::NonConvergence {
                    sweeps: opts.max_sweeps,
                });
            }
            iterations += 1;
            let mut delta: f64 = 0.0;
            for &i in &comp {
                let v = update(&x, i);
                delta = delta.max((v - x[i]).abs());
                x[i] = v;
            }
            if delta <= opts.tolerance {
                break;
            }
        }
        sweeps += iterations;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(PctlError::Numeric(
            "non-finite value iteration result".into(),
        ));
    }
    Ok((x, sweeps))
}
