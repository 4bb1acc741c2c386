//! Discrete-time Markov chain over abstract states, and its text format.
//!
//! ```text
//! dtmc 1
//! states <n> cfg <hash>
//! state <idx> <m> <e_bin> <do_bin> <du_bin> <reward> <initial_prob>
//! ...
//! transitions <count>
//! <from> <to> <prob>
//! ...
//! support <n>
//! <idx> <count>
//! ...
//! ```
//!
//! The `support` section is optional. Blank lines and lines starting with
//! `#` are ignored. Reals are written with 12 significant digits.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::{AbstractState, AbstractionError};
use crate::env::MissionMode;

pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Dtmc {
    states: Vec<AbstractState>,
    initial: Vec<f64>,
    /// Sparse rows sorted by target index.
    rows: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
    support: Vec<u64>,
    config_hash: String,
    index: HashMap<AbstractState, usize>,
}

impl Dtmc {
    /// Builds and validates a chain. `support` may be empty when unknown.
    pub fn new(
        states: Vec<AbstractState>,
        initial: Vec<f64>,
        rows: Vec<Vec<(usize, f64)>>,
        reward: Vec<f64>,
        support: Vec<u64>,
        config_hash: String,
    ) -> Result<Self, AbstractionError> {
        let bad = |msg: String| Err(AbstractionError::Validation(msg));
        let n = states.len();
        if n == 0 {
            return bad("a DTMC needs at least one state".into());
        }
        if initial.len() != n || rows.len() != n || reward.len() != n {
            return bad(format!(
                "{n} states but {} initial, {} rows, {} rewards",
                initial.len(),
                rows.len(),
                reward.len()
            ));
        }
        let support = if support.is_empty() {
            vec![0; n]
        } else {
            support
        };
        if support.len() != n {
            return bad(format!("{n} states but {} support counts", support.len()));
        }
        if config_hash.is_empty() || config_hash.contains(char::is_whitespace) {
            return bad(format!(
                "config hash {config_hash:?} must be a non-empty word"
            ));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, s) in states.iter().enumerate() {
            if let Some(j) = index.insert(*s, i) {
                return bad(format!("states {j} and {i} are both {s:?}"));
            }
        }
        let mut rows = rows;
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|(j, _)| *j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return bad(format!("row {i} lists a target twice"));
            }
            let mut sum = 0.0;
            for &(j, p) in row.iter() {
                if j >= n {
                    return bad(format!("row {i} targets unknown state {j}"));
                }
                if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                    return bad(format!("row {i}: probability {p} outside [0, 1]"));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return bad(format!("row {i} sums to {sum}"));
            }
            if states[i].is_terminal() && !(row.len() == 1 && row[0].0 == i) {
                return bad(format!(
                    "terminal state {i} must have a probability-1 self-loop"
                ));
            }
        }
        let init_sum: f64 = initial.iter().sum();
        if initial.iter().any(|p| !(p.is_finite() && *p >= 0.0))
            || (init_sum - 1.0).abs() > ROW_SUM_TOLERANCE
        {
            return bad(format!(
                "initial distribution sums to {init_sum} or has invalid entries"
            ));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return bad("rewards must be finite".into());
        }
        Ok(Self {
            states,
            initial,
            rows,
            reward,
            support,
            config_hash,
            index,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn states(&self) -> &[AbstractState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &AbstractState {
        &self.states[i]
    }

    pub fn index_of(&self, s: &AbstractState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn probability(&self, from: usize, to: usize) -> f64 {
        self.rows[from]
            .binary_search_by_key(&to, |(j, _)| *j)
            .map(|k| self.rows[from][k].1)
            .unwrap_or(0.0)
    }

    /// The state reward vector: 1 in unsafe-zone states.
    pub fn unsafe_reward(&self) -> &[f64] {
        &self.reward
    }

    /// Reward structure by name. Only `"unsafe"` is defined.
    pub fn reward(&self, label: &str) -> Option<&[f64]> {
        (label == "unsafe").then_some(self.reward.as_slice())
    }

    pub fn support(&self) -> &[u64] {
        &self.support
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn is_terminal(&self, i: usize) -> bool {
        self.states[i].is_terminal()
    }
}

fn real(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn render_dtmc(d: &Dtmc) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dtmc 1");
    let _ = writeln!(out, "states {} cfg {}", d.n_states(), d.config_hash);
    for (i, s) in d.states.iter().enumerate() {
        let _ = writeln!(
            out,
            "state {i} {} {} {} {} {} {}",
            s.m.code(),
            s.energy_bin,
            s.d_obstacle_bin,
            s.d_unsafe_bin,
            real(d.reward[i]),
            real(d.initial[i])
        );
    }
    let _ = writeln!(out, "transitions {}", d.n_transitions());
    for (i, row) in d.rows.iter().enumerate() {
        for &(j, p) in row {
            let _ = writeln!(out, "{i} {j} {}", real(p));
        }
    }
    let _ = writeln!(out, "support {}", d.n_states());
    for (i, c) in d.support.iter().enumerate() {
        let _ = writeln!(out, "{i} {c}");
    }
    out
}

pub fn export_dtmc(path: &Path, d: &Dtmc) -> Result<(), AbstractionError> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, render_dtmc(d))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn import_dtmc(path: &Path) -> Result<Dtmc, AbstractionError> {
    parse_dtmc(&std::fs::read_to_string(path)?)
}

type TokenLines<'a> = Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a>;

struct Lines<'a> {
    inner: std::iter::Peekable<TokenLines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, Vec<&'a str>)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
                .map(|(i, l)| (i, l.split_whitespace().collect())),
        );
        Self {
            inner: it.peekable(),
            last: 0,
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>), AbstractionError> {
        match self.inner.next() {
            Some((i, toks)) => {
                self.last = i;
                Ok((i, toks))
            }
            None => Err(parse_err(
                self.last + 1,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    }

    fn peek_keyword(&mut self) -> Option<&'a str> {
        self.inner.peek().and_then(|(_, t)| t.first().copied())
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> AbstractionError {
    AbstractionError::Parse {
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T, AbstractionError> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} {tok:?}")))
}

fn expect_len(line: usize, toks: &[&str], n: usize, shape: &str) -> Result<(), AbstractionError> {
    if toks.len() != n {
        return Err(parse_err(
            line,
            format!("expected `{shape}`, found {} fields", toks.len()),
        ));
    }
    Ok(())
}

pub fn parse_dtmc(text: &str) -> Result<Dtmc, AbstractionError> {
    let mut lines = Lines::new(text);

    let (ln, toks) = lines.next("`dtmc 1`")?;
    if toks != ["dtmc", "1"] {
        return Err(parse_err(ln, "expected header `dtmc 1`"));
    }
    let (ln, toks) = lines.next("`states <n> cfg <hash>`")?;
    expect_len(ln, &toks, 4, "states <n> cfg <hash>")?;
    if toks[0] != "states" || toks[2] != "cfg" {
        return Err(parse_err(ln, "expected `states <n> cfg <hash>`"));
    }
    let n: usize = field(ln, toks[1], "state count")?;
    let config_hash = toks[3].to_string();

    let mut states = Vec::with_capacity(n);
    let mut reward = Vec::with_capacity(n);
    let mut initial = Vec::with_capacity(n);
    for k in 0..n {
        let shape = "state <idx> <m> <e_bin> <do_bin> <du_bin> <reward> <initial_prob>";
        let (ln, toks) = lines.next(shape)?;
        expect_len(ln, &toks, 8, shape)?;
        if toks[0] != "state" {
            return Err(parse_err(ln, format!("expected `{shape}`")));
        }
        let idx: usize = field(ln, toks[1], "state index")?;
        if idx != k {
            return Err(parse_err(
                ln,
                format!("state index {idx} out of order, expected {k}"),
            ));
        }
        let code: u8 = field(ln, toks[2], "mode")?;
        let m = MissionMode::from_code(code)
            .ok_or_else(|| parse_err(ln, format!("unknown mode code {code}")))?;
        states.push(AbstractState {
            m,
            energy_bin: field(ln, toks[3], "energy bin")?,
            d_obstacle_bin: field(ln, toks[4], "obstacle distance bin")?,
            d_unsafe_bin: field(ln, toks[5], "unsafe distance bin")?,
        });
        reward.push(field(ln, toks[6], "reward")?);
        initial.push(field(ln, toks[7], "initial probability")?);
    }

    let (ln, toks) = lines.next("`transitions <count>`")?;
    expect_len(ln, &toks, 2, "transitions <count>")?;
    if toks[0] != "transitions" {
        return Err(parse_err(ln, "expected `transitions <count>`"));
    }
    let count: usize = field(ln, toks[1], "transition count")?;
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for _ in 0..count {
        let (ln, toks) = lines.next("`<from> <to> <prob>`")?;
        expect_len(ln, &toks, 3, "<from> <to> <prob>")?;
        let from: usize = field(ln, toks[0], "source index")?;
        let to: usize = field(ln, toks[1], "target index")?;
        let p: f64 = field(ln, toks[2], "probability")?;
        if from >= n || to >= n {
            return Err(parse_err(
                ln,
                format!("transition {from} -> {to} outside 0..{n}"),
            ));
        }
        if rows[from].insert(to, p).is_some() {
            return Err(parse_err(
                ln,
                format!("duplicate transition {from} -> {to}"),
            ));
        }
    }

    let mut support = Vec::new();
    if lines.peek_keyword() == Some("support") {
        let (ln, toks) = lines.next("`support <n>`")?;
        expect_len(ln, &toks, 2, "support <n>")?;
        let m: usize = field(ln, toks[1], "support count")?;
        if m != n {
            return Err(parse_err(
                ln,
                format!("support section lists {m} states, expected {n}"),
            ));
        }
        for k in 0..n {
            let (ln, toks) = lines.next("`<idx> <count>`")?;
            expect_len(ln, &toks, 2, "<idx> <count>")?;
            let idx: usize = field(ln, toks[0], "state index")?;
            if idx != k {
                return Err(parse_err(ln, format!("support index {idx} out of order")));
            }
            support.push(field(ln, toks[1], "support count")?);
        }
    }
    if let Ok((ln, _)) = lines.next("") {
        return Err(parse_err(ln, "unexpected content after the last section"));
    }

    let rows = rows.into_iter().map(|r| r.into_iter().collect()).collect();
    Dtmc::new(states, initial, rows, reward, support, config_hash)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const THREE_STATE: &str = "\
# hand-written fixture
dtmc 1
states 3 cfg handmade
state 0 0 10 2 2 0 1
state 1 1 9 1 0 1 0
state 2 3 9 2 2 0 0

transitions 4
0 1 0.25
0 2 0.75
1 2 1.0
2 2 1
";

    fn s(m: MissionMode, e: u32) -> AbstractState {
        AbstractState::new(m, e, 2, 2)
    }

    #[test]
    fn hand_written_fixture_loads() {
        let d = parse_dtmc(THREE_STATE).unwrap();
        assert_eq!(d.n_states(), 3);
        assert_eq!(d.n_transitions(), 4);
        assert_eq!(d.row(0), &[(1, 0.25), (2, 0.75)]);
        assert_eq!(d.probability(1, 0), 0.0);
        assert_eq!(d.probability(1, 2), 1.0);
        assert_eq!(d.unsafe_reward(), &[0.0, 1.0, 0.0]);
        assert_eq!(d.initial(), &[1.0, 0.0, 0.0]);
        assert!(d.is_terminal(2) && !d.is_terminal(1));
        assert_eq!(d.support(), &[0, 0, 0]);
        assert_eq!(d.reward("unsafe"), Some(d.unsafe_reward()));
        assert_eq!(d.reward("energy"), None);
    }

    #[test]
    fn row_sum_violation_is_validation_error() {
        let text = THREE_STATE.replace("0 2 0.75", "0 2 0.65");
        assert!(matches!(
            parse_dtmc(&text),
            Err(AbstractionError::Validation(_))
        ));
    }

    #[test]
    fn terminal_without_self_loop_rejected() {
        let text = THREE_STATE.replace("2 2 1\n", "2 1 1\n");
        assert!(matches!(
            parse_dtmc(&text),
            Err(AbstractionError::Validation(_))
        ));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = THREE_STATE.replace("state 1 1 9 1 0 1 0", "state 1 7 9 1 0 1 0");
        match parse_dtmc(&text) {
            Err(AbstractionError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        let text = THREE_STATE.replace("0 2 0.75", "0 2 abc");
        match parse_dtmc(&text) {
            Err(AbstractionError::Parse { line, .. }) => assert_eq!(line, 10),
            other => panic!("{other:?}"),
        }
        match parse_dtmc("dtmc 1\nstates 2 cfg x\n") {
            Err(AbstractionError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_dtmc("dtmc 2\n"),
            Err(AbstractionError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let d = parse_dtmc(THREE_STATE).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dtmc");
        export_dtmc(&path, &d).unwrap();
        assert_eq!(import_dtmc(&path).unwrap(), d);
    }

    #[test]
    fn duplicate_states_rejected() {
        let st = vec![
            s(MissionMode::GoalReached, 1),
            s(MissionMode::GoalReached, 1),
        ];
        let r = Dtmc::new(
            st,
            vec![0.5, 0.5],
            vec![vec![(0, 1.0)], vec![(1, 1.0)]],
            vec![0.0, 0.0],
            vec![],
            "x".into(),
        );
        assert!(r.is_err());
    }

    fn arb_dtmc() -> impl Strategy<Value = Dtmc> {
        (2usize..7)
            .prop_flat_map(|n| {
                (
                    Just(n),
                    proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, n), n),
                    proptest::collection::vec(0.0f64..1.0, n),
                    proptest::collection::vec(0u64..1000, n),
                )
            })
            .prop_map(|(n, weights, init, support)| {
                // State n-1 is terminal; the rest are transient with distinct bins.
                let mut states: Vec<_> = (0..n - 1)
                    .map(|i| {
                        AbstractState::new(MissionMode::Travelling, i as u32 + 1, (i % 3) as u8, 2)
                    })
                    .collect();
                states.push(s(MissionMode::GoalReached, 1));
                let mut rows = Vec::new();
                for (i, w) in weights.iter().enumerate() {
                    if i == n - 1 {
                        rows.push(vec![(i, 1.0)]);
                        continue;
                    }
                    let total: f64 = w.iter().sum::<f64>() + 1.0;
                    let mut row: Vec<(usize, f64)> =
                        w.iter().enumerate().map(|(j, v)| (j, v / total)).collect();
                    row[n - 1].1 += 1.0 / total;
                    rows.push(row.into_iter().filter(|(_, p)| *p > 0.0).collect());
                }
                let it: f64 = init.iter().sum::<f64>() + 1.0;
                let mut initial: Vec<f64> = init.iter().map(|v| v / it).collect();
                initial[0] += 1.0 / it;
                let reward = (0..n).map(|i| (i % 2) as f64).collect();
                Dtmc::new(states, initial, rows, reward, support, "prop".into()).unwrap()
            })
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(d in arb_dtmc()) {
            let back = parse_dtmc(&render_dtmc(&d)).unwrap();
            prop_assert_eq!(back.states(), d.states());
            prop_assert_eq!(back.support(), d.support());
            prop_assert_eq!(back.n_transitions(), d.n_transitions());
            for i in 0..d.n_states() {
                prop_assert!((back.initial()[i] - d.initial()[i]).abs() <= 1e-11);
                for &(j, p) in d.row(i) {
                    prop_assert!((back.probability(i, j) - p).abs() <= 1e-11 * p.max(1e-300) + 1e-300);
                }
            }
            // A second round trip is exact.
            let again = parse_dtmc(&render_dtmc(&back)).unwrap();
            prop_assert_eq!(again, back);
        }
    }
}
