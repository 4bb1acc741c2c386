use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Action, EnvError, MissionMode, Observation, RewardInputs, SpawnMode, TerminationCause, World,
    WorldState,
};

/// Anything that maps what the vehicle perceives to wheel commands.
///
/// Closures over observations implement this directly; scripted policies that
/// need ground truth can use the state argument.
pub trait Policy {
    fn act(&mut self, obs: &Observation, state: &WorldState) -> Action;
}

impl<F> Policy for F
where
    F: FnMut(&Observation) -> Action,
{
    fn act(&mut self, obs: &Observation, _state: &WorldState) -> Action {
        self(obs)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&mut self, _obs: &Observation, _state: &WorldState) -> Action {
        Action::default()
    }
}

/// Uniformly random wheel commands.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _obs: &Observation, _state: &WorldState) -> Action {
        Action::new(
            self.rng.random_range(-1.0..1.0),
            self.rng.random_range(-1.0..1.0),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub state: WorldState,
    /// `None` for the final state.
    pub action: Option<Action>,
    pub reward_inputs: Option<RewardInputs>,
}

impl TraceStep {
    pub fn mode(&self) -> MissionMode {
        self.state.mode
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub config_hash: String,
    pub seed: u64,
    pub spawn: SpawnMode,
    pub steps: Vec<TraceStep>,
    pub cause: TerminationCause,
}

impl EpisodeTrace {
    pub fn final_state(&self) -> &WorldState {
        &self
            .steps
            .last()
            .expect("trace holds at least the initial state")
            .state
    }

    pub fn initial_state(&self) -> &WorldState {
        &self.steps[0].state
    }

    /// Number of transitions taken.
    pub fn len_steps(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn rows(&self, world: &World) -> Vec<TraceRow> {
        self.steps
            .iter()
            .map(|step| {
                let s = &step.state;
                TraceRow {
                    t: s.step_count,
                    x0: s.position.x,
                    x1: s.position.y,
                    theta: s.heading,
                    e: s.energy,
                    v_l: step.action.map(|a| a.left),
                    v_r: step.action.map(|a| a.right),
                    m: s.mode.code(),
                    in_unsafe: world.in_unsafe_zone(s),
                    d_goal: s.distance_to_goal(),
                    d_obstacle: s.distance_to_obstacle(),
                    d_unsafe_min: s.nearest_unsafe_distance(),
                }
            })
            .collect()
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            cause: self.cause,
        }
    }
}

/// Runs one episode from a fresh reset until termination.
pub fn run_episode<P: Policy + ?Sized>(
    world: &World,
    policy: &mut P,
    seed: u64,
    spawn: SpawnMode,
) -> Result<EpisodeTrace, EnvError> {
    let mut state = world.reset(seed, spawn)?;
    let mut steps = Vec::with_capacity(world.config().step_limit() as usize + 1);
    let cause = loop {
        if let Some(cause) = world.termination_cause(&state) {
            steps.push(TraceStep {
                state,
                action: None,
                reward_inputs: None,
            });
            break cause;
        }
        let obs = world.observe(&state);
        let action = policy.act(&obs, &state);
        let action = Action::new(action.left, action.right);
        let outcome = world.step(&state, action)?;
        steps.push(TraceStep {
            state,
            action: Some(action),
            reward_inputs: Some(outcome.reward_inputs),
        });
        state = outcome.next_state;
    };
    Ok(EpisodeTrace {
        config_hash: world.config().config_hash(),
        seed,
        spawn,
        steps,
        cause,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub config_hash: String,
    pub seed: u64,
    pub cause: TerminationCause,
}

/// One line of a trace file, describing the state at step `t` and the action
/// taken from it (absent for the final state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u32,
    pub x0: f64,
    pub x1: f64,
    pub theta: f64,
    pub e: u32,
    pub v_l: Option<f64>,
    pub v_r: Option<f64>,
    pub m: u8,
    pub in_unsafe: bool,
    pub d_goal: f64,
    pub d_obstacle: f64,
    pub d_unsafe_min: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TraceLine {
    Header(TraceHeader),
    Step(TraceRow),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceBlock {
    pub header: TraceHeader,
    pub rows: Vec<TraceRow>,
}

/// Streams traces into a trace file. Output goes to a temporary sibling that
/// is renamed on [`TraceWriter::finish`]; dropping an unfinished writer removes
/// the partial file.
pub struct TraceWriter {
    out: Option<BufWriter<File>>,
    tmp: PathBuf,
    path: PathBuf,
}

impl TraceWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        let tmp = path.with_extension("partial");
        let out = BufWriter::new(File::create(&tmp)?);
        Ok(Self {
            out: Some(out),
            tmp,
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, world: &World, trace: &EpisodeTrace) -> io::Result<()> {
        let out = self.out.as_mut().expect("writer not finished");
        write_line(out, &TraceLine::Header(trace.header()))?;
        for row in trace.rows(world) {
            write_line(out, &TraceLine::Step(row))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<()> {
        let mut out = self.out.take().expect("writer not finished");
        out.flush()?;
        drop(out);
        fs::rename(&self.tmp, &self.path)
    }
}

impl Drop for TraceWriter {
    fn drop(&mut self) {
        if self.out.take().is_some() {
            let _ = fs::remove_file(&self.tmp);
        }
    }
}

/// Writes every trace as a header line followed by its step lines.
pub fn write_trace_file(path: &Path, world: &World, traces: &[EpisodeTrace]) -> io::Result<()> {
    let mut writer = TraceWriter::create(path)?;
    for trace in traces {
        writer.write(world, trace)?;
    }
    writer.finish()
}

fn write_line<W: Write>(out: &mut W, line: &TraceLine) -> io::Result<()> {
    serde_json::to_writer(&mut *out, line)?;
    out.write_all(b"\n")
}

/// Iterator over the trace blocks of a file, reading one block at a time.
pub struct TraceBlocks {
    lines: std::iter::Enumerate<io::Lines<BufReader<File>>>,
    path: PathBuf,
    pending: Option<TraceHeader>,
}

impl TraceBlocks {
    pub fn open(path: &Path) -> io::Result<Self> {
        Ok(Self {
            lines: BufReader::new(File::open(path)?).lines().enumerate(),
            path: path.to_path_buf(),
            pending: None,
        })
    }

    fn invalid(&self, line: usize, msg: impl std::fmt::Display) -> io::Error {
        io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{}:{}: {msg}", self.path.display(), line + 1),
        )
    }
}

impl Iterator for TraceBlocks {
    type Item = io::Result<TraceBlock>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut rows = Vec::new();
        loop {
            let Some((i, line)) = self.lines.next() else {
                return self
                    .pending
                    .take()
                    .map(|header| Ok(TraceBlock { header, rows }));
            };
            let line = match line {
                Ok(line) => line,
                Err(e) => return Some(Err(e)),
            };
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine = match serde_json::from_str(&line) {
                Ok(p) => p,
                Err(e) => return Some(Err(self.invalid(i, e))),
            };
            match parsed {
                TraceLine::Header(header) => {
                    if let Some(prev) = self.pending.replace(header) {
                        return Some(Ok(TraceBlock { header: prev, rows }));
                    }
                }
                TraceLine::Step(row) => {
                    if self.pending.is_none() {
                        return Some(Err(self.invalid(i, "step line before any header")));
                    }
                    rows.push(row);
                }
            }
        }
    }
}

pub fn read_trace_file(path: &Path) -> io::Result<Vec<TraceBlock>> {
    TraceBlocks::open(path)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::WorldConfig;

    #[test]
    fn zero_policy_depletes_energy() {
        let world = World::new(WorldConfig::default()).unwrap();
        let trace = run_episode(&world, &mut ZeroPolicy, 3, SpawnMode::Random).unwrap();
        assert_eq!(trace.cause, TerminationCause::EnergyDepleted);
        assert_eq!(trace.len_steps(), 250);
        assert_eq!(trace.final_state().energy, 0);
        assert_eq!(trace.final_state().step_count, 250);
    }

    /// Drives straight at the goal using ground truth.
    struct Homing;

    impl Policy for Homing {
        fn act(&mut self, _obs: &Observation, s: &WorldState) -> Action {
            let bearing = (s.goal.y - s.position.y).atan2(s.goal.x - s.position.x);
            let err = (bearing - s.heading + std::f64::consts::PI)
                .rem_euclid(2.0 * std::f64::consts::PI)
                - std::f64::consts::PI;
            let turn = (err * 2.0).clamp(-1.0, 1.0);
            let fwd = if err.abs() < 0.5 { 0.8 } else { 0.0 };
            Action::new(fwd - turn * 0.5, fwd + turn * 0.5)
        }
    }

    #[test]
    fn goal_trace_ends_with_energy_left() {
        let world = World::new(WorldConfig::default()).unwrap();
        let mut reached = 0;
        for seed in 0..20 {
            let trace = run_episode(&world, &mut Homing, seed, SpawnMode::Random).unwrap();
            if trace.cause == TerminationCause::Goal {
                reached += 1;
                assert_eq!(trace.final_state().mode, MissionMode::GoalReached);
                assert!(trace.final_state().energy > 0);
            }
        }
        assert!(reached > 10);
    }

    #[test]
    fn episodes_are_reproducible() {
        let world = World::new(WorldConfig::default()).unwrap();
        let a = run_episode(&world, &mut RandomPolicy::new(5), 11, SpawnMode::Random).unwrap();
        let b = run_episode(&world, &mut RandomPolicy::new(5), 11, SpawnMode::Random).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_file_round_trip() {
        let world = World::new(WorldConfig::default()).unwrap();
        let traces: Vec<_> = (0..3)
            .map(|s| run_episode(&world, &mut RandomPolicy::new(s), s, SpawnMode::Random).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_trace_file(&path, &world, &traces).unwrap();
        let blocks = read_trace_file(&path).unwrap();
        assert_eq!(blocks.len(), 3);
        for (block, trace) in blocks.iter().zip(&traces) {
            assert_eq!(block.header, trace.header());
            assert_eq!(block.rows, trace.rows(&world));
            assert!(block.rows.last().unwrap().v_l.is_none());
        }
        assert!(!dir.path().join("t.partial").exists());
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let world = World::new(WorldConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing-dir").join("t.jsonl");
        assert!(write_trace_file(&path, &world, &[]).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn header_first_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(&path, "{\"kind\":\"step\",\"t\":0,\"x0\":0,\"x1\":0,\"theta\":0,\"e\":1,\"v_l\":null,\"v_r\":null,\"m\":0,\"in_unsafe\":false,\"d_goal\":1,\"d_obstacle\":1,\"d_unsafe_min\":null}\n").unwrap();
        assert!(read_trace_file(&path).is_err());
    }
}
