use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use amlas_core::abstraction::{estimate_dtmc_from_file, export_dtmc, import_dtmc, Dtmc};
use amlas_core::assurance::{
    generate_report, log_erroneous, sha256_file, verify_chain, ArtefactId, ArtifactRecord,
    AssuranceError, Ledger, ModelCheckingEntry, ModelCheckingResults,
};
use amlas_core::env::{SpawnMode, World, WorldConfig};
use amlas_core::pctl::{evaluate, parse_properties};
use amlas_core::plans::{
    audit_scenario_balance, collect_traces, evaluate_requirements, integration_trials,
    internal_test, train_with_progress, verify_general, verify_targeted, AggregateReport,
    MetricSummary, Regime, Requirement, RequirementVerdict, SeedPlan, TrainedModel, TARGETED_SPAWN,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{RunConfig, RUN_CONFIG_FILE};
use crate::CliError;

pub const PROPERTIES: &str = include_str!("../properties/eq3.pctl");
pub const PROPERTIES_LITERAL: &str = include_str!("../properties/eq3_literal.pctl");

const FIXTURES: [(ArtefactId, &str, &str); 5] = [
    (
        ArtefactId::A,
        "system-safety-requirements",
        include_str!("../fixtures/A.md"),
    ),
    (
        ArtefactId::B,
        "operating-environment",
        include_str!("../fixtures/B.md"),
    ),
    (
        ArtefactId::C,
        "system-description",
        include_str!("../fixtures/C.md"),
    ),
    (
        ArtefactId::D,
        "rl-component-description",
        include_str!("../fixtures/D.md"),
    ),
    (
        ArtefactId::E,
        "allocated-requirements",
        include_str!("../fixtures/E.md"),
    ),
];

/// Whether every requirement verdict produced by a command passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn of(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }

    pub fn and(self, other: Outcome) -> Outcome {
        Outcome::of(self == Outcome::Pass && other == Outcome::Pass)
    }
}

/// One run directory together with its configuration and ledger.
pub struct Run {
    pub dir: PathBuf,
    pub cfg: RunConfig,
    pub seeds: SeedPlan,
    pub ledger: Ledger,
}

impl Run {
    /// Configuration precedence: `config` if given, else the run
    /// directory's saved config, else defaults. `seed` overrides the
    /// configured seed.
    pub fn open(dir: &Path, config: Option<&Path>, seed: Option<u64>) -> Result<Self, CliError> {
        let saved = dir.join(RUN_CONFIG_FILE);
        let mut cfg = match config {
            Some(p) => RunConfig::load(p)?,
            None if saved.is_file() => RunConfig::load(&saved)?,
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            seeds: SeedPlan::new(cfg.seed),
            ledger: Ledger::open(dir)?,
            cfg,
        })
    }

    /// Fails unless every input artefact required by `id` is committed.
    fn gate(&self, id: ArtefactId) -> Result<(), CliError> {
        let missing: Vec<ArtefactId> = id
            .required_inputs()
            .iter()
            .copied()
            .filter(|i| !self.ledger.has(*i))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(AssuranceError::Dependency {
                artefact: id,
                missing,
            }
            .into())
        }
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        Ok(path)
    }

    fn commit_file(
        &mut self,
        id: ArtefactId,
        label: &str,
        path: &Path,
        extra: &[(ArtefactId, &str)],
    ) -> Result<ArtifactRecord, CliError> {
        let rec = self.ledger.record_artifact(id, label, path, extra)?.clone();
        println!(
            "committed {id}[{label}] v{} seq {} sha256 {}",
            rec.body.version,
            rec.body.seq,
            &rec.body.sha256[..16]
        );
        Ok(rec)
    }

    fn commit_json<T: Serialize>(
        &mut self,
        id: ArtefactId,
        label: &str,
        rel: &str,
        value: &T,
        extra: &[(ArtefactId, &str)],
    ) -> Result<ArtifactRecord, CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        let path = self.write(rel, &bytes)?;
        self.commit_file(id, label, &path, extra)
    }

    /// Committed payload path after re-checking its hash.
    fn checked_payload(&self, id: ArtefactId, label: &str) -> Result<PathBuf, CliError> {
        let rec = self.ledger.require(id, Some(label))?;
        let path = self.ledger.payload_path(rec);
        let (hash, _) = sha256_file(&path)?;
        if hash != rec.body.sha256 {
            return Err(AssuranceError::Integrity(format!(
                "{} no longer matches {id}[{label}] seq {}",
                path.display(),
                rec.body.seq
            ))
            .into());
        }
        Ok(path)
    }

    fn evaluation_world(&self) -> Result<World, CliError> {
        Ok(World::new(WorldConfig {
            energy_terminates: true,
            ..self.cfg.world.clone()
        })
        .map_err(amlas_core::plans::PlanError::from)?)
    }

    /// Loads the committed model (V[actor], V[critic]) from `models/`.
    fn model(&self) -> Result<(TrainedModel, String), CliError> {
        let actor = self.ledger.require(ArtefactId::V, Some("actor"))?;
        let critic = self.ledger.require(ArtefactId::V, Some("critic"))?;
        let dir = self.dir.join("models");
        for (rec, file) in [(actor, "actor.amlp"), (critic, "critic.amlp")] {
            let (hash, _) = sha256_file(&dir.join(file))?;
            if hash != rec.body.sha256 {
                return Err(AssuranceError::Integrity(format!(
                    "models/{file} differs from committed {}[{}] seq {}",
                    rec.body.id, rec.body.label, rec.body.seq
                ))
                .into());
            }
        }
        let model = TrainedModel::load(&dir, &self.cfg.ddpg.hidden)?;
        Ok((model, actor.body.sha256.clone()))
    }

    pub fn scope(&mut self) -> Result<Outcome, CliError> {
        self.write(RUN_CONFIG_FILE, self.cfg.to_toml().as_bytes())?;
        self.write("properties/eq3.pctl", PROPERTIES.as_bytes())?;
        self.write("properties/eq3_literal.pctl", PROPERTIES_LITERAL.as_bytes())?;
        for (id, label, text) in FIXTURES {
            let path = self.write(&format!("scope/{id}.md"), text.as_bytes())?;
            self.commit_file(id, label, &path, &[])?;
        }
        Ok(Outcome::Pass)
    }

    pub fn requirements(&mut self) -> Result<Outcome, CliError> {
        self.gate(ArtefactId::H)?;
        let reqs: Vec<_> = Requirement::ALL
            .iter()
            .map(|r| json!({"id": r, "description": r.description(), "threshold": r.threshold()}))
            .collect();
        self.commit_json(
            ArtefactId::H,
            "rl-safety-requirements",
            "plans/requirements.json",
            &reqs,
            &[],
        )?;
        Ok(Outcome::Pass)
    }

    pub fn plan(&mut self) -> Result<Outcome, CliError> {
        self.gate(ArtefactId::L)?;
        let cfg = self.cfg.clone();
        let p = &cfg.plans;
        let data = json!({
            "world": cfg.world,
            "training_spawn": SpawnMode::Random,
            "general_spawn": SpawnMode::Random,
            "targeted_spawn": TARGETED_SPAWN,
            "placement": "independent uniform placement of vehicle, goal, obstacle and unsafe zones per episode",
            "balance_resets": p.balance_resets,
        });
        self.commit_json(
            ArtefactId::L,
            "data-requirements",
            "plans/data_requirements.json",
            &data,
            &[],
        )?;

        let balance = audit_scenario_balance(
            &cfg.world,
            p.balance_resets,
            self.seeds.seed(Regime::Training, 0),
        )?;
        println!(
            "scenario balance over {} resets: {}",
            balance.n_resets,
            if balance.is_balanced() {
                "balanced"
            } else {
                "cells flagged"
            }
        );
        self.commit_json(
            ArtefactId::M,
            "balance-audit",
            "plans/balance_audit.json",
            &balance,
            &[],
        )?;

        let training = json!({
            "episodes": p.train_episodes,
            "world": cfg.world.training(),
            "hyperparams": cfg.ddpg,
            "reward": cfg.ddpg.reward.describe(),
            "seed_base": self.seeds.base,
            "first_seed": self.seeds.seed(Regime::Training, 0),
        });
        self.commit_json(
            ArtefactId::N,
            "training-plan",
            "plans/training_plan.json",
            &training,
            &[],
        )?;

        let internal = json!({
            "trials": p.internal_trials,
            "spawn": SpawnMode::Random,
            "first_seed": self.seeds.seed(Regime::Internal, 0),
        });
        self.commit_json(
            ArtefactId::O,
            "internal-test-plan",
            "plans/internal_test_plan.json",
            &internal,
            &[],
        )?;

        let verification = json!({
            "general_trials": p.general_trials,
            "general_first_seed": self.seeds.seed(Regime::General, 0),
            "targeted_trials": p.targeted_trials,
            "targeted_spawn": TARGETED_SPAWN,
            "targeted_first_seed": self.seeds.seed(Regime::Targeted, 0),
            "trace_trials": p.trace_trials,
            "traces_first_seed": self.seeds.seed(Regime::Traces, 0),
            "abstraction": cfg.abstraction,
            "properties": PROPERTIES,
        });
        self.commit_json(
            ArtefactId::P,
            "verification-plan",
            "plans/verification_plan.json",
            &verification,
            &[],
        )?;
        Ok(Outcome::Pass)
    }

    pub fn train(&mut self) -> Result<Outcome, CliError> {
        self.gate(ArtefactId::U)?;
        let n = self.cfg.plans.train_episodes;
        let every = (n / 10).max(1);
        let (model, log) =
            train_with_progress(&self.cfg.world, &self.cfg.ddpg, n, &self.seeds, |e| {
                if (e.episode + 1) % every == 0 {
                    eprintln!(
                        "episode {}/{n}: steps {} reward {:.2} {:?}",
                        e.episode + 1,
                        e.steps,
                        e.total_reward,
                        e.cause
                    );
                }
            })?;
        let dir = self.dir.join("models");
        model.save(&dir)?;
        self.commit_json(
            ArtefactId::U,
            "development-log",
            "results/development_log.json",
            &log,
            &[],
        )?;
        self.commit_file(ArtefactId::V, "actor", &dir.join("actor.amlp"), &[])?;
        self.commit_file(ArtefactId::V, "critic", &dir.join("critic.amlp"), &[])?;
        if let Some(rate) = log.recent_goal_rate(100) {
            println!("training goal rate over the last 100 episodes: {rate:.3}");
        }
        Ok(Outcome::Pass)
    }

    fn print_verdicts(verdicts: &[RequirementVerdict]) -> Outcome {
        for v in verdicts {
            println!("{v}");
        }
        Outcome::of(verdicts.iter().all(|v| v.pass))
    }

    fn print_report(r: &AggregateReport) {
        println!(
            "{}: {} trials, goal {:.2}%, mean energy on success {}, mean unsafe time {:.2}, collision {:.2}%",
            r.regime,
            r.n_trials,
            100.0 * r.goal_rate,
            r.mean_energy_on_success.map_or("n/a".into(), |e| format!("{e:.2}")),
            r.mean_unsafe_time,
            100.0 * r.collision_rate
        );
    }

    pub fn test(&mut self) -> Result<Outcome, CliError> {
        self.gate(ArtefactId::X)?;
        let (model, _) = self.model()?;
        let cfg = self.cfg.clone();
        let report = internal_test(
            &model,
            &cfg.world,
            cfg.plans.internal_trials,
            &self.seeds,
            &cfg.ddpg.reward,
        )?;
        Self::print_report(&report);
        self.commit_json(
            ArtefactId::X,
            "internal",
            "results/internal.json",
            &report,
            &[],
        )?;
        let verdicts = evaluate_requirements(&[MetricSummary::from(&report)])?;
        Ok(Self::print_verdicts(&verdicts))
    }

    pub fn verify(&mut self) -> Result<Outcome, CliError> {
        self.gate(ArtefactId::Z)?;
        let (model, _) = self.model()?;
        let cfg = self.cfg.clone();
        let reward = &cfg.ddpg.reward;
        let general = verify_general(
            &model,
            &cfg.world,
            cfg.plans.general_trials,
            &self.seeds,
            reward,
        )?;
        let targeted = verify_targeted(
            &model,
            &cfg.world,
            cfg.plans.targeted_trials,
            &self.seeds,
            reward,
        )?;
        Self::print_report(&general);
        Self::print_report(&targeted);
        self.commit_json(
            ArtefactId::Z,
            "general",
            "results/general.json",
            &general,
            &[],
        )?;
        self.commit_json(
            ArtefactId::Z,
            "targeted",
            "results/targeted.json",
            &targeted,
            &[],
        )?;
        let verdicts = evaluate_requirements(&[
            MetricSummary::from(&general),
            MetricSummary::from(&targeted),
        ])?;
        Ok(Self::print_verdicts(&verdicts))
    }

    pub fn traces(&mut self) -> Result<Outcome, CliError> {
        self.gate(ArtefactId::AA)?;
        let (model, _) = self.model()?;
        let cfg = self.cfg.clone();
        let path = self.dir.join("traces/traces.jsonl");
        fs::create_dir_all(path.parent().unwrap())?;
        let summary = collect_traces(
            &cfg.world,
            cfg.plans.trace_trials,
            &self.seeds,
            &cfg.ddpg.reward,
            &path,
            |_| model.policy(),
        )?;
        Self::print_report(&summary.report);
        self.commit_file(ArtefactId::AA, "traces", &path, &[])?;
        self.commit_json(
            ArtefactId::AA,
            "trace-summary",
            "results/trace_summary.json",
            &summary.report,
            &[(ArtefactId::AA, "traces")],
        )?;
        Ok(Outcome::Pass)
    }

    pub fn abstract_traces(&mut self) -> Result<Outcome, CliError> {
        self.gate(ArtefactId::AA)?;
        let traces = self.checked_payload(ArtefactId::AA, "traces")?;
        let dtmc = estimate_dtmc_from_file(&traces, &self.cfg.abstraction)?;
        let path = self.dir.join("dtmc/model.dtmc");
        fs::create_dir_all(path.parent().unwrap())?;
        export_dtmc(&path, &dtmc)?;
        println!(
            "DTMC: {} states, {} transitions (config {})",
            dtmc.n_states(),
            dtmc.n_transitions(),
            dtmc.config_hash()
        );
        self.commit_file(ArtefactId::AA, "dtmc", &path, &[(ArtefactId::AA, "traces")])?;
        Ok(Outcome::Pass)
    }

    fn committed_dtmc(&self) -> Result<Dtmc, CliError> {
        Ok(import_dtmc(&self.checked_payload(ArtefactId::AA, "dtmc")?)?)
    }

    pub fn check(&mut self, props: Option<&Path>) -> Result<Outcome, CliError> {
        self.gate(ArtefactId::Z)?;
        let dtmc = self.committed_dtmc()?;
        let entries = check_properties(&dtmc, props)?;
        let results = ModelCheckingResults {
            dtmc_states: dtmc.n_states(),
            dtmc_transitions: dtmc.n_transitions(),
            config_hash: dtmc.config_hash().to_string(),
            entries,
        };
        let pass = results.entries.iter().all(|e| e.verdict != Some(false));
        self.commit_json(
            ArtefactId::Z,
            "model-checking",
            "results/model_checking.json",
            &results,
            &[(ArtefactId::AA, "dtmc")],
        )?;
        Ok(Outcome::of(pass))
    }

    pub fn report(&mut self) -> Result<Outcome, CliError> {
        let reports = generate_report(&self.ledger)?;
        self.write("reports/stage4.md", reports.stage4.as_bytes())?;
        println!("wrote reports/stage4.md");
        if let Some(s5) = &reports.stage5 {
            self.write("reports/stage5.md", s5.as_bytes())?;
            println!("wrote reports/stage5.md");
        }
        Ok(Self::print_verdicts(&reports.verdicts))
    }

    pub fn integrate(&mut self) -> Result<Outcome, CliError> {
        self.gate(ArtefactId::EE)?;
        let (model, model_hash) = self.model()?;
        let cfg = self.cfg.clone();
        let scenarios = json!({
            "world": cfg.world,
            "spawn": SpawnMode::Random,
            "trials": cfg.plans.integration_trials,
            "first_seed": self.seeds.seed(Regime::Integration, 0),
            "error_window": cfg.plans.error_window,
        });
        self.commit_json(
            ArtefactId::EE,
            "operational-scenarios",
            "plans/operational_scenarios.json",
            &scenarios,
            &[],
        )?;
        self.gate(ArtefactId::DD)?;

        let (report, traces) = integration_trials(
            &model,
            &cfg.world,
            cfg.plans.integration_trials,
            &self.seeds,
            &cfg.ddpg.reward,
        )?;
        Self::print_report(&report);
        let world = self.evaluation_world()?;
        let mut log = Vec::new();
        let mut n_entries = 0;
        for trace in &traces {
            for entry in log_erroneous(&world, trace, cfg.plans.error_window, &model_hash) {
                serde_json::to_writer(&mut log, &entry)?;
                log.write_all(b"\n")?;
                n_entries += 1;
            }
        }
        println!("erroneous behaviour entries: {n_entries}");
        let path = self.write("results/erroneous_behaviour.jsonl", &log)?;
        self.commit_file(ArtefactId::DD, "erroneous-behaviour", &path, &[])?;

        let verdicts = evaluate_requirements(&[MetricSummary::from(&report)])?;
        let results = json!({ "report": report, "verdicts": verdicts });
        self.commit_json(
            ArtefactId::FF,
            "integration",
            "results/integration.json",
            &results,
            &[],
        )?;
        Ok(Self::print_verdicts(&verdicts))
    }

    pub fn verify_ledger(&self) -> Result<Outcome, CliError> {
        let report = verify_chain(&self.dir)?;
        if report.passed() {
            println!("ledger verified: {} records", report.records);
            return Ok(Outcome::Pass);
        }
        for f in &report.failures {
            println!(
                "line {}{}: {}",
                f.line,
                f.seq.map(|s| format!(" (seq {s})")).unwrap_or_default(),
                f.message
            );
        }
        Err(AssuranceError::Integrity(format!(
            "{} problem(s) in {} records",
            report.failures.len(),
            report.records
        ))
        .into())
    }

    /// Every stage in order. Verdict failures do not stop the pipeline.
    pub fn run_all(&mut self) -> Result<Outcome, CliError> {
        type Stage = fn(&mut Run) -> Result<Outcome, CliError>;
        let stages: [(&str, Stage); 11] = [
            ("scope", Run::scope),
            ("requirements", Run::requirements),
            ("plan", Run::plan),
            ("train", Run::train),
            ("test", Run::test),
            ("verify", Run::verify),
            ("traces", Run::traces),
            ("abstract", Run::abstract_traces),
            ("check", |r| r.check(None)),
            ("report", Run::report),
            ("integrate", Run::integrate),
        ];
        let mut outcome = Outcome::Pass;
        for (name, stage) in stages {
            println!("== {name}");
            outcome = outcome.and(stage(self)?);
        }
        println!("== ledger verify");
        self.verify_ledger()?;
        Ok(outcome)
    }
}

fn property_text(props: Option<&Path>) -> Result<String, CliError> {
    Ok(match props {
        Some(p) => fs::read_to_string(p)?,
        None => PROPERTIES.to_string(),
    })
}

/// Evaluates every property in `props` (default: the built-in safety
/// properties) and prints one line per property.
fn check_properties(
    dtmc: &Dtmc,
    props: Option<&Path>,
) -> Result<Vec<ModelCheckingEntry>, CliError> {
    let properties = parse_properties(&property_text(props)?)?;
    let mut entries = Vec::with_capacity(properties.len());
    for p in &properties {
        let result = evaluate(dtmc, &p.formula)?;
        let entry = ModelCheckingEntry::from_result(&p.name, &p.formula.to_string(), &result);
        println!(
            "{}: {} = {}{} [{}]",
            entry.name,
            entry.formula,
            entry.value.map_or("infinity".into(), |v| format!("{v:.6}")),
            match entry.verdict {
                Some(true) => " -> PASS",
                Some(false) => " -> FAIL",
                None => "",
            },
            entry.method
        );
        entries.push(entry);
    }
    Ok(entries)
}

/// Checks a DTMC file outside any run directory; nothing is recorded.
pub fn check_model_file(model: &Path, props: Option<&Path>) -> Result<Outcome, CliError> {
    let dtmc = import_dtmc(model)?;
    let entries = check_properties(&dtmc, props)?;
    Ok(Outcome::of(
        entries.iter().all(|e| e.verdict != Some(false)),
    ))
}
