use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMOKE: &str = "seed = 1\n\
[ddpg]\nwarmup_steps = 200\n\
[plans]\ntrain_episodes = 5\ninternal_trials = 40\ngeneral_trials = 30\n\
targeted_trials = 20\ntrace_trials = 60\nintegration_trials = 20\n";

fn amlas(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amlas"))
        .arg("--out")
        .arg(dir.join("run"))
        .arg("--config")
        .arg(dir.join("smoke.toml"))
        .args(args)
        .env_remove("AMLAS_SEED")
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .unwrap()
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("smoke.toml"), SMOKE).unwrap();
    let run = tmp.path().join("run");
    (tmp, run)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

#[test]
fn unknown_subcommand_and_flag_exit_2() {
    let (tmp, _) = setup();
    assert_eq!(code(&amlas(tmp.path(), &["bogus"])), 2);
    assert_eq!(code(&amlas(tmp.path(), &["scope", "--frobnicate"])), 2);
}

#[test]
fn bad_config_exits_2() {
    let (tmp, _) = setup();
    fs::write(tmp.path().join("smoke.toml"), "[plans]\nnot_a_key = 1\n").unwrap();
    let o = amlas(tmp.path(), &["scope"]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("configuration error"));
}

#[test]
fn stages_are_gated_on_their_inputs() {
    let (tmp, run) = setup();
    let o = amlas(tmp.path(), &["requirements"]);
    assert_eq!(code(&o), 2);
    assert!(
        text(&o).contains("H cannot be recorded: missing input artefact(s) E"),
        "{}",
        text(&o)
    );

    assert_eq!(code(&amlas(tmp.path(), &["scope"])), 0);
    assert_eq!(code(&amlas(tmp.path(), &["requirements"])), 0);
    let o = amlas(tmp.path(), &["train"]);
    assert_eq!(code(&o), 2);
    assert!(
        text(&o).contains("missing input artefact(s) N, O"),
        "{}",
        text(&o)
    );

    assert_eq!(code(&amlas(tmp.path(), &["plan"])), 0);
    assert_eq!(code(&amlas(tmp.path(), &["train"])), 0);
    let o = amlas(tmp.path(), &["check"]);
    assert_eq!(code(&o), 2);
    assert!(
        text(&o).contains("missing artefact AA[dtmc]"),
        "{}",
        text(&o)
    );
    let o = amlas(tmp.path(), &["report"]);
    assert_eq!(code(&o), 2);
    assert!(
        text(&o).contains("missing artefact X[internal]"),
        "{}",
        text(&o)
    );

    assert_eq!(code(&amlas(tmp.path(), &["ledger", "verify"])), 0);
    assert!(run.join("models/actor.amlp").is_file());
}

#[test]
fn run_all_produces_a_verified_ledger_and_reports() {
    let (tmp, run) = setup();
    let o = amlas(tmp.path(), &["run-all"]);
    // Five training episodes cannot meet SR1, so verdicts fail.
    assert_eq!(code(&o), 1, "{}", text(&o));
    let out = text(&o);
    assert!(out.contains("ledger verified"));
    for id in [
        "A", "E", "H", "P", "U", "V", "X", "Z", "AA", "DD", "EE", "FF",
    ] {
        assert!(
            out.contains(&format!("committed {id}[")),
            "{id} not committed"
        );
    }
    for f in [
        "ledger.txt",
        "reports/stage4.md",
        "reports/stage5.md",
        "dtmc/model.dtmc",
        "properties/eq3.pctl",
        "traces/traces.jsonl",
    ] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert_eq!(code(&amlas(tmp.path(), &["ledger", "verify"])), 0);

    let first = fs::read(run.join("reports/stage5.md")).unwrap();
    let o = amlas(tmp.path(), &["report"]);
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("-> FAIL"));
    assert_eq!(fs::read(run.join("reports/stage5.md")).unwrap(), first);

    // Property checks alone: a custom query-only file has no bounds to fail.
    fs::write(tmp.path().join("q.pctl"), "P=? [ F m=3 ]\n").unwrap();
    let props = tmp.path().join("q.pctl");
    let o = amlas(tmp.path(), &["check", "--props", props.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    fs::write(&props, "P>=0.6 [ F m=3 \n").unwrap();
    assert_eq!(
        code(&amlas(
            tmp.path(),
            &["check", "--props", props.to_str().unwrap()]
        )),
        2
    );

    // A DTMC file can be checked on its own.
    let model = run.join("dtmc/model.dtmc");
    let o = Command::new(env!("CARGO_BIN_EXE_amlas"))
        .args([
            "check",
            "--model",
            model.to_str().unwrap(),
            "--props",
            props.to_str().unwrap(),
        ])
        .arg("--out")
        .arg(tmp.path().join("unused"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 2, "malformed props still rejected");
    fs::write(&props, "P=? [ F m=3 ]\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_amlas"))
        .args([
            "check",
            "--model",
            model.to_str().unwrap(),
            "--props",
            props.to_str().unwrap(),
        ])
        .arg("--out")
        .arg(tmp.path().join("unused"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("P=? [ F m=3 ] = "));
    assert!(!tmp.path().join("unused").exists());

    // Tampering with a committed payload is an integrity failure.
    let internal = fs::read_dir(run.join("artifacts"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with("X-"))
        .unwrap();
    fs::write(internal.join("payload"), "{}").unwrap();
    let o = amlas(tmp.path(), &["ledger", "verify"]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("hash mismatch"));
    assert_eq!(code(&amlas(tmp.path(), &["report"])), 2);
}

#[test]
fn seed_flag_and_environment_agree() {
    let (tmp, run) = setup();
    let exe = env!("CARGO_BIN_EXE_amlas");
    let a = Command::new(exe)
        .args(["--out", run.to_str().unwrap(), "scope"])
        .env("AMLAS_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(code(&a), 0);
    let saved = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(saved.starts_with("seed = 7"), "{saved}");
    let _ = tmp;
}
