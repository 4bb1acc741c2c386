use std::fs;

use amlas_core::abstraction::{
    estimate_dtmc_from_file, export_dtmc, import_dtmc, AbstractionConfig,
};
use amlas_core::agent::DdpgHyperparams;
use amlas_core::assurance::{generate_report, verify_chain, ArtefactId, Ledger};
use amlas_core::env::{read_trace_file, RandomPolicy, WorldConfig};
use amlas_core::pctl::{evaluate, parse};
use amlas_core::plans::{collect_traces, internal_test, train, SeedPlan, TrainedModel};

fn small_hp() -> DdpgHyperparams {
    DdpgHyperparams {
        hidden: vec![16, 16],
        warmup_steps: 100,
        ..DdpgHyperparams::default()
    }
}

#[test]
fn traces_to_dtmc_to_checked_properties() {
    let tmp = tempfile::tempdir().unwrap();
    let traces = tmp.path().join("traces.jsonl");
    let reward = DdpgHyperparams::default().reward;
    let summary = collect_traces(
        &WorldConfig::default(),
        300,
        &SeedPlan::new(11),
        &reward,
        &traces,
        RandomPolicy::new,
    )
    .unwrap();
    let blocks = read_trace_file(&traces).unwrap();
    assert_eq!(blocks.len(), 300);

    let dtmc = estimate_dtmc_from_file(&traces, &AbstractionConfig::default()).unwrap();
    let model = tmp.path().join("model.dtmc");
    export_dtmc(&model, &dtmc).unwrap();
    let reloaded = import_dtmc(&model).unwrap();
    assert_eq!(reloaded.states(), dtmc.states());
    assert_eq!(reloaded.config_hash(), dtmc.config_hash());

    let collided = blocks
        .iter()
        .filter(|b| b.rows.last().unwrap().m == 2)
        .count() as f64
        / 300.0;
    let p = evaluate(&reloaded, &parse("P=? [ F m=2 ]").unwrap())
        .unwrap()
        .value;
    assert!((p - collided).abs() <= 0.05, "{p} vs {collided}");
    let r = evaluate(
        &reloaded,
        &parse(r#"R{"unsafe"}=? [ F (m=2 | m=3 | e=0) ]"#).unwrap(),
    )
    .unwrap()
    .value;
    assert!(
        (r - summary.report.mean_unsafe_time).abs() <= 2.0,
        "{r} vs {}",
        summary.report.mean_unsafe_time
    );
}

#[test]
fn saved_model_reproduces_internal_results() {
    let tmp = tempfile::tempdir().unwrap();
    let hp = small_hp();
    let config = WorldConfig::default();
    let seeds = SeedPlan::new(5);
    let (model, log) = train(&config, &hp, 3, &seeds).unwrap();
    assert_eq!(log.entries.len(), 3);
    model.save(tmp.path()).unwrap();
    let loaded = TrainedModel::load(tmp.path(), &hp.hidden).unwrap();

    let a = internal_test(&model, &config, 25, &seeds, &hp.reward).unwrap();
    let b = internal_test(&loaded, &config, 25, &seeds, &hp.reward).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ledger_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let mut ledger = Ledger::open(&run).unwrap();
    let commit = |l: &mut Ledger, id: ArtefactId, label: &str, body: &str| {
        let p = tmp.path().join(format!("{id}-{label}"));
        fs::write(&p, body).unwrap();
        l.record_artifact(id, label, &p, &[]).unwrap();
    };
    for id in [
        ArtefactId::A,
        ArtefactId::B,
        ArtefactId::C,
        ArtefactId::D,
        ArtefactId::E,
    ] {
        commit(&mut ledger, id, "scope", "fixture");
    }
    commit(&mut ledger, ArtefactId::H, "requirements", "fixture");
    for id in [
        ArtefactId::L,
        ArtefactId::M,
        ArtefactId::N,
        ArtefactId::O,
        ArtefactId::P,
    ] {
        commit(&mut ledger, id, "plan", "fixture");
    }
    commit(&mut ledger, ArtefactId::U, "log", "fixture");
    commit(&mut ledger, ArtefactId::V, "actor", "fixture");

    let hp = small_hp();
    let (model, _) = train(&WorldConfig::default(), &hp, 2, &SeedPlan::new(9)).unwrap();
    let internal = internal_test(
        &model,
        &WorldConfig::default(),
        20,
        &SeedPlan::new(9),
        &hp.reward,
    )
    .unwrap();
    commit(
        &mut ledger,
        ArtefactId::X,
        "internal",
        &serde_json::to_string(&internal).unwrap(),
    );

    assert!(verify_chain(&run).unwrap().passed());
    let reopened = Ledger::open(&run).unwrap();
    let first = generate_report(&reopened).unwrap();
    let second = generate_report(&reopened).unwrap();
    assert_eq!(first.stage4, second.stage4);
    assert!(first.stage5.is_none());
    assert!(first.stage4.contains("Goal reached with e>0 (%)"));
}
