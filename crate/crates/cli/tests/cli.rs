mod common;

use cfx_cli::commands::CounterfactualsResponse;
use cfx_core::{CfModel, MetricsReport};
use common::{cfx, data_dir, fixture, stderr, stdout, trained};

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_schema_is_a_usage_error() {
    let out = cfx(&["train", "--data", "x.csv", "--out", "m.cfx"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--schema"));
}

#[test]
fn unknown_constraint_mode_is_a_usage_error() {
    let out = cfx(&[
        "train",
        "--data",
        "x.csv",
        "--schema",
        "s.json",
        "--out",
        "m.cfx",
        "--constraint",
        "ternary",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cfx(&[
        "train",
        "--data",
        s(&dir.path().join("absent.csv")),
        "--schema",
        s(&fixture("synth.schema.json")),
        "--out",
        s(&dir.path().join("m.cfx")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("absent.csv"));
}

#[test]
fn zero_epochs_writes_a_bundle_and_warns() {
    let t = trained();
    let model = t.path("zero.cfx");
    let out = cfx(&[
        "train",
        "--data",
        s(&t.csv),
        "--schema",
        s(&fixture("synth.schema.json")),
        "--config",
        s(&fixture("quick.config.json")),
        "--epochs",
        "0",
        "--out",
        s(&model),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("zero epochs"));
    let m = CfModel::load(&model).unwrap();
    assert!(m.summary.epochs.is_empty());
}

#[test]
fn train_logs_loss_components_and_stores_a_report() {
    let t = trained();
    let model = t.path("logged.cfx");
    let report = t.path("logged_report");
    let out = cfx(&[
        "train",
        "--data",
        s(&t.csv),
        "--schema",
        s(&fixture("synth.schema.json")),
        "--config",
        s(&fixture("quick.config.json")),
        "--constraint",
        "binary",
        "--lr",
        "0.02",
        "--batch",
        "32",
        "--out",
        s(&model),
        "--report",
        s(&report),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let log = stderr(&out);
    for word in ["epoch 4", "validity", "proximity", "feasibility", "sparsity", "kl"] {
        assert!(log.contains(word), "log lacks {word}");
    }
    let bundle = cfx_core::CFModelBundle::load(&model).unwrap();
    assert_eq!(bundle.config.learning_rate, 0.02);
    assert_eq!(bundle.config.batch_size, 32);
    assert_eq!(bundle.config.constraint_mode, cfx_core::ConstraintMode::Binary);
    let on_disk = cfx_core::metrics::read_report(report.with_extension("json")).unwrap();
    assert_eq!(bundle.report, Some(on_disk));
    assert!(report.with_extension("csv").exists());
}

#[test]
fn evaluate_matches_library_and_is_repeatable() {
    let t = trained();
    let run = |name: &str| {
        let prefix = t.path(name);
        let out = cfx(&[
            "evaluate",
            "--model",
            s(&t.model),
            "--data",
            s(&t.csv),
            "--seed",
            "11",
            "--report",
            s(&prefix),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        (
            std::fs::read(prefix.with_extension("json")).unwrap(),
            std::fs::read(prefix.with_extension("csv")).unwrap(),
        )
    };
    let a = run("eval_a");
    assert_eq!(a, run("eval_b"));

    let model = CfModel::load(&t.model).unwrap();
    let table = cfx_core::load_and_clean(&t.csv, &model.schema).unwrap();
    let test = model.splits(&table).unwrap().test;
    let (_, library) = model.evaluate(&test, 11).unwrap();
    let cli: MetricsReport = serde_json::from_slice(&a.0).unwrap();
    assert_eq!(cli, library);

    let out = cfx(&[
        "evaluate",
        "--model",
        s(&t.model),
        "--data",
        s(&t.csv),
        "--split",
        "val",
    ]);
    assert!(out.status.success());
    let val: MetricsReport = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(val.n, model.splits(&table).unwrap().validation.len());
}

#[test]
fn evaluate_rejects_a_bundle_from_another_format_version() {
    let t = trained();
    let text = std::fs::read_to_string(&t.model).unwrap();
    let bad = t.path("v2.cfx");
    std::fs::write(&bad, text.replacen("\"format_version\": 1", "\"format_version\": 2", 1)).unwrap();
    let out = cfx(&["evaluate", "--model", s(&bad), "--data", s(&t.csv)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("format version 2"));
}

#[test]
fn generate_returns_k_results() {
    let t = trained();
    let out = cfx(&[
        "generate",
        "--model",
        s(&t.model),
        "--instance",
        s(&fixture("synth_input.json")),
        "--k",
        "5",
        "--seed",
        "2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let resp: CounterfactualsResponse = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(resp.results.len(), 5);
    for r in &resp.results {
        assert_eq!(r.cf.get("group"), r.input.get("group"));
        assert_eq!(r.sparsity_count, r.changed_features.len());
    }
    let again = cfx(&[
        "generate",
        "--model",
        s(&t.model),
        "--instance",
        s(&fixture("synth_input.json")),
        "--k",
        "5",
        "--seed",
        "2",
    ]);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn generate_lists_invalid_fields() {
    let t = trained();
    let input = t.path("bad_input.json");
    std::fs::write(
        &input,
        r#"{"age": 30, "hours": 20, "level": "low", "color": "purple", "group": "a"}"#,
    )
    .unwrap();
    let out = cfx(&["generate", "--model", s(&t.model), "--instance", s(&input)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("color"), "{}", stderr(&out));
    let out = cfx(&[
        "generate",
        "--model",
        s(&t.model),
        "--instance",
        s(&fixture("synth_input.json")),
        "--k",
        "51",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("50"));
}

#[test]
fn embed_is_seeded_and_capped() {
    let t = trained();
    let run = |name: &str| {
        let tsv = t.path(name);
        let out = cfx(&[
            "embed",
            "--model",
            s(&t.model),
            "--data",
            s(&t.csv),
            "--n",
            "40",
            "--seed",
            "7",
            "--out",
            s(&tsv),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read_to_string(tsv).unwrap()
    };
    let a = run("a.tsv");
    assert_eq!(a, run("b.tsv"));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "x\ty\tsource\tfeasible");
    assert_eq!(lines.len(), 1 + 3 * 40);
    assert!(lines[1..].iter().all(|l| l.ends_with("\t0") || l.ends_with("\t1")));

    let out = cfx(&["embed", "--model", s(&t.model), "--data", s(&t.csv), "--n", "6000"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("5000"));
}

#[test]
fn serve_reports_a_busy_port() {
    let t = trained();
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = cfx(&["serve", "--model", s(&t.model), "--port", &port]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("binding"));
}

/// The worked-example person on a briefly trained Adult model.
#[test]
fn adult_worked_example_keeps_immutables() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("adult.cfx");
    let out = cfx(&[
        "train",
        "--data",
        s(&data_dir().join("adult.csv")),
        "--schema",
        s(&data_dir().join("adult.schema.json")),
        "--epochs",
        "3",
        "--seed",
        "42",
        "--out",
        s(&model),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = cfx(&[
        "generate",
        "--model",
        s(&model),
        "--instance",
        s(&fixture("worked_example.json")),
        "--k",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let resp: CounterfactualsResponse = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(resp.results.len(), 1);
    let r = &resp.results[0];
    for f in ["race", "gender"] {
        assert_eq!(r.cf.get(f), r.input.get(f));
    }
}
