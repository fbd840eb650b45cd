mod common;

use common::{build, nel, ok, run, run_with_stdin};
use nel_core::classifier::AnnotatedDocument;
use nel_core::evaluation::EvalReport;

#[test]
fn no_arguments_prints_usage() {
    let out = run(&[]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage"), "{text}");
}

#[test]
fn unknown_subcommand_fails() {
    let out = run(&["frobnicate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_store_is_a_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("nowhere");
    let out = run(&["train-lm", "--store", store.to_str().unwrap(), "--out", "lm.bin"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: loading record store"), "{err}");
}

#[test]
fn full_pipeline() {
    let fx = build();
    let model = fx.model();

    // empty stdin gives no output
    let out = run_with_stdin(&["annotate", "--model", &model], "");
    assert_eq!(ok(&out), "");

    // one JSON line per input line, offsets inside the text
    let texts: Vec<&str> = fx.test_documents().iter().map(|d| d.text.as_str()).collect();
    let out = ok(&run_with_stdin(&["annotate", "--model", &model], &(texts.join("\n") + "\n")));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), texts.len());
    let mut linked = 0;
    for (line, text) in lines.iter().zip(&texts) {
        let doc: AnnotatedDocument = serde_json::from_str(line).unwrap();
        assert_eq!(doc.text, *text);
        for a in &doc.annotations {
            assert!(a.start < a.end && a.end <= text.len());
            assert!(!a.candidates.is_empty() && a.candidates.len() <= 5);
            assert!(a.candidates.iter().any(|c| c.qid == a.qid));
        }
        linked += doc.annotations.len();
    }
    assert!(linked > 0);

    // --in gives the same lines as stdin
    std::fs::write(fx.path("input.txt"), texts.join("\n")).unwrap();
    let from_file = ok(&run(&["annotate", "--model", &model, "--in", &fx.p("input.txt")]));
    assert_eq!(from_file, out);

    // evaluate writes a parseable report
    let report_path = fx.p("report.json");
    let summary = ok(&run(&[
        "evaluate",
        "--model",
        &model,
        "--dataset",
        &fx.p("test.jsonl"),
        "--report",
        &report_path,
    ]));
    assert!(summary.starts_with("micro P"));
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report.per_document.len(), texts.len());
    assert!(report.micro_f1 > 0.5, "{report:?}");
}

#[test]
fn sequential_flag_gives_identical_models() {
    let fx = build();
    let seq = fx.p("model-seq.bin");
    ok(&run(&[
        "--sequential",
        "train",
        "--dataset",
        &fx.p("train.jsonl"),
        "--store",
        &fx.p("store"),
        "--dict",
        &fx.p("dict.bin"),
        "--lm",
        &fx.p("lm.bin"),
        "--pagerank",
        &fx.p("pagerank.bin"),
        "--out",
        &seq,
        "--beta",
        "0.5",
        "--eta",
        "0.01",
        "--k",
        "3",
    ]));
    assert_eq!(std::fs::read(&seq).unwrap(), std::fs::read(fx.model()).unwrap());
}

#[test]
fn config_file_and_environment() {
    let fx = build();
    let sidecar = std::fs::read_to_string(format!("{}.conf", fx.model())).unwrap();
    assert!(sidecar.contains("store = "));

    // a config that disagrees with the model is refused
    let conf = fx.path("bad.conf");
    std::fs::write(&conf, format!("{sidecar}k = 1\n")).unwrap();
    let out = run_with_stdin(&["annotate", "--model", &fx.model(), "--config", conf.to_str().unwrap()], "x\n");
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("trained with k = 3"));

    // environment variables override the sidecar
    let out = nel()
        .args(["annotate", "--model", &fx.model(), "--in", "/dev/null"])
        .env("NEL_DICT", fx.path("missing.bin"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.bin"));
}

#[test]
fn version_mismatch_is_refused() {
    let fx = build();
    let mut bytes = std::fs::read(fx.model()).unwrap();
    bytes[8] = bytes[8].wrapping_add(7);
    std::fs::write(fx.model(), bytes).unwrap();
    let out = run_with_stdin(&["annotate", "--model", &fx.model()], "");
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("version"), "{err}");
}

#[test]
fn upsert_adds_items_and_marks_artifacts_stale() {
    let fx = build();
    let store = fx.p("store");
    let mut rec = fx.world.records[0].clone();
    rec.id = nel_core::ItemId::from_raw(999_999);
    rec.labels.insert("en".into(), "Brand New Entity".into());
    let mut not_kept = nel_core::ItemRecord::new(nel_core::ItemId::from_raw(999_998));
    not_kept.labels.insert("en".into(), "Untyped".into());
    let lines = [nel_core::synthetic::entity_json(&rec), nel_core::synthetic::entity_json(&not_kept)];
    std::fs::write(fx.path("new.json"), lines.join("\n")).unwrap();

    let out = ok(&run(&["upsert", "--store", &store, "--items", &fx.p("new.json")]));
    let summary: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(summary["inserted"], 1);
    assert_eq!(summary["skipped"], 1);

    // the same lines again change nothing
    let out = ok(&run(&["upsert", "--store", &store, "--items", &fx.p("new.json")]));
    let again: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(again["unchanged"], 1);
    assert_eq!(again["generation"], summary["generation"]);

    // the old dictionary is now stale but still loads
    let out = nel()
        .args(["annotate", "--model", &fx.model(), "--in", "/dev/null"])
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("older record store"));

    // rebuilt artifacts pick the new label up
    ok(&run(&["build-dict", "--store", &store, "--out", &fx.p("dict.bin")]));
    let dict = nel_core::SurfaceDictionary::load(&fx.path("dict.bin")).unwrap();
    assert_eq!(dict.lookup("Brand New Entity"), Some(&[rec.id][..]));
}
