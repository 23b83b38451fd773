// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use evsteer_core::corpus::{load_corpus, CorpusKind};
use evsteer_core::evalkit::{topic_adherence_prompt, FixtureEntry};
use evsteer_core::evcore::evec::{load_ev, save_ev};
use evsteer_core::evcore::EmotionVector;
use evsteer_core::nanoformer::nfmt;
use evsteer_core::pipeline::{continuation_prompt, respond};
use evsteer_core::steer::SteeringConfig;
use serde_json::Value;

fn evctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evctl"))
        .args(args)
        .env_remove("EVSTEER_FIXTURES")
        .env_remove("EVSTEER_JUDGE_URL")
        .output()
        .expect("evctl runs")
}

fn ok_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Model, a small planted corpus and its extracted set, built once.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    model: PathBuf,
    corpus: PathBuf,
    set: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let (model, corpus, set) = (root.join("m.nfmt"), root.join("c.jsonl"), root.join("set"));
        ok_json(&evctl(&["init-model", "--out", s(&model)]));
        ok_json(&evctl(&["gen-corpus", "--out", s(&corpus), "--per-emotion", "6", "--neutral", "6"]));
        ok_json(&evctl(&["extract", "--model", s(&model), "--corpus", s(&corpus), "--out", s(&set)]));
        Fixture { _dir: dir, root, model, corpus, set }
    })
}

fn scratch(name: &str) -> PathBuf {
    let p = fixture().root.join(name);
    std::fs::create_dir_all(&p).unwrap();
    p
}

#[test]
fn extract_single_emotion_and_rerun_is_byte_identical() {
    let f = fixture();
    let dir = scratch("extract");
    let out = dir.join("joy.evec");
    let args = ["extract", "--model", s(&f.model), "--corpus", s(&f.corpus), "--emotion", "joy", "--out", s(&out)];
    let first = ok_json(&evctl(&args));
    let bytes = std::fs::read(&out).unwrap();
    let manifest = std::fs::read(dir.join("joy.evec.manifest.json")).unwrap();
    let second = ok_json(&evctl(&args));
    assert_eq!(std::fs::read(&out).unwrap(), bytes);
    assert_eq!(std::fs::read(dir.join("joy.evec.manifest.json")).unwrap(), manifest);
    assert_eq!(first, second);

    let ev = load_ev(&out).unwrap();
    assert_eq!(ev.num_layers(), 4);
    assert_eq!(ev.n_queries(), 6);
    assert_eq!(first["vectors"]["joy"]["norms"].as_array().unwrap().len(), 4);

    let m: Value = serde_json::from_slice(&manifest).unwrap();
    for key in ["run_id", "command", "config_digest", "model_digest", "corpus_digest", "tool_version"] {
        assert!(m[key].is_string(), "{key}");
    }
    assert!(m["outputs"].as_object().unwrap().contains_key(s(&out)));
}

#[test]
fn extract_set_matches_manifest_outputs() {
    let f = fixture();
    let m: Value = serde_json::from_slice(&std::fs::read(f.set.join("manifest.json")).unwrap()).unwrap();
    let outputs = m["outputs"].as_object().unwrap();
    assert_eq!(outputs.len(), 6);
    for (path, digest) in outputs {
        assert_eq!(digest, &evsteer_core::digest::sha256_hex(std::fs::read(path).unwrap()));
    }
}

#[test]
fn extract_without_records_fails_validation() {
    let f = fixture();
    let dir = scratch("empty");
    let corpus = dir.join("joy_only.jsonl");
    std::fs::write(&corpus, "{\"id\":\"a\",\"emotion\":\"joy\",\"query\":\"hello there\"}\n").unwrap();
    let out = evctl(&[
        "extract",
        "--model",
        s(&f.model),
        "--corpus",
        s(&corpus),
        "--emotion",
        "fear",
        "--out",
        s(&dir.join("x.evec")),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let strict = evctl(&[
        "extract",
        "--model",
        s(&f.model),
        "--corpus",
        s(&f.corpus),
        "--strict-eqplus",
        "--out",
        s(&dir.join("s")),
    ]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("composition"));
}

fn steer(blend: &str) -> Value {
    let f = fixture();
    ok_json(&evctl(&[
        "steer",
        "--model",
        s(&f.model),
        "--ev",
        s(&f.set),
        "--blend",
        blend,
        "--prompt",
        "what shall we cook",
        "--max-new",
        "12",
    ]))
}

#[test]
fn steer_noop_blends_match_baseline() {
    for blend in ["joy:0", "joy:1,joy:-1", "base:0"] {
        let v = steer(blend);
        assert_eq!(v["steered"], v["baseline"], "{blend}");
        assert_eq!(v["logit_delta"]["l2"].as_f64(), Some(0.0), "{blend}");
    }
}

#[test]
fn steer_joy_adds_joy_markers() {
    let count = |t: &Value| t.as_str().unwrap().chars().filter(|c| "ABCD".contains(*c)).count();
    let v = steer("joy:1");
    assert!(count(&v["steered"]) > count(&v["baseline"]), "{v}");
    let top = v["logit_delta"]["top_increase"][0]["text"].as_str().unwrap();
    assert!("ABCD".contains(top), "{top}");
}

#[test]
fn steer_rejects_bad_input() {
    let f = fixture();
    for (blend, layers) in [("nope:1", "0"), ("joy", "0"), ("joy:1", "7")] {
        let out = evctl(&[
            "steer",
            "--model",
            s(&f.model),
            "--ev",
            s(&f.set),
            "--blend",
            blend,
            "--prompt",
            "x",
            "--layers",
            layers,
        ]);
        assert_eq!(out.status.code(), Some(1), "{blend} {layers}");
    }
    let missing =
        evctl(&["steer", "--model", "/nonexistent.nfmt", "--ev", s(&f.set), "--blend", "joy:1", "--prompt", "x"]);
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(evctl(&["steer"]).status.code(), Some(1));
    assert_eq!(evctl(&["--help"]).status.code(), Some(0));
}

#[test]
fn verify_passes_on_desk_and_fails_for_huge_alpha() {
    let f = fixture();
    let base = ["verify", "--model", s(&f.model), "--ev", s(&f.set), "--corpus", s(&f.corpus)];
    let v = ok_json(&evctl(&base));
    assert_eq!(v["pass"], true);
    let theorems: Vec<&str> = v["reports"].as_array().unwrap().iter().map(|r| r["theorem"].as_str().unwrap()).collect();
    for t in ["first_order", "monotonic_gain", "semantic_bound", "additivity", "fisher"] {
        assert!(theorems.contains(&t), "{t}");
    }

    let mut huge = base.to_vec();
    huge.extend(["--alpha", "10,5,2.5"]);
    let out = evctl(&huge);
    assert_eq!(out.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["reports"][0]["theorem"], "first_order");
    assert_eq!(v["reports"][0]["pass"], false);
}

#[test]
fn verify_linear_stub_is_exact() {
    let v = ok_json(&evctl(&["verify", "--linear-stub"]));
    assert_eq!(v["pass"], true);
    assert!(v["context"]["max_first_order_residual"].as_f64().unwrap() <= 1e-9);
}

fn eval(out: &Path, extra: &[&str]) -> Output {
    let f = fixture();
    let mut args = vec!["eval", "--model", s(&f.model), "--corpus", s(&f.corpus), "--ev", s(&f.set), "--out", s(out)];
    args.extend_from_slice(extra);
    evctl(&args)
}

#[test]
fn eval_eps_ordering_and_tec_layout() {
    let out = scratch("eval");
    let v = ok_json(&eval(&out, &["--metrics", "eps,tec", "--tec-alpha", "0,1,2,4"]));
    let eps = &v["metrics"]["eps"]["by_alpha"];
    let (neg, zero, pos) = (eps["-1"].as_f64().unwrap(), eps["0"].as_f64().unwrap(), eps["1"].as_f64().unwrap());
    assert!(pos > zero && zero > neg, "{eps}");
    let matrices = v["metrics"]["tec"].as_array().unwrap();
    assert_eq!(matrices.len(), 5);
    for m in matrices {
        let cells = m["cells"].as_array().unwrap();
        assert_eq!(cells.len(), 6);
        assert!(cells.iter().all(|r| r.as_array().unwrap().len() == 4));
    }
    assert!(out.join("tec_matrix_joy.json").exists() && out.join("eps.json").exists());
}

#[test]
fn eval_ppl_is_reproducible_in_csv() {
    let a = scratch("ppl_a");
    let b = scratch("ppl_b");
    ok_json(&eval(&a, &["--metrics", "ppl", "--alpha", "0", "--format", "csv"]));
    ok_json(&eval(&b, &["--metrics", "ppl", "--alpha", "0", "--format", "csv"]));
    let (ta, tb) =
        (std::fs::read_to_string(a.join("ppl.csv")).unwrap(), std::fs::read_to_string(b.join("ppl.csv")).unwrap());
    assert_eq!(ta, tb);
    assert!(ta.starts_with("metric,query_id,model,ev,alpha,score\n"));
    assert_eq!(ta.lines().count(), 1 + 36);
}

#[test]
fn eval_judge_metrics_use_recorded_fixtures() {
    let f = fixture();
    let dir = scratch("judge");
    let no_judge = eval(&dir.join("out"), &["--metrics", "topic-adherence"]);
    assert_eq!(no_judge.status.code(), Some(1));

    let model = nfmt::load(&f.model).unwrap();
    let records = load_corpus(&f.corpus, CorpusKind::EmotionQuery, false).unwrap();
    let mut lines = String::new();
    for (i, r) in records.iter().enumerate() {
        let answer = respond(&model, &continuation_prompt(&r.query), &SteeringConfig::default(), 16).unwrap();
        let content = if i == 0 { "not json".to_string() } else { format!("{{\"topic_adherence\": {}}}", i % 2) };
        let entry = FixtureEntry::new(&topic_adherence_prompt(&r.query, &answer), content);
        lines.push_str(&serde_json::to_string(&entry).unwrap());
        lines.push('\n');
    }
    let fixtures = dir.join("fixtures.jsonl");
    std::fs::write(&fixtures, lines).unwrap();

    let out = dir.join("out");
    let run = Command::new(env!("CARGO_BIN_EXE_evctl"))
        .args(["eval", "--model", s(&f.model), "--corpus", s(&f.corpus), "--ev", s(&f.set), "--out", s(&out)])
        .args(["--metrics", "topic-adherence", "--alpha", "0"])
        .env("EVSTEER_FIXTURES", &fixtures)
        .output()
        .unwrap();
    let v = ok_json(&run);
    let ta = &v["metrics"]["topic_adherence"];
    assert_eq!(ta["invalid"], 1);
    let expected = (1..records.len()).filter(|i| i % 2 == 1).count() as f64 / (records.len() - 1) as f64;
    assert!((ta["by_alpha"]["0"].as_f64().unwrap() - expected).abs() < 1e-12);

    let steered = Command::new(env!("CARGO_BIN_EXE_evctl"))
        .args(["eval", "--model", s(&f.model), "--corpus", s(&f.corpus), "--ev", s(&f.set), "--out", s(&out)])
        .args(["--metrics", "topic-adherence", "--alpha", "1"])
        .env("EVSTEER_FIXTURES", &fixtures)
        .output()
        .unwrap();
    assert_eq!(steered.status.code(), Some(2), "unrecorded prompts are a runtime error");
}

#[test]
fn inspect_cosine_tables() {
    let dir = scratch("inspect");
    let joy = load_ev(fixture().set.join("joy.evec")).unwrap();
    let neg_layers = joy.layers().iter().map(|l| l.iter().map(|x| -x).collect()).collect();
    let neg = EmotionVector::new("antijoy", neg_layers, joy.model_id(), 1).unwrap();
    let (a, b) = (dir.join("joy.evec"), dir.join("antijoy.evec"));
    save_ev(&joy, &a).unwrap();
    save_ev(&neg, &b).unwrap();

    let one = ok_json(&evctl(&["inspect", "--ev", s(&a)]));
    assert_eq!(one["cosine"][0][0].as_f64().map(|c| (c - 1.0).abs() < 1e-12), Some(true));

    let two = ok_json(&evctl(&["inspect", "--ev", s(&a), "--ev", s(&b)]));
    let c = two["cosine"][0][1].as_f64().unwrap();
    assert!((c + 1.0).abs() < 1e-12, "{c}");
    assert_eq!(two["pca"]["points"].as_array().unwrap().len(), 2);
}

#[test]
fn inspect_per_query_geometry() {
    let f = fixture();
    let out = scratch("geometry");
    let v = ok_json(&evctl(&[
        "inspect",
        "--ev",
        s(&f.set),
        "--model",
        s(&f.model),
        "--corpus",
        s(&f.corpus),
        "--per-emotion",
        "5",
        "--out",
        s(&out),
        "--format",
        "csv",
    ]));
    let g = &v["geometry"];
    assert!(g["within_all"]["mean"].as_f64().unwrap() < g["between_all"]["mean"].as_f64().unwrap());
    assert_eq!(g["pca"].as_array().unwrap().len(), 25);
    let cos = std::fs::read_to_string(out.join("cosine.csv")).unwrap();
    assert!(cos.starts_with("label,anger,disgust,fear,joy,sadness\n"));
}
