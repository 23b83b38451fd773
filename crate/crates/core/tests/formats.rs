// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use evsteer_core::corpus::{
    composition, generate_planted, load_corpus, parse_corpus, save_corpus, to_jsonl, CorpusKind, Emotion, PlantedSpec,
    PromptRecord, EQ_PLUS_TOTAL,
};
use evsteer_core::evcore::evec::{self, load_ev, load_ev_for, load_set, save_ev, save_set};
use evsteer_core::evcore::EmotionVector;
use evsteer_core::nanoformer::{nfmt, ModelConfig, NanoModel};
use evsteer_core::Error;
use proptest::prelude::*;

fn bits(ev: &EmotionVector) -> Vec<u32> {
    ev.layers().iter().flatten().map(|x| x.to_bits()).collect()
}

#[test]
fn model_file_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nfmt");
    let model = &common::desk().model;
    nfmt::save(model, &path).unwrap();
    let back = nfmt::load(&path).unwrap();
    assert_eq!(nfmt::encode(&back), nfmt::encode(model));
    assert_eq!(nfmt::model_id(&back), nfmt::model_id(model));
    let toks = common::desk().probe_tokens();
    let a = model.forward_with_taps(&toks).unwrap();
    let b = back.forward_with_taps(&toks).unwrap();
    let ab: Vec<u32> = a.final_logits().iter().map(|x| x.to_bits()).collect();
    let bb: Vec<u32> = b.final_logits().iter().map(|x| x.to_bits()).collect();
    assert_eq!(ab, bb);
}

#[test]
fn model_file_rejects_truncation_and_bad_magic() {
    let m = NanoModel::build(ModelConfig { layers: 1, max_seq: 8, ..Default::default() }).unwrap();
    let bytes = nfmt::encode(&m);
    assert!(matches!(nfmt::decode(&bytes[..bytes.len() - 3]), Err(Error::Decode { .. })));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(nfmt::decode(&bad).is_err());
    let mut long = bytes;
    long.push(0);
    assert!(matches!(nfmt::decode(&long), Err(Error::Decode { .. })));
}

#[test]
fn ev_set_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let set = &common::desk().set;
    save_set(set, dir.path()).unwrap();
    assert!(dir.path().join("base.evec").exists());
    let back = load_set(dir.path()).unwrap();
    assert_eq!(back.members().len(), set.members().len());
    for (label, ev) in set.members() {
        assert_eq!(bits(back.get(label).unwrap()), bits(ev), "{label}");
    }
    assert_eq!(bits(back.base()), bits(set.base()));
    let stored = load_ev(dir.path().join("base.evec")).unwrap();
    assert_eq!(bits(&stored), bits(set.base()));
}

#[test]
fn ev_shape_checked_against_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.evec");
    let ev = EmotionVector::new("joy", vec![vec![1.0; 8]; 2], "m", 1).unwrap();
    save_ev(&ev, &path).unwrap();
    assert!(matches!(load_ev_for(&path, &common::desk().model), Err(Error::Dimension(_))));
}

fn layers_strategy() -> impl Strategy<Value = Vec<Vec<f32>>> {
    (1usize..5, 1usize..12).prop_flat_map(|(l, d)| {
        prop::collection::vec(prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::ZERO, d), l)
    })
}

proptest! {
    #[test]
    fn evec_encode_decode_is_bitwise(
        layers in layers_strategy(),
        emotion in "[a-z]{1,8}",
        n in any::<u32>(),
        t in any::<u64>(),
    ) {
        let ev = EmotionVector::new(emotion, layers, "model", n).unwrap().with_created_unix(t);
        let bytes = evec::encode(&ev);
        let back = evec::decode(&bytes).unwrap();
        prop_assert_eq!(bits(&back), bits(&ev));
        prop_assert_eq!(back.emotion(), ev.emotion());
        prop_assert_eq!(back.n_queries(), n);
        prop_assert_eq!(back.created_unix(), t);
        prop_assert_eq!(evec::encode(&back), bytes);
    }

    #[test]
    fn evec_truncation_is_an_error(layers in layers_strategy(), cut in 1usize..16) {
        let ev = EmotionVector::new("fear", layers, "m", 3).unwrap();
        let bytes = evec::encode(&ev);
        let cut = cut.min(bytes.len());
        prop_assert!(evec::decode(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn corpus_jsonl_round_trip(seed in 0u64..64, per in 1usize..4, neutral in 0usize..4) {
        let spec = PlantedSpec { seed, ..PlantedSpec::default() };
        let recs = generate_planted(&spec, per, neutral).unwrap();
        prop_assert_eq!(parse_corpus(&to_jsonl(&recs)).unwrap(), recs);
    }
}

#[test]
fn eq_plus_strict_loading() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("eqplus.jsonl");
    let records = &common::desk().records;
    save_corpus(records, &full).unwrap();
    let loaded = load_corpus(&full, CorpusKind::EqPlus, true).unwrap();
    assert_eq!(loaded.len(), EQ_PLUS_TOTAL);
    assert_eq!(&loaded, records);
    let counts = composition(&loaded);
    assert_eq!(counts[&Emotion::Neutral], 150);
    for e in Emotion::BASIC {
        assert_eq!(counts[&e], 50);
    }

    let mut skewed = records.clone();
    let idx = skewed.iter().position(|r| r.emotion == Emotion::Neutral).unwrap();
    skewed[idx].emotion = Emotion::Joy;
    let bad = dir.path().join("skewed.jsonl");
    save_corpus(&skewed, &bad).unwrap();
    match load_corpus(&bad, CorpusKind::EqPlus, true) {
        Err(Error::Composition(msg)) => assert!(msg.contains("joy") && msg.contains("neutral"), "{msg}"),
        other => panic!("expected composition error, got {other:?}"),
    }
    assert_eq!(load_corpus(&bad, CorpusKind::EqPlus, false).unwrap().len(), EQ_PLUS_TOTAL);
    assert!(load_corpus(&bad, CorpusKind::EmotionQuery, true).is_ok());
}

#[test]
fn corpus_schema_error_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    let good = to_jsonl(&[PromptRecord::new("a", Emotion::Joy, "q")]);
    std::fs::write(&path, format!("{good}{{\"id\":\"b\",\"emotion\":\"joy\",\"query\":\"q\",\"extra\":1}}\n")).unwrap();
    match load_corpus(&path, CorpusKind::EmotionQuery, false) {
        Err(Error::Schema { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}
