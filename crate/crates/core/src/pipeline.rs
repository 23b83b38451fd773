// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end runs: extraction over a corpus, steered generation sweeps and
//! their metric reports.

use crate::corpus::{Emotion, PlantedSpec, PromptRecord};
use crate::error::{Error, Result};
use crate::evalkit::{
    tec_matrix, AffectScorer, Condition, EmotionClassifier, MetricId, MetricReport, MetricRow, TecItem, TecMatrix,
    ThreeWayScorer,
};
use crate::evcore::{build_emotion_vector, emotional_shift, EmotionVector, EvSet, LabeledSample, ShiftSample};
use crate::nanoformer::tokenizer::BOS;
use crate::nanoformer::{nfmt, ModelConfig, NanoModel, Tokenizer};
use crate::par::{map_slice, Exec};
use crate::steer::{generate, SteeringConfig};

/// Tokens generated when a record carries no response of its own.
pub const DEFAULT_RESPONSE_LEN: usize = 24;
/// Tokens generated per item in evaluation sweeps.
pub const DEFAULT_EVAL_LEN: usize = 16;

/// A desk model whose marker tokens form one embedding cluster per emotion.
pub fn planted_model(spec: &PlantedSpec, config: ModelConfig) -> Result<NanoModel> {
    spec.validate()?;
    NanoModel::build_planted(config, &spec.marker_token_groups())
}

/// Instruction and query joined into one prompt.
pub fn conditioned_prompt(setting: &str, query: &str) -> String {
    format!("{setting}\n{query}")
}

/// `BOS query`: the model continues the query text itself.
pub fn continuation_prompt(query: &str) -> Vec<u32> {
    let mut ids = vec![BOS];
    ids.extend(Tokenizer.encode(query));
    ids
}

/// Generated text for `cfg`, with reserved ids dropped.
pub fn respond(model: &NanoModel, prompt: &[u32], cfg: &SteeringConfig, max_new: usize) -> Result<String> {
    let g = generate(model, prompt, cfg, max_new)?;
    Ok(Tokenizer.decode_lossy(&g.tokens))
}

/// Tokens and response start for one setting. A missing response is
/// replaced by the model's own unsteered greedy answer.
fn setting_tokens(model: &NanoModel, setting: &str, query: &str, response: Option<&str>) -> Result<(Vec<u32>, usize)> {
    let prompt = conditioned_prompt(setting, query);
    let response = match response {
        Some(r) => r.to_string(),
        None => {
            let (ids, _) = Tokenizer.encode_pair(&prompt, "");
            let room = model.config().max_seq.saturating_sub(ids.len()).min(DEFAULT_RESPONSE_LEN);
            respond(model, &ids, &SteeringConfig::default(), room)?
        }
    };
    if response.is_empty() {
        return Err(Error::Input(format!("empty response for query {query:?}")));
    }
    Ok(Tokenizer.encode_pair(&prompt, &response))
}

/// Shift between the emotional and neutral settings of one record, pooled
/// over response tokens.
pub fn record_shift(model: &NanoModel, rec: &PromptRecord) -> Result<ShiftSample> {
    let (Some(ep), Some(np)) = (&rec.emotion_prompt, &rec.neutral_prompt) else {
        return Err(Error::Input(format!("record {} lacks a paired setting", rec.id)));
    };
    let (et, es) = setting_tokens(model, ep, &rec.query, rec.emotion_response.as_deref())?;
    let (nt, ns) = setting_tokens(model, np, &rec.query, rec.neutral_response.as_deref())?;
    let e = model.forward_with_taps(&et)?.tail(es)?;
    let n = model.forward_with_taps(&nt)?.tail(ns)?;
    emotional_shift(rec.id.clone(), &e, &n)
}

fn records_of(records: &[PromptRecord], emotion: Emotion) -> Vec<&PromptRecord> {
    records.iter().filter(|r| r.emotion == emotion).collect()
}

/// Per-record shifts for every record labelled `emotion`.
pub fn extract_shifts(
    model: &NanoModel,
    records: &[PromptRecord],
    emotion: Emotion,
    exec: Exec,
) -> Result<Vec<ShiftSample>> {
    if emotion.is_neutral() {
        return Err(Error::Input("neutral has no emotion vector".into()));
    }
    let chosen = records_of(records, emotion);
    if chosen.is_empty() {
        return Err(Error::Input(format!("no {emotion} records in corpus")));
    }
    map_slice(exec, &chosen, |r| record_shift(model, r)).into_iter().collect()
}

pub fn extract_emotion_vector(
    model: &NanoModel,
    records: &[PromptRecord],
    emotion: Emotion,
    exec: Exec,
) -> Result<EmotionVector> {
    let shifts = extract_shifts(model, records, emotion, exec)?;
    build_emotion_vector(&shifts, emotion.as_str(), &nfmt::model_id(model))
}

/// Vectors for every basic emotion present in the corpus, plus their base.
pub fn extract_ev_set(model: &NanoModel, records: &[PromptRecord], exec: Exec) -> Result<EvSet> {
    let mut members = Vec::new();
    for e in Emotion::BASIC {
        if !records_of(records, e).is_empty() {
            members.push(extract_emotion_vector(model, records, e, exec)?);
        }
    }
    EvSet::new(members)
}

/// One single-query vector per emotional record, for geometry statistics.
pub fn per_query_samples(model: &NanoModel, records: &[PromptRecord], exec: Exec) -> Result<Vec<LabeledSample>> {
    let chosen: Vec<&PromptRecord> = records.iter().filter(|r| !r.emotion.is_neutral()).collect();
    let id = nfmt::model_id(model);
    map_slice(exec, &chosen, |r| {
        let shift = record_shift(model, r)?;
        let ev = build_emotion_vector(std::slice::from_ref(&shift), r.emotion.as_str(), &id)?;
        Ok(LabeledSample::from_ev(r.id.clone(), &ev))
    })
    .into_iter()
    .collect()
}

/// Steered continuations of every record's query, in record order.
pub fn steered_responses(
    model: &NanoModel,
    records: &[PromptRecord],
    cfg: &SteeringConfig,
    max_new: usize,
    exec: Exec,
) -> Result<Vec<String>> {
    cfg.validate(model)?;
    map_slice(exec, records, |r| respond(model, &continuation_prompt(&r.query), cfg, max_new)).into_iter().collect()
}

/// Blend label used in report conditions, e.g. `joy` or `base`.
fn condition(model: &NanoModel, ev: &EmotionVector, alpha: f64) -> Condition {
    Condition { model: nfmt::model_id(model), ev: ev.emotion().to_string(), alpha }
}

/// Share of emotional continuations for each α, one row per record and α.
pub fn eps_sweep<C: EmotionClassifier>(
    model: &NanoModel,
    records: &[PromptRecord],
    ev: &EmotionVector,
    alphas: &[f64],
    classifier: &C,
    max_new: usize,
    exec: Exec,
) -> Result<MetricReport> {
    let scorer = AffectScorer::new(classifier);
    let mut rows = Vec::new();
    for &alpha in alphas {
        let cfg = SteeringConfig::single(ev.clone(), alpha);
        let texts = steered_responses(model, records, &cfg, max_new, exec)?;
        for (r, t) in records.iter().zip(texts) {
            let hit = scorer.label(&t) == crate::evalkit::EpsLabel::Emotional;
            rows.push(MetricRow {
                query_id: r.id.clone(),
                condition: condition(model, ev, alpha),
                score: Some(if hit { 1.0 } else { 0.0 }),
            });
        }
    }
    Ok(MetricReport::from_rows(MetricId::Eps, rows))
}

/// Target-emotion confidence per record and α, steering with `ev` toward `target`.
#[allow(clippy::too_many_arguments)]
pub fn tec_sweep<C: EmotionClassifier>(
    model: &NanoModel,
    records: &[PromptRecord],
    ev: &EmotionVector,
    target: Emotion,
    alphas: &[f64],
    classifier: &C,
    max_new: usize,
    exec: Exec,
) -> Result<(MetricReport, Vec<TecItem>)> {
    let idx = classifier
        .labels()
        .iter()
        .position(|l| l == target.as_str())
        .ok_or_else(|| Error::Input(format!("classifier has no label {target}")))?;
    let mut rows = Vec::new();
    let mut items = Vec::new();
    for &alpha in alphas {
        let cfg = SteeringConfig::single(ev.clone(), alpha);
        let texts = steered_responses(model, records, &cfg, max_new, exec)?;
        for (r, t) in records.iter().zip(texts) {
            rows.push(MetricRow {
                query_id: r.id.clone(),
                condition: condition(model, ev, alpha),
                score: Some(classifier.classify(&t)[idx]),
            });
            items.push(TecItem { origin: r.emotion, alpha, response: t });
        }
    }
    Ok((MetricReport::from_rows(MetricId::Tec, rows), items))
}

/// Intensity matrix for one target emotion over the given rows and α columns.
#[allow(clippy::too_many_arguments)]
pub fn tec_grid<C: EmotionClassifier>(
    model: &NanoModel,
    records: &[PromptRecord],
    ev: &EmotionVector,
    target: Emotion,
    rows: &[Emotion],
    alphas: &[f64],
    classifier: &C,
    max_new: usize,
    exec: Exec,
) -> Result<TecMatrix> {
    let (_, items) = tec_sweep(model, records, ev, target, alphas, classifier, max_new, exec)?;
    tec_matrix(&items, target, rows, alphas, classifier)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_planted;
    use crate::evalkit::planted_lexicon;

    fn setup() -> (NanoModel, Vec<PromptRecord>) {
        let spec = PlantedSpec::default();
        let model = planted_model(&spec, ModelConfig::default()).unwrap();
        (model, generate_planted(&spec, 6, 6).unwrap())
    }

    #[test]
    fn parallel_extraction_is_bitwise_serial() {
        let (model, recs) = setup();
        let a = extract_emotion_vector(&model, &recs, Emotion::Joy, Exec::Serial).unwrap();
        let b = extract_emotion_vector(&model, &recs, Emotion::Joy, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_queries(), 6);
        assert!(extract_emotion_vector(&model, &recs, Emotion::Neutral, Exec::Serial).is_err());
        assert!(extract_emotion_vector(&model, &recs[..6], Emotion::Fear, Exec::Serial).is_err());
    }

    #[test]
    fn missing_responses_are_generated() {
        let (model, recs) = setup();
        let mut r = recs[0].clone();
        r.emotion_response = None;
        r.neutral_response = None;
        let s = record_shift(&model, &r).unwrap();
        assert_eq!(s.layers.len(), 4);
    }

    #[test]
    fn eps_report_is_consistent() {
        let (model, recs) = setup();
        let set = extract_ev_set(&model, &recs, Exec::Parallel).unwrap();
        let clf = planted_lexicon(&PlantedSpec::default());
        let rep = eps_sweep(&model, &recs, set.base(), &[0.0, 1.0], &clf, 8, Exec::Parallel).unwrap();
        assert_eq!(rep.rows.len(), 2 * recs.len());
        assert!(rep.is_consistent());
    }
}
