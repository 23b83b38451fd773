// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use anyhow::Result;
use evsteer_core::corpus::{Emotion, PlantedSpec, PromptRecord};
use evsteer_core::evalkit::{
    eas_score, judge_eas, pair_perplexity, planted_lexicon, tec_matrix, topic_adherence, AffectScorer, Condition,
    EmotionClassifier, EpsLabel, FixtureJudge, HttpJudge, JudgeClient, JudgeItem, MetricId, MetricReport, MetricRow,
    TecItem, TecMatrix, ThreeWayScorer, TEC_ROWS,
};
use evsteer_core::evcore::evec::check_against;
use evsteer_core::evcore::EmotionVector;
use evsteer_core::nanoformer::{nfmt, NanoModel};
use evsteer_core::par::Exec;
use evsteer_core::pipeline::steered_responses;
use evsteer_core::steer::SteeringConfig;
use serde_json::{json, Value};

use crate::bank::EvBank;
use crate::commands::{load_model, load_records, pretty, print_json};
use crate::manifest::{Run, MANIFEST_FILE};
use crate::{invalid, EvalArgs, Format, MetricArg, Status};

pub const FIXTURES_ENV: &str = "EVSTEER_FIXTURES";
pub const JUDGE_URL_ENV: &str = "EVSTEER_JUDGE_URL";

/// Recorded fixtures win over a live endpoint.
fn judge_from_env(run: &mut Run) -> Result<Box<dyn JudgeClient>> {
    if let Some(path) = std::env::var_os(FIXTURES_ENV) {
        run.input("judge_fixtures", &std::fs::read(&path)?);
        return Ok(Box::new(FixtureJudge::load(&path)?));
    }
    if let Ok(url) = std::env::var(JUDGE_URL_ENV) {
        run.input("judge_url", url.as_bytes());
        return Ok(Box::new(HttpJudge::new(url, HttpJudge::DEFAULT_IN_FLIGHT, Duration::from_secs(60))?));
    }
    Err(invalid(format!("judge metrics need {FIXTURES_ENV} or {JUDGE_URL_ENV}")))
}

/// Steered continuations per α, generated once and shared by every metric.
struct Responses<'a> {
    model: &'a NanoModel,
    records: &'a [PromptRecord],
    ev: &'a EmotionVector,
    max_new: usize,
    exec: Exec,
    cache: BTreeMap<u64, Vec<String>>,
}

impl Responses<'_> {
    fn at(&mut self, alpha: f64) -> Result<&[String]> {
        let key = alpha.to_bits();
        if !self.cache.contains_key(&key) {
            let cfg = SteeringConfig::single(self.ev.clone(), alpha);
            let texts = steered_responses(self.model, self.records, &cfg, self.max_new, self.exec)?;
            self.cache.insert(key, texts);
        }
        Ok(&self.cache[&key])
    }
}

fn report_for(
    metric: MetricId,
    gen: &mut Responses,
    alphas: &[f64],
    mut score: impl FnMut(&[PromptRecord], &[String]) -> Result<Vec<Option<f64>>>,
) -> Result<MetricReport> {
    let model_id = nfmt::model_id(gen.model);
    let mut rows = Vec::new();
    for &alpha in alphas {
        let records = gen.records;
        let label = gen.ev.emotion().to_string();
        let scores = score(records, gen.at(alpha)?)?;
        for (r, s) in records.iter().zip(scores) {
            rows.push(MetricRow {
                query_id: r.id.clone(),
                condition: Condition { model: model_id.clone(), ev: label.clone(), alpha },
                score: s,
            });
        }
    }
    Ok(MetricReport::from_rows(metric, rows))
}

fn judge_items(records: &[PromptRecord], texts: &[String]) -> Vec<JudgeItem> {
    records.iter().zip(texts).map(|(r, t)| JudgeItem::new(&r.query, t)).collect()
}

fn per_alpha(report: &MetricReport, alphas: &[f64]) -> BTreeMap<String, Option<f64>> {
    alphas.iter().map(|&a| (a.to_string(), report.filter(|c| c.alpha == a).aggregate)).collect()
}

fn matrix_csv(m: &TecMatrix) -> String {
    let header: Vec<String> = m.alphas.iter().map(|a| format!("{a}x")).collect();
    let mut out = format!("origin,{}\n", header.join(","));
    for (row, cells) in m.rows.iter().zip(&m.cells) {
        let cells: Vec<String> = cells.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()).collect();
        out.push_str(&format!("{row},{}\n", cells.join(",")));
    }
    out
}

fn write_report(run: &mut Run, dir: &Path, report: &MetricReport, format: Format) -> Result<()> {
    let name = report.metric.as_str();
    match format {
        Format::Json => run.write(&dir.join(format!("{name}.json")), (report.to_json()? + "\n").as_bytes()),
        Format::Csv => run.write(&dir.join(format!("{name}.csv")), report.to_csv()?.as_bytes()),
    }
}

/// Target-confidence matrices for every basic emotion with a loaded vector.
fn tec(
    model: &NanoModel,
    records: &[PromptRecord],
    bank: &EvBank,
    alphas: &[f64],
    clf: &impl EmotionClassifier,
    max_new: usize,
    exec: Exec,
) -> Result<(MetricReport, Vec<TecMatrix>)> {
    let mut rows = Vec::new();
    let mut matrices = Vec::new();
    let targets: Vec<Emotion> =
        Emotion::BASIC.into_iter().filter(|e| bank.members().contains_key(e.as_str())).collect();
    if targets.is_empty() {
        return Err(invalid("TEC needs at least one basic-emotion vector"));
    }
    let target_idx =
        |t: Emotion| clf.labels().iter().position(|l| l == t.as_str()).expect("lexicon covers every emotion");
    for target in targets {
        let ev = bank.get(target.as_str())?;
        let mut gen = Responses { model, records, ev: &ev, max_new, exec, cache: BTreeMap::new() };
        let idx = target_idx(target);
        let report = report_for(MetricId::Tec, &mut gen, alphas, |_, texts| {
            Ok(texts.iter().map(|t| Some(clf.classify(t)[idx])).collect())
        })?;
        let mut items = Vec::new();
        for &alpha in alphas {
            for (r, t) in records.iter().zip(gen.at(alpha)?) {
                items.push(TecItem { origin: r.emotion, alpha, response: t.clone() });
            }
        }
        matrices.push(tec_matrix(&items, target, &TEC_ROWS, alphas, clf)?);
        rows.extend(report.rows);
    }
    Ok((MetricReport::from_rows(MetricId::Tec, rows), matrices))
}

pub fn eval(args: &EvalArgs, exec: Exec) -> Result<Status> {
    let mut run = Run::new("eval", args)?;
    let model = load_model(&args.model, &mut run)?;
    let records = load_records(&args.corpus, &mut run)?;
    let bank = EvBank::load(&args.ev)?;
    for (path, bytes) in &bank.sources {
        run.input(format!("ev:{path}"), bytes);
    }
    for ev in bank.all() {
        check_against(&ev, &model)?;
    }
    if args.alpha.iter().chain(&args.tec_alpha).any(|a| !a.is_finite()) {
        return Err(invalid("alphas must be finite"));
    }
    let mut metrics = args.metrics.clone();
    metrics.sort();
    metrics.dedup();
    let judge = if metrics.iter().any(|m| matches!(m, MetricArg::Eas | MetricArg::TopicAdherence)) {
        Some(judge_from_env(&mut run)?)
    } else {
        None
    };

    let clf = planted_lexicon(&PlantedSpec::default());
    let ev = bank.get(&args.emotion)?;
    let mut gen =
        Responses { model: &model, records: &records, ev: &ev, max_new: args.max_new, exec, cache: BTreeMap::new() };
    let mut summary: BTreeMap<&str, Value> = BTreeMap::new();
    for metric in metrics {
        let report = match metric {
            MetricArg::Eps => {
                let scorer = AffectScorer::new(&clf);
                report_for(MetricId::Eps, &mut gen, &args.alpha, |_, texts| {
                    Ok(texts
                        .iter()
                        .map(|t| Some(if scorer.label(t) == EpsLabel::Emotional { 1.0 } else { 0.0 }))
                        .collect())
                })?
            }
            MetricArg::Ppl => report_for(MetricId::Ppl, &mut gen, &args.alpha, |recs, texts| {
                recs.iter().zip(texts).map(|(r, t)| Ok(Some(pair_perplexity(&model, &r.query, t)?))).collect()
            })?,
            MetricArg::Eas => {
                let judge = judge.as_deref().expect("judge configured");
                report_for(MetricId::Eas, &mut gen, &args.alpha, |recs, texts| {
                    let judged = judge_eas(&judge_items(recs, texts), judge)?;
                    Ok(judged.items.iter().map(|s| s.map(|s| eas_score(&s).expect("validated"))).collect())
                })?
            }
            MetricArg::TopicAdherence => {
                let judge = judge.as_deref().expect("judge configured");
                report_for(MetricId::TopicAdherence, &mut gen, &args.alpha, |recs, texts| {
                    let judged = topic_adherence(&judge_items(recs, texts), judge)?;
                    Ok(judged.items.iter().map(|v| v.map(f64::from)).collect())
                })?
            }
            MetricArg::Tec => {
                let (report, matrices) = tec(&model, &records, &bank, &args.tec_alpha, &clf, args.max_new, exec)?;
                for m in &matrices {
                    let name = format!("tec_matrix_{}", m.target);
                    match args.format {
                        Format::Json => run.write(&args.out.join(format!("{name}.json")), &pretty(m)?)?,
                        Format::Csv => run.write(&args.out.join(format!("{name}.csv")), matrix_csv(m).as_bytes())?,
                    }
                }
                write_report(&mut run, &args.out, &report, args.format)?;
                summary.insert("tec", json!(matrices));
                continue;
            }
        };
        write_report(&mut run, &args.out, &report, args.format)?;
        summary.insert(
            report.metric.as_str(),
            json!({ "by_alpha": per_alpha(&report, &args.alpha), "invalid": report.invalid }),
        );
    }
    let manifest = run.finish(&args.out.join(MANIFEST_FILE))?;
    print_json(&json!({ "run_id": manifest.run_id, "ev": ev.emotion(), "metrics": summary }))?;
    Ok(Status::Ok)
}
