// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::Result;
use evsteer_core::corpus::{
    composition, generate_planted, load_corpus, to_jsonl, CorpusKind, Emotion, PlantedSpec, PromptRecord,
};
use evsteer_core::evcore::evec::{check_against, encode as encode_ev, save_set};
use evsteer_core::evcore::{ev_stats, pca_2d, EmotionVector, LabeledSample};
use evsteer_core::nanoformer::{nfmt, ModelConfig, NanoModel, Tokenizer};
use evsteer_core::numkit::{cosine, SeededRng};
use evsteer_core::par::Exec;
use evsteer_core::pipeline::{
    continuation_prompt, extract_emotion_vector, extract_ev_set, per_query_samples, planted_model,
};
use evsteer_core::steer::{generate, logit_delta, ApplyDuring, SteeringConfig};
use evsteer_core::theorylab::{fd_jacobians, first_order_residual, run_suite, LinearStack, NanoProbe, SuiteConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bank::{parse_blend, EvBank};
use crate::manifest::{sidecar, Run, MANIFEST_FILE};
use crate::{
    invalid, CorpusArgs, ExtractArgs, Format, GenCorpusArgs, InitModelArgs, InspectArgs, Status, SteerArgs, VerifyArgs,
};

/// Pretty JSON on stdout; a closed pipe is not an error.
pub fn print_json(v: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v)? + "\n";
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn pretty(v: &impl Serialize) -> Result<Vec<u8>> {
    Ok((serde_json::to_string_pretty(v)? + "\n").into_bytes())
}

pub fn load_model(path: &Path, run: &mut Run) -> Result<NanoModel> {
    let model = nfmt::load(path)?;
    run.model(&model);
    Ok(model)
}

pub fn load_records(args: &CorpusArgs, run: &mut Run) -> Result<Vec<PromptRecord>> {
    let kind = if args.strict_eqplus { CorpusKind::EqPlus } else { CorpusKind::EmotionQuery };
    let records = load_corpus(&args.corpus, kind, args.strict_eqplus)?;
    run.corpus(&std::fs::read(&args.corpus)?);
    Ok(records)
}

pub fn parse_emotion(label: &str) -> Result<Emotion> {
    label.parse::<Emotion>().map_err(|e| invalid(e.to_string()))
}

pub fn init_model(args: &InitModelArgs) -> Result<Status> {
    let mut run = Run::new("init-model", args)?;
    run.seed(args.seed);
    let config = ModelConfig { seed: args.seed, ..ModelConfig::default() };
    let model = if args.random { NanoModel::build(config)? } else { planted_model(&PlantedSpec::default(), config)? };
    run.write(&args.out, &nfmt::encode(&model))?;
    let manifest = run.finish(&sidecar(&args.out))?;
    print_json(&json!({
        "run_id": manifest.run_id,
        "model_id": nfmt::model_id(&model),
        "config": model.config(),
    }))?;
    Ok(Status::Ok)
}

pub fn gen_corpus(args: &GenCorpusArgs) -> Result<Status> {
    let mut run = Run::new("gen-corpus", args)?;
    run.seed(args.seed);
    let spec = PlantedSpec { seed: args.seed, ..PlantedSpec::default() };
    let records = generate_planted(&spec, args.per_emotion, args.neutral)?;
    run.write(&args.out, to_jsonl(&records).as_bytes())?;
    let manifest = run.finish(&sidecar(&args.out))?;
    let counts: BTreeMap<String, usize> = composition(&records).into_iter().map(|(e, n)| (e.to_string(), n)).collect();
    print_json(&json!({ "run_id": manifest.run_id, "records": records.len(), "composition": counts }))?;
    Ok(Status::Ok)
}

fn ev_summary(ev: &EmotionVector) -> Value {
    json!({ "n_queries": ev.n_queries(), "norms": ev.norms() })
}

pub fn extract(args: &ExtractArgs, exec: Exec) -> Result<Status> {
    let mut run = Run::new("extract", args)?;
    let model = load_model(&args.model, &mut run)?;
    let records = load_records(&args.corpus, &mut run)?;
    let mut vectors = BTreeMap::new();
    let manifest_path = if args.emotion == "all" {
        let set = extract_ev_set(&model, &records, exec)?;
        save_set(&set, &args.out)?;
        for ev in set.members().values().chain(std::iter::once(set.base())) {
            run.record(&args.out.join(format!("{}.evec", ev.emotion())))?;
            vectors.insert(ev.emotion().to_string(), ev_summary(ev));
        }
        args.out.join(MANIFEST_FILE)
    } else {
        let emotion = parse_emotion(&args.emotion)?;
        let ev = extract_emotion_vector(&model, &records, emotion, exec)?;
        run.write(&args.out, &encode_ev(&ev))?;
        vectors.insert(ev.emotion().to_string(), ev_summary(&ev));
        sidecar(&args.out)
    };
    let manifest = run.finish(&manifest_path)?;
    print_json(&json!({ "run_id": manifest.run_id, "vectors": vectors }))?;
    Ok(Status::Ok)
}

fn bank_inputs(bank: &EvBank, run: &mut Run) {
    for (path, bytes) in &bank.sources {
        run.input(format!("ev:{path}"), bytes);
    }
}

pub fn steer(args: &SteerArgs) -> Result<Status> {
    let mut run = Run::new("steer", args)?;
    let model = load_model(&args.model, &mut run)?;
    let bank = EvBank::load(&args.ev)?;
    bank_inputs(&bank, &mut run);
    let terms = parse_blend(&args.blend)?;
    let mut cfg = SteeringConfig::default();
    for (label, alpha) in &terms {
        let ev = bank.get(label)?;
        check_against(&ev, &model)?;
        cfg.blend.push((ev, *alpha));
    }
    if let Some(layers) = &args.layers {
        cfg = cfg.with_mask(layers.iter().copied());
    }
    if args.generation_only {
        cfg = cfg.with_apply_during(ApplyDuring::GenerationOnly);
    }
    let prompt = continuation_prompt(&args.prompt);
    let baseline = generate(&model, &prompt, &SteeringConfig::default(), args.max_new)?;
    let steered = generate(&model, &prompt, &cfg, args.max_new)?;
    let delta = logit_delta(&model, &prompt, &cfg)?;
    let l2 = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
    let max_abs = delta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut order: Vec<usize> = (0..delta.len()).collect();
    order.sort_by(|&a, &b| delta[b].total_cmp(&delta[a]).then(a.cmp(&b)));
    let top: Vec<Value> = order
        .iter()
        .take(5)
        .map(|&t| json!({ "token": t, "text": Tokenizer.decode_lossy(&[t as u32]), "delta": delta[t] }))
        .collect();
    let result = json!({
        "run_id": run.run_id(),
        "prompt": args.prompt,
        "blend": terms.iter().map(|(l, a)| json!({ "label": l, "alpha": a })).collect::<Vec<_>>(),
        "layers": args.layers,
        "baseline": Tokenizer.decode_lossy(&baseline.tokens),
        "steered": Tokenizer.decode_lossy(&steered.tokens),
        "logit_delta": { "l2": l2, "max_abs": max_abs, "top_increase": top },
    });
    if let Some(out) = &args.out {
        run.write(out, &pretty(&result)?)?;
        run.finish(&sidecar(out))?;
    }
    print_json(&result)?;
    Ok(Status::Ok)
}

fn random_ev(label: &str, layers: usize, width: usize, rng: &mut SeededRng) -> Result<EmotionVector> {
    let rows = (0..layers).map(|_| (0..width).map(|_| rng.next_gaussian() as f32).collect()).collect();
    Ok(EmotionVector::new(label, rows, "linear-stub", 1)?)
}

pub fn verify(args: &VerifyArgs, exec: Exec) -> Result<Status> {
    let mut run = Run::new("verify", args)?;
    run.seed(args.seed);
    let mut cfg = SuiteConfig { curvature: args.curvature, seed: args.seed, ..SuiteConfig::default() };
    if let Some(grid) = &args.alpha {
        cfg.first_order = grid.clone();
    }
    let (reports, extra) = if args.linear_stub {
        let (l, d, v) = (4, 8, 13);
        let stack = LinearStack::random(l, d, v, args.seed)?;
        let mut rng = SeededRng::new(args.seed ^ 0x5eed);
        let a = random_ev(&args.emotion, l, d, &mut rng)?;
        let b = random_ev(&args.other, l, d, &mut rng)?;
        cfg.curvature = Some(args.curvature.unwrap_or(0.0));
        let jac = fd_jacobians(&stack, exec)?;
        let residual = cfg
            .first_order
            .iter()
            .map(|&x| first_order_residual(&stack, &jac, &a, x))
            .collect::<evsteer_core::Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        (run_suite(&stack, &a, &b, &cfg, exec)?, json!({ "max_first_order_residual": residual }))
    } else {
        let model_path = args.model.as_deref().ok_or_else(|| invalid("--model is required"))?;
        let model = load_model(model_path, &mut run)?;
        let bank = EvBank::load(&args.ev)?;
        bank_inputs(&bank, &mut run);
        let (a, b) = (bank.get(&args.emotion)?, bank.get(&args.other)?);
        check_against(&a, &model)?;
        check_against(&b, &model)?;
        let text = match (&args.prompt, &args.corpus) {
            (Some(p), _) => p.clone(),
            (None, Some(c)) => {
                let records = load_corpus(c, CorpusKind::EmotionQuery, false)?;
                run.corpus(&std::fs::read(c)?);
                records.iter().find(|r| r.emotion.as_str() == args.emotion).unwrap_or(&records[0]).query.clone()
            }
            (None, None) => return Err(invalid("verify needs --prompt or --corpus")),
        };
        let probe = NanoProbe::new(&model, &continuation_prompt(&text))?;
        (run_suite(&probe, &a, &b, &cfg, exec)?, json!({ "prompt": text }))
    };
    let pass = reports.iter().all(|r| r.pass);
    let bundle = json!({ "run_id": run.run_id(), "pass": pass, "context": extra, "reports": reports });
    if let Some(out) = &args.out {
        run.write(out, &pretty(&bundle)?)?;
        run.finish(&sidecar(out))?;
    }
    print_json(&bundle)?;
    for r in &reports {
        eprintln!("{} {}", if r.pass { "PASS" } else { "FAIL" }, r.theorem);
    }
    Ok(if pass { Status::Ok } else { Status::TheoremFailed })
}

fn csv_cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn inspect(args: &InspectArgs, exec: Exec) -> Result<Status> {
    let mut run = Run::new("inspect", args)?;
    let bank = EvBank::load(&args.ev)?;
    bank_inputs(&bank, &mut run);
    let evs = bank.all();
    let labels: Vec<String> = evs.iter().map(|e| e.emotion().to_string()).collect();
    let flat: Vec<Vec<f64>> = evs.iter().map(EmotionVector::concatenated).collect();
    let width = flat[0].len();
    if flat.iter().any(|v| v.len() != width) {
        return Err(invalid("emotion vectors have different shapes"));
    }
    let table: Vec<Vec<Option<f64>>> = flat.iter().map(|a| flat.iter().map(|b| cosine(a, b)).collect()).collect();
    let samples: Vec<LabeledSample> = evs.iter().map(|e| LabeledSample::from_ev(e.emotion(), e)).collect();
    let (points, ratio) = pca_2d(&samples)?;
    let norms: BTreeMap<&str, &[f32]> = evs.iter().map(|e| (e.emotion(), e.norms())).collect();

    let geometry = match (&args.model, &args.corpus) {
        (Some(m), Some(c)) => {
            let model = load_model(m, &mut run)?;
            let records = load_corpus(c, CorpusKind::EmotionQuery, false)?;
            run.corpus(&std::fs::read(c)?);
            let chosen: Vec<PromptRecord> = Emotion::BASIC
                .iter()
                .flat_map(|&e| records.iter().filter(move |r| r.emotion == e).take(args.per_emotion).cloned())
                .collect();
            Some(ev_stats(&per_query_samples(&model, &chosen, exec)?)?)
        }
        _ => None,
    };

    let result = json!({
        "run_id": run.run_id(),
        "labels": labels,
        "norms": norms,
        "cosine": table,
        "pca": { "points": points, "explained_variance_ratio": ratio },
        "geometry": geometry,
    });
    if let Some(dir) = &args.out {
        match args.format {
            Format::Json => run.write(&dir.join("inspect.json"), &pretty(&result)?)?,
            Format::Csv => {
                let mut cos = format!("label,{}\n", labels.join(","));
                for (l, row) in labels.iter().zip(&table) {
                    let cells: Vec<String> = row.iter().map(|&c| csv_cell(c)).collect();
                    cos.push_str(&format!("{l},{}\n", cells.join(",")));
                }
                run.write(&dir.join("cosine.csv"), cos.as_bytes())?;
                let mut pca = String::from("id,label,x,y\n");
                for p in &points {
                    pca.push_str(&format!("{},{},{},{}\n", p.id, p.label, p.x, p.y));
                }
                run.write(&dir.join("pca.csv"), pca.as_bytes())?;
                let mut nr = String::from("label,layer,norm\n");
                for (l, ns) in &norms {
                    for (i, n) in ns.iter().enumerate() {
                        nr.push_str(&format!("{l},{i},{n}\n"));
                    }
                }
                run.write(&dir.join("norms.csv"), nr.as_bytes())?;
            }
        }
        run.finish(&dir.join(MANIFEST_FILE))?;
    }
    print_json(&result)?;
    Ok(Status::Ok)
}
