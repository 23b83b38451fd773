// SPDX-License-Identifier: MIT OR Apache-2.0

//! LLM-judge transports and the two judged metrics: topic adherence and
//! per-emotion intensity scores.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::evalkit::metrics::{eas_score, mean, SixScores};

pub const TOPIC_ADHERENCE_TEMPLATE: &str = include_str!("../../prompts/topic_adherence.txt");
pub const EMOTION_SCORES_TEMPLATE: &str = include_str!("../../prompts/emotion_scores.txt");

/// Fill a template: `{question}` and `{answer}` are substituted, `{{` and
/// `}}` become literal braces. Any other brace is an error.
pub fn render(template: &str, question: &str, answer: &str) -> Result<String> {
    let mut out = String::with_capacity(template.len() + question.len() + answer.len());
    let mut rest = template;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        if let Some(r) = rest.strip_prefix("{{") {
            out.push('{');
            rest = r;
        } else if let Some(r) = rest.strip_prefix("}}") {
            out.push('}');
            rest = r;
        } else if let Some(r) = rest.strip_prefix("{question}") {
            out.push_str(question);
            rest = r;
        } else if let Some(r) = rest.strip_prefix("{answer}") {
            out.push_str(answer);
            rest = r;
        } else {
            return Err(Error::Input(format!("stray brace in template near {:?}", &rest[..rest.len().min(20)])));
        }
    }
    out.push_str(rest);
    Ok(out)
}

pub fn topic_adherence_prompt(question: &str, answer: &str) -> String {
    render(TOPIC_ADHERENCE_TEMPLATE, question, answer).expect("shipped template is well formed")
}

pub fn emotion_scores_prompt(question: &str, answer: &str) -> String {
    render(EMOTION_SCORES_TEMPLATE, question, answer).expect("shipped template is well formed")
}

/// A text-completion judge.
pub trait JudgeClient: Sync {
    fn complete(&self, prompt: &str) -> Result<String>;

    /// Answers in prompt order.
    fn complete_all(&self, prompts: &[String]) -> Vec<Result<String>> {
        prompts.iter().map(|p| self.complete(p)).collect()
    }
}

/// One recorded exchange; `digest` is the SHA-256 hex of the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub digest: String,
    pub content: String,
}

impl FixtureEntry {
    pub fn new(prompt: &str, content: impl Into<String>) -> Self {
        Self { digest: sha256_hex(prompt.as_bytes()), content: content.into() }
    }
}

/// Offline judge replaying recorded answers.
#[derive(Debug, Clone, Default)]
pub struct FixtureJudge {
    answers: HashMap<String, String>,
}

impl FixtureJudge {
    pub fn new(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        Self { answers: entries.into_iter().map(|e| (e.digest, e.content)).collect() }
    }

    /// JSONL, one [`FixtureEntry`] per non-blank line. Later lines win.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: FixtureEntry =
                serde_json::from_str(line).map_err(|e| Error::Schema { line: i + 1, reason: e.to_string() })?;
            entries.push(e);
        }
        Ok(Self::new(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

impl JudgeClient for FixtureJudge {
    fn complete(&self, prompt: &str) -> Result<String> {
        let digest = sha256_hex(prompt.as_bytes());
        self.answers
            .get(&digest)
            .cloned()
            .ok_or_else(|| Error::Judge(format!("no recorded answer for prompt {digest}")))
    }
}

/// `POST {"prompt": ...}` to an endpoint answering `{"content": ...}`.
pub struct HttpJudge {
    url: String,
    agent: ureq::Agent,
    max_in_flight: usize,
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct HttpResponse {
    content: String,
}

impl HttpJudge {
    pub const DEFAULT_IN_FLIGHT: usize = 4;

    pub fn new(url: impl Into<String>, max_in_flight: usize, timeout: Duration) -> Result<Self> {
        if max_in_flight == 0 {
            return Err(Error::Config("judge in-flight cap must be positive".into()));
        }
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Ok(Self { url: url.into(), agent, max_in_flight })
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }
}

impl JudgeClient for HttpJudge {
    fn complete(&self, prompt: &str) -> Result<String> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(HttpRequest { prompt })
            .map_err(|e| Error::Judge(format!("{}: {e}", self.url)))?;
        let body: HttpResponse =
            resp.body_mut().read_json().map_err(|e| Error::Judge(format!("bad judge response: {e}")))?;
        Ok(body.content)
    }

    /// At most `max_in_flight` requests at once; answers stay in prompt order.
    fn complete_all(&self, prompts: &[String]) -> Vec<Result<String>> {
        bounded_complete(self, prompts, self.max_in_flight)
    }
}

/// Run `judge.complete` over `prompts` on `workers` threads, keeping order.
pub fn bounded_complete<J: JudgeClient + ?Sized>(judge: &J, prompts: &[String], workers: usize) -> Vec<Result<String>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<String>>>> = prompts.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, prompts.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(p) = prompts.get(i) else { break };
                let r = judge.complete(p);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every slot filled")).collect()
}

/// A question with the answer being judged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeItem {
    pub question: String,
    pub answer: String,
}

impl JudgeItem {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self { question: question.into(), answer: answer.into() }
    }
}

/// Per-item judged values; `None` marks a malformed answer, which is
/// excluded from the aggregate and counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judged<T> {
    pub items: Vec<Option<T>>,
    pub invalid: usize,
    /// Mean over valid items, `None` if there are none.
    pub aggregate: Option<f64>,
}

/// Strict parse of `{"topic_adherence": 0|1}`.
pub fn parse_topic_adherence(content: &str) -> Result<u8> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Ta {
        topic_adherence: u8,
    }
    let ta: Ta = serde_json::from_str(content.trim())?;
    match ta.topic_adherence {
        v @ (0 | 1) => Ok(v),
        v => Err(Error::Judge(format!("topic adherence {v} is not 0 or 1"))),
    }
}

/// Strict parse of the six integer emotion scores, each in `0..=100`.
pub fn parse_emotion_scores(content: &str) -> Result<SixScores> {
    let s: SixScores = serde_json::from_str(content.trim())?;
    s.validate()?;
    Ok(s)
}

fn judge_all<T, J: JudgeClient + ?Sized>(
    items: &[JudgeItem],
    judge: &J,
    prompt: fn(&str, &str) -> String,
    parse: fn(&str) -> Result<T>,
    value: fn(&T) -> f64,
) -> Result<Judged<T>> {
    if items.is_empty() {
        return Err(Error::Empty("nothing to judge"));
    }
    let prompts: Vec<String> = items.iter().map(|i| prompt(&i.question, &i.answer)).collect();
    let mut parsed = Vec::with_capacity(items.len());
    for answer in judge.complete_all(&prompts) {
        parsed.push(parse(&answer?).ok());
    }
    let values: Vec<f64> = parsed.iter().flatten().map(value).collect();
    Ok(Judged {
        invalid: parsed.len() - values.len(),
        aggregate: (!values.is_empty()).then(|| mean(&values)),
        items: parsed,
    })
}

/// Share of answers judged on-topic. Transport failures are errors;
/// malformed judge output only invalidates its item.
pub fn topic_adherence<J: JudgeClient + ?Sized>(items: &[JudgeItem], judge: &J) -> Result<Judged<u8>> {
    judge_all(items, judge, topic_adherence_prompt, parse_topic_adherence, |&v| f64::from(v))
}

/// Judged emotion scores per item; the aggregate is the mean activation score.
pub fn judge_eas<J: JudgeClient + ?Sized>(items: &[JudgeItem], judge: &J) -> Result<Judged<SixScores>> {
    judge_all(items, judge, emotion_scores_prompt, parse_emotion_scores, |s| eas_score(s).expect("validated on parse"))
}
