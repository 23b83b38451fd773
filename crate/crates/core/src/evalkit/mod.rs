// SPDX-License-Identifier: MIT OR Apache-2.0

//! Evaluation metrics behind pluggable classifiers and judges.

mod classifier;
mod judge;
mod metrics;
mod report;

pub use classifier::{
    classify_lexicon, logistic, planted_lexicon, AffectScorer, EmotionClassifier, EpsLabel, LabelLexicon,
    LexiconClassifier, ThreeWayScorer, PLANTED_OFFSET, PLANTED_SLOPE,
};
pub use judge::{
    bounded_complete, emotion_scores_prompt, judge_eas, parse_emotion_scores, parse_topic_adherence, render,
    topic_adherence, topic_adherence_prompt, FixtureEntry, FixtureJudge, HttpJudge, JudgeClient, JudgeItem, Judged,
    EMOTION_SCORES_TEMPLATE, TOPIC_ADHERENCE_TEMPLATE,
};
pub use metrics::{
    auc, eas_score, eps_score, tec_matrix, tec_score, SixScores, TecItem, TecMatrix, TEC_ALPHAS, TEC_ROWS,
};
pub use report::{pair_perplexity, Condition, MetricId, MetricReport, MetricRow};
