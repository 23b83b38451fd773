// SPDX-License-Identifier: MIT OR Apache-2.0

//! Shared planted desk setup for integration tests.

#![allow(dead_code)]

use std::sync::OnceLock;

use evsteer_core::corpus::{generate_planted, PlantedSpec, PromptRecord, EQ_PLUS_NEUTRAL, EQ_PLUS_PER_EMOTION};
use evsteer_core::evcore::EvSet;
use evsteer_core::nanoformer::{ModelConfig, NanoModel};
use evsteer_core::par::Exec;
use evsteer_core::pipeline::{continuation_prompt, extract_ev_set, planted_model};

pub struct Desk {
    pub spec: PlantedSpec,
    pub model: NanoModel,
    /// EQ+-shaped planted corpus: 5×50 emotional plus 150 neutral records.
    pub records: Vec<PromptRecord>,
    pub set: EvSet,
}

impl Desk {
    /// Evaluation point for the theory checks.
    pub fn probe_tokens(&self) -> Vec<u32> {
        continuation_prompt(&self.records[0].query)
    }
}

pub fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let spec = PlantedSpec::default();
        let model = planted_model(&spec, ModelConfig::default()).unwrap();
        let records = generate_planted(&spec, EQ_PLUS_PER_EMOTION, EQ_PLUS_NEUTRAL).unwrap();
        let set = extract_ev_set(&model, &records, Exec::Parallel).unwrap();
        Desk { spec, model, records, set }
    })
}
