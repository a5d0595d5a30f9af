//! Bundled example theorems with mock prover transcripts, canned model
//! replies and a small premise corpus.

use crate::genai::MockModel;
use crate::orchestrator::{parse_dataset, TheoremRecord};
use crate::prover::{MockBackend, Transcript};
use crate::retrieval::Corpus;

const TRANSCRIPTS: &[&str] = &[
    include_str!("../fixtures/transcripts/add_comm.json"),
    include_str!("../fixtures/transcripts/sqr_le.json"),
    include_str!("../fixtures/transcripts/hopeless.json"),
    include_str!("../fixtures/transcripts/in_remove_all_keep.json"),
    include_str!("../fixtures/transcripts/intro_clash.json"),
    include_str!("../fixtures/transcripts/succ_le.json"),
    include_str!("../fixtures/transcripts/rewrite_trans.json"),
];

pub const REPLIES: &str = include_str!("../fixtures/replies.json");
pub const PREMISES: &str = include_str!("../fixtures/premises.jsonl");
pub const DATASET: &str = include_str!("../fixtures/dataset.jsonl");

pub fn transcripts() -> Vec<Transcript> {
    TRANSCRIPTS
        .iter()
        .map(|t| Transcript::from_json(t).expect("bundled transcript is valid"))
        .collect()
}

pub fn backend() -> MockBackend {
    MockBackend::new(transcripts())
}

pub fn model() -> MockModel {
    MockModel::from_json(REPLIES).expect("bundled replies are valid")
}

pub fn corpus() -> Corpus {
    Corpus::from_jsonl(PREMISES).expect("bundled premises are valid")
}

/// The three-theorem benchmark: two provable, one not.
pub fn dataset() -> Vec<TheoremRecord> {
    parse_dataset(DATASET).expect("bundled dataset is valid")
}

/// A record for any bundled theorem, by name.
pub fn theorem(name: &str) -> Option<TheoremRecord> {
    transcripts()
        .into_iter()
        .find(|t| t.theorem == name)
        .map(|t| TheoremRecord {
            name: t.theorem,
            statement: t.statement,
            project: "demo".to_string(),
            premises_file: None,
            ground_truth: None,
        })
}
