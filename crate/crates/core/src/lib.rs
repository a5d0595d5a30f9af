//! LLM-driven Coq proof generation with error repair and backtracking.
//!
//! A model writes a whole proof script in one shot; the script is then run
//! sentence by sentence, failing sentences are repaired where the error
//! message says how, and anything left over is handed to a hammer after
//! backtracking to a state it can close.

pub mod backtrack;
pub mod demo;
pub mod errors;
pub mod genai;
pub mod orchestrator;
pub mod prover;
pub mod repair;
pub mod retrieval;
pub mod script;
