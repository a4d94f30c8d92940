//! Weak-strong model collaboration toolkit.
//!
//! A small weak model drafts an answer with background knowledge, a strong
//! model refines that draft, and a judge model scores outputs against the
//! ground truth. Refinements that beat the strong model's own answer mark
//! their draft as preferred; the rest become rejected samples. The crate
//! covers the full loop: backends (scripted, HTTP, toy), the draft-refine
//! stages, rubric judging, preference-pair construction and export, text
//! metrics, and a self-contained softmax-policy lab for the SFT and DPO
//! objectives with analytic gradients.

pub mod backend;
pub mod cli;
pub mod collab;
pub mod config;
pub mod dataset;
pub mod judge;
pub mod metrics;
pub mod normalize;
pub mod prefdata;
pub mod records;
pub mod rng;
pub mod toyalign;

pub use backend::{Completion, GenerationRequest, Message, RoleTag, Speaker, TextBackend};
pub use dataset::{Dataset, Example, TaskKind};
pub use normalize::normalize_answer;
