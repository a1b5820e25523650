//! Hierarchical peer / area-chair evaluation of generative outputs.
//!
//! A panel of peer models independently reviews each sample, a stronger
//! area-chair model synthesizes their reviews into a final verdict, and a
//! metrics suite compares the machine scores against human annotations or
//! gold answers. See the repository README for the CLI, file formats, and
//! the acceptance suite.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod gateway;
pub mod metrics;
pub mod orchestrator;
pub mod parser;
pub mod prompt;
pub mod report;
pub mod score;

pub use dataset::{load_dataset, Dataset, DatasetKind, Sample};
pub use gateway::{ChatRequest, ChatResponse, Gateway, ModelHandle, RetryPolicy};
pub use orchestrator::{evaluate_sample, run_dataset, run_reasoning, RunConfig, RunRecord};
pub use parser::{parse_answer, parse_rating, Answer, AnswerSpace, PeerReview};
pub use prompt::{render_prompt, validate_schema, CommunicationStrategy, PromptSchema, Role};
pub use score::{Granularity, Rational, ScoreScale};
