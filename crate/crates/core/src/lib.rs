//! Context-aware guideline extraction and test-time application for LLM agents.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithmic piece
//! of the pipeline:
//!
//! * [`trajectory`]: offline trajectories, returns, contrastive pairs and the
//!   deviation timestep at which two trajectories of the same task diverge.
//! * [`lm`]: the language-model invocation surface ([`lm::LanguageModel`]), request
//!   fingerprints and a deterministic scripted backend.
//! * [`context`]: context identification over partial trajectories and context
//!   matching against previously seen contexts.
//! * [`store`]: guideline extraction from contrastive pairs and construction of
//!   the context-keyed guideline store.
//! * [`agent`]: top-k guideline selection, action prompt assembly and the
//!   episode loop.
//! * [`sim`]: deterministic text environments with ground-truth oracles and an
//!   offline-data generator.
//!
//! File formats, HTTP, cassettes and the command line live in the `autoguide`
//! companion crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agent;
pub mod context;
pub mod lm;
pub mod sim;
pub mod store;
pub mod template;
pub mod text;
pub mod trajectory;

pub use agent::{AgentConfig, EpisodeResult, GuidelineMode};
pub use context::{Context, ContextTemplateSet, MatchMode};
pub use lm::{ChatRequest, ChatResponse, LanguageModel, LmError, LmStack, RoleModels};
pub use store::{Guideline, GuidelineStore};
pub use trajectory::{Action, ActionKind, ContrastivePair, DeviationMode, Step, Trajectory};
