//! Guideline extraction and the context-keyed guideline store.
//!
//! [`build_store`] walks contrastive pairs in order. For each pair it identifies
//! the context at the deviation timestep from the shared prefix, matches it
//! against the contexts already in the store, asks the extraction model for a
//! guideline and files it under the (possibly reused) context.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{canonicalize, identify_context, match_context, Context, ContextError, MatchMode};
use crate::lm::{LmError, LmRole, LmStack};
use crate::template::{PromptTemplates, TemplateError};
use crate::text::first_paragraph;
use crate::trajectory::ContrastivePair;

pub const STORE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("extraction model returned an empty guideline")]
    EmptyGuideline,
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("every one of the {pairs} pairs failed")]
    AllPairsFailed { pairs: usize },
    #[error("store schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: String, expected: u32 },
    #[error("malformed store document: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guideline {
    pub text: String,
    /// Id of the contrastive pair the guideline was extracted from.
    pub source_pair: String,
    pub deviation: usize,
    /// Insertion ordinal, unique within a store.
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreEntry {
    pub context: Context,
    pub guidelines: Vec<Guideline>,
}

/// Ordered map from canonical context key to guidelines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GuidelineStore {
    entries: Vec<StoreEntry>,
    index: BTreeMap<String, usize>,
    next_ordinal: u64,
}

impl GuidelineStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn key_count(&self) -> usize {
        self.entries.len()
    }

    pub fn guideline_count(&self) -> usize {
        self.entries.iter().map(|e| e.guidelines.len()).sum()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn get(&self, canonical_key: &str) -> Option<&StoreEntry> {
        self.index.get(canonical_key).map(|&i| &self.entries[i])
    }

    pub fn contexts(&self) -> Vec<&Context> {
        self.entries.iter().map(|e| &e.context).collect()
    }

    /// Every guideline, entry by entry, in insertion order.
    pub fn all_guidelines(&self) -> impl Iterator<Item = &Guideline> {
        self.entries.iter().flat_map(|e| e.guidelines.iter())
    }

    /// Index of the entry keyed by `context`'s canonical key, creating it if absent.
    pub fn insert_context(&mut self, context: Context) -> usize {
        if let Some(&i) = self.index.get(context.canonical()) {
            return i;
        }
        let i = self.entries.len();
        self.index.insert(context.canonical().to_string(), i);
        self.entries.push(StoreEntry { context, guidelines: Vec::new() });
        i
    }

    /// Adds a guideline under entry `entry`, assigning its ordinal. Returns
    /// `false` when an identical text is already filed under that entry.
    pub fn add_guideline(&mut self, entry: usize, mut guideline: Guideline) -> bool {
        let bucket = &mut self.entries[entry].guidelines;
        if bucket.iter().any(|g| g.text == guideline.text) {
            return false;
        }
        guideline.created_at = self.next_ordinal;
        self.next_ordinal += 1;
        bucket.push(guideline);
        true
    }

    /// Finds the entry whose context matches `context` (canonical key first,
    /// then the matching model in [`MatchMode::Lm`]).
    pub fn lookup(
        &self,
        context: &Context,
        templates: &PromptTemplates,
        lm: &LmStack<'_>,
        mode: MatchMode,
    ) -> Result<Option<&StoreEntry>, ContextError> {
        if let Some(entry) = self.get(context.canonical()) {
            return Ok(Some(entry));
        }
        let existing = self.contexts();
        let found = match_context(context, &existing, &templates.context, lm, mode)?;
        Ok(found.map(|i| &self.entries[i]))
    }

    pub fn to_json(&self) -> String {
        let doc = StoreDocument {
            version: serde_json::Value::from(STORE_SCHEMA_VERSION),
            entries: self
                .entries
                .iter()
                .map(|e| EntryDocument {
                    context_raw: e.context.raw().into(),
                    context_key: e.context.canonical().into(),
                    guidelines: e.guidelines.clone(),
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("store serializes");
        out.push('\n');
        out
    }

    pub fn from_json(json: &str) -> Result<Self, StoreError> {
        let doc: StoreDocument = serde_json::from_str(json).map_err(|e| StoreError::Malformed(e.to_string()))?;
        if doc.version.as_u64() != Some(u64::from(STORE_SCHEMA_VERSION)) {
            let found = match &doc.version {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            return Err(StoreError::SchemaVersionMismatch { found, expected: STORE_SCHEMA_VERSION });
        }
        let mut store = GuidelineStore::new();
        let mut ordinals = BTreeMap::new();
        for entry in doc.entries {
            let context = Context::new(&entry.context_raw)
                .map_err(|_| StoreError::Malformed(format!("empty context for key `{}`", entry.context_key)))?;
            if context.canonical() != entry.context_key || canonicalize(&entry.context_key) != entry.context_key {
                return Err(StoreError::Malformed(format!(
                    "key `{}` is not the canonical form of `{}`",
                    entry.context_key, entry.context_raw
                )));
            }
            if store.index.contains_key(context.canonical()) {
                return Err(StoreError::Malformed(format!("duplicate key `{}`", entry.context_key)));
            }
            let i = store.insert_context(context);
            for g in entry.guidelines {
                if g.text.trim().is_empty() {
                    return Err(StoreError::Malformed("empty guideline text".into()));
                }
                if ordinals.insert(g.created_at, ()).is_some() {
                    return Err(StoreError::Malformed(format!("duplicate ordinal {}", g.created_at)));
                }
                let bucket = &mut store.entries[i].guidelines;
                if bucket.iter().any(|x| x.text == g.text) {
                    return Err(StoreError::Malformed(format!("duplicate guideline under `{}`", entry.context_key)));
                }
                store.next_ordinal = store.next_ordinal.max(g.created_at + 1);
                bucket.push(g);
            }
        }
        Ok(store)
    }
}

#[derive(Serialize, Deserialize)]
struct StoreDocument {
    version: serde_json::Value,
    entries: Vec<EntryDocument>,
}

#[derive(Serialize, Deserialize)]
struct EntryDocument {
    context_raw: String,
    context_key: String,
    guidelines: Vec<Guideline>,
}

/// Renders the extraction prompt for `pair` in `context`.
pub fn render_extraction_prompt(
    pair: &ContrastivePair,
    context: &Context,
    templates: &PromptTemplates,
) -> Result<String, TemplateError> {
    templates.extraction.render(&[
        ("positive_trajectory", &pair.positive.render()),
        ("negative_trajectory", &pair.negative.render()),
        ("context", context.raw()),
    ])
}

/// Asks the extraction model for a guideline contrasting the pair in `context`.
///
/// The first paragraph of the answer is the guideline text. The returned
/// guideline's `created_at` is assigned when it is added to a store.
pub fn extract_guideline(
    pair: &ContrastivePair,
    context: &Context,
    templates: &PromptTemplates,
    lm: &LmStack<'_>,
) -> Result<Guideline, StoreError> {
    let prompt = render_extraction_prompt(pair, context, templates)?;
    let answer = lm.ask(LmRole::Extraction, prompt)?;
    let text = first_paragraph(&answer);
    if text.is_empty() {
        return Err(StoreError::EmptyGuideline);
    }
    Ok(Guideline { text, source_pair: pair.id.clone(), deviation: pair.deviation, created_at: 0 })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedPair {
    pub pair_id: String,
    pub reason: String,
}

/// Result of [`build_store`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildOutcome {
    pub store: GuidelineStore,
    /// Context identified for each pair that got that far, in pair order.
    pub identified: Vec<(String, Context)>,
    pub skipped: Vec<SkippedPair>,
    /// Pairs whose guideline text was already filed under the matched key.
    pub duplicates: usize,
}

/// Builds the guideline store from contrastive pairs, in the given order.
///
/// A pair whose context identification, extraction or model call fails is
/// logged and skipped. The run fails only when there was at least one pair
/// and every pair failed.
pub fn build_store(
    pairs: &[ContrastivePair],
    templates: &PromptTemplates,
    lm: &LmStack<'_>,
    mode: MatchMode,
) -> Result<BuildOutcome, StoreError> {
    let mut outcome =
        BuildOutcome { store: GuidelineStore::new(), identified: Vec::new(), skipped: Vec::new(), duplicates: 0 };
    for pair in pairs {
        if let Err(err) = process_pair(pair, templates, lm, mode, &mut outcome) {
            log::warn!("skipping pair {}: {err}", pair.id);
            outcome.skipped.push(SkippedPair { pair_id: pair.id.clone(), reason: err.to_string() });
        }
    }
    if !pairs.is_empty() && outcome.skipped.len() == pairs.len() {
        return Err(StoreError::AllPairsFailed { pairs: pairs.len() });
    }
    Ok(outcome)
}

fn process_pair(
    pair: &ContrastivePair,
    templates: &PromptTemplates,
    lm: &LmStack<'_>,
    mode: MatchMode,
    outcome: &mut BuildOutcome,
) -> Result<(), StoreError> {
    let identified = identify_context(&pair.shared_prefix(), &templates.context, lm)?;
    outcome.identified.push((pair.id.clone(), identified.clone()));

    let existing = outcome.store.contexts();
    let matched = match_context(&identified, &existing, &templates.context, lm, mode)?;
    let context = match matched {
        Some(i) => outcome.store.entries[i].context.clone(),
        None => identified,
    };

    let guideline = extract_guideline(pair, &context, templates, lm)?;
    // The key is created only once a guideline exists for it.
    let entry = outcome.store.insert_context(context);
    if !outcome.store.add_guideline(entry, guideline) {
        outcome.duplicates += 1;
    }
    Ok(())
}
