use alloc::string::ToString;
use alloc::vec::Vec;

use crate::context::{integer_tokens, numbered, Context, MatchMode};
use crate::lm::{LmRole, LmStack};
use crate::store::{Guideline, GuidelineStore};
use crate::template::PromptTemplates;
use crate::trajectory::PartialTrajectory;

use super::AgentError;

/// Picks at most `k` guidelines for `context` from the store.
///
/// Returns nothing when the context matches no store key. A bucket of at most
/// `k` guidelines is returned whole without a model call. Otherwise the
/// selection model sees the numbered bucket; its first `k` distinct in-range
/// indices are returned in bucket order, and an answer without any usable
/// index falls back to the first `k` guidelines.
pub fn select_guidelines(
    context: &Context,
    partial: &PartialTrajectory<'_>,
    store: &GuidelineStore,
    k: usize,
    templates: &PromptTemplates,
    lm: &LmStack<'_>,
    match_mode: MatchMode,
) -> Result<Vec<Guideline>, AgentError> {
    if k == 0 {
        return Err(AgentError::InvalidConfig("k must be at least 1".into()));
    }
    let Some(entry) = store.lookup(context, templates, lm, match_mode)? else {
        return Ok(Vec::new());
    };
    let bucket = &entry.guidelines;
    if bucket.len() <= k {
        return Ok(bucket.clone());
    }

    let listing = numbered(bucket.iter().map(|g| g.text.as_str()));
    let history = partial.render();
    let k_text = k.to_string();
    let prompt = templates.selection.render(&[
        ("context", context.raw()),
        ("trajectory", &history),
        ("guidelines", &listing),
        ("k", &k_text),
    ])?;
    let answer = lm.ask(LmRole::Selection, prompt)?;

    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for index in integer_tokens(&answer) {
        if chosen.len() == k {
            break;
        }
        if (1..=bucket.len()).contains(&index) && !chosen.contains(&(index - 1)) {
            chosen.push(index - 1);
        }
    }
    if chosen.is_empty() {
        log::debug!("unparsable selection answer {answer:?}; using the first {k} guidelines");
        return Ok(bucket[..k].to_vec());
    }
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| bucket[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{CountingModel, RoleModels, ScriptedBackend, ScriptedRule};
    use crate::store::Guideline;
    use crate::trajectory::{Action, Step, Trajectory};
    use alloc::format;

    fn store_with(n: usize) -> GuidelineStore {
        let mut store = GuidelineStore::new();
        let e = store.insert_context(Context::new("At the hallway fork").unwrap());
        for i in 0..n {
            store.add_guideline(
                e,
                Guideline { text: format!("guideline {}", i + 1), source_pair: "t#1".into(), deviation: 0, created_at: 0 },
            );
        }
        store
    }

    fn traj() -> Trajectory {
        let mut t = Trajectory::new("t", "Find the exit.");
        t.steps.push(Step::new("You are in corridor 1.", Action::env("go forward"), 0.0));
        t.final_observation = Some("You are at the hallway fork.".into());
        t
    }

    fn texts(gs: &[Guideline]) -> Vec<&str> {
        gs.iter().map(|g| g.text.as_str()).collect()
    }

    #[test]
    fn absent_context_selects_nothing() {
        let models = RoleModels::scripted();
        let backend = CountingModel::new(ScriptedBackend::default().with_default("NONE"), models.clone());
        let lm = LmStack::new(&backend, &models);
        let t = traj();
        let ctx = Context::new("In the cellar").unwrap();
        let got =
            select_guidelines(&ctx, &t.prefix(1).unwrap(), &store_with(3), 2, &PromptTemplates::builtin(), &lm, MatchMode::Lm)
                .unwrap();
        assert!(got.is_empty());
        assert_eq!(backend.calls(LmRole::Selection), 0);
    }

    #[test]
    fn small_bucket_short_circuits() {
        let models = RoleModels::scripted();
        let backend = CountingModel::new(ScriptedBackend::default(), models.clone());
        let lm = LmStack::new(&backend, &models);
        let t = traj();
        let ctx = Context::new("at the hallway fork!").unwrap();
        let got =
            select_guidelines(&ctx, &t.prefix(1).unwrap(), &store_with(1), 2, &PromptTemplates::builtin(), &lm, MatchMode::Lm)
                .unwrap();
        assert_eq!(texts(&got), ["guideline 1"]);
        assert_eq!(backend.total(), 0);
    }

    #[test]
    fn model_picks_are_returned_in_bucket_order() {
        let models = RoleModels::scripted();
        let scripted = ScriptedBackend::from_rules([ScriptedRule::for_model("scripted-selection", "", "3 and 1")]);
        let backend = CountingModel::new(scripted, models.clone());
        let lm = LmStack::new(&backend, &models);
        let t = traj();
        let ctx = Context::new("At the hallway fork").unwrap();
        let got =
            select_guidelines(&ctx, &t.prefix(1).unwrap(), &store_with(5), 2, &PromptTemplates::builtin(), &lm, MatchMode::Lm)
                .unwrap();
        assert_eq!(texts(&got), ["guideline 1", "guideline 3"]);
        assert_eq!(backend.calls(LmRole::Selection), 1);
    }

    #[test]
    fn picks_are_capped_deduplicated_and_range_checked() {
        let models = RoleModels::scripted();
        let scripted = ScriptedBackend::from_rules([ScriptedRule::for_model("scripted-selection", "", "9, 4, 4, 2, 5")]);
        let lm = LmStack::new(&scripted, &models);
        let t = traj();
        let ctx = Context::new("At the hallway fork").unwrap();
        let got =
            select_guidelines(&ctx, &t.prefix(1).unwrap(), &store_with(5), 2, &PromptTemplates::builtin(), &lm, MatchMode::Lm)
                .unwrap();
        assert_eq!(texts(&got), ["guideline 2", "guideline 4"]);
    }

    #[test]
    fn unparsable_answer_falls_back_to_first_k() {
        let models = RoleModels::scripted();
        let scripted = ScriptedBackend::default().with_default("the best ones");
        let lm = LmStack::new(&scripted, &models);
        let t = traj();
        let ctx = Context::new("At the hallway fork").unwrap();
        let got =
            select_guidelines(&ctx, &t.prefix(1).unwrap(), &store_with(4), 3, &PromptTemplates::builtin(), &lm, MatchMode::Lm)
                .unwrap();
        assert_eq!(texts(&got), ["guideline 1", "guideline 2", "guideline 3"]);
    }
}
