//! Byte-exact prompt renderings. Set `UPDATE_GOLDEN=1` to rewrite the files
//! after an intentional template change.

use std::path::PathBuf;

use autoguide_core::agent::{render_action_prompt, AgentConfig};
use autoguide_core::lm::{LmStack, RoleModels, ScriptedBackend};
use autoguide_core::store::{render_extraction_prompt, Guideline};
use autoguide_core::template::PromptTemplates;
use autoguide_core::trajectory::{Action, ContrastivePair, DeviationMode, Step, Trajectory};
use autoguide_core::Context;

fn check(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden mismatch for {name}");
}

fn toy() -> Trajectory {
    let mut t = Trajectory::new("toy", "Find your way to the exit hall.");
    t.steps.push(Step::new("Corridor 1. The passage continues forward.", Action::env("go forward"), 0.0));
    t.steps.push(Step::new("At the hallway fork. Available actions: go east, go north, go south, go west.", Action::env("go north"), 1.0));
    t.final_observation = Some("Exit hall. You found the way out. Task complete.".into());
    t.terminated = true;
    t
}

fn guideline(text: &str) -> Guideline {
    Guideline { text: text.into(), source_pair: "toy#1".into(), deviation: 1, created_at: 0 }
}

fn ctx() -> Context {
    Context::new("At the hallway fork").unwrap()
}

#[test]
fn action_prompt_without_guidelines_or_feedback() {
    let t = toy();
    let prompt = render_action_prompt(&t.prefix(1).unwrap(), Some(&ctx()), &[], &AgentConfig::default());
    assert!(!prompt.contains("Guidelines:"));
    assert!(!prompt.contains("Feedback from past attempts:"));
    check("action_empty_blocks.txt", &prompt);
}

#[test]
fn action_prompt_without_context() {
    let t = toy();
    let prompt = render_action_prompt(&t.prefix(1).unwrap(), None, &[], &AgentConfig::default());
    assert!(!prompt.contains("Current context:"));
    check("action_no_context.txt", &prompt);
}

#[test]
fn action_prompt_block_order() {
    let t = toy();
    let contexts = vec!["In a corridor".to_string()];
    let config = AgentConfig {
        few_shot: vec!["Task: Reach the roof.\nObservation: Stairwell.\nAction: go up".into()],
        feedback: vec!["Last time I went east at the fork and hit a dead end.".into()],
        ..AgentConfig::default()
    };
    let gs = [guideline("When at the hallway fork, you should go north."), guideline("When at a fork, read the signs first.")];
    let prompt = render_action_prompt(&t.prefix(1).unwrap().with_contexts(&contexts), Some(&ctx()), &gs, &config);

    let at = |needle: &str| prompt.find(needle).unwrap_or_else(|| panic!("missing {needle:?}"));
    let order = [
        at("Here are examples"),
        at("Task: Find your way"),
        at("Context: In a corridor"),
        at("Current observation: At the hallway fork"),
        at("Current context: At the hallway fork"),
        at("Guidelines:\n- When at the hallway fork, you should go north.\n- When at a fork"),
        at("Feedback from past attempts:\n- Last time"),
        at("Respond with your next action"),
    ];
    assert!(order.windows(2).all(|w| w[0] < w[1]), "{order:?}");
    // Feedback follows the guidelines block directly.
    let after_guidelines = &prompt[at("Guidelines:")..];
    let gap = &after_guidelines[..after_guidelines.find("Feedback from past attempts:").unwrap()];
    assert!(gap.lines().filter(|l| !l.is_empty()).all(|l| l == "Guidelines:" || l.starts_with("- ")));
    check("action_full.txt", &prompt);
}

#[test]
fn pipeline_prompts() {
    let templates = PromptTemplates::builtin();
    let t = toy();
    check("context_identification.txt", &templates.context.render_identification(&t.prefix(1).unwrap()).unwrap());

    let existing = [Context::new("At the garden gate").unwrap(), Context::new("In a corridor").unwrap()];
    let refs: Vec<&Context> = existing.iter().collect();
    check("context_matching.txt", &templates.context.render_matching(&ctx(), &refs).unwrap());

    let mut negative = toy();
    negative.steps[1] = Step::new(negative.steps[1].observation.clone(), Action::env("go west"), 0.0);
    negative.final_observation = Some("Dead end. The passage collapses behind you.".into());
    let pair = ContrastivePair::new("toy#1", toy(), negative, DeviationMode::AllActions).unwrap();
    check("guideline_extraction.txt", &render_extraction_prompt(&pair, &ctx(), &templates).unwrap());
}

#[test]
fn selection_prompt() {
    use autoguide_core::agent::select_guidelines;
    use autoguide_core::lm::ScriptedRule;
    use autoguide_core::store::GuidelineStore;
    use std::sync::Mutex;

    // Capture the selection prompt through a recording backend.
    struct Capture(Mutex<Vec<String>>, ScriptedBackend);
    impl autoguide_core::LanguageModel for Capture {
        fn complete(&self, r: &autoguide_core::ChatRequest) -> Result<autoguide_core::ChatResponse, autoguide_core::LmError> {
            self.0.lock().unwrap().push(r.final_user_message().unwrap().into());
            self.1.complete(r)
        }
    }
    let capture = Capture(Mutex::new(Vec::new()), ScriptedBackend::from_rules([ScriptedRule::new("", "2")]));
    let models = RoleModels::scripted();
    let lm = LmStack::new(&capture, &models);
    let mut store = GuidelineStore::new();
    let e = store.insert_context(ctx());
    for text in ["When at the hallway fork, you should go north.", "When at a fork, read the signs first.", "When lost, go back."] {
        store.add_guideline(e, guideline(text));
    }
    let t = toy();
    let got = select_guidelines(&ctx(), &t.prefix(1).unwrap(), &store, 2, &PromptTemplates::builtin(), &lm, Default::default())
        .unwrap();
    assert_eq!(got.len(), 1);
    let prompts = capture.0.lock().unwrap();
    check("guideline_selection.txt", &prompts[0]);
}
