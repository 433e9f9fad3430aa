//! Run configuration file and command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use autoguide_core::lm::Sampling;
use autoguide_core::sim::EnvFamily;
use autoguide_core::{AgentConfig, DeviationMode, GuidelineMode, MatchMode, RoleModels};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::files;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Http,
    #[default]
    Scripted,
    Replay,
}

impl BackendChoice {
    pub fn name(self) -> &'static str {
        match self {
            BackendChoice::Http => "http",
            BackendChoice::Scripted => "scripted",
            BackendChoice::Replay => "replay",
        }
    }
}

impl fmt::Display for BackendChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [BackendChoice::Http, BackendChoice::Scripted, BackendChoice::Replay]
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown backend `{s}` (expected http, scripted or replay)"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendChoice,
    /// Recorded to with `http`/`scripted`, replayed from with `replay`.
    pub cassette: Option<PathBuf>,
    /// Rule table for the scripted backend.
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub family: EnvFamily,
    /// Offline trajectories (JSON lines) read by `extract`.
    pub dataset: Option<PathBuf>,
    /// Evaluation tasks (`{"tasks": [...]}`) read by `eval` and `ablate-k`.
    pub suite: Option<PathBuf>,
    /// Guideline store written by `extract` and read by `eval`.
    pub store: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub templates_dir: Option<PathBuf>,
    pub seed: u64,
    pub modes: Vec<GuidelineMode>,
    pub k_list: Vec<usize>,
    pub jobs: usize,
    pub backend: BackendConfig,
    pub models: RoleModels,
    pub agent: AgentConfig,
    pub deviation_mode: DeviationMode,
    /// Context matching used while building the store.
    pub match_mode: MatchMode,
    pub sampling: Sampling,
    /// Report timestamp. Left empty for scripted and replay runs unless set.
    pub timestamp: Option<String>,
    /// File a misleading guideline under an unvisited context before evaluating.
    pub distractor: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            family: EnvFamily::BranchWorld,
            dataset: None,
            suite: None,
            store: None,
            out_dir: PathBuf::from("out"),
            templates_dir: None,
            seed: 0,
            modes: GuidelineMode::ALL.to_vec(),
            k_list: vec![0, 1, 2, 3, 5],
            jobs: 1,
            backend: BackendConfig::default(),
            models: RoleModels::default(),
            agent: AgentConfig::default(),
            deviation_mode: DeviationMode::default(),
            match_mode: MatchMode::default(),
            sampling: Sampling::default(),
            timestamp: None,
            distractor: false,
        }
    }
}

/// Command-line values that replace config fields when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub store: Option<PathBuf>,
    pub modes: Option<Vec<GuidelineMode>>,
    pub k: Option<usize>,
    pub k_list: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub backend: Option<BackendChoice>,
    pub cassette: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = files::read_text(path)?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.rebase(base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.dataset,
            &mut self.suite,
            &mut self.store,
            &mut self.templates_dir,
            &mut self.backend.cassette,
            &mut self.backend.script,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.out_dir);
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.store {
            self.store = Some(v);
        }
        if let Some(v) = o.modes {
            self.modes = v;
        }
        if let Some(v) = o.k {
            self.agent.k = v;
        }
        if let Some(v) = o.k_list {
            self.k_list = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.jobs {
            self.jobs = v;
        }
        if let Some(v) = o.backend {
            self.backend.kind = v;
        }
        if let Some(v) = o.cassette {
            self.backend.cassette = Some(v);
        }
        if let Some(v) = o.out_dir {
            self.out_dir = v;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.jobs == 0 {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        if self.modes.is_empty() {
            return Err(CliError::Config("modes must not be empty".into()));
        }
        if self.backend.kind == BackendChoice::Replay && self.backend.cassette.is_none() {
            return Err(CliError::Config("the replay backend needs a cassette".into()));
        }
        if self.backend.kind == BackendChoice::Scripted && self.backend.script.is_none() {
            return Err(CliError::Config("the scripted backend needs a script file".into()));
        }
        self.agent.validate()?;
        Ok(())
    }

    /// Store path, defaulting to `<out_dir>/store.json`.
    pub fn store_path(&self) -> PathBuf {
        self.store.clone().unwrap_or_else(|| self.out_dir.join("store.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 1, "sed": 2}"#).unwrap();
        let err = RunConfig::load(&path).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn relative_paths_resolve_against_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"dataset": "d.jsonl", "backend": {"kind": "replay", "cassette": "/abs/c.jsonl"}}"#).unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.dataset.unwrap(), dir.path().join("d.jsonl"));
        assert_eq!(c.backend.cassette.unwrap(), PathBuf::from("/abs/c.jsonl"));
        assert_eq!(c.out_dir, dir.path().join("out"));
    }

    #[test]
    fn overrides_replace_fields() {
        let mut c = RunConfig::default();
        c.apply(Overrides { k: Some(4), seed: Some(9), backend: Some(BackendChoice::Http), ..Overrides::default() });
        assert_eq!((c.agent.k, c.seed, c.backend.kind), (4, 9, BackendChoice::Http));
        assert_eq!(c.k_list, [0, 1, 2, 3, 5]);
    }

    #[test]
    fn backend_names_round_trip() {
        for b in [BackendChoice::Http, BackendChoice::Scripted, BackendChoice::Replay] {
            assert_eq!(b.name().parse::<BackendChoice>().unwrap(), b);
        }
        assert!("grpc".parse::<BackendChoice>().is_err());
    }
}
