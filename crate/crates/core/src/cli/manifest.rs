//! Run manifests (TOML).
//!
//! ```toml
//! models = ["camera.efsm"]
//! lexicon = "lexicon.tsv"
//! executor = "oracle"        # or "vlm"
//! seed = 7
//! out = "out"
//!
//! [[tasks]]
//! id = "photo"
//! instruction = "Take a photo"
//! goal = [{ app = "camera", function = "take_photo" }]
//! ```
//!
//! Instead of `models`, `lexicon` and `tasks`, a `[generate]` table asks
//! for a seeded synthetic world. Relative paths are resolved against the
//! manifest's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::harness::{GoalSpec, InvokedCall, DEFAULT_STEP_LIMIT};
use crate::synth::TaskMix;

use super::{CliError, Env, GatewayFlags, ParserChoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutorChoice {
    Oracle,
    Vlm,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayTable {
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
    pub replay: Option<PathBuf>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalCall {
    pub app: String,
    pub function: String,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub id: Option<String>,
    pub instruction: String,
    pub goal: Vec<GoalCall>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateTable {
    pub tasks: usize,
    #[serde(default = "default_apps")]
    pub apps: usize,
    #[serde(default)]
    pub mix: MixChoice,
}

fn default_apps() -> usize {
    2
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixChoice {
    #[default]
    Any,
    Feasible,
    Infeasible,
}

impl From<MixChoice> for TaskMix {
    fn from(m: MixChoice) -> Self {
        match m {
            MixChoice::Any => TaskMix::Any,
            MixChoice::Feasible => TaskMix::FeasibleOnly,
            MixChoice::Infeasible => TaskMix::InfeasibleOnly,
        }
    }
}

/// The manifest file as written.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub models: Vec<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub executor: Option<ExecutorChoice>,
    pub parser: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub step_limit: Option<usize>,
    pub jobs: Option<usize>,
    pub gateway: Option<GatewayTable>,
    #[serde(default)]
    pub tasks: Vec<TaskEntry>,
    pub generate: Option<GenerateTable>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("manifest: {0}")]
pub struct ManifestError(pub String);

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        CliError::Failure(e.to_string())
    }
}

/// Command-line values that take precedence over the manifest.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub models: Vec<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub gateway: GatewayFlags,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub id: String,
    pub instruction: String,
    pub goal: GoalSpec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskSource {
    Listed {
        models: Vec<PathBuf>,
        lexicon: PathBuf,
        tasks: Vec<TaskSpec>,
    },
    Generated {
        tasks: usize,
        apps: usize,
        mix: MixChoice,
    },
}

/// A checked manifest with overrides applied and paths resolved.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub source: TaskSource,
    pub executor: ExecutorChoice,
    pub parser: ParserChoice,
    pub seed: u64,
    pub out: PathBuf,
    pub step_limit: usize,
    pub jobs: usize,
    pub gateway_flags: GatewayFlags,
    pub gateway: Option<GatewayTable>,
    pub dir: PathBuf,
    pub gateway_env: Vec<(String, String)>,
}

fn valid_task_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        toml::from_str(text).map_err(|e| ManifestError(e.to_string()))
    }
}

impl RunManifest {
    pub fn load(path: &Path, overrides: &Overrides, env: Env<'_>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let m = Manifest::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(Self::from_manifest(m, &dir, overrides, env)?)
    }

    pub fn from_manifest(m: Manifest, dir: &Path, overrides: &Overrides, env: Env<'_>) -> Result<Self, ManifestError> {
        let err = |s: &str| ManifestError(s.to_string());
        let resolve = |p: &PathBuf| dir.join(p);

        let models: Vec<PathBuf> = if overrides.models.is_empty() {
            m.models.iter().map(resolve).collect()
        } else {
            overrides.models.clone()
        };
        let lexicon = overrides.lexicon.clone().or_else(|| m.lexicon.as_ref().map(resolve));

        let source = match m.generate {
            Some(g) => {
                if !m.tasks.is_empty() || !models.is_empty() || lexicon.is_some() {
                    return Err(err("[generate] cannot be combined with models, lexicon or tasks"));
                }
                if g.apps == 0 {
                    return Err(err("[generate] needs at least one app"));
                }
                TaskSource::Generated {
                    tasks: g.tasks,
                    apps: g.apps,
                    mix: g.mix,
                }
            }
            None => {
                if models.is_empty() {
                    return Err(err("no models listed"));
                }
                let lexicon = lexicon.ok_or_else(|| err("no lexicon given"))?;
                let mut seen = BTreeSet::new();
                let mut tasks = Vec::new();
                for (i, t) in m.tasks.into_iter().enumerate() {
                    let id = t.id.unwrap_or_else(|| format!("task{i:03}"));
                    if !valid_task_id(&id) {
                        return Err(ManifestError(format!(
                            "task id `{id}` may only use letters, digits, `_` and `-`"
                        )));
                    }
                    if !seen.insert(id.clone()) {
                        return Err(ManifestError(format!("task id `{id}` is used twice")));
                    }
                    let goal = GoalSpec {
                        calls: t
                            .goal
                            .into_iter()
                            .map(|g| InvokedCall {
                                app: g.app,
                                function: g.function,
                                args: g.args,
                            })
                            .collect(),
                    };
                    tasks.push(TaskSpec {
                        id,
                        instruction: t.instruction,
                        goal,
                    });
                }
                TaskSource::Listed { models, lexicon, tasks }
            }
        };

        let parser = match m.parser.as_deref() {
            None | Some("lexicon") => ParserChoice::Lexicon,
            Some("llm") => ParserChoice::Llm,
            Some(other) => return Err(ManifestError(format!("unknown parser `{other}`"))),
        };
        if parser == ParserChoice::Llm && matches!(source, TaskSource::Generated { .. }) {
            return Err(err("generated tasks are parsed with their generated lexicon"));
        }
        let executor = m.executor.unwrap_or(ExecutorChoice::Oracle);
        let run = Self {
            source,
            executor,
            parser,
            seed: overrides.seed.or(m.seed).unwrap_or(0),
            out: overrides
                .out
                .clone()
                .unwrap_or_else(|| dir.join(m.out.unwrap_or_else(|| "out".into()))),
            step_limit: m.step_limit.unwrap_or(DEFAULT_STEP_LIMIT),
            jobs: overrides.jobs.or(m.jobs).unwrap_or(1).max(1),
            gateway_flags: overrides.gateway.clone(),
            gateway: m.gateway,
            dir: dir.to_path_buf(),
            gateway_env: [super::ENV_API_BASE, super::ENV_API_KEY, super::ENV_MODEL]
                .iter()
                .filter_map(|k| env(k).map(|v| (k.to_string(), v)))
                .collect(),
        };
        if (run.executor == ExecutorChoice::Vlm || run.parser == ParserChoice::Llm) && !run.has_gateway() {
            return Err(err(
                "the vlm executor and llm parser need a gateway: set [gateway] base_url or replay, \
                 pass --gateway-base or --replay, or set SPLANNER_API_BASE",
            ));
        }
        Ok(run)
    }

    pub fn env(&self, key: &str) -> Option<String> {
        self.gateway_env.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
    }

    pub fn has_gateway(&self) -> bool {
        let g = self.gateway.as_ref();
        self.gateway_flags.replay.is_some()
            || self.gateway_flags.gateway_base.is_some()
            || self.env(super::ENV_API_BASE).is_some()
            || g.is_some_and(|g| g.replay.is_some() || g.base_url.is_some())
    }
}
