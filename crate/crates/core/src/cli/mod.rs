//! Command-line front end: `validate`, `solve`, `plan`, `run`.
//!
//! Everything goes through [`main_with`], which takes the environment and
//! output streams as arguments so the commands can be driven from tests.
//! Exit status: 0 success, 1 diagnostics or semantic errors, 2 I/O failures.

mod manifest;
mod run;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::diagnostics::Diagnostics;
use crate::format::{load_paths, LoadError};
use crate::gateway::{
    ChatGateway, GatewayConfig, HttpGateway, ReplayGateway, Transcript, ENV_API_BASE, ENV_API_KEY, ENV_MODEL,
};
use crate::intent::{Instruction, IntentParser, Lexicon, LexiconParser, LlmParser};
use crate::model::KnowledgeBase;
use crate::plan::plan_instruction;
use crate::solver::{path_listing, Solver, Target, TargetSequence};

pub use manifest::{GatewayTable, Manifest, ManifestError, Overrides, RunManifest, TaskSpec};
pub use run::{execute_run, RunReport, TaskResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "splanner",
    version,
    about = "Plan and simulate smartphone tasks from app state machines"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParserChoice {
    Lexicon,
    Llm,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GatewayFlags {
    /// Chat-completions base URL (overrides SPLANNER_API_BASE).
    #[arg(long)]
    pub gateway_base: Option<String>,
    /// Model identifier (overrides SPLANNER_MODEL).
    #[arg(long)]
    pub gateway_model: Option<String>,
    /// Serve model replies from a recorded transcript instead of the network.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Append every live exchange to this transcript file.
    #[arg(long)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and check model files.
    Validate {
        paths: Vec<PathBuf>,
        #[arg(long)]
        models: Vec<PathBuf>,
    },
    /// Print the shortest execution path for one app.
    Solve {
        #[arg(long, required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        app: String,
        /// `function` or `function(param=value, ...)`; repeat in order.
        #[arg(long = "target")]
        targets: Vec<String>,
    },
    /// Turn an instruction into a numbered plan.
    Plan {
        instruction: String,
        #[arg(long, required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "lexicon")]
        parser: ParserChoice,
        /// Ask the model to reword the plan.
        #[arg(long)]
        polish: bool,
        #[command(flatten)]
        gateway: GatewayFlags,
    },
    /// Run every task of a manifest as a simulated episode.
    Run {
        manifest: PathBuf,
        #[arg(long)]
        models: Vec<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        gateway: GatewayFlags,
    },
}

/// Why a command stopped early.
#[derive(Debug)]
pub enum CliError {
    Failure(String),
    Invalid(Diagnostics),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failure(_) | CliError::Invalid(_) => EXIT_FAILURE,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn report(&self, err: &mut dyn Write) {
        let _ = match self {
            CliError::Failure(m) | CliError::Io(m) => writeln!(err, "error: {m}"),
            CliError::Invalid(d) => write!(err, "{d}"),
        };
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io { .. } => CliError::Io(e.to_string()),
            LoadError::Invalid(d) => CliError::Invalid(d),
        }
    }
}

pub type Env<'a> = &'a dyn Fn(&str) -> Option<String>;

/// Runs the CLI with explicit arguments, environment and streams; returns
/// the exit status.
pub fn main_with(
    args: impl IntoIterator<Item = impl Into<OsString> + Clone>,
    env: Env<'_>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, env, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            e.report(err);
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, env: Env<'_>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Validate { mut paths, models } => {
            paths.extend(models);
            cmd_validate(&paths, out, err)
        }
        Command::Solve { models, app, targets } => cmd_solve(&models, &app, &targets, out),
        Command::Plan {
            instruction,
            models,
            lexicon,
            parser,
            polish,
            gateway,
        } => cmd_plan(
            &PlanArgs {
                instruction,
                models,
                lexicon,
                parser,
                polish,
                gateway,
            },
            env,
            out,
            err,
        ),
        Command::Run {
            manifest,
            models,
            lexicon,
            jobs,
            seed,
            out: out_dir,
            gateway,
        } => {
            let overrides = manifest::Overrides {
                models,
                lexicon,
                jobs,
                seed,
                out: out_dir,
                gateway,
            };
            let m = RunManifest::load(&manifest, &overrides, env)?;
            let report = execute_run(&m)?;
            let _ = out.write_all(report.text().as_bytes());
            for (id, note) in report.notes() {
                let _ = writeln!(err, "note: {id}: {note}");
            }
            Ok(())
        }
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("writing output: {e}")))
}

pub fn cmd_validate(paths: &[PathBuf], out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if paths.is_empty() {
        return Err(CliError::Failure("no model files given".into()));
    }
    let kb = load_paths(paths)?;
    for w in kb.warnings() {
        let _ = writeln!(err, "{w}");
    }
    let transitions: usize = kb.machines().map(|m| m.transitions().len()).sum();
    write_out(out, &format!("ok: {} apps, {transitions} transitions\n", kb.len()))
}

/// Parses `f` or `f(a=1, b=two words)`.
pub fn parse_target(text: &str) -> Result<Target, String> {
    let text = text.trim();
    let Some(open) = text.find('(') else {
        return Ok(Target::new(text));
    };
    let inner = text[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| format!("target `{text}` is missing `)`"))?;
    let mut target = Target::new(text[..open].trim());
    for pair in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| format!("argument `{pair}` is not `name=value`"))?;
        target = target.arg(k.trim(), v.trim());
    }
    Ok(target)
}

pub fn cmd_solve(models: &[PathBuf], app: &str, targets: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let kb = load_paths(models)?;
    let targets: TargetSequence = targets
        .iter()
        .map(|t| parse_target(t))
        .collect::<Result<_, _>>()
        .map_err(CliError::Failure)?;
    let machine = kb
        .get(app)
        .ok_or_else(|| CliError::Failure(format!("UNKNOWN_APP: no app named `{app}`")))?;
    let result = Solver::default()
        .solve(machine, &targets)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    write_out(out, &path_listing(&result))
}

pub struct PlanArgs {
    pub instruction: String,
    pub models: Vec<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub parser: ParserChoice,
    pub polish: bool,
    pub gateway: GatewayFlags,
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Lexicon::parse(&text).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))
}

pub fn cmd_plan(args: &PlanArgs, env: Env<'_>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let kb = load_paths(&args.models)?;
    let instruction = Instruction::new(args.instruction.clone()).map_err(|e| CliError::Failure(e.to_string()))?;
    let needs_gateway = args.polish || args.parser == ParserChoice::Llm;
    let gateway = if needs_gateway {
        Some(open_gateway(&args.gateway, env, None, Path::new("."))?.ok_or_else(|| {
            CliError::Failure(format!(
                "a model gateway is needed: pass --replay, --gateway-base, or set {ENV_API_BASE}"
            ))
        })?)
    } else {
        None
    };
    let parser: Box<dyn IntentParser + '_> = match args.parser {
        ParserChoice::Lexicon => {
            let path = args
                .lexicon
                .as_ref()
                .ok_or_else(|| CliError::Failure("--lexicon is required with --parser lexicon".into()))?;
            Box::new(LexiconParser {
                lexicon: load_lexicon(path)?,
            })
        }
        ParserChoice::Llm => Box::new(LlmParser {
            gateway: gateway.as_deref().expect("gateway opened above"),
        }),
    };
    let polisher = if args.polish { gateway.as_deref() } else { None };
    let outcome = plan_instruction(&kb, parser.as_ref(), &instruction, &Solver::default(), polisher)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    for n in &outcome.plan.notes {
        let _ = writeln!(err, "note: {}: {}", n.code.as_str(), n.message);
    }
    write_out(out, &outcome.plan.to_text())
}

/// Gateway settings with precedence flags > environment > manifest.
pub fn resolve_gateway_config(
    flags: &GatewayFlags,
    env: Env<'_>,
    manifest: Option<&GatewayTable>,
) -> Option<GatewayConfig> {
    let base = flags
        .gateway_base
        .clone()
        .or_else(|| env(ENV_API_BASE))
        .or_else(|| manifest.and_then(|m| m.base_url.clone()))?;
    let model = flags
        .gateway_model
        .clone()
        .or_else(|| env(ENV_MODEL))
        .or_else(|| manifest.and_then(|m| m.model.clone()))
        .unwrap_or_default();
    let mut cfg = GatewayConfig::new(base, model);
    cfg.api_key = env(ENV_API_KEY).or_else(|| manifest.and_then(|m| m.api_key.clone()));
    if let Some(m) = manifest {
        if let Some(t) = m.timeout_secs {
            cfg.timeout = std::time::Duration::from_secs(t);
        }
        if let Some(r) = m.max_retries {
            cfg.max_retries = r;
        }
    }
    Some(cfg)
}

/// Opens the configured gateway: a replay transcript if one is named,
/// otherwise a live client if a base URL is known, otherwise `None`.
pub fn open_gateway(
    flags: &GatewayFlags,
    env: Env<'_>,
    manifest: Option<&GatewayTable>,
    manifest_dir: &Path,
) -> Result<Option<Box<dyn ChatGateway>>, CliError> {
    let replay = flags
        .replay
        .clone()
        .or_else(|| manifest.and_then(|m| m.replay.as_ref().map(|p| manifest_dir.join(p))));
    if let Some(path) = replay {
        if !path.is_file() {
            return Err(CliError::Io(format!("{}: transcript not found", path.display())));
        }
        let gw = ReplayGateway::open(&path).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
        return Ok(Some(Box::new(gw)));
    }
    let Some(cfg) = resolve_gateway_config(flags, env, manifest) else {
        return Ok(None);
    };
    let transcript = match &flags.record {
        Some(path) => Transcript::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => Transcript::in_memory(),
    };
    let gw = HttpGateway::with_transcript(cfg, Arc::new(transcript)).map_err(|e| CliError::Failure(e.to_string()))?;
    Ok(Some(Box::new(gw)))
}

/// Loads models, mapping failures onto CLI errors.
pub fn load_models(paths: &[PathBuf]) -> Result<KnowledgeBase, CliError> {
    Ok(load_paths(paths)?)
}
