//! Batch episodes for `splanner run`.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::gateway::ChatGateway;
use crate::harness::{
    check_goal, oracle_executor, run_episode, vlm_executor, write_trace, Environment, Executor, GoalSpec,
};
use crate::intent::{build_catalog, FunctionCatalog, Instruction, IntentParser, Lexicon, LexiconParser, LlmParser};
use crate::model::KnowledgeBase;
use crate::plan::{render_fallback, render_template, Plan};
use crate::solver::{Feasibility, Solver};
use crate::synth::generate_suite;

use super::manifest::{ExecutorChoice, RunManifest, TaskSource};
use super::{load_lexicon, load_models, open_gateway, CliError, ParserChoice, TaskSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskResult {
    pub id: String,
    /// Episode outcome, or `parse_error` / `solve_error` when no episode ran.
    pub outcome: String,
    pub success: bool,
    pub plan_steps: usize,
    pub actions: usize,
    pub note: Option<String>,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    /// Sorted by task id.
    pub results: Vec<TaskResult>,
}

impl RunReport {
    pub fn successes(&self) -> usize {
        self.results.iter().filter(|r| r.success).count()
    }

    /// Percentage of tasks whose goal was met.
    pub fn success_rate(&self) -> f64 {
        if self.results.is_empty() {
            0.0
        } else {
            100.0 * self.successes() as f64 / self.results.len() as f64
        }
    }

    /// One line per task and a final aggregate line. Contains no timings,
    /// so identical runs give identical text.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            out.push_str(&format!(
                "{} outcome={} goal={} plan_steps={} actions={}\n",
                r.id,
                r.outcome,
                if r.success { "pass" } else { "fail" },
                r.plan_steps,
                r.actions
            ));
        }
        out.push_str(&format!(
            "success_rate {:.1} ({}/{})\n",
            self.success_rate(),
            self.successes(),
            self.results.len()
        ));
        out
    }

    pub fn timings(&self) -> String {
        self.results
            .iter()
            .map(|r| format!("{}\t{}\n", r.id, r.wall_ms))
            .collect()
    }

    pub fn notes(&self) -> impl Iterator<Item = (&str, &str)> {
        self.results
            .iter()
            .filter_map(|r| r.note.as_deref().map(|n| (r.id.as_str(), n)))
    }
}

struct World {
    kb: KnowledgeBase,
    catalog: FunctionCatalog,
    lexicon: Lexicon,
    tasks: Vec<TaskSpec>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn build_world(m: &RunManifest) -> Result<World, CliError> {
    fs::create_dir_all(m.out.join("traces")).map_err(|e| io_err(&m.out, e))?;
    match &m.source {
        TaskSource::Listed { models, lexicon, tasks } => {
            let kb = load_models(models)?;
            Ok(World {
                catalog: build_catalog(&kb),
                lexicon: load_lexicon(lexicon)?,
                kb,
                tasks: tasks.clone(),
            })
        }
        TaskSource::Generated { tasks, apps, mix } => {
            let suite = generate_suite(m.seed, *apps, *tasks, (*mix).into());
            let models = m.out.join("models.efsm");
            fs::write(&models, suite.model_text()).map_err(|e| io_err(&models, e))?;
            let lex = m.out.join("lexicon.tsv");
            fs::write(&lex, &suite.lexicon).map_err(|e| io_err(&lex, e))?;
            let lexicon = Lexicon::parse(&suite.lexicon).map_err(|e| CliError::Failure(e.to_string()))?;
            let tasks = suite
                .tasks
                .iter()
                .map(|t| TaskSpec {
                    id: t.id.clone(),
                    instruction: t.instruction.clone(),
                    goal: GoalSpec::from_intent(&t.intent),
                })
                .collect();
            Ok(World {
                catalog: build_catalog(&suite.kb),
                kb: suite.kb,
                lexicon,
                tasks,
            })
        }
    }
}

fn run_task(
    m: &RunManifest,
    world: &World,
    gateway: Option<&dyn ChatGateway>,
    task: &TaskSpec,
) -> Result<TaskResult, CliError> {
    let started = Instant::now();
    let mut result = TaskResult {
        id: task.id.clone(),
        outcome: String::new(),
        success: false,
        plan_steps: 0,
        actions: 0,
        note: None,
        wall_ms: 0,
    };
    let finish = |mut r: TaskResult| {
        r.wall_ms = started.elapsed().as_millis();
        Ok(r)
    };

    let instruction = match Instruction::new(task.instruction.clone()) {
        Ok(i) => i,
        Err(e) => {
            result.outcome = "parse_error".into();
            result.note = Some(e.to_string());
            return finish(result);
        }
    };
    let parsed = match m.parser {
        ParserChoice::Lexicon => LexiconParser {
            lexicon: world.lexicon.clone(),
        }
        .parse(&instruction, &world.catalog),
        ParserChoice::Llm => LlmParser {
            gateway: gateway.expect("checked when the manifest was loaded"),
        }
        .parse(&instruction, &world.catalog),
    };
    let intent = match parsed {
        Ok(i) => i,
        Err(e) => {
            result.outcome = "parse_error".into();
            result.note = Some(e.to_string());
            return finish(result);
        }
    };
    let plan: Plan = match Solver::default().solve_all(&world.kb, &intent) {
        Ok(Feasibility::Feasible(p)) => render_template(&p, &instruction),
        Ok(Feasibility::Infeasible) => render_fallback(),
        Err(e) => {
            result.outcome = "solve_error".into();
            result.note = Some(e.to_string());
            return finish(result);
        }
    };
    let mut env = Environment::new(&world.kb, &task.goal);
    let mut executor: Box<dyn Executor + '_> = match m.executor {
        ExecutorChoice::Oracle => Box::new(oracle_executor()),
        ExecutorChoice::Vlm => Box::new(vlm_executor(gateway.expect("checked when the manifest was loaded"))),
    };
    let episode = run_episode(&mut env, executor.as_mut(), &instruction, &plan, m.step_limit);
    let trace = m.out.join("traces").join(format!("{}.jsonl", task.id));
    write_trace(&trace, &episode).map_err(|e| io_err(&trace, e))?;
    result.success = check_goal(&episode, &task.goal);
    result.outcome = episode.outcome.to_string();
    result.plan_steps = plan.len();
    result.actions = episode.history.len();
    finish(result)
}

/// Runs every task, writes traces, `report.txt` and `timings.tsv` under the
/// output directory, and returns the report. Tasks run on `jobs` threads;
/// the report is sorted by task id so thread scheduling does not show.
pub fn execute_run(m: &RunManifest) -> Result<RunReport, CliError> {
    let world = build_world(m)?;
    let gateway = if m.executor == ExecutorChoice::Vlm || m.parser == ParserChoice::Llm {
        open_gateway(&m.gateway_flags, &|k| m.env(k), m.gateway.as_ref(), &m.dir)?
    } else {
        None
    };
    let gateway = gateway.as_deref();

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Result<TaskResult, CliError>>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..m.jobs.min(world.tasks.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = world.tasks.get(i) else {
                    break;
                };
                let r = run_task(m, &world, gateway, task);
                results.lock().expect("results lock").push(r);
            });
        }
    });
    let mut results = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    results.sort_by(|a, b| a.id.cmp(&b.id));
    let report = RunReport { results };

    let path = m.out.join("report.txt");
    fs::write(&path, report.text()).map_err(|e| io_err(&path, e))?;
    let path = m.out.join("timings.tsv");
    fs::write(&path, report.timings()).map_err(|e| io_err(&path, e))?;
    Ok(report)
}
