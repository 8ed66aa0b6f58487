//! Closed-loop task execution against a simulated device.
//!
//! [`run_episode`] repeatedly asks an [`Executor`] for the next action,
//! applies it to the [`Environment`], and records the history until the
//! executor declares a status or the step limit is reached.

mod env;
mod executors;
mod trace;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::intent::{Instruction, ParsedIntent};
use crate::plan::Plan;

pub use env::{
    widget_id, DeviceAction, Direction, EnvError, Environment, InvokedCall, Observation, TaskStatus, Widget,
};
pub use executors::{oracle_executor, vlm_executor, Executor, ExecutorError, OracleExecutor, VlmExecutor};
pub use trace::{read_trace, replay_trace, trace_records, trace_text, write_trace, ReplayMismatch, TraceRecord};

pub const DEFAULT_STEP_LIMIT: usize = 30;

/// The functions a task must perform, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub calls: Vec<InvokedCall>,
}

impl GoalSpec {
    pub fn from_intent(intent: &ParsedIntent) -> Self {
        Self {
            calls: intent
                .calls()
                .map(|(app, t)| InvokedCall {
                    app: app.to_string(),
                    function: t.function.clone(),
                    args: t.args.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub action: DeviceAction,
    /// Digest of the observation the action produced; `None` when the
    /// environment refused the action.
    pub digest: Option<String>,
}

/// Append-only record of executor decisions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct History(Vec<HistoryEntry>);

impl History {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.0
    }

    fn push(&mut self, entry: HistoryEntry) {
        self.0.push(entry);
    }

    /// `1. open_app camera` lines, for prompts.
    pub fn render(&self) -> String {
        self.0
            .iter()
            .map(|e| format!("{}. {}\n", e.step + 1, e.action))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    StepLimit,
    ExecutorDeclaredInfeasible,
    EnvironmentError(String),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Success => f.write_str("success"),
            Outcome::StepLimit => f.write_str("step_limit"),
            Outcome::ExecutorDeclaredInfeasible => f.write_str("executor_declared_infeasible"),
            Outcome::EnvironmentError(code) => write!(f, "environment_error({code})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Episode {
    pub instruction: String,
    pub plan: Plan,
    pub goal: GoalSpec,
    pub limit: usize,
    pub initial_digest: String,
    pub history: History,
    pub outcome: Outcome,
    pub invoked: Vec<InvokedCall>,
}

impl Episode {
    /// Device actions taken, not counting the final status.
    pub fn device_steps(&self) -> usize {
        self.history
            .entries()
            .iter()
            .filter(|e| !matches!(e.action, DeviceAction::Status { .. }))
            .count()
    }
}

/// The outcome a finished history implies.
fn settle(last: Option<&HistoryEntry>, env_error: Option<&EnvError>) -> Outcome {
    if let Some(e) = env_error {
        return Outcome::EnvironmentError(e.code().to_string());
    }
    match last.map(|e| &e.action) {
        Some(DeviceAction::Status {
            status: TaskStatus::Complete,
        }) => Outcome::Success,
        Some(DeviceAction::Status {
            status: TaskStatus::Infeasible,
        }) => Outcome::ExecutorDeclaredInfeasible,
        _ => Outcome::StepLimit,
    }
}

/// Runs one task. `env` should be freshly reset. History never grows past
/// `limit`, and every executor query adds exactly one entry.
pub fn run_episode(
    env: &mut Environment<'_>,
    executor: &mut dyn Executor,
    instruction: &Instruction,
    plan: &Plan,
    limit: usize,
) -> Episode {
    let mut obs = env.observe();
    let initial_digest = obs.digest();
    let mut history = History::default();
    let mut env_error = None;
    while history.len() < limit {
        // A failing executor is taken as declaring the task infeasible.
        let action = executor
            .next_action(instruction, &obs, plan, &history)
            .unwrap_or_else(|_| DeviceAction::infeasible());
        let step = history.len();
        match env.step(&action) {
            Ok(next) => {
                history.push(HistoryEntry {
                    step,
                    action: action.clone(),
                    digest: Some(next.digest()),
                });
                obs = next;
            }
            Err(e) => {
                history.push(HistoryEntry {
                    step,
                    action,
                    digest: None,
                });
                env_error = Some(e);
                break;
            }
        }
        if obs.terminal {
            break;
        }
    }
    let outcome = settle(history.entries().last(), env_error.as_ref());
    Episode {
        instruction: instruction.text().to_string(),
        plan: plan.clone(),
        goal: env.goal().clone(),
        limit,
        initial_digest,
        history,
        outcome,
        invoked: env.invoked().to_vec(),
    }
}

/// True when the episode succeeded and performed the goal's calls in order,
/// possibly with other calls in between.
pub fn check_goal(episode: &Episode, goal: &GoalSpec) -> bool {
    if episode.outcome != Outcome::Success {
        return false;
    }
    let mut wanted = goal.calls.iter().peekable();
    for call in &episode.invoked {
        if wanted.peek() == Some(&call) {
            wanted.next();
        }
    }
    wanted.peek().is_none()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::load_str;
    use crate::model::KnowledgeBase;
    use crate::plan::{render_fallback, render_template};
    use crate::solver::{Solver, Target};
    use std::collections::BTreeMap;
    use std::path::Path;

    fn camera() -> KnowledgeBase {
        load_str(Path::new("camera.efsm"), include_str!("../../fixtures/camera.efsm")).unwrap()
    }

    fn setup(targets: Vec<Target>) -> (KnowledgeBase, ParsedIntent, Plan) {
        let kb = camera();
        let intent = ParsedIntent::single("camera", targets);
        let path = Solver::default()
            .solve_all(&kb, &intent)
            .unwrap()
            .into_feasible()
            .unwrap();
        let plan = render_template(&path, &Instruction::new("task").unwrap());
        (kb, intent, plan)
    }

    fn call(function: &str, args: &[(&str, &str)]) -> InvokedCall {
        InvokedCall {
            app: "camera".into(),
            function: function.into(),
            args: args
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn take_photo_succeeds_in_two_device_steps() {
        let (kb, intent, plan) = setup(vec![Target::new("take_photo")]);
        let goal = GoalSpec::from_intent(&intent);
        let mut env = Environment::new(&kb, &goal);
        let ep = run_episode(
            &mut env,
            &mut oracle_executor(),
            &Instruction::new("t").unwrap(),
            &plan,
            30,
        );
        assert_eq!(ep.outcome, Outcome::Success);
        assert_eq!(ep.device_steps(), 2);
        let actions: Vec<String> = ep.history.entries().iter().map(|e| e.action.to_string()).collect();
        assert_eq!(actions, ["open_app camera", "click w2", "status complete"]);
        assert!(check_goal(&ep, &goal));
    }

    #[test]
    fn fallback_plan_is_declared_infeasible() {
        let kb = camera();
        let mut env = Environment::new(&kb, &GoalSpec::default());
        let plan = render_fallback();
        let ep = run_episode(
            &mut env,
            &mut oracle_executor(),
            &Instruction::new("t").unwrap(),
            &plan,
            30,
        );
        assert_eq!(ep.outcome, Outcome::ExecutorDeclaredInfeasible);
        assert_eq!(ep.history.len(), 1);
        assert!(!check_goal(&ep, &GoalSpec::default()));
    }

    #[test]
    fn step_limit_bounds_history() {
        let (kb, intent, plan) = setup(vec![Target::new("take_photo")]);
        let goal = GoalSpec::from_intent(&intent);
        for limit in [0, 1, 2] {
            let mut env = Environment::new(&kb, &goal);
            let ep = run_episode(
                &mut env,
                &mut oracle_executor(),
                &Instruction::new("t").unwrap(),
                &plan,
                limit,
            );
            assert_eq!(ep.outcome, Outcome::StepLimit);
            assert_eq!(ep.history.len(), limit);
            assert!(!check_goal(&ep, &goal));
        }
    }

    #[test]
    fn goal_check_is_ordered_subsequence_with_exact_args() {
        let (kb, intent, plan) = setup(vec![Target::new("record_video").arg("duration", "5s")]);
        let goal = GoalSpec::from_intent(&intent);
        let mut env = Environment::new(&kb, &goal);
        let ep = run_episode(
            &mut env,
            &mut oracle_executor(),
            &Instruction::new("t").unwrap(),
            &plan,
            30,
        );
        assert!(check_goal(&ep, &goal));
        let other = GoalSpec {
            calls: vec![call("record_video", &[("duration", "10s")])],
        };
        assert!(!check_goal(&ep, &other));
        let twice = GoalSpec {
            calls: vec![call("record_video", &[("duration", "5s")]); 2],
        };
        assert!(!check_goal(&ep, &twice));
        assert!(check_goal(&ep, &GoalSpec::default()));
    }

    #[test]
    fn refused_action_is_an_environment_error() {
        struct Clicker;
        impl Executor for Clicker {
            fn next_action(
                &mut self,
                _: &Instruction,
                _: &Observation,
                _: &Plan,
                _: &History,
            ) -> Result<DeviceAction, ExecutorError> {
                Ok(DeviceAction::click("w0"))
            }
        }
        let kb = camera();
        let mut env = Environment::new(&kb, &GoalSpec::default());
        let plan = render_fallback();
        let ep = run_episode(&mut env, &mut Clicker, &Instruction::new("t").unwrap(), &plan, 30);
        assert_eq!(ep.outcome, Outcome::EnvironmentError("NO_FOREGROUND_APP".into()));
        assert_eq!(ep.history.len(), 1);
        assert_eq!(ep.history.entries()[0].digest, None);
    }
}
