//! Turning execution paths into numbered natural-language plans.
//!
//! The template renderer is the source of truth. An optional model pass may
//! reword the plan, but its reply is checked and discarded if it does not
//! look like a plan of about the same size.

use std::fmt;

use serde::Serialize;

use crate::gateway::ChatGateway;
use crate::intent::{build_catalog, Instruction, IntentError, IntentParser, ParsedIntent};
use crate::model::KnowledgeBase;
use crate::prompts;
use crate::solver::{Feasibility, GlobalPath, SolveError, Solver};

pub const FALLBACK_MESSAGE: &str = "No feasible execution path exists.";

/// Extra steps a polished plan may add beyond the draft.
pub const POLISH_SLACK: usize = 2;

pub fn app_switch_text(app_id: &str) -> String {
    format!("Open the {app_id} application.")
}

/// The app named by an app-switch step, if `text` is one.
pub fn parse_app_switch(text: &str) -> Option<&str> {
    let app = text.strip_prefix("Open the ")?.strip_suffix(" application.")?;
    (!app.is_empty() && !app.contains(char::is_whitespace)).then_some(app)
}

/// Where a plan step came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Path { segment: usize, step: usize },
    AppSwitch { segment: usize },
    Fallback,
    Polished,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanStep {
    pub text: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoteCode {
    PolishRejected,
    PolishSkipped,
}

impl NoteCode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoteCode::PolishRejected => "POLISH_REJECTED",
            NoteCode::PolishSkipped => "POLISH_SKIPPED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanNote {
    pub code: NoteCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Plan {
    pub preamble: Option<String>,
    pub steps: Vec<PlanStep>,
    pub notes: Vec<PlanNote>,
}

impl Plan {
    pub fn is_fallback(&self) -> bool {
        matches!(self.steps.as_slice(), [s] if s.provenance == Provenance::Fallback)
    }

    pub fn is_polished(&self) -> bool {
        self.steps.iter().any(|s| s.provenance == Provenance::Polished)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.text.as_str()).collect()
    }

    pub fn has_note(&self, code: NoteCode) -> bool {
        self.notes.iter().any(|n| n.code == code)
    }

    /// `1. step` lines, one per step.
    pub fn numbered(&self) -> String {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {}\n", i + 1, s.text))
            .collect()
    }

    /// Preamble line, blank line, then the numbered steps.
    pub fn to_text(&self) -> String {
        match &self.preamble {
            Some(p) => format!("{p}\n\n{}", self.numbered()),
            None => self.numbered(),
        }
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn preamble(instruction: &Instruction) -> String {
    let one_line: Vec<&str> = instruction.text().split_whitespace().collect();
    format!("Task: {}", one_line.join(" "))
}

/// One step per path step, with an app-switch step before each segment.
pub fn render_template(path: &GlobalPath, instruction: &Instruction) -> Plan {
    let mut steps = Vec::new();
    let non_empty = path.step_count() > 0;
    for (si, segment) in path.segments.iter().enumerate() {
        if si > 0 || non_empty {
            steps.push(PlanStep {
                text: app_switch_text(&segment.app_id),
                provenance: Provenance::AppSwitch { segment: si },
            });
        }
        for (pi, step) in segment.steps.iter().enumerate() {
            steps.push(PlanStep {
                text: step.event.clone(),
                provenance: Provenance::Path { segment: si, step: pi },
            });
        }
    }
    Plan {
        preamble: Some(preamble(instruction)),
        steps,
        notes: Vec::new(),
    }
}

pub fn render_fallback() -> Plan {
    Plan {
        preamble: None,
        steps: vec![PlanStep {
            text: FALLBACK_MESSAGE.to_string(),
            provenance: Provenance::Fallback,
        }],
        notes: Vec::new(),
    }
}

/// Parses a numbered reply and checks it against a draft of `draft_len`
/// steps.
pub fn check_polished(reply: &str, draft_len: usize) -> Result<Vec<String>, String> {
    let mut steps = Vec::new();
    for line in reply.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (num, text) = line
            .split_once('.')
            .ok_or_else(|| format!("line `{line}` is not a numbered step"))?;
        let n: usize = num
            .trim()
            .parse()
            .map_err(|_| format!("line `{line}` is not a numbered step"))?;
        if n != steps.len() + 1 {
            return Err(format!("expected step {}, found step {n}", steps.len() + 1));
        }
        let text = text.trim();
        if text.is_empty() {
            return Err(format!("step {n} is empty"));
        }
        if text.contains(['{', '}']) {
            return Err(format!("step {n} contains placeholder braces"));
        }
        steps.push(text.to_string());
    }
    let max = draft_len + POLISH_SLACK;
    if steps.len() < draft_len || steps.len() > max {
        return Err(format!(
            "reply has {} steps, expected between {draft_len} and {max}",
            steps.len()
        ));
    }
    Ok(steps)
}

/// Asks the model to reword `draft`. Never fails: a rejected reply or a
/// gateway error leaves the draft as it was, with a note saying why.
pub fn polish_llm(draft: &Plan, instruction: &Instruction, gateway: &dyn ChatGateway) -> Plan {
    if draft.is_fallback() || draft.is_empty() {
        return draft.clone();
    }
    let messages = prompts::polish_request(instruction.text(), &draft.numbered());
    let mut out = draft.clone();
    match gateway.complete(&messages) {
        Err(e) => out.notes.push(PlanNote {
            code: NoteCode::PolishSkipped,
            message: e.to_string(),
        }),
        Ok(reply) => match check_polished(&reply, draft.len()) {
            Ok(steps) => {
                out.steps = steps
                    .into_iter()
                    .map(|text| PlanStep {
                        text,
                        provenance: Provenance::Polished,
                    })
                    .collect();
            }
            Err(why) => out.notes.push(PlanNote {
                code: NoteCode::PolishRejected,
                message: why,
            }),
        },
    }
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Intent(#[from] IntentError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub intent: ParsedIntent,
    pub path: Feasibility<GlobalPath>,
    pub plan: Plan,
}

/// Parse, solve, render, and optionally polish. Infeasible intents give the
/// fallback plan, which is never polished.
pub fn plan_instruction(
    kb: &KnowledgeBase,
    parser: &dyn IntentParser,
    instruction: &Instruction,
    solver: &Solver,
    polisher: Option<&dyn ChatGateway>,
) -> Result<PlanOutcome, PipelineError> {
    let catalog = build_catalog(kb);
    let intent = parser.parse(instruction, &catalog)?;
    let path = solver.solve_all(kb, &intent)?;
    let plan = match &path {
        Feasibility::Infeasible => render_fallback(),
        Feasibility::Feasible(p) => {
            let draft = render_template(p, instruction);
            match polisher {
                Some(gw) => polish_llm(&draft, instruction, gw),
                None => draft,
            }
        }
    };
    Ok(PlanOutcome { intent, path, plan })
}
