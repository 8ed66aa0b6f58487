//! JSON-lines episode traces: a reset record, one record per executor
//! decision, and a final outcome record.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::KnowledgeBase;

use super::{settle, DeviceAction, Environment, Episode, GoalSpec, HistoryEntry, InvokedCall, Outcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceRecord {
    Reset {
        instruction: String,
        goal: GoalSpec,
        digest: String,
    },
    Action {
        step: usize,
        action: DeviceAction,
        digest: Option<String>,
    },
    Outcome {
        outcome: Outcome,
        invoked: Vec<InvokedCall>,
    },
}

pub fn trace_records(episode: &Episode) -> Vec<TraceRecord> {
    let mut out = vec![TraceRecord::Reset {
        instruction: episode.instruction.clone(),
        goal: episode.goal.clone(),
        digest: episode.initial_digest.clone(),
    }];
    out.extend(episode.history.entries().iter().map(|e| TraceRecord::Action {
        step: e.step,
        action: e.action.clone(),
        digest: e.digest.clone(),
    }));
    out.push(TraceRecord::Outcome {
        outcome: episode.outcome.clone(),
        invoked: episode.invoked.clone(),
    });
    out
}

pub fn trace_text(episode: &Episode) -> String {
    trace_records(episode)
        .iter()
        .map(|r| serde_json::to_string(r).expect("trace record serializes") + "\n")
        .collect()
}

pub fn write_trace(path: &Path, episode: &Episode) -> io::Result<()> {
    fs::write(path, trace_text(episode))
}

pub fn read_trace(path: &Path) -> io::Result<Vec<TraceRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("trace record {record}: {message}")]
pub struct ReplayMismatch {
    pub record: usize,
    pub message: String,
}

/// Re-applies a trace's actions to a fresh environment and checks every
/// digest, the invoked functions, and the outcome.
pub fn replay_trace(kb: &KnowledgeBase, records: &[TraceRecord]) -> Result<Outcome, ReplayMismatch> {
    let fail = |record: usize, message: String| ReplayMismatch { record, message };
    let Some(TraceRecord::Reset { goal, digest, .. }) = records.first() else {
        return Err(fail(0, "trace must start with a reset record".into()));
    };
    let mut env = Environment::new(kb, goal);
    if env.observe().digest() != *digest {
        return Err(fail(0, "initial observation differs".into()));
    }
    let mut last: Option<HistoryEntry> = None;
    let mut env_error = None;
    for (i, r) in records.iter().enumerate().skip(1) {
        match r {
            TraceRecord::Action { step, action, digest } => {
                if env_error.is_some() {
                    return Err(fail(i, "action after an environment error".into()));
                }
                let got = match env.step(action) {
                    Ok(obs) => Some(obs.digest()),
                    Err(e) => {
                        env_error = Some(e);
                        None
                    }
                };
                if got != *digest {
                    return Err(fail(i, format!("observation after `{action}` differs")));
                }
                last = Some(HistoryEntry {
                    step: *step,
                    action: action.clone(),
                    digest: got,
                });
            }
            TraceRecord::Outcome { outcome, invoked } => {
                if i + 1 != records.len() {
                    return Err(fail(i, "outcome record must be last".into()));
                }
                if env.invoked() != invoked.as_slice() {
                    return Err(fail(i, "invoked functions differ".into()));
                }
                let replayed = settle(last.as_ref(), env_error.as_ref());
                if replayed != *outcome {
                    return Err(fail(i, format!("outcome {outcome} but replay gives {replayed}")));
                }
                return Ok(outcome.clone());
            }
            TraceRecord::Reset { .. } => return Err(fail(i, "unexpected second reset".into())),
        }
    }
    Err(fail(records.len(), "trace has no outcome record".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::load_str;
    use crate::harness::{oracle_executor, run_episode};
    use crate::intent::{Instruction, ParsedIntent};
    use crate::plan::render_template;
    use crate::solver::{Solver, Target};
    use std::path::Path;

    #[test]
    fn trace_round_trip_and_replay() {
        let kb = load_str(Path::new("c.efsm"), include_str!("../../fixtures/camera.efsm")).unwrap();
        let intent = ParsedIntent::single("camera", vec![Target::new("record_video").arg("duration", "5s")]);
        let path = Solver::default()
            .solve_all(&kb, &intent)
            .unwrap()
            .into_feasible()
            .unwrap();
        let instr = Instruction::new("Record a 5s video").unwrap();
        let plan = render_template(&path, &instr);
        let goal = GoalSpec::from_intent(&intent);
        let mut env = Environment::new(&kb, &goal);
        let ep = run_episode(&mut env, &mut oracle_executor(), &instr, &plan, 30);

        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("trace.jsonl");
        write_trace(&file, &ep).unwrap();
        let records = read_trace(&file).unwrap();
        assert_eq!(records, trace_records(&ep));
        assert_eq!(records.len(), ep.history.len() + 2);
        assert_eq!(replay_trace(&kb, &records), Ok(Outcome::Success));

        let mut tampered = records.clone();
        if let TraceRecord::Action { action, .. } = &mut tampered[2] {
            *action = DeviceAction::click("w2");
        }
        assert_eq!(replay_trace(&kb, &tampered).unwrap_err().record, 2);
    }
}
