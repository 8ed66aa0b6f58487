//! Model-backed scenarios. Each runs against any gateway and checks its own
//! result, so the same code records transcripts from a scripted model and
//! later replays them.

use std::collections::BTreeMap;
use std::path::PathBuf;

use splanner::gateway::ChatGateway;
use splanner::harness::{check_goal, run_episode, vlm_executor, Environment, GoalSpec, InvokedCall, Outcome};
use splanner::intent::{parse_intent_llm, IntentError};
use splanner::plan::{polish_llm, render_template, NoteCode, Plan, Provenance};
use splanner::solver::Solver;
use splanner::{build_catalog, load_str, Instruction, KnowledgeBase, ParsedIntent, Target};

pub struct LlmCase {
    pub name: &'static str,
    /// Replies the scripted model gives, in order.
    pub script: &'static [&'static str],
    pub run: fn(&dyn ChatGateway) -> Result<(), String>,
}

pub fn transcript_path(name: &str) -> PathBuf {
    super::fixture("transcripts").join(format!("{name}.jsonl"))
}

pub fn camera() -> KnowledgeBase {
    load_str(&super::fixture("camera.efsm"), &super::read_fixture("camera.efsm")).expect("camera fixture")
}

fn instr(text: &str) -> Instruction {
    Instruction::new(text).expect("non-empty")
}

fn draft(kb: &KnowledgeBase, targets: Vec<Target>, text: &str) -> Plan {
    let intent = ParsedIntent::single("camera", targets);
    let path = Solver::default()
        .solve_all(kb, &intent)
        .expect("solvable")
        .into_feasible()
        .expect("feasible");
    render_template(&path, &instr(text))
}

fn ensure(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn parse_ok(gw: &dyn ChatGateway) -> Result<(), String> {
    let kb = camera();
    let got = parse_intent_llm(
        &instr("Record a video of 5s, then take a photo"),
        &build_catalog(&kb),
        gw,
    )
    .map_err(|e| e.to_string())?;
    let want = ParsedIntent::single(
        "camera",
        vec![
            Target::new("record_video").arg("duration", "5s"),
            Target::new("take_photo"),
        ],
    );
    ensure(got == want, format!("parsed {got:?}"))
}

fn parse_repair(gw: &dyn ChatGateway) -> Result<(), String> {
    let kb = camera();
    let got = parse_intent_llm(&instr("Take a photo"), &build_catalog(&kb), gw).map_err(|e| e.to_string())?;
    ensure(
        got == ParsedIntent::single("camera", vec![Target::new("take_photo")]),
        format!("parsed {got:?}"),
    )
}

fn parse_failure(gw: &dyn ChatGateway) -> Result<(), String> {
    let kb = camera();
    match parse_intent_llm(&instr("Take a photo"), &build_catalog(&kb), gw) {
        Err(IntentError::ParseFailure { replies, issues }) => ensure(
            replies.len() == 2 && !issues.is_empty(),
            format!("{replies:?} {issues:?}"),
        ),
        other => Err(format!("expected a parse failure, got {other:?}")),
    }
}

fn polish_ok(gw: &dyn ChatGateway) -> Result<(), String> {
    let kb = camera();
    let d = draft(&kb, vec![Target::new("take_photo")], "Take a photo");
    let p = polish_llm(&d, &instr("Take a photo"), gw);
    ensure(p.is_polished() && p.notes.is_empty(), format!("{p:?}"))?;
    ensure(
        p.texts()
            == [
                "Launch the camera app.",
                "Press the round shutter button to take the photo.",
            ],
        format!("{:?}", p.texts()),
    )?;
    ensure(
        p.steps.iter().all(|s| s.provenance == Provenance::Polished),
        "provenance",
    )
}

fn polish_rejected(gw: &dyn ChatGateway) -> Result<(), String> {
    let kb = camera();
    let d = draft(
        &kb,
        vec![Target::new("record_video").arg("duration", "5s")],
        "Record a video of 5s",
    );
    let p = polish_llm(&d, &instr("Record a video of 5s"), gw);
    ensure(p.has_note(NoteCode::PolishRejected), format!("{:?}", p.notes))?;
    ensure(p.steps == d.steps, "a rejected polish must keep the draft")
}

fn photo_goal() -> GoalSpec {
    GoalSpec {
        calls: vec![InvokedCall {
            app: "camera".into(),
            function: "take_photo".into(),
            args: BTreeMap::new(),
        }],
    }
}

fn vlm_take_photo(gw: &dyn ChatGateway) -> Result<(), String> {
    let kb = camera();
    let plan = draft(&kb, vec![Target::new("take_photo")], "Take a photo");
    let goal = photo_goal();
    let mut env = Environment::new(&kb, &goal);
    let ep = run_episode(&mut env, &mut vlm_executor(gw), &instr("Take a photo"), &plan, 10);
    ensure(ep.outcome == Outcome::Success, format!("outcome {}", ep.outcome))?;
    ensure(ep.device_steps() == 2, format!("{} device steps", ep.device_steps()))?;
    ensure(check_goal(&ep, &goal), "goal not met")
}

fn vlm_repair_infeasible(gw: &dyn ChatGateway) -> Result<(), String> {
    let kb = camera();
    let plan = draft(&kb, vec![Target::new("take_photo")], "Take a photo");
    let goal = photo_goal();
    let mut env = Environment::new(&kb, &goal);
    let ep = run_episode(&mut env, &mut vlm_executor(gw), &instr("Take a photo"), &plan, 10);
    ensure(
        ep.outcome == Outcome::ExecutorDeclaredInfeasible,
        format!("outcome {}", ep.outcome),
    )?;
    ensure(ep.history.len() == 1, format!("history {}", ep.history.len()))?;
    ensure(!check_goal(&ep, &goal), "spurious success")
}

fn vlm_repair_ok(gw: &dyn ChatGateway) -> Result<(), String> {
    let kb = camera();
    let plan = draft(&kb, vec![Target::new("take_photo")], "Take a photo");
    let goal = photo_goal();
    let mut env = Environment::new(&kb, &goal);
    let ep = run_episode(&mut env, &mut vlm_executor(gw), &instr("Take a photo"), &plan, 10);
    ensure(ep.outcome == Outcome::Success, format!("outcome {}", ep.outcome))?;
    ensure(ep.history.len() == 3, format!("history {}", ep.history.len()))?;
    ensure(check_goal(&ep, &goal), "goal not met")
}

pub fn cases() -> Vec<LlmCase> {
    vec![
        LlmCase {
            name: "parse_ok",
            script: &["APP camera\nCALL record_video duration=\"5s\"\nCALL take_photo"],
            run: parse_ok,
        },
        LlmCase {
            name: "parse_repair",
            script: &["APP camera\nCALL take_picture", "```\nAPP camera\nCALL take_photo\n```"],
            run: parse_repair,
        },
        LlmCase {
            name: "parse_failure",
            script: &["Sure! I will take a photo.", "APP gallery\nCALL take_photo"],
            run: parse_failure,
        },
        LlmCase {
            name: "polish_ok",
            script: &["1. Launch the camera app.\n2. Press the round shutter button to take the photo."],
            run: polish_ok,
        },
        LlmCase {
            name: "polish_rejected",
            script: &["1. Open the camera.\n3. Record for {duration}."],
            run: polish_rejected,
        },
        LlmCase {
            name: "vlm_take_photo",
            script: &[
                "The home screen is showing.\nACTION open_app camera",
                "ACTION click w2",
                "The photo was taken.\nACTION status complete",
            ],
            run: vlm_take_photo,
        },
        LlmCase {
            name: "vlm_repair_infeasible",
            script: &["I would tap the shutter.", "ACTION click w99"],
            run: vlm_repair_infeasible,
        },
        LlmCase {
            name: "vlm_repair_ok",
            script: &[
                "ACTION open_app gallery",
                "ACTION open_app camera",
                "ACTION click w2",
                "ACTION status complete",
            ],
            run: vlm_repair_ok,
        },
    ]
}
