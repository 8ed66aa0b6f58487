//! Model-backed parsing, polishing and execution served from recorded
//! transcripts, so nothing touches the network.
//!
//! cargo run --example llm_replay

use std::path::Path;
use std::sync::Arc;

use splanner::gateway::{RecordingGateway, ReplayGateway, ScriptedGateway, Transcript};
use splanner::harness::{run_episode, vlm_executor, Environment, GoalSpec};
use splanner::intent::parse_intent_llm;
use splanner::plan::{polish_llm, render_template};
use splanner::solver::Solver;
use splanner::{build_catalog, load_paths, Instruction};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let kb = load_paths(&[dir.join("camera.efsm")]).unwrap();
    let catalog = build_catalog(&kb);
    let transcripts = dir.join("transcripts");

    let gw = ReplayGateway::open(&transcripts.join("parse_ok.jsonl")).unwrap();
    let instruction = Instruction::new("Record a video of 5s, then take a photo").unwrap();
    let intent = parse_intent_llm(&instruction, &catalog, &gw).unwrap();
    println!(
        "parsed: {:?}",
        intent.calls().map(|(a, t)| format!("{a}.{t}")).collect::<Vec<_>>()
    );

    let gw = ReplayGateway::open(&transcripts.join("parse_failure.jsonl")).unwrap();
    let err = parse_intent_llm(&Instruction::new("Take a photo").unwrap(), &catalog, &gw).unwrap_err();
    println!("second bad reply: {err}\n");

    let take = Instruction::new("Take a photo").unwrap();
    let intent = splanner::ParsedIntent::single("camera", vec![splanner::Target::new("take_photo")]);
    let path = Solver::default()
        .solve_all(&kb, &intent)
        .unwrap()
        .into_feasible()
        .unwrap();
    let draft = render_template(&path, &take);
    let gw = ReplayGateway::open(&transcripts.join("polish_ok.jsonl")).unwrap();
    println!("{}", polish_llm(&draft, &take, &gw).to_text());

    let gw = ReplayGateway::open(&transcripts.join("vlm_take_photo.jsonl")).unwrap();
    let goal = GoalSpec::from_intent(&intent);
    let mut env = Environment::new(&kb, &goal);
    let ep = run_episode(&mut env, &mut vlm_executor(&gw), &take, &draft, 10);
    print!("{}", ep.history.render());
    println!("outcome: {}\n", ep.outcome);

    // Recording: wrap any gateway and every exchange lands in a transcript.
    let transcript = Arc::new(Transcript::in_memory());
    let rec = RecordingGateway::new(
        ScriptedGateway::replies(["APP camera\nCALL take_photo"]),
        transcript.clone(),
    );
    parse_intent_llm(&take, &catalog, &rec).unwrap();
    let ex = &transcript.entries()[0];
    println!("recorded digest {} -> {:?}", &ex.digest[..16], ex.reply);
}
