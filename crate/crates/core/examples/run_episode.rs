//! One closed-loop episode on the simulated device, and its trace.
//!
//! cargo run --example run_episode

use std::path::Path;

use splanner::harness::{
    check_goal, oracle_executor, replay_trace, run_episode, trace_records, trace_text, Environment, GoalSpec,
};
use splanner::plan::render_template;
use splanner::solver::Solver;
use splanner::{load_paths, Instruction, ParsedIntent, Target};

fn main() {
    let kb = load_paths(&[Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/camera.efsm")]).unwrap();
    let instruction = Instruction::new("Record a video of 5s").unwrap();
    let intent = ParsedIntent::single("camera", vec![Target::new("record_video").arg("duration", "5s")]);

    let path = Solver::default()
        .solve_all(&kb, &intent)
        .unwrap()
        .into_feasible()
        .unwrap();
    let plan = render_template(&path, &instruction);
    let goal = GoalSpec::from_intent(&intent);

    let mut env = Environment::new(&kb, &goal);
    println!("{}", env.observe().render());
    let episode = run_episode(&mut env, &mut oracle_executor(), &instruction, &plan, 30);

    print!("{}", episode.history.render());
    println!(
        "outcome: {}, goal met: {}",
        episode.outcome,
        check_goal(&episode, &goal)
    );
    println!("invoked: {:?}\n", episode.invoked);

    print!("{}", trace_text(&episode));
    println!("replayed: {:?}", replay_trace(&kb, &trace_records(&episode)));
}
