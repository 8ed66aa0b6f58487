//! Closed-loop success over generated worlds: lexicon parse, solve, render,
//! then an oracle-driven episode per task.
//!
//! cargo run --release --example benchmark -- [seed] [tasks]

use std::time::Instant;

use splanner::harness::{check_goal, oracle_executor, run_episode, Environment, GoalSpec, Outcome};
use splanner::intent::{parse_intent_lexicon, Lexicon};
use splanner::plan::{render_fallback, render_template};
use splanner::solver::Solver;
use splanner::synth::{generate_suite, TaskMix};
use splanner::{build_catalog, Feasibility, Instruction};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let tasks: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);

    let started = Instant::now();
    let suite = generate_suite(seed, 2, tasks, TaskMix::Any);
    let catalog = build_catalog(&suite.kb);
    let lexicon = Lexicon::parse(&suite.lexicon).unwrap();
    let solver = Solver::default();

    let (mut feasible, mut met, mut declined, mut steps) = (0, 0, 0, 0);
    for task in &suite.tasks {
        let instruction = Instruction::new(task.instruction.clone()).unwrap();
        let intent = parse_intent_lexicon(&instruction, &catalog, &lexicon).unwrap();
        let plan = match solver.solve_all(&suite.kb, &intent).unwrap() {
            Feasibility::Feasible(p) => {
                feasible += 1;
                render_template(&p, &instruction)
            }
            Feasibility::Infeasible => render_fallback(),
        };
        let goal = GoalSpec::from_intent(&intent);
        let mut env = Environment::new(&suite.kb, &goal);
        let ep = run_episode(&mut env, &mut oracle_executor(), &instruction, &plan, 30);
        met += check_goal(&ep, &goal) as usize;
        declined += (ep.outcome == Outcome::ExecutorDeclaredInfeasible) as usize;
        steps += ep.device_steps();
    }

    let n = suite.tasks.len();
    println!(
        "apps {}  tasks {n}  feasible {feasible}  infeasible {}",
        suite.kb.len(),
        n - feasible
    );
    println!(
        "goal met {met}/{feasible} feasible, declared infeasible {declined}/{}",
        n - feasible
    );
    println!("device steps {steps}, {:.1} per task", steps as f64 / n as f64);
    println!("elapsed {:.2?}", started.elapsed());
}
