//! Instruction to numbered plan, including the fallback for unreachable goals.
//!
//! cargo run --example render_plan

use std::path::Path;

use splanner::intent::{Lexicon, LexiconParser};
use splanner::plan::plan_instruction;
use splanner::solver::Solver;
use splanner::{load_paths, load_str, Instruction};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let kb = load_paths(&[dir.join("camera.efsm"), dir.join("contacts.efsm")]).unwrap();
    let parser = LexiconParser {
        lexicon: Lexicon::load(&dir.join("lexicon.tsv")).unwrap(),
    };

    for text in ["Take a photo", "Call Bob Lee, then record a video of 5s"] {
        let out = plan_instruction(&kb, &parser, &Instruction::new(text).unwrap(), &Solver::default(), None).unwrap();
        println!("{}", out.plan.to_text());
    }

    // A door that starts locked and can never be unlocked.
    let door = load_str(
        Path::new("door.efsm"),
        r#"app "door" {
            vars { locked: bool = true }
            states { closed* }
            functions { open_door }
            transitions {
                t0: closed -> closed on "Tap open." when locked == false does open_door
            }
        }"#,
    )
    .unwrap();
    let parser = LexiconParser {
        lexicon: Lexicon::parse("open the door\tdoor.open_door\n").unwrap(),
    };
    let out = plan_instruction(
        &door,
        &parser,
        &Instruction::new("Open the door").unwrap(),
        &Solver::default(),
        None,
    )
    .unwrap();
    print!("{}", out.plan.to_text());
}
