//! Rule-based intent parsing with a pattern lexicon.
//!
//! cargo run --example lexicon_intent

use std::path::Path;

use splanner::intent::{parse_intent_lexicon, Lexicon};
use splanner::{build_catalog, load_paths, Instruction};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let kb = load_paths(&[dir.join("camera.efsm"), dir.join("contacts.efsm")]).unwrap();
    let catalog = build_catalog(&kb);
    let lexicon = Lexicon::load(&dir.join("lexicon.tsv")).unwrap();
    lexicon.check(&catalog).expect("lexicon fits the models");

    for text in [
        "Take a photo",
        "Record a video of 10 seconds, then take a picture",
        "Call Bob Lee and then take a photo",
        "Add Ann to my contacts",
        "Order a pizza",
    ] {
        let instruction = Instruction::new(text).unwrap();
        match parse_intent_lexicon(&instruction, &catalog, &lexicon) {
            Ok(intent) => {
                let calls: Vec<String> = intent.calls().map(|(app, t)| format!("{app}.{t}")).collect();
                println!("{text:50} -> {}", calls.join(" ; "));
            }
            Err(e) => println!("{text:50} -> error: {e}"),
        }
    }

    // Two patterns covering the same words for different functions.
    let twins = Lexicon::parse("snap now\tcamera.take_photo\nsnap now\tcontacts.call\n").unwrap();
    let err = parse_intent_lexicon(&Instruction::new("Snap now").unwrap(), &catalog, &twins).unwrap_err();
    println!("\nwith overlapping patterns: {err}");
}
