//! Load the camera model, then show what the checker says about a broken copy.
//!
//! cargo run --example validate_model

use std::path::Path;

use splanner::load_str;

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/camera.efsm");
    let text = std::fs::read_to_string(&path).expect("fixture");

    let kb = load_str(&path, &text).expect("camera model is valid");
    for m in kb.machines() {
        println!(
            "{}: {} states, {} vars, {} functions, {} transitions",
            m.app_id(),
            m.states().len(),
            m.vars().len(),
            m.functions().len(),
            m.transitions().len()
        );
    }

    let broken = text
        .replace("when video_mode == true", "when flash == true")
        .replace("t5: settings -> home", "t5: settings -> gallery");
    match load_str(Path::new("broken.efsm"), &broken) {
        Ok(_) => println!("unexpectedly valid"),
        Err(diags) => println!("\n{diags}"),
    }
}
