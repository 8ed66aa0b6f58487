//! Shortest execution paths on the camera model.
//!
//! cargo run --example solve_paths

use std::path::Path;

use splanner::solver::path_listing;
use splanner::{load_paths, solve, Target, TargetSequence};

fn main() {
    let kb = load_paths(&[Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/camera.efsm")]).unwrap();
    let camera = kb.get("camera").unwrap();

    let cases = [
        vec![Target::new("take_photo")],
        vec![Target::new("record_video").arg("duration", "5s")],
        vec![
            Target::new("record_video").arg("duration", "5s"),
            Target::new("take_photo"),
        ],
        vec![],
    ];
    for targets in cases {
        let names: Vec<String> = targets.iter().map(ToString::to_string).collect();
        println!("targets: [{}]", names.join(", "));
        let result = solve(camera, &TargetSequence::new(targets)).unwrap();
        println!("{}", path_listing(&result));
    }
}
