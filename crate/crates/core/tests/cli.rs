mod common;

use std::ffi::OsString;
use std::path::Path;

use common::{fixture, read_fixture};
use splanner::cli::{main_with, resolve_gateway_config, GatewayFlags, GatewayTable};

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run_env(args: &[&str], env: &dyn Fn(&str) -> Option<String>) -> Output {
    let mut argv: Vec<OsString> = vec!["splanner".into()];
    argv.extend(args.iter().map(OsString::from));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with(argv, env, &mut out, &mut err);
    let o = Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    };
    if code != 0 {
        assert!(o.stdout.is_empty(), "failure printed to stdout: {}", o.stdout);
    }
    o
}

fn run(args: &[&str]) -> Output {
    run_env(args, &|_| None)
}

fn f(name: &str) -> String {
    fixture(name).display().to_string()
}

#[test]
fn validate_fixtures() {
    let o = run(&["validate", &f("camera.efsm"), &f("contacts.efsm")]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.starts_with("ok: 2 apps"), "{}", o.stdout);
}

#[test]
fn validate_reports_injected_unknown_var() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.efsm");
    let text = read_fixture("camera.efsm").replace("when video_mode == true", "when flash == true");
    std::fs::write(&path, text).unwrap();
    let o = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("UNKNOWN_VAR"), "{}", o.stderr);
    assert!(o.stderr.contains("bad.efsm:29:18"), "{}", o.stderr);
}

#[test]
fn validate_missing_file_is_io_error() {
    let o = run(&["validate", "/nonexistent/model.efsm"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("/nonexistent/model.efsm"));
}

#[test]
fn solve_matches_goldens() {
    let cases = [
        (vec!["take_photo"], "golden/solve_take_photo.txt"),
        (vec!["record_video(duration=5s)"], "golden/solve_record_5s.txt"),
        (
            vec!["record_video(duration=5s)", "take_photo"],
            "golden/solve_record_then_photo.txt",
        ),
    ];
    for (targets, golden) in cases {
        let models = f("camera.efsm");
        let mut args = vec!["solve", "--models", &models, "--app", "camera"];
        for t in &targets {
            args.extend(["--target", t]);
        }
        let o = run(&args);
        assert_eq!(o.code, 0, "{}", o.stderr);
        assert_eq!(o.stdout, read_fixture(golden), "{golden}");
    }
}

#[test]
fn solve_edge_cases() {
    let models = f("camera.efsm");
    let o = run(&["solve", "--models", &models, "--app", "camera"]);
    assert_eq!(
        (o.code, o.stdout.as_str()),
        (0, "empty path (goal already satisfied)\n")
    );
    let o = run(&[
        "solve",
        "--models",
        &models,
        "--app",
        "camera",
        "--target",
        "unknown_fn",
    ]);
    assert_eq!(o.code, 1);
    let o = run(&[
        "solve",
        "--models",
        &models,
        "--app",
        "gallery",
        "--target",
        "take_photo",
    ]);
    assert_eq!(o.code, 1);
}

#[test]
fn plan_matches_goldens() {
    for (text, golden) in [
        ("Take a photo", "golden/plan_take_photo.txt"),
        ("Record a video of 5s", "golden/plan_record_5s.txt"),
        (
            "Record a video of 5s, then take a photo",
            "golden/plan_record_then_photo.txt",
        ),
    ] {
        let o = run(&[
            "plan",
            text,
            "--models",
            &f("camera.efsm"),
            "--lexicon",
            &f("lexicon.tsv"),
        ]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        assert_eq!(o.stdout, read_fixture(golden));
    }
}

#[test]
fn plan_failures_and_fallback() {
    let camera = f("camera.efsm");
    let lexicon = f("lexicon.tsv");
    let o = run(&["plan", "Sing a song", "--models", &camera, "--lexicon", &lexicon]);
    assert_eq!(o.code, 1);
    let o = run(&[
        "plan",
        "Take a photo",
        "--models",
        &camera,
        "--lexicon",
        "/nonexistent.tsv",
    ]);
    assert_eq!(o.code, 2);
    let o = run(&[
        "plan",
        "Take a photo",
        "--models",
        &camera,
        "--lexicon",
        &lexicon,
        "--polish",
    ]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("gateway"), "{}", o.stderr);

    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("door.efsm");
    std::fs::write(
        &model,
        "app \"door\" {\n vars { locked: bool = true }\n states { closed* }\n functions { open_door }\n transitions {\n  t0: closed -> closed on \"Tap open.\" when locked == false does open_door\n }\n}\n",
    )
    .unwrap();
    let lex = dir.path().join("door.tsv");
    std::fs::write(&lex, "open the door\tdoor.open_door\n").unwrap();
    let o = run(&[
        "plan",
        "Open the door",
        "--models",
        model.to_str().unwrap(),
        "--lexicon",
        lex.to_str().unwrap(),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(o.stdout, "1. No feasible execution path exists.\n");
}

#[test]
fn plan_with_replayed_model() {
    let o = run(&[
        "plan",
        "Record a video of 5s, then take a photo",
        "--models",
        &f("camera.efsm"),
        "--parser",
        "llm",
        "--replay",
        &f("transcripts/parse_ok.jsonl"),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(o.stdout, read_fixture("golden/plan_record_then_photo.txt"));

    let o = run(&[
        "plan",
        "Take a photo",
        "--models",
        &f("camera.efsm"),
        "--lexicon",
        &f("lexicon.tsv"),
        "--polish",
        "--replay",
        &f("transcripts/polish_ok.jsonl"),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o
        .stdout
        .ends_with("1. Launch the camera app.\n2. Press the round shutter button to take the photo.\n"));
}

#[test]
fn run_generated_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "run",
        &f("generated.toml"),
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "3",
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.ends_with("success_rate 100.0 (10/10)\n"), "{report}");
    assert_eq!(std::fs::read_dir(out.join("traces")).unwrap().count(), 10);
    assert_eq!(
        std::fs::read_to_string(out.join("timings.tsv"))
            .unwrap()
            .lines()
            .count(),
        10
    );
}

#[test]
fn run_listed_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", &f("run.toml"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(
        report.contains("photo outcome=success goal=pass plan_steps=2 actions=3\n"),
        "{report}"
    );
    assert!(report.ends_with("success_rate 100.0 (3/3)\n"), "{report}");
}

fn write_manifest(dir: &Path, body: &str) -> String {
    let path = dir.join("m.toml");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn run_manifest_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "/nonexistent/m.toml"]);
    assert_eq!(o.code, 2);

    let vlm = format!(
        "models = [{:?}]\nlexicon = {:?}\nexecutor = \"vlm\"\n[[tasks]]\nid = \"a\"\ninstruction = \"Take a photo\"\ngoal = [{{ app = \"camera\", function = \"take_photo\" }}]\n",
        f("camera.efsm"),
        f("lexicon.tsv")
    );
    let o = run(&["run", &write_manifest(dir.path(), &vlm)]);
    assert_eq!(o.code, 1);

    let o = run(&[
        "run",
        &write_manifest(dir.path(), "executor = \"oracle\"\nsurprise = 1\n"),
    ]);
    assert_eq!(o.code, 1);
}

#[test]
fn run_records_environment_errors_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "models = [{:?}]\nlexicon = {:?}\nexecutor = \"oracle\"\nout = \"o\"\n\
         [[tasks]]\nid = \"bad\"\ninstruction = \"Sing a song\"\ngoal = []\n\
         [[tasks]]\nid = \"good\"\ninstruction = \"Take a photo\"\ngoal = [{{ app = \"camera\", function = \"take_photo\" }}]\n",
        f("camera.efsm"),
        f("lexicon.tsv")
    );
    let o = run(&["run", &write_manifest(dir.path(), &body)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let report = std::fs::read_to_string(dir.path().join("o/report.txt")).unwrap();
    assert!(report.starts_with("bad outcome=parse_error goal=fail"), "{report}");
    assert!(report.ends_with("success_rate 50.0 (1/2)\n"), "{report}");
}

#[test]
fn gateway_settings_precedence() {
    let env = |k: &str| match k {
        "SPLANNER_API_BASE" => Some("http://env".to_string()),
        "SPLANNER_MODEL" => Some("env-model".to_string()),
        _ => None,
    };
    let table = GatewayTable {
        base_url: Some("http://manifest".into()),
        model: Some("manifest-model".into()),
        max_retries: Some(5),
        ..GatewayTable::default()
    };
    let flags = GatewayFlags {
        gateway_base: Some("http://flag".into()),
        ..GatewayFlags::default()
    };
    let cfg = resolve_gateway_config(&flags, &env, Some(&table)).unwrap();
    assert_eq!(
        (cfg.base_url.as_str(), cfg.model.as_str(), cfg.max_retries),
        ("http://flag", "env-model", 5)
    );
    let cfg = resolve_gateway_config(&GatewayFlags::default(), &|_| None, Some(&table)).unwrap();
    assert_eq!(
        (cfg.base_url.as_str(), cfg.model.as_str()),
        ("http://manifest", "manifest-model")
    );
    assert!(resolve_gateway_config(&GatewayFlags::default(), &|_| None, None).is_none());
}
