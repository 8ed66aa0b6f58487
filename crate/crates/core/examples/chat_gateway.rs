//! Talk to a live chat-completions endpoint and keep a transcript.
//!
//! SPLANNER_API_BASE=http://localhost:8000/v1 SPLANNER_MODEL=qwen \
//!     cargo run --example chat_gateway -- /tmp/session.jsonl

use std::path::PathBuf;
use std::sync::Arc;

use splanner::gateway::{ChatGateway, GatewayConfig, HttpGateway, Message, ReplayGateway, Transcript};

fn main() {
    let Some(cfg) = GatewayConfig::from_env() else {
        eprintln!("set SPLANNER_API_BASE (and optionally SPLANNER_MODEL, SPLANNER_API_KEY)");
        std::process::exit(2);
    };
    let path = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "session.jsonl".into()));
    let gw = HttpGateway::with_transcript(cfg, Arc::new(Transcript::create(&path).unwrap())).unwrap();

    let messages = [
        Message::system("Answer with one short sentence."),
        Message::user("What does a camera app's shutter button do?"),
    ];
    match gw.complete(&messages) {
        Ok(reply) => println!("{reply}"),
        Err(e) => println!("{} error: {e}", e.kind()),
    }
    for ex in gw.transcript().entries() {
        println!("attempt {} status {:?} {} ms", ex.attempt, ex.status, ex.latency_ms);
    }

    // The same request now replays offline.
    let replay = ReplayGateway::open(&path).unwrap();
    println!("replayed: {:?}", replay.complete(&messages));
}
