//! SPlanner: plan smartphone tasks from app state machines.
//!
//! Apps are described as extended finite state machines in `.efsm` files
//! ([`format`]), validated into a [`model::KnowledgeBase`]. An instruction
//! is parsed into per-app target functions ([`intent`]), the [`solver`]
//! finds shortest execution paths, [`plan`] turns them into numbered
//! steps, and [`harness`] replays plans against a simulated device.

pub mod cli;
pub mod diagnostics;
pub mod format;
pub mod gateway;
pub mod harness;
pub mod intent;
pub mod model;
pub mod plan;
pub mod prompts;
pub mod solver;
pub mod synth;

pub use diagnostics::{Code, Diagnostic, Diagnostics, Severity, SourceSpan};
pub use format::{load_paths, load_str, parse_model, serialize_model};
pub use intent::{build_catalog, FunctionCatalog, Instruction, ParsedIntent};
pub use model::{validate_all, validate_efsm, Efsm, KnowledgeBase};
pub use solver::{solve, solve_all, ExecutionPath, Feasibility, GlobalPath, Target, TargetSequence};
