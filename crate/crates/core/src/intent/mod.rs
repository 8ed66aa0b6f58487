//! Instruction parsing: from a user instruction to the apps involved and
//! the ordered functions each must perform.
//!
//! Two producers exist, a deterministic [`lexicon`] matcher and a
//! model-backed parser in [`llm`]. Whatever they return is checked by
//! [`validate_intent`] against the function catalog before anyone uses it.

pub mod lexicon;
pub mod llm;

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::diagnostics::{Code, Diagnostic};
use crate::gateway::GatewayError;
use crate::model::KnowledgeBase;
use crate::solver::{Target, TargetSequence};

pub use lexicon::{parse_intent_lexicon, Lexicon, LexiconError, LexiconParser};
pub use llm::{parse_intent_llm, LlmParser};

/// A non-blank natural-language instruction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Instruction(String);

impl Instruction {
    pub fn new(text: impl Into<String>) -> Result<Self, IntentError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(IntentError::EmptyInstruction);
        }
        Ok(Self(text))
    }

    pub fn text(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntentEntry {
    pub app_id: String,
    pub targets: TargetSequence,
}

/// Target apps in order, each with its ordered target functions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParsedIntent {
    pub entries: Vec<IntentEntry>,
}

impl ParsedIntent {
    /// Groups `(app, target)` calls into one entry per app. Apps are ordered
    /// by their first call; each app keeps its calls in order.
    pub fn from_calls(calls: impl IntoIterator<Item = (String, Target)>) -> Self {
        let mut entries: Vec<IntentEntry> = Vec::new();
        for (app, target) in calls {
            match entries.iter_mut().find(|e| e.app_id == app) {
                Some(e) => e.targets.0.push(target),
                None => entries.push(IntentEntry {
                    app_id: app,
                    targets: TargetSequence::new(vec![target]),
                }),
            }
        }
        Self { entries }
    }

    pub fn single(app: impl Into<String>, targets: Vec<Target>) -> Self {
        Self {
            entries: vec![IntentEntry {
                app_id: app.into(),
                targets: TargetSequence::new(targets),
            }],
        }
    }

    /// Every `(app, target)` pair in order.
    pub fn calls(&self) -> impl Iterator<Item = (&str, &Target)> {
        self.entries
            .iter()
            .flat_map(|e| e.targets.iter().map(move |t| (e.app_id.as_str(), t)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CatalogFunction {
    pub name: String,
    pub params: Vec<String>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CatalogApp {
    pub app_id: String,
    pub functions: Vec<CatalogFunction>,
}

/// Read-only snapshot of every app's primary functions, in declaration
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FunctionCatalog {
    pub apps: Vec<CatalogApp>,
    pub warnings: Vec<Diagnostic>,
}

impl FunctionCatalog {
    pub fn app(&self, app_id: &str) -> Option<&CatalogApp> {
        self.apps.iter().find(|a| a.app_id == app_id)
    }

    pub fn function(&self, app_id: &str, name: &str) -> Option<&CatalogFunction> {
        self.app(app_id)?.functions.iter().find(|f| f.name == name)
    }

    /// Plain-text listing used inside prompts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for app in &self.apps {
            out.push_str(&format!("APP {}\n", app.app_id));
            for f in &app.functions {
                let params = f.params.join(", ");
                out.push_str(&format!("  {}({params})", f.name));
                if !f.description.is_empty() {
                    out.push_str(&format!(" - {}", f.description));
                }
                out.push('\n');
            }
        }
        out
    }
}

pub fn build_catalog(kb: &KnowledgeBase) -> FunctionCatalog {
    let mut warnings = Vec::new();
    let apps = kb
        .machines()
        .map(|m| {
            if m.functions().is_empty() {
                warnings.push(Diagnostic::new(
                    Code::NoFunctions,
                    format!("app {}", m.app_id()),
                    "application declares no primary functions",
                ));
            }
            CatalogApp {
                app_id: m.app_id().to_string(),
                functions: m
                    .functions()
                    .iter()
                    .map(|f| CatalogFunction {
                        name: f.name().to_string(),
                        params: f.params().to_vec(),
                        description: f.description().to_string(),
                    })
                    .collect(),
            }
        })
        .collect();
    FunctionCatalog { apps, warnings }
}

/// One reason a parsed intent does not fit the catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum IntentIssue {
    NoEntries,
    EmptyEntry(String),
    UnknownApp(String),
    DuplicateApp(String),
    UnknownFunction {
        app: String,
        function: String,
    },
    BadArguments {
        app: String,
        function: String,
        expected: Vec<String>,
        given: Vec<String>,
    },
    Malformed {
        line: usize,
        text: String,
        reason: String,
    },
}

impl fmt::Display for IntentIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntentIssue::NoEntries => write!(f, "no application was named"),
            IntentIssue::EmptyEntry(app) => write!(f, "application `{app}` has no CALL lines"),
            IntentIssue::UnknownApp(app) => write!(f, "unknown application `{app}`"),
            IntentIssue::DuplicateApp(app) => {
                write!(f, "application `{app}` appears in more than one entry")
            }
            IntentIssue::UnknownFunction { app, function } => {
                write!(f, "application `{app}` has no function `{function}`")
            }
            IntentIssue::BadArguments {
                app,
                function,
                expected,
                given,
            } => write!(
                f,
                "`{app}.{function}` takes arguments ({}) but got ({})",
                expected.join(", "),
                given.join(", ")
            ),
            IntentIssue::Malformed { line, text, reason } => {
                write!(f, "line {line} `{text}`: {reason}")
            }
        }
    }
}

/// Checks that every app exists and appears once, every function exists in
/// its app, and every call binds exactly that function's parameters.
pub fn validate_intent(intent: &ParsedIntent, catalog: &FunctionCatalog) -> Result<(), Vec<IntentIssue>> {
    let mut issues = Vec::new();
    if intent.entries.is_empty() {
        issues.push(IntentIssue::NoEntries);
    }
    let mut seen = BTreeSet::new();
    for entry in &intent.entries {
        if !seen.insert(entry.app_id.as_str()) {
            issues.push(IntentIssue::DuplicateApp(entry.app_id.clone()));
        }
        let Some(app) = catalog.app(&entry.app_id) else {
            issues.push(IntentIssue::UnknownApp(entry.app_id.clone()));
            continue;
        };
        if entry.targets.is_empty() {
            issues.push(IntentIssue::EmptyEntry(entry.app_id.clone()));
        }
        for t in entry.targets.iter() {
            let Some(f) = app.functions.iter().find(|f| f.name == t.function) else {
                issues.push(IntentIssue::UnknownFunction {
                    app: entry.app_id.clone(),
                    function: t.function.clone(),
                });
                continue;
            };
            let expected: BTreeSet<&String> = f.params.iter().collect();
            let given: BTreeSet<&String> = t.args.keys().collect();
            if expected != given || f.params.len() != expected.len() {
                issues.push(IntentIssue::BadArguments {
                    app: entry.app_id.clone(),
                    function: t.function.clone(),
                    expected: f.params.clone(),
                    given: t.args.keys().cloned().collect(),
                });
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntentError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("no lexicon pattern matches the instruction")]
    NoMatch,
    #[error("AMBIGUOUS_MATCH: at word {position}, patterns {} match equally well", candidates.join(" / "))]
    AmbiguousMatch { position: usize, candidates: Vec<String> },
    #[error("parsed intent does not fit the catalog: {}", join_issues(.0))]
    Invalid(Vec<IntentIssue>),
    #[error("model reply could not be parsed after one repair round: {}", join_issues(issues))]
    ParseFailure {
        replies: Vec<String>,
        issues: Vec<IntentIssue>,
    },
    #[error("gateway: {0}")]
    Gateway(#[from] GatewayError),
}

fn join_issues(issues: &[IntentIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A producer of parsed intents.
pub trait IntentParser {
    fn parse(&self, instruction: &Instruction, catalog: &FunctionCatalog) -> Result<ParsedIntent, IntentError>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::load_str;
    use std::path::Path;

    fn kb(src: &str) -> KnowledgeBase {
        load_str(Path::new("t.efsm"), src).unwrap()
    }

    const CAMERA: &str = include_str!("../../fixtures/camera.efsm");
    const CONTACTS: &str = include_str!("../../fixtures/contacts.efsm");

    #[test]
    fn catalog_follows_declaration_order() {
        let c = build_catalog(&kb(CAMERA));
        assert_eq!(c.apps.len(), 1);
        let names: Vec<&str> = c.apps[0].functions.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["take_photo", "record_video"]);
        assert!(c.warnings.is_empty());

        let two = kb(&format!("{CAMERA}\n{CONTACTS}"));
        let c = build_catalog(&two);
        let ids: Vec<&str> = c.apps.iter().map(|a| a.app_id.as_str()).collect();
        assert_eq!(ids, ["camera", "contacts"]);
        assert_eq!(c, build_catalog(&two));
    }

    #[test]
    fn zero_function_app_warns() {
        let src = "app \"clock\" { states { face* } transitions { } }";
        let c = build_catalog(&kb(src));
        assert_eq!(c.apps[0].functions.len(), 0);
        assert_eq!(c.warnings[0].code, Code::NoFunctions);
    }

    #[test]
    fn validation_reports_each_issue() {
        let c = build_catalog(&kb(CAMERA));
        let intent = ParsedIntent {
            entries: vec![
                IntentEntry {
                    app_id: "camera".into(),
                    targets: TargetSequence::new(vec![Target::new("zoom"), Target::new("record_video")]),
                },
                IntentEntry {
                    app_id: "gallery".into(),
                    targets: TargetSequence::default(),
                },
            ],
        };
        let issues = validate_intent(&intent, &c).unwrap_err();
        assert_eq!(issues.len(), 3);
        assert!(matches!(issues[0], IntentIssue::UnknownFunction { .. }));
        assert!(matches!(issues[1], IntentIssue::BadArguments { .. }));
        assert_eq!(issues[2], IntentIssue::UnknownApp("gallery".into()));
    }

    #[test]
    fn calls_group_by_first_appearance() {
        let intent = ParsedIntent::from_calls([
            ("camera".to_string(), Target::new("take_photo")),
            ("contacts".to_string(), Target::new("call").arg("name", "Bob")),
            ("camera".to_string(), Target::new("take_photo")),
        ]);
        assert_eq!(intent.entries.len(), 2);
        assert_eq!(intent.entries[0].targets.len(), 2);
        assert_eq!(intent.calls().count(), 3);
    }

    #[test]
    fn blank_instruction_rejected() {
        assert_eq!(Instruction::new("  \n"), Err(IntentError::EmptyInstruction));
    }
}
