//! Model-backed intent parser.
//!
//! The model replies with `APP <id>` / `CALL <fn> key=value ...` lines. A
//! reply that does not parse or does not fit the catalog gets exactly one
//! repair round; a second bad reply is a [`IntentError::ParseFailure`].

use std::collections::BTreeMap;

use super::{validate_intent, FunctionCatalog, Instruction, IntentError, IntentIssue, IntentParser, ParsedIntent};
use crate::gateway::{ChatGateway, Message};
use crate::prompts;
use crate::solver::Target;

fn malformed(line: usize, text: &str, reason: impl Into<String>) -> IntentIssue {
    IntentIssue::Malformed {
        line,
        text: text.to_string(),
        reason: reason.into(),
    }
}

/// Splits `key=value key="quoted value"` into pairs.
fn parse_args(rest: &str) -> Result<BTreeMap<String, String>, String> {
    let mut args = BTreeMap::new();
    let mut chars = rest.chars().peekable();
    loop {
        while chars.next_if(|c| c.is_whitespace()).is_some() {}
        if chars.peek().is_none() {
            return Ok(args);
        }
        let mut key = String::new();
        while let Some(c) = chars.next_if(|c| *c != '=' && !c.is_whitespace()) {
            key.push(c);
        }
        if chars.next() != Some('=') {
            return Err(format!("argument `{key}` has no `=value`"));
        }
        let mut value = String::new();
        if chars.next_if_eq(&'"').is_some() {
            loop {
                match chars.next() {
                    None => return Err(format!("unterminated quote in argument `{key}`")),
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some(c @ ('"' | '\\')) => value.push(c),
                        _ => return Err(format!("bad escape in argument `{key}`")),
                    },
                    Some(c) => value.push(c),
                }
            }
        } else {
            while let Some(c) = chars.next_if(|c| !c.is_whitespace()) {
                value.push(c);
            }
        }
        if key.is_empty() {
            return Err("argument with an empty name".into());
        }
        if args.insert(key.clone(), value).is_some() {
            return Err(format!("argument `{key}` given twice"));
        }
    }
}

/// Reads the APP/CALL reply format. Blank lines and code fences are
/// skipped; anything else is an issue.
pub fn parse_reply(reply: &str) -> (ParsedIntent, Vec<IntentIssue>) {
    let mut calls = Vec::new();
    let mut issues = Vec::new();
    let mut app: Option<String> = None;
    let mut apps_without_calls: Vec<String> = Vec::new();
    for (i, raw) in reply.lines().enumerate() {
        let line = raw.trim();
        let no = i + 1;
        if line.is_empty() || line.starts_with("```") {
            continue;
        }
        let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        match head {
            "APP" => {
                let id = rest.trim();
                if id.is_empty() || id.contains(char::is_whitespace) {
                    issues.push(malformed(no, line, "APP takes exactly one app id"));
                    continue;
                }
                apps_without_calls.push(id.to_string());
                app = Some(id.to_string());
            }
            "CALL" => {
                let Some(current) = &app else {
                    issues.push(malformed(no, line, "CALL before any APP line"));
                    continue;
                };
                let rest = rest.trim_start();
                let (function, args) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
                if function.is_empty() {
                    issues.push(malformed(no, line, "CALL needs a function name"));
                    continue;
                }
                match parse_args(args) {
                    Ok(args) => {
                        apps_without_calls.retain(|a| a != current);
                        calls.push((
                            current.clone(),
                            Target {
                                function: function.to_string(),
                                args,
                            },
                        ));
                    }
                    Err(reason) => issues.push(malformed(no, line, reason)),
                }
            }
            _ => issues.push(malformed(no, line, "expected a line starting with APP or CALL")),
        }
    }
    for a in apps_without_calls {
        issues.push(IntentIssue::EmptyEntry(a));
    }
    (ParsedIntent::from_calls(calls), issues)
}

fn check_reply(reply: &str, catalog: &FunctionCatalog) -> Result<ParsedIntent, Vec<IntentIssue>> {
    let (intent, mut issues) = parse_reply(reply);
    if let Err(more) = validate_intent(&intent, catalog) {
        issues.extend(more);
    }
    if issues.is_empty() {
        Ok(intent)
    } else {
        Err(issues)
    }
}

pub fn parse_intent_llm(
    instruction: &Instruction,
    catalog: &FunctionCatalog,
    gateway: &dyn ChatGateway,
) -> Result<ParsedIntent, IntentError> {
    let mut messages = prompts::parse_request(instruction.text(), &catalog.render());
    let first = gateway.complete(&messages)?;
    let issues = match check_reply(&first, catalog) {
        Ok(intent) => return Ok(intent),
        Err(issues) => issues,
    };
    let problems: Vec<String> = issues.iter().map(ToString::to_string).collect();
    messages.push(Message::assistant(first.clone()));
    messages.push(Message::user(prompts::parse_repair(&problems)));
    let second = gateway.complete(&messages)?;
    check_reply(&second, catalog).map_err(|issues| IntentError::ParseFailure {
        replies: vec![first, second],
        issues,
    })
}

/// [`IntentParser`] backed by a chat gateway.
pub struct LlmParser<G> {
    pub gateway: G,
}

impl<G: ChatGateway> IntentParser for LlmParser<G> {
    fn parse(&self, instruction: &Instruction, catalog: &FunctionCatalog) -> Result<ParsedIntent, IntentError> {
        parse_intent_llm(instruction, catalog, &self.gateway)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::load_str;
    use crate::gateway::{GatewayError, ScriptedGateway};
    use crate::intent::build_catalog;
    use std::path::Path;

    fn catalog() -> FunctionCatalog {
        let src = format!(
            "{}\n{}",
            include_str!("../../fixtures/camera.efsm"),
            include_str!("../../fixtures/contacts.efsm")
        );
        build_catalog(&load_str(Path::new("t"), &src).unwrap())
    }

    fn instr() -> Instruction {
        Instruction::new("Record a 5s video").unwrap()
    }

    #[test]
    fn reply_format() {
        let (intent, issues) = parse_reply(
            "```\nAPP contacts\nCALL call name=\"Bob \\\"B\\\" Smith\"\n\nAPP camera\nCALL take_photo\n```",
        );
        assert!(issues.is_empty(), "{issues:?}");
        assert_eq!(intent.entries[0].targets.0[0].args["name"], "Bob \"B\" Smith");
        assert_eq!(intent.entries[1].targets.0[0], Target::new("take_photo"));

        let (_, issues) = parse_reply("Sure! Here you go.\nCALL take_photo\nAPP camera");
        assert_eq!(issues.len(), 3);
        let (_, issues) = parse_reply("APP camera\nCALL record_video duration=\"5s");
        assert!(matches!(issues[0], IntentIssue::Malformed { line: 2, .. }));
        let (_, issues) = parse_reply("APP camera\nCALL call a=1 a=2");
        assert!(matches!(&issues[0], IntentIssue::Malformed { reason, .. } if reason.contains("twice")));
        assert_eq!(issues[1], IntentIssue::EmptyEntry("camera".into()));
    }

    #[test]
    fn good_first_reply() {
        let gw = ScriptedGateway::replies(["APP camera\nCALL record_video duration=5s"]);
        let intent = parse_intent_llm(&instr(), &catalog(), &gw).unwrap();
        assert_eq!(
            intent,
            ParsedIntent::single("camera", vec![Target::new("record_video").arg("duration", "5s")])
        );
        assert_eq!(gw.requests().len(), 1);
    }

    #[test]
    fn one_repair_round() {
        let gw = ScriptedGateway::replies([
            "APP camera\nCALL record_video length=5s",
            "APP camera\nCALL record_video duration=5s",
        ]);
        let intent = parse_intent_llm(&instr(), &catalog(), &gw).unwrap();
        assert_eq!(intent.entries[0].targets.0[0].args["duration"], "5s");
        let requests = gw.requests();
        assert_eq!(requests.len(), 2);
        assert_eq!(requests[1].len(), 4);
        assert!(requests[1][3].content.contains("takes arguments (duration)"));
    }

    #[test]
    fn second_failure_keeps_both_replies() {
        let gw = ScriptedGateway::replies(["APP gallery\nCALL open", "I cannot help with that."]);
        let err = parse_intent_llm(&instr(), &catalog(), &gw).unwrap_err();
        match err {
            IntentError::ParseFailure { replies, issues } => {
                assert_eq!(replies.len(), 2);
                assert_eq!(replies[1], "I cannot help with that.");
                assert!(!issues.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(gw.requests().len(), 2);
    }

    #[test]
    fn gateway_error_is_distinct() {
        let gw = ScriptedGateway::new([Err(GatewayError::Status(503))]);
        let err = parse_intent_llm(&instr(), &catalog(), &gw).unwrap_err();
        assert_eq!(err, IntentError::Gateway(GatewayError::Status(503)));
    }
}
