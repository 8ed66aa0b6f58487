//! Deterministic keyword-pattern intent parser.
//!
//! A lexicon file holds one pattern per line: `pattern<TAB>app.function`.
//! Patterns are words plus `{slot}` captures, e.g.
//! `record a video of {duration}`. Words match case-insensitively. A slot
//! captures the longest run of instruction words that are not keywords,
//! where the keywords are every literal word of every pattern plus the
//! connectives `and` and `then`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use super::{validate_intent, FunctionCatalog, Instruction, IntentError, IntentParser, ParsedIntent};
use crate::solver::Target;

const CONNECTIVES: [&str; 2] = ["and", "then"];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Element {
    Word(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub text: String,
    pub app_id: String,
    pub function: String,
    elements: Vec<Element>,
}

impl Pattern {
    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.elements.iter().filter_map(|e| match e {
            Element::Slot(s) => Some(s.as_str()),
            Element::Word(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("lexicon line {line}: {message}")]
pub struct LexiconError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    patterns: Vec<Pattern>,
    keywords: HashSet<String>,
}

fn parse_pattern(text: &str, line: usize) -> Result<Vec<Element>, LexiconError> {
    let err = |message: String| LexiconError { line, message };
    let mut elements = Vec::new();
    for word in text.split_whitespace() {
        if let Some(inner) = word.strip_prefix('{') {
            let name = inner
                .strip_suffix('}')
                .filter(|n| crate::model::is_identifier(n))
                .ok_or_else(|| err(format!("malformed slot `{word}`")))?;
            if matches!(elements.last(), Some(Element::Slot(_))) {
                return Err(err("two slots may not be adjacent".into()));
            }
            elements.push(Element::Slot(name.to_string()));
        } else if word.contains(['{', '}']) {
            return Err(err(format!("slot `{word}` must be a whole word")));
        } else {
            elements.push(Element::Word(word.to_lowercase()));
        }
    }
    if !elements.iter().any(|e| matches!(e, Element::Word(_))) {
        return Err(err("pattern needs at least one literal word".into()));
    }
    Ok(elements)
}

impl Lexicon {
    /// Parses lexicon text. `#` starts a comment line; blank lines are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut patterns = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let (pattern, target) = raw.split_once('\t').ok_or_else(|| LexiconError {
                line,
                message: "expected `pattern<TAB>app.function`".into(),
            })?;
            let target = target.trim();
            let (app_id, function) = target.rsplit_once('.').ok_or_else(|| LexiconError {
                line,
                message: format!("target `{target}` is not of the form app.function"),
            })?;
            if app_id.is_empty() || function.is_empty() {
                return Err(LexiconError {
                    line,
                    message: format!("target `{target}` is not of the form app.function"),
                });
            }
            patterns.push(Pattern {
                text: pattern.trim().to_string(),
                app_id: app_id.to_string(),
                function: function.to_string(),
                elements: parse_pattern(pattern, line)?,
            });
        }
        Ok(Self::from_patterns(patterns))
    }

    fn from_patterns(patterns: Vec<Pattern>) -> Self {
        let mut keywords: HashSet<String> = CONNECTIVES.iter().map(|s| s.to_string()).collect();
        for p in &patterns {
            for e in &p.elements {
                if let Element::Word(w) = e {
                    keywords.insert(w.clone());
                }
            }
        }
        Self { patterns, keywords }
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = fs::read_to_string(path).map_err(|e| LexiconError {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn is_keyword(&self, word: &str) -> bool {
        self.keywords.contains(&word.to_lowercase())
    }

    /// Checks every pattern against the catalog: the app and function must
    /// exist and the slots must be exactly the function's parameters.
    pub fn check(&self, catalog: &FunctionCatalog) -> Result<(), Vec<String>> {
        let mut problems = Vec::new();
        for p in &self.patterns {
            let Some(f) = catalog.function(&p.app_id, &p.function) else {
                problems.push(format!(
                    "pattern `{}` targets unknown function {}.{}",
                    p.text, p.app_id, p.function
                ));
                continue;
            };
            let mut slots: Vec<&str> = p.slots().collect();
            let mut params: Vec<&str> = f.params.iter().map(String::as_str).collect();
            slots.sort_unstable();
            params.sort_unstable();
            if slots != params {
                problems.push(format!(
                    "pattern `{}` captures ({}) but {}.{} takes ({})",
                    p.text,
                    slots.join(", "),
                    p.app_id,
                    p.function,
                    params.join(", ")
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }

    fn match_at(
        &self,
        pattern: &Pattern,
        words: &[Word<'_>],
        start: usize,
    ) -> Option<(usize, BTreeMap<String, String>)> {
        let mut at = start;
        let mut bindings = BTreeMap::new();
        for e in &pattern.elements {
            match e {
                Element::Word(w) => {
                    if words.get(at)?.lower != *w {
                        return None;
                    }
                    at += 1;
                }
                Element::Slot(name) => {
                    let from = at;
                    while at < words.len() && !self.keywords.contains(&words[at].lower) {
                        at += 1;
                    }
                    if at == from {
                        return None;
                    }
                    let value: Vec<&str> = words[from..at].iter().map(|w| w.text).collect();
                    bindings.insert(name.clone(), value.join(" "));
                }
            }
        }
        Some((at - start, bindings))
    }
}

struct Word<'a> {
    text: &'a str,
    lower: String,
}

const PUNCTUATION: &[char] = &['.', ',', ';', ':', '!', '?', '"', '\'', '(', ')'];

fn words(text: &str) -> Vec<Word<'_>> {
    text.split_whitespace()
        .map(|w| w.trim_matches(PUNCTUATION))
        .filter(|w| !w.is_empty())
        .map(|w| Word {
            text: w,
            lower: w.to_lowercase(),
        })
        .collect()
}

/// Scans the instruction left to right, taking the longest pattern match at
/// each position. Matched calls keep their textual order; apps are grouped
/// by first appearance.
pub fn parse_intent_lexicon(
    instruction: &Instruction,
    catalog: &FunctionCatalog,
    lexicon: &Lexicon,
) -> Result<ParsedIntent, IntentError> {
    let words = words(instruction.text());
    let mut calls = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let mut best: Vec<(&Pattern, BTreeMap<String, String>)> = Vec::new();
        let mut best_len = 0;
        for p in &lexicon.patterns {
            if let Some((len, bindings)) = lexicon.match_at(p, &words, i) {
                if len > best_len {
                    best_len = len;
                    best.clear();
                }
                if len == best_len {
                    best.push((p, bindings));
                }
            }
        }
        if best.is_empty() {
            i += 1;
            continue;
        }
        let (first, bindings) = &best[0];
        let conflicting = best[1..]
            .iter()
            .any(|(p, b)| p.app_id != first.app_id || p.function != first.function || b != bindings);
        if conflicting {
            return Err(IntentError::AmbiguousMatch {
                position: i + 1,
                candidates: best.iter().map(|(p, _)| p.text.clone()).collect(),
            });
        }
        calls.push((
            first.app_id.clone(),
            Target {
                function: first.function.clone(),
                args: bindings.clone(),
            },
        ));
        i += best_len;
    }
    if calls.is_empty() {
        return Err(IntentError::NoMatch);
    }
    let intent = ParsedIntent::from_calls(calls);
    validate_intent(&intent, catalog).map_err(IntentError::Invalid)?;
    Ok(intent)
}

/// [`IntentParser`] over a fixed lexicon.
#[derive(Debug, Clone)]
pub struct LexiconParser {
    pub lexicon: Lexicon,
}

impl IntentParser for LexiconParser {
    fn parse(&self, instruction: &Instruction, catalog: &FunctionCatalog) -> Result<ParsedIntent, IntentError> {
        parse_intent_lexicon(instruction, catalog, &self.lexicon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::load_str;
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

    fn lexicon() -> Lexicon {
        Lexicon::parse(include_str!("../../fixtures/lexicon.tsv")).unwrap()
    }

    fn parse(text: &str) -> Result<ParsedIntent, IntentError> {
        parse_intent_lexicon(&Instruction::new(text).unwrap(), &catalog(), &lexicon())
    }

    #[test]
    fn direct_pattern_hit() {
        let intent = parse("Take a photo").unwrap();
        assert_eq!(intent, ParsedIntent::single("camera", vec![Target::new("take_photo")]));
    }

    #[test]
    fn slot_capture() {
        let intent = parse("record a video of 5s").unwrap();
        assert_eq!(
            intent,
            ParsedIntent::single("camera", vec![Target::new("record_video").arg("duration", "5s")])
        );
    }

    #[test]
    fn no_pattern_fires() {
        assert_eq!(parse("play chess"), Err(IntentError::NoMatch));
    }

    #[test]
    fn multi_app_order_and_slot_boundaries() {
        let intent = parse("Call Bob Smith, then take a photo and record a video of 10 seconds.").unwrap();
        assert_eq!(intent.entries.len(), 2);
        assert_eq!(intent.entries[0].app_id, "contacts");
        assert_eq!(intent.entries[0].targets.0[0].args["name"], "Bob Smith");
        let camera: Vec<String> = intent.entries[1].targets.iter().map(|t| t.to_string()).collect();
        assert_eq!(camera, ["take_photo()", "record_video(duration=10 seconds)"]);
    }

    #[test]
    fn equal_length_conflict_is_reported() {
        let lex = Lexicon::parse("snap now\tcamera.take_photo\nsnap now\tcontacts.call\n").unwrap();
        let instr = Instruction::new("snap now").unwrap();
        let err = parse_intent_lexicon(&instr, &catalog(), &lex).unwrap_err();
        assert!(matches!(err, IntentError::AmbiguousMatch { position: 1, .. }));
    }

    #[test]
    fn longest_match_wins() {
        let lex = Lexicon::parse("take a photo\tcamera.take_photo\ntake a photo of {name}\tcontacts.call\n").unwrap();
        let instr = Instruction::new("take a photo of Ann").unwrap();
        let intent = parse_intent_lexicon(&instr, &catalog(), &lex).unwrap();
        assert_eq!(intent.entries[0].app_id, "contacts");
    }

    #[test]
    fn malformed_lexicon_lines() {
        assert_eq!(Lexicon::parse("take a photo camera.take_photo").unwrap_err().line, 1);
        assert!(Lexicon::parse("{a} {b}\tx.y").is_err());
        assert!(Lexicon::parse("{a}\tx.y").is_err());
        assert!(Lexicon::parse("go{a}\tx.y").is_err());
        assert!(Lexicon::parse("# comment\n\ngo\tx").is_err());
    }

    #[test]
    fn lexicon_checked_against_catalog() {
        assert!(lexicon().check(&catalog()).is_ok());
        let bad = Lexicon::parse("call\tcontacts.call\nzoom in\tcamera.zoom\n").unwrap();
        assert_eq!(bad.check(&catalog()).unwrap_err().len(), 2);
    }

    #[test]
    fn parsing_is_pure() {
        let a = parse("record a video of 5s and call Ann");
        let b = parse("record a video of 5s and call Ann");
        assert_eq!(a, b);
    }
}
