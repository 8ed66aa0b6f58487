//! Helpers shared by the integration tests: an independent brute-force
//! oracle over unvalidated machines, a stub chat server and fault injectors.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use splanner::model::{Comparator, Literal, RawAction, RawAtom, RawMachine, Spanned};
use splanner::Code;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

/// A configuration in name space: state, variable values, targets done.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NameConfig {
    pub state: String,
    pub vars: BTreeMap<String, Literal>,
    pub done: usize,
}

/// Executes a raw machine by names alone, sharing no code with the
/// validated model or the solver.
pub struct Oracle<'a> {
    pub m: &'a RawMachine,
}

impl<'a> Oracle<'a> {
    pub fn new(m: &'a RawMachine) -> Self {
        Self { m }
    }

    pub fn initial(&self) -> NameConfig {
        NameConfig {
            state: self.m.initial[0].value.clone(),
            vars: self
                .m
                .vars
                .iter()
                .map(|v| (v.name.value.clone(), v.initial.value.clone()))
                .collect(),
            done: 0,
        }
    }

    pub fn guard_holds(&self, atoms: &[RawAtom], vars: &BTreeMap<String, Literal>) -> bool {
        atoms.iter().all(|a| {
            let current = &vars[&a.var.value];
            match a.cmp {
                Comparator::Eq => *current == a.value.value,
                Comparator::Ne => *current != a.value.value,
            }
        })
    }

    /// Indices of transitions whose source and guard match, ignoring targets.
    pub fn enabled(&self, c: &NameConfig) -> Vec<usize> {
        (0..self.m.transitions.len())
            .filter(|&i| {
                let t = &self.m.transitions[i];
                t.source.value == c.state && self.guard_holds(&t.guard, &c.vars)
            })
            .collect()
    }

    /// Fires transition `i`, ignoring targets.
    pub fn fire(&self, c: &NameConfig, i: usize) -> NameConfig {
        let t = &self.m.transitions[i];
        let mut vars = c.vars.clone();
        for a in &t.update {
            vars.insert(a.var.value.clone(), a.value.value.clone());
        }
        NameConfig {
            state: t.target.value.clone(),
            vars,
            done: c.done,
        }
    }

    /// Successor under target-sequence rules: a transition that performs a
    /// function may only fire if it is the next pending target.
    pub fn successor(&self, c: &NameConfig, i: usize, targets: &[String]) -> Option<NameConfig> {
        let t = &self.m.transitions[i];
        let mut next = self.fire(c, i);
        if let Some(RawAction { function, .. }) = &t.action {
            if targets.get(c.done) != Some(&function.value) {
                return None;
            }
            next.done += 1;
        }
        Some(next)
    }

    fn successors(&self, c: &NameConfig, targets: &[String]) -> Vec<(usize, NameConfig)> {
        self.enabled(c)
            .into_iter()
            .filter_map(|i| self.successor(c, i, targets).map(|n| (i, n)))
            .collect()
    }

    /// Whether any reachable configuration completes the targets, by a
    /// fixpoint over the whole reachable set.
    pub fn reachable(&self, targets: &[String]) -> bool {
        let mut seen: HashSet<NameConfig> = HashSet::new();
        seen.insert(self.initial());
        loop {
            let mut grew = false;
            let snapshot: Vec<NameConfig> = seen.iter().cloned().collect();
            for c in snapshot {
                for (_, n) in self.successors(&c, targets) {
                    grew |= seen.insert(n);
                }
            }
            if !grew {
                break;
            }
        }
        seen.iter().any(|c| c.done == targets.len())
    }

    /// Iterative deepening search up to `max_depth` transitions. Shallower
    /// depths have already failed when depth `d` runs, so any hit has length
    /// `d`; transitions are tried in declaration order, so it is also the
    /// lexicographically smallest. Returns transition ids.
    pub fn shortest(&self, targets: &[String], max_depth: usize) -> Option<Vec<String>> {
        // Configurations known to have no goal within the stored budget.
        let mut dead: HashMap<NameConfig, usize> = HashMap::new();
        for depth in 0..=max_depth {
            let mut path = Vec::new();
            if self.dfs(&self.initial(), depth, targets, &mut path, &mut dead) {
                return Some(
                    path.into_iter()
                        .map(|i| self.m.transitions[i].id.value.clone())
                        .collect(),
                );
            }
        }
        None
    }

    fn dfs(
        &self,
        c: &NameConfig,
        budget: usize,
        targets: &[String],
        path: &mut Vec<usize>,
        dead: &mut HashMap<NameConfig, usize>,
    ) -> bool {
        if c.done == targets.len() {
            return true;
        }
        if budget == 0 || dead.get(c).is_some_and(|&b| b >= budget) {
            return false;
        }
        for (i, n) in self.successors(c, targets) {
            path.push(i);
            if self.dfs(&n, budget - 1, targets, path, dead) {
                return true;
            }
            path.pop();
        }
        // No goal within `budget` steps from here.
        dead.insert(c.clone(), budget);
        false
    }
}

// ---------------------------------------------------------------------------
// Fault injection
// ---------------------------------------------------------------------------

fn bare<T>(v: T) -> Spanned<T> {
    Spanned::bare(v)
}

/// Structural faults applied to a valid machine, with the code each must
/// produce on validation.
pub type SemanticFault = (Code, fn(&mut RawMachine));
pub type TextFault = (Code, fn(&str) -> String);

pub fn semantic_faults() -> Vec<SemanticFault> {
    vec![
        (Code::UnknownState, |m| m.transitions[0].target = bare("nowhere".into())),
        (Code::UnknownVar, |m| {
            m.transitions[0].guard.push(RawAtom {
                var: bare("ghost".into()),
                cmp: Comparator::Eq,
                value: bare(Literal::Bool(true)),
            })
        }),
        (Code::UnknownFunction, |m| {
            m.transitions[0].action = Some(RawAction {
                function: bare("ghost_fn".into()),
                slots: None,
            })
        }),
        (Code::DomainMismatch, |m| {
            m.vars.push(splanner::model::RawVar {
                name: bare("zz".into()),
                domain: splanner::model::RawDomain::Bool,
                initial: bare(Literal::Bool(false)),
            });
            m.transitions[0].guard.push(RawAtom {
                var: bare("zz".into()),
                cmp: Comparator::Eq,
                value: bare(Literal::Sym("low".into())),
            })
        }),
        (Code::DuplicateName, |m| {
            let first = m.states[0].clone();
            m.states.push(first)
        }),
        (Code::BadPlaceholder, |m| {
            m.transitions[0].event.value.push_str(" {ghost}")
        }),
        (Code::NoInitialState, |m| m.initial.clear()),
        (Code::EmptyEvent, |m| m.transitions[0].event = bare(String::new())),
    ]
}

/// Textual faults on a serialized model, with the syntax code expected.
pub fn text_faults() -> Vec<TextFault> {
    vec![
        (Code::UnterminatedBlock, |t| {
            let end = t.trim_end().rfind('}').expect("closing brace");
            t[..end].to_string()
        }),
        (Code::DuplicateSection, |t| {
            let start = t.find("    states {").expect("states section");
            let len = t[start..].find("}\n").expect("end of states") + 2;
            let section = t[start..start + len].to_string();
            format!("{}{}{}", &t[..start + len], section, &t[start + len..])
        }),
        (Code::SyntaxError, |t| t.replacen(" -> ", " ", 1)),
    ]
}

// ---------------------------------------------------------------------------
// Stub chat server
// ---------------------------------------------------------------------------

/// What the stub does with one request.
#[derive(Debug, Clone)]
pub enum Reply {
    Status(u16),
    Content(String),
    /// Sleep before answering, long enough to trip a client timeout.
    Stall(Duration),
}

/// A local HTTP server that answers chat requests from a script, then keeps
/// repeating the last entry.
pub struct StubServer {
    pub base_url: String,
    pub hits: Arc<AtomicUsize>,
}

fn read_request(stream: &mut TcpStream) -> Option<()> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            length = v.trim().parse().ok()?;
        }
        if line == "\r\n" {
            break;
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some(())
}

fn respond(stream: &mut TcpStream, reply: &Reply) {
    let (code, body) = match reply {
        Reply::Status(code) => (*code, "{\"error\":\"stub\"}".to_string()),
        Reply::Content(text) => (
            200,
            serde_json::json!({
                "choices": [{"message": {"role": "assistant", "content": text}}],
                "usage": {"prompt_tokens": 3, "completion_tokens": 2, "total_tokens": 5}
            })
            .to_string(),
        ),
        Reply::Stall(d) => {
            thread::sleep(*d);
            (200, "{}".to_string())
        }
    };
    let head = format!(
        "HTTP/1.1 {code} STUB\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        body.len()
    );
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(body.as_bytes());
    let _ = stream.flush();
}

impl StubServer {
    pub fn start(script: Vec<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let addr = listener.local_addr().expect("stub address");
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let reply = script[n.min(script.len() - 1)].clone();
                thread::spawn(move || {
                    if read_request(&mut stream).is_some() {
                        respond(&mut stream, &reply);
                    }
                });
            }
        });
        Self {
            base_url: format!("http://{addr}/v1"),
            hits,
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}
pub mod llm_cases;
