//! Seeded generators for random app models, lexicons, and tasks.
//!
//! Used by the benchmark runner and the property tests. Everything is a
//! pure function of the RNG, so a seed reproduces a whole suite.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::format::is_keyword;
use crate::format::write_raw;
use crate::intent::{IntentEntry, ParsedIntent};
use crate::model::{
    validate_all, Comparator, KnowledgeBase, Literal, RawAction, RawAssign, RawAtom, RawDomain, RawFunction,
    RawMachine, RawTransition, RawVar, Spanned,
};
use crate::solver::{Feasibility, Solver, Target, TargetSequence};

/// Bounds for generated machines.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineShape {
    pub max_states: usize,
    pub max_bools: usize,
    pub max_enums: usize,
    pub max_functions: usize,
    pub max_params: usize,
    pub max_transitions: usize,
    pub max_guard_atoms: usize,
    pub max_assignments: usize,
    /// Chance that a transition performs a function.
    pub action_rate: f64,
    /// Put quotes, backslashes and descriptions into generated text.
    pub decorate_text: bool,
}

impl Default for MachineShape {
    fn default() -> Self {
        Self {
            max_states: 6,
            max_bools: 3,
            max_enums: 0,
            max_functions: 3,
            max_params: 1,
            max_transitions: 12,
            max_guard_atoms: 2,
            max_assignments: 2,
            action_rate: 0.35,
            decorate_text: false,
        }
    }
}

impl MachineShape {
    /// Wider shape for exercising the text format: enums, two-parameter
    /// functions, escapes and descriptions.
    pub fn rich() -> Self {
        Self {
            max_enums: 2,
            max_params: 2,
            decorate_text: true,
            ..Self::default()
        }
    }
}

const ENUM_VALUES: &[&str] = &["low", "mid", "high", "auto", "manual", "front", "back", "off_", "x1"];
const ARG_VALUES: &[&str] = &["5s", "10 seconds", "Ann", "Bob Lee", "red", "blue", "42", "large"];
const DECORATIONS: &[&str] = &[" \"OK\"", " (C:\\temp)", " now", " \\\\share", " 'quoted'"];

fn s<T>(value: T) -> Spanned<T> {
    Spanned::bare(value)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random, valid machine. Every function gets at least one transition
/// that performs it when there are enough transitions.
pub fn random_machine<R: Rng>(rng: &mut R, app_id: &str, shape: &MachineShape) -> RawMachine {
    let n_states = rng.gen_range(1..=shape.max_states.max(1));
    let states: Vec<String> = (0..n_states).map(|i| format!("s{i}")).collect();

    let mut vars = Vec::new();
    let mut domains: Vec<Vec<Literal>> = Vec::new();
    for i in 0..rng.gen_range(0..=shape.max_bools) {
        let init = rng.gen_bool(0.5);
        vars.push(RawVar {
            name: s(format!("v{i}")),
            domain: RawDomain::Bool,
            initial: s(Literal::Bool(init)),
        });
        domains.push(vec![Literal::Bool(false), Literal::Bool(true)]);
    }
    for i in 0..rng.gen_range(0..=shape.max_enums) {
        let k = rng.gen_range(2..=4);
        let values: Vec<&str> = ENUM_VALUES.choose_multiple(rng, k).copied().collect();
        let lits: Vec<Literal> = values.iter().map(|v| Literal::Sym(v.to_string())).collect();
        vars.push(RawVar {
            name: s(format!("m{i}")),
            domain: RawDomain::Enum(values.iter().map(|v| s(v.to_string())).collect()),
            initial: s(lits.choose(rng).expect("k >= 2").clone()),
        });
        domains.push(lits);
    }

    let n_functions = rng.gen_range(1..=shape.max_functions.max(1));
    let functions: Vec<RawFunction> = (0..n_functions)
        .map(|i| {
            let params = (0..rng.gen_range(0..=shape.max_params))
                .map(|p| s(format!("p{p}")))
                .collect();
            let description = (shape.decorate_text && rng.gen_bool(0.5)).then(|| {
                let deco = DECORATIONS.choose(rng).expect("non-empty");
                s(format!("Does thing {i}{deco}."))
            });
            RawFunction {
                name: s(format!("f{i}")),
                params,
                description,
            }
        })
        .collect();

    let n_transitions = rng.gen_range(1..=shape.max_transitions.max(1));
    let mut forced: Vec<Option<usize>> = (0..n_transitions).map(|i| (i < n_functions).then_some(i)).collect();
    forced.shuffle(rng);

    let transitions = (0..n_transitions)
        .map(|i| {
            let source = states.choose(rng).expect("states").clone();
            let target = states.choose(rng).expect("states").clone();
            let mut var_order: Vec<usize> = (0..vars.len()).collect();
            var_order.shuffle(rng);
            let n_atoms = rng.gen_range(0..=shape.max_guard_atoms.min(vars.len()));
            let guard = var_order[..n_atoms]
                .iter()
                .map(|&v| RawAtom {
                    var: s(vars[v].name.value.clone()),
                    cmp: if rng.gen_bool(0.7) {
                        Comparator::Eq
                    } else {
                        Comparator::Ne
                    },
                    value: s(domains[v].choose(rng).expect("domain").clone()),
                })
                .collect();
            var_order.shuffle(rng);
            let n_assign = rng.gen_range(0..=shape.max_assignments.min(vars.len()));
            let update = var_order[..n_assign]
                .iter()
                .map(|&v| RawAssign {
                    var: s(vars[v].name.value.clone()),
                    value: s(domains[v].choose(rng).expect("domain").clone()),
                })
                .collect();
            let performs = forced[i].or_else(|| rng.gen_bool(shape.action_rate).then(|| rng.gen_range(0..n_functions)));
            let mut event = format!("Tap control {i} on {source}");
            if shape.decorate_text && rng.gen_bool(0.3) {
                event.push_str(DECORATIONS.choose(rng).expect("non-empty"));
            }
            let action = performs.map(|f| {
                let params: Vec<String> = functions[f].params.iter().map(|p| p.value.clone()).collect();
                for p in &params {
                    event.push_str(&format!(" with {{{p}}}"));
                }
                RawAction {
                    function: s(functions[f].name.value.clone()),
                    slots: (!params.is_empty()).then(|| params.into_iter().map(s).collect()),
                }
            });
            event.push('.');
            RawTransition {
                id: s(format!("t{i}")),
                source: s(source),
                target: s(target),
                event: s(event),
                guard,
                update,
                action,
            }
        })
        .collect();

    RawMachine {
        app_id: s(app_id.to_string()),
        vars,
        initial: vec![s(states[0].clone())],
        states: states.into_iter().map(s).collect(),
        functions,
        transitions,
    }
}

/// Random machines for apps `app0`, `app1`, ...
pub fn random_machines<R: Rng>(rng: &mut R, apps: usize, shape: &MachineShape) -> Vec<RawMachine> {
    (0..apps)
        .map(|i| random_machine(rng, &format!("app{i}"), shape))
        .collect()
}

/// The lexicon phrase for a call: `use app0 to f1 with {p0} and {p1}`.
fn phrase(app: &str, function: &str, params: &[String]) -> String {
    let mut out = format!("use {app} to {function}");
    for (i, p) in params.iter().enumerate() {
        out.push_str(if i == 0 { " with " } else { " and " });
        out.push_str(p);
    }
    out
}

/// One lexicon pattern per function of every app.
pub fn lexicon_text(kb: &KnowledgeBase) -> String {
    let mut out = String::new();
    for m in kb.machines() {
        for f in m.functions() {
            let slots: Vec<String> = f.params().iter().map(|p| format!("{{{p}}}")).collect();
            out.push_str(&format!(
                "{}\t{}.{}\n",
                phrase(m.app_id(), f.name(), &slots),
                m.app_id(),
                f.name()
            ));
        }
    }
    out
}

/// The instruction a generated lexicon parses back into `intent`.
pub fn instruction_text(intent: &ParsedIntent, kb: &KnowledgeBase) -> String {
    let parts: Vec<String> = intent
        .calls()
        .map(|(app, t)| {
            let params = kb
                .get(app)
                .and_then(|m| m.function_id(&t.function).map(|f| m.function(f).params().to_vec()))
                .unwrap_or_default();
            let values: Vec<String> = params.iter().map(|p| t.args[p].clone()).collect();
            phrase(app, &t.function, &values)
        })
        .collect();
    let mut text = parts.join(", then ");
    if let Some(first) = text.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    text.push('.');
    text
}

/// A random intent over at most two apps with `1..=max_targets` calls.
pub fn random_intent<R: Rng>(rng: &mut R, kb: &KnowledgeBase, max_targets: usize) -> ParsedIntent {
    let machines: Vec<_> = kb.machines().filter(|m| !m.functions().is_empty()).collect();
    let mut remaining = rng.gen_range(1..=max_targets.max(1));
    let n_apps = rng.gen_range(1..=remaining.min(machines.len()).min(2));
    let apps: Vec<_> = machines.choose_multiple(rng, n_apps).copied().collect();
    let mut entries = Vec::new();
    for (i, m) in apps.iter().enumerate() {
        let left_apps = apps.len() - i - 1;
        let take = if left_apps == 0 {
            remaining
        } else {
            rng.gen_range(1..=remaining - left_apps)
        };
        remaining -= take;
        let targets = (0..take)
            .map(|_| {
                let f = m.functions().choose(rng).expect("non-empty");
                let args: BTreeMap<String, String> = f
                    .params()
                    .iter()
                    .map(|p| (p.clone(), ARG_VALUES.choose(rng).expect("non-empty").to_string()))
                    .collect();
                Target {
                    function: f.name().to_string(),
                    args,
                }
            })
            .collect();
        entries.push(IntentEntry {
            app_id: m.app_id().to_string(),
            targets: TargetSequence::new(targets),
        });
    }
    ParsedIntent { entries }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub instruction: String,
    pub intent: ParsedIntent,
    pub feasible: bool,
}

/// A generated world: models, a lexicon that covers them, and tasks.
#[derive(Debug, Clone)]
pub struct Suite {
    pub raws: Vec<RawMachine>,
    pub kb: KnowledgeBase,
    pub lexicon: String,
    pub tasks: Vec<Task>,
}

impl Suite {
    pub fn model_text(&self) -> String {
        write_raw(&self.raws)
    }
}

/// Which tasks [`generate_suite`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskMix {
    Any,
    FeasibleOnly,
    InfeasibleOnly,
}

/// Draws fresh worlds until `tasks` tasks of the requested kind exist. Each
/// world contributes at most a few tasks so that no single machine
/// dominates.
pub fn generate_suite(seed: u64, apps: usize, tasks: usize, mix: TaskMix) -> Suite {
    let mut rng = seeded(seed);
    let shape = MachineShape::default();
    let solver = Solver::default();
    let mut all_raws = Vec::new();
    let mut out = Vec::new();
    let mut world = 0;
    while out.len() < tasks {
        let prefix = format!("w{world}");
        world += 1;
        let raws: Vec<RawMachine> = (0..apps.max(1))
            .map(|i| random_machine(&mut rng, &format!("{prefix}a{i}"), &shape))
            .collect();
        let kb = validate_all(&raws).expect("generated machines are valid");
        for _ in 0..3 {
            if out.len() >= tasks {
                break;
            }
            let intent = random_intent(&mut rng, &kb, 2);
            let feasible = matches!(solver.solve_all(&kb, &intent), Ok(Feasibility::Feasible(_)));
            let keep = match mix {
                TaskMix::Any => true,
                TaskMix::FeasibleOnly => feasible,
                TaskMix::InfeasibleOnly => !feasible,
            };
            if keep {
                out.push(Task {
                    id: format!("task{:03}", out.len()),
                    instruction: instruction_text(&intent, &kb),
                    intent,
                    feasible,
                });
            }
        }
        all_raws.extend(raws);
    }
    let kb = validate_all(&all_raws).expect("generated machines are valid");
    Suite {
        lexicon: lexicon_text(&kb),
        raws: all_raws,
        kb,
        tasks: out,
    }
}

/// True if `name` can be written as a bare identifier in a model file.
pub fn is_plain_name(name: &str) -> bool {
    crate::model::is_identifier(name) && !is_keyword(name)
}
