//! Extended finite state machines for application modeling.
//!
//! A machine is the tuple (states, events, primary functions, variables,
//! transitions, initial state). Machines are built from an unvalidated
//! [`RawMachine`] by [`validate_efsm`]; once an [`Efsm`] exists, every
//! cross-reference in it has been resolved to an index and every literal
//! checked against its variable's domain.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use indexmap::IndexMap;
use serde::Serialize;

use crate::diagnostics::{Code, Diagnostic, Diagnostics, SourceSpan};

/// Maximum number of literals an enumeration variable may declare.
pub const MAX_ENUM_VALUES: usize = 64;

/// Above this many total valuations a machine gets a solver-cost warning.
pub const VALUATION_WARNING_THRESHOLD: u128 = 1 << 16;

// ---------------------------------------------------------------------------
// Unvalidated descriptions
// ---------------------------------------------------------------------------

/// A value with an optional source location.
#[derive(Debug, Clone)]
pub struct Spanned<T> {
    pub value: T,
    pub span: Option<SourceSpan>,
}

impl<T> Spanned<T> {
    pub fn new(value: T, span: Option<SourceSpan>) -> Self {
        Self { value, span }
    }

    pub fn bare(value: T) -> Self {
        Self { value, span: None }
    }
}

impl<T: PartialEq> PartialEq for Spanned<T> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum Literal {
    Bool(bool),
    Sym(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Sym(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Comparator {
    Eq,
    Ne,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawDomain {
    Bool,
    Enum(Vec<Spanned<String>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawVar {
    pub name: Spanned<String>,
    pub domain: RawDomain,
    pub initial: Spanned<Literal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawFunction {
    pub name: Spanned<String>,
    pub params: Vec<Spanned<String>>,
    pub description: Option<Spanned<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawAtom {
    pub var: Spanned<String>,
    pub cmp: Comparator,
    pub value: Spanned<Literal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawAssign {
    pub var: Spanned<String>,
    pub value: Spanned<Literal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawAction {
    pub function: Spanned<String>,
    /// The parenthesised parameter list after `does f`, when written.
    pub slots: Option<Vec<Spanned<String>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTransition {
    pub id: Spanned<String>,
    pub source: Spanned<String>,
    pub target: Spanned<String>,
    pub event: Spanned<String>,
    pub guard: Vec<RawAtom>,
    pub update: Vec<RawAssign>,
    pub action: Option<RawAction>,
}

/// An application description as written, before any checking.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMachine {
    pub app_id: Spanned<String>,
    pub vars: Vec<RawVar>,
    pub states: Vec<Spanned<String>>,
    /// States marked initial. Exactly one is required.
    pub initial: Vec<Spanned<String>>,
    pub functions: Vec<RawFunction>,
    pub transitions: Vec<RawTransition>,
}

// ---------------------------------------------------------------------------
// Validated model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Domain {
    Bool,
    Enum(Vec<String>),
}

impl Domain {
    pub fn size(&self) -> usize {
        match self {
            Domain::Bool => 2,
            Domain::Enum(values) => values.len(),
        }
    }

    pub fn index_of(&self, literal: &Literal) -> Option<u8> {
        match (self, literal) {
            (Domain::Bool, Literal::Bool(b)) => Some(u8::from(*b)),
            (Domain::Enum(values), Literal::Sym(s)) => values.iter().position(|v| v == s).map(|i| i as u8),
            _ => None,
        }
    }

    pub fn literal(&self, index: u8) -> Literal {
        match self {
            Domain::Bool => Literal::Bool(index != 0),
            Domain::Enum(values) => Literal::Sym(values[index as usize].clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VarDecl {
    name: String,
    domain: Domain,
    initial: u8,
}

impl VarDecl {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn initial(&self) -> Literal {
        self.domain.literal(self.initial)
    }

    pub fn initial_index(&self) -> u8 {
        self.initial
    }
}

/// A total assignment of every declared variable, stored as one domain index
/// per variable in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Valuation(Vec<u8>);

impl Valuation {
    pub fn from_indices(indices: Vec<u8>) -> Self {
        Self(indices)
    }

    pub fn indices(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, var: usize) -> u8 {
        self.0[var]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One `var == literal` or `var != literal` test, resolved to indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Atom {
    pub var: usize,
    pub cmp: Comparator,
    pub value: u8,
}

impl Atom {
    pub fn holds(&self, v: &Valuation) -> bool {
        let current = v.get(self.var);
        match self.cmp {
            Comparator::Eq => current == self.value,
            Comparator::Ne => current != self.value,
        }
    }
}

/// Conjunction of atoms. The empty guard is always true.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Guard {
    atoms: Vec<Atom>,
}

impl Guard {
    pub fn new(atoms: Vec<Atom>) -> Self {
        Self { atoms }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_trivial(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn eval(&self, v: &Valuation) -> bool {
        self.atoms.iter().all(|a| a.holds(v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("variable #{0} is assigned more than once in one update")]
pub struct DuplicateAssignment(pub usize);

/// Ordered assignments applied when a transition fires. No variable may be
/// assigned twice.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Update {
    assignments: Vec<(usize, u8)>,
}

impl Update {
    pub fn new(assignments: Vec<(usize, u8)>) -> Result<Self, DuplicateAssignment> {
        let mut seen = HashSet::new();
        for (var, _) in &assignments {
            if !seen.insert(*var) {
                return Err(DuplicateAssignment(*var));
            }
        }
        Ok(Self { assignments })
    }

    pub fn assignments(&self) -> &[(usize, u8)] {
        &self.assignments
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn apply(&self, v: &Valuation) -> Valuation {
        let mut next = v.clone();
        for &(var, value) in &self.assignments {
            next.0[var] = value;
        }
        next
    }
}

pub fn eval_guard(guard: &Guard, valuation: &Valuation) -> bool {
    guard.eval(valuation)
}

pub fn apply_update(update: &Update, valuation: &Valuation) -> Valuation {
    update.apply(valuation)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrimaryFunction {
    name: String,
    params: Vec<String>,
    description: String,
}

impl PrimaryFunction {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    /// Empty when the model gives no description.
    pub fn description(&self) -> &str {
        &self.description
    }
}

/// Natural-language operation text, possibly containing `{param}`
/// placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    text: String,
}

impl Event {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn placeholders(&self) -> Vec<String> {
        scan_placeholders(&self.text).unwrap_or_default()
    }

    /// Substitutes every `{name}` that has a binding. Unbound placeholders
    /// are left in place.
    pub fn resolve(&self, args: &BTreeMap<String, String>) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) => {
                    let name = &after[..close];
                    match args.get(name) {
                        Some(value) => out.push_str(value),
                        None => {
                            out.push('{');
                            out.push_str(name);
                            out.push('}');
                        }
                    }
                    rest = &after[close + 1..];
                }
                None => {
                    out.push_str(&rest[open..]);
                    rest = "";
                }
            }
        }
        out.push_str(rest);
        out
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Extracts placeholder names from event text. Every `{` must open a
/// well-formed `{identifier}` and every `}` must close one.
pub fn scan_placeholders(text: &str) -> Result<Vec<String>, String> {
    let mut names = Vec::new();
    let mut rest = text;
    loop {
        let open = rest.find('{');
        let close = rest.find('}');
        match (open, close) {
            (None, None) => return Ok(names),
            (None, Some(_)) => return Err("unmatched `}` in event text".into()),
            (Some(o), Some(c)) if c < o => {
                return Err("unmatched `}` in event text".into());
            }
            (Some(_), None) => return Err("unterminated `{` in event text".into()),
            (Some(o), Some(c)) => {
                let name = &rest[o + 1..c];
                if !is_identifier(name) {
                    return Err(format!("`{{{name}}}` is not a valid placeholder"));
                }
                names.push(name.to_string());
                rest = &rest[c + 1..];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StateId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FunctionId(pub usize);

/// Which of the three transition roles a transition plays. Every transition
/// is either navigation or function execution; configuration can combine
/// with either.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionKinds {
    pub navigation: bool,
    pub configuration: bool,
    pub function_execution: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transition {
    id: String,
    source: StateId,
    target: StateId,
    event: Event,
    action: Option<FunctionId>,
    guard: Guard,
    update: Update,
}

impl Transition {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn source(&self) -> StateId {
        self.source
    }

    pub fn target(&self) -> StateId {
        self.target
    }

    pub fn event(&self) -> &Event {
        &self.event
    }

    pub fn action(&self) -> Option<FunctionId> {
        self.action
    }

    pub fn guard(&self) -> &Guard {
        &self.guard
    }

    pub fn update(&self) -> &Update {
        &self.update
    }

    pub fn kinds(&self) -> TransitionKinds {
        TransitionKinds {
            navigation: self.action.is_none(),
            configuration: !self.update.is_empty(),
            function_execution: self.action.is_some(),
        }
    }
}

/// A search node: current state, variable valuation and how many targets
/// have been invoked so far.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub state: StateId,
    pub valuation: Valuation,
    pub achieved: usize,
}

/// A validated application model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Efsm {
    app_id: String,
    states: Vec<String>,
    initial: StateId,
    vars: Vec<VarDecl>,
    functions: Vec<PrimaryFunction>,
    transitions: Vec<Transition>,
}

impl Efsm {
    pub fn app_id(&self) -> &str {
        &self.app_id
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn vars(&self) -> &[VarDecl] {
        &self.vars
    }

    pub fn functions(&self) -> &[PrimaryFunction] {
        &self.functions
    }

    /// Transitions in source declaration order.
    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn state_name(&self, id: StateId) -> &str {
        &self.states[id.0]
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name).map(StateId)
    }

    pub fn function(&self, id: FunctionId) -> &PrimaryFunction {
        &self.functions[id.0]
    }

    pub fn function_id(&self, name: &str) -> Option<FunctionId> {
        self.functions.iter().position(|f| f.name == name).map(FunctionId)
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn transition(&self, id: &str) -> Option<(usize, &Transition)> {
        self.transitions.iter().enumerate().find(|(_, t)| t.id == id)
    }

    pub fn initial_valuation(&self) -> Valuation {
        Valuation(self.vars.iter().map(|v| v.initial).collect())
    }

    pub fn initial_configuration(&self) -> Configuration {
        Configuration {
            state: self.initial,
            valuation: self.initial_valuation(),
            achieved: 0,
        }
    }

    /// Number of distinct valuations, saturating.
    pub fn valuation_count(&self) -> u128 {
        self.vars
            .iter()
            .fold(1u128, |acc, v| acc.saturating_mul(v.domain.size() as u128))
    }

    /// Transitions that leave `state` and whose guard holds under
    /// `valuation`, with their declaration index, in declaration order.
    pub fn applicable<'a>(
        &'a self,
        state: StateId,
        valuation: &'a Valuation,
    ) -> impl Iterator<Item = (usize, &'a Transition)> + 'a {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.source == state && t.guard.eval(valuation))
    }

    pub fn lookup(&self, var: &str, valuation: &Valuation) -> Option<Literal> {
        let i = self.var_index(var)?;
        Some(self.vars[i].domain.literal(valuation.get(i)))
    }

    /// Renders a valuation as `{name: literal, ...}`.
    pub fn describe_valuation(&self, valuation: &Valuation) -> String {
        let parts: Vec<String> = self
            .vars
            .iter()
            .zip(valuation.indices())
            .map(|(v, &i)| format!("{}: {}", v.name, v.domain.literal(i)))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }

    pub fn valuation_map(&self, valuation: &Valuation) -> BTreeMap<String, Literal> {
        self.vars
            .iter()
            .zip(valuation.indices())
            .map(|(v, &i)| (v.name.clone(), v.domain.literal(i)))
            .collect()
    }

    /// Non-fatal findings: no primary functions, or a valuation space large
    /// enough to make solving slow.
    pub fn warnings(&self) -> Vec<Diagnostic> {
        let location = format!("app {}", self.app_id);
        let mut out = Vec::new();
        if self.functions.is_empty() {
            out.push(Diagnostic::new(
                Code::NoFunctions,
                location.clone(),
                "application declares no primary functions",
            ));
        }
        let count = self.valuation_count();
        if count > VALUATION_WARNING_THRESHOLD {
            out.push(Diagnostic::new(
                Code::LargeValuationSpace,
                location,
                format!("{count} distinct valuations; solving may be slow"),
            ));
        }
        out
    }
}

pub fn initial_configuration(machine: &Efsm) -> Configuration {
    machine.initial_configuration()
}

/// All application models, keyed by app id in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    machines: IndexMap<String, Efsm>,
}

impl KnowledgeBase {
    pub fn new(machines: Vec<Efsm>) -> Result<Self, Diagnostics> {
        let mut map = IndexMap::new();
        let mut diags = Vec::new();
        for m in machines {
            if map.contains_key(&m.app_id) {
                diags.push(Diagnostic::new(
                    Code::DuplicateName,
                    format!("app {}", m.app_id),
                    format!("application `{}` is defined more than once", m.app_id),
                ));
                continue;
            }
            map.insert(m.app_id.clone(), m);
        }
        if diags.is_empty() {
            Ok(Self { machines: map })
        } else {
            Err(Diagnostics(diags))
        }
    }

    pub fn get(&self, app_id: &str) -> Option<&Efsm> {
        self.machines.get(app_id)
    }

    pub fn machines(&self) -> impl Iterator<Item = &Efsm> {
        self.machines.values()
    }

    pub fn app_ids(&self) -> impl Iterator<Item = &str> {
        self.machines.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.machines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.machines.is_empty()
    }

    pub fn warnings(&self) -> Vec<Diagnostic> {
        self.machines().flat_map(Efsm::warnings).collect()
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Checker {
    diags: Vec<Diagnostic>,
}

impl Checker {
    fn report(&mut self, code: Code, location: String, message: String, span: Option<&SourceSpan>) {
        self.diags.push(Diagnostic::new(code, location, message).at(span));
    }

    fn report_duplicates<'s>(&mut self, kind: &str, names: impl Iterator<Item = &'s Spanned<String>>) {
        let mut seen = HashSet::new();
        for name in names {
            if !seen.insert(name.value.as_str()) {
                self.report(
                    Code::DuplicateName,
                    format!("{kind} {}", name.value),
                    format!("{kind} `{}` is declared more than once", name.value),
                    name.span.as_ref(),
                );
            }
        }
    }
}

fn resolve_literal(
    checker: &mut Checker,
    location: &str,
    var_name: &str,
    domain: &Domain,
    value: &Spanned<Literal>,
) -> Option<u8> {
    let index = domain.index_of(&value.value);
    if index.is_none() {
        let expected = match domain {
            Domain::Bool => "true or false".to_string(),
            Domain::Enum(values) => values.join(", "),
        };
        checker.report(
            Code::DomainMismatch,
            location.to_string(),
            format!(
                "`{}` is not in the domain of `{var_name}` (expected {expected})",
                value.value
            ),
            value.span.as_ref(),
        );
    }
    index
}

/// Checks every well-formedness rule and returns either the validated
/// machine or all violations found.
pub fn validate_efsm(raw: &RawMachine) -> Result<Efsm, Diagnostics> {
    let mut ck = Checker { diags: Vec::new() };
    let app_loc = format!("app {}", raw.app_id.value);

    // States and the initial marker.
    ck.report_duplicates("state", raw.states.iter());
    let state_index: HashMap<&str, usize> = raw
        .states
        .iter()
        .enumerate()
        .rev()
        .map(|(i, s)| (s.value.as_str(), i))
        .collect();
    let initial = match raw.initial.as_slice() {
        [] => {
            ck.report(
                Code::NoInitialState,
                app_loc.clone(),
                "no state is marked initial (mark exactly one with `*`)".into(),
                raw.app_id.span.as_ref(),
            );
            None
        }
        [only] => match state_index.get(only.value.as_str()) {
            Some(&i) => Some(StateId(i)),
            None => {
                ck.report(
                    Code::NoInitialState,
                    app_loc.clone(),
                    format!("initial state `{}` is not a declared state", only.value),
                    only.span.as_ref(),
                );
                None
            }
        },
        [_, extra @ ..] => {
            for e in extra {
                ck.report(
                    Code::NoInitialState,
                    app_loc.clone(),
                    format!("`{}` is marked initial but another state already is", e.value),
                    e.span.as_ref(),
                );
            }
            None
        }
    };

    // Variables.
    ck.report_duplicates("variable", raw.vars.iter().map(|v| &v.name));
    let mut vars = Vec::with_capacity(raw.vars.len());
    for v in &raw.vars {
        let loc = format!("variable {}", v.name.value);
        let domain = match &v.domain {
            RawDomain::Bool => Domain::Bool,
            RawDomain::Enum(values) => {
                ck.report_duplicates(&format!("literal of `{}`:", v.name.value), values.iter());
                if values.len() < 2 || values.len() > MAX_ENUM_VALUES {
                    let first = values.first().and_then(|l| l.span.as_ref());
                    ck.report(
                        Code::DomainMismatch,
                        loc.clone(),
                        format!(
                            "enumeration must have between 2 and {MAX_ENUM_VALUES} values, found {}",
                            values.len()
                        ),
                        first.or(v.name.span.as_ref()),
                    );
                }
                Domain::Enum(values.iter().map(|l| l.value.clone()).collect())
            }
        };
        let initial = resolve_literal(&mut ck, &loc, &v.name.value, &domain, &v.initial);
        vars.push(VarDecl {
            name: v.name.value.clone(),
            domain,
            initial: initial.unwrap_or(0),
        });
    }
    let var_index: HashMap<&str, usize> = vars
        .iter()
        .enumerate()
        .rev()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();

    // Functions.
    ck.report_duplicates("function", raw.functions.iter().map(|f| &f.name));
    let mut functions = Vec::with_capacity(raw.functions.len());
    for f in &raw.functions {
        ck.report_duplicates(&format!("parameter of `{}`:", f.name.value), f.params.iter());
        functions.push(PrimaryFunction {
            name: f.name.value.clone(),
            params: f.params.iter().map(|p| p.value.clone()).collect(),
            description: f.description.as_ref().map(|d| d.value.clone()).unwrap_or_default(),
        });
    }
    let function_index: HashMap<&str, usize> = functions
        .iter()
        .enumerate()
        .rev()
        .map(|(i, f)| (f.name.as_str(), i))
        .collect();

    // Transitions.
    ck.report_duplicates("transition", raw.transitions.iter().map(|t| &t.id));
    let mut transitions = Vec::with_capacity(raw.transitions.len());
    for t in &raw.transitions {
        let loc = format!("transition {}", t.id.value);
        let endpoint = |name: &Spanned<String>, role: &str, ck: &mut Checker| match state_index.get(name.value.as_str())
        {
            Some(&i) => StateId(i),
            None => {
                ck.report(
                    Code::UnknownState,
                    loc.clone(),
                    format!("{role} state `{}` is not declared", name.value),
                    name.span.as_ref(),
                );
                StateId(0)
            }
        };
        let source = endpoint(&t.source, "source", &mut ck);
        let target = endpoint(&t.target, "target", &mut ck);

        let mut atoms = Vec::new();
        for atom in &t.guard {
            match var_index.get(atom.var.value.as_str()) {
                None => ck.report(
                    Code::UnknownVar,
                    loc.clone(),
                    format!("guard refers to undeclared variable `{}`", atom.var.value),
                    atom.var.span.as_ref(),
                ),
                Some(&vi) => {
                    let domain = vars[vi].domain.clone();
                    if let Some(value) = resolve_literal(&mut ck, &loc, &atom.var.value, &domain, &atom.value) {
                        atoms.push(Atom {
                            var: vi,
                            cmp: atom.cmp,
                            value,
                        });
                    }
                }
            }
        }

        let mut assignments = Vec::new();
        let mut assigned = HashSet::new();
        for assign in &t.update {
            if !assigned.insert(assign.var.value.as_str()) {
                ck.report(
                    Code::DuplicateName,
                    loc.clone(),
                    format!("variable `{}` is assigned twice", assign.var.value),
                    assign.var.span.as_ref(),
                );
                continue;
            }
            match var_index.get(assign.var.value.as_str()) {
                None => ck.report(
                    Code::UnknownVar,
                    loc.clone(),
                    format!("update assigns undeclared variable `{}`", assign.var.value),
                    assign.var.span.as_ref(),
                ),
                Some(&vi) => {
                    let domain = vars[vi].domain.clone();
                    if let Some(value) = resolve_literal(&mut ck, &loc, &assign.var.value, &domain, &assign.value) {
                        assignments.push((vi, value));
                    }
                }
            }
        }

        // `None` when the action names an unknown function, so placeholder
        // checks are skipped rather than reported twice.
        let mut formals: Option<&[String]> = Some(&[]);
        let mut action = None;
        if let Some(a) = &t.action {
            match function_index.get(a.function.value.as_str()) {
                None => {
                    ck.report(
                        Code::UnknownFunction,
                        loc.clone(),
                        format!("action refers to undeclared function `{}`", a.function.value),
                        a.function.span.as_ref(),
                    );
                    formals = None;
                }
                Some(&fi) => {
                    action = Some(FunctionId(fi));
                    let params = &functions[fi].params;
                    formals = Some(params.as_slice());
                    if let Some(slots) = &a.slots {
                        let written: Vec<&str> = slots.iter().map(|s| s.value.as_str()).collect();
                        if written != params.iter().map(String::as_str).collect::<Vec<_>>() {
                            ck.report(
                                Code::BadPlaceholder,
                                loc.clone(),
                                format!(
                                    "`does {}({})` does not match its declared parameters ({})",
                                    a.function.value,
                                    written.join(", "),
                                    params.join(", ")
                                ),
                                a.function.span.as_ref(),
                            );
                        }
                    }
                }
            }
        }

        if t.event.value.trim().is_empty() {
            ck.report(
                Code::EmptyEvent,
                loc.clone(),
                "event text must not be empty".into(),
                t.event.span.as_ref(),
            );
        }
        match scan_placeholders(&t.event.value) {
            Err(msg) => ck.report(Code::BadPlaceholder, loc.clone(), msg, t.event.span.as_ref()),
            Ok(names) => {
                if let Some(formals) = formals {
                    for name in names {
                        if !formals.contains(&name) {
                            let why = if t.action.is_none() {
                                "the transition performs no function".to_string()
                            } else {
                                "it is not a parameter of the transition's function".to_string()
                            };
                            ck.report(
                                Code::BadPlaceholder,
                                loc.clone(),
                                format!("placeholder `{{{name}}}` cannot be bound: {why}"),
                                t.event.span.as_ref(),
                            );
                        }
                    }
                }
            }
        }

        transitions.push(Transition {
            id: t.id.value.clone(),
            source,
            target,
            event: Event {
                text: t.event.value.clone(),
            },
            action,
            guard: Guard::new(atoms),
            update: Update { assignments },
        });
    }

    let diags = ck.diags;
    if !diags.is_empty() {
        return Err(Diagnostics(diags));
    }
    Ok(Efsm {
        app_id: raw.app_id.value.clone(),
        states: raw.states.iter().map(|s| s.value.clone()).collect(),
        initial: initial.expect("initial state resolved when no diagnostics"),
        vars,
        functions,
        transitions,
    })
}

/// Validates every machine and assembles the knowledge base, reporting the
/// union of all diagnostics.
pub fn validate_all(raws: &[RawMachine]) -> Result<KnowledgeBase, Diagnostics> {
    let mut machines = Vec::new();
    let mut diags = Vec::new();
    for raw in raws {
        match validate_efsm(raw) {
            Ok(m) => machines.push(m),
            Err(d) => diags.extend(d),
        }
    }
    let mut seen = HashSet::new();
    for raw in raws {
        if !seen.insert(raw.app_id.value.as_str()) {
            diags.push(
                Diagnostic::new(
                    Code::DuplicateName,
                    format!("app {}", raw.app_id.value),
                    format!("application `{}` is defined more than once", raw.app_id.value),
                )
                .at(raw.app_id.span.as_ref()),
            );
        }
    }
    if !diags.is_empty() {
        return Err(Diagnostics(diags));
    }
    KnowledgeBase::new(machines)
}

impl Efsm {
    /// Converts back into an unvalidated description, used by the
    /// serializer. Action slots are always written out.
    pub fn to_raw(&self) -> RawMachine {
        let lit = |var: usize, value: u8| Spanned::bare(self.vars[var].domain.literal(value));
        RawMachine {
            app_id: Spanned::bare(self.app_id.clone()),
            vars: self
                .vars
                .iter()
                .map(|v| RawVar {
                    name: Spanned::bare(v.name.clone()),
                    domain: match &v.domain {
                        Domain::Bool => RawDomain::Bool,
                        Domain::Enum(values) => RawDomain::Enum(values.iter().cloned().map(Spanned::bare).collect()),
                    },
                    initial: Spanned::bare(v.initial()),
                })
                .collect(),
            states: self.states.iter().cloned().map(Spanned::bare).collect(),
            initial: vec![Spanned::bare(self.states[self.initial.0].clone())],
            functions: self
                .functions
                .iter()
                .map(|f| RawFunction {
                    name: Spanned::bare(f.name.clone()),
                    params: f.params.iter().cloned().map(Spanned::bare).collect(),
                    description: (!f.description.is_empty()).then(|| Spanned::bare(f.description.clone())),
                })
                .collect(),
            transitions: self
                .transitions
                .iter()
                .map(|t| RawTransition {
                    id: Spanned::bare(t.id.clone()),
                    source: Spanned::bare(self.states[t.source.0].clone()),
                    target: Spanned::bare(self.states[t.target.0].clone()),
                    event: Spanned::bare(t.event.text.clone()),
                    guard: t
                        .guard
                        .atoms
                        .iter()
                        .map(|a| RawAtom {
                            var: Spanned::bare(self.vars[a.var].name.clone()),
                            cmp: a.cmp,
                            value: lit(a.var, a.value),
                        })
                        .collect(),
                    update: t
                        .update
                        .assignments
                        .iter()
                        .map(|&(var, value)| RawAssign {
                            var: Spanned::bare(self.vars[var].name.clone()),
                            value: lit(var, value),
                        })
                        .collect(),
                    action: t.action.map(|f| {
                        let func = &self.functions[f.0];
                        RawAction {
                            function: Spanned::bare(func.name.clone()),
                            slots: (!func.params.is_empty())
                                .then(|| func.params.iter().cloned().map(Spanned::bare).collect()),
                        }
                    }),
                })
                .collect(),
        }
    }
}
