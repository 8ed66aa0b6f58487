//! Breadth-first search for minimal execution paths.
//!
//! A search node is a [`Configuration`]: the current state, the variable
//! valuation, and how many of the requested target functions have been
//! invoked so far. A transition that performs a primary function may only
//! be taken when that function is the next pending target, so a returned
//! path invokes exactly the requested functions, in order, and nothing else.
//!
//! Frontier expansion visits transitions in declaration order and the first
//! goal configuration generated wins. The result is therefore the
//! lexicographically smallest (by transition declaration index) among all
//! minimum-length paths, which makes plans reproducible.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::Serialize;

use crate::intent::ParsedIntent;
use crate::model::{Configuration, Efsm, FunctionId, KnowledgeBase, Valuation};

/// Default ceiling on states × valuations × (targets + 1).
pub const DEFAULT_MAX_CONFIGURATIONS: u128 = 1_000_000;

/// One requested function invocation with its bound arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Target {
    pub function: String,
    pub args: BTreeMap<String, String>,
}

impl Target {
    pub fn new(function: impl Into<String>) -> Self {
        Self {
            function: function.into(),
            args: BTreeMap::new(),
        }
    }

    pub fn arg(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.args.insert(name.into(), value.into());
        self
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{}({})", self.function, args.join(", "))
    }
}

/// The ordered functions one app must perform. Duplicates are allowed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
pub struct TargetSequence(pub Vec<Target>);

impl TargetSequence {
    pub fn new(targets: Vec<Target>) -> Self {
        Self(targets)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Target> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<Target> for TargetSequence {
    fn from_iter<I: IntoIterator<Item = Target>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// A function actually performed along a path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Invocation {
    pub function: String,
    pub args: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathStep {
    pub transition_id: String,
    /// Declaration index of the transition within its app.
    pub transition_index: usize,
    /// Event text with placeholders replaced by bound arguments.
    pub event: String,
    pub source: String,
    pub target: String,
    pub action: Option<Invocation>,
    pub valuation: Valuation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExecutionPath {
    pub app_id: String,
    pub steps: Vec<PathStep>,
}

impl ExecutionPath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn transition_ids(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.transition_id.as_str()).collect()
    }

    pub fn invocations(&self) -> impl Iterator<Item = &Invocation> {
        self.steps.iter().filter_map(|s| s.action.as_ref())
    }
}

impl fmt::Display for Invocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{}({})", self.function, args.join(", "))
    }
}

/// Text listing of a solve result, one line per step:
/// `1. t3 (home -> home) Tap the shutter button. => take_photo()`.
pub fn path_listing(result: &Feasibility<ExecutionPath>) -> String {
    let path = match result {
        Feasibility::Infeasible => return "infeasible: no execution path performs the targets in order\n".into(),
        Feasibility::Feasible(p) => p,
    };
    if path.is_empty() {
        return "empty path (goal already satisfied)\n".into();
    }
    let mut out = String::new();
    for (i, s) in path.steps.iter().enumerate() {
        out.push_str(&format!(
            "{}. {} ({} -> {}) {}",
            i + 1,
            s.transition_id,
            s.source,
            s.target,
            s.event
        ));
        if let Some(a) = &s.action {
            out.push_str(&format!(" => {a}"));
        }
        out.push('\n');
    }
    out
}

/// Per-app segments in intent order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GlobalPath {
    pub segments: Vec<ExecutionPath>,
}

impl GlobalPath {
    pub fn step_count(&self) -> usize {
        self.segments.iter().map(ExecutionPath::len).sum()
    }
}

/// Either a path, or the statement that none exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Feasibility<T> {
    Feasible(T),
    Infeasible,
}

impl<T> Feasibility<T> {
    pub fn feasible(&self) -> Option<&T> {
        match self {
            Feasibility::Feasible(t) => Some(t),
            Feasibility::Infeasible => None,
        }
    }

    pub fn into_feasible(self) -> Option<T> {
        match self {
            Feasibility::Feasible(t) => Some(t),
            Feasibility::Infeasible => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Feasibility::Infeasible)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolveError {
    #[error("UNKNOWN_APP: no application `{0}` in the knowledge base")]
    UnknownApp(String),
    #[error("UNKNOWN_FUNCTION: application `{app}` has no function `{function}`")]
    UnknownFunction { app: String, function: String },
    #[error("BAD_ARGUMENTS: `{function}` takes ({}) but was given ({})", expected.join(", "), given.join(", "))]
    BadArguments {
        function: String,
        expected: Vec<String>,
        given: Vec<String>,
    },
    #[error("CONFIG_SPACE_EXCEEDED: {size} configurations exceed the limit of {limit}")]
    ConfigSpaceExceeded { size: u128, limit: u128 },
}

/// Checks that every target names a function of `machine` and binds exactly
/// its formal parameters.
pub fn check_targets(machine: &Efsm, targets: &TargetSequence) -> Result<Vec<FunctionId>, SolveError> {
    targets
        .iter()
        .map(|t| {
            let id = machine
                .function_id(&t.function)
                .ok_or_else(|| SolveError::UnknownFunction {
                    app: machine.app_id().to_string(),
                    function: t.function.clone(),
                })?;
            let mut expected: Vec<String> = machine.function(id).params().to_vec();
            expected.sort();
            let given: Vec<String> = t.args.keys().cloned().collect();
            if expected != given {
                return Err(SolveError::BadArguments {
                    function: t.function.clone(),
                    expected,
                    given,
                });
            }
            Ok(id)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Solver {
    pub max_configurations: u128,
}

impl Default for Solver {
    fn default() -> Self {
        Self {
            max_configurations: DEFAULT_MAX_CONFIGURATIONS,
        }
    }
}

impl Solver {
    pub fn with_limit(max_configurations: u128) -> Self {
        Self { max_configurations }
    }

    pub fn solve(&self, machine: &Efsm, targets: &TargetSequence) -> Result<Feasibility<ExecutionPath>, SolveError> {
        let wanted = check_targets(machine, targets)?;
        let size = (machine.states().len() as u128)
            .saturating_mul(machine.valuation_count())
            .saturating_mul(targets.len() as u128 + 1);
        if size > self.max_configurations {
            return Err(SolveError::ConfigSpaceExceeded {
                size,
                limit: self.max_configurations,
            });
        }

        let k = wanted.len();
        let start = machine.initial_configuration();
        if k == 0 {
            return Ok(Feasibility::Feasible(ExecutionPath {
                app_id: machine.app_id().to_string(),
                steps: Vec::new(),
            }));
        }

        // Arena of discovered configurations with (parent node, transition).
        let mut nodes: Vec<(Configuration, Option<(usize, usize)>)> = vec![(start.clone(), None)];
        let mut visited: HashMap<Configuration, usize> = HashMap::from([(start, 0)]);
        let mut frontier = VecDeque::from([0usize]);

        while let Some(n) = frontier.pop_front() {
            let current = nodes[n].0.clone();
            for (ti, t) in machine.applicable(current.state, &current.valuation) {
                let achieved = match t.action() {
                    None => current.achieved,
                    Some(f) if current.achieved < k && wanted[current.achieved] == f => current.achieved + 1,
                    Some(_) => continue,
                };
                let next = Configuration {
                    state: t.target(),
                    valuation: t.update().apply(&current.valuation),
                    achieved,
                };
                if visited.contains_key(&next) {
                    continue;
                }
                let id = nodes.len();
                visited.insert(next.clone(), id);
                nodes.push((next, Some((n, ti))));
                if achieved == k {
                    let mut chain = Vec::new();
                    let mut at = id;
                    while let Some((parent, ti)) = nodes[at].1 {
                        chain.push(ti);
                        at = parent;
                    }
                    chain.reverse();
                    return Ok(Feasibility::Feasible(build_path(machine, targets, &chain)));
                }
                frontier.push_back(id);
            }
        }
        Ok(Feasibility::Infeasible)
    }

    /// Solves each intent entry against its app and concatenates the
    /// segments. Infeasible if any segment is.
    pub fn solve_all(&self, kb: &KnowledgeBase, intent: &ParsedIntent) -> Result<Feasibility<GlobalPath>, SolveError> {
        let mut machines = Vec::with_capacity(intent.entries.len());
        for entry in &intent.entries {
            let m = kb
                .get(&entry.app_id)
                .ok_or_else(|| SolveError::UnknownApp(entry.app_id.clone()))?;
            machines.push(m);
        }
        let mut segments = Vec::with_capacity(machines.len());
        let mut infeasible = false;
        for (m, entry) in machines.into_iter().zip(&intent.entries) {
            match self.solve(m, &entry.targets)? {
                Feasibility::Feasible(p) => segments.push(p),
                Feasibility::Infeasible => infeasible = true,
            }
        }
        if infeasible {
            Ok(Feasibility::Infeasible)
        } else {
            Ok(Feasibility::Feasible(GlobalPath { segments }))
        }
    }
}

/// Materialises a transition-index chain into path steps, binding each
/// function-performing step to the arguments of the target it satisfies.
fn build_path(machine: &Efsm, targets: &TargetSequence, chain: &[usize]) -> ExecutionPath {
    let mut valuation = machine.initial_valuation();
    let mut achieved = 0;
    let no_args = BTreeMap::new();
    let steps = chain
        .iter()
        .map(|&ti| {
            let t = &machine.transitions()[ti];
            valuation = t.update().apply(&valuation);
            let (action, args) = match t.action() {
                Some(f) => {
                    let target = &targets.0[achieved];
                    achieved += 1;
                    let inv = Invocation {
                        function: machine.function(f).name().to_string(),
                        args: target.args.clone(),
                    };
                    (Some(inv), &target.args)
                }
                None => (None, &no_args),
            };
            PathStep {
                transition_id: t.id().to_string(),
                transition_index: ti,
                event: t.event().resolve(args),
                source: machine.state_name(t.source()).to_string(),
                target: machine.state_name(t.target()).to_string(),
                action,
                valuation: valuation.clone(),
            }
        })
        .collect();
    ExecutionPath {
        app_id: machine.app_id().to_string(),
        steps,
    }
}

/// [`Solver::solve`] with the default configuration ceiling.
pub fn solve(machine: &Efsm, targets: &TargetSequence) -> Result<Feasibility<ExecutionPath>, SolveError> {
    Solver::default().solve(machine, targets)
}

/// [`Solver::solve_all`] with the default configuration ceiling.
pub fn solve_all(kb: &KnowledgeBase, intent: &ParsedIntent) -> Result<Feasibility<GlobalPath>, SolveError> {
    Solver::default().solve_all(kb, intent)
}
