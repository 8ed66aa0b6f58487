//! Simulated device whose apps are EFSM instances.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{Configuration, Efsm, KnowledgeBase};

use super::GoalSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Complete,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceAction {
    Click { widget: String },
    LongPress { widget: String },
    InputText { widget: String, text: String },
    Swipe { direction: Direction },
    OpenApp { app: String },
    Status { status: TaskStatus },
}

impl DeviceAction {
    pub fn click(widget: impl Into<String>) -> Self {
        DeviceAction::Click { widget: widget.into() }
    }

    pub fn open_app(app: impl Into<String>) -> Self {
        DeviceAction::OpenApp { app: app.into() }
    }

    pub fn complete() -> Self {
        DeviceAction::Status {
            status: TaskStatus::Complete,
        }
    }

    pub fn infeasible() -> Self {
        DeviceAction::Status {
            status: TaskStatus::Infeasible,
        }
    }

    pub fn widget(&self) -> Option<&str> {
        match self {
            DeviceAction::Click { widget }
            | DeviceAction::LongPress { widget }
            | DeviceAction::InputText { widget, .. } => Some(widget),
            _ => None,
        }
    }
}

/// `click w3`, `input_text w3 some text`, `status complete`, ...
impl fmt::Display for DeviceAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceAction::Click { widget } => write!(f, "click {widget}"),
            DeviceAction::LongPress { widget } => write!(f, "long_press {widget}"),
            DeviceAction::InputText { widget, text } => write!(f, "input_text {widget} {text}"),
            DeviceAction::Swipe { direction } => {
                let d = match direction {
                    Direction::Up => "up",
                    Direction::Down => "down",
                    Direction::Left => "left",
                    Direction::Right => "right",
                };
                write!(f, "swipe {d}")
            }
            DeviceAction::OpenApp { app } => write!(f, "open_app {app}"),
            DeviceAction::Status { status } => match status {
                TaskStatus::Complete => f.write_str("status complete"),
                TaskStatus::Infeasible => f.write_str("status infeasible"),
            },
        }
    }
}

impl FromStr for DeviceAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (kind, rest) = s.split_once(char::is_whitespace).unwrap_or((s, ""));
        let rest = rest.trim();
        let one = |what: &str| -> Result<String, String> {
            if rest.is_empty() || rest.contains(char::is_whitespace) {
                Err(format!("`{kind}` takes exactly one {what}"))
            } else {
                Ok(rest.to_string())
            }
        };
        match kind {
            "click" => Ok(DeviceAction::Click {
                widget: one("widget id")?,
            }),
            "long_press" => Ok(DeviceAction::LongPress {
                widget: one("widget id")?,
            }),
            "input_text" => {
                let (widget, text) = rest
                    .split_once(char::is_whitespace)
                    .ok_or("`input_text` takes a widget id and some text")?;
                Ok(DeviceAction::InputText {
                    widget: widget.to_string(),
                    text: text.trim().to_string(),
                })
            }
            "swipe" => {
                let direction = match rest {
                    "up" => Direction::Up,
                    "down" => Direction::Down,
                    "left" => Direction::Left,
                    "right" => Direction::Right,
                    _ => return Err(format!("unknown swipe direction `{rest}`")),
                };
                Ok(DeviceAction::Swipe { direction })
            }
            "open_app" => Ok(DeviceAction::OpenApp { app: one("app id")? }),
            "status" => match rest {
                "complete" => Ok(DeviceAction::complete()),
                "infeasible" => Ok(DeviceAction::infeasible()),
                _ => Err(format!("unknown status `{rest}`")),
            },
            _ => Err(format!("unknown action `{kind}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widget {
    pub id: String,
    pub label: String,
}

/// What the executor sees after each step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    /// Foreground app; `None` on the home screen.
    pub app: Option<String>,
    pub state: Option<String>,
    pub widgets: Vec<Widget>,
    /// Installed apps, in knowledge-base order.
    pub apps: Vec<String>,
    pub step: usize,
    pub error: Option<String>,
    pub terminal: bool,
}

impl Observation {
    pub fn is_home(&self) -> bool {
        self.app.is_none()
    }

    pub fn widget(&self, id: &str) -> Option<&Widget> {
        self.widgets.iter().find(|w| w.id == id)
    }

    /// Short content hash for traces.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("observation serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    /// Plain-text screen description for prompts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        match &self.app {
            None => out.push_str(&format!("Home screen. Installed apps: {}\n", self.apps.join(", "))),
            Some(app) => {
                out.push_str(&format!("App: {app}\n"));
                if self.widgets.is_empty() {
                    out.push_str("No widgets.\n");
                }
                for w in &self.widgets {
                    out.push_str(&format!("{}: {}\n", w.id, w.label));
                }
            }
        }
        if let Some(e) = &self.error {
            out.push_str(&format!("Last action failed: {e}\n"));
        }
        out
    }
}

pub fn widget_id(transition_index: usize) -> String {
    format!("w{transition_index}")
}

fn parse_widget_id(id: &str) -> Option<usize> {
    let n = id.strip_prefix('w')?;
    if n.starts_with('+') {
        return None;
    }
    n.parse().ok()
}

/// A function the device actually performed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InvokedCall {
    pub app: String,
    pub function: String,
    pub args: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvError {
    #[error("NO_FOREGROUND_APP: `{0}` needs an app in the foreground")]
    NoForegroundApp(String),
    #[error("EPISODE_TERMINATED: no actions are accepted after a status action")]
    Terminated,
}

impl EnvError {
    pub fn code(&self) -> &'static str {
        match self {
            EnvError::NoForegroundApp(_) => "NO_FOREGROUND_APP",
            EnvError::Terminated => "EPISODE_TERMINATED",
        }
    }
}

type BindingQueues = HashMap<(String, String), VecDeque<BTreeMap<String, String>>>;

/// One simulated phone. Each app keeps its own configuration while in the
/// background. Arguments for parameterised functions come from the goal:
/// each `(app, function)` pair consumes the goal's argument sets in order.
#[derive(Debug, Clone)]
pub struct Environment<'a> {
    machines: Vec<&'a Efsm>,
    goal: GoalSpec,
    configs: Vec<Configuration>,
    foreground: Option<usize>,
    bindings: BindingQueues,
    invoked: Vec<InvokedCall>,
    step: usize,
    terminal: bool,
    error: Option<String>,
}

impl<'a> Environment<'a> {
    pub fn new(kb: &'a KnowledgeBase, goal: &GoalSpec) -> Self {
        let machines: Vec<&Efsm> = kb.machines().collect();
        let mut env = Self {
            configs: machines.iter().map(|m| m.initial_configuration()).collect(),
            machines,
            goal: goal.clone(),
            foreground: None,
            bindings: HashMap::new(),
            invoked: Vec::new(),
            step: 0,
            terminal: false,
            error: None,
        };
        env.reset();
        env
    }

    pub fn goal(&self) -> &GoalSpec {
        &self.goal
    }

    pub fn reset(&mut self) -> Observation {
        self.configs = self.machines.iter().map(|m| m.initial_configuration()).collect();
        self.foreground = None;
        self.bindings.clear();
        for call in &self.goal.calls {
            self.bindings
                .entry((call.app.clone(), call.function.clone()))
                .or_default()
                .push_back(call.args.clone());
        }
        self.invoked.clear();
        self.step = 0;
        self.terminal = false;
        self.error = None;
        self.observe()
    }

    pub fn invoked(&self) -> &[InvokedCall] {
        &self.invoked
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    /// Current configuration of an app.
    pub fn configuration(&self, app_id: &str) -> Option<&Configuration> {
        let i = self.machines.iter().position(|m| m.app_id() == app_id)?;
        Some(&self.configs[i])
    }

    fn next_binding(&self, app: &str, function: &str) -> Option<&BTreeMap<String, String>> {
        self.bindings
            .get(&(app.to_string(), function.to_string()))
            .and_then(|q| q.front())
    }

    pub fn observe(&self) -> Observation {
        let mut obs = Observation {
            app: None,
            state: None,
            widgets: Vec::new(),
            apps: self.machines.iter().map(|m| m.app_id().to_string()).collect(),
            step: self.step,
            error: self.error.clone(),
            terminal: self.terminal,
        };
        let Some(fg) = self.foreground else {
            return obs;
        };
        let m = self.machines[fg];
        let c = &self.configs[fg];
        obs.app = Some(m.app_id().to_string());
        obs.state = Some(m.state_name(c.state).to_string());
        if self.terminal {
            return obs;
        }
        let empty = BTreeMap::new();
        for (ti, t) in m.applicable(c.state, &c.valuation) {
            let args = t
                .action()
                .and_then(|f| self.next_binding(m.app_id(), m.function(f).name()))
                .unwrap_or(&empty);
            obs.widgets.push(Widget {
                id: widget_id(ti),
                label: t.event().resolve(args),
            });
        }
        obs
    }

    pub fn step(&mut self, action: &DeviceAction) -> Result<Observation, EnvError> {
        if self.terminal {
            return Err(EnvError::Terminated);
        }
        if let Some(w) = action.widget() {
            if self.foreground.is_none() {
                return Err(EnvError::NoForegroundApp(action.to_string()));
            }
            self.error = self.fire(w, action).err();
        } else {
            self.error = None;
            match action {
                DeviceAction::OpenApp { app } => match self.machines.iter().position(|m| m.app_id() == app) {
                    Some(i) => self.foreground = Some(i),
                    None => self.error = Some(format!("no app named `{app}` is installed")),
                },
                DeviceAction::Status { .. } => self.terminal = true,
                _ => {}
            }
        }
        self.step += 1;
        Ok(self.observe())
    }

    fn fire(&mut self, widget: &str, action: &DeviceAction) -> Result<(), String> {
        let fg = self.foreground.expect("checked by caller");
        let m = self.machines[fg];
        let ti = parse_widget_id(widget)
            .filter(|&i| i < m.transitions().len())
            .ok_or_else(|| format!("no widget `{widget}` on this screen"))?;
        let t = &m.transitions()[ti];
        let c = &self.configs[fg];
        if t.source() != c.state || !t.guard().eval(&c.valuation) {
            return Err(format!("widget `{widget}` is not available here"));
        }
        if let Some(f) = t.action() {
            let func = m.function(f);
            let key = (m.app_id().to_string(), func.name().to_string());
            let mut args = self
                .bindings
                .get_mut(&key)
                .and_then(VecDeque::pop_front)
                .unwrap_or_default();
            if let (DeviceAction::InputText { text, .. }, [param]) = (action, func.params()) {
                args = BTreeMap::from([(param.clone(), text.clone())]);
            }
            self.invoked.push(InvokedCall {
                app: key.0,
                function: key.1,
                args,
            });
        }
        let c = &mut self.configs[fg];
        c.valuation = t.update().apply(&c.valuation);
        c.state = t.target();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::load_str;
    use std::path::Path;

    fn camera() -> KnowledgeBase {
        load_str(Path::new("camera.efsm"), include_str!("../../fixtures/camera.efsm")).unwrap()
    }

    type CallSpec<'a> = (&'a str, &'a str, &'a [(&'a str, &'a str)]);

    fn goal(calls: &[CallSpec<'_>]) -> GoalSpec {
        GoalSpec {
            calls: calls
                .iter()
                .map(|(a, f, args)| InvokedCall {
                    app: a.to_string(),
                    function: f.to_string(),
                    args: args.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn reset_is_home_and_idempotent() {
        let kb = camera();
        let mut env = Environment::new(&kb, &GoalSpec::default());
        let a = env.observe();
        assert!(a.is_home());
        assert!(a.widgets.is_empty());
        assert!(env.invoked().is_empty());
        env.step(&DeviceAction::open_app("camera")).unwrap();
        let b = env.reset();
        assert_eq!(a, b);
        assert_eq!(b, env.reset());
    }

    #[test]
    fn take_photo_through_the_device() {
        let kb = camera();
        let mut env = Environment::new(&kb, &goal(&[("camera", "take_photo", &[])]));
        let obs = env.step(&DeviceAction::open_app("camera")).unwrap();
        let labels: Vec<&str> = obs.widgets.iter().map(|w| w.label.as_str()).collect();
        assert_eq!(
            labels,
            [
                "Tap the gear icon to open the camera settings.",
                "Tap the shutter button."
            ]
        );
        assert_eq!(obs.widgets[1].id, "w2");
        env.step(&DeviceAction::click("w2")).unwrap();
        assert_eq!(
            env.invoked(),
            [InvokedCall {
                app: "camera".into(),
                function: "take_photo".into(),
                args: BTreeMap::new()
            }]
        );
    }

    #[test]
    fn labels_bind_goal_arguments_in_order() {
        let kb = camera();
        let g = goal(&[
            ("camera", "record_video", &[("duration", "5s")]),
            ("camera", "record_video", &[("duration", "9s")]),
        ]);
        let mut env = Environment::new(&kb, &g);
        for a in ["open_app camera", "click w0", "click w1", "click w4"] {
            env.step(&a.parse().unwrap()).unwrap();
        }
        let obs = env.observe();
        assert!(obs.widget("w3").unwrap().label.contains("5s"));
        env.step(&DeviceAction::click("w3")).unwrap();
        assert!(env.observe().widget("w3").unwrap().label.contains("9s"));
        env.step(&DeviceAction::InputText {
            widget: "w3".into(),
            text: "12s".into(),
        })
        .unwrap();
        let durations: Vec<&str> = env.invoked().iter().map(|c| c.args["duration"].as_str()).collect();
        assert_eq!(durations, ["5s", "12s"]);
    }

    #[test]
    fn errors_and_flags() {
        let kb = camera();
        let mut env = Environment::new(&kb, &GoalSpec::default());
        assert_eq!(
            env.step(&DeviceAction::click("w2")),
            Err(EnvError::NoForegroundApp("click w2".into()))
        );
        env.step(&DeviceAction::open_app("camera")).unwrap();
        let before = env.configuration("camera").unwrap().clone();
        // t4 needs video mode, which is off
        let obs = env.step(&DeviceAction::click("w3")).unwrap();
        assert!(obs.error.is_some());
        assert_eq!(env.configuration("camera").unwrap(), &before);
        let obs = env.step(&DeviceAction::click("w99")).unwrap();
        assert!(obs.error.is_some());
        let obs = env
            .step(&DeviceAction::Swipe {
                direction: Direction::Up,
            })
            .unwrap();
        assert!(obs.error.is_none());
        assert_eq!(obs.step, 4);
        let obs = env.step(&DeviceAction::open_app("gallery")).unwrap();
        assert!(obs.error.is_some());
        let obs = env.step(&DeviceAction::complete()).unwrap();
        assert!(obs.terminal && obs.widgets.is_empty());
        assert_eq!(env.step(&DeviceAction::complete()), Err(EnvError::Terminated));
    }

    #[test]
    fn action_text_round_trip() {
        for s in [
            "click w3",
            "long_press w0",
            "input_text w1 Bob Smith",
            "swipe left",
            "open_app camera",
            "status complete",
            "status infeasible",
        ] {
            let a: DeviceAction = s.parse().unwrap();
            assert_eq!(a.to_string(), s);
        }
        for bad in [
            "tap w3",
            "click",
            "click w1 w2",
            "swipe sideways",
            "status done",
            "input_text w1",
        ] {
            assert!(bad.parse::<DeviceAction>().is_err(), "{bad}");
        }
    }
}
