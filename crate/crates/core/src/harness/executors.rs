use crate::gateway::{ChatGateway, Message};
use crate::intent::Instruction;
use crate::plan::{parse_app_switch, Plan};
use crate::prompts;

use super::{DeviceAction, History, Observation};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("executor failed: {0}")]
pub struct ExecutorError(pub String);

/// Chooses the next device action.
pub trait Executor {
    fn next_action(
        &mut self,
        instruction: &Instruction,
        observation: &Observation,
        plan: &Plan,
        history: &History,
    ) -> Result<DeviceAction, ExecutorError>;
}

/// Follows a template plan literally: one action per plan step, matching
/// widgets by exact label.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleExecutor;

pub fn oracle_executor() -> OracleExecutor {
    OracleExecutor
}

impl Executor for OracleExecutor {
    fn next_action(
        &mut self,
        _instruction: &Instruction,
        observation: &Observation,
        plan: &Plan,
        history: &History,
    ) -> Result<DeviceAction, ExecutorError> {
        if plan.is_fallback() {
            return Ok(DeviceAction::infeasible());
        }
        let Some(step) = plan.steps.get(history.len()) else {
            return Ok(DeviceAction::complete());
        };
        if let Some(app) = parse_app_switch(&step.text) {
            return Ok(DeviceAction::open_app(app));
        }
        Ok(observation
            .widgets
            .iter()
            .find(|w| w.label == step.text)
            .map(|w| DeviceAction::click(w.id.clone()))
            .unwrap_or_else(DeviceAction::infeasible))
    }
}

/// Asks a chat model for each action. The reply's last line must be
/// `ACTION <action>`; an unusable reply gets one repair round, after which
/// the executor gives up with `status infeasible`.
pub struct VlmExecutor<G> {
    gateway: G,
}

pub fn vlm_executor<G: ChatGateway>(gateway: G) -> VlmExecutor<G> {
    VlmExecutor { gateway }
}

/// Extracts and checks the action on the reply's last non-blank line.
pub fn parse_action_reply(reply: &str, observation: &Observation) -> Result<DeviceAction, String> {
    let last = reply
        .lines()
        .map(str::trim)
        .rfind(|l| !l.is_empty())
        .ok_or("the reply was empty")?;
    let body = last
        .strip_prefix("ACTION ")
        .ok_or_else(|| format!("the last line `{last}` does not start with ACTION"))?;
    let action: DeviceAction = body.parse()?;
    if let Some(w) = action.widget() {
        if observation.widget(w).is_none() {
            return Err(format!("there is no widget `{w}` on the screen"));
        }
    }
    if let DeviceAction::OpenApp { app } = &action {
        if !observation.apps.contains(app) {
            return Err(format!("there is no app `{app}`"));
        }
    }
    Ok(action)
}

impl<G: ChatGateway> Executor for VlmExecutor<G> {
    fn next_action(
        &mut self,
        instruction: &Instruction,
        observation: &Observation,
        plan: &Plan,
        history: &History,
    ) -> Result<DeviceAction, ExecutorError> {
        let mut messages = prompts::executor_request(
            instruction.text(),
            &plan.numbered(),
            &history.render(),
            &observation.render(),
        );
        let Ok(first) = self.gateway.complete(&messages) else {
            return Ok(DeviceAction::infeasible());
        };
        let problem = match parse_action_reply(&first, observation) {
            Ok(a) => return Ok(a),
            Err(p) => p,
        };
        messages.push(Message::assistant(first));
        messages.push(Message::user(prompts::executor_repair(&problem)));
        let Ok(second) = self.gateway.complete(&messages) else {
            return Ok(DeviceAction::infeasible());
        };
        Ok(parse_action_reply(&second, observation).unwrap_or_else(|_| DeviceAction::infeasible()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{GatewayError, ScriptedGateway};
    use crate::harness::Widget;
    use crate::plan::render_fallback;

    fn screen() -> Observation {
        Observation {
            app: Some("camera".into()),
            state: Some("home".into()),
            widgets: vec![
                Widget {
                    id: "w0".into(),
                    label: "Tap the gear icon to open the camera settings.".into(),
                },
                Widget {
                    id: "w2".into(),
                    label: "Tap the shutter button.".into(),
                },
            ],
            apps: vec!["camera".into()],
            step: 1,
            error: None,
            terminal: false,
        }
    }

    fn run(gw: &ScriptedGateway) -> DeviceAction {
        let instr = Instruction::new("Take a photo").unwrap();
        vlm_executor(gw)
            .next_action(&instr, &screen(), &render_fallback(), &History::default())
            .unwrap()
    }

    #[test]
    fn prose_then_action_line() {
        let gw = ScriptedGateway::replies(["The shutter takes the photo.\n\nACTION click w2\n"]);
        assert_eq!(run(&gw), DeviceAction::click("w2"));
        assert_eq!(gw.requests().len(), 1);
    }

    #[test]
    fn absent_widget_twice_gives_up() {
        let gw = ScriptedGateway::replies(["ACTION click w7", "ACTION click w7"]);
        assert_eq!(run(&gw), DeviceAction::infeasible());
        let reqs = gw.requests();
        assert_eq!(reqs.len(), 2);
        assert!(reqs[1][3].content.contains("no widget `w7`"));
    }

    #[test]
    fn repair_can_succeed() {
        let gw = ScriptedGateway::replies(["I would tap the shutter.", "ACTION click w2"]);
        assert_eq!(run(&gw), DeviceAction::click("w2"));
    }

    #[test]
    fn gateway_error_gives_up() {
        let gw = ScriptedGateway::new([Err(GatewayError::Timeout)]);
        assert_eq!(run(&gw), DeviceAction::infeasible());
    }

    #[test]
    fn reply_validation() {
        let obs = screen();
        assert!(parse_action_reply("ACTION open_app gallery", &obs).is_err());
        assert!(parse_action_reply("ACTION click w2\nthanks", &obs).is_err());
        assert_eq!(
            parse_action_reply("ACTION status complete", &obs),
            Ok(DeviceAction::complete())
        );
    }

    #[test]
    fn oracle_mismatch_is_infeasible() {
        let mut plan = render_fallback();
        plan.steps[0].provenance = crate::plan::Provenance::Polished;
        plan.steps[0].text = "Tap the zoom slider.".into();
        let instr = Instruction::new("x").unwrap();
        let a = oracle_executor()
            .next_action(&instr, &screen(), &plan, &History::default())
            .unwrap();
        assert_eq!(a, DeviceAction::infeasible());
        let mut home = screen();
        home.widgets.clear();
        plan.steps[0].text = "Tap the shutter button.".into();
        let a = oracle_executor()
            .next_action(&instr, &home, &plan, &History::default())
            .unwrap();
        assert_eq!(a, DeviceAction::infeasible());
    }
}
