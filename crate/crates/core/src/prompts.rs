//! Prompt text sent to chat models. Changing any of it changes request
//! digests, so recorded transcripts must be regenerated; bump
//! [`PROMPT_VERSION`] when that happens.

use crate::gateway::Message;

pub const PROMPT_VERSION: &str = "splanner-prompts/1";

const PARSE_SYSTEM: &str = "\
You turn a smartphone user's instruction into the app functions it needs.
Use only the apps and functions listed below, with exactly the listed
parameter names. Reply with lines of this form and nothing else:

APP <app id>
CALL <function> <param>=<value> ...

Put every CALL under the APP it belongs to, in the order the user wants
them done. Quote values that contain spaces, e.g. name=\"Bob Smith\".";

pub fn parse_request(instruction: &str, catalog: &str) -> Vec<Message> {
    vec![
        Message::system(format!("{PARSE_SYSTEM}\n\nAvailable functions:\n{catalog}")),
        Message::user(format!("Instruction: {instruction}")),
    ]
}

pub fn parse_repair(problems: &[String]) -> String {
    let mut out = String::from("Your reply could not be used:\n");
    for p in problems {
        out.push_str(&format!("- {p}\n"));
    }
    out.push_str("Reply again using only APP and CALL lines.");
    out
}

const POLISH_SYSTEM: &str = "\
You edit step-by-step plans for operating a smartphone. Make the wording
clearer without changing what any step does. Keep the steps in order and
do not drop any. Reply only with numbered lines: `1. ...`, `2. ...`.";

pub fn polish_request(instruction: &str, numbered_steps: &str) -> Vec<Message> {
    vec![
        Message::system(POLISH_SYSTEM),
        Message::user(format!("Task: {instruction}\n\nPlan:\n{numbered_steps}")),
    ]
}

const EXECUTOR_SYSTEM: &str = "\
You operate a smartphone to complete a task. Each turn you see the screen
as a list of widgets. Think briefly if you like, then end your reply with
one line naming the next action:

ACTION click <widget id>
ACTION long_press <widget id>
ACTION input_text <widget id> <text>
ACTION swipe <up|down|left|right>
ACTION open_app <app id>
ACTION status complete
ACTION status infeasible";

pub fn executor_request(task: &str, plan: &str, history: &str, screen: &str) -> Vec<Message> {
    let mut user = format!("Task: {task}\n\nPlan:\n{plan}\n");
    if !history.is_empty() {
        user.push_str(&format!("\nActions so far:\n{history}\n"));
    }
    user.push_str(&format!("\nScreen:\n{screen}"));
    vec![Message::system(EXECUTOR_SYSTEM), Message::user(user)]
}

pub fn executor_repair(problem: &str) -> String {
    format!("{problem}\nEnd your reply with exactly one line starting with ACTION.")
}
