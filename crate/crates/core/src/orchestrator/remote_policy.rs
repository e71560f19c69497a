//! Policy backed by a chat model. The model sees only text: the task, the
//! action list, a worked example and the running goal transcript.

use crate::remote::{ChatClient, ChatMessage, TransportError};

use super::actions::{parse_thought_action, Action, ThoughtAction, SCHEMA};
use super::episode::{ContextEntry, GoalInfo, Policy, PolicyError, PolicyView};

/// Re-asks after an unparsable reply before falling back to a clarifying talk.
pub const PARSE_RETRIES: usize = 3;
/// Context entries kept in the prompt, newest last.
const HISTORY_LIMIT: usize = 80;

const TASK: &str = "You control a home robot that finds personal objects for its user. \
The user names a goal such as \"Alice's computer\"; several objects of the same kind may exist and only the user knows which is theirs. \
At every step reply with exactly one JSON object {\"Thought\": \"...\", \"Action\": {\"name\": \"...\", \"args\": {...}}}. \
Each action's result is returned as \"Function Return\". Use talk to ask the user to confirm when you stand next to a likely goal, \
and use what the user says to decide what to do next. Object ids look like \"obj_3\"; distances are meters and angles degrees, positive to the left.";

const EXAMPLE: &str = r#"Here is an example to perform sequential actions:
User Utterance: Find Alice's computer.
{"Thought":"The user wants Alice's computer, I should first search the memory to see if I found it before","Action":{"name":"retrieve_memory","args":{"query":"Alice's computer"}}}
Function Return: Found 0 items in memory: []
{"Thought":"I found a possible computer in the room, it might be the correct one, I shall ask the user","Action":{"name":"talk","args":{"content":"Is this Alice's computer?"}}}
Robot Response: Is this Alice's computer?
User Utterance: No, it's Bob's computer. Keep searching"#;

fn action_list() -> String {
    let mut out = String::from("Available actions:\n");
    for (name, required, optional, what) in SCHEMA {
        let mut args: Vec<String> = required.iter().map(|a| a.to_string()).collect();
        args.extend(optional.iter().map(|a| format!("{a}?")));
        out.push_str(&format!("- {name}({}): {what}\n", args.join(", ")));
    }
    out
}

/// Renders the goal transcript in the prompt's labelled line format.
pub fn render_context(context: &[ContextEntry]) -> String {
    let skip = context.len().saturating_sub(HISTORY_LIMIT);
    let mut out = String::new();
    for entry in &context[skip..] {
        match entry {
            ContextEntry::User(text) => out.push_str(&format!("User Utterance: {text}\n")),
            ContextEntry::Function(text) => out.push_str(&format!("Function Return: {text}\n")),
            ContextEntry::Robot(ta) => {
                out.push_str(&ta.to_json().to_string());
                out.push('\n');
                if let Action::Talk { content } = &ta.action {
                    out.push_str(&format!("Robot Response: {content}\n"));
                }
            }
        }
    }
    out
}

pub struct RemotePolicy<C: ChatClient> {
    client: C,
    system: String,
    /// Requests sent so far, across goals.
    pub requests: usize,
}

impl<C: ChatClient> RemotePolicy<C> {
    pub fn new(client: C) -> Self {
        Self { client, system: format!("{TASK}\n\n{}\n{EXAMPLE}", action_list()), requests: 0 }
    }

    fn ask(&mut self, messages: &[ChatMessage]) -> Result<String, TransportError> {
        self.requests += 1;
        self.client.complete(messages)
    }
}

impl<C: ChatClient> Policy for RemotePolicy<C> {
    fn begin_goal(&mut self, _goal: &GoalInfo) {}

    fn next_action(&mut self, view: &PolicyView<'_>) -> Result<ThoughtAction, PolicyError> {
        let mut prompt = render_context(view.context);
        if view.wrap_up {
            prompt.push_str("The user confirmed the goal. You may store it with update_memory; any other action ends the task.\n");
        }
        let mut messages = vec![ChatMessage::new("system", self.system.clone()), ChatMessage::new("user", prompt)];
        for _ in 0..=PARSE_RETRIES {
            let reply = self.ask(&messages).map_err(|e| PolicyError::Transport(e.to_string()))?;
            match parse_thought_action(&reply) {
                Ok(ta) => return Ok(ta),
                Err(e) => {
                    messages.push(ChatMessage::new("assistant", reply));
                    messages.push(ChatMessage::new("user", format!("That reply could not be used: {e}. Reply with one JSON object only.")));
                }
            }
        }
        Ok(ThoughtAction::new("The replies could not be parsed.", Action::Talk { content: "Could you clarify?".into() }))
    }
}
