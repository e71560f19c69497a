//! The policy-facing action schema and the tolerant JSON reader for model
//! replies.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::perception::ObjId;

/// Largest |num| accepted by move and rotate in one call.
pub const MAX_PRIMITIVE_MULTIPLIER: i64 = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "args", rename_all = "snake_case")]
pub enum Action {
    RetrieveMemory { query: String },
    RetrieveMap { query: String },
    DetectObject { query: String },
    DoubleCheck { obj_id: ObjId },
    SearchObject { query: String },
    GotoPoint { x: f64, y: f64 },
    GotoObject { obj_id: ObjId },
    UpdateMemory {
        obj_id: ObjId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pos_str: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        neg_str: Option<String>,
    },
    /// Forward by `num` x 0.25 m.
    Move { num: i64 },
    /// Turn by `num` x 15 degrees; positive turns right.
    Rotate { num: i64 },
    Talk { content: String },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RetrieveMemory { .. } => "retrieve_memory",
            Self::RetrieveMap { .. } => "retrieve_map",
            Self::DetectObject { .. } => "detect_object",
            Self::DoubleCheck { .. } => "double_check",
            Self::SearchObject { .. } => "search_object",
            Self::GotoPoint { .. } => "goto_point",
            Self::GotoObject { .. } => "goto_object",
            Self::UpdateMemory { .. } => "update_memory",
            Self::Move { .. } => "move",
            Self::Rotate { .. } => "rotate",
            Self::Talk { .. } => "talk",
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("actions serialize")
    }
}

/// Name and parameter list of every action, for validation and prompts.
pub const SCHEMA: [(&str, &[&str], &[&str], &str); 11] = [
    ("retrieve_memory", &["query"], &[], "look up user-confirmed objects matching the text in memory"),
    ("retrieve_map", &["query"], &[], "find areas on the semantic map that match the text"),
    ("detect_object", &["query"], &[], "run the open-vocabulary detector on the current view"),
    ("double_check", &["obj_id"], &[], "move closer to an object and detect it again"),
    ("search_object", &["query"], &[], "explore unexplored space and look around until something matching is seen"),
    ("goto_point", &["x", "y"], &[], "navigate to a map point in meters"),
    ("goto_object", &["obj_id"], &[], "navigate next to an object and face it"),
    ("update_memory", &["obj_id"], &["pos_str", "neg_str"], "store what the user confirmed (pos_str) or denied (neg_str) about an object"),
    ("move", &["num"], &[], "drive forward num x 0.25 m"),
    ("rotate", &["num"], &[], "turn num x 15 degrees; positive is right, negative is left"),
    ("talk", &["content"], &[], "say something to the user; ask to confirm when you think you found the goal"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoughtAction {
    pub thought: String,
    pub action: Action,
}

impl ThoughtAction {
    pub fn new(thought: impl Into<String>, action: Action) -> Self {
        Self { thought: thought.into(), action }
    }

    pub fn to_json(&self) -> Value {
        json!({ "Thought": self.thought, "Action": self.action.to_json() })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no JSON object found in the reply")]
    NoJson,
    #[error("expected exactly the keys \"Thought\" and \"Action\", found {0:?}")]
    BadEnvelope(Vec<String>),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("bad arguments for {action}: {reason}")]
    BadArgs { action: String, reason: String },
}

/// The first balanced `{...}` in `text` that parses as a JSON object.
fn extract_object(text: &str) -> Option<Map<String, Value>> {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(off) = text[start..].find('{') {
        let open = start + off;
        let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
        for (i, &b) in bytes.iter().enumerate().skip(open) {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        if let Ok(Value::Object(map)) = serde_json::from_str(&text[open..=i]) {
                            return Some(map);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
        start = open + 1;
    }
    None
}

fn bad(action: &str, reason: impl Into<String>) -> ParseError {
    ParseError::BadArgs { action: action.to_string(), reason: reason.into() }
}

fn get_str(args: &Map<String, Value>, action: &str, key: &str) -> Result<String, ParseError> {
    match args.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(_) => Err(bad(action, format!("{key} must be a non-empty string"))),
        None => Err(bad(action, format!("missing {key}"))),
    }
}

fn get_id(args: &Map<String, Value>, action: &str) -> Result<ObjId, ParseError> {
    match args.get("obj_id") {
        Some(Value::String(s)) => s.parse().map_err(|e: String| bad(action, e)),
        Some(Value::Number(n)) => n.as_u64().map(|v| ObjId(v as u32)).ok_or_else(|| bad(action, "obj_id must be a positive integer")),
        Some(_) => Err(bad(action, "obj_id must be a string like \"obj_3\"")),
        None => Err(bad(action, "missing obj_id")),
    }
}

fn get_f64(args: &Map<String, Value>, action: &str, key: &str) -> Result<f64, ParseError> {
    args.get(key).and_then(Value::as_f64).ok_or_else(|| bad(action, format!("{key} must be a number")))
}

fn get_int(args: &Map<String, Value>, action: &str) -> Result<i64, ParseError> {
    let v = args.get("num").ok_or_else(|| bad(action, "missing num"))?;
    let n = v.as_i64().or_else(|| v.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64));
    let n = n.ok_or_else(|| bad(action, "num must be an integer"))?;
    if n.abs() > MAX_PRIMITIVE_MULTIPLIER {
        return Err(bad(action, format!("|num| must be at most {MAX_PRIMITIVE_MULTIPLIER}")));
    }
    Ok(n)
}

/// Validates an action given as `{"name": ..., "args": {...}}`.
pub fn parse_action(value: &Value) -> Result<Action, ParseError> {
    let obj = value.as_object().ok_or_else(|| bad("?", "Action must be an object"))?;
    let name = obj.get("name").and_then(Value::as_str).ok_or_else(|| bad("?", "Action needs a string name"))?;
    let (_, required, optional, _) =
        SCHEMA.iter().find(|(n, ..)| *n == name).ok_or_else(|| ParseError::UnknownAction(name.to_string()))?;
    let empty = Map::new();
    let args = match obj.get("args") {
        Some(Value::Object(m)) => m,
        None => &empty,
        Some(_) => return Err(bad(name, "args must be an object")),
    };
    if let Some(extra) = args.keys().find(|k| !required.contains(&k.as_str()) && !optional.contains(&k.as_str())) {
        return Err(bad(name, format!("unknown argument {extra}")));
    }
    if let Some(missing) = required.iter().find(|k| !args.contains_key(**k)) {
        return Err(bad(name, format!("missing {missing}")));
    }
    let opt_str = |key: &str| -> Result<Option<String>, ParseError> {
        match args.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(bad(name, format!("{key} must be a string"))),
        }
    };
    let action = match name {
        "retrieve_memory" => Action::RetrieveMemory { query: get_str(args, name, "query")? },
        "retrieve_map" => Action::RetrieveMap { query: get_str(args, name, "query")? },
        "detect_object" => Action::DetectObject { query: get_str(args, name, "query")? },
        "search_object" => Action::SearchObject { query: get_str(args, name, "query")? },
        "double_check" => Action::DoubleCheck { obj_id: get_id(args, name)? },
        "goto_object" => Action::GotoObject { obj_id: get_id(args, name)? },
        "goto_point" => Action::GotoPoint { x: get_f64(args, name, "x")?, y: get_f64(args, name, "y")? },
        "update_memory" => {
            let (pos_str, neg_str) = (opt_str("pos_str")?, opt_str("neg_str")?);
            if pos_str.is_none() && neg_str.is_none() {
                return Err(bad(name, "give pos_str, neg_str or both"));
            }
            Action::UpdateMemory { obj_id: get_id(args, name)?, pos_str, neg_str }
        }
        "move" => {
            let num = get_int(args, name)?;
            if num < 0 {
                return Err(bad(name, "num must be non-negative"));
            }
            Action::Move { num }
        }
        "rotate" => Action::Rotate { num: get_int(args, name)? },
        "talk" => Action::Talk { content: get_str(args, name, "content")? },
        _ => unreachable!("schema covers every name"),
    };
    Ok(action)
}

/// Reads a reply holding one `{"Thought": ..., "Action": ...}` object,
/// possibly wrapped in prose.
pub fn parse_thought_action(text: &str) -> Result<ThoughtAction, ParseError> {
    let obj = extract_object(text).ok_or(ParseError::NoJson)?;
    let mut keys: Vec<String> = obj.keys().cloned().collect();
    keys.sort();
    if keys != ["Action", "Thought"] {
        return Err(ParseError::BadEnvelope(keys));
    }
    let thought = match &obj["Thought"] {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    Ok(ThoughtAction { thought, action: parse_action(&obj["Action"])? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_talk() {
        let ta = parse_thought_action(
            r#"{"Thought":"It looks right.","Action":{"name":"talk","args":{"content":"Is this Alice's computer?"}}}"#,
        )
        .unwrap();
        assert_eq!(ta.action, Action::Talk { content: "Is this Alice's computer?".into() });
    }

    #[test]
    fn unknown_action_rejected() {
        let err = parse_thought_action(r#"{"Thought":"","Action":{"name":"fly","args":{}}}"#).unwrap_err();
        assert_eq!(err, ParseError::UnknownAction("fly".into()));
    }

    #[test]
    fn prose_around_object() {
        let text = "Sure! {not json} here you go: {\"Thought\": \"check {memory}\", \"Action\": {\"name\": \"retrieve_memory\", \"args\": {\"query\": \"alice's computer\"}}} hope that helps";
        let ta = parse_thought_action(text).unwrap();
        assert_eq!(ta.action, Action::RetrieveMemory { query: "alice's computer".into() });
        assert_eq!(ta.thought, "check {memory}");
    }

    #[test]
    fn arg_errors_distinct() {
        assert_eq!(parse_thought_action("no braces"), Err(ParseError::NoJson));
        assert!(matches!(
            parse_thought_action(r#"{"Thought":"","Action":{"name":"move","args":{"num":41}}}"#),
            Err(ParseError::BadArgs { .. })
        ));
        assert!(matches!(
            parse_thought_action(r#"{"Thought":"","Action":{"name":"goto_object","args":{"obj_id":"obj_1","x":1}}}"#),
            Err(ParseError::BadArgs { .. })
        ));
        assert!(matches!(
            parse_thought_action(r#"{"Thought":"","Action":{"name":"update_memory","args":{"obj_id":"obj_1"}}}"#),
            Err(ParseError::BadArgs { .. })
        ));
        assert!(matches!(parse_thought_action(r#"{"Action":{"name":"talk","args":{"content":"hi"}}}"#), Err(ParseError::BadEnvelope(_))));
    }

    #[test]
    fn serialized_action_reparses() {
        let a = Action::UpdateMemory { obj_id: ObjId(3), pos_str: Some("bob's computer".into()), neg_str: None };
        assert_eq!(parse_action(&a.to_json()).unwrap(), a);
        assert_eq!(a.to_json(), json!({"name":"update_memory","args":{"obj_id":"obj_3","pos_str":"bob's computer"}}));
    }
}
