//! Deterministic LLM stand-ins for end-to-end runs of the refinement loop.
//! A responder dispatches on the system prompt of each request.
#![allow(dead_code)]

use std::sync::Arc;

use jarvis_core::agents::{FIXER_SYSTEM, GENERATOR_SYSTEM, GUARDRAIL_SYSTEM, SUMMARY_SYSTEM, TOP_SYSTEM};
use jarvis_core::llm::{FnLlm, LlmError, Message};
use jarvis_core::rules::ENFORCE_SYSTEM;

pub const LEAKAGE_ATTR: &str = include_str!("../../../../fixtures/scripts/leakage_attr.esl");
pub const LEAKAGE_FLAG: &str = include_str!("../../../../fixtures/scripts/leakage_flag.esl");
pub const ROUTE_LENGTH_BAD: &str = include_str!("../../../../fixtures/scripts/route_length_bad.esl");
pub const ROUTE_LENGTH_FIXED: &str = include_str!("../../../../fixtures/scripts/route_length_fixed.esl");
pub const WORST_SLACK_LOOP: &str = include_str!("../../../../fixtures/scripts/worst_slack_loop.esl");
pub const WORST_SLACK_SORTED: &str = include_str!("../../../../fixtures/scripts/worst_slack_sorted.esl");

/// The worst-slack loop after the sort rule is applied but before the end-reference fix.
pub const WORST_SLACK_PARTIAL: &str = "# Get all vios
vios = get_all_violations()
# Filter vios that end at RAM
ram_vios = [v for v in vios if v.get_end_pin().of_ram()]
ram_vios_v = Violations()
for vio in ram_vios:
    ram_vios_v.push_back(vio)
# Sort vios by slack and get the worst one
worst_slack_vio = ram_vios_v.sort_using_slack()[0]
worst_slack_vio_id = worst_slack_vio.id()
";

pub const LEAKAGE_QUERY: &str = "Write a code to compute the total leakage power of all sequential cells in the design";
pub const ROUTE_LENGTH_QUERY: &str =
    "Write a code to keep the hold paths of nodes that are not nets and whose route length is more than 2";
pub const WORST_SLACK_QUERY: &str =
    "Write a code to get the id of the worst slack violation among the violations that end at a RAM";

/// How a mocked model answers one query. Table entries are `(needle, reply)`:
/// the first entry whose needle occurs in the relevant text wins.
#[derive(Debug, Clone, Default)]
pub struct Case {
    pub query: String,
    pub initial: String,
    /// Keyed on the script handed to the rule rewriter; default echoes it.
    pub enforce: Vec<(String, String)>,
    /// Keyed on the fixer request; default is an unhelpful prose reply.
    pub fix: Vec<(String, String)>,
    /// Keyed on the whole top-agent request; default echoes the script.
    pub top: Vec<(String, String)>,
    /// Guardrail reply; default echoes the query.
    pub guard: Option<String>,
}

impl Case {
    pub fn new(query: &str, initial: &str) -> Self {
        Self { query: query.into(), initial: initial.into(), ..Self::default() }
    }

    pub fn enforce(mut self, needle: &str, reply: &str) -> Self {
        self.enforce.push((needle.into(), reply.into()));
        self
    }

    pub fn fix(mut self, needle: &str, reply: &str) -> Self {
        self.fix.push((needle.into(), reply.into()));
        self
    }

    pub fn top(mut self, needle: &str, reply: &str) -> Self {
        self.top.push((needle.into(), reply.into()));
        self
    }

    pub fn guard(mut self, reply: &str) -> Self {
        self.guard = Some(reply.into());
        self
    }
}

pub fn fence(code: &str) -> String {
    format!("```\n{}\n```", code.trim_end())
}

/// Text of the fenced block that follows `header` in `content`.
pub fn block_after(content: &str, header: &str) -> Option<String> {
    let start = content.find(header)? + header.len();
    let rest = content[start..].strip_prefix("```\n")?;
    let end = rest.find("```")?;
    Some(rest[..end].to_string())
}

fn lookup<'a>(table: &'a [(String, String)], text: &str) -> Option<&'a str> {
    table.iter().find(|(needle, _)| text.contains(needle.as_str())).map(|(_, r)| r.as_str())
}

pub fn respond(case: &Case, messages: &[Message]) -> Result<String, LlmError> {
    let system = messages.first().map(|m| m.content.as_str()).unwrap_or("");
    let user = messages.get(1).map(|m| m.content.as_str()).unwrap_or("");
    let reply = if system == GENERATOR_SYSTEM {
        fence(&case.initial)
    } else if system == ENFORCE_SYSTEM {
        let script = block_after(user, "# Script\n").unwrap_or_default();
        fence(lookup(&case.enforce, &script).unwrap_or(&script))
    } else if system == FIXER_SYSTEM {
        match lookup(&case.fix, user) {
            Some(snippet) => fence(snippet),
            None => "I am not sure how to do that with this tool.".to_string(),
        }
    } else if system == TOP_SYSTEM {
        let script = block_after(user, "# Current script\n").unwrap_or_default();
        fence(lookup(&case.top, user).unwrap_or(&script))
    } else if system == GUARDRAIL_SYSTEM {
        case.guard.clone().unwrap_or_else(|| case.query.clone())
    } else if system == SUMMARY_SYSTEM {
        "The script still has simulation errors.".to_string()
    } else {
        return Err(LlmError::UnknownPrompt(format!("unexpected system prompt: {system}")));
    };
    Ok(reply)
}

pub fn scenario_llm(case: Case) -> FnLlm {
    let case = Arc::new(case);
    FnLlm::new("scenario", move |m: &[Message]| respond(&case, m))
}

pub fn route_length_case() -> Case {
    Case::new(ROUTE_LENGTH_QUERY, ROUTE_LENGTH_BAD)
        .fix("route_length", "length = node.pin().net().route_length()")
        .top("Node -> pin -> Pin -> net -> Net -> route_length", ROUTE_LENGTH_FIXED)
}

pub fn leakage_case() -> Case {
    Case::new(LEAKAGE_QUERY, LEAKAGE_ATTR).enforce("cell.leakage_power", LEAKAGE_FLAG)
}

pub fn worst_slack_case() -> Case {
    Case::new(WORST_SLACK_QUERY, WORST_SLACK_LOOP)
        .enforce("for v in vpaths:", WORST_SLACK_PARTIAL)
        .fix("end at RAM", "is_ram = v.get_end_ref().of_ram()")
        .top("get_end_ref().of_ram()", WORST_SLACK_SORTED)
}

/// Never helps: prose from the fixer, echo from the top agent.
pub fn adversarial_case() -> Case {
    Case::new(ROUTE_LENGTH_QUERY, ROUTE_LENGTH_BAD).guard("How do I list all cells?")
}

/// Only fixes the script once it is told how the previous episode went.
pub fn second_episode_case() -> Case {
    Case::new(ROUTE_LENGTH_QUERY, ROUTE_LENGTH_BAD).top("# Progress so far", ROUTE_LENGTH_FIXED)
}
