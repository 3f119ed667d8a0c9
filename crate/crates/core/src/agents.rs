//! The refinement loop and its agents: code generator, code fixing agent,
//! top agent, guardrail, and the multi-episode wrapper. Tool order is fixed;
//! every tool call is logged to an append-only transcript.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::api_graph::ApiGraph;
use crate::checker::{process_sim, render_feedback, simulate, structural_score, Feedback, SimReport};
use crate::llm::{digest, Clock, LlmClient, LlmError, Message, Role};
use crate::retrieval::{tokenize, HybridIndex};
use crate::rules::{enforce, first_parsing_block, rank_rules, RuleStore};
use crate::script_lang::{comment_context, parse, ScriptModule};

pub const REFUSAL: &str = "Sorry, I don't have enough knowledge to write such a code for you";

pub const GENERATOR_SYSTEM: &str =
    "You write scripts for an EDA tool's Python-like scripting interface. Reply with the script in one fenced code block.";
pub const FIXER_SYSTEM: &str = "You are an EDA scripting expert. Reply with a code snippet of at most 5 lines, in one fenced code block, that does what is asked.";
pub const FIXER_RETRY: &str =
    "That reply had no usable snippet. Reply with only the code, at most 5 lines, in one fenced code block.";
pub const TOP_SYSTEM: &str = "You refine EDA tool scripts. Use the simulation results, valid attributes, shortest paths, suggested snippets and API notes to fix the script so it answers the question. Reply with the complete revised script in one fenced code block.";
pub const GUARDRAIL_SYSTEM: &str =
    "Read the comments of an EDA tool script and write the single question the script answers. Reply with the question only.";
pub const SUMMARY_SYSTEM: &str = "Summarize the progress of this refinement episode in two sentences for the next attempt.";

const SNIPPET_MAX_LINES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub time_limit_s: f64,
    pub itr_limit: usize,
    pub episodes: usize,
    pub attr_limit: usize,
    /// Auto rules taken from retrieval on top of matching manual rules.
    pub rules_k: usize,
    pub structural_min: f64,
    pub functional_min: f64,
    /// Lines above an erroneous statement searched for intent comments.
    pub comment_window: usize,
    /// API documents handed to the generator and top agent.
    pub rag_k: usize,
    /// Ask the assistant for episode summaries instead of using the template.
    pub llm_summary: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            time_limit_s: 120.0,
            itr_limit: 5,
            episodes: 2,
            attr_limit: 3,
            rules_k: 10,
            structural_min: 0.9,
            functional_min: 0.5,
            comment_window: 3,
            rag_k: 5,
            llm_summary: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let positive = self.time_limit_s > 0.0
            && self.itr_limit > 0
            && self.episodes > 0
            && self.attr_limit > 0
            && self.rules_k > 0
            && self.structural_min > 0.0
            && self.functional_min > 0.0;
        if !positive || self.structural_min > 1.0 || self.functional_min > 1.0 {
            return Err(AgentError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    LlmUnavailable(#[from] LlmError),
    #[error("reply contained no parsing code")]
    NoCodeInReply,
    #[error("empty query")]
    EmptyQuery,
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
}

/// Shared, read-only resources for a run.
#[derive(Clone, Copy)]
pub struct Toolbox<'a> {
    pub graph: &'a ApiGraph,
    pub rules: &'a RuleStore,
    pub retriever: Option<&'a HybridIndex>,
    /// Domain model: initial code and fixing snippets.
    pub generator: &'a dyn LlmClient,
    /// General model: rule rewrites, top agent, guardrail, summaries.
    pub assistant: &'a dyn LlmClient,
    pub clock: &'a dyn Clock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub episode: usize,
    pub iteration: usize,
    pub tool: String,
    pub input_digest: String,
    pub output_digest: String,
    pub wall_ms: u64,
    #[serde(skip)]
    pub input: String,
    #[serde(skip)]
    pub output: String,
}

pub fn write_transcript(entries: &[TranscriptEntry], mut out: impl Write) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn transcript_jsonl(entries: &[TranscriptEntry]) -> String {
    let mut buf = Vec::new();
    write_transcript(entries, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("utf8 json")
}

struct Log<'a> {
    clock: &'a dyn Clock,
    episode: usize,
    entries: Vec<TranscriptEntry>,
}

impl<'a> Log<'a> {
    fn new(clock: &'a dyn Clock, episode: usize) -> Self {
        Self { clock, episode, entries: Vec::new() }
    }

    /// Runs `f` and records it as one tool call.
    fn call<T>(&mut self, iteration: usize, tool: &str, input: &str, f: impl FnOnce() -> (T, String)) -> T {
        let start = self.clock.now_ms();
        let (value, output) = f();
        let wall_ms = self.clock.now_ms().saturating_sub(start);
        self.entries.push(TranscriptEntry {
            episode: self.episode,
            iteration,
            tool: tool.to_string(),
            input_digest: digest(input),
            output_digest: digest(&output),
            wall_ms,
            input: input.to_string(),
            output,
        });
        value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeState {
    pub episode: usize,
    pub query: String,
    pub refined_code: String,
    pub sim_result: SimReport,
    pub itr_count: usize,
    pub time_elapsed_s: f64,
    pub new_codes: Vec<String>,
    pub feedback: Feedback,
    /// Summary of earlier episodes, handed to the top agent.
    pub episode_summary: String,
    pub transcript: Vec<TranscriptEntry>,
    pub notes: Vec<String>,
    /// Set when an LLM failure cut the episode short.
    pub aborted: Option<String>,
}

impl EpisodeState {
    pub fn new(query: impl Into<String>, code: impl Into<String>, episode: usize, summary: impl Into<String>) -> Self {
        Self {
            episode,
            query: query.into(),
            refined_code: code.into(),
            sim_result: SimReport::default(),
            itr_count: 0,
            time_elapsed_s: 0.0,
            new_codes: Vec::new(),
            feedback: Feedback::default(),
            episode_summary: summary.into(),
            transcript: Vec::new(),
            notes: Vec::new(),
            aborted: None,
        }
    }
}

fn fenced(code: &str) -> String {
    if code.ends_with('\n') {
        format!("```\n{code}```\n")
    } else {
        format!("```\n{code}\n```\n")
    }
}

fn api_hints(retriever: Option<&HybridIndex>, query: &str, k: usize) -> Vec<String> {
    let Some(index) = retriever else {
        return Vec::new();
    };
    if tokenize(query).is_empty() {
        return Vec::new();
    }
    index.hybrid_search(query, k).map(|hits| hits.iter().map(|h| h.doc.text.clone()).collect()).unwrap_or_default()
}

pub fn generator_prompt(query: &str, hints: &[String]) -> Vec<Message> {
    let mut user = query.trim().to_string();
    if !hints.is_empty() {
        user.push_str("\n\nRelevant APIs:\n");
        for h in hints {
            user.push_str(&format!("- {h}\n"));
        }
    }
    vec![Message::system(GENERATOR_SYSTEM), Message::user(user)]
}

/// First answer for `query`: the first parsing code block of the reply.
pub fn code_generator(query: &str, llm: &dyn LlmClient) -> Result<String, AgentError> {
    generate_with_hints(query, &[], llm)
}

fn generate_with_hints(query: &str, hints: &[String], llm: &dyn LlmClient) -> Result<String, AgentError> {
    if query.trim().is_empty() {
        return Err(AgentError::EmptyQuery);
    }
    let reply = llm.complete(&generator_prompt(query, hints), 0.0)?;
    first_parsing_block(&reply).map(|(code, _)| code).ok_or(AgentError::NoCodeInReply)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixOutcome {
    pub intent: String,
    pub snippet: Option<String>,
    pub attempts: usize,
    pub prompt: Vec<Message>,
}

pub fn fixer_prompt(intent: &str, message: &str) -> Vec<Message> {
    vec![Message::system(FIXER_SYSTEM), Message::user(format!("{intent}\n\nThe current line fails with: {message}"))]
}

fn usable_snippet(reply: &str) -> Option<String> {
    first_parsing_block(reply)
        .map(|(code, _)| code)
        .filter(|c| c.lines().filter(|l| !l.trim().is_empty()).count() <= SNIPPET_MAX_LINES)
}

/// Asks the domain model for a focused snippet realizing the intent of the
/// erroneous line, read from its surrounding comments. One retry, then the
/// snippet is dropped.
pub fn code_fixing_agent(
    module: &ScriptModule,
    diagnostic: &crate::checker::Diagnostic,
    window: usize,
    llm: &dyn LlmClient,
) -> Result<FixOutcome, LlmError> {
    let intent = comment_context(module, diagnostic.line, window).unwrap_or_default();
    let message = diagnostic.message.split_once(": ").map_or(diagnostic.message.as_str(), |(_, m)| m);
    let mut prompt = fixer_prompt(&intent, message);
    let reply = llm.complete(&prompt, 0.0)?;
    if let Some(s) = usable_snippet(&reply) {
        return Ok(FixOutcome { intent, snippet: Some(s), attempts: 1, prompt });
    }
    prompt.push(Message { role: Role::Assistant, content: reply });
    prompt.push(Message::user(FIXER_RETRY));
    let reply = llm.complete(&prompt, 0.0)?;
    Ok(FixOutcome { intent, snippet: usable_snippet(&reply), attempts: 2, prompt })
}

pub fn top_agent_prompt(state: &EpisodeState, sim: &SimReport, hints: &[String]) -> Vec<Message> {
    let mut user = String::new();
    if !state.episode_summary.is_empty() {
        user.push_str(&format!("# Progress so far\n{}\n\n", state.episode_summary.trim_end()));
    }
    user.push_str(&format!("# Question\n{}\n\n# Current script\n{}\n", state.query.trim(), fenced(&state.refined_code)));
    if sim.clean {
        user.push_str("# Simulation results:\nclean\n");
    } else {
        user.push_str(&render_feedback(sim, &state.feedback));
    }
    if !state.new_codes.is_empty() {
        user.push_str("\n# Suggested snippets\n");
        for s in &state.new_codes {
            user.push_str(&fenced(s));
        }
    }
    if !hints.is_empty() {
        user.push_str("\n# Relevant APIs\n");
        for h in hints {
            user.push_str(&format!("- {h}\n"));
        }
    }
    vec![Message::system(TOP_SYSTEM), Message::user(user)]
}

fn sim_text(r: &SimReport) -> String {
    if r.clean {
        "clean\n".into()
    } else {
        r.render()
    }
}

/// One episode of the refinement loop: rule enforcement, simulation,
/// per-line fixing snippets, repair hints, and a top-agent rewrite per
/// iteration, until the script simulates clean or a bound is hit.
pub fn refine_episode(mut state: EpisodeState, config: &RunConfig, tools: &Toolbox) -> EpisodeState {
    let mut log = Log::new(tools.clock, state.episode);
    let graph = tools.graph;

    let initial = match parse(&state.refined_code) {
        Ok(m) => simulate(graph, &m),
        Err(e) => {
            state.aborted = Some(format!("episode input does not parse: {e}"));
            return state;
        }
    };
    state.sim_result = log.call(0, "simulate", &state.refined_code, || {
        let text = sim_text(&initial);
        (initial, text)
    });

    while !state.sim_result.clean && state.time_elapsed_s <= config.time_limit_s && state.itr_count < config.itr_limit {
        let started = tools.clock.now_ms();
        let it = state.itr_count + 1;
        let result = iteration(&mut state, &mut log, it, config, tools);
        state.itr_count = it;
        state.time_elapsed_s += tools.clock.now_ms().saturating_sub(started) as f64 / 1000.0;
        if let Err(e) = result {
            state.aborted = Some(e.to_string());
            break;
        }
    }
    state.transcript.extend(log.entries);
    state
}

fn iteration(state: &mut EpisodeState, log: &mut Log, it: usize, config: &RunConfig, tools: &Toolbox) -> Result<(), LlmError> {
    let graph = tools.graph;

    let rules = rank_rules(tools.rules, &state.query, config.rules_k).unwrap_or_default();
    let ids: Vec<&str> = rules.iter().map(|r| r.id.as_str()).collect();
    let input = format!("{}\n{}", ids.join(","), state.refined_code);
    let outcome = log.call(it, "rule_enforce", &input, || match enforce(&state.refined_code, &rules, tools.assistant) {
        Ok(o) => {
            let text = o.code.clone();
            (Ok(o), text)
        }
        Err(e) => {
            let text = e.to_string();
            (Err(e), text)
        }
    })?;
    if let Some(note) = outcome.rejected {
        state.notes.push(format!("iteration {it}: {note}"));
    }
    state.refined_code = outcome.code;

    let module = parse(&state.refined_code).expect("enforce returns parsing code");
    let sim = log.call(it, "simulate", &state.refined_code, || {
        let r = simulate(graph, &module);
        let text = sim_text(&r);
        (r, text)
    });

    state.new_codes.clear();
    state.feedback = Feedback::default();
    if !sim.clean {
        let mut seen_lines = Vec::new();
        for d in &sim.diagnostics {
            if seen_lines.contains(&d.line) {
                continue;
            }
            seen_lines.push(d.line);
            let fix = log.call(it, "code_fixing_agent", &d.message, || {
                match code_fixing_agent(&module, d, config.comment_window, tools.generator) {
                    Ok(f) => {
                        let text = f.snippet.clone().unwrap_or_default();
                        (Ok(f), text)
                    }
                    Err(e) => {
                        let text = e.to_string();
                        (Err(e), text)
                    }
                }
            })?;
            match fix.snippet {
                Some(s) => state.new_codes.push(s),
                None => state
                    .notes
                    .push(format!("iteration {it}: no usable snippet for line {} after {} attempts", d.line, fix.attempts)),
            }
        }
        state.feedback = log.call(it, "process_sim", &sim.render(), || {
            let fb = process_sim(graph, &sim, config.attr_limit);
            let text = render_feedback(&sim, &fb);
            (fb, text)
        });
    }

    let hints = match tools.retriever {
        Some(index) => {
            let members: Vec<&str> = sim.diagnostics.iter().map(|d| d.member.as_str()).collect();
            let q = format!("{} {}", state.query, members.join(" "));
            log.call(it, "retrieve", &q, || {
                let h = api_hints(Some(index), &q, config.rag_k);
                let text = h.join("\n");
                (h, text)
            })
        }
        None => Vec::new(),
    };

    let prompt = top_agent_prompt(state, &sim, &hints);
    let prompt_text: String = prompt.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
    let reply = log.call(it, "top_agent", &prompt_text, || match tools.assistant.complete(&prompt, 0.0) {
        Ok(r) => {
            let text = r.clone();
            (Ok(r), text)
        }
        Err(e) => {
            let text = e.to_string();
            (Err(e), text)
        }
    })?;
    match first_parsing_block(&reply) {
        Some((code, _)) => state.refined_code = code,
        None => state.notes.push(format!("iteration {it}: top agent reply had no parsing script, kept previous")),
    }

    let module = parse(&state.refined_code).expect("refined code is parse-gated");
    state.sim_result = log.call(it, "simulate", &state.refined_code, || {
        let r = simulate(graph, &module);
        let text = sim_text(&r);
        (r, text)
    });
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuardrailVerdict {
    pub structural: f64,
    pub functional: f64,
    pub accepted: bool,
    pub reconstructed_question: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Token-level F1 between two texts (multiset overlap, retrieval tokenizer).
pub fn token_f1(candidate: &str, reference: &str) -> f64 {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &r {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &c {
        if let Some(n) = counts.get_mut(t.as_str()) {
            if *n > 0 {
                *n -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / c.len() as f64;
    let rc = overlap as f64 / r.len() as f64;
    2.0 * p * rc / (p + rc)
}

pub fn guardrail_prompt(module: &ScriptModule, code: &str) -> Vec<Message> {
    let comments = module.comment_texts();
    let user = if comments.is_empty() {
        format!("The script has no comments. Script:\n{}", fenced(code))
    } else {
        let lines: Vec<String> = comments.iter().map(|c| format!("- {c}")).collect();
        format!("Comments:\n{}\n", lines.join("\n"))
    };
    vec![Message::system(GUARDRAIL_SYSTEM), Message::user(user)]
}

/// Structural score from the checker; functional score is token F1 between
/// the question reconstructed from the code's comments and the user query.
pub fn guardrail(code: &str, query: &str, graph: &ApiGraph, llm: &dyn LlmClient, config: &RunConfig) -> GuardrailVerdict {
    let Ok(module) = parse(code) else {
        return GuardrailVerdict {
            structural: 0.0,
            functional: 0.0,
            accepted: false,
            reconstructed_question: String::new(),
            note: Some("code does not parse".into()),
        };
    };
    let structural = structural_score(graph, &module);
    let (question, note) = match llm.complete(&guardrail_prompt(&module, code), 0.0) {
        Ok(q) => (q.trim().to_string(), None),
        Err(e) => (String::new(), Some(e.to_string())),
    };
    let functional = token_f1(&question, query);
    GuardrailVerdict {
        structural,
        functional,
        accepted: structural >= config.structural_min && functional >= config.functional_min,
        reconstructed_question: question,
        note,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineOutcome {
    /// The accepted code, or the refusal message.
    pub answer: String,
    pub accepted: bool,
    /// Last refined code, whether or not it was accepted.
    pub final_code: Option<String>,
    pub verdict: Option<GuardrailVerdict>,
    /// Iterations run in each episode.
    pub iterations: Vec<usize>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub transcript: Vec<TranscriptEntry>,
}

fn template_summary(state: &EpisodeState, verdict: &GuardrailVerdict) -> String {
    let status = if state.sim_result.clean {
        "the script simulates clean".to_string()
    } else {
        format!("{} simulation issue(s) remain", state.sim_result.diagnostics.len())
    };
    let mut out = format!(
        "Episode {} ran {} iteration(s); {status}; guardrail structural {:.2}, functional {:.2}.",
        state.episode, state.itr_count, verdict.structural, verdict.functional
    );
    for d in state.sim_result.diagnostics.iter().take(3) {
        out.push_str(&format!("\n{}", d.message));
    }
    out
}

/// Generates an answer and refines it over up to `config.episodes`
/// episodes; the final code is released only if the guardrail accepts it.
pub fn refine(query: &str, config: &RunConfig, tools: &Toolbox) -> Result<RefineOutcome, AgentError> {
    config.validate()?;
    let mut log = Log::new(tools.clock, 0);
    let mut out = RefineOutcome {
        answer: REFUSAL.to_string(),
        accepted: false,
        final_code: None,
        verdict: None,
        iterations: Vec::new(),
        notes: Vec::new(),
        transcript: Vec::new(),
    };

    let hints = if tools.retriever.is_some() {
        log.call(0, "retrieve", query, || {
            let h = api_hints(tools.retriever, query, config.rag_k);
            let text = h.join("\n");
            (h, text)
        })
    } else {
        Vec::new()
    };
    let init = log.call(0, "code_generator", query, || match generate_with_hints(query, &hints, tools.generator) {
        Ok(code) => {
            let text = code.clone();
            (Ok(code), text)
        }
        Err(e) => {
            let text = e.to_string();
            (Err(e), text)
        }
    });
    out.transcript.append(&mut log.entries);
    let mut code = match init {
        Ok(c) => c,
        Err(AgentError::EmptyQuery) => return Err(AgentError::EmptyQuery),
        Err(e) => {
            out.notes.push(format!("code generator: {e}"));
            return Ok(out);
        }
    };

    let mut summary = String::new();
    for episode in 1..=config.episodes {
        let state = refine_episode(EpisodeState::new(query, code, episode, summary.clone()), config, tools);
        out.iterations.push(state.itr_count);
        out.notes.extend(state.notes.iter().map(|n| format!("episode {episode}: {n}")));
        out.transcript.extend(state.transcript.iter().cloned());
        out.final_code = Some(state.refined_code.clone());
        if let Some(reason) = &state.aborted {
            out.notes.push(format!("episode {episode} aborted: {reason}"));
            return Ok(out);
        }

        let mut log = Log::new(tools.clock, episode);
        let verdict = log.call(state.itr_count, "guardrail", &state.refined_code, || {
            let v = guardrail(&state.refined_code, query, tools.graph, tools.assistant, config);
            let text = format!("{:.6} {:.6} {}", v.structural, v.functional, v.reconstructed_question);
            (v, text)
        });
        out.verdict = Some(verdict.clone());
        if verdict.accepted {
            out.transcript.append(&mut log.entries);
            out.answer = state.refined_code.clone();
            out.accepted = true;
            return Ok(out);
        }
        if episode < config.episodes {
            summary = log.call(state.itr_count, "episode_summary", &state.refined_code, || {
                let template = template_summary(&state, &verdict);
                let s = if config.llm_summary {
                    let prompt = [Message::system(SUMMARY_SYSTEM), Message::user(template.clone())];
                    tools.assistant.complete(&prompt, 0.0).unwrap_or(template)
                } else {
                    template
                };
                (s.clone(), s)
            });
        }
        out.transcript.append(&mut log.entries);
        code = state.refined_code;
    }
    Ok(out)
}
