//! Skill contracts, their two renderings, and the smoke target rule.
//!
//! `skill.json` is the contract serialized with its own field names.
//! `SKILL.md` renders the same contract as fixed sections; the Scope, Inputs
//! and Outputs sections are parsed back and compared to the metadata after
//! whitespace collapsing.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::registry::Confidence;

pub const SECTIONS: [&str; 9] = [
    "Scope",
    "Inputs",
    "Outputs",
    "Environment",
    "Steps",
    "Provenance",
    "Follow-up",
    "Examples",
    "Tests",
];

/// Sections compared between the spec document and the metadata.
pub const AGREEMENT_SECTIONS: [&str; 3] = ["Scope", "Inputs", "Outputs"];

pub const DEFAULT_SMOKE_TIMEOUT_SECS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    File,
    Argument,
    Number,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    File,
    Stream,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractInput {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "yes")]
    pub required: bool,
    #[serde(default = "argument")]
    pub kind: InputKind,
}

fn yes() -> bool {
    true
}

fn argument() -> InputKind {
    InputKind::Argument
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractOutput {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "stream")]
    pub kind: OutputKind,
}

fn stream() -> OutputKind {
    OutputKind::Stream
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillContract {
    pub task_scope: String,
    pub inputs: Vec<ContractInput>,
    #[serde(default)]
    pub outputs: Vec<ContractOutput>,
    #[serde(default)]
    pub environment_assumptions: Vec<String>,
    pub execution_steps: Vec<String>,
    pub provenance_links: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follow_up_guidance: Option<String>,
    #[serde(default)]
    pub example_invocations: Vec<String>,
    #[serde(default)]
    pub test_commands: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCommand {
    pub command: String,
    pub working_dir: String,
    pub expected_exit: i32,
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContractError {
    #[error("missing required field {0}")]
    MissingField(String),
    #[error("invalid field {field}: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("malformed invocation {command:?}: {reason}")]
    MalformedInvocation { command: String, reason: String },
}

const REQUIRED: [&str; 4] = ["task_scope", "inputs", "execution_steps", "provenance_links"];

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Splits a command with shell quoting rules and no interpolation.
pub fn tokenize(command: &str) -> Result<Vec<String>, ContractError> {
    match shlex::split(command) {
        Some(tokens) if !tokens.is_empty() => Ok(tokens),
        Some(_) => Err(ContractError::MalformedInvocation {
            command: command.to_string(),
            reason: "empty command".to_string(),
        }),
        None => Err(ContractError::MalformedInvocation {
            command: command.to_string(),
            reason: "unbalanced quoting".to_string(),
        }),
    }
}

/// Maps a contract-shaped document onto a [`SkillContract`].
pub fn parse_contract(doc: &Value) -> Result<SkillContract, ContractError> {
    let obj = doc.as_object().ok_or_else(|| ContractError::InvalidField {
        field: "<document>".to_string(),
        reason: "expected an object".to_string(),
    })?;
    for field in REQUIRED {
        match obj.get(field) {
            None | Some(Value::Null) => return Err(ContractError::MissingField(field.to_string())),
            _ => {}
        }
    }
    let mut trimmed = serde_json::Map::new();
    for (k, v) in obj {
        if matches!(
            k.as_str(),
            "task_scope"
                | "inputs"
                | "outputs"
                | "environment_assumptions"
                | "execution_steps"
                | "provenance_links"
                | "follow_up_guidance"
                | "example_invocations"
                | "test_commands"
        ) {
            trimmed.insert(k.clone(), v.clone());
        }
    }
    if let Some(Value::Array(items)) = obj.get("inputs") {
        for (i, item) in items.iter().enumerate() {
            if item.get("name").is_none() {
                return Err(ContractError::MissingField(format!("inputs[{}].name", i)));
            }
        }
    }
    let contract: SkillContract =
        serde_json::from_value(Value::Object(trimmed)).map_err(|e| ContractError::InvalidField {
            field: "<contract>".to_string(),
            reason: e.to_string(),
        })?;
    check_contract(&contract)?;
    Ok(contract)
}

/// Hard errors: empty scope, bad names, unparseable commands.
pub fn check_contract(c: &SkillContract) -> Result<(), ContractError> {
    if c.task_scope.trim().is_empty() {
        return Err(ContractError::MissingField("task_scope".to_string()));
    }
    if c.execution_steps.is_empty() {
        return Err(ContractError::MissingField("execution_steps".to_string()));
    }
    if c.provenance_links.is_empty() {
        return Err(ContractError::MissingField("provenance_links".to_string()));
    }
    for (i, input) in c.inputs.iter().enumerate() {
        if !valid_name(&input.name) {
            return Err(ContractError::InvalidField {
                field: format!("inputs[{}].name", i),
                reason: format!("{:?} is not a plain identifier", input.name),
            });
        }
    }
    for (i, output) in c.outputs.iter().enumerate() {
        if !valid_name(&output.name) {
            return Err(ContractError::InvalidField {
                field: format!("outputs[{}].name", i),
                reason: format!("{:?} is not a plain identifier", output.name),
            });
        }
    }
    for cmd in c.example_invocations.iter().chain(&c.test_commands) {
        tokenize(cmd)?;
    }
    Ok(())
}

fn mentions_word(text: &str, word: &str) -> bool {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '-'))
        .any(|t| t == word)
}

/// Soft findings: required inputs that no step or example refers to.
pub fn invariant_findings(c: &SkillContract) -> Vec<String> {
    c.inputs
        .iter()
        .filter(|i| i.required)
        .filter(|i| {
            let placeholder = format!("{{{}}}", i.name);
            !c.execution_steps.iter().any(|s| mentions_word(s, &i.name))
                && !c.example_invocations.iter().any(|e| e.contains(&placeholder))
        })
        .map(|i| format!("required input {} is not used by any step or example", i.name))
        .collect()
}

/// First declared test command, or nothing when the contract has no tests.
pub fn resolve_smoke_target(c: &SkillContract) -> Option<TestCommand> {
    c.test_commands.first().map(|command| TestCommand {
        command: command.clone(),
        working_dir: ".".to_string(),
        expected_exit: 0,
        timeout_secs: DEFAULT_SMOKE_TIMEOUT_SECS,
    })
}

/// Skills with no test surface are starter skills.
pub fn confidence(c: &SkillContract) -> Confidence {
    if c.test_commands.is_empty() {
        Confidence::Starter
    } else {
        Confidence::Standard
    }
}

/// Method summary used for novelty scope comparison.
pub fn scope_summary(c: &SkillContract) -> String {
    let mut parts: Vec<&str> = c.environment_assumptions.iter().map(String::as_str).collect();
    parts.extend(c.execution_steps.iter().map(String::as_str));
    parts.join("; ")
}

/// Free-text compute note for the site export.
pub fn compute_profile_note(c: &SkillContract) -> String {
    if c.environment_assumptions.is_empty() {
        String::from("no declared environment")
    } else {
        c.environment_assumptions.join("; ")
    }
}

/// True when an environment assumption names a batch scheduler.
pub fn needs_scheduler(c: &SkillContract) -> bool {
    c.environment_assumptions.iter().any(|a| {
        let a = a.to_lowercase();
        a.contains("slurm") || a.contains("scheduler")
    })
}

pub fn render_metadata(c: &SkillContract) -> String {
    let mut s = serde_json::to_string_pretty(c).unwrap_or_default();
    s.push('\n');
    s
}

pub fn collapse_whitespace(text: &str) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    words.join(" ")
}

fn input_kind(k: InputKind) -> &'static str {
    match k {
        InputKind::File => "file",
        InputKind::Argument => "argument",
        InputKind::Number => "number",
    }
}

fn output_kind(k: OutputKind) -> &'static str {
    match k {
        OutputKind::File => "file",
        OutputKind::Stream => "stream",
    }
}

fn bullet_list(items: &[String], code: bool) -> String {
    if items.is_empty() {
        return String::from("None.\n");
    }
    let mut out = String::new();
    for i in items {
        if code {
            let _ = writeln!(out, "- `{}`", i);
        } else {
            let _ = writeln!(out, "- {}", i);
        }
    }
    out
}

/// Body of one `SKILL.md` section as rendered from the contract.
pub fn render_section(c: &SkillContract, section: &str) -> String {
    match section {
        "Scope" => format!("{}\n", c.task_scope.trim()),
        "Inputs" => {
            let items: Vec<String> = c
                .inputs
                .iter()
                .map(|i| {
                    format!(
                        "`{}` ({}, {}): {}",
                        i.name,
                        input_kind(i.kind),
                        if i.required { "required" } else { "optional" },
                        i.description
                    )
                })
                .collect();
            bullet_list(&items, false)
        }
        "Outputs" => {
            let items: Vec<String> = c
                .outputs
                .iter()
                .map(|o| format!("`{}` ({}): {}", o.name, output_kind(o.kind), o.description))
                .collect();
            bullet_list(&items, false)
        }
        "Environment" => bullet_list(&c.environment_assumptions, false),
        "Steps" => {
            let mut out = String::new();
            for (n, s) in c.execution_steps.iter().enumerate() {
                let _ = writeln!(out, "{}. {}", n + 1, s);
            }
            out
        }
        "Provenance" => bullet_list(&c.provenance_links, false),
        "Follow-up" => match &c.follow_up_guidance {
            Some(g) if !g.trim().is_empty() => format!("{}\n", g.trim()),
            _ => String::from("None.\n"),
        },
        "Examples" => bullet_list(&c.example_invocations, true),
        "Tests" => bullet_list(&c.test_commands, true),
        _ => String::new(),
    }
}

pub fn render_spec_document(name: &str, c: &SkillContract) -> String {
    let mut out = format!("# {}\n", name);
    for section in SECTIONS {
        let _ = write!(out, "\n## {}\n\n{}", section, render_section(c, section));
    }
    out
}

/// Raw body of each `## ` section of a spec document, in order.
pub fn split_sections(doc: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in doc.lines() {
        if let Some(title) = line.strip_prefix("## ") {
            out.push((title.trim().to_string(), String::new()));
        } else if let Some((_, body)) = out.last_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    out
}

/// Sections where the spec document and the contract disagree.
pub fn spec_divergences(doc: &str, c: &SkillContract) -> Vec<String> {
    let sections = split_sections(doc);
    AGREEMENT_SECTIONS
        .iter()
        .filter_map(|name| {
            let found = sections.iter().find(|(t, _)| t == name).map(|(_, b)| b.as_str());
            match found {
                None => Some(format!("SKILL.md lacks a {} section", name)),
                Some(body) if collapse_whitespace(body) != collapse_whitespace(&render_section(c, name)) => {
                    Some(format!("SKILL.md {} differs from skill.json", name))
                }
                Some(_) => None,
            }
        })
        .collect()
}
