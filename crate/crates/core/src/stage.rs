//! Stage kinds, prompt rendering, effort profiles and response schemas.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    TreeCheck,
    ResourceSearch,
    SkillBuild,
    SkillTest,
    Refresh,
    DesignSkill,
    Layer1Fix,
    Layer2Benchmark,
    Layer2Optimize,
    NoveltyCheck,
    ParallelLeafStage,
}

impl StageKind {
    pub const ALL: [StageKind; 11] = [
        StageKind::TreeCheck,
        StageKind::ResourceSearch,
        StageKind::SkillBuild,
        StageKind::SkillTest,
        StageKind::Refresh,
        StageKind::DesignSkill,
        StageKind::Layer1Fix,
        StageKind::Layer2Benchmark,
        StageKind::Layer2Optimize,
        StageKind::NoveltyCheck,
        StageKind::ParallelLeafStage,
    ];

    /// The five stages of a mining cycle, in order.
    pub const CYCLE: [StageKind; 5] = [
        StageKind::TreeCheck,
        StageKind::ResourceSearch,
        StageKind::SkillBuild,
        StageKind::SkillTest,
        StageKind::Refresh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::TreeCheck => "tree_check",
            StageKind::ResourceSearch => "resource_search",
            StageKind::SkillBuild => "skill_build",
            StageKind::SkillTest => "skill_test",
            StageKind::Refresh => "refresh",
            StageKind::DesignSkill => "design_skill",
            StageKind::Layer1Fix => "layer1_fix",
            StageKind::Layer2Benchmark => "layer2_benchmark",
            StageKind::Layer2Optimize => "layer2_optimize",
            StageKind::NoveltyCheck => "novelty_check",
            StageKind::ParallelLeafStage => "parallel_leaf_stage",
        }
    }

    /// Position within a cycle, for the five cycle stages.
    pub fn cycle_position(self) -> Option<usize> {
        Self::CYCLE.iter().position(|s| *s == self)
    }

    pub fn required_context(self) -> &'static [&'static str] {
        match self {
            StageKind::TreeCheck => &["repository_summary"],
            StageKind::DesignSkill => &["task_prompt"],
            StageKind::ParallelLeafStage => &["target_leaf", "artifact_directory"],
            _ => &[],
        }
    }

    fn mode(self) -> &'static str {
        match self {
            StageKind::DesignSkill => "design",
            StageKind::ParallelLeafStage => "leaf",
            StageKind::Layer1Fix => "repair",
            StageKind::Layer2Benchmark | StageKind::Layer2Optimize => "evaluate",
            StageKind::NoveltyCheck => "review",
            _ => "cycle",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageKind {
    type Err = StageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| StageError::UnknownStage(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effort {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageModel {
    pub model: String,
    pub effort: Effort,
}

/// Model and effort per stage. Always total over [`StageKind::ALL`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffortProfile(BTreeMap<StageKind, StageModel>);

pub const LARGE_MODEL: &str = "default-large";
pub const SMALL_MODEL: &str = "default-small";

impl Default for EffortProfile {
    fn default() -> Self {
        let map = StageKind::ALL
            .iter()
            .map(|k| {
                let model = match k {
                    StageKind::SkillTest
                    | StageKind::Layer1Fix
                    | StageKind::Layer2Benchmark
                    | StageKind::Layer2Optimize
                    | StageKind::NoveltyCheck => SMALL_MODEL,
                    _ => LARGE_MODEL,
                };
                let effort = if *k == StageKind::ResourceSearch {
                    Effort::High
                } else {
                    Effort::Medium
                };
                (
                    *k,
                    StageModel {
                        model: model.to_string(),
                        effort,
                    },
                )
            })
            .collect();
        Self(map)
    }
}

impl EffortProfile {
    pub fn get(&self, stage: StageKind) -> &StageModel {
        self.0.get(&stage).expect("effort profile is total")
    }

    pub fn set(&mut self, stage: StageKind, model: StageModel) {
        self.0.insert(stage, model);
    }

    /// Default profile with overrides; overrides cannot remove stages.
    pub fn with_overrides(overrides: &BTreeMap<StageKind, StageModel>) -> Self {
        let mut p = Self::default();
        for (k, v) in overrides {
            p.set(*k, v.clone());
        }
        p
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StageKind, &StageModel)> {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub stage: StageKind,
    pub system_text: String,
    pub input_fields: BTreeMap<String, String>,
    pub user_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StageError {
    #[error("stage {stage} requires context field {field}")]
    MissingContextField { stage: StageKind, field: String },
    #[error("unknown stage {0}")]
    UnknownStage(String),
    #[error("response is not a single JSON document: {0}")]
    NotASingleDocument(String),
    #[error("{stage} response violates its schema at {field}: {reason}")]
    SchemaViolation {
        stage: StageKind,
        field: String,
        reason: String,
    },
}

const SHARED_RULES: &str = "Answer with one JSON object and nothing else: no prose before or after it, no code fences. \
Use exactly the fields of the stage schema. Do not invent locators, scores or commands you cannot justify.";

fn template(stage: StageKind) -> &'static str {
    match stage {
        StageKind::TreeCheck => {
            "You steer one mining cycle over a skill library organised as a domain tree. \
Read the repository summary and the ranked leaves, then name the leaves worth mining now. \
Prefer gaps over polish and reuse existing repository scripts instead of rewriting them. \
Never touch shared registry files yourself; describe tree edits in proposed_edits."
        }
        StageKind::ResourceSearch => {
            "List concrete resources for the focus leaves: repositories, papers, notebooks, documentation, APIs, \
databases, workflows or services. Give each a canonical locator and an integer authority_rank where larger \
means more authoritative."
        }
        StageKind::SkillBuild => {
            "Turn the recorded resources into at most three candidate skills for the focus leaf. \
Each candidate is a full operational contract: scope, inputs, outputs, environment, ordered steps, \
provenance, example invocations and test commands, plus any script files it needs."
        }
        StageKind::SkillTest => {
            "Summarise the execution log of a skill test and state whether the skill passed, failed, or the \
harness itself errored."
        }
        StageKind::Refresh => {
            "Propose registry and tree updates that follow from this cycle's results. \
Only list edits that the recorded outcomes support."
        }
        StageKind::DesignSkill => {
            "Design one skill for the user's task. Say whether more resources are needed before building; \
ask for them whenever the task depends on tools you have not seen. Return the contract, the \
resources it relies on and a test plan."
        }
        StageKind::Layer1Fix => {
            "A skill failed its smoke test. Diagnose the failure from the log, then give whole-file edits \
inside the package that make the test pass. Edit only scripts, examples and tests."
        }
        StageKind::Layer2Benchmark => {
            "Score the task output with and without the skill on a 0 to 1 scale and note what drove the gap."
        }
        StageKind::Layer2Optimize => {
            "The skill gives too little advantage over working without it. Propose whole-file edits that \
make it more useful and say whether to benchmark again."
        }
        StageKind::NoveltyCheck => {
            "Compare the candidate skill with the listed catalog entries. You may flag it for review or \
deprioritize it if the lexical checks look wrong; explain why."
        }
        StageKind::ParallelLeafStage => {
            "You work alone in an isolated workspace for one leaf. Write files only under the leaf's skill and \
test directories. Leave registries, site pages and top-level documents alone; \
write any change they need into repo_changes, blockers or next_steps."
        }
    }
}

/// Fixed system text plus a user text built from the context fields.
pub fn render_prompt(stage: StageKind, context: &BTreeMap<String, String>) -> Result<PromptBundle, StageError> {
    for field in stage.required_context() {
        match context.get(*field) {
            Some(v) if !v.trim().is_empty() => {}
            _ => {
                return Err(StageError::MissingContextField {
                    stage,
                    field: field.to_string(),
                })
            }
        }
    }
    let system_text = format!("{}\n\n{}", template(stage), SHARED_RULES);
    let mut user_text = format!("STAGE={}\nMODE={}\n", stage, stage.mode());
    for (k, v) in context {
        user_text.push_str(&format!("\n[{}]\n{}\n", k, v));
    }
    Ok(PromptBundle {
        stage,
        system_text,
        input_fields: context.clone(),
        user_text,
    })
}

// ---- schemas ----------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum Ty {
    Str,
    Int,
    Num,
    Bool,
    Strs,
    OneOf(&'static [&'static str]),
    Obj(&'static [Field]),
    List(&'static Ty),
    Any,
}

#[derive(Debug, Clone, Copy)]
struct Field {
    name: &'static str,
    ty: Ty,
    required: bool,
}

const fn req(name: &'static str, ty: Ty) -> Field {
    Field { name, ty, required: true }
}

const fn opt(name: &'static str, ty: Ty) -> Field {
    Field {
        name,
        ty,
        required: false,
    }
}

const RESOURCE_KINDS: &[&str] = &[
    "repository",
    "paper",
    "notebook",
    "documentation",
    "api",
    "database",
    "workflow",
    "service",
];
const OUTCOMES: &[&str] = &["pass", "fail", "error"];
const DECISIONS: &[&str] = &["novel", "redundant", "merge", "review", "deprioritize"];
const EDIT_OPS: &[&str] = &["prune", "split", "merge", "deprecate", "relink"];

const FILE: Ty = Ty::Obj(&[req("path", Ty::Str), req("content", Ty::Str)]);
const FILES: Ty = Ty::List(&FILE);
const INPUT: Ty = Ty::Obj(&[
    req("name", Ty::Str),
    opt("description", Ty::Str),
    opt("required", Ty::Bool),
    opt("kind", Ty::OneOf(&["file", "argument", "number"])),
]);
const OUTPUT: Ty = Ty::Obj(&[
    req("name", Ty::Str),
    opt("description", Ty::Str),
    opt("kind", Ty::OneOf(&["file", "stream"])),
]);
const CONTRACT_FIELDS: [Field; 9] = [
    req("task_scope", Ty::Str),
    req("inputs", Ty::List(&INPUT)),
    opt("outputs", Ty::List(&OUTPUT)),
    opt("environment_assumptions", Ty::Strs),
    req("execution_steps", Ty::Strs),
    req("provenance_links", Ty::Strs),
    opt("follow_up_guidance", Ty::Str),
    opt("example_invocations", Ty::Strs),
    opt("test_commands", Ty::Strs),
];
const CONTRACT: Ty = Ty::Obj(&CONTRACT_FIELDS);
const CANDIDATE: Ty = Ty::Obj(&[
    req("name", Ty::Str),
    CONTRACT_FIELDS[0],
    CONTRACT_FIELDS[1],
    CONTRACT_FIELDS[2],
    CONTRACT_FIELDS[3],
    CONTRACT_FIELDS[4],
    CONTRACT_FIELDS[5],
    CONTRACT_FIELDS[6],
    CONTRACT_FIELDS[7],
    CONTRACT_FIELDS[8],
    opt("artifacts", FILES),
    opt("leaf_label", Ty::Str),
]);
const PARTITION: Ty = Ty::Obj(&[req("label", Ty::Str), req("skills", Ty::Strs)]);
const EDIT: Ty = Ty::Obj(&[
    req("op", Ty::OneOf(EDIT_OPS)),
    opt("path", Ty::Str),
    opt("other", Ty::Str),
    opt("survivor", Ty::Str),
    opt("reason", Ty::Str),
    opt("skill_id", Ty::Str),
    opt("leaf_path", Ty::Str),
    opt("partitions", Ty::List(&PARTITION)),
]);
const RESOURCE: Ty = Ty::Obj(&[
    req("kind", Ty::OneOf(RESOURCE_KINDS)),
    req("locator", Ty::Str),
    req("leaf_path", Ty::Str),
    req("authority_rank", Ty::Int),
]);

const TREE_CHECK: &[Field] = &[
    req("focus_leaves", Ty::Strs),
    req("rationale", Ty::Str),
    opt("proposed_edits", Ty::List(&EDIT)),
];
const RESOURCE_SEARCH: &[Field] = &[req("resources", Ty::List(&RESOURCE))];
const SKILL_BUILD: &[Field] = &[req("candidates", Ty::List(&CANDIDATE))];
const SKILL_TEST: &[Field] = &[req("verdict", Ty::OneOf(OUTCOMES)), req("log_summary", Ty::Str)];
const REFRESH: &[Field] = &[
    req("registry_updates", Ty::List(&EDIT)),
    req("tree_updates", Ty::List(&EDIT)),
];
const DESIGN_SKILL: &[Field] = &[
    req("contract", CONTRACT),
    req("resources_used", Ty::Strs),
    req("test_plan", Ty::Str),
    opt("needs_resources", Ty::Bool),
    opt("name", Ty::Str),
    opt("leaf_path", Ty::Str),
    opt("artifacts", FILES),
];
const LAYER1_FIX: &[Field] = &[req("diagnosis", Ty::Str), req("edits", FILES), req("retest", Ty::Bool)];
const LAYER2_BENCHMARK: &[Field] = &[
    req("with_skill_score", Ty::Num),
    req("baseline_score", Ty::Num),
    req("notes", Ty::Str),
];
const LAYER2_OPTIMIZE: &[Field] = &[req("actions", FILES), req("rebenchmark", Ty::Bool)];
const NOVELTY_CHECK: &[Field] = &[
    req("matches", Ty::List(&Ty::Any)),
    req("decision", Ty::OneOf(DECISIONS)),
    req("rationale", Ty::Str),
];
const LEAF_BODY: Ty = Ty::Obj(&[
    opt("resources", Ty::List(&RESOURCE)),
    opt("candidates", Ty::List(&CANDIDATE)),
    opt("files", FILES),
]);
const PARALLEL_LEAF_STAGE: &[Field] = &[
    req("stage", Ty::Str),
    req("payload", LEAF_BODY),
    req("repo_changes", Ty::Strs),
    req("blockers", Ty::Strs),
    req("next_steps", Ty::Strs),
];

fn schema(stage: StageKind) -> &'static [Field] {
    match stage {
        StageKind::TreeCheck => TREE_CHECK,
        StageKind::ResourceSearch => RESOURCE_SEARCH,
        StageKind::SkillBuild => SKILL_BUILD,
        StageKind::SkillTest => SKILL_TEST,
        StageKind::Refresh => REFRESH,
        StageKind::DesignSkill => DESIGN_SKILL,
        StageKind::Layer1Fix => LAYER1_FIX,
        StageKind::Layer2Benchmark => LAYER2_BENCHMARK,
        StageKind::Layer2Optimize => LAYER2_OPTIMIZE,
        StageKind::NoveltyCheck => NOVELTY_CHECK,
        StageKind::ParallelLeafStage => PARALLEL_LEAF_STAGE,
    }
}

struct Checker {
    stage: StageKind,
    unknown: Vec<String>,
}

impl Checker {
    fn violation(&self, field: &str, reason: &str) -> StageError {
        StageError::SchemaViolation {
            stage: self.stage,
            field: field.to_string(),
            reason: reason.to_string(),
        }
    }

    fn check_object(&mut self, prefix: &str, obj: &Map<String, Value>, fields: &[Field]) -> Result<(), StageError> {
        for f in fields {
            let name = join(prefix, f.name);
            match obj.get(f.name) {
                None | Some(Value::Null) if f.required => return Err(self.violation(&name, "missing")),
                None | Some(Value::Null) => {}
                Some(v) => self.check(&name, v, &f.ty)?,
            }
        }
        for key in obj.keys() {
            if !fields.iter().any(|f| f.name == key) {
                self.unknown.push(join(prefix, key));
            }
        }
        Ok(())
    }

    fn check(&mut self, name: &str, v: &Value, ty: &Ty) -> Result<(), StageError> {
        match ty {
            Ty::Any => Ok(()),
            Ty::Str if v.is_string() => Ok(()),
            Ty::Str => Err(self.violation(name, "expected a string")),
            Ty::Int if v.is_u64() || v.is_i64() => Ok(()),
            Ty::Int => Err(self.violation(name, "expected an integer")),
            Ty::Num if v.is_number() => Ok(()),
            Ty::Num => Err(self.violation(name, "expected a number")),
            Ty::Bool if v.is_boolean() => Ok(()),
            Ty::Bool => Err(self.violation(name, "expected a boolean")),
            Ty::Strs => match v.as_array() {
                Some(items) => match items.iter().position(|i| !i.is_string()) {
                    Some(i) => Err(self.violation(&format!("{}[{}]", name, i), "expected a string")),
                    None => Ok(()),
                },
                None => Err(self.violation(name, "expected a list of strings")),
            },
            Ty::OneOf(options) => match v.as_str() {
                Some(s) if options.contains(&s) => Ok(()),
                _ => Err(self.violation(name, &format!("expected one of {}", options.join("|")))),
            },
            Ty::Obj(fields) => match v.as_object() {
                Some(obj) => self.check_object(name, obj, fields),
                None => Err(self.violation(name, "expected an object")),
            },
            Ty::List(inner) => match v.as_array() {
                Some(items) => {
                    for (i, item) in items.iter().enumerate() {
                        self.check(&format!("{}[{}]", name, i), item, inner)?;
                    }
                    Ok(())
                }
                None => Err(self.violation(name, "expected a list")),
            },
        }
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{}.{}", prefix, name)
    }
}

/// A schema-valid stage response. Unknown fields are kept and listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResponse {
    pub stage: StageKind,
    pub fields: Map<String, Value>,
    pub raw_text: String,
    pub unknown_fields: Vec<String>,
}

impl StageResponse {
    /// Canonical JSON text of the fields.
    pub fn serialize(&self) -> String {
        serde_json::to_string(&self.fields).unwrap_or_default()
    }

    pub fn parse<T: DeserializeOwned>(&self) -> Result<T, StageError> {
        serde_json::from_value(Value::Object(self.fields.clone())).map_err(|e| StageError::SchemaViolation {
            stage: self.stage,
            field: "<typed>".to_string(),
            reason: e.to_string(),
        })
    }

    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(self.serialize().as_bytes())
    }
}

pub fn validate_response(stage: StageKind, raw_text: &str) -> Result<StageResponse, StageError> {
    let trimmed = raw_text.trim();
    if !trimmed.starts_with('{') {
        return Err(StageError::NotASingleDocument(String::from(
            "text before the JSON object",
        )));
    }
    let value: Value =
        serde_json::from_str(trimmed).map_err(|e| StageError::NotASingleDocument(e.to_string()))?;
    let Value::Object(fields) = value else {
        return Err(StageError::NotASingleDocument(String::from("not an object")));
    };
    let mut checker = Checker {
        stage,
        unknown: Vec::new(),
    };
    checker.check_object("", &fields, schema(stage))?;
    Ok(StageResponse {
        stage,
        fields,
        raw_text: raw_text.to_string(),
        unknown_fields: checker.unknown,
    })
}

// ---- typed payloads --------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileWrite {
    pub path: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub label: String,
    pub skills: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    Prune,
    Split,
    Merge,
    Deprecate,
    Relink,
}

/// One provider-proposed edit to the tree or registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub op: EditOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survivor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_path: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub partitions: Vec<Partition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeCheckPayload {
    pub focus_leaves: Vec<String>,
    pub rationale: String,
    #[serde(default)]
    pub proposed_edits: Vec<Edit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceCandidate {
    pub kind: crate::registry::ResourceKind,
    pub locator: String,
    pub leaf_path: String,
    pub authority_rank: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceSearchPayload {
    pub resources: Vec<ResourceCandidate>,
}

/// A built candidate: contract fields plus name, files and placement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillCandidate {
    pub name: String,
    #[serde(flatten)]
    pub contract: crate::contract::SkillContract,
    #[serde(default)]
    pub artifacts: Vec<FileWrite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillBuildPayload {
    pub candidates: Vec<SkillCandidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillTestPayload {
    pub verdict: crate::registry::Outcome,
    pub log_summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefreshPayload {
    pub registry_updates: Vec<Edit>,
    pub tree_updates: Vec<Edit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignPayload {
    pub contract: crate::contract::SkillContract,
    pub resources_used: Vec<String>,
    pub test_plan: String,
    #[serde(default)]
    pub needs_resources: bool,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub leaf_path: Option<String>,
    #[serde(default)]
    pub artifacts: Vec<FileWrite>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixPayload {
    pub diagnosis: String,
    pub edits: Vec<FileWrite>,
    pub retest: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPayload {
    pub with_skill_score: f64,
    pub baseline_score: f64,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizePayload {
    pub actions: Vec<FileWrite>,
    pub rebenchmark: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyPayload {
    pub matches: Vec<Value>,
    pub decision: crate::novelty::Decision,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LeafStageBody {
    #[serde(default)]
    pub resources: Vec<ResourceCandidate>,
    #[serde(default)]
    pub candidates: Vec<SkillCandidate>,
    #[serde(default)]
    pub files: Vec<FileWrite>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafStagePayload {
    pub stage: String,
    pub payload: LeafStageBody,
    pub repo_changes: Vec<String>,
    pub blockers: Vec<String>,
    pub next_steps: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn ctx(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn default_profile_is_total_with_one_high_stage() {
        let p = EffortProfile::default();
        assert_eq!(p.iter().count(), StageKind::ALL.len());
        let high: Vec<StageKind> = p.iter().filter(|(_, m)| m.effort == Effort::High).map(|(k, _)| *k).collect();
        assert_eq!(high, [StageKind::ResourceSearch]);
    }

    #[test]
    fn prompts_check_required_context_and_are_pure() {
        let c = ctx(&[("repository_summary", "two leaves, no skills")]);
        let a = render_prompt(StageKind::TreeCheck, &c).unwrap();
        assert!(a.system_text.contains("reuse existing repository scripts"));
        assert!(a.user_text.starts_with("STAGE=tree_check\nMODE=cycle\n"));
        assert_eq!(a, render_prompt(StageKind::TreeCheck, &c).unwrap());
        assert_eq!(
            render_prompt(StageKind::DesignSkill, &BTreeMap::new()).unwrap_err(),
            StageError::MissingContextField {
                stage: StageKind::DesignSkill,
                field: "task_prompt".into()
            }
        );
    }

    #[test]
    fn leading_prose_is_rejected() {
        let err = validate_response(StageKind::SkillTest, "Sure! {\"verdict\":\"pass\",\"log_summary\":\"\"}").unwrap_err();
        assert!(matches!(err, StageError::NotASingleDocument(_)));
        let err = validate_response(StageKind::SkillTest, "{\"verdict\":\"pass\",\"log_summary\":\"\"} {}").unwrap_err();
        assert!(matches!(err, StageError::NotASingleDocument(_)));
    }

    #[test]
    fn leaf_stage_requires_followup_fields() {
        let raw = json!({"stage": "skill_build", "payload": {}, "repo_changes": [], "next_steps": []}).to_string();
        match validate_response(StageKind::ParallelLeafStage, &raw).unwrap_err() {
            StageError::SchemaViolation { field, .. } => assert_eq!(field, "blockers"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn nested_violations_name_the_field_and_unknowns_are_kept() {
        let raw = json!({"resources": [
            {"kind": "paper", "locator": "a", "leaf_path": "r/x", "authority_rank": 1},
            {"kind": "blog", "locator": "b", "leaf_path": "r/x", "authority_rank": 1}
        ]})
        .to_string();
        match validate_response(StageKind::ResourceSearch, &raw).unwrap_err() {
            StageError::SchemaViolation { field, .. } => assert_eq!(field, "resources[1].kind"),
            e => panic!("{e:?}"),
        }
        let raw = json!({"verdict": "fail", "log_summary": "exit 1", "extra": 3}).to_string();
        let r = validate_response(StageKind::SkillTest, &raw).unwrap();
        assert_eq!(r.unknown_fields, ["extra"]);
        assert_eq!(r.fields["extra"], 3);
        let again = validate_response(StageKind::SkillTest, &r.serialize()).unwrap();
        assert_eq!(again.fields, r.fields);
    }

    #[test]
    fn skill_build_parses_to_candidates() {
        let raw = json!({"candidates": [{
            "name": "count lines",
            "task_scope": "Count lines",
            "inputs": [{"name": "path", "kind": "file"}],
            "execution_steps": ["wc -l path"],
            "provenance_links": ["https://example.org/wc"],
            "test_commands": ["sh tests/smoke.sh"],
            "artifacts": [{"path": "tests/smoke.sh", "content": "exit 0\n"}]
        }]})
        .to_string();
        let r = validate_response(StageKind::SkillBuild, &raw).unwrap();
        let p: SkillBuildPayload = r.parse().unwrap();
        assert_eq!(p.candidates[0].contract.task_scope, "Count lines");
        assert_eq!(p.candidates[0].artifacts.len(), 1);
    }
}
