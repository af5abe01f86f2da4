//! In-memory registry of skills, resources and verification records.
//!
//! Every mutation appends a [`RecordLine`] to an outbox. The std store drains
//! the outbox into the append-only record files, so the files are a log of
//! every accepted change and replaying them rebuilds the registry exactly.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::novelty::Decision;
use crate::path::{is_slug, slugify, NodePath};
use crate::tree::{DomainTree, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillStatus {
    Untested,
    Repaired,
    Verified,
    Review,
    Deprecated,
    Removed,
}

impl SkillStatus {
    pub const ALL: [SkillStatus; 6] = [
        SkillStatus::Untested,
        SkillStatus::Repaired,
        SkillStatus::Verified,
        SkillStatus::Review,
        SkillStatus::Deprecated,
        SkillStatus::Removed,
    ];

    /// The status machine. Staying in place is not a transition.
    pub fn can_transition_to(self, to: SkillStatus) -> bool {
        use SkillStatus::*;
        matches!(
            (self, to),
            (Untested, Repaired)
                | (Untested, Verified)
                | (Untested, Removed)
                | (Repaired, Verified)
                | (Repaired, Removed)
                | (Verified, Review)
                | (Verified, Deprecated)
                | (Review, Verified)
                | (Review, Deprecated)
        )
    }

    /// Deprecated and removed entries are retired; everything else is live.
    pub fn is_live(self) -> bool {
        !matches!(self, SkillStatus::Deprecated | SkillStatus::Removed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SkillStatus::Untested => "untested",
            SkillStatus::Repaired => "repaired",
            SkillStatus::Verified => "verified",
            SkillStatus::Review => "review",
            SkillStatus::Deprecated => "deprecated",
            SkillStatus::Removed => "removed",
        }
    }
}

impl fmt::Display for SkillStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Starter,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    Repository,
    Paper,
    Notebook,
    Documentation,
    Api,
    Database,
    Workflow,
    Service,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Execution,
    Synthetic,
    System,
    Benchmark,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Execution => "execution",
            Layer::Synthetic => "synthetic",
            Layer::System => "system",
            Layer::Benchmark => "benchmark",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillEntry {
    pub id: String,
    pub name: String,
    pub leaf_path: NodePath,
    pub status: SkillStatus,
    pub package_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoke_target: Option<String>,
    pub provenance: Vec<String>,
    pub created_cycle: u64,
    pub updated_cycle: u64,
    pub confidence: Confidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceEntry {
    pub id: String,
    pub kind: ResourceKind,
    pub locator: String,
    pub leaf_paths: BTreeSet<NodePath>,
    pub retrieved_cycle: u64,
    pub authority_rank: u8,
}

impl ResourceEntry {
    pub fn new(kind: ResourceKind, locator: &str, leaf: NodePath, cycle: u64, authority_rank: u8) -> Self {
        let mut leaf_paths = BTreeSet::new();
        leaf_paths.insert(leaf);
        Self {
            id: resource_id(locator),
            kind,
            locator: locator.to_string(),
            leaf_paths,
            retrieved_cycle: cycle,
            authority_rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub skill_id: String,
    pub layer: Layer,
    pub outcome: Outcome,
    pub attempt: u32,
    pub report_locator: String,
    pub cycle: u64,
}

/// One adjudication, kept so the novel fraction is recomputable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoveltyRecord {
    pub skill_id: String,
    pub decision: Decision,
    pub rationale: String,
    #[serde(default)]
    pub matches: Vec<String>,
    pub cycle: u64,
}

/// A single line of one of the append-only record files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordLine {
    Skill(SkillEntry),
    Resource(ResourceEntry),
    Verification(VerificationRecord),
    Novelty(NoveltyRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub id: String,
    pub created: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("unknown skill {0}")]
    UnknownSkill(String),
    #[error("unknown resource {0}")]
    UnknownResource(String),
    #[error("skill id {id} already belongs to leaf {existing}, not {requested}")]
    IdCollision {
        id: String,
        existing: String,
        requested: String,
    },
    #[error("new skill {id} must start untested, got {status}")]
    InvalidStatus { id: String, status: SkillStatus },
    #[error("illegal transition for {skill}: {from} -> {to}")]
    IllegalTransition {
        skill: String,
        from: SkillStatus,
        to: SkillStatus,
    },
    #[error("invalid entry {id}: {reason}")]
    InvalidEntry { id: String, reason: String },
    #[error("attempt {got} for {skill}/{layer} is out of sequence, expected {expected}")]
    AttemptOutOfSequence {
        skill: String,
        layer: Layer,
        expected: u32,
        got: u32,
    },
    #[error("registry and tree disagree: {0}")]
    Inconsistent(String),
}

/// Resource ids are a pure function of the locator.
pub fn resource_id(locator: &str) -> String {
    let h = sha256_hex(locator.as_bytes());
    format!("res-{}", &h[..12])
}

/// The status a verification record moves a skill to, if any.
///
/// Benchmark failures never change status on their own; the optimize loop
/// decides on review after its budget is spent.
pub fn status_effect(current: SkillStatus, layer: Layer, outcome: Outcome, attempt: u32) -> Option<SkillStatus> {
    use SkillStatus::*;
    let pass = outcome == Outcome::Pass;
    match (layer, current, pass) {
        (Layer::Execution, Untested, true) if attempt <= 1 => Some(Verified),
        (Layer::Execution, Untested, true) => Some(Repaired),
        (Layer::Execution, Review, true) => Some(Verified),
        (Layer::Execution, Verified, false) => Some(Review),
        (Layer::Synthetic | Layer::System, Repaired, true) => Some(Verified),
        (Layer::Synthetic | Layer::System, Verified, false) => Some(Review),
        (Layer::Benchmark, Review, true) => Some(Verified),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LibraryStats {
    pub skill_count: usize,
    pub verified_count: usize,
    pub domain_count: usize,
    pub subdomain_count: usize,
    pub resource_count: usize,
    pub novel_fraction: f64,
    pub adjudicated: usize,
}

impl LibraryStats {
    /// Novel fraction as a one-decimal percentage, e.g. `71.1%`.
    pub fn novel_percent(&self) -> String {
        format!("{:.1}%", self.novel_fraction * 100.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    skills: BTreeMap<String, SkillEntry>,
    history: BTreeMap<String, Vec<SkillStatus>>,
    resources: BTreeMap<String, ResourceEntry>,
    locators: BTreeMap<String, String>,
    verifications: Vec<VerificationRecord>,
    attempts: BTreeMap<(String, Layer), u32>,
    verdicts: Vec<NoveltyRecord>,
    outbox: Vec<RecordLine>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a registry from its record lines, checking every step.
    pub fn replay<I: IntoIterator<Item = RecordLine>>(lines: I) -> Result<Self, RegistryError> {
        let mut reg = Self::new();
        for line in lines {
            match line {
                RecordLine::Skill(e) => {
                    reg.check_skill_line(&e, true)?;
                    reg.apply_skill(e);
                }
                RecordLine::Resource(r) => reg.apply_resource(r),
                RecordLine::Verification(v) => {
                    reg.check_attempt(&v)?;
                    reg.apply_verification(v);
                }
                RecordLine::Novelty(n) => reg.verdicts.push(n),
            }
        }
        reg.outbox.clear();
        Ok(reg)
    }

    pub fn drain_outbox(&mut self) -> Vec<RecordLine> {
        core::mem::take(&mut self.outbox)
    }

    pub fn pending_lines(&self) -> &[RecordLine] {
        &self.outbox
    }

    // ---- reads -----------------------------------------------------------------

    pub fn skill(&self, id: &str) -> Option<&SkillEntry> {
        self.skills.get(id)
    }

    pub fn skills(&self) -> impl Iterator<Item = &SkillEntry> {
        self.skills.values()
    }

    pub fn skill_count(&self) -> usize {
        self.skills.len()
    }

    pub fn history(&self, id: &str) -> &[SkillStatus] {
        self.history.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn resource(&self, id: &str) -> Option<&ResourceEntry> {
        self.resources.get(id)
    }

    pub fn resource_by_locator(&self, locator: &str) -> Option<&ResourceEntry> {
        self.locators.get(locator).and_then(|id| self.resources.get(id))
    }

    pub fn resources(&self) -> impl Iterator<Item = &ResourceEntry> {
        self.resources.values()
    }

    pub fn resource_count(&self) -> usize {
        self.resources.len()
    }

    pub fn verifications(&self) -> &[VerificationRecord] {
        &self.verifications
    }

    pub fn verifications_for<'a>(&'a self, skill_id: &'a str) -> impl Iterator<Item = &'a VerificationRecord> + 'a {
        self.verifications.iter().filter(move |v| v.skill_id == skill_id)
    }

    /// Number of records so far for (skill, layer).
    pub fn attempts(&self, skill_id: &str, layer: Layer) -> u32 {
        self.attempts
            .get(&(skill_id.to_string(), layer))
            .copied()
            .unwrap_or(0)
    }

    pub fn next_attempt(&self, skill_id: &str, layer: Layer) -> u32 {
        self.attempts(skill_id, layer) + 1
    }

    pub fn verdicts(&self) -> &[NoveltyRecord] {
        &self.verdicts
    }

    pub fn latest_verdict(&self, skill_id: &str) -> Option<&NoveltyRecord> {
        self.verdicts.iter().rev().find(|v| v.skill_id == skill_id)
    }

    /// Deterministic id for a new skill: slug of the leaf label and name, with
    /// `-2`, `-3`, ... appended on collision.
    pub fn allocate_skill_id(&self, leaf: &NodePath, name: &str) -> String {
        let mut base = slugify(&format!("{} {}", leaf.last(), name));
        if base.is_empty() {
            base = String::from("skill");
        }
        if !self.skills.contains_key(&base) {
            return base;
        }
        (2u32..)
            .map(|n| format!("{}-{}", base, n))
            .find(|id| !self.skills.contains_key(id))
            .expect("unbounded suffix range")
    }

    // ---- writes ----------------------------------------------------------------

    /// Inserts a new untested skill or updates an existing one along a legal
    /// transition. Each accepted call appends one history line.
    pub fn upsert_skill(&mut self, entry: SkillEntry) -> Result<Receipt, RegistryError> {
        self.check_skill_line(&entry, false)?;
        let created = !self.skills.contains_key(&entry.id);
        let id = entry.id.clone();
        self.outbox.push(RecordLine::Skill(entry.clone()));
        self.apply_skill(entry);
        Ok(Receipt { id, created })
    }

    /// Adds a resource, or unions leaf paths into the existing entry with the
    /// same locator.
    pub fn record_resource(&mut self, resource: ResourceEntry) -> Result<Receipt, RegistryError> {
        if resource.locator.trim().is_empty() {
            return Err(RegistryError::InvalidEntry {
                id: resource.id,
                reason: "empty locator".to_string(),
            });
        }
        let merged = match self.resource_by_locator(&resource.locator) {
            Some(existing) => {
                if resource.leaf_paths.is_subset(&existing.leaf_paths) {
                    return Ok(Receipt {
                        id: existing.id.clone(),
                        created: false,
                    });
                }
                let mut next = existing.clone();
                next.leaf_paths.extend(resource.leaf_paths);
                next
            }
            None => ResourceEntry {
                id: resource_id(&resource.locator),
                ..resource
            },
        };
        let created = !self.resources.contains_key(&merged.id);
        let id = merged.id.clone();
        self.outbox.push(RecordLine::Resource(merged.clone()));
        self.apply_resource(merged);
        Ok(Receipt { id, created })
    }

    /// Appends a verification record and applies its status effect.
    pub fn set_verification(
        &mut self,
        skill_id: &str,
        record: VerificationRecord,
    ) -> Result<SkillEntry, RegistryError> {
        let current = self
            .skills
            .get(skill_id)
            .ok_or_else(|| RegistryError::UnknownSkill(skill_id.to_string()))?
            .clone();
        if record.skill_id != skill_id {
            return Err(RegistryError::InvalidEntry {
                id: skill_id.to_string(),
                reason: format!("record names skill {}", record.skill_id),
            });
        }
        self.check_attempt(&record)?;
        let target = status_effect(current.status, record.layer, record.outcome, record.attempt);
        if let Some(to) = target {
            if !current.status.can_transition_to(to) {
                return Err(RegistryError::IllegalTransition {
                    skill: skill_id.to_string(),
                    from: current.status,
                    to,
                });
            }
        }
        let cycle = record.cycle;
        self.outbox.push(RecordLine::Verification(record.clone()));
        self.apply_verification(record);
        match target {
            Some(to) => self.set_status(skill_id, to, cycle),
            None => Ok(current),
        }
    }

    pub fn set_status(&mut self, skill_id: &str, to: SkillStatus, cycle: u64) -> Result<SkillEntry, RegistryError> {
        let mut entry = self
            .skills
            .get(skill_id)
            .ok_or_else(|| RegistryError::UnknownSkill(skill_id.to_string()))?
            .clone();
        if entry.status == to {
            return Ok(entry);
        }
        if !entry.status.can_transition_to(to) {
            return Err(RegistryError::IllegalTransition {
                skill: skill_id.to_string(),
                from: entry.status,
                to,
            });
        }
        entry.status = to;
        entry.updated_cycle = cycle;
        self.upsert_skill(entry.clone())?;
        Ok(entry)
    }

    /// Moves a skill to another leaf after a tree merge or split.
    pub fn relink_skill(&mut self, skill_id: &str, leaf: &NodePath, cycle: u64) -> Result<SkillEntry, RegistryError> {
        let mut entry = self
            .skills
            .get(skill_id)
            .ok_or_else(|| RegistryError::UnknownSkill(skill_id.to_string()))?
            .clone();
        if &entry.leaf_path == leaf {
            return Ok(entry);
        }
        entry.leaf_path = leaf.clone();
        entry.updated_cycle = cycle;
        self.outbox.push(RecordLine::Skill(entry.clone()));
        self.apply_skill(entry.clone());
        Ok(entry)
    }

    /// Unions `from` into the survivor's provenance, keeping first-seen order.
    pub fn merge_provenance(
        &mut self,
        survivor: &str,
        from: &[String],
        cycle: u64,
    ) -> Result<SkillEntry, RegistryError> {
        let mut entry = self
            .skills
            .get(survivor)
            .ok_or_else(|| RegistryError::UnknownSkill(survivor.to_string()))?
            .clone();
        let before = entry.provenance.len();
        for id in from {
            if !entry.provenance.contains(id) {
                entry.provenance.push(id.clone());
            }
        }
        if entry.provenance.len() == before {
            return Ok(entry);
        }
        entry.updated_cycle = cycle;
        self.upsert_skill(entry.clone())?;
        Ok(entry)
    }

    pub fn record_verdict(&mut self, record: NoveltyRecord) -> Result<(), RegistryError> {
        if !self.skills.contains_key(&record.skill_id) {
            return Err(RegistryError::UnknownSkill(record.skill_id));
        }
        self.outbox.push(RecordLine::Novelty(record.clone()));
        self.verdicts.push(record);
        Ok(())
    }

    fn check_skill_line(&self, entry: &SkillEntry, replaying: bool) -> Result<(), RegistryError> {
        let invalid = |reason: &str| RegistryError::InvalidEntry {
            id: entry.id.clone(),
            reason: reason.to_string(),
        };
        if !is_slug(&entry.id) {
            return Err(invalid("id is not a lowercase hyphenated slug"));
        }
        if entry.name.trim().is_empty() {
            return Err(invalid("empty name"));
        }
        if entry.provenance.is_empty() {
            return Err(invalid("empty provenance"));
        }
        if entry.package_path.starts_with('/') || entry.package_path.split('/').any(|c| c == "..") {
            return Err(invalid("package path must be relative"));
        }
        match self.skills.get(&entry.id) {
            None => {
                if entry.status != SkillStatus::Untested {
                    return Err(RegistryError::InvalidStatus {
                        id: entry.id.clone(),
                        status: entry.status,
                    });
                }
            }
            Some(existing) => {
                if !replaying && existing.leaf_path != entry.leaf_path {
                    return Err(RegistryError::IdCollision {
                        id: entry.id.clone(),
                        existing: existing.leaf_path.to_string(),
                        requested: entry.leaf_path.to_string(),
                    });
                }
                if existing.status != entry.status && !existing.status.can_transition_to(entry.status) {
                    return Err(RegistryError::IllegalTransition {
                        skill: entry.id.clone(),
                        from: existing.status,
                        to: entry.status,
                    });
                }
            }
        }
        Ok(())
    }

    fn check_attempt(&self, record: &VerificationRecord) -> Result<(), RegistryError> {
        let expected = self.next_attempt(&record.skill_id, record.layer);
        if record.attempt != expected {
            return Err(RegistryError::AttemptOutOfSequence {
                skill: record.skill_id.clone(),
                layer: record.layer,
                expected,
                got: record.attempt,
            });
        }
        Ok(())
    }

    fn apply_skill(&mut self, entry: SkillEntry) {
        self.history
            .entry(entry.id.clone())
            .or_default()
            .push(entry.status);
        self.skills.insert(entry.id.clone(), entry);
    }

    fn apply_resource(&mut self, resource: ResourceEntry) {
        self.locators
            .insert(resource.locator.clone(), resource.id.clone());
        self.resources.insert(resource.id.clone(), resource);
    }

    fn apply_verification(&mut self, record: VerificationRecord) {
        *self
            .attempts
            .entry((record.skill_id.clone(), record.layer))
            .or_insert(0) = record.attempt;
        self.verifications.push(record);
    }

    // ---- checks ----------------------------------------------------------------

    /// Every cross-reference and replay violation between registry and tree.
    pub fn integrity_check(&self, tree: &DomainTree) -> Vec<String> {
        let mut out = Vec::new();
        let executed: BTreeSet<&str> = self
            .verifications
            .iter()
            .filter(|v| v.layer == Layer::Execution && v.outcome == Outcome::Pass)
            .map(|v| v.skill_id.as_str())
            .collect();
        for (id, entry) in &self.skills {
            let history = self.history(id);
            match history.first() {
                Some(SkillStatus::Untested) => {}
                _ => out.push(format!("skill {}: history does not start untested", id)),
            }
            for w in history.windows(2) {
                if w[0] != w[1] && !w[0].can_transition_to(w[1]) {
                    out.push(format!("skill {}: history step {} -> {} is illegal", id, w[0], w[1]));
                }
            }
            if history.last() != Some(&entry.status) {
                out.push(format!("skill {}: history does not replay to {}", id, entry.status));
            }
            if entry.status == SkillStatus::Verified && !executed.contains(id.as_str()) {
                out.push(format!("skill {}: verified without a passing execution record", id));
            }
            for r in &entry.provenance {
                if !self.resources.contains_key(r) {
                    out.push(format!("skill {}: provenance {} is not a recorded resource", id, r));
                }
            }
            if entry.status.is_live() {
                match tree.get(&entry.leaf_path) {
                    None => out.push(format!("skill {}: leaf {} is missing", id, entry.leaf_path)),
                    Some(node) if !node.is_leaf() || !node.status.is_live() => out.push(format!(
                        "skill {}: leaf {} is {:?}/{:?}",
                        id, entry.leaf_path, node.kind, node.status
                    )),
                    Some(node) if !node.linked_skills.contains(id) => {
                        out.push(format!("skill {}: not linked by leaf {}", id, entry.leaf_path))
                    }
                    Some(_) => {}
                }
            }
        }
        for node in tree.nodes() {
            for s in &node.linked_skills {
                match self.skills.get(s) {
                    None => out.push(format!("node {}: links unknown skill {}", node.path, s)),
                    Some(e) if node.status.is_live() => {
                        if !e.status.is_live() || e.leaf_path != node.path {
                            out.push(format!("node {}: links retired or foreign skill {}", node.path, s));
                        }
                        let verified = e.status == SkillStatus::Verified;
                        if verified != node.verified_skills.contains(s) {
                            out.push(format!("node {}: verified flag for {} is stale", node.path, s));
                        }
                    }
                    Some(_) => {}
                }
            }
            for r in &node.linked_resources {
                if !self.resources.contains_key(r) {
                    out.push(format!("node {}: links unknown resource {}", node.path, r));
                }
            }
        }
        for r in self.resources.values() {
            for p in &r.leaf_paths {
                if !tree.contains(p) {
                    out.push(format!("resource {}: leaf {} is missing", r.id, p));
                }
            }
        }
        let mut expected: BTreeMap<(&str, Layer), u32> = BTreeMap::new();
        for v in &self.verifications {
            if !self.skills.contains_key(&v.skill_id) {
                out.push(format!("verification for unknown skill {}", v.skill_id));
            }
            let next = expected.entry((v.skill_id.as_str(), v.layer)).or_insert(0);
            *next += 1;
            if v.attempt != *next {
                out.push(format!(
                    "skill {}: {} attempt {} out of sequence",
                    v.skill_id, v.layer, v.attempt
                ));
                *next = v.attempt;
            }
        }
        for v in &self.verdicts {
            if !self.skills.contains_key(&v.skill_id) {
                out.push(format!("verdict for unknown skill {}", v.skill_id));
            }
        }
        out.extend(tree.violations());
        out
    }

    /// Library summary; fails if a live skill sits on a missing or retired leaf.
    pub fn snapshot_stats(&self, tree: &DomainTree) -> Result<LibraryStats, RegistryError> {
        for e in self.skills.values().filter(|e| e.status.is_live()) {
            match tree.get(&e.leaf_path) {
                Some(n) if n.kind == NodeKind::Leaf && n.status.is_live() => {}
                Some(n) => {
                    return Err(RegistryError::Inconsistent(format!(
                        "skill {} points at {} leaf {}",
                        e.id,
                        match n.status {
                            crate::tree::NodeStatus::Pruned => "pruned",
                            crate::tree::NodeStatus::Merged => "merged",
                            _ => "non-leaf",
                        },
                        e.leaf_path
                    )))
                }
                None => {
                    return Err(RegistryError::Inconsistent(format!(
                        "skill {} points at missing leaf {}",
                        e.id, e.leaf_path
                    )))
                }
            }
        }
        let summary = tree.coverage_summary();
        let mut latest: BTreeMap<&str, Decision> = BTreeMap::new();
        for v in &self.verdicts {
            latest.insert(v.skill_id.as_str(), v.decision);
        }
        let adjudicated = latest.len();
        let novel = latest.values().filter(|d| **d == Decision::Novel).count();
        let novel_fraction = if adjudicated == 0 {
            0.0
        } else {
            novel as f64 / adjudicated as f64
        };
        Ok(LibraryStats {
            skill_count: self.skills.values().filter(|e| e.status.is_live()).count(),
            verified_count: self
                .skills
                .values()
                .filter(|e| e.status == SkillStatus::Verified)
                .count(),
            domain_count: summary.domains,
            subdomain_count: summary.subdomains,
            resource_count: self.resources.len(),
            novel_fraction,
            adjudicated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf() -> NodePath {
        "r/d/leaf".parse().unwrap()
    }

    fn entry(id: &str) -> SkillEntry {
        SkillEntry {
            id: id.to_string(),
            name: "Tool".to_string(),
            leaf_path: leaf(),
            status: SkillStatus::Untested,
            package_path: format!("skills/r/d/leaf/{}", id),
            smoke_target: None,
            provenance: alloc::vec![resource_id("https://example.org/tool")],
            created_cycle: 1,
            updated_cycle: 1,
            confidence: Confidence::Standard,
        }
    }

    fn exec(id: &str, outcome: Outcome, attempt: u32) -> VerificationRecord {
        VerificationRecord {
            skill_id: id.to_string(),
            layer: Layer::Execution,
            outcome,
            attempt,
            report_locator: String::new(),
            cycle: 1,
        }
    }

    #[test]
    fn transition_table_is_exact() {
        let legal: Vec<(SkillStatus, SkillStatus)> = SkillStatus::ALL
            .iter()
            .flat_map(|a| SkillStatus::ALL.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_transition_to(*b))
            .collect();
        assert_eq!(legal.len(), 9);
        for retired in [SkillStatus::Deprecated, SkillStatus::Removed] {
            assert!(SkillStatus::ALL.iter().all(|t| !retired.can_transition_to(*t)));
        }
    }

    #[test]
    fn upsert_then_update_appends_history() {
        let mut reg = Registry::new();
        assert!(reg.upsert_skill(entry("leaf-tool")).unwrap().created);
        let mut e = entry("leaf-tool");
        e.status = SkillStatus::Verified;
        assert!(!reg.upsert_skill(e).unwrap().created);
        assert_eq!(reg.skill_count(), 1);
        assert_eq!(reg.history("leaf-tool"), &[SkillStatus::Untested, SkillStatus::Verified]);
    }

    #[test]
    fn new_entries_must_be_untested_and_ids_stay_on_their_leaf() {
        let mut reg = Registry::new();
        let mut e = entry("leaf-tool");
        e.status = SkillStatus::Verified;
        assert!(matches!(reg.upsert_skill(e), Err(RegistryError::InvalidStatus { .. })));
        reg.upsert_skill(entry("leaf-tool")).unwrap();
        let mut moved = entry("leaf-tool");
        moved.leaf_path = "r/d/other".parse().unwrap();
        assert!(matches!(reg.upsert_skill(moved), Err(RegistryError::IdCollision { .. })));
    }

    #[test]
    fn execution_outcomes_drive_status() {
        let mut reg = Registry::new();
        reg.upsert_skill(entry("a")).unwrap();
        let e = reg.set_verification("a", exec("a", Outcome::Pass, 1)).unwrap();
        assert_eq!(e.status, SkillStatus::Verified);

        reg.upsert_skill(entry("b")).unwrap();
        let e = reg.set_verification("b", exec("b", Outcome::Fail, 1)).unwrap();
        assert_eq!(e.status, SkillStatus::Untested);
        assert_eq!(reg.verifications_for("b").count(), 1);
        let e = reg.set_verification("b", exec("b", Outcome::Pass, 2)).unwrap();
        assert_eq!(e.status, SkillStatus::Repaired);

        let err = reg.set_status("a", SkillStatus::Untested, 2).unwrap_err();
        assert_eq!(
            err,
            RegistryError::IllegalTransition {
                skill: "a".into(),
                from: SkillStatus::Verified,
                to: SkillStatus::Untested
            }
        );
    }

    #[test]
    fn attempts_must_be_consecutive() {
        let mut reg = Registry::new();
        reg.upsert_skill(entry("a")).unwrap();
        assert!(matches!(
            reg.set_verification("a", exec("a", Outcome::Fail, 2)),
            Err(RegistryError::AttemptOutOfSequence { expected: 1, .. })
        ));
    }

    #[test]
    fn resources_dedup_by_locator() {
        let mut reg = Registry::new();
        let r = ResourceEntry::new(ResourceKind::Repository, "https://git.example/x", leaf(), 1, 3);
        let a = reg.record_resource(r.clone()).unwrap();
        let b = reg.record_resource(r).unwrap();
        assert_eq!(a.id, b.id);
        assert!(a.created && !b.created);
        assert_eq!(reg.resource_count(), 1);
        let other = ResourceEntry::new(ResourceKind::Repository, "https://git.example/x", "r/d/o".parse().unwrap(), 2, 3);
        reg.record_resource(other).unwrap();
        assert_eq!(reg.resource_count(), 1);
        assert_eq!(reg.resource(&a.id).unwrap().leaf_paths.len(), 2);
    }

    #[test]
    fn replay_rebuilds_state() {
        let mut reg = Registry::new();
        reg.record_resource(ResourceEntry::new(ResourceKind::Paper, "https://example.org/tool", leaf(), 1, 1))
            .unwrap();
        reg.upsert_skill(entry("a")).unwrap();
        reg.set_verification("a", exec("a", Outcome::Pass, 1)).unwrap();
        let lines = reg.drain_outbox();
        let replayed = Registry::replay(lines).unwrap();
        assert_eq!(replayed, reg);
    }

    #[test]
    fn ids_are_collision_suffixed() {
        let mut reg = Registry::new();
        let id = reg.allocate_skill_id(&leaf(), "Tool");
        assert_eq!(id, "leaf-tool");
        reg.upsert_skill(entry(&id)).unwrap();
        assert_eq!(reg.allocate_skill_id(&leaf(), "Tool"), "leaf-tool-2");
    }

    #[test]
    fn percent_rendering() {
        let stats = LibraryStats {
            skill_count: 286,
            verified_count: 286,
            domain_count: 27,
            subdomain_count: 254,
            resource_count: 394,
            novel_fraction: 256.0 / 360.0,
            adjudicated: 360,
        };
        assert_eq!(stats.novel_percent(), "71.1%");
    }
}
