//! Branch prioritization.
//!
//! Score of a live leaf:
//!
//! ```text
//! 3 * [>=1 linked resource and 0 verified skills]
//! + 2 * min(failures in the last FAILURE_WINDOW cycles, 3)
//! + 1 * [every linked skill has starter confidence]
//! + 1 * [no activity for >= STALE_AFTER cycles]
//! ```
//!
//! Leaves in review or marked deprioritized score zero. Merged and pruned
//! leaves never appear. Ties order by path.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::path::NodePath;
use crate::registry::{Confidence, Outcome};
use crate::tree::{DomainTree, NodeStatus, TreeNode};

pub const FAILURE_WINDOW: u64 = 3;
pub const FAILURE_CAP: u32 = 3;
pub const STALE_AFTER: u64 = 5;

pub const WEIGHT_RESOURCES_NO_SKILLS: u32 = 3;
pub const WEIGHT_FAILURE: u32 = 2;
pub const WEIGHT_STARTER_ONLY: u32 = 1;
pub const WEIGHT_STALE: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    ResourcesNoSkills,
    StarterOnly,
    RepeatedFailures,
    Stale,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchPriority {
    pub path: NodePath,
    pub score: u32,
    pub reasons: Vec<ReasonCode>,
}

/// What prioritization needs to know beyond the tree itself.
pub trait RegistryView {
    fn skill_confidence(&self, skill_id: &str) -> Option<Confidence>;
}

impl RegistryView for crate::registry::Registry {
    fn skill_confidence(&self, skill_id: &str) -> Option<Confidence> {
        self.skill(skill_id).map(|s| s.confidence)
    }
}

/// Scores one leaf. Returns `None` for nodes that never appear in the ranking.
pub fn score_leaf(node: &TreeNode, view: &dyn RegistryView, current_cycle: u64) -> Option<BranchPriority> {
    if !node.is_leaf() || !node.status.is_live() {
        return None;
    }
    let mut reasons = Vec::new();
    let mut score = 0;
    if node.status == NodeStatus::Review || node.deprioritized {
        return Some(BranchPriority {
            path: node.path.clone(),
            score,
            reasons,
        });
    }
    if !node.linked_resources.is_empty() && node.verified_skills.is_empty() {
        score += WEIGHT_RESOURCES_NO_SKILLS;
        reasons.push(ReasonCode::ResourcesNoSkills);
    }
    let failures = node
        .recent_verifications
        .iter()
        .filter(|e| e.outcome != Outcome::Pass && e.cycle + FAILURE_WINDOW >= current_cycle)
        .count() as u32;
    if failures > 0 {
        score += WEIGHT_FAILURE * failures.min(FAILURE_CAP);
        reasons.push(ReasonCode::RepeatedFailures);
    }
    if !node.linked_skills.is_empty()
        && node
            .linked_skills
            .iter()
            .all(|s| view.skill_confidence(s) == Some(Confidence::Starter))
    {
        score += WEIGHT_STARTER_ONLY;
        reasons.push(ReasonCode::StarterOnly);
    }
    if current_cycle >= node.last_activity + STALE_AFTER {
        score += WEIGHT_STALE;
        reasons.push(ReasonCode::Stale);
    }
    Some(BranchPriority {
        path: node.path.clone(),
        score,
        reasons,
    })
}

/// Top `k` live leaves by descending score, ties by ascending path.
pub fn prioritize_branches(
    tree: &DomainTree,
    view: &dyn RegistryView,
    current_cycle: u64,
    k: usize,
) -> Vec<BranchPriority> {
    prioritize_within(tree, view, current_cycle, k, tree.root())
}

/// As [`prioritize_branches`], restricted to leaves under `branch`.
pub fn prioritize_within(
    tree: &DomainTree,
    view: &dyn RegistryView,
    current_cycle: u64,
    k: usize,
    branch: &NodePath,
) -> Vec<BranchPriority> {
    let mut ranked: Vec<BranchPriority> = tree
        .nodes()
        .filter(|n| n.path.starts_with(branch))
        .filter_map(|n| score_leaf(n, view, current_cycle))
        .collect();
    ranked.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.path.cmp(&b.path)));
    ranked.truncate(k);
    ranked
}

/// Reason codes rendered for reports.
pub fn describe(reasons: &[ReasonCode]) -> String {
    let names: Vec<&str> = reasons
        .iter()
        .map(|r| match r {
            ReasonCode::ResourcesNoSkills => "resources_no_skills",
            ReasonCode::StarterOnly => "starter_only",
            ReasonCode::RepeatedFailures => "repeated_failures",
            ReasonCode::Stale => "stale",
        })
        .collect();
    names.join(",")
}
