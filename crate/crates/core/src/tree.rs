//! Domain knowledge tree with per-node acquisition state.
//!
//! The tree is both the taxonomy of the target field and the controller
//! state for mining: every node carries its linked resources, linked skills,
//! a bounded window of recent verification outcomes and a coverage flag that
//! is recomputed from that state after every mutation.
//!
//! Tree values are snapshots. Every public operation borrows `self` and
//! returns a new tree, leaving the receiver untouched.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::digest;
use crate::path::{NodePath, PathError};
use crate::registry::Outcome;

/// Number of verification outcomes retained per node.
pub const RECENT_VERIFICATIONS_CAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Root,
    Domain,
    Subdomain,
    Leaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    Uncovered,
    Partial,
    Covered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Active,
    Merged,
    Pruned,
    Review,
}

impl NodeStatus {
    /// Active and review nodes are live; merged and pruned nodes are tombstones.
    pub fn is_live(self) -> bool {
        matches!(self, NodeStatus::Active | NodeStatus::Review)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationEvent {
    pub skill_id: String,
    pub outcome: Outcome,
    pub cycle: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub path: NodePath,
    pub kind: NodeKind,
    pub children: Vec<NodePath>,
    pub linked_resources: BTreeSet<String>,
    pub linked_skills: BTreeSet<String>,
    /// Linked skills whose registry status is verified.
    pub verified_skills: BTreeSet<String>,
    /// Linked skills whose latest verification did not pass.
    pub failing_skills: BTreeSet<String>,
    pub recent_verifications: Vec<VerificationEvent>,
    pub coverage_flag: Coverage,
    pub status: NodeStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_into: Option<NodePath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune_reason: Option<String>,
    #[serde(default)]
    pub deprioritized: bool,
    pub last_activity: u64,
}

impl TreeNode {
    pub(crate) fn fresh(path: NodePath, kind: NodeKind, cycle: u64) -> Self {
        Self {
            path,
            kind,
            children: Vec::new(),
            linked_resources: BTreeSet::new(),
            linked_skills: BTreeSet::new(),
            verified_skills: BTreeSet::new(),
            failing_skills: BTreeSet::new(),
            recent_verifications: Vec::new(),
            coverage_flag: Coverage::Uncovered,
            status: NodeStatus::Active,
            merged_into: None,
            prune_reason: None,
            deprioritized: false,
            last_activity: cycle,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.kind == NodeKind::Leaf
    }

    /// The coverage rule, as a pure function of node state.
    pub fn computed_coverage(&self) -> Coverage {
        if self.verified_skills.is_empty() {
            Coverage::Uncovered
        } else if self.failing_skills.is_empty() {
            Coverage::Covered
        } else {
            Coverage::Partial
        }
    }

    fn refresh_coverage(&mut self) {
        self.coverage_flag = self.computed_coverage();
    }

    fn push_verification(&mut self, event: VerificationEvent) {
        self.recent_verifications.push(event);
        let excess = self
            .recent_verifications
            .len()
            .saturating_sub(RECENT_VERIFICATIONS_CAP);
        if excess > 0 {
            self.recent_verifications.drain(..excess);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafSpec {
    pub label: String,
    /// Cycle the leaf is created in; seeds its activity clock.
    pub cycle: u64,
}

impl LeafSpec {
    pub fn new(label: impl Into<String>, cycle: u64) -> Self {
        Self {
            label: label.into(),
            cycle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate path {path}")]
    DuplicatePath { line: usize, path: String },
    #[error("line {line}: orphan entry {label:?} has no parent at depth {depth}")]
    OrphanParent {
        line: usize,
        label: String,
        depth: usize,
    },
    #[error("no node at {0}")]
    MissingNode(String),
    #[error("parent {0} does not exist")]
    MissingParent(String),
    #[error("leaf {0} already exists")]
    DuplicateLeaf(String),
    #[error("{0} is a leaf and cannot parent another leaf without a split")]
    ParentIsLeaf(String),
    #[error("{path} is {status:?} and cannot be modified")]
    Inactive { path: String, status: NodeStatus },
    #[error("{0} is not a leaf")]
    NotALeaf(String),
    #[error("{0} is already merged")]
    AlreadyMerged(String),
    #[error("{0} is already pruned")]
    AlreadyPruned(String),
    #[error("invalid operand pair: {0}")]
    InvalidOperands(String),
    #[error("skill {0} is not assigned to any partition")]
    UnassignedSkill(String),
    #[error("skill {0} is assigned to more than one partition")]
    DoublyAssignedSkill(String),
    #[error("skill {0} is not linked to the node being split")]
    ForeignSkill(String),
    #[error("split of {0} needs at least one partition")]
    EmptySplit(String),
    #[error("skill {skill} is not linked to {path}")]
    SkillNotLinked { path: String, skill: String },
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
}

/// Rooted taxonomy keyed by path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainTree {
    root: NodePath,
    nodes: BTreeMap<NodePath, TreeNode>,
}

/// Per-kind node counts for a coverage summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub domains: usize,
    pub subdomains: usize,
    pub leaves: usize,
    pub covered_leaves: usize,
    pub partial_leaves: usize,
    pub uncovered_leaves: usize,
}

impl DomainTree {
    /// A tree holding only a root node.
    pub fn with_root(label: &str) -> Result<Self, TreeError> {
        let root = NodePath::root(label)?;
        let mut nodes = BTreeMap::new();
        nodes.insert(root.clone(), TreeNode::fresh(root.clone(), NodeKind::Root, 0));
        Ok(Self { root, nodes })
    }

    pub(crate) fn from_parts(root: NodePath, nodes: BTreeMap<NodePath, TreeNode>) -> Self {
        Self { root, nodes }
    }

    pub fn root(&self) -> &NodePath {
        &self.root
    }

    pub fn get(&self, path: &NodePath) -> Option<&TreeNode> {
        self.nodes.get(path)
    }

    pub fn contains(&self, path: &NodePath) -> bool {
        self.nodes.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in lexicographic path order.
    pub fn nodes(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.values()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.values().filter(|n| n.is_leaf())
    }

    /// Live leaves at or below `branch`.
    pub fn live_leaves_under<'a>(&'a self, branch: &'a NodePath) -> impl Iterator<Item = &'a TreeNode> + 'a {
        self.leaves()
            .filter(move |n| n.status.is_live() && n.path.starts_with(branch))
    }

    pub fn coverage_summary(&self) -> CoverageSummary {
        let mut s = CoverageSummary::default();
        for n in self.nodes.values().filter(|n| n.status.is_live()) {
            match n.kind {
                NodeKind::Root => {}
                NodeKind::Domain => s.domains += 1,
                NodeKind::Subdomain => s.subdomains += 1,
                NodeKind::Leaf => {
                    s.leaves += 1;
                    match n.coverage_flag {
                        Coverage::Covered => s.covered_leaves += 1,
                        Coverage::Partial => s.partial_leaves += 1,
                        Coverage::Uncovered => s.uncovered_leaves += 1,
                    }
                }
            }
        }
        s
    }

    fn node_mut(&mut self, path: &NodePath) -> Result<&mut TreeNode, TreeError> {
        self.nodes
            .get_mut(path)
            .ok_or_else(|| TreeError::MissingNode(path.to_string()))
    }

    fn require_live_leaf(&self, path: &NodePath) -> Result<&TreeNode, TreeError> {
        let node = self
            .nodes
            .get(path)
            .ok_or_else(|| TreeError::MissingNode(path.to_string()))?;
        if !node.is_leaf() {
            return Err(TreeError::NotALeaf(path.to_string()));
        }
        match node.status {
            NodeStatus::Merged => Err(TreeError::AlreadyMerged(path.to_string())),
            NodeStatus::Pruned => Err(TreeError::AlreadyPruned(path.to_string())),
            _ => Ok(node),
        }
    }

    // ---- structural operations -------------------------------------------------

    /// Appends a fresh leaf under `parent`. A pruned node at the same path is
    /// replaced by a node with empty state.
    pub fn insert_leaf(&self, parent: &NodePath, spec: &LeafSpec) -> Result<Self, TreeError> {
        let mut next = self.clone();
        next.insert_leaf_in_place(parent, spec)?;
        Ok(next)
    }

    pub(crate) fn insert_leaf_in_place(
        &mut self,
        parent: &NodePath,
        spec: &LeafSpec,
    ) -> Result<NodePath, TreeError> {
        let parent_node = self
            .nodes
            .get(parent)
            .ok_or_else(|| TreeError::MissingParent(parent.to_string()))?;
        if !parent_node.status.is_live() {
            return Err(TreeError::Inactive {
                path: parent.to_string(),
                status: parent_node.status,
            });
        }
        if parent_node.is_leaf() {
            return Err(TreeError::ParentIsLeaf(parent.to_string()));
        }
        let path = parent.child(&spec.label)?;
        if let Some(existing) = self.nodes.get(&path) {
            if existing.status != NodeStatus::Pruned || !existing.is_leaf() {
                return Err(TreeError::DuplicateLeaf(path.to_string()));
            }
            self.nodes.remove(&path);
            self.node_mut(parent)?.children.retain(|c| c != &path);
        }
        let node = TreeNode::fresh(path.clone(), NodeKind::Leaf, spec.cycle);
        self.nodes.insert(path.clone(), node);
        self.node_mut(parent)?.children.push(path.clone());
        Ok(path)
    }

    /// Folds `absorbed` into `survivor`: links are unioned on the survivor and
    /// moved off the absorbed node, which keeps a forward reference.
    pub fn merge_leaves(
        &self,
        path_a: &NodePath,
        path_b: &NodePath,
        surviving: &NodePath,
    ) -> Result<Self, TreeError> {
        let mut next = self.clone();
        next.merge_leaves_in_place(path_a, path_b, surviving)?;
        Ok(next)
    }

    pub(crate) fn merge_leaves_in_place(
        &mut self,
        path_a: &NodePath,
        path_b: &NodePath,
        surviving: &NodePath,
    ) -> Result<NodePath, TreeError> {
        if path_a == path_b {
            return Err(TreeError::InvalidOperands(format!(
                "cannot merge {} into itself",
                path_a
            )));
        }
        let absorbed = if surviving == path_a {
            path_b
        } else if surviving == path_b {
            path_a
        } else {
            return Err(TreeError::InvalidOperands(format!(
                "survivor {} is neither operand",
                surviving
            )));
        };
        self.require_live_leaf(path_a)?;
        self.require_live_leaf(path_b)?;

        let taken = {
            let node = self.node_mut(absorbed)?;
            let taken = (
                core::mem::take(&mut node.linked_resources),
                core::mem::take(&mut node.linked_skills),
                core::mem::take(&mut node.verified_skills),
                core::mem::take(&mut node.failing_skills),
                core::mem::take(&mut node.recent_verifications),
                node.last_activity,
            );
            node.status = NodeStatus::Merged;
            node.merged_into = Some(surviving.clone());
            node.refresh_coverage();
            taken
        };
        let (resources, skills, verified, failing, recent, activity) = taken;
        let node = self.node_mut(surviving)?;
        node.linked_resources.extend(resources);
        node.linked_skills.extend(skills);
        node.verified_skills.extend(verified);
        node.failing_skills.extend(failing);
        let mut events = core::mem::take(&mut node.recent_verifications);
        events.extend(recent);
        // stable: equal cycles keep survivor-first order
        events.sort_by_key(|e| e.cycle);
        for e in events {
            node.push_verification(e);
        }
        node.last_activity = node.last_activity.max(activity);
        node.refresh_coverage();
        Ok(absorbed.clone())
    }

    /// Marks a leaf pruned. Returns the new tree and the skills still linked to
    /// it; the caller must deprecate those in the registry.
    pub fn prune_leaf(&self, path: &NodePath, reason: &str) -> Result<(Self, Vec<String>), TreeError> {
        let mut next = self.clone();
        let linked = next.prune_leaf_in_place(path, reason)?;
        Ok((next, linked))
    }

    pub(crate) fn prune_leaf_in_place(
        &mut self,
        path: &NodePath,
        reason: &str,
    ) -> Result<Vec<String>, TreeError> {
        self.require_live_leaf(path)?;
        let node = self.node_mut(path)?;
        node.status = NodeStatus::Pruned;
        node.prune_reason = Some(reason.to_string());
        node.refresh_coverage();
        Ok(node.linked_skills.iter().cloned().collect())
    }

    /// Turns a leaf into an internal node whose new child leaves carry the
    /// given partition of its skill links.
    pub fn split_branch(
        &self,
        path: &NodePath,
        partitions: &[(LeafSpec, Vec<String>)],
    ) -> Result<Self, TreeError> {
        let mut next = self.clone();
        next.split_branch_in_place(path, partitions)?;
        Ok(next)
    }

    pub(crate) fn split_branch_in_place(
        &mut self,
        path: &NodePath,
        partitions: &[(LeafSpec, Vec<String>)],
    ) -> Result<Vec<NodePath>, TreeError> {
        let node = self.require_live_leaf(path)?.clone();
        if partitions.is_empty() {
            return Err(TreeError::EmptySplit(path.to_string()));
        }
        let mut assigned: BTreeSet<&str> = BTreeSet::new();
        let mut labels: BTreeSet<&str> = BTreeSet::new();
        for (spec, skills) in partitions {
            path.child(&spec.label)?;
            if !labels.insert(spec.label.as_str()) {
                return Err(TreeError::DuplicateLeaf(format!("{}/{}", path, spec.label)));
            }
            for s in skills {
                if !node.linked_skills.contains(s) {
                    return Err(TreeError::ForeignSkill(s.clone()));
                }
                if !assigned.insert(s.as_str()) {
                    return Err(TreeError::DoublyAssignedSkill(s.clone()));
                }
            }
        }
        if let Some(missing) = node.linked_skills.iter().find(|s| !assigned.contains(s.as_str())) {
            return Err(TreeError::UnassignedSkill(missing.clone()));
        }

        let mut children = Vec::with_capacity(partitions.len());
        for (spec, skills) in partitions {
            let child_path = path.child(&spec.label)?;
            let mut child = TreeNode::fresh(child_path.clone(), NodeKind::Leaf, spec.cycle);
            for s in skills {
                child.linked_skills.insert(s.clone());
                if node.verified_skills.contains(s) {
                    child.verified_skills.insert(s.clone());
                }
                if node.failing_skills.contains(s) {
                    child.failing_skills.insert(s.clone());
                }
            }
            for e in &node.recent_verifications {
                if skills.contains(&e.skill_id) {
                    child.push_verification(e.clone());
                }
            }
            child.refresh_coverage();
            children.push(child);
        }

        let parent = self.node_mut(path)?;
        parent.kind = if path.len() == 2 {
            NodeKind::Domain
        } else {
            NodeKind::Subdomain
        };
        parent.linked_skills.clear();
        parent.verified_skills.clear();
        parent.failing_skills.clear();
        parent
            .recent_verifications
            .retain(|e| !assigned.contains(e.skill_id.as_str()));
        parent.refresh_coverage();
        let created: Vec<NodePath> = children.iter().map(|c| c.path.clone()).collect();
        parent.children.extend(created.iter().cloned());
        for child in children {
            self.nodes.insert(child.path.clone(), child);
        }
        Ok(created)
    }

    // ---- state updates ---------------------------------------------------------

    pub fn link_resource(&self, path: &NodePath, resource_id: &str, cycle: u64) -> Result<Self, TreeError> {
        let mut next = self.clone();
        next.link_resource_in_place(path, resource_id, cycle)?;
        Ok(next)
    }

    pub(crate) fn link_resource_in_place(
        &mut self,
        path: &NodePath,
        resource_id: &str,
        cycle: u64,
    ) -> Result<(), TreeError> {
        let node = self.node_mut(path)?;
        if node.linked_resources.insert(resource_id.to_string()) {
            node.last_activity = node.last_activity.max(cycle);
        }
        Ok(())
    }

    pub fn link_skill(
        &self,
        path: &NodePath,
        skill_id: &str,
        verified: bool,
        cycle: u64,
    ) -> Result<Self, TreeError> {
        let mut next = self.clone();
        next.link_skill_in_place(path, skill_id, verified, cycle)?;
        Ok(next)
    }

    pub(crate) fn link_skill_in_place(
        &mut self,
        path: &NodePath,
        skill_id: &str,
        verified: bool,
        cycle: u64,
    ) -> Result<(), TreeError> {
        self.require_live_leaf(path)?;
        let node = self.node_mut(path)?;
        node.linked_skills.insert(skill_id.to_string());
        if verified {
            node.verified_skills.insert(skill_id.to_string());
        } else {
            node.verified_skills.remove(skill_id);
        }
        node.last_activity = node.last_activity.max(cycle);
        node.refresh_coverage();
        Ok(())
    }

    pub(crate) fn unlink_skill_in_place(&mut self, path: &NodePath, skill_id: &str) -> Result<(), TreeError> {
        let node = self.node_mut(path)?;
        node.linked_skills.remove(skill_id);
        node.verified_skills.remove(skill_id);
        node.failing_skills.remove(skill_id);
        node.refresh_coverage();
        Ok(())
    }

    /// Updates the verified flag of a skill already linked at `path`.
    pub(crate) fn set_skill_verified_in_place(
        &mut self,
        path: &NodePath,
        skill_id: &str,
        verified: bool,
    ) -> Result<(), TreeError> {
        let node = self.node_mut(path)?;
        if !node.linked_skills.contains(skill_id) {
            return Err(TreeError::SkillNotLinked {
                path: path.to_string(),
                skill: skill_id.to_string(),
            });
        }
        if verified {
            node.verified_skills.insert(skill_id.to_string());
        } else {
            node.verified_skills.remove(skill_id);
        }
        node.refresh_coverage();
        Ok(())
    }

    /// Appends to the node's verification window; for linked skills this also
    /// opens or clears the failure marker.
    pub fn record_verification(
        &self,
        path: &NodePath,
        skill_id: &str,
        outcome: Outcome,
        cycle: u64,
    ) -> Result<Self, TreeError> {
        let mut next = self.clone();
        next.record_verification_in_place(path, skill_id, outcome, cycle)?;
        Ok(next)
    }

    pub(crate) fn record_verification_in_place(
        &mut self,
        path: &NodePath,
        skill_id: &str,
        outcome: Outcome,
        cycle: u64,
    ) -> Result<(), TreeError> {
        let node = self.node_mut(path)?;
        node.push_verification(VerificationEvent {
            skill_id: skill_id.to_string(),
            outcome,
            cycle,
        });
        if node.linked_skills.contains(skill_id) {
            if outcome == Outcome::Pass {
                node.failing_skills.remove(skill_id);
            } else {
                node.failing_skills.insert(skill_id.to_string());
            }
        }
        node.last_activity = node.last_activity.max(cycle);
        node.refresh_coverage();
        Ok(())
    }

    /// Review status zeroes the leaf's priority until cleared.
    pub fn set_review(&self, path: &NodePath, review: bool) -> Result<Self, TreeError> {
        let mut next = self.clone();
        next.set_review_in_place(path, review)?;
        Ok(next)
    }

    pub(crate) fn set_review_in_place(&mut self, path: &NodePath, review: bool) -> Result<(), TreeError> {
        let node = self.node_mut(path)?;
        if !node.status.is_live() {
            return Err(TreeError::Inactive {
                path: path.to_string(),
                status: node.status,
            });
        }
        node.status = if review {
            NodeStatus::Review
        } else {
            NodeStatus::Active
        };
        Ok(())
    }

    pub(crate) fn set_deprioritized_in_place(&mut self, path: &NodePath, flag: bool) -> Result<(), TreeError> {
        self.node_mut(path)?.deprioritized = flag;
        Ok(())
    }

    // ---- invariants and digests -------------------------------------------------

    /// Checks every structural and state invariant; empty when the tree is sound.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let Some(root) = self.nodes.get(&self.root) else {
            out.push(format!("root {} missing", self.root));
            return out;
        };
        if root.kind != NodeKind::Root || self.root.len() != 1 {
            out.push(format!("root {} has wrong kind or depth", self.root));
        }
        for (key, node) in &self.nodes {
            if key != &node.path {
                out.push(format!("node keyed {} records path {}", key, node.path));
            }
            if node.kind == NodeKind::Root && key != &self.root {
                out.push(format!("second root at {}", key));
            }
            if key != &self.root {
                match key.parent().and_then(|p| self.nodes.get(&p)) {
                    None => out.push(format!("{} has no parent node", key)),
                    Some(parent) => {
                        if !parent.children.contains(key) {
                            out.push(format!("{} is not listed by its parent", key));
                        }
                    }
                }
            }
            let mut seen = BTreeSet::new();
            for child in &node.children {
                if !seen.insert(child) {
                    out.push(format!("{} lists child {} twice", key, child));
                }
                if child.parent().as_ref() != Some(key) || !self.nodes.contains_key(child) {
                    out.push(format!("{} lists invalid child {}", key, child));
                }
            }
            if node.is_leaf() && !node.children.is_empty() {
                out.push(format!("leaf {} has children", key));
            }
            if !node.is_leaf() && !node.linked_skills.is_empty() {
                out.push(format!("non-leaf {} links skills", key));
            }
            if !node.verified_skills.is_subset(&node.linked_skills)
                || !node.failing_skills.is_subset(&node.linked_skills)
            {
                out.push(format!("{} tracks flags for unlinked skills", key));
            }
            if node.coverage_flag != node.computed_coverage() {
                out.push(format!(
                    "{} stores coverage {:?} but state implies {:?}",
                    key,
                    node.coverage_flag,
                    node.computed_coverage()
                ));
            }
            if node.recent_verifications.len() > RECENT_VERIFICATIONS_CAP {
                out.push(format!("{} exceeds the verification window", key));
            }
            if matches!(node.status, NodeStatus::Merged | NodeStatus::Pruned) {
                for child in &node.children {
                    if self.nodes.get(child).is_some_and(|c| c.status.is_live()) {
                        out.push(format!("inactive {} has live child {}", key, child));
                    }
                }
            }
            if node.status == NodeStatus::Merged {
                match &node.merged_into {
                    Some(target) if self.nodes.contains_key(target) => {}
                    _ => out.push(format!("merged {} lacks a valid forward reference", key)),
                }
                if !node.linked_skills.is_empty() {
                    out.push(format!("merged {} still links skills", key));
                }
            }
        }
        out
    }

    /// Multiset of skill links across live and tombstoned nodes.
    pub fn skill_links(&self) -> Vec<String> {
        let mut links: Vec<String> = self
            .nodes
            .values()
            .flat_map(|n| n.linked_skills.iter().cloned())
            .collect();
        links.sort();
        links
    }

    /// Digest over the node at `path` and every descendant.
    pub fn subtree_digest(&self, path: &NodePath) -> String {
        let mut d = digest::Digester::new();
        for (k, node) in self.nodes.range(path.clone()..) {
            if !k.starts_with(path) {
                break;
            }
            d.update(serde_json::to_string(node).unwrap_or_default().as_bytes());
            d.update(b"\n");
        }
        d.finish_hex()
    }

    pub fn to_snapshot(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).unwrap_or_default();
        s.push('\n');
        s
    }

    pub fn digest(&self) -> String {
        digest::sha256_hex(self.to_snapshot().as_bytes())
    }

    /// Parses a snapshot and re-checks every invariant.
    pub fn from_snapshot(text: &str) -> Result<Self, TreeError> {
        let tree: DomainTree =
            serde_json::from_str(text).map_err(|e| TreeError::Snapshot(e.to_string()))?;
        let violations = tree.violations();
        if let Some(first) = violations.into_iter().next() {
            return Err(TreeError::Snapshot(first));
        }
        Ok(tree)
    }
}
