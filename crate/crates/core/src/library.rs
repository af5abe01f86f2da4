//! Tree and registry edited together so cross-references stay consistent.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::novelty::{Decision, NoveltyVerdict};
use crate::path::NodePath;
use crate::registry::{
    LibraryStats, NoveltyRecord, Receipt, Registry, RegistryError, ResourceEntry, SkillEntry, SkillStatus,
    VerificationRecord,
};
use crate::tree::{DomainTree, LeafSpec, TreeError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LibraryError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("integrity check failed: {}", .0.join("; "))]
    Integrity(Vec<String>),
}

/// What applying a verdict did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictEffect {
    pub skill_id: String,
    pub decision: Decision,
    pub status: SkillStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inserted_leaf: Option<NodePath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_into: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Library {
    pub tree: DomainTree,
    pub registry: Registry,
}

impl Library {
    pub fn new(tree: DomainTree, registry: Registry) -> Self {
        Self { tree, registry }
    }

    pub fn integrity_check(&self) -> Vec<String> {
        self.registry.integrity_check(&self.tree)
    }

    pub fn ensure_integrity(&self) -> Result<(), LibraryError> {
        let v = self.integrity_check();
        if v.is_empty() {
            Ok(())
        } else {
            Err(LibraryError::Integrity(v))
        }
    }

    pub fn stats(&self) -> Result<LibraryStats, LibraryError> {
        Ok(self.registry.snapshot_stats(&self.tree)?)
    }

    fn skill(&self, id: &str) -> Result<SkillEntry, LibraryError> {
        self.registry
            .skill(id)
            .cloned()
            .ok_or_else(|| RegistryError::UnknownSkill(id.to_string()).into())
    }

    /// Mirrors a skill's registry status onto its leaf: retired skills are
    /// unlinked from live leaves, and the verified flag follows the status.
    pub fn sync_skill(&mut self, skill_id: &str) -> Result<(), LibraryError> {
        let entry = self.skill(skill_id)?;
        let Some(node) = self.tree.get(&entry.leaf_path) else {
            return Ok(());
        };
        if !node.linked_skills.contains(skill_id) || !node.status.is_live() {
            return Ok(());
        }
        if entry.status.is_live() {
            self.tree.set_skill_verified_in_place(
                &entry.leaf_path,
                skill_id,
                entry.status == SkillStatus::Verified,
            )?;
        } else {
            self.tree.unlink_skill_in_place(&entry.leaf_path, skill_id)?;
        }
        Ok(())
    }

    /// Links a live skill to its leaf, creating the leaf under its parent
    /// first when it does not exist yet. Returns the created leaf, if any.
    pub fn place_skill(&mut self, skill_id: &str, cycle: u64) -> Result<Option<NodePath>, LibraryError> {
        let entry = self.skill(skill_id)?;
        let mut inserted = None;
        let reusable = self
            .tree
            .get(&entry.leaf_path)
            .is_some_and(|n| n.status.is_live());
        if !reusable {
            let parent = entry
                .leaf_path
                .parent()
                .ok_or_else(|| TreeError::MissingParent(entry.leaf_path.to_string()))?;
            let path = self
                .tree
                .insert_leaf_in_place(&parent, &LeafSpec::new(entry.leaf_path.last(), cycle))?;
            inserted = Some(path);
        }
        self.tree.link_skill_in_place(
            &entry.leaf_path,
            skill_id,
            entry.status == SkillStatus::Verified,
            cycle,
        )?;
        Ok(inserted)
    }

    /// Appends a verification record and reflects it on the skill's leaf.
    pub fn record_verification(&mut self, record: VerificationRecord) -> Result<SkillEntry, LibraryError> {
        let skill_id = record.skill_id.clone();
        let (outcome, cycle) = (record.outcome, record.cycle);
        let entry = self.registry.set_verification(&skill_id, record)?;
        if self
            .tree
            .get(&entry.leaf_path)
            .is_some_and(|n| n.is_leaf() && n.status.is_live())
        {
            self.tree
                .record_verification_in_place(&entry.leaf_path, &skill_id, outcome, cycle)?;
        }
        self.sync_skill(&skill_id)?;
        Ok(entry)
    }

    pub fn set_status(&mut self, skill_id: &str, to: SkillStatus, cycle: u64) -> Result<SkillEntry, LibraryError> {
        let entry = self.registry.set_status(skill_id, to, cycle)?;
        self.sync_skill(skill_id)?;
        Ok(entry)
    }

    /// Retires a skill: verified and review skills are deprecated, skills that
    /// never passed are removed.
    pub fn retire_skill(&mut self, skill_id: &str, cycle: u64) -> Result<SkillEntry, LibraryError> {
        let entry = self.skill(skill_id)?;
        let to = match entry.status {
            SkillStatus::Untested | SkillStatus::Repaired => SkillStatus::Removed,
            SkillStatus::Verified | SkillStatus::Review => SkillStatus::Deprecated,
            _ => return Ok(entry),
        };
        self.set_status(skill_id, to, cycle)
    }

    /// Records a resource and links it to each of its leaves that is live.
    pub fn record_resource(&mut self, resource: ResourceEntry) -> Result<Receipt, LibraryError> {
        let cycle = resource.retrieved_cycle;
        let receipt = self.registry.record_resource(resource)?;
        let leaves: Vec<NodePath> = self
            .registry
            .resource(&receipt.id)
            .map(|r| r.leaf_paths.iter().cloned().collect())
            .unwrap_or_default();
        for leaf in leaves {
            if self.tree.get(&leaf).is_some_and(|n| n.is_leaf() && n.status.is_live()) {
                self.tree.link_resource_in_place(&leaf, &receipt.id, cycle)?;
            }
        }
        Ok(receipt)
    }

    /// Moves a live skill to another leaf, creating it under its parent if
    /// needed.
    pub fn relink_skill(&mut self, skill_id: &str, leaf: &NodePath, cycle: u64) -> Result<(), LibraryError> {
        let entry = self.skill(skill_id)?;
        if &entry.leaf_path == leaf {
            return Ok(());
        }
        let old_linked = self
            .tree
            .get(&entry.leaf_path)
            .is_some_and(|n| n.linked_skills.contains(skill_id));
        if old_linked {
            self.tree.unlink_skill_in_place(&entry.leaf_path, skill_id)?;
        }
        self.registry.relink_skill(skill_id, leaf, cycle)?;
        if entry.status.is_live() && old_linked {
            self.place_skill(skill_id, cycle)?;
        }
        Ok(())
    }

    pub fn insert_leaf(&mut self, parent: &NodePath, spec: &LeafSpec) -> Result<NodePath, LibraryError> {
        Ok(self.tree.insert_leaf_in_place(parent, spec)?)
    }

    /// Prunes a leaf and retires every live skill still linked to it.
    pub fn prune_leaf(&mut self, path: &NodePath, reason: &str, cycle: u64) -> Result<Vec<String>, LibraryError> {
        let linked = self.tree.prune_leaf_in_place(path, reason)?;
        for id in &linked {
            self.retire_skill(id, cycle)?;
        }
        Ok(linked)
    }

    pub fn merge_leaves(
        &mut self,
        path_a: &NodePath,
        path_b: &NodePath,
        surviving: &NodePath,
        cycle: u64,
    ) -> Result<(), LibraryError> {
        let absorbed = if surviving == path_a { path_b } else { path_a };
        let moved: Vec<String> = self
            .tree
            .get(absorbed)
            .map(|n| n.linked_skills.iter().cloned().collect())
            .unwrap_or_default();
        self.tree.merge_leaves_in_place(path_a, path_b, surviving)?;
        for id in moved {
            self.registry.relink_skill(&id, surviving, cycle)?;
        }
        Ok(())
    }

    pub fn split_leaf(
        &mut self,
        path: &NodePath,
        partitions: &[(LeafSpec, Vec<String>)],
        cycle: u64,
    ) -> Result<Vec<NodePath>, LibraryError> {
        let created = self.tree.split_branch_in_place(path, partitions)?;
        for ((_, skills), leaf) in partitions.iter().zip(&created) {
            for id in skills {
                self.registry.relink_skill(id, leaf, cycle)?;
            }
        }
        Ok(created)
    }

    /// Writes a novelty verdict back to the registry and the tree.
    pub fn apply_verdict(&mut self, verdict: &NoveltyVerdict, cycle: u64) -> Result<VerdictEffect, LibraryError> {
        let skill_id = verdict.skill_id.as_str();
        self.skill(skill_id)?;
        let mut effect = VerdictEffect {
            skill_id: skill_id.to_string(),
            decision: verdict.decision,
            status: SkillStatus::Untested,
            inserted_leaf: None,
            merged_into: None,
        };
        match verdict.decision {
            Decision::Novel => {
                effect.inserted_leaf = self.place_skill(skill_id, cycle)?;
            }
            Decision::Redundant => {
                self.retire_skill(skill_id, cycle)?;
            }
            Decision::Merge => match verdict.local_survivor(&self.registry) {
                Some(survivor) => {
                    let provenance = self.skill(skill_id)?.provenance;
                    self.registry.merge_provenance(&survivor, &provenance, cycle)?;
                    self.retire_skill(skill_id, cycle)?;
                    effect.merged_into = Some(survivor);
                }
                None => {
                    effect.inserted_leaf = self.place_skill(skill_id, cycle)?;
                }
            },
            Decision::Review => {
                effect.inserted_leaf = self.place_skill(skill_id, cycle)?;
                let leaf = self.skill(skill_id)?.leaf_path;
                if self.skill(skill_id)?.status == SkillStatus::Verified {
                    self.set_status(skill_id, SkillStatus::Review, cycle)?;
                }
                self.tree.set_review_in_place(&leaf, true)?;
            }
            Decision::Deprioritize => {
                effect.inserted_leaf = self.place_skill(skill_id, cycle)?;
                let leaf = self.skill(skill_id)?.leaf_path;
                self.tree.set_deprioritized_in_place(&leaf, true)?;
            }
        }
        let matches = verdict
            .matches
            .iter()
            .map(|m| format!("{}:{}", m.catalog_id, m.entry_ref))
            .collect();
        self.registry.record_verdict(NoveltyRecord {
            skill_id: skill_id.to_string(),
            decision: verdict.decision,
            rationale: verdict.rationale.clone(),
            matches,
            cycle,
        })?;
        effect.status = self.skill(skill_id)?.status;
        Ok(effect)
    }
}
