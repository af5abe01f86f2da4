//! Static site data: library stats, the taxonomy with coverage, skill cards
//! and the resource index, plus a plain HTML page rendering them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use skillforge_core::contract::{compute_profile_note, SkillContract};
use skillforge_core::registry::{Confidence, LibraryStats, ResourceKind, SkillEntry, SkillStatus};
use skillforge_core::timing::{render_timing_table, stage_timing_report, StageDuration, StageTiming};
use skillforge_core::tree::{Coverage, NodeKind, NodeStatus};
use skillforge_core::{Library, LibraryError, NodePath};

use crate::fsutil::{self, FsError};

pub const SITE_FILES: [&str; 5] = ["stats.json", "taxonomy.json", "skills.json", "resources.json", "index.html"];

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("export refused, integrity violations: {}", .0.join("; "))]
    Integrity(Vec<String>),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Fs(#[from] FsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteStats {
    pub skills: usize,
    pub verified: usize,
    pub domains: usize,
    pub subdomains: usize,
    pub resources: usize,
    pub adjudicated: usize,
    pub novel_fraction: f64,
    pub novel_percent: String,
}

impl From<LibraryStats> for SiteStats {
    fn from(s: LibraryStats) -> Self {
        Self {
            skills: s.skill_count,
            verified: s.verified_count,
            domains: s.domain_count,
            subdomains: s.subdomain_count,
            resources: s.resource_count,
            adjudicated: s.adjudicated,
            novel_fraction: s.novel_fraction,
            novel_percent: s.novel_percent(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub path: NodePath,
    pub kind: NodeKind,
    pub status: NodeStatus,
    pub coverage: Coverage,
    pub skills: usize,
    pub verified: usize,
    pub children: Vec<NodePath>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceLink {
    pub resource_id: String,
    pub kind: Option<ResourceKind>,
    pub locator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillCard {
    pub id: String,
    pub name: String,
    pub leaf: NodePath,
    pub status: SkillStatus,
    pub confidence: Confidence,
    pub provenance: Vec<ProvenanceLink>,
    pub compute_profile: String,
    pub package_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceCard {
    pub id: String,
    pub kind: ResourceKind,
    pub locator: String,
    pub authority_rank: u8,
    pub leaves: Vec<NodePath>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteBundle {
    pub stats: SiteStats,
    pub taxonomy: Vec<TaxonomyNode>,
    pub skills_index: Vec<SkillCard>,
    pub resources_index: Vec<ResourceCard>,
}

/// Builds the bundle. `contract_of` supplies package contracts for the
/// compute note; a missing contract yields a placeholder note.
pub fn build_bundle<F>(lib: &Library, mut contract_of: F) -> Result<SiteBundle, ExportError>
where
    F: FnMut(&SkillEntry) -> Option<SkillContract>,
{
    let violations = lib.integrity_check();
    if !violations.is_empty() {
        return Err(ExportError::Integrity(violations));
    }
    let stats = SiteStats::from(lib.stats()?);
    let taxonomy = lib
        .tree
        .nodes()
        .map(|n| TaxonomyNode {
            path: n.path.clone(),
            kind: n.kind,
            status: n.status,
            coverage: n.coverage_flag,
            skills: n.linked_skills.len(),
            verified: n.verified_skills.len(),
            children: n.children.clone(),
        })
        .collect();
    let skills_index = lib
        .registry
        .skills()
        .filter(|s| s.status.is_live())
        .map(|s| SkillCard {
            id: s.id.clone(),
            name: s.name.clone(),
            leaf: s.leaf_path.clone(),
            status: s.status,
            confidence: s.confidence,
            provenance: s
                .provenance
                .iter()
                .map(|rid| {
                    let r = lib.registry.resource(rid);
                    ProvenanceLink {
                        resource_id: rid.clone(),
                        kind: r.map(|r| r.kind),
                        locator: r.map(|r| r.locator.clone()).unwrap_or_default(),
                    }
                })
                .collect(),
            compute_profile: contract_of(s)
                .map(|c| compute_profile_note(&c))
                .unwrap_or_else(|| "contract unavailable".to_string()),
            package_path: s.package_path.clone(),
        })
        .collect();
    let resources_index = lib
        .registry
        .resources()
        .map(|r| ResourceCard {
            id: r.id.clone(),
            kind: r.kind,
            locator: r.locator.clone(),
            authority_rank: r.authority_rank,
            leaves: r.leaf_paths.iter().cloned().collect(),
        })
        .collect();
    Ok(SiteBundle {
        stats,
        taxonomy,
        skills_index,
        resources_index,
    })
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("site values serialize");
    s.push('\n');
    s.into_bytes()
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

fn render_html(b: &SiteBundle) -> String {
    let mut h = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Skill library</title></head><body>\n",
    );
    let s = &b.stats;
    h.push_str("<h1>Skill library</h1>\n<table id=\"stats\">\n");
    for (k, v) in [
        ("Skills", s.skills.to_string()),
        ("Verified", s.verified.to_string()),
        ("Domains", s.domains.to_string()),
        ("Subdomains", s.subdomains.to_string()),
        ("Resources", s.resources.to_string()),
        ("Novel", s.novel_percent.clone()),
    ] {
        h.push_str(&format!("<tr><th>{}</th><td>{}</td></tr>\n", k, v));
    }
    h.push_str("</table>\n<h2>Taxonomy</h2>\n<ul id=\"taxonomy\">\n");
    for n in b.taxonomy.iter().filter(|n| n.status != NodeStatus::Pruned && n.status != NodeStatus::Merged) {
        h.push_str(&format!(
            "<li style=\"margin-left:{}em\">{} <small>{:?} {}/{}</small></li>\n",
            2 * n.path.len().saturating_sub(1),
            escape(n.path.last()),
            n.coverage,
            n.verified,
            n.skills
        ));
    }
    h.push_str("</ul>\n<h2>Skills</h2>\n<table id=\"skills\">\n<tr><th>Skill</th><th>Leaf</th><th>Status</th><th>Compute</th><th>Sources</th></tr>\n");
    for c in &b.skills_index {
        let sources: Vec<String> = c.provenance.iter().map(|p| escape(&p.locator)).collect();
        h.push_str(&format!(
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>\n",
            escape(&c.name),
            escape(&c.leaf.to_string()),
            c.status,
            escape(&c.compute_profile),
            sources.join("<br>")
        ));
    }
    h.push_str("</table>\n<h2>Resources</h2>\n<table id=\"resources\">\n");
    for r in &b.resources_index {
        h.push_str(&format!(
            "<tr><td>{:?}</td><td>{}</td><td>{}</td></tr>\n",
            r.kind,
            escape(&r.locator),
            r.authority_rank
        ));
    }
    h.push_str("</table>\n</body></html>\n");
    h
}

/// Writes the bundle files into `dest`. Other files there are left alone.
pub fn write_bundle(bundle: &SiteBundle, dest: &Path) -> Result<(), ExportError> {
    fsutil::create_dir_all(dest)?;
    fsutil::write_atomic(&dest.join("stats.json"), &pretty(&bundle.stats))?;
    fsutil::write_atomic(&dest.join("taxonomy.json"), &pretty(&bundle.taxonomy))?;
    fsutil::write_atomic(&dest.join("skills.json"), &pretty(&bundle.skills_index))?;
    fsutil::write_atomic(&dest.join("resources.json"), &pretty(&bundle.resources_index))?;
    fsutil::write_atomic(&dest.join("index.html"), render_html(bundle).as_bytes())?;
    Ok(())
}

/// Builds and writes the bundle, reading contracts from packages under
/// `project_root`.
pub fn export_site(lib: &Library, project_root: &Path, dest: &Path) -> Result<SiteBundle, ExportError> {
    let bundle = build_bundle(lib, |s| crate::package::read_contract(&project_root.join(&s.package_path)).ok())?;
    write_bundle(&bundle, dest)?;
    Ok(bundle)
}

/// Digest over the bundle files in `dest`.
pub fn bundle_digest(dest: &Path) -> Result<String, ExportError> {
    Ok(fsutil::dir_digest(dest, |rel| SITE_FILES.contains(&rel))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub cycles: usize,
    pub stages: Vec<StageTiming>,
}

/// Per-stage means over cycle durations, as a table and a JSON document.
pub fn timing_summary(cycles: &[Vec<StageDuration>]) -> (TimingSummary, String) {
    let stages = stage_timing_report(cycles.iter().map(|c| c.as_slice()));
    let table = render_timing_table(&stages);
    (
        TimingSummary {
            cycles: cycles.len(),
            stages,
        },
        table,
    )
}

/// Counts per node kind, used by status output.
pub fn kind_counts(bundle: &SiteBundle) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for n in bundle.taxonomy.iter().filter(|n| n.status.is_live()) {
        *m.entry(format!("{:?}", n.kind).to_lowercase()).or_insert(0) += 1;
    }
    m
}
