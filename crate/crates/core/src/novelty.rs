//! Keyword-overlap novelty review against local and external catalogs.
//!
//! Ladder, applied to the classified matches of one candidate:
//! any same-task/same-scope match makes it redundant; otherwise any
//! same-task/different-scope match makes it a merge; otherwise it is novel.
//! A provider opinion can only move novel or merge down to review or
//! deprioritize.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::registry::Registry;

/// Catalog id under which the local library is searched.
pub const LOCAL_CATALOG: &str = "local";

pub const SAME_TASK_THRESHOLD: f64 = 0.6;
pub const SAME_SCOPE_THRESHOLD: f64 = 0.6;
pub const RELATED_THRESHOLD: f64 = 0.3;

pub const STOP_WORDS: [&str; 50] = [
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "but", "by",
    "can", "each", "for", "from", "has", "have", "if", "in", "into", "is", "it", "its", "more", "no", "not",
    "of", "on", "or", "other", "so", "such", "than", "that", "the", "their", "then", "there", "these",
    "this", "to", "was", "which", "will", "with", "within",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Novel,
    Redundant,
    Merge,
    Review,
    Deprioritize,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Novel => "novel",
            Decision::Redundant => "redundant",
            Decision::Merge => "merge",
            Decision::Review => "review",
            Decision::Deprioritize => "deprioritize",
        }
    }
}

/// Strongest first, so sorting ascending ranks the closest matches on top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    SameTaskSameScope,
    SameTaskDiffScope,
    Related,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NoveltyError {
    #[error("scope {0:?} has no keywords after stop-word filtering")]
    EmptyAfterFiltering(String),
}

/// Ordered unigram then bigram terms of a text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSet(Vec<String>);

impl KeywordSet {
    pub fn terms(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn as_set(&self) -> BTreeSet<&str> {
        self.0.iter().map(String::as_str).collect()
    }
}

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.contains(&token)
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .filter(|t| !is_stop_word(t))
        .collect()
}

/// Keywords of a scope: deduplicated unigrams in first-occurrence order,
/// followed by bigrams of adjacent surviving tokens.
pub fn derive_keywords(scope: &str) -> Result<KeywordSet, NoveltyError> {
    let toks = tokens(scope);
    if toks.is_empty() {
        return Err(NoveltyError::EmptyAfterFiltering(scope.to_string()));
    }
    let mut seen = BTreeSet::new();
    let mut terms = Vec::new();
    for t in &toks {
        if seen.insert(t.clone()) {
            terms.push(t.clone());
        }
    }
    for pair in toks.windows(2) {
        let bigram = format!("{} {}", pair[0], pair[1]);
        if seen.insert(bigram.clone()) {
            terms.push(bigram);
        }
    }
    Ok(KeywordSet(terms))
}

fn keywords_or_empty(text: &str) -> KeywordSet {
    derive_keywords(text).unwrap_or(KeywordSet(Vec::new()))
}

/// |a ∩ b| / |a ∪ b|; zero when both are empty.
pub fn jaccard(a: &KeywordSet, b: &KeywordSet) -> f64 {
    let (a, b) = (a.as_set(), b.as_set());
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Lowercased with whitespace runs collapsed.
pub fn normalize_text(text: &str) -> String {
    let words: Vec<String> = text.split_whitespace().map(|w| w.to_lowercase()).collect();
    words.join(" ")
}

/// A skill as the catalogs see it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub entry_ref: String,
    pub task_description: String,
    #[serde(default)]
    pub scope_summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_path: Option<String>,
    #[serde(default)]
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Catalog {
    pub id: String,
    pub entries: Vec<CatalogEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogMatch {
    pub catalog_id: String,
    pub entry_ref: String,
    pub entry_task_description: String,
    pub entry_scope_summary: String,
    pub overlap: Overlap,
    pub task_similarity: f64,
}

/// Overlap class of `entry` relative to `candidate`, and the task similarity.
pub fn classify(candidate: &CatalogEntry, entry: &CatalogEntry) -> (Overlap, f64) {
    let task_sim = jaccard(
        &keywords_or_empty(&candidate.task_description),
        &keywords_or_empty(&entry.task_description),
    );
    let same_task = task_sim >= SAME_TASK_THRESHOLD
        || normalize_text(&candidate.task_description) == normalize_text(&entry.task_description);
    if same_task {
        let cand_scope = normalize_text(&candidate.scope_summary);
        let same_scope = jaccard(
            &keywords_or_empty(&candidate.scope_summary),
            &keywords_or_empty(&entry.scope_summary),
        ) >= SAME_SCOPE_THRESHOLD
            || (!cand_scope.is_empty() && cand_scope == normalize_text(&entry.scope_summary));
        let overlap = if same_scope {
            Overlap::SameTaskSameScope
        } else {
            Overlap::SameTaskDiffScope
        };
        return (overlap, task_sim);
    }
    let same_topic = matches!((&candidate.topic_path, &entry.topic_path), (Some(a), Some(b)) if a == b);
    let shared_provenance = candidate.provenance.iter().any(|p| entry.provenance.contains(p));
    if task_sim >= RELATED_THRESHOLD || same_topic || shared_provenance {
        (Overlap::Related, task_sim)
    } else {
        (Overlap::None, task_sim)
    }
}

/// Entries that overlap the candidate at all, strongest first, cut to `limit`.
/// An entry with the candidate's own ref in the local catalog is skipped.
pub fn search_catalogs(catalogs: &[Catalog], candidate: &CatalogEntry, limit: usize) -> Vec<CatalogMatch> {
    let mut found: Vec<CatalogMatch> = catalogs
        .iter()
        .flat_map(|cat| cat.entries.iter().map(move |e| (cat, e)))
        .filter(|(cat, e)| !(cat.id == LOCAL_CATALOG && e.entry_ref == candidate.entry_ref))
        .filter_map(|(cat, e)| {
            let (overlap, sim) = classify(candidate, e);
            if overlap == Overlap::None && sim == 0.0 {
                return None;
            }
            Some(CatalogMatch {
                catalog_id: cat.id.clone(),
                entry_ref: e.entry_ref.clone(),
                entry_task_description: e.task_description.clone(),
                entry_scope_summary: e.scope_summary.clone(),
                overlap,
                task_similarity: sim,
            })
        })
        .collect();
    found.sort_by(|a, b| {
        a.overlap
            .cmp(&b.overlap)
            .then(b.task_similarity.total_cmp(&a.task_similarity))
            .then_with(|| a.catalog_id.cmp(&b.catalog_id))
            .then_with(|| a.entry_ref.cmp(&b.entry_ref))
    });
    found.truncate(limit);
    found
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyVerdict {
    pub skill_id: String,
    pub decision: Decision,
    pub rationale: String,
    pub matches: Vec<CatalogMatch>,
}

impl NoveltyVerdict {
    /// For merges: the first live local skill doing the same task.
    pub fn local_survivor(&self, registry: &Registry) -> Option<String> {
        self.matches
            .iter()
            .filter(|m| m.overlap == Overlap::SameTaskDiffScope && m.catalog_id == LOCAL_CATALOG)
            .find(|m| {
                m.entry_ref != self.skill_id
                    && registry
                        .skill(&m.entry_ref)
                        .is_some_and(|s| s.status.is_live())
            })
            .map(|m| m.entry_ref.clone())
    }
}

/// Decision implied by the match classes alone.
pub fn ladder(matches: &[CatalogMatch]) -> Decision {
    if matches.iter().any(|m| m.overlap == Overlap::SameTaskSameScope) {
        Decision::Redundant
    } else if matches.iter().any(|m| m.overlap == Overlap::SameTaskDiffScope) {
        Decision::Merge
    } else {
        Decision::Novel
    }
}

/// Provider's opinion from a novelty_check response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderOpinion {
    pub decision: Decision,
    pub rationale: String,
}

pub fn adjudicate(skill_id: &str, matches: Vec<CatalogMatch>, provider: Option<&ProviderOpinion>) -> NoveltyVerdict {
    let base = ladder(&matches);
    let strongest = matches.first().map(|m| format!("{}:{} ({:?})", m.catalog_id, m.entry_ref, m.overlap));
    let mut rationale = match (base, strongest) {
        (Decision::Novel, _) => String::from("no catalog entry does the same task"),
        (d, Some(s)) => format!("{} by ladder; strongest match {}", d.as_str(), s),
        (d, None) => format!("{} by ladder", d.as_str()),
    };
    let mut decision = base;
    if let Some(op) = provider {
        let downgrade = matches!(op.decision, Decision::Review | Decision::Deprioritize);
        if downgrade && matches!(base, Decision::Novel | Decision::Merge) {
            decision = op.decision;
            rationale = format!("{}; provider: {}", rationale, op.rationale);
        }
    }
    NoveltyVerdict {
        skill_id: skill_id.to_string(),
        decision,
        rationale,
        matches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn entry(r: &str, task: &str, scope: &str) -> CatalogEntry {
        CatalogEntry {
            entry_ref: r.into(),
            task_description: task.into(),
            scope_summary: scope.into(),
            topic_path: None,
            provenance: vec![],
        }
    }

    #[test]
    fn stop_list_has_fifty_unique_words() {
        let set: BTreeSet<&str> = STOP_WORDS.iter().copied().collect();
        assert_eq!(set.len(), 50);
    }

    #[test]
    fn keywords_of_documented_example() {
        let kw = derive_keywords("Annotate cell types in spatial data").unwrap();
        assert_eq!(
            kw.terms(),
            &[
                "annotate",
                "cell",
                "types",
                "spatial",
                "data",
                "annotate cell",
                "cell types",
                "types spatial",
                "spatial data"
            ]
        );
        assert_eq!(derive_keywords("Annotate cell types in spatial data").unwrap(), kw);
        assert!(matches!(
            derive_keywords("of the and in"),
            Err(NoveltyError::EmptyAfterFiltering(_))
        ));
    }

    #[test]
    fn exact_match_is_redundant_and_ranked_first() {
        let cand = entry("c", "Cluster single cell profiles", "python scanpy leiden");
        let cat = Catalog {
            id: "hub".into(),
            entries: vec![
                entry("x", "Plot quality metrics for single cell profiles", "matplotlib"),
                entry("y", "Cluster single cell profiles", "python scanpy leiden"),
            ],
        };
        let m = search_catalogs(&[cat], &cand, 5);
        assert_eq!(m[0].entry_ref, "y");
        assert_eq!(m[0].overlap, Overlap::SameTaskSameScope);
        assert_eq!(adjudicate("c", m, None).decision, Decision::Redundant);
    }

    #[test]
    fn same_task_other_scope_merges_and_provider_can_downgrade() {
        let cand = entry("c", "Cluster single cell profiles", "python scanpy leiden");
        let cat = Catalog {
            id: "hub".into(),
            entries: vec![entry("y", "cluster single  cell profiles", "R seurat louvain")],
        };
        let m = search_catalogs(&[cat], &cand, 5);
        assert_eq!(m[0].overlap, Overlap::SameTaskDiffScope);
        assert_eq!(adjudicate("c", m.clone(), None).decision, Decision::Merge);
        let op = ProviderOpinion {
            decision: Decision::Review,
            rationale: "unsure".into(),
        };
        assert_eq!(adjudicate("c", m, Some(&op)).decision, Decision::Review);
    }

    #[test]
    fn provider_never_upgrades() {
        let op = ProviderOpinion {
            decision: Decision::Novel,
            rationale: String::new(),
        };
        let m = vec![CatalogMatch {
            catalog_id: "hub".into(),
            entry_ref: "y".into(),
            entry_task_description: String::new(),
            entry_scope_summary: String::new(),
            overlap: Overlap::SameTaskSameScope,
            task_similarity: 1.0,
        }];
        assert_eq!(adjudicate("c", m, Some(&op)).decision, Decision::Redundant);
        assert_eq!(adjudicate("c", vec![], None).decision, Decision::Novel);
        assert!(search_catalogs(&[], &entry("c", "a task", ""), 3).is_empty());
    }
}
