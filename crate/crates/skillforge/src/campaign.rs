//! Campaigns: branch-focused mining cycles alternating with batched
//! evaluation of pending skills, checkpointed after every phase.

use std::path::Path;

use serde::{Deserialize, Serialize};
use skillforge_core::NodePath;

use crate::fsutil::{self, FsError};
use crate::layout::Layout;
use crate::pipeline::{
    pending_skills, read_cycle_reports, CycleReport, Engine, EvaluationReport, Mode, PipelineError,
};
use crate::store::{open_library, read_tree, registry_digest, StoreError};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("campaign {0} already has a checkpoint; use resume")]
    Exists(String),
    #[error("campaign {0} has no checkpoint")]
    Missing(String),
    #[error("campaign {id}: {what} digest mismatch, state drifted since the checkpoint")]
    DigestMismatch { id: String, what: &'static str },
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error("unreadable checkpoint {}: {message}", path.display())]
    Checkpoint { path: std::path::PathBuf, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Fs(#[from] FsError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    /// Branch the mining cycles focus on; `None` ranks the whole tree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<NodePath>,
    pub cycles: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub id: String,
    pub schedule: Vec<ScheduleEntry>,
    #[serde(default = "parallel")]
    pub mode: Mode,
    /// Pending skills evaluated per evaluation phase; 0 takes the engine default.
    #[serde(default)]
    pub eval_batch_size: usize,
    /// Consecutive failed phases before the campaign halts; 0 takes the engine default.
    #[serde(default)]
    pub failure_limit: u32,
}

fn parallel() -> Mode {
    Mode::Parallel
}

impl CampaignConfig {
    pub fn parse(text: &str) -> Result<Self, CampaignError> {
        let cfg: CampaignConfig = toml::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        Self::parse(&fsutil::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), CampaignError> {
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(CampaignError::Config(format!("bad campaign id {:?}", self.id)));
        }
        if self.schedule.is_empty() {
            return Err(CampaignError::Config("empty branch schedule".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignStatus {
    Running,
    Interrupted,
    Halted,
    Completed,
}

/// Position in the schedule: entry index and mining cycles finished within
/// it. An entry whose cycles are all done has its evaluation phase next.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cursor {
    pub entry: usize,
    pub cycles_done: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PhaseKind {
    Mining { cycle: u64 },
    Evaluation { batch: Option<u64> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRecord {
    #[serde(flatten)]
    pub kind: PhaseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<NodePath>,
    pub succeeded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignCheckpoint {
    pub campaign_id: String,
    pub config: CampaignConfig,
    pub completed_cycles: Vec<u64>,
    pub pending_skills: Vec<String>,
    pub cursor: Cursor,
    pub phases: Vec<PhaseRecord>,
    pub consecutive_failures: u32,
    pub status: CampaignStatus,
    pub registry_digest: String,
    pub tree_digest: String,
}

impl CampaignCheckpoint {
    fn fresh(config: CampaignConfig) -> Self {
        Self {
            campaign_id: config.id.clone(),
            config,
            completed_cycles: Vec::new(),
            pending_skills: Vec::new(),
            cursor: Cursor::default(),
            phases: Vec::new(),
            consecutive_failures: 0,
            status: CampaignStatus::Running,
            registry_digest: String::new(),
            tree_digest: String::new(),
        }
    }

    fn finished(&self) -> bool {
        self.cursor.entry >= self.config.schedule.len()
    }
}

pub fn checkpoint_path(layout: &Layout, id: &str) -> std::path::PathBuf {
    layout.campaign_dir(id).join(CHECKPOINT_FILE)
}

/// Records the on-disk digests and pending skills into `cp` and writes it.
pub fn checkpoint_campaign(layout: &Layout, cp: &mut CampaignCheckpoint) -> Result<(), CampaignError> {
    let lib = open_library(layout)?;
    cp.registry_digest = registry_digest(layout)?;
    cp.tree_digest = lib.tree.digest();
    cp.pending_skills = pending_skills(&lib.registry);
    let text = serde_json::to_string_pretty(cp).expect("checkpoints serialize");
    fsutil::write_atomic(&checkpoint_path(layout, &cp.campaign_id), text.as_bytes())?;
    Ok(())
}

pub fn load_checkpoint(layout: &Layout, id: &str) -> Result<CampaignCheckpoint, CampaignError> {
    let path = checkpoint_path(layout, id);
    if !path.is_file() {
        return Err(CampaignError::Missing(id.to_string()));
    }
    let text = fsutil::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| CampaignError::Checkpoint {
        path,
        message: e.to_string(),
    })
}

/// Refuses when the registry or tree on disk no longer matches `cp`.
pub fn verify_checkpoint(layout: &Layout, cp: &CampaignCheckpoint) -> Result<(), CampaignError> {
    if registry_digest(layout)? != cp.registry_digest {
        return Err(CampaignError::DigestMismatch {
            id: cp.campaign_id.clone(),
            what: "registry",
        });
    }
    if read_tree(layout)?.digest() != cp.tree_digest {
        return Err(CampaignError::DigestMismatch {
            id: cp.campaign_id.clone(),
            what: "tree",
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub campaign_id: String,
    pub status: CampaignStatus,
    pub phases: Vec<PhaseRecord>,
    pub cycles: Vec<CycleReport>,
    pub evaluations: Vec<EvaluationReport>,
}

impl CampaignReport {
    pub fn mining_phases(&self) -> usize {
        self.phases.iter().filter(|p| matches!(p.kind, PhaseKind::Mining { .. })).count()
    }

    pub fn evaluation_phases(&self) -> usize {
        self.phases
            .iter()
            .filter(|p| matches!(p.kind, PhaseKind::Evaluation { .. }))
            .count()
    }
}

fn report_for(engine: &Engine, cp: &CampaignCheckpoint) -> Result<CampaignReport, CampaignError> {
    let cycles = read_cycle_reports(&engine.layout)?
        .into_iter()
        .filter(|r| cp.completed_cycles.contains(&r.cycle_index))
        .collect();
    let batches: Vec<u64> = cp
        .phases
        .iter()
        .filter_map(|p| match p.kind {
            PhaseKind::Evaluation { batch } => batch,
            _ => None,
        })
        .collect();
    let evaluations = crate::pipeline::read_evaluation_reports(&engine.layout)?
        .into_iter()
        .filter(|r| batches.contains(&r.batch))
        .collect();
    Ok(CampaignReport {
        campaign_id: cp.campaign_id.clone(),
        status: cp.status,
        phases: cp.phases.clone(),
        cycles,
        evaluations,
    })
}

/// Runs one phase at the cursor and advances it.
fn step(engine: &Engine, cp: &mut CampaignCheckpoint) -> Result<(), CampaignError> {
    let entry = cp.config.schedule[cp.cursor.entry].clone();
    let record = if cp.cursor.cycles_done < entry.cycles {
        let record = match engine.run_cycle(cp.config.mode, entry.branch.clone()) {
            Ok(report) => {
                cp.completed_cycles.push(report.cycle_index);
                PhaseRecord {
                    kind: PhaseKind::Mining {
                        cycle: report.cycle_index,
                    },
                    branch: entry.branch.clone(),
                    succeeded: true,
                    note: None,
                }
            }
            Err(PipelineError::Aborted { cycle, stage, source }) => PhaseRecord {
                kind: PhaseKind::Mining { cycle },
                branch: entry.branch.clone(),
                succeeded: false,
                note: Some(format!("{}: {}", stage, source)),
            },
            Err(e) => return Err(e.into()),
        };
        cp.cursor.cycles_done += 1;
        record
    } else {
        let lib = open_library(&engine.layout)?;
        let record = if pending_skills(&lib.registry).is_empty() {
            PhaseRecord {
                kind: PhaseKind::Evaluation { batch: None },
                branch: entry.branch.clone(),
                succeeded: true,
                note: Some("no pending skills".to_string()),
            }
        } else {
            let limit = match cp.config.eval_batch_size {
                0 => engine.config.evaluation.batch_size.max(1),
                n => n,
            };
            match engine.evaluate_pending(limit) {
                Ok(r) => PhaseRecord {
                    kind: PhaseKind::Evaluation { batch: Some(r.batch) },
                    branch: entry.branch.clone(),
                    succeeded: true,
                    note: None,
                },
                Err(e) => PhaseRecord {
                    kind: PhaseKind::Evaluation { batch: None },
                    branch: entry.branch.clone(),
                    succeeded: false,
                    note: Some(e.to_string()),
                },
            }
        };
        cp.cursor = Cursor {
            entry: cp.cursor.entry + 1,
            cycles_done: 0,
        };
        record
    };
    if record.succeeded {
        cp.consecutive_failures = 0;
    } else {
        cp.consecutive_failures += 1;
    }
    cp.phases.push(record);
    Ok(())
}

fn drive(engine: &Engine, cp: &mut CampaignCheckpoint, stop_after: Option<usize>) -> Result<CampaignReport, CampaignError> {
    let limit = match cp.config.failure_limit {
        0 => engine.config.halt_after_failures.max(1),
        n => n,
    };
    cp.status = CampaignStatus::Running;
    let mut ran = 0usize;
    while !cp.finished() {
        if stop_after.is_some_and(|n| ran >= n) {
            cp.status = CampaignStatus::Interrupted;
            break;
        }
        step(engine, cp)?;
        ran += 1;
        if cp.consecutive_failures >= limit {
            cp.status = CampaignStatus::Halted;
            break;
        }
        checkpoint_campaign(&engine.layout, cp)?;
    }
    if cp.finished() && cp.status == CampaignStatus::Running {
        cp.status = CampaignStatus::Completed;
    }
    checkpoint_campaign(&engine.layout, cp)?;
    report_for(engine, cp)
}

/// Starts a campaign. `stop_after` interrupts after that many phases, leaving
/// a checkpoint to resume from.
pub fn run_campaign(
    engine: &Engine,
    config: CampaignConfig,
    stop_after: Option<usize>,
) -> Result<CampaignReport, CampaignError> {
    config.validate()?;
    if checkpoint_path(&engine.layout, &config.id).exists() {
        return Err(CampaignError::Exists(config.id));
    }
    let mut cp = CampaignCheckpoint::fresh(config);
    checkpoint_campaign(&engine.layout, &mut cp)?;
    drive(engine, &mut cp, stop_after)
}

/// Continues a campaign from its checkpoint after checking that the shared
/// state has not drifted. A finished campaign just reports.
pub fn resume_campaign(engine: &Engine, id: &str, stop_after: Option<usize>) -> Result<CampaignReport, CampaignError> {
    let mut cp = load_checkpoint(&engine.layout, id)?;
    verify_checkpoint(&engine.layout, &cp)?;
    if matches!(cp.status, CampaignStatus::Completed | CampaignStatus::Halted) {
        return report_for(engine, &cp);
    }
    drive(engine, &mut cp, stop_after)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_and_rejects_bad_ids() {
        let cfg = CampaignConfig::parse(
            "id = \"c1\"\n[[schedule]]\nbranch = \"lab/bench\"\ncycles = 2\n[[schedule]]\ncycles = 1\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Parallel);
        assert_eq!(cfg.schedule.len(), 2);
        assert_eq!(cfg.schedule[1].branch, None);
        assert!(CampaignConfig::parse("id = \"../x\"\n[[schedule]]\ncycles = 1\n").is_err());
        assert!(CampaignConfig::parse("id = \"x\"\nschedule = []\n").is_err());
    }

    #[test]
    fn idle_checkpoint_round_trips() {
        let cfg = CampaignConfig::parse("id = \"idle\"\n[[schedule]]\ncycles = 1\n").unwrap();
        let cp = CampaignCheckpoint::fresh(cfg);
        let text = serde_json::to_string(&cp).unwrap();
        let back: CampaignCheckpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cp);
        assert!(!back.finished());
    }
}
