//! Per-stage runtime summary over cycle reports.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::stage::StageKind;

/// Wall time of one stage run, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDuration {
    pub stage: StageKind,
    pub micros: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: StageKind,
    pub samples: usize,
    pub total_micros: u64,
    /// Absent when the stage never ran.
    pub mean_seconds: Option<f64>,
}

/// One row per cycle stage, in cycle order, averaged over every cycle given.
pub fn stage_timing_report<'a, I>(cycles: I) -> Vec<StageTiming>
where
    I: IntoIterator<Item = &'a [StageDuration]>,
{
    let mut rows: Vec<StageTiming> = StageKind::CYCLE
        .iter()
        .map(|s| StageTiming {
            stage: *s,
            samples: 0,
            total_micros: 0,
            mean_seconds: None,
        })
        .collect();
    for cycle in cycles {
        for d in cycle {
            if let Some(i) = d.stage.cycle_position() {
                rows[i].samples += 1;
                rows[i].total_micros += d.micros;
            }
        }
    }
    for r in &mut rows {
        if r.samples > 0 {
            r.mean_seconds = Some(r.total_micros as f64 / r.samples as f64 / 1e6);
        }
    }
    rows
}

pub fn render_timing_table(rows: &[StageTiming]) -> String {
    let mut out = format!("{:<16} {:>7} {:>12}\n", "stage", "samples", "mean_s");
    for r in rows {
        let mean = match r.mean_seconds {
            Some(m) => format!("{:.6}", m),
            None => String::from("-"),
        };
        out.push_str(&format!("{:<16} {:>7} {:>12}\n", r.stage.as_str(), r.samples, mean));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn d(stage: StageKind, micros: u64) -> StageDuration {
        StageDuration { stage, micros }
    }

    #[test]
    fn single_cycle_means_are_its_durations() {
        let c = vec![d(StageKind::TreeCheck, 1_500_000), d(StageKind::Refresh, 250_000)];
        let rows = stage_timing_report([c.as_slice()]);
        assert_eq!(rows[0].mean_seconds, Some(1.5));
        assert_eq!(rows[4].mean_seconds, Some(0.25));
        assert_eq!(rows[1].samples, 0);
        assert_eq!(rows[1].mean_seconds, None);
        assert!(render_timing_table(&rows).contains("resource_search"));
    }
}
