use serde::{Deserialize, Serialize};

use super::trial::{
    prepare, run_trial, CampaignSpec, FuzzerKind, Prepared, Reference, SeriesRow, TrialRecord,
    TrialResult,
};
use crate::attack::AttackModel;
use crate::robofuzz::{Emission, FuzzTarget, TriggerPolicy};
use crate::shade::DetectorKind;
use crate::Result;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorAggregate {
    pub detector: DetectorKind,
    pub trials: usize,
    pub detections: usize,
    pub mean_reaction: Option<f64>,
    pub false_positives: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub trials: usize,
    pub successes: usize,
    /// Percent.
    pub success_rate: f64,
    pub collisions: usize,
    pub detectors: Vec<DetectorAggregate>,
    pub mean_cleaned_distance: f64,
    pub mean_running_time: f64,
    /// Percent of the clean run's cleaned distance that was lost.
    pub distance_loss_pct: f64,
    /// Mean running time over the clean run's.
    pub time_ratio: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, sum) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| sum / n as f64)
}

impl Aggregates {
    pub fn from_records(records: &[TrialRecord], reference: &Reference) -> Self {
        let trials = records.len();
        let successes = records.iter().filter(|r| r.success).count();
        let mut kinds: Vec<DetectorKind> = records
            .iter()
            .flat_map(|r| r.detections.iter().map(|d| d.detector))
            .collect();
        kinds.sort();
        kinds.dedup();
        let detectors = kinds
            .into_iter()
            .map(|kind| {
                let recs: Vec<_> = records.iter().filter_map(|r| r.detection(kind)).collect();
                DetectorAggregate {
                    detector: kind,
                    trials: recs.len(),
                    detections: recs.iter().filter(|d| d.detected_at.is_some()).count(),
                    mean_reaction: mean(recs.iter().filter_map(|d| d.reaction)),
                    false_positives: recs.iter().map(|d| d.false_positives).sum(),
                }
            })
            .collect();
        let mean_cleaned_distance = mean(records.iter().map(|r| r.cleaned_distance)).unwrap_or(0.0);
        let mean_running_time = mean(records.iter().map(|r| r.running_time)).unwrap_or(0.0);
        let distance_loss_pct = if reference.cleaned_distance > 0.0 {
            100.0 * (1.0 - mean_cleaned_distance / reference.cleaned_distance)
        } else {
            0.0
        };
        let time_ratio = if reference.running_time > 0.0 {
            mean_running_time / reference.running_time
        } else {
            0.0
        };
        Self {
            trials,
            successes,
            success_rate: if trials == 0 {
                0.0
            } else {
                100.0 * successes as f64 / trials as f64
            },
            collisions: records.iter().filter(|r| r.collision.is_some()).count(),
            detectors,
            mean_cleaned_distance,
            mean_running_time,
            distance_loss_pct,
            time_ratio,
        }
    }

    pub fn detector(&self, kind: DetectorKind) -> Option<&DetectorAggregate> {
        self.detectors.iter().find(|d| d.detector == kind)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub scenario: String,
    pub fuzzer: FuzzerKind,
    pub target: FuzzTarget,
    pub attack: AttackModel,
    pub detectors: Vec<DetectorKind>,
    pub mitigation: bool,
    pub trials: usize,
    pub base_seed: u64,
    pub policy: TriggerPolicy,
}

impl From<&CampaignSpec> for CampaignSummary {
    fn from(s: &CampaignSpec) -> Self {
        Self {
            scenario: s.scenario.name.clone(),
            fuzzer: s.fuzzer,
            target: s.target,
            attack: s.attack,
            detectors: s.detectors.clone(),
            mitigation: s.mitigation,
            trials: s.trials,
            base_seed: s.base_seed,
            policy: s.policy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub summary: CampaignSummary,
    pub reference: Reference,
    pub records: Vec<TrialRecord>,
    pub aggregates: Aggregates,
    /// False when some trial could not be configured; `records` is partial.
    pub valid: bool,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSeries {
    pub index: usize,
    pub seed: u64,
    pub rows: Vec<SeriesRow>,
    pub emissions: Vec<Emission>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignResult {
    pub report: CampaignReport,
    pub series: Vec<TrialSeries>,
}

fn run_indices(prepared: &Prepared, exec: Execution) -> Vec<Result<TrialResult>> {
    let n = prepared.spec.trials;
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n)
                .into_par_iter()
                .map(|i| run_trial(prepared, i))
                .collect()
        }
        _ => (0..n).map(|i| run_trial(prepared, i)).collect(),
    }
}

/// Runs every trial of a prepared campaign. Results are gathered in trial
/// order, so both execution paths produce the same report.
pub fn run_prepared(prepared: &Prepared, exec: Execution) -> CampaignResult {
    let mut records = Vec::new();
    let mut series = Vec::new();
    let mut errors = Vec::new();
    for (i, r) in run_indices(prepared, exec).into_iter().enumerate() {
        match r {
            Ok(res) => {
                if prepared.spec.keep_series {
                    series.push(TrialSeries {
                        index: i,
                        seed: res.record.seed,
                        rows: res.series,
                        emissions: res.emissions,
                    });
                }
                records.push(res.record);
            }
            Err(e) => errors.push(format!("trial {i}: {e}")),
        }
    }
    let aggregates = Aggregates::from_records(&records, &prepared.reference);
    CampaignResult {
        report: CampaignReport {
            summary: CampaignSummary::from(&prepared.spec),
            reference: prepared.reference.clone(),
            records,
            aggregates,
            valid: errors.is_empty(),
            errors,
        },
        series,
    }
}

pub fn run_campaign(spec: CampaignSpec) -> Result<CampaignResult> {
    run_campaign_with(spec, Execution::default())
}

pub fn run_campaign_with(spec: CampaignSpec, exec: Execution) -> Result<CampaignResult> {
    let prepared = prepare(spec)?;
    Ok(run_prepared(&prepared, exec))
}
