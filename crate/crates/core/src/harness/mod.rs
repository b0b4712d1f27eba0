//! Campaign orchestration: trials, campaigns, sweeps and report files.

pub mod campaign;
pub mod report;
pub mod sweep;
pub mod trial;

pub use campaign::{
    run_campaign, run_campaign_with, run_prepared, Aggregates, CampaignReport, CampaignResult,
    CampaignSummary, DetectorAggregate, Execution, TrialSeries,
};
pub use report::{emit_report, Format};
pub use sweep::{detection_sweep, SweepPoint, SweepReport, SWEEP_DISTANCES};
pub use trial::{
    clean_run, learn_map, prepare, run_trial, CampaignSpec, DetectionRecord, FuzzerKind, MapSource,
    MitigationSummary, Outcome, Prepared, Reference, SeriesRow, TrialRecord, TrialResult,
};
