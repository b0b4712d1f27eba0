use serde::{Deserialize, Serialize};

use super::campaign::{run_prepared, Execution};
use super::trial::{prepare, CampaignSpec};
use crate::robofuzz::TriggerPolicy;
use crate::shade::DetectorKind;
use crate::Result;

/// The attack-start distances of the reaction-time sweep, cm.
pub const SWEEP_DISTANCES: [f64; 8] = [200.0, 175.0, 150.0, 125.0, 100.0, 75.0, 50.0, 25.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub distance: f64,
    pub detector: DetectorKind,
    pub trials: usize,
    pub detections: usize,
    pub mean_reaction: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub warnings: Vec<String>,
}

impl SweepReport {
    pub fn curve(&self, detector: DetectorKind) -> Vec<(f64, Option<f64>)> {
        self.points
            .iter()
            .filter(|p| p.detector == detector)
            .map(|p| (p.distance, p.mean_reaction))
            .collect()
    }
}

/// One campaign per attack-start distance; the attack fires once the
/// robot is that close to what it faces.
pub fn detection_sweep(
    spec: &CampaignSpec,
    distances: &[f64],
    exec: Execution,
) -> Result<SweepReport> {
    let mut report = SweepReport::default();
    let mut base = spec.clone();
    base.policy = TriggerPolicy::AtDistance {
        distance: SWEEP_DISTANCES[0],
    };
    // one reference run and map serve every distance
    let prepared = prepare(base)?;
    for &d in distances {
        let mut p = prepared.clone();
        p.spec.policy = TriggerPolicy::AtDistance { distance: d };
        let result = run_prepared(&p, exec);
        let started = result
            .report
            .records
            .iter()
            .filter(|r| r.attack_start.is_some())
            .count();
        if started == 0 {
            report
                .warnings
                .push(format!("distance {d} cm never reached; skipped"));
            continue;
        }
        for agg in &result.report.aggregates.detectors {
            report.points.push(SweepPoint {
                distance: d,
                detector: agg.detector,
                trials: agg.trials,
                detections: agg.detections,
                mean_reaction: agg.mean_reaction,
            });
        }
    }
    Ok(report)
}
