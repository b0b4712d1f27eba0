use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::campaign::{Aggregates, CampaignReport, TrialSeries};
use super::sweep::SweepReport;
use super::trial::Reference;
use crate::attack::AttackModel;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    #[default]
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "both" | "all" => Ok(Format::Both),
            other => Err(format!("unknown format '{other}'")),
        }
    }
}

fn pct(x: f64) -> String {
    format!("{x:.1}")
}

fn secs(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.1}")).unwrap_or_default()
}

fn to_csv<W: std::io::Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut buf = Vec::new();
    to_csv(&mut buf, header, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Success counts per fuzzer.
pub fn fuzzer_table(rows: &[(&str, &Aggregates)]) -> Result<String> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, a)| {
            vec![
                name.to_string(),
                a.trials.to_string(),
                a.successes.to_string(),
                pct(a.success_rate),
            ]
        })
        .collect();
    csv_string(
        &["fuzzer", "trials", "successes", "success_rate_pct"],
        &body,
    )
}

/// Detections and mean reaction per method and attack model.
pub fn detection_table(rows: &[(AttackModel, &Aggregates)]) -> Result<String> {
    let mut body = Vec::new();
    for (model, a) in rows {
        for d in &a.detectors {
            body.push(vec![
                model.label().to_string(),
                d.detector.label().to_string(),
                d.trials.to_string(),
                d.detections.to_string(),
                secs(d.mean_reaction),
                d.false_positives.to_string(),
            ]);
        }
    }
    csv_string(
        &[
            "attack",
            "method",
            "trials",
            "detections",
            "mean_reaction_s",
            "false_positives",
        ],
        &body,
    )
}

/// Mitigation cost against the clean run per attack model.
pub fn mitigation_table(rows: &[(AttackModel, &Reference, &Aggregates)]) -> Result<String> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(model, reference, a)| {
            vec![
                model.label().to_string(),
                format!("{:.1}", reference.cleaned_distance),
                format!("{:.1}", a.mean_cleaned_distance),
                pct(a.distance_loss_pct),
                secs(Some(reference.running_time)),
                secs(Some(a.mean_running_time)),
                pct(100.0 * (a.time_ratio - 1.0)),
                a.collisions.to_string(),
            ]
        })
        .collect();
    csv_string(
        &[
            "attack",
            "clean_distance_cm",
            "mitigated_distance_cm",
            "distance_loss_pct",
            "clean_time_s",
            "mitigated_time_s",
            "time_overhead_pct",
            "collisions",
        ],
        &body,
    )
}

/// Distance-vs-time rows for plotting.
pub fn series_table(series: &[TrialSeries]) -> Result<String> {
    let mut body = Vec::new();
    for s in series {
        for r in &s.rows {
            body.push(vec![
                s.index.to_string(),
                s.seed.to_string(),
                format!("{:.1}", r.t),
                format!("{:.3}", r.x),
                format!("{:.3}", r.y),
                format!("{:.3}", r.range),
                r.delivered.map(|v| format!("{v:.3}")).unwrap_or_default(),
                r.alert.to_string(),
                r.tampered.to_string(),
            ]);
        }
    }
    csv_string(
        &[
            "trial",
            "seed",
            "t",
            "x",
            "y",
            "range",
            "delivered",
            "alert",
            "tampered",
        ],
        &body,
    )
}

pub fn sweep_table(sweep: &SweepReport) -> Result<String> {
    let body: Vec<Vec<String>> = sweep
        .points
        .iter()
        .map(|p| {
            vec![
                format!("{:.0}", p.distance),
                p.detector.label().to_string(),
                p.trials.to_string(),
                p.detections.to_string(),
                secs(p.mean_reaction),
            ]
        })
        .collect();
    csv_string(
        &[
            "distance_cm",
            "method",
            "trials",
            "detections",
            "mean_reaction_s",
        ],
        &body,
    )
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|source| Error::Parse {
        what: "report".into(),
        source,
    })
}

pub fn report_from_json(text: &str) -> Result<CampaignReport> {
    serde_json::from_str(text).map_err(|source| Error::Parse {
        what: "report".into(),
        source,
    })
}

/// Writes `contents` to `dir/name`, creating `dir`.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Full JSON report plus the per-trial series of one campaign.
pub fn emit_report(
    report: &CampaignReport,
    series: &[TrialSeries],
    dir: &Path,
    stem: &str,
    format: Format,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if format.json() {
        written.push(write_file(dir, &format!("{stem}.json"), &to_json(report)?)?);
    }
    if format.csv() && !series.is_empty() {
        written.push(write_file(
            dir,
            &format!("{stem}_series.csv"),
            &series_table(series)?,
        )?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agg(trials: usize, successes: usize) -> Aggregates {
        Aggregates {
            trials,
            successes,
            success_rate: 100.0 * successes as f64 / trials as f64,
            collisions: 0,
            detectors: vec![],
            mean_cleaned_distance: 0.0,
            mean_running_time: 0.0,
            distance_loss_pct: 0.0,
            time_ratio: 1.0,
        }
    }

    #[test]
    fn fuzzer_table_rates_to_one_decimal() {
        let a = agg(30, 28);
        let b = agg(30, 5);
        let c = agg(30, 0);
        let csv = fuzzer_table(&[("robofuzz", &a), ("random", &b), ("volatile", &c)]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "fuzzer,trials,successes,success_rate_pct");
        assert_eq!(lines[1], "robofuzz,30,28,93.3");
        assert_eq!(lines[2], "random,30,5,16.7");
        assert_eq!(lines[3], "volatile,30,0,0.0");
    }
}
