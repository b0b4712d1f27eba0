use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use robosec::attack::AttackModel;
use robosec::harness::report::{self, Format};
use robosec::harness::{
    detection_sweep, learn_map, run_campaign, CampaignResult, CampaignSpec, FuzzerKind, MapSource,
    SWEEP_DISTANCES,
};
use robosec::histmap::HistoricalMap;
use robosec::robofuzz::{FuzzTarget, TriggerPolicy};
use robosec::shade::DetectorKind;
use robosec::Scenario;

/// Sensor fuzzing, attack detection and mitigation campaigns on a simulated
/// cleaning robot.
#[derive(Parser)]
#[command(name = "robosec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Built-in scenario name (two_rooms, single_room) or a scenario JSON path.
    #[arg(long)]
    scenario: Option<String>,
    /// Base seed; trial k uses seed + k. Defaults to the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// json, csv or both.
    #[arg(long, default_value = "both")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a historical map from clean passes.
    Learn {
        #[command(flatten)]
        common: Common,
    },
    /// Run fuzzing campaigns and write a success table.
    Fuzz {
        #[command(flatten)]
        common: Common,
        /// Comma-separated: volatile, random, robofuzz.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "volatile,random,robofuzz"
        )]
        fuzzer: Vec<FuzzerKind>,
        /// crash or efficacy.
        #[arg(long, default_value = "crash")]
        target: FuzzTarget,
        #[arg(long, default_value = "fabrication")]
        attack: AttackModel,
        #[arg(long, value_delimiter = ',')]
        detectors: Vec<DetectorKind>,
        /// Enable map-based mitigation once a detector fires.
        #[arg(long)]
        mitigation: bool,
        #[arg(long, default_value_t = 30)]
        trials: usize,
    },
    /// Run detection campaigns and write a detection table.
    Detect {
        #[command(flatten)]
        common: Common,
        /// Comma-separated: suspension, fabrication.
        #[arg(long, value_delimiter = ',', default_value = "suspension,fabrication")]
        attack: Vec<AttackModel>,
        /// Comma-separated: fingerprinting, crv, nid, shade.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "fingerprinting,crv,nid,shade"
        )]
        detectors: Vec<DetectorKind>,
        #[arg(long)]
        mitigation: bool,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Map file from `learn`; learned on the fly when absent.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Also sweep the attack-start distance.
        #[arg(long)]
        sweep: bool,
    },
    /// Run attacks with detection and mitigation and write a cost table.
    Mitigate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "suspension,fabrication")]
        attack: Vec<AttackModel>,
        #[arg(long, value_delimiter = ',', default_value = "shade")]
        detectors: Vec<DetectorKind>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Re-run the campaign behind a JSON report and compare.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Report JSON written by fuzz, detect or mitigate.
        #[arg(long)]
        report: PathBuf,
    },
}

/// Raised when a replay does not reproduce its report.
#[derive(Debug)]
struct Mismatch(String);

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Mismatch {}

fn scenario(common: &Common, default: &str) -> anyhow::Result<Scenario> {
    let name = common.scenario.as_deref().unwrap_or(default);
    let mut sc = Scenario::resolve(name)?;
    if let Some(seed) = common.seed {
        sc.seed = seed;
    }
    Ok(sc)
}

fn map_source(path: Option<&Path>) -> anyhow::Result<MapSource> {
    Ok(match path {
        Some(p) => MapSource::Provided(Arc::new(HistoricalMap::load(p)?)),
        None => MapSource::Learn,
    })
}

fn write(out: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let p = report::write_file(out, name, contents)?;
    println!("wrote {}", p.display());
    Ok(())
}

fn emit(result: &CampaignResult, common: &Common, stem: &str) -> anyhow::Result<()> {
    let files = report::emit_report(
        &result.report,
        &result.series,
        &common.out,
        stem,
        common.format,
    )?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn learn(common: &Common) -> anyhow::Result<()> {
    let sc = scenario(common, "single_room")?;
    let map = learn_map(&sc, sc.seed)?;
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))?;
    let path = common.out.join(format!("{}.map.json", sc.name));
    map.save(&path)?;
    println!(
        "learned {} occupied cells at {} cm from {} passes; wrote {}",
        map.occupied_count(),
        map.resolution,
        sc.map.passes,
        path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fuzz(
    common: &Common,
    fuzzers: &[FuzzerKind],
    target: FuzzTarget,
    attack: AttackModel,
    detectors: &[DetectorKind],
    mitigation: bool,
    trials: usize,
) -> anyhow::Result<()> {
    let sc = scenario(common, "two_rooms")?;
    let mut rows = Vec::new();
    for &f in fuzzers {
        let mut spec = CampaignSpec::new(sc.clone());
        spec.fuzzer = f;
        spec.target = target;
        spec.attack = attack;
        spec.detectors = detectors.to_vec();
        spec.mitigation = mitigation;
        spec.trials = trials;
        spec.keep_series = common.format.csv() && f == FuzzerKind::RoboFuzz;
        let result = run_campaign(spec)?;
        let a = &result.report.aggregates;
        println!(
            "{:<10} {:>3}/{:<3} {:>5.1}%",
            f.label(),
            a.successes,
            a.trials,
            a.success_rate
        );
        emit(
            &result,
            common,
            &format!("fuzz_{}_{}", target_label(target), f.label()),
        )?;
        rows.push((f.label(), result.report.aggregates));
    }
    if common.format.csv() {
        let table: Vec<(&str, &_)> = rows.iter().map(|(n, a)| (*n, a)).collect();
        write(
            &common.out,
            &format!("fuzz_{}.csv", target_label(target)),
            &report::fuzzer_table(&table)?,
        )?;
    }
    Ok(())
}

fn target_label(t: FuzzTarget) -> &'static str {
    match t {
        FuzzTarget::CrashRobot => "crash",
        FuzzTarget::ReduceEfficacy => "efficacy",
    }
}

fn attack_spec(
    sc: &Scenario,
    model: AttackModel,
    detectors: &[DetectorKind],
    mitigation: bool,
    trials: usize,
    map: &MapSource,
) -> CampaignSpec {
    let mut spec = CampaignSpec::new(sc.clone());
    spec.fuzzer = FuzzerKind::RoboFuzz;
    spec.attack = model;
    spec.detectors = detectors.to_vec();
    spec.mitigation = mitigation;
    spec.trials = trials;
    spec.policy = TriggerPolicy::Immediate;
    spec.map = map.clone();
    spec
}

#[allow(clippy::too_many_arguments)]
fn detect(
    common: &Common,
    attacks: &[AttackModel],
    detectors: &[DetectorKind],
    mitigation: bool,
    trials: usize,
    map: Option<&Path>,
    sweep: bool,
) -> anyhow::Result<()> {
    let sc = scenario(common, "single_room")?;
    let map = map_source(map)?;
    let mut rows = Vec::new();
    for &model in attacks {
        if model == AttackModel::None {
            bail!(robosec::Error::Config(
                "detect needs an attack model".into()
            ));
        }
        let result = run_campaign(attack_spec(&sc, model, detectors, mitigation, trials, &map))?;
        for d in &result.report.aggregates.detectors {
            println!(
                "{:<12} {:<15} {:>3}/{:<3} reaction {}",
                model.label(),
                d.detector.label(),
                d.detections,
                d.trials,
                d.mean_reaction.map_or("-".into(), |r| format!("{r:.1} s"))
            );
        }
        emit(&result, common, &format!("detect_{}", model.label()))?;
        if sweep {
            let mut spec = attack_spec(&sc, model, detectors, false, trials, &map);
            spec.policy = TriggerPolicy::AtDistance {
                distance: SWEEP_DISTANCES[0],
            };
            let s = detection_sweep(&spec, &SWEEP_DISTANCES, Default::default())?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            if common.format.json() {
                write(
                    &common.out,
                    &format!("sweep_{}.json", model.label()),
                    &report::to_json(&s)?,
                )?;
            }
            if common.format.csv() {
                write(
                    &common.out,
                    &format!("sweep_{}.csv", model.label()),
                    &report::sweep_table(&s)?,
                )?;
            }
        }
        rows.push((model, result.report.aggregates));
    }
    if common.format.csv() {
        let table: Vec<(AttackModel, &_)> = rows.iter().map(|(m, a)| (*m, a)).collect();
        write(&common.out, "detect.csv", &report::detection_table(&table)?)?;
    }
    Ok(())
}

fn mitigate(
    common: &Common,
    attacks: &[AttackModel],
    detectors: &[DetectorKind],
    trials: usize,
    map: Option<&Path>,
) -> anyhow::Result<()> {
    let sc = scenario(common, "single_room")?;
    let map = map_source(map)?;
    let mut rows = Vec::new();
    for &model in attacks {
        let result = run_campaign(attack_spec(&sc, model, detectors, true, trials, &map))?;
        let r = &result.report;
        println!(
            "{:<12} distance {:.1} of {:.1} cm, time {:.1} of {:.1} s, collisions {}",
            model.label(),
            r.aggregates.mean_cleaned_distance,
            r.reference.cleaned_distance,
            r.aggregates.mean_running_time,
            r.reference.running_time,
            r.aggregates.collisions
        );
        emit(&result, common, &format!("mitigate_{}", model.label()))?;
        rows.push((model, result.report.reference, result.report.aggregates));
    }
    if common.format.csv() {
        let table: Vec<_> = rows.iter().map(|(m, r, a)| (*m, r, a)).collect();
        write(
            &common.out,
            "mitigate.csv",
            &report::mitigation_table(&table)?,
        )?;
    }
    Ok(())
}

fn replay(common: &Common, path: &Path) -> anyhow::Result<()> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let original = report::report_from_json(&text)?;
    let s = &original.summary;
    let mut sc = match &common.scenario {
        Some(name) => Scenario::resolve(name)?,
        None => Scenario::resolve(&s.scenario)?,
    };
    sc.seed = s.base_seed;
    let mut spec = CampaignSpec::new(sc);
    spec.fuzzer = s.fuzzer;
    spec.target = s.target;
    spec.attack = s.attack;
    spec.detectors = s.detectors.clone();
    spec.mitigation = s.mitigation;
    spec.trials = s.trials;
    spec.base_seed = s.base_seed;
    spec.policy = s.policy;
    spec.keep_series = common.format.csv();
    let result = run_campaign(spec)?;
    emit(&result, common, "replay")?;
    if result.report != original {
        let differing = original
            .records
            .iter()
            .zip(&result.report.records)
            .filter(|(a, b)| a != b)
            .count();
        bail!(Mismatch(format!(
            "replay differs from {}: {differing} of {} trials changed",
            path.display(),
            original.records.len()
        )));
    }
    println!("replay of {} trials is identical", original.records.len());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Learn { common } => learn(&common),
        Command::Fuzz {
            common,
            fuzzer,
            target,
            attack,
            detectors,
            mitigation,
            trials,
        } => fuzz(
            &common, &fuzzer, target, attack, &detectors, mitigation, trials,
        ),
        Command::Detect {
            common,
            attack,
            detectors,
            mitigation,
            trials,
            map,
            sweep,
        } => detect(
            &common,
            &attack,
            &detectors,
            mitigation,
            trials,
            map.as_deref(),
            sweep,
        ),
        Command::Mitigate {
            common,
            attack,
            detectors,
            trials,
            map,
        } => mitigate(&common, &attack, &detectors, trials, map.as_deref()),
        Command::Replay { common, report } => replay(&common, &report),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Mismatch>().is_some() {
                ExitCode::from(3)
            } else if e.downcast_ref::<robosec::Error>().is_some() {
                // bad scenario, map or campaign settings
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
