//! Acceptance run: reproduces the evaluation tables and consistency checks
//! and prints one pass/fail line per criterion.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robosec::attack::{AttackModel, VolatileStream};
use robosec::controller::{volatility_check, FilterConfig, FilterVerdict};
use robosec::harness::*;
use robosec::histmap::{self, Provenance};
use robosec::robofuzz::{FuzzTarget, TriggerPolicy};
use robosec::sensing::SensorMode;
use robosec::shade::DetectorKind;
use robosec::world::{Pose, SENSOR_MAX, SENSOR_MIN};
use robosec::Scenario;

struct Check {
    id: u8,
    pass: bool,
    detail: String,
}

fn check(id: u8, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        id,
        pass,
        detail: detail.into(),
    }
}

fn fuzz(target: FuzzTarget, fuzzer: FuzzerKind, trials: usize) -> CampaignResult {
    let mut s = CampaignSpec::new(Scenario::builtin("two_rooms").unwrap());
    s.fuzzer = fuzzer;
    s.target = target;
    s.attack = AttackModel::Fabrication;
    s.trials = trials;
    s.keep_series = fuzzer == FuzzerKind::RoboFuzz;
    run_campaign(s).unwrap()
}

fn detect(model: AttackModel, detectors: Vec<DetectorKind>, mitigation: bool) -> CampaignResult {
    let mut s = CampaignSpec::new(Scenario::builtin("single_room").unwrap());
    s.fuzzer = FuzzerKind::RoboFuzz;
    s.attack = model;
    s.trials = 10;
    s.detectors = detectors;
    s.mitigation = mitigation;
    s.policy = TriggerPolicy::Immediate;
    run_campaign(s).unwrap()
}

struct Tables {
    crash: [CampaignResult; 3],
    efficacy: [CampaignResult; 3],
}

const FUZZERS: [FuzzerKind; 3] = [
    FuzzerKind::Volatile,
    FuzzerKind::RandomTime,
    FuzzerKind::RoboFuzz,
];

fn fuzz_table(target: FuzzTarget) -> [CampaignResult; 3] {
    FUZZERS.map(|f| fuzz(target, f, 30))
}

fn successes(rs: &[CampaignResult; 3]) -> [usize; 3] {
    [0, 1, 2].map(|i| rs[i].report.aggregates.successes)
}

fn criterion_1(t: &Tables) -> Check {
    let [v, r, f] = successes(&t.crash);
    check(
        1,
        v == 0 && r <= 9 && f >= 29,
        format!("crash: volatile {v}/30, random {r}/30, robofuzz {f}/30"),
    )
}

fn criterion_2(t: &Tables) -> Check {
    let [v, r, f] = successes(&t.efficacy);
    check(
        2,
        v == 0 && r <= 9 && f >= 27,
        format!("efficacy: volatile {v}/30, random {r}/30, robofuzz {f}/30"),
    )
}

fn hits(r: &CampaignResult, kind: DetectorKind) -> usize {
    r.report
        .aggregates
        .detector(kind)
        .map_or(0, |d| d.detections)
}

fn criterion_3(susp: &CampaignResult, fab: &CampaignResult) -> Check {
    use DetectorKind::*;
    let s = [Fingerprinting, Crv, Nid, Shade].map(|k| hits(susp, k));
    let f = [Fingerprinting, Crv, Nid, Shade].map(|k| hits(fab, k));
    let pass = s == [0, 10, 0, 10] && f == [10, 10, 10, 10];
    check(
        3,
        pass,
        format!("suspension fp/crv/nid/shade {s:?}, fabrication {f:?}"),
    )
}

fn criterion_4(susp: &CampaignResult, fab: &CampaignResult) -> Check {
    use DetectorKind::*;
    let mean = |r: &CampaignResult, k| {
        r.report
            .aggregates
            .detector(k)
            .and_then(|d| d.mean_reaction)
    };
    let shade = mean(fab, Shade);
    let fp = mean(fab, Fingerprinting);
    let nid = mean(fab, Nid);
    let fab_ok = shade.is_some_and(|v| v <= 1.0)
        && fp.is_some_and(|v| v <= 1.0)
        && nid.is_some_and(|v| (9.0..=12.0).contains(&v));
    // suspension is only noticed once the robot should have been alerted
    let tick = 0.1;
    let mut worst: f64 = 0.0;
    let mut susp_ok = true;
    for rec in &susp.report.records {
        let Some(d) = rec.attack_distance else {
            susp_ok = false;
            continue;
        };
        let predicted = (d - 20.0) / 5.0;
        for k in [Shade, Crv] {
            match rec.detection(k).and_then(|x| x.reaction) {
                Some(r) => worst = worst.max((r - predicted).abs()),
                None => susp_ok = false,
            }
        }
    }
    susp_ok &= worst <= 2.0 * tick + 1e-9;
    check(
        4,
        fab_ok && susp_ok,
        format!(
            "fabrication shade {shade:.2?} s, fingerprinting {fp:.2?} s, nid {nid:.2?} s; suspension worst deviation {worst:.2} s"
        ),
    )
}

fn criterion_5() -> Check {
    let mut s = CampaignSpec::new(Scenario::builtin("single_room").unwrap());
    s.fuzzer = FuzzerKind::RoboFuzz;
    s.attack = AttackModel::Suspension;
    s.trials = 5;
    s.detectors = vec![DetectorKind::Shade];
    let sweep = detection_sweep(&s, &SWEEP_DISTANCES, Execution::Parallel).unwrap();
    let curve = sweep.curve(DetectorKind::Shade);
    let values: Vec<Option<f64>> = curve.iter().map(|c| c.1).collect();
    let complete = curve.len() == SWEEP_DISTANCES.len() && values.iter().all(Option::is_some);
    let v: Vec<f64> = values.into_iter().flatten().collect();
    // distances are listed far to near
    let monotone = v.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    let last = v.last().copied().unwrap_or(f64::INFINITY);
    let first = v.first().copied().unwrap_or(0.0);
    check(
        5,
        complete && monotone && last <= 3.0,
        format!("reaction at 200 cm {first:.1} s, at 25 cm {last:.1} s, non-increasing {monotone}"),
    )
}

fn criterion_6() -> (Check, usize) {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut collisions = 0;
    for model in [AttackModel::Suspension, AttackModel::Fabrication] {
        let r = detect(model, vec![DetectorKind::Shade], true);
        let reference = &r.report.reference;
        let a = &r.report.aggregates;
        collisions += a.collisions;
        let dist = a.mean_cleaned_distance / reference.cleaned_distance;
        let time = a.mean_running_time / reference.running_time;
        let speeds_ok = r.report.records.iter().all(|rec| {
            rec.mitigation
                .as_ref()
                .is_some_and(|m| m.entered_at.is_some() && m.speed == 0.9 * 5.0)
        });
        ok &= dist >= 0.9 && time <= 1.15 && speeds_ok;
        parts.push(format!(
            "{model:?}: distance {:.1}% of clean, time x{time:.3}, speed 0.9x {speeds_ok}",
            100.0 * dist
        ));
    }
    (check(6, ok, parts.join("; ")), collisions)
}

fn criterion_7(t: &Tables) -> Check {
    let cfg = FilterConfig::default();
    let mut streams = 0;
    let mut passed = 0;
    for r in [&t.crash[2], &t.efficacy[2]] {
        for s in &r.series {
            let g: Vec<f64> = s.emissions.iter().filter_map(|e| e.gamma).collect();
            if g.is_empty() {
                continue;
            }
            streams += 1;
            let clean =
                (1..=g.len()).all(|end| volatility_check(&g[..end], &cfg) == FilterVerdict::Accept);
            passed += usize::from(clean);
        }
    }
    let mut windows = 0;
    let mut rejected = 0;
    for seed in 0..1000u64 {
        let v: Vec<f64> = VolatileStream::new(ChaCha8Rng::seed_from_u64(seed))
            .take(cfg.window + 9)
            .collect();
        for w in v.windows(cfg.window) {
            windows += 1;
            rejected += usize::from(volatility_check(w, &cfg) == FilterVerdict::Reject);
        }
    }
    check(
        7,
        streams > 0 && passed == streams && rejected == windows && windows >= 10_000,
        format!("robofuzz streams accepted {passed}/{streams}; volatile windows rejected {rejected}/{windows}"),
    )
}

fn criterion_8(mitigation_collisions: usize) -> Check {
    let mut notes = Vec::new();
    let mut ok = true;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut out_of_range = 0;
    for name in Scenario::BUILTINS {
        let w = Scenario::builtin(name).unwrap().world();
        for _ in 0..5000 {
            let pose = Pose::new(
                rng.random_range(-20.0..320.0),
                rng.random_range(-20.0..170.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            );
            let d = w.raycast(&pose);
            out_of_range += usize::from(!(SENSOR_MIN..=SENSOR_MAX).contains(&d));
        }
    }
    ok &= out_of_range == 0;
    notes.push(format!("raycast out of range {out_of_range}/10000"));

    let mut fp = 0;
    let mut clean_trials = 0;
    for threshold in [false, true] {
        let mut sc = Scenario::builtin("single_room").unwrap();
        if threshold {
            sc.sensor.mode = SensorMode::ProactiveThreshold {
                alert_at: sc.controller.safe_distance,
            };
        }
        let mut s = CampaignSpec::new(sc);
        s.trials = 100;
        s.detectors = DetectorKind::ALL.to_vec();
        let r = run_campaign(s).unwrap();
        clean_trials += r.report.records.len();
        fp += r
            .report
            .aggregates
            .detectors
            .iter()
            .map(|d| d.false_positives as usize)
            .sum::<usize>();
    }
    ok &= fp == 0 && clean_trials >= 100;
    notes.push(format!(
        "false positives {fp} over {clean_trials} clean trials"
    ));

    ok &= mitigation_collisions == 0;
    notes.push(format!("mitigation collisions {mitigation_collisions}"));

    let a = detect(AttackModel::Fabrication, DetectorKind::ALL.to_vec(), true);
    let b = detect(AttackModel::Fabrication, DetectorKind::ALL.to_vec(), true);
    let same =
        serde_json::to_string(&a.report).unwrap() == serde_json::to_string(&b.report).unwrap();
    ok &= same;
    notes.push(format!("repeat-seed reports identical {same}"));

    let sc = Scenario::builtin("single_room").unwrap();
    let res = sc.map.resolution;
    let passes: Vec<_> = (0..2)
        .map(|k| clean_run(&sc, SensorMode::Passive, 40 + k).1)
        .collect();
    let map = histmap::learn(
        &passes,
        sc.bounds(),
        res,
        sc.robot.radius,
        Provenance {
            scenario: sc.name.clone(),
            seed: 40,
            passes: 2,
        },
    )
    .unwrap();
    let probe = clean_run(&sc, SensorMode::Passive, 77).1;
    let worst = probe
        .iter()
        .filter(|s| s.reading < SENSOR_MAX)
        .map(|s| (map.expected_distance(&s.pose).unwrap() - s.reading).abs())
        .fold(0.0, f64::max);
    ok &= worst <= std::f64::consts::SQRT_2 * res;
    notes.push(format!("map error max {worst:.2} cm"));

    check(8, ok, notes.join("; "))
}

fn first_tamper(s: &TrialSeries) -> Option<usize> {
    s.rows.iter().position(|r| r.tampered)
}

/// Perceived distances fall while the robot closes in, then rise once the
/// fuzzer takes over.
fn crash_curve_ok(s: &TrialSeries) -> bool {
    let Some(k) = first_tamper(s) else {
        return false;
    };
    let before: Vec<f64> = s.rows[k.saturating_sub(30)..k]
        .iter()
        .filter_map(|r| r.delivered)
        .collect();
    let after: Vec<f64> = s.rows[k..].iter().filter_map(|r| r.delivered).collect();
    before.len() >= 10
        && after.len() >= 10
        && before.windows(2).all(|w| w[1] <= w[0])
        && after.windows(2).all(|w| w[1] >= w[0])
        && after.last() > after.first()
}

/// The genuine reading jumps when the door opens; what arrives keeps falling.
fn efficacy_curve_ok(s: &TrialSeries) -> bool {
    // a jump on a straight leg; turns also change the range
    let Some(j) = s
        .rows
        .windows(2)
        .position(|w| w[1].heading == w[0].heading && w[1].range - w[0].range > 50.0)
    else {
        return false;
    };
    let delivered: Vec<f64> = s.rows[j.saturating_sub(5)..(j + 30).min(s.rows.len())]
        .iter()
        .filter_map(|r| r.delivered)
        .collect();
    delivered.len() >= 20 && delivered.windows(2).all(|w| w[1] <= w[0])
}

fn criterion_9(t: &Tables) -> Check {
    let crash: Vec<&TrialSeries> = t.crash[2]
        .series
        .iter()
        .filter(|s| t.crash[2].report.records[s.index].success)
        .collect();
    let eff: Vec<&TrialSeries> = t.efficacy[2]
        .series
        .iter()
        .filter(|s| t.efficacy[2].report.records[s.index].success)
        .collect();
    let c = crash.iter().filter(|s| crash_curve_ok(s)).count();
    let e = eff.iter().filter(|s| efficacy_curve_ok(s)).count();
    check(
        9,
        !crash.is_empty() && !eff.is_empty() && c == crash.len() && e == eff.len(),
        format!(
            "crash curves {c}/{}, efficacy curves {e}/{}",
            crash.len(),
            eff.len()
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let tables = Tables {
        crash: fuzz_table(FuzzTarget::CrashRobot),
        efficacy: fuzz_table(FuzzTarget::ReduceEfficacy),
    };
    let susp = detect(AttackModel::Suspension, DetectorKind::ALL.to_vec(), false);
    let fab = detect(AttackModel::Fabrication, DetectorKind::ALL.to_vec(), false);
    let (c6, collisions) = criterion_6();
    let checks = [
        criterion_1(&tables),
        criterion_2(&tables),
        criterion_3(&susp, &fab),
        criterion_4(&susp, &fab),
        criterion_5(),
        c6,
        criterion_7(&tables),
        criterion_8(collisions),
        criterion_9(&tables),
    ];
    for c in &checks {
        println!(
            "criterion {}: {} ({})",
            c.id,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    let failed: Vec<u8> = checks.iter().filter(|c| !c.pass).map(|c| c.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
