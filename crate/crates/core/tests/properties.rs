use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use robosec::attack::VolatileStream;
use robosec::controller::{volatility_check, FilterConfig, FilterVerdict};
use robosec::histmap::{self, HistoricalMap, Provenance, TraceSample};
use robosec::robofuzz::{classify_trend, gamma_for, FuzzFunction, Trend, TrendConfig};
use robosec::world::{Pose, SENSOR_MAX, SENSOR_MIN};
use robosec::Scenario;

fn worlds() -> Vec<Scenario> {
    Scenario::BUILTINS
        .iter()
        .map(|n| Scenario::builtin(n).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn raycast_stays_in_sensor_range(
        which in 0usize..2,
        x in -50.0f64..350.0,
        y in -50.0f64..200.0,
        heading in 0.0f64..std::f64::consts::TAU,
    ) {
        let sc = &worlds()[which];
        let w = sc.world();
        let d = w.raycast(&Pose::new(x, y, heading));
        prop_assert!((SENSOR_MIN..=SENSOR_MAX).contains(&d), "{d}");
    }

    #[test]
    fn volatile_windows_are_rejected(seed in any::<u64>(), skip in 0usize..50) {
        let cfg = FilterConfig::default();
        let v: Vec<f64> = VolatileStream::new(ChaCha8Rng::seed_from_u64(seed))
            .skip(skip)
            .take(cfg.window)
            .collect();
        prop_assert_eq!(volatility_check(&v, &cfg), FilterVerdict::Reject, "{:?}", v);
    }

    #[test]
    fn volatile_values_span_sensor_range(seed in any::<u64>()) {
        for v in VolatileStream::new(ChaCha8Rng::seed_from_u64(seed)).take(200) {
            prop_assert!((SENSOR_MIN..=SENSOR_MAX).contains(&v));
        }
    }

    #[test]
    fn monotone_streams_pass_the_filter(
        start in 2.0f64..400.0,
        step in -20.0f64..20.0,
        n in 1usize..12,
    ) {
        let v: Vec<f64> = (0..n)
            .map(|i| (start + step * i as f64).clamp(SENSOR_MIN, SENSOR_MAX))
            .collect();
        prop_assert_eq!(volatility_check(&v, &FilterConfig::default()), FilterVerdict::Accept);
    }

    #[test]
    fn rise_away_never_falls(v in 2.0f64..400.0, rate in 0.1f64..20.0, t in 0.0f64..60.0, dt in 0.0f64..5.0) {
        let f = FuzzFunction::RiseAway { rate };
        let a = gamma_for(f, v, t).unwrap();
        let b = gamma_for(f, v, t + dt).unwrap();
        prop_assert!(b >= a);
        prop_assert!(a >= v.min(SENSOR_MAX));
        prop_assert!((SENSOR_MIN..=SENSOR_MAX).contains(&b));
    }

    #[test]
    fn continue_wall_never_rises(v in 2.0f64..400.0, rate in 0.1f64..20.0, t in 0.0f64..60.0, dt in 0.0f64..5.0) {
        let f = FuzzFunction::ContinueWall { rate };
        let a = gamma_for(f, v, t).unwrap();
        let b = gamma_for(f, v, t + dt).unwrap();
        prop_assert!(b <= a);
        prop_assert!((SENSOR_MIN..=SENSOR_MAX).contains(&b));
    }

    #[test]
    fn steady_closing_is_gradual(start in 100.0f64..400.0, n in 5usize..10) {
        let cfg = TrendConfig::default();
        let s: Vec<(f64, f64)> = (0..n)
            .map(|i| (i as f64 * 0.1, start - cfg.closing_speed * 0.1 * i as f64))
            .collect();
        prop_assert_eq!(classify_trend(&s, &cfg), Trend::GradualDecrease);
    }

    #[test]
    fn map_json_round_trips(cells in proptest::collection::vec((0.0f64..240.0, 0.0f64..150.0), 0..40)) {
        let sc = Scenario::builtin("single_room").unwrap();
        let mut m = HistoricalMap::empty(sc.bounds(), 10.0, 17.0, Provenance {
            scenario: sc.name.clone(),
            seed: 1,
            passes: 1,
        });
        for (x, y) in cells {
            m.mark(robosec::geometry::Point::new(x, y));
        }
        let back = HistoricalMap::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }
}

fn trace_of(sc: &Scenario, seed: u64) -> Vec<TraceSample> {
    robosec::harness::clean_run(sc, robosec::sensing::SensorMode::Passive, seed).1
}

#[test]
fn ten_thousand_volatile_windows_rejected() {
    let cfg = FilterConfig::default();
    let mut rejected = 0;
    for seed in 0..1000u64 {
        let v: Vec<f64> = VolatileStream::new(ChaCha8Rng::seed_from_u64(seed))
            .take(cfg.window + 9)
            .collect();
        for w in v.windows(cfg.window) {
            if volatility_check(w, &cfg) == FilterVerdict::Reject {
                rejected += 1;
            }
        }
    }
    assert_eq!(rejected, 10_000);
}

#[test]
fn learned_map_error_within_one_diagonal_cell() {
    for sc in worlds() {
        let passes: Vec<_> = (0..2).map(|k| trace_of(&sc, 100 + k)).collect();
        let res = sc.map.resolution;
        let map = histmap::learn(
            &passes,
            sc.bounds(),
            res,
            sc.robot.radius,
            Provenance {
                scenario: sc.name.clone(),
                seed: 100,
                passes: 2,
            },
        )
        .unwrap();
        let check = trace_of(&sc, 999);
        let mut checked = 0;
        for s in check.iter().filter(|s| s.reading < SENSOR_MAX) {
            // rays through the doorway see a door that later opens
            if let Some(door) = sc.door {
                let reach = s.reading + sc.robot.radius + res;
                if door
                    .segment
                    .ray_hit(s.pose.position(), s.pose.dir())
                    .is_some_and(|d| d <= reach)
                {
                    continue;
                }
            }
            let e = map.expected_distance(&s.pose).unwrap();
            assert!(
                (e - s.reading).abs() <= std::f64::consts::SQRT_2 * res + 1e-9,
                "{}: pose {:?} reading {} expected {}",
                sc.name,
                s.pose,
                s.reading,
                e
            );
            checked += 1;
        }
        assert!(checked > 500, "{checked}");
    }
}
