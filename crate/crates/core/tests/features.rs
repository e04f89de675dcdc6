use mobility_core::reward::{group_advantages, reward, reward_length, FeatureSpec};
use mobility_core::stats::{
    classify_scenario, extract_features, raw_period_probs, Partition, ScenarioLabel, LATE_NIGHT_THRESHOLD,
};
use mobility_core::traj::{Loc, TrajPoint, Trajectory, FRIDAY, SATURDAY, THURSDAY};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn points(max_len: usize) -> impl Strategy<Value = Vec<TrajPoint>> {
    prop::collection::vec((0u32..2, 0u8..48, 0u32..5), 1..max_len).prop_map(|raw| {
        let mut v: Vec<TrajPoint> = raw
            .into_iter()
            .map(|(day, slot, loc)| TrajPoint::new(day, 0, slot, Loc::new(loc, 0)))
            .collect();
        v.sort_by_key(|p| p.time_key());
        v
    })
}

fn traj(points: Vec<TrajPoint>) -> Trajectory {
    Trajectory {
        user_id: "u".into(),
        window_start_day: 0,
        city: None,
        points,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rounded_shares_stay_near_raw(pts in points(60)) {
        let p = Partition::default();
        let raw = raw_period_probs(&pts, &p).unwrap();
        prop_assert!((raw.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let f = extract_features(&pts, &p).unwrap();
        for (r, q) in raw.iter().zip(&f.period_probs) {
            prop_assert_eq!(q % 5, 0);
            prop_assert!((100.0 * r - *q as f64).abs() <= 2.5 + 1e-9);
        }
    }

    #[test]
    fn features_ignore_order_within_a_timestamp(pts in points(40), seed in any::<u64>()) {
        let p = Partition::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = pts.clone();
        for group in shuffled.chunk_by_mut(|a, b| a.time_key() == b.time_key()) {
            group.shuffle(&mut rng);
        }
        prop_assert_eq!(extract_features(&pts, &p).unwrap(), extract_features(&shuffled, &p).unwrap());
    }

    #[test]
    fn adding_a_night_trip_keeps_the_late_night_label(
        history in points(10),
        future_slots in prop::collection::vec((0u8..48, 0u32..5), 1..12),
        extra_slot in prop_oneof![0u8..12, 44u8..48],
    ) {
        let history: Vec<TrajPoint> = history.into_iter().map(|p| TrajPoint { day: 0, ..p }).collect();
        let mut future: Vec<TrajPoint> =
            future_slots.iter().map(|&(s, l)| TrajPoint::new(0, 0, s, Loc::new(l, 0))).collect();
        future.sort_by_key(|p| p.time_key());
        let before = classify_scenario(&traj(history.clone()), &traj(future.clone())).unwrap();
        let at = future.partition_point(|p| p.slot <= extra_slot);
        future.insert(at, TrajPoint::new(0, 0, extra_slot, Loc::new(0, 0)));
        let after = classify_scenario(&traj(history), &traj(future)).unwrap();
        if before.contains(&ScenarioLabel::LateNightCommuter) {
            prop_assert!(after.contains(&ScenarioLabel::LateNightCommuter));
        }
    }

    #[test]
    fn reward_is_split_exactly_and_peaks_at_the_truth(gen in points(20), truth in points(20)) {
        let p = Partition::default();
        let r = reward(&gen, &truth, &p).unwrap();
        prop_assert_eq!(r.total, r.r_distribution + r.r_length);
        prop_assert_eq!(r.r_distribution.fract(), 0.0);
        prop_assert_eq!(r.n_features, FeatureSpec::REWARD.n_components(p.len()));
        let best = reward(&truth, &truth, &p).unwrap();
        prop_assert_eq!((best.r_distribution, best.r_length), (best.n_features as f64, 0.0));
        prop_assert!(r.total <= best.total);
    }

    #[test]
    fn advantages_are_shift_invariant(
        rewards in prop::collection::vec(-20.0f64..20.0, 2..16),
        shift in -100.0f64..100.0,
    ) {
        let a = group_advantages(&rewards).unwrap();
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        let b = group_advantages(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6, "{} vs {}", x, y);
        }
        prop_assert!(a.iter().sum::<f64>().abs() < 1e-9);
    }
}

#[test]
fn advantages_sum_to_zero_on_random_groups() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let n = rng.gen_range(2..32);
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-12.0..12.0)).collect();
        let a = group_advantages(&g).unwrap();
        assert!(a.iter().sum::<f64>().abs() < 1e-9);
        // Population standard deviation of the advantages is one.
        let var = a.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 1e-9);
    }
    assert_eq!(group_advantages(&[0.0, 2.0]).unwrap(), vec![-1.0, 1.0]);
    assert!((reward_length(8, 10).unwrap() + 0.2).abs() < 1e-15);
}

fn day(weekday: u8, day: u32, slots: &[(u8, u32)]) -> Vec<TrajPoint> {
    slots.iter().map(|&(s, l)| TrajPoint::new(day, weekday, s, Loc::new(l, 0))).collect()
}

#[test]
fn cohort_fixtures() {
    assert_eq!(LATE_NIGHT_THRESHOLD, 0.75);
    // 8 of 10 trips between 22:00 and 06:00.
    let history = traj(day(0, 0, &[(16, 1), (18, 1), (30, 2)]));
    let night: Vec<(u8, u32)> = [0, 2, 4, 6, 8, 10, 44, 46].iter().map(|&s| (s, 1)).chain([(20, 2), (30, 2)]).collect();
    let mut fut = day(1, 0, &night);
    fut.sort_by_key(|p| p.time_key());
    assert!(classify_scenario(&history, &traj(fut)).unwrap().contains(&ScenarioLabel::LateNightCommuter));
    // Exactly 75% is not above the threshold.
    let mut fut = day(1, 0, &[(0, 1), (2, 1), (46, 1), (20, 2)]);
    fut.sort_by_key(|p| p.time_key());
    assert!(!classify_scenario(&history, &traj(fut)).unwrap().contains(&ScenarioLabel::LateNightCommuter));

    let mut hist = day(THURSDAY, 0, &[(20, 1), (30, 2)]);
    hist.extend(day(FRIDAY, 1, &[(20, 1), (30, 2)]));
    let sat = day(SATURDAY, 0, &[(20, 1), (30, 2)]);
    assert!(classify_scenario(&traj(hist.clone()), &traj(sat.clone())).unwrap().contains(&ScenarioLabel::WeekendUser));
    let sun = day(SATURDAY + 1, 0, &[(20, 1), (30, 2)]);
    assert!(!classify_scenario(&traj(hist), &traj(sun)).unwrap().contains(&ScenarioLabel::WeekendUser));

    // Top-3 of the history is {1, 2, 3}; location 9 is new, 3 is missing.
    let hist = traj(day(0, 0, &[(10, 1), (12, 1), (14, 1), (16, 2), (18, 2), (20, 3), (22, 4)]));
    let labels = classify_scenario(&hist, &traj(day(1, 0, &[(10, 1), (12, 2), (14, 9)]))).unwrap();
    assert!(labels.contains(&ScenarioLabel::TempPlanNew));
    assert!(labels.contains(&ScenarioLabel::TempPlanCancelled));
    let same = classify_scenario(&hist, &traj(day(1, 0, &[(10, 1), (12, 2), (14, 3)]))).unwrap();
    assert!(!same.contains(&ScenarioLabel::TempPlanNew));
    assert!(!same.contains(&ScenarioLabel::TempPlanCancelled));
}
