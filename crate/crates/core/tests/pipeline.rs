use std::collections::BTreeSet;

use mobility_core::io::to_jsonl;
use mobility_core::traj::{bin_time, preprocess, CityConfig, Grid, Loc, PipelineConfig, RawVisit, SLOTS_PER_DAY};
use proptest::prelude::*;

fn city() -> CityConfig {
    CityConfig {
        name: "grid-town".into(),
        min_lat: 40.0,
        min_lon: -74.1,
        max_lat: 40.1,
        max_lon: -74.0,
        tz_offset_seconds: -18_000,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shifting_the_origin_by_k_cells_shifts_indices_by_k(
        rows in prop::collection::vec((0i64..40, 0i64..40, 0.1f64..0.9, 0.1f64..0.9), 1..20),
        k in 0i64..25,
        cell in prop_oneof![Just(500.0), 100.0f64..2000.0],
    ) {
        let g = Grid::new(40.0, -74.1, 40.0, cell).unwrap();
        let (lat0, lon0) = g.unproject(-(k as f64) * cell, -(k as f64) * cell);
        let shifted = Grid::new(lat0, lon0, 40.0, cell).unwrap();
        for (r, c, fr, fc) in rows {
            let (lat, lon) = g.unproject((r as f64 + fr) * cell, (c as f64 + fc) * cell);
            prop_assert_eq!(g.cell_of(lat, lon), (r, c));
            prop_assert_eq!(shifted.cell_of(lat, lon), (r + k, c + k));
        }
    }

    #[test]
    fn windows_are_sorted_bounded_and_never_invent_points(
        raw in prop::collection::vec((0usize..4, 0i64..(6 * 86_400), 0.0f64..0.1, 0.0f64..0.1), 0..200),
        min_points in 1usize..8,
        extra in 0usize..20,
    ) {
        let c = city();
        let visits: Vec<RawVisit> = raw
            .iter()
            .map(|&(u, t, dlat, dlon)| RawVisit {
                user_id: format!("user{u}"),
                timestamp: 1_700_000_000.0 + t as f64,
                lat: c.min_lat + dlat,
                lon: c.min_lon + dlon,
            })
            .collect();
        let cfg = PipelineConfig { min_points, max_points: min_points + extra, ..PipelineConfig::default() };
        let out = preprocess(&visits, &c, &cfg, true).unwrap();
        let grid = c.grid(cfg.cell_size_m).unwrap();
        let (max_r, max_c) = grid.cell_of(c.max_lat, c.max_lon);
        let keys: Vec<(String, i64)> = out.trajectories.iter().map(|t| t.key()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        prop_assert_eq!(keys, sorted);

        for t in &out.trajectories {
            prop_assert!(t.is_sorted());
            prop_assert!(t.len() >= cfg.min_points && t.len() <= cfg.max_points);
            let source: BTreeSet<(i64, u8, Loc)> = visits
                .iter()
                .filter(|v| v.user_id == t.user_id)
                .map(|v| {
                    let b = bin_time(v.timestamp, c.tz_offset_seconds);
                    let (r, cc) = grid.cell_of(v.lat, v.lon);
                    (b.day, b.slot, Loc::new(r as u32, cc as u32))
                })
                .collect();
            for p in &t.points {
                prop_assert!(p.slot < SLOTS_PER_DAY && p.weekday < 7);
                prop_assert!(p.day < cfg.window_days);
                prop_assert!(i64::from(p.row) <= max_r && i64::from(p.col) <= max_c);
                let abs_day = t.window_start_day + i64::from(p.day);
                prop_assert!(source.contains(&(abs_day, p.slot, p.loc())));
            }
        }

        let again = preprocess(&visits, &c, &cfg, true).unwrap();
        prop_assert_eq!(to_jsonl(&out.trajectories), to_jsonl(&again.trajectories));
    }
}
