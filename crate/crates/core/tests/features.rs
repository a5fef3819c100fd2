use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retail_forecast::features::{
    assemble, filter_cap, high_level_features, inverse_transform, log_transform, time_split, FeatureSchema, Panel,
    PanelRecord, RetailerId, SplitTag, BLOCK_SEASONAL,
};
use retail_forecast::pipeline::{build_features, PipelineConfig};
use retail_forecast::seasonality::{seasonal_features, GroupAssignment, SeasonalProfile};
use std::collections::BTreeMap;

fn random_panel(seed: u64, retailers: u32, months: i32, keep: f64) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for r in 0..retailers {
        for m in 1..=months {
            if rng.random::<f64>() < keep {
                let sales = if rng.random::<f64>() < 0.1 { 0.0 } else { rng.random_range(0.0..1000.0) };
                let basic = vec![rng.random_range(-1.0..1.0), rng.random_range(0.0..5.0)];
                records.push(PanelRecord { retailer: RetailerId(r), month: m, sales, basic });
            }
        }
    }
    Panel::new(vec!["a".into(), "b".into()], records).unwrap()
}

fn single_group(panel: &Panel) -> (BTreeMap<usize, SeasonalProfile>, GroupAssignment) {
    let profile = SeasonalProfile { group: 0, period: 12, order: 1, a0: 1.0, a: vec![0.5], b: vec![-0.25], fit_window: (1, 12) };
    (BTreeMap::from([(0, profile)]), GroupAssignment::single(panel.retailers()))
}

/// Level, velocity, acceleration, mean of the values present among t, t-1, t-2.
fn brute_signal(v: &BTreeMap<i32, f64>, t: i32) -> [f64; 4] {
    let now = v[&t];
    let l1 = v.get(&(t - 1));
    let l2 = v.get(&(t - 2));
    let vel = l1.map_or(0.0, |p| now - p);
    let acc = match (l1, l2) {
        (Some(a), Some(b)) => now - 2.0 * a + b,
        _ => 0.0,
    };
    let vals: Vec<f64> = [Some(&now), l1, l2].into_iter().flatten().copied().collect();
    [now, vel, acc, vals.iter().sum::<f64>() / vals.len() as f64]
}

#[test]
fn single_retailer_four_months_by_hand() {
    let records: Vec<PanelRecord> = (1..=4)
        .map(|m| PanelRecord {
            retailer: RetailerId(9),
            month: m,
            sales: (m * 10) as f64,
            basic: vec![m as f64, 1.0],
        })
        .collect();
    let panel = Panel::new(vec!["a".into(), "b".into()], records).unwrap();
    let (profiles, assignment) = single_group(&panel);
    let set = assemble(&panel, &profiles, &assignment, true).unwrap();
    assert_eq!(set.len(), 3);
    let l = |m: i32| ((m * 10) as f64).ln_1p();
    for (row, t) in set.rows.iter().zip(1..=3) {
        assert_eq!(row.month, t);
        assert_eq!(row.y_next, ((t + 1) * 10) as f64);
        let sales_sig = match t {
            1 => [l(1), 0.0, 0.0, l(1)],
            2 => [l(2), l(2) - l(1), 0.0, (l(2) + l(1)) / 2.0],
            _ => [l(3), l(3) - l(2), (l(3) - l(2)) - (l(2) - l(1)), (l(3) + l(2) + l(1)) / 3.0],
        };
        let a = f64::from(t);
        let a_sig = match t {
            1 => [a, 0.0, 0.0, a],
            2 => [a, 1.0, 0.0, 1.5],
            _ => [a, 1.0, 0.0, 2.0],
        };
        let mut expected = vec![a, 1.0];
        expected.extend(sales_sig);
        expected.extend(a_sig);
        expected.extend([1.0, 0.0, 0.0, 1.0]);
        expected.extend([(t >= 2) as u8 as f64, (t >= 3) as u8 as f64]);
        expected.extend(seasonal_features(&profiles[&0], t));
        assert_eq!(row.x.len(), expected.len());
        for (got, want) in row.x.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12, "t={t}: {:?} vs {:?}", row.x, expected);
        }
    }
}

#[test]
fn high_level_block_matches_definition_on_random_series() {
    let panel = random_panel(2, 20, 12, 0.75);
    for (_, history) in panel.by_retailer() {
        let sales: BTreeMap<i32, f64> = history.iter().map(|(&m, r)| (m, r.sales.ln_1p())).collect();
        let a: BTreeMap<i32, f64> = history.iter().map(|(&m, r)| (m, r.basic[0])).collect();
        for &t in history.keys() {
            let got = high_level_features(&history, t, true).unwrap();
            let mut want = brute_signal(&sales, t).to_vec();
            want.extend(brute_signal(&a, t));
            for (g, w) in got[..8].iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn features_ignore_future_months() {
    let panel = random_panel(5, 15, 12, 0.9);
    for t in 2..=11 {
        let truncated = Panel {
            basic_names: panel.basic_names.clone(),
            records: panel.records.iter().filter(|r| r.month <= t).cloned().collect(),
        };
        let full = panel.by_retailer();
        let cut = truncated.by_retailer();
        for (id, history) in &full {
            if history.contains_key(&t) {
                assert_eq!(
                    high_level_features(history, t, true).unwrap(),
                    high_level_features(&cut[id], t, true).unwrap()
                );
            }
        }
    }
}

#[test]
fn assemble_ignores_record_order() {
    let panel = random_panel(6, 25, 12, 0.85);
    let (profiles, assignment) = single_group(&panel);
    let base = assemble(&panel, &profiles, &assignment, true).unwrap();
    let mut shuffled = panel.clone();
    shuffled.records.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(assemble(&shuffled, &profiles, &assignment, true).unwrap(), base);
}

#[test]
fn seasonal_block_unchanged_by_other_sales() {
    let panel = random_panel(7, 10, 12, 1.0);
    let (profiles, assignment) = single_group(&panel);
    let base = assemble(&panel, &profiles, &assignment, true).unwrap();
    let mut permuted = panel.clone();
    let mut sales: Vec<f64> = permuted.records.iter().map(|r| r.sales).collect();
    sales.shuffle(&mut ChaCha8Rng::seed_from_u64(2));
    for (r, s) in permuted.records.iter_mut().zip(sales) {
        r.sales = s;
    }
    let other = assemble(&permuted, &profiles, &assignment, true).unwrap();
    let block = base.schema.block(BLOCK_SEASONAL).unwrap().clone();
    for (a, b) in base.rows.iter().zip(&other.rows) {
        assert_eq!(a.x[block.start..block.end], b.x[block.start..block.end]);
    }
}

#[test]
fn cap_filter_matches_predicate() {
    let panel = random_panel(8, 20, 10, 1.0);
    assert_eq!(filter_cap(&panel, f64::INFINITY), panel);
    assert!(filter_cap(&panel, 0.0).records.is_empty());
    let filtered = filter_cap(&panel, 500.0);
    let want: Vec<&PanelRecord> = panel.records.iter().filter(|r| r.sales < 500.0).collect();
    assert_eq!(filtered.records.iter().collect::<Vec<_>>(), want);
}

#[test]
fn split_counts_match_bucketing() {
    let panel = random_panel(10, 30, 24, 0.9);
    let (profiles, assignment) = single_group(&panel);
    let set = assemble(&panel, &profiles, &assignment, true).unwrap();
    let split = time_split(&set, 12, 18).unwrap();
    let count = |lo: i32, hi: i32| set.rows.iter().filter(|r| r.month > lo && r.month <= hi).count();
    assert_eq!(split.train.len(), count(i32::MIN, 12));
    assert_eq!(split.valid.len(), count(12, 18));
    assert_eq!(split.test.len(), count(18, i32::MAX));
    assert_eq!(split.train.len() + split.valid.len() + split.test.len(), set.len());
    assert_eq!(SplitTag::of(12, 12, 18), SplitTag::Train);
    assert_eq!(SplitTag::of(18, 12, 18), SplitTag::Valid);
    assert_eq!(SplitTag::of(19, 12, 18), SplitTag::Test);
    assert!(time_split(&set, 18, 12).is_err());
}

#[test]
fn schema_blocks_tile_the_columns() {
    let schema = FeatureSchema::new(&["a".to_string(), "b".to_string()], true);
    let mut next = 0;
    for b in &schema.blocks {
        assert_eq!(b.start, next);
        next = b.end;
    }
    assert_eq!(next, schema.dim());
    assert_eq!(schema.block(BLOCK_SEASONAL).unwrap().end - schema.block(BLOCK_SEASONAL).unwrap().start, 8);
}

#[test]
fn pipeline_is_deterministic() {
    let panel = random_panel(11, 40, 24, 0.95);
    let cfg = PipelineConfig { k: 3, ..Default::default() };
    let a = build_features(&panel, &cfg, 4).unwrap();
    let b = build_features(&panel, &cfg, 4).unwrap();
    assert_eq!(a, b);
    for p in a.profiles.values() {
        assert!(p.fit_window.1 <= cfg.train_end);
    }
}

proptest! {
    #[test]
    fn transform_round_trip(y in 0.0f64..1e6) {
        let back = inverse_transform(log_transform(y).unwrap());
        prop_assert!((back - y).abs() <= 1e-12 * y.max(1e-300) || back == y);
    }

    #[test]
    fn transform_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(log_transform(lo).unwrap() <= log_transform(hi).unwrap());
    }
}
