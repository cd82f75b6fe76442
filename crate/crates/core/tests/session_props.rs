use proptest::prelude::*;

use socialrec::data::RatingRecord;
use socialrec::ingest::sort_log;
use socialrec::session::{filter_log, filter_session, split_sessions, FilterParams};

fn arb_log() -> impl Strategy<Value = Vec<RatingRecord>> {
    prop::collection::vec((1u32..5, 0u32..30, any::<bool>(), prop_oneof![0i64..40, 0i64..400, 0i64..8000]), 1..120)
        .prop_map(|rows| {
            let mut t = 1_000_000i64;
            let mut log: Vec<RatingRecord> = rows
                .into_iter()
                .map(|(u, i, a, gap)| {
                    t += gap;
                    RatingRecord::new(u, i, a, t)
                })
                .collect();
            sort_log(&mut log);
            log
        })
}

fn arb_params() -> impl Strategy<Value = FilterParams> {
    (10.0f64..300.0, 0usize..3, 0usize..5, 0.1f64..=1.0).prop_map(|(tau0, pi_minus, pi_plus, epsilon)| FilterParams {
        tau0,
        pi_minus,
        pi_plus,
        epsilon,
        ..FilterParams::default()
    })
}

fn user_runs(log: &[RatingRecord]) -> Vec<&[RatingRecord]> {
    log.chunk_by(|a, b| a.user == b.user).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sessions_partition_each_user(log in arb_log(), p in arb_params()) {
        for run in user_runs(&log) {
            let sessions = split_sessions(run, &p);
            let joined: Vec<RatingRecord> = sessions.iter().flat_map(|s| s.records.clone()).collect();
            prop_assert_eq!(&joined[..], run);
            prop_assert!(sessions.iter().all(|s| !s.records.is_empty()));
        }
    }

    #[test]
    fn kept_indices_lie_inside_the_session(log in arb_log(), p in arb_params()) {
        for run in user_runs(&log) {
            for s in split_sessions(run, &p) {
                let kept = filter_session(&s, &p);
                prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(kept.iter().all(|&k| k < s.records.len()));
            }
        }
    }

    #[test]
    fn filtering_never_invents_records(log in arb_log(), p in arb_params()) {
        let out = filter_log(&log, &p);
        let input: std::collections::BTreeSet<_> = log.iter().copied().map(key).collect();
        prop_assert!(out.positives.iter().all(|r| r.accepted && input.contains(&key(*r))));
        prop_assert!(out.negatives.iter().all(|r| !r.accepted && input.contains(&key(*r))));
        let s = out.stats;
        prop_assert_eq!(
            s.kept_positive + s.kept_negative + s.dropped_no_positive + s.dropped_ratio + s.dropped_position,
            log.len()
        );
    }

    #[test]
    fn refiltering_never_adds_records(log in arb_log(), p in arb_params()) {
        let once = filter_log(&log, &p).merged();
        let twice = filter_log(&once, &p).merged();
        prop_assert!(twice.len() <= once.len());
        let first: std::collections::BTreeSet<_> = once.iter().copied().map(key).collect();
        prop_assert!(twice.iter().all(|r| first.contains(&key(*r))));
    }
}

fn key(r: RatingRecord) -> (u32, i64, u32, bool) {
    (r.user.0, r.timestamp, r.item.0, r.accepted)
}
