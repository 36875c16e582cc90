mod common;

use common::{illness_death_transitions, random_illness_death};
use msm_core::counting::{at_risk, count_transitions, LandmarkFilter};
use msm_core::history::{from_long, read_long_csv, write_long_csv};
use msm_core::{Cohort, Event, LongRecord, MsmError, SamplePath, StateSpace, Transition};
use proptest::prelude::*;

fn space() -> StateSpace {
    StateSpace::illness_death()
}

fn record(id: u64, from: usize, to: Option<usize>, entry: f64, exit: f64) -> LongRecord {
    LongRecord {
        id,
        from,
        to,
        entry,
        exit,
        status: u8::from(to.is_some()),
    }
}

#[test]
fn forbidden_transition_is_rejected() {
    let err = SamplePath::new(1, 1, vec![Event { time: 1.0, to: 1 }], 5.0, 10.0, &space()).unwrap_err();
    assert!(matches!(err, MsmError::ForbiddenTransition { .. }));
    let two = StateSpace::two_state();
    let err = SamplePath::new(1, 2, vec![Event { time: 1.0, to: 1 }], 5.0, 10.0, &two).unwrap_err();
    assert!(matches!(err, MsmError::InvalidPath { .. }));
}

#[test]
fn event_after_censoring_is_rejected() {
    let err = SamplePath::new(1, 1, vec![Event { time: 6.0, to: 2 }], 5.0, 10.0, &space()).unwrap_err();
    assert!(matches!(err, MsmError::InvalidPath { .. }));
}

#[test]
fn non_increasing_event_times_are_rejected() {
    let events = vec![Event { time: 2.0, to: 2 }, Event { time: 2.0, to: 1 }];
    assert!(SamplePath::new(1, 1, events, 5.0, 10.0, &space()).is_err());
}

#[test]
fn state_query_outside_window_is_an_error() {
    let p = SamplePath::new(1, 1, vec![], 5.0, 10.0, &space()).unwrap();
    assert!(matches!(p.state_at(10.5), Err(MsmError::TimeOutOfRange { .. })));
    assert!(matches!(p.state_at(-1.0), Err(MsmError::TimeOutOfRange { .. })));
    assert_eq!(p.state_at(10.0).unwrap(), 1);
}

#[test]
fn duplicate_subjects_are_rejected() {
    let p = SamplePath::new(7, 1, vec![], 5.0, 10.0, &space()).unwrap();
    let err = Cohort::new(space(), 10.0, vec![p.clone(), p]).unwrap_err();
    assert!(matches!(err, MsmError::DuplicateSubject(7)));
}

#[test]
fn overlapping_long_records_are_rejected() {
    let rows = vec![record(1, 1, Some(2), 0.0, 3.0), record(1, 2, None, 2.0, 6.0)];
    let err = from_long(&rows, &space(), 10.0).unwrap_err();
    assert!(matches!(err, MsmError::OverlappingRecords { subject: 1, .. }));
}

#[test]
fn gaps_and_state_mismatches_are_rejected() {
    let gap = vec![record(1, 1, Some(2), 0.0, 3.0), record(1, 2, None, 4.0, 6.0)];
    assert!(matches!(
        from_long(&gap, &space(), 10.0),
        Err(MsmError::InvalidPath { .. })
    ));
    let mismatch = vec![record(1, 1, Some(2), 0.0, 3.0), record(1, 1, None, 3.0, 6.0)];
    assert!(matches!(
        from_long(&mismatch, &space(), 10.0),
        Err(MsmError::InvalidPath { .. })
    ));
    let late_start = vec![record(1, 1, None, 1.0, 6.0)];
    assert!(from_long(&late_start, &space(), 10.0).is_err());
}

#[test]
fn absorbed_subject_is_known_until_horizon() {
    let p = SamplePath::new(1, 1, vec![Event { time: 2.0, to: 3 }], 4.0, 10.0, &space()).unwrap();
    assert_eq!(p.censoring_time(), 10.0);
    assert!(p.is_observed_at(9.0));
    assert_eq!(p.state_at(9.0).unwrap(), 3);
}

#[test]
fn landmark_filter_rejects_absorbing_state() {
    assert!(LandmarkFilter::new(3, 1.0, &space()).is_err());
    assert!(LandmarkFilter::new(1, -1.0, &space()).is_err());
    assert!(LandmarkFilter::new(2, 0.0, &space()).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn long_format_round_trip(seed in any::<u64>(), n in 1usize..60, ties in any::<bool>()) {
        let cohort = random_illness_death(seed, n, ties);
        let long = cohort.to_long();
        let back = from_long(&long, cohort.state_space(), cohort.max_time()).unwrap();
        prop_assert_eq!(back.paths(), cohort.paths());

        let mut buf = Vec::new();
        write_long_csv(&long, &mut buf).unwrap();
        let parsed = read_long_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(parsed, long);
    }

    #[test]
    fn state_is_right_continuous(seed in any::<u64>(), n in 1usize..30) {
        let cohort = random_illness_death(seed, n, false);
        for p in cohort.paths() {
            let mut prev = p.initial_state();
            for e in p.events() {
                prop_assert_eq!(p.state_at(e.time).unwrap(), e.to);
                prop_assert_eq!(p.state_at(e.time - 1e-9).unwrap(), prev);
                prev = e.to;
            }
        }
    }

    #[test]
    fn at_risk_counts_every_observed_living_subject(seed in any::<u64>(), n in 1usize..60,
                                                   ties in any::<bool>(), t in 0.01f64..50.0) {
        let cohort = random_illness_death(seed, n, ties);
        let total: u32 = [1, 2].iter().map(|&h| at_risk(&cohort, h, None).value_at(t)).sum();
        let expected = cohort
            .paths()
            .iter()
            .filter(|p| {
                let before = p.events().iter().rev().find(|e| e.time < t).map_or(p.initial_state(), |e| e.to);
                p.censoring_time() >= t && before != 3
            })
            .count() as u32;
        prop_assert_eq!(total, expected);
    }

    #[test]
    fn transitions_are_conserved(seed in any::<u64>(), n in 1usize..60, t in 0.0f64..50.0) {
        let cohort = random_illness_death(seed, n, true);
        let counted: u64 = illness_death_transitions()
            .iter()
            .map(|&tr| count_transitions(&cohort, tr, None).value_at(t))
            .sum();
        let events = cohort
            .paths()
            .iter()
            .map(|p| p.events().iter().filter(|e| e.time <= t).count() as u64)
            .sum::<u64>();
        prop_assert_eq!(counted, events);
    }

    #[test]
    fn landmark_processes_never_exceed_full_sample(seed in any::<u64>(), n in 1usize..60,
                                                   s in 0.0f64..40.0, h in 1usize..=2, t in 0.0f64..50.0) {
        let cohort = random_illness_death(seed, n, false);
        let filter = LandmarkFilter::new(h, s, cohort.state_space()).unwrap();
        for state in [1, 2] {
            prop_assert!(at_risk(&cohort, state, Some(&filter)).value_at(t) <= at_risk(&cohort, state, None).value_at(t));
        }
        for tr in illness_death_transitions() {
            prop_assert!(count_transitions(&cohort, tr, Some(&filter)).value_at(t)
                <= count_transitions(&cohort, tr, None).value_at(t));
        }
        // just after the landmark the landmark risk set is exactly the subsample
        let size = filter.subsample_size(&cohort) as u32;
        let just_after = s.next_up();
        let y = at_risk(&cohort, h, Some(&filter)).value_at(just_after);
        let ties_at_s = cohort.paths().iter().filter(|p| filter.qualifies(p) && p.censoring_time() == s).count() as u32;
        prop_assert_eq!(y + ties_at_s, size);
    }
}

#[test]
fn counter_is_right_continuous_step() {
    let p = SamplePath::new(
        1,
        1,
        vec![Event { time: 2.0, to: 2 }, Event { time: 5.0, to: 1 }],
        8.0,
        10.0,
        &space(),
    )
    .unwrap();
    let cohort = Cohort::new(space(), 10.0, vec![p]).unwrap();
    let n12 = count_transitions(&cohort, Transition::new(1, 2), None);
    assert_eq!(n12.value_at(1.999), 0);
    assert_eq!(n12.value_at(2.0), 1);
    let y2 = at_risk(&cohort, 2, None);
    assert_eq!(y2.value_at(2.0), 0);
    assert_eq!(y2.value_at(2.5), 1);
    assert_eq!(y2.value_at(5.0), 1);
    assert_eq!(y2.value_at(5.5), 0);
}
