//! Multi-state data model: state spaces, censored sample paths, cohorts and
//! the long-format record layout used for interchange.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MsmError, Result};

/// A directed transition `from -> to` between two states (1-based indices).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
}

impl Transition {
    pub const fn new(from: usize, to: usize) -> Self {
        Transition { from, to }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

impl FromStr for Transition {
    type Err = MsmError;

    /// Accepts `1->2`, `1-2` and `12` (single-digit states).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || MsmError::param("transition", format!("cannot parse `{s}`"));
        let (a, b) = if let Some(pair) = s.split_once("->") {
            pair
        } else if let Some(pair) = s.split_once('-') {
            pair
        } else if s.len() == 2 && s.is_char_boundary(1) {
            s.split_at(1)
        } else {
            return Err(bad());
        };
        let from = a.trim().parse().map_err(|_| bad())?;
        let to = b.trim().parse().map_err(|_| bad())?;
        Ok(Transition { from, to })
    }
}

/// Finite state space `{1, ..., k}` with the permitted transitions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSpace {
    size: usize,
    absorbing: BTreeSet<usize>,
    transitions: BTreeSet<Transition>,
}

impl StateSpace {
    pub fn new(
        size: usize,
        absorbing: impl IntoIterator<Item = usize>,
        transitions: impl IntoIterator<Item = Transition>,
    ) -> Result<Self> {
        if size < 2 {
            return Err(MsmError::InvalidStateSpace(format!(
                "need at least two states, got {size}"
            )));
        }
        let absorbing: BTreeSet<usize> = absorbing.into_iter().collect();
        let transitions: BTreeSet<Transition> = transitions.into_iter().collect();
        let in_range = |s: usize| (1..=size).contains(&s);
        if let Some(s) = absorbing.iter().find(|&&s| !in_range(s)) {
            return Err(MsmError::InvalidStateSpace(format!(
                "absorbing state {s} outside 1..={size}"
            )));
        }
        for tr in &transitions {
            if !in_range(tr.from) || !in_range(tr.to) {
                return Err(MsmError::InvalidStateSpace(format!(
                    "transition {tr} outside 1..={size}"
                )));
            }
            if tr.from == tr.to {
                return Err(MsmError::InvalidStateSpace(format!("self-transition {tr}")));
            }
            if absorbing.contains(&tr.from) {
                return Err(MsmError::InvalidStateSpace(format!(
                    "transition {tr} leaves absorbing state {}",
                    tr.from
                )));
            }
        }
        Ok(StateSpace {
            size,
            absorbing,
            transitions,
        })
    }

    /// Illness-death model with recovery: healthy (1), ill (2), dead (3).
    pub fn illness_death() -> Self {
        StateSpace::new(
            3,
            [3],
            [
                Transition::new(1, 2),
                Transition::new(1, 3),
                Transition::new(2, 1),
                Transition::new(2, 3),
            ],
        )
        .expect("preset is valid")
    }

    /// Classical survival model: alive (1) to dead (2).
    pub fn two_state() -> Self {
        StateSpace::new(2, [2], [Transition::new(1, 2)]).expect("preset is valid")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, state: usize) -> bool {
        (1..=self.size).contains(&state)
    }

    pub fn is_absorbing(&self, state: usize) -> bool {
        self.absorbing.contains(&state)
    }

    pub fn absorbing(&self) -> impl Iterator<Item = usize> + '_ {
        self.absorbing.iter().copied()
    }

    pub fn non_absorbing(&self) -> impl Iterator<Item = usize> + '_ {
        (1..=self.size).filter(|s| !self.absorbing.contains(s))
    }

    pub fn permits(&self, transition: Transition) -> bool {
        self.transitions.contains(&transition)
    }

    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        self.transitions.iter().copied()
    }

    pub fn n_transitions(&self) -> usize {
        self.transitions.len()
    }

    /// States reachable in one step from `state`, in increasing order.
    pub fn reachable_from(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        self.transitions
            .iter()
            .filter(move |tr| tr.from == state)
            .map(|tr| tr.to)
    }
}

/// One observed jump of a sample path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub to: usize,
}

/// A subject's right-continuous, piecewise-constant state trajectory on
/// `[0, max_time]`, observed up to `censoring_time`.
///
/// Once an absorbing state is entered the state is known for the rest of the
/// study, so absorbed paths carry `censoring_time == max_time`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    subject_id: u64,
    initial_state: usize,
    events: Vec<Event>,
    censoring_time: f64,
    max_time: f64,
}

impl SamplePath {
    pub fn new(
        subject_id: u64,
        initial_state: usize,
        events: Vec<Event>,
        censoring_time: f64,
        max_time: f64,
        space: &StateSpace,
    ) -> Result<Self> {
        let mut path = SamplePath {
            subject_id,
            initial_state,
            events,
            censoring_time,
            max_time,
        };
        path.validate(space)?;
        if space.is_absorbing(path.final_state()) {
            path.censoring_time = path.max_time;
        }
        Ok(path)
    }

    fn invalid(&self, reason: impl Into<String>) -> MsmError {
        MsmError::InvalidPath {
            subject: self.subject_id,
            reason: reason.into(),
        }
    }

    pub(crate) fn validate(&self, space: &StateSpace) -> Result<()> {
        if !(self.max_time.is_finite() && self.max_time > 0.0) {
            return Err(self.invalid(format!("invalid horizon {}", self.max_time)));
        }
        if !(self.censoring_time > 0.0 && self.censoring_time <= self.max_time) {
            return Err(self.invalid(format!(
                "censoring time {} outside (0, {}]",
                self.censoring_time, self.max_time
            )));
        }
        if !space.contains(self.initial_state) {
            return Err(self.invalid(format!("unknown initial state {}", self.initial_state)));
        }
        let mut current = self.initial_state;
        let mut last_time = 0.0;
        for ev in &self.events {
            if space.is_absorbing(current) {
                return Err(self.invalid(format!("event at {} after absorption", ev.time)));
            }
            if !(ev.time.is_finite() && ev.time > last_time) {
                return Err(self.invalid(format!(
                    "event times must be positive and strictly increasing (got {} after {})",
                    ev.time, last_time
                )));
            }
            if ev.time > self.censoring_time {
                return Err(self.invalid(format!(
                    "event at {} after censoring at {}",
                    ev.time, self.censoring_time
                )));
            }
            let tr = Transition::new(current, ev.to);
            if !space.permits(tr) {
                return Err(MsmError::ForbiddenTransition {
                    subject: self.subject_id,
                    transition: tr,
                });
            }
            current = ev.to;
            last_time = ev.time;
        }
        Ok(())
    }

    pub fn subject_id(&self) -> u64 {
        self.subject_id
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn censoring_time(&self) -> f64 {
        self.censoring_time
    }

    pub fn max_time(&self) -> f64 {
        self.max_time
    }

    pub fn final_state(&self) -> usize {
        self.events.last().map_or(self.initial_state, |e| e.to)
    }

    /// State occupied at `t`; right-continuous, so an event time maps to the
    /// state entered at that time.
    pub fn state_at(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.max_time).contains(&t) {
            return Err(MsmError::TimeOutOfRange {
                time: t,
                max_time: self.max_time,
            });
        }
        Ok(self.state_at_unchecked(t))
    }

    pub(crate) fn state_at_unchecked(&self, t: f64) -> usize {
        let idx = self.events.partition_point(|e| e.time <= t);
        if idx == 0 {
            self.initial_state
        } else {
            self.events[idx - 1].to
        }
    }

    /// `1{C >= t}`.
    pub fn is_observed_at(&self, t: f64) -> bool {
        self.censoring_time >= t
    }

    /// Sojourns in transient states, in time order. Each spell puts the
    /// subject at risk on `(entry, exit]`.
    pub fn spells(&self, space: &StateSpace) -> Vec<Spell> {
        let mut out = Vec::with_capacity(self.events.len() + 1);
        let mut state = self.initial_state;
        let mut entry = 0.0;
        for ev in &self.events {
            out.push(Spell {
                state,
                entry,
                exit: ev.time,
                outcome: Some(ev.to),
            });
            state = ev.to;
            entry = ev.time;
        }
        if !space.is_absorbing(state) && self.censoring_time > entry {
            out.push(Spell {
                state,
                entry,
                exit: self.censoring_time,
                outcome: None,
            });
        }
        out
    }
}

/// A sojourn in one state: at risk on `(entry, exit]`, ending in a transition
/// to `outcome` or in censoring when `outcome` is `None`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spell {
    pub state: usize,
    pub entry: f64,
    pub exit: f64,
    pub outcome: Option<usize>,
}

/// A spell tagged with the index of its subject inside the cohort.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CohortSpell {
    pub subject: usize,
    pub spell: Spell,
}

/// A set of censored sample paths over a common state space and horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    space: StateSpace,
    max_time: f64,
    paths: Vec<SamplePath>,
    spells: Vec<CohortSpell>,
}

impl Cohort {
    pub fn new(space: StateSpace, max_time: f64, paths: Vec<SamplePath>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(paths.len());
        for p in &paths {
            if !seen.insert(p.subject_id) {
                return Err(MsmError::DuplicateSubject(p.subject_id));
            }
            if p.max_time != max_time {
                return Err(MsmError::HorizonMismatch {
                    expected: max_time,
                    found: p.max_time,
                });
            }
            p.validate(&space)?;
        }
        let spells = paths
            .iter()
            .enumerate()
            .flat_map(|(i, p)| {
                p.spells(&space)
                    .into_iter()
                    .map(move |spell| CohortSpell { subject: i, spell })
            })
            .collect();
        Ok(Cohort {
            space,
            max_time,
            paths,
            spells,
        })
    }

    pub fn state_space(&self) -> &StateSpace {
        &self.space
    }

    pub fn max_time(&self) -> f64 {
        self.max_time
    }

    pub fn paths(&self) -> &[SamplePath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn spells(&self) -> &[CohortSpell] {
        &self.spells
    }

    pub fn to_long(&self) -> Vec<LongRecord> {
        to_long(self)
    }
}

/// One row of the long interchange format.
///
/// `status` is 1 for an observed transition into `to` at `exit` and 0 for
/// censoring at `exit` (in which case `to` is empty).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongRecord {
    pub id: u64,
    pub from: usize,
    pub to: Option<usize>,
    pub entry: f64,
    pub exit: f64,
    pub status: u8,
}

pub fn to_long(cohort: &Cohort) -> Vec<LongRecord> {
    let mut out = Vec::with_capacity(cohort.spells.len());
    for cs in &cohort.spells {
        let p = &cohort.paths[cs.subject];
        let s = cs.spell;
        out.push(LongRecord {
            id: p.subject_id,
            from: s.state,
            to: s.outcome,
            entry: s.entry,
            exit: s.exit,
            status: u8::from(s.outcome.is_some()),
        });
    }
    out
}

/// Rebuilds a cohort from long records. Subjects appear in order of first
/// occurrence; each subject's rows must tile `[0, exit]` without gaps.
pub fn from_long(records: &[LongRecord], space: &StateSpace, max_time: f64) -> Result<Cohort> {
    let mut order: Vec<u64> = Vec::new();
    let mut groups: HashMap<u64, Vec<&LongRecord>> = HashMap::new();
    for r in records {
        groups
            .entry(r.id)
            .or_insert_with(|| {
                order.push(r.id);
                Vec::new()
            })
            .push(r);
    }

    let mut paths = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = groups.remove(&id).expect("grouped above");
        rows.sort_by(|a, b| a.entry.total_cmp(&b.entry));
        let invalid = |reason: String| MsmError::InvalidPath { subject: id, reason };

        let first = rows[0];
        if first.entry != 0.0 {
            return Err(invalid(format!("first record starts at {} instead of 0", first.entry)));
        }
        let mut events = Vec::with_capacity(rows.len());
        let mut censoring = None;
        let mut expected_state = first.from;
        let mut expected_entry = 0.0;
        for (k, r) in rows.iter().enumerate() {
            if !(r.entry < r.exit) {
                return Err(invalid(format!("entry {} not before exit {}", r.entry, r.exit)));
            }
            if r.entry < expected_entry {
                return Err(MsmError::OverlappingRecords {
                    subject: id,
                    previous_exit: expected_entry,
                    next_entry: r.entry,
                });
            }
            if r.entry > expected_entry {
                return Err(invalid(format!("gap between {} and {}", expected_entry, r.entry)));
            }
            if r.from != expected_state {
                return Err(invalid(format!(
                    "record starts in state {} but subject occupies {}",
                    r.from, expected_state
                )));
            }
            match (r.status, r.to) {
                (1, Some(to)) => {
                    events.push(Event { time: r.exit, to });
                    expected_state = to;
                }
                (1, None) => return Err(invalid("observed transition without target".into())),
                (0, _) => {
                    if k + 1 != rows.len() {
                        return Err(invalid(format!("censored at {} but has later records", r.exit)));
                    }
                    censoring = Some(r.exit);
                }
                (s, _) => return Err(invalid(format!("status must be 0 or 1, got {s}"))),
            }
            expected_entry = r.exit;
        }
        let initial = first.from;
        let censoring_time = match censoring {
            Some(c) => c,
            None if space.is_absorbing(expected_state) => max_time,
            // Last observed transition coincides with the end of follow-up.
            None => expected_entry,
        };
        paths.push(SamplePath::new(id, initial, events, censoring_time, max_time, space)?);
    }
    Cohort::new(space.clone(), max_time, paths)
}

pub fn write_long_csv<W: Write>(records: &[LongRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_long_csv<R: Read>(reader: R) -> Result<Vec<LongRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
