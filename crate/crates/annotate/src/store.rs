use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use ssada_core::data::SampleId;
use ssada_core::labeler::{LabelRequest, QueryItem};

use crate::error::{Result, ServiceError};
use crate::journal::{Event, Journal};
use crate::records::{LabelAck, Phase, QueryRecord, QueryStatus, RoundStatus, SCHEMA_VERSION};

#[derive(Debug, Clone)]
struct Round {
    round: usize,
    records: Vec<QueryRecord>,
    index: HashMap<SampleId, usize>,
    phase: Phase,
}

impl Round {
    fn new(round: usize, items: &[QueryItem]) -> Self {
        let records: Vec<QueryRecord> = items
            .iter()
            .map(|q| QueryRecord {
                sample_id: q.sample_id,
                round,
                domain: q.domain.clone(),
                features: q.features.clone(),
                status: QueryStatus::Pending,
                label: None,
                annotator: None,
            })
            .collect();
        let index = records.iter().enumerate().map(|(i, r)| (r.sample_id, i)).collect();
        Self {
            round,
            records,
            index,
            phase: Phase::AwaitingLabels,
        }
    }

    fn labeled(&self) -> usize {
        self.records.iter().filter(|r| r.status == QueryStatus::Labeled).count()
    }

    fn pending(&self) -> usize {
        self.records.len() - self.labeled()
    }

    fn same_queries(&self, round: usize, items: &[QueryItem]) -> bool {
        self.round == round
            && self.records.len() == items.len()
            && self
                .records
                .iter()
                .zip(items)
                .all(|(r, q)| r.sample_id == q.sample_id && r.domain == q.domain && r.features == q.features)
    }

    fn apply_label(&mut self, sample_id: SampleId, label: u8, annotator: String) {
        let r = &mut self.records[self.index[&sample_id]];
        r.status = QueryStatus::Labeled;
        r.label = Some(label);
        r.annotator = Some(annotator);
    }

    fn labels(&self) -> BTreeMap<SampleId, u8> {
        self.records
            .iter()
            .filter_map(|r| r.label.map(|l| (r.sample_id, l)))
            .collect()
    }
}

#[derive(Debug, Default)]
struct State {
    round: Option<Round>,
    journal: Option<Journal>,
}

impl State {
    fn record(&mut self, event: Event) -> Result<()> {
        if let Some(j) = self.journal.as_mut() {
            j.append(&event)?;
        }
        Ok(())
    }
}

/// Holds the single active round. Every mutation goes through one lock, so
/// submissions for the same sample are serialized.
#[derive(Debug, Default)]
pub struct RoundStore {
    state: Mutex<State>,
    changed: Condvar,
}

impl RoundStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// A store backed by the journal at `path`, with state replayed from it.
    pub fn with_journal(path: impl AsRef<Path>) -> Result<Self> {
        let (journal, events) = Journal::open(path)?;
        let mut round: Option<Round> = None;
        for e in events {
            match e {
                Event::Open { round: n, queries } => round = Some(Round::new(n, &queries)),
                Event::Label { sample_id, label, annotator, .. } => {
                    let r = round
                        .as_mut()
                        .filter(|r| r.index.contains_key(&sample_id))
                        .ok_or_else(|| ServiceError::Journal(format!("label for {sample_id} outside a round")))?;
                    r.apply_label(sample_id, label, annotator);
                }
                Event::Close { .. } => {
                    if let Some(r) = round.as_mut() {
                        r.phase = Phase::Training;
                    }
                }
                Event::Abort { .. } => round = None,
            }
        }
        Ok(Self {
            state: Mutex::new(State {
                round,
                journal: Some(journal),
            }),
            changed: Condvar::new(),
        })
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Starts a round for `request`. Reopening the round that is already
    /// awaiting labels, with the same queries, resumes it; this is how a
    /// restarted harness picks up labels journaled before the restart.
    pub fn open_round(&self, request: &LabelRequest) -> Result<()> {
        let mut st = self.lock();
        if let Some(r) = &st.round {
            if r.phase == Phase::AwaitingLabels {
                if r.same_queries(request.round, &request.items) {
                    return Ok(());
                }
                return Err(ServiceError::RoundBusy);
            }
        }
        st.record(Event::Open {
            round: request.round,
            queries: request.items.clone(),
        })?;
        st.round = Some(Round::new(request.round, &request.items));
        drop(st);
        self.changed.notify_all();
        Ok(())
    }

    pub fn status(&self) -> Result<RoundStatus> {
        let st = self.lock();
        let r = st.round.as_ref().ok_or(ServiceError::NoRound)?;
        Ok(RoundStatus {
            schema_version: SCHEMA_VERSION,
            round: r.round,
            budget: r.records.len(),
            pending: r.pending(),
            labeled: r.labeled(),
            phase: r.phase,
        })
    }

    /// The round's queries in the order the sampler produced them.
    pub fn queries(&self) -> Result<(usize, Vec<QueryRecord>)> {
        let st = self.lock();
        let r = st.round.as_ref().ok_or(ServiceError::NoRound)?;
        Ok((r.round, r.records.clone()))
    }

    /// Accepts one label. The journal line is on disk before this returns.
    pub fn submit(&self, sample_id: SampleId, label: i64, annotator: &str) -> Result<LabelAck> {
        let mut st = self.lock();
        let r = st.round.as_ref().ok_or(ServiceError::NoRound)?;
        let &i = r.index.get(&sample_id).ok_or(ServiceError::UnknownSample(sample_id))?;
        if let Some(stored) = r.records[i].label {
            return Err(ServiceError::Duplicate { sample_id, stored });
        }
        let label = u8::try_from(label)
            .ok()
            .filter(|l| *l <= 1)
            .ok_or(ServiceError::BadLabel(label))?;
        let round = r.round;
        st.record(Event::Label {
            round,
            sample_id,
            label,
            annotator: annotator.to_string(),
        })?;
        let r = st.round.as_mut().expect("checked above");
        r.apply_label(sample_id, label, annotator.to_string());
        let ack = LabelAck {
            schema_version: SCHEMA_VERSION,
            sample_id,
            label,
            pending: r.pending(),
            labeled: r.labeled(),
        };
        drop(st);
        self.changed.notify_all();
        Ok(ack)
    }

    /// Blocks until every query of the current round is labeled, then moves
    /// the round to [`Phase::Training`] and returns its labels. Only one
    /// caller can observe the transition; later calls fail with `NoRound`.
    pub fn wait_complete(&self, timeout: Duration) -> Result<BTreeMap<SampleId, u8>> {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            match &st.round {
                Some(r) if r.phase == Phase::AwaitingLabels => {
                    if r.pending() == 0 {
                        let n = r.round;
                        st.record(Event::Close { round: n })?;
                        let r = st.round.as_mut().expect("present");
                        r.phase = Phase::Training;
                        let labels = r.labels();
                        drop(st);
                        self.changed.notify_all();
                        return Ok(labels);
                    }
                }
                _ => return Err(ServiceError::NoRound),
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(ServiceError::Timeout(timeout));
            }
            st = self
                .changed
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
    }

    /// Drops the current round if it is still awaiting labels.
    pub fn abort_round(&self) -> Result<()> {
        let mut st = self.lock();
        if let Some(n) = st.round.as_ref().filter(|r| r.phase == Phase::AwaitingLabels).map(|r| r.round) {
            st.record(Event::Abort { round: n })?;
            st.round = None;
        }
        drop(st);
        self.changed.notify_all();
        Ok(())
    }
}
