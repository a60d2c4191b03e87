//! Live labeling session: the loop thread blocks in [`SessionOracle`] while
//! an annotator fetches the queue and submits labels through [`Session`].

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use crate::dataset::{check_label, serialize_pair, CandidatePair, Label, LabelStore, Provenance};
use crate::error::{Error, Result};
use crate::eval::IterationReport;
use crate::selector::LabelOracle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub pair_id: String,
    pub label: i64,
    #[serde(default)]
    pub annotator_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub iteration: usize,
    pub pending: usize,
    pub labeled_this_iteration: usize,
    pub total_labels: usize,
    pub last_f1: Option<f64>,
    pub running: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub value: String,
}

/// A queued pair as shown to the annotator. Carries no label or model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub pair_id: String,
    pub position: usize,
    pub left: Vec<Attribute>,
    pub right: Vec<Attribute>,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Submission {
    Accepted,
    /// The same label was already recorded.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    NotPending(String),
    Conflict { pair_id: String, recorded: Label },
    Invalid(String),
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NotPending(id) => write!(f, "pair {id} is not in the pending queue"),
            Self::Conflict { pair_id, recorded } => write!(f, "pair {pair_id} is already labeled {recorded}"),
            Self::Invalid(msg) => f.write_str(msg),
        }
    }
}

#[derive(Debug, Default)]
struct State {
    iteration: usize,
    /// Current batch in selection order.
    batch: Vec<String>,
    in_batch: HashSet<String>,
    received: HashMap<String, Label>,
    labels_before: usize,
    last_f1: Option<f64>,
    running: bool,
    advance: bool,
    closed: bool,
    reports: Vec<IterationReport>,
}

pub struct Session {
    state: Mutex<State>,
    wake: Condvar,
    store: Mutex<LabelStore>,
    pairs: HashMap<String, CandidatePair>,
}

impl Session {
    /// A session over the pairs of D, persisting labels to `journal` if given.
    /// Journaled labels are replayed so a restarted service resumes.
    pub fn new(pool: &[CandidatePair], journal: Option<&Path>) -> Result<Arc<Self>> {
        let mut store = LabelStore::for_pool(pool);
        if let Some(path) = journal {
            store.attach_journal(path)?;
        }
        Ok(Arc::new(Self {
            state: Mutex::new(State {
                running: true,
                ..State::default()
            }),
            wake: Condvar::new(),
            store: Mutex::new(store),
            pairs: pool.iter().map(|p| (p.pair_id.clone(), p.clone())).collect(),
        }))
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn status(&self) -> SessionStatus {
        let s = self.lock();
        SessionStatus {
            iteration: s.iteration,
            pending: s.batch.len() - s.received.len(),
            labeled_this_iteration: s.received.len(),
            total_labels: s.labels_before + s.received.len(),
            last_f1: s.last_f1,
            running: s.running,
        }
    }

    /// Unlabeled pairs of the current batch, in selection order.
    pub fn queue(&self, limit: Option<usize>) -> Vec<QueueItem> {
        let s = self.lock();
        let attrs = |r: &crate::dataset::Record| {
            r.attributes
                .iter()
                .map(|(name, value)| Attribute {
                    name: name.clone(),
                    value: value.clone(),
                })
                .collect()
        };
        s.batch
            .iter()
            .enumerate()
            .filter(|(_, id)| !s.received.contains_key(*id))
            .take(limit.unwrap_or(usize::MAX))
            .map(|(position, id)| {
                let pair = &self.pairs[id];
                QueueItem {
                    pair_id: id.clone(),
                    position,
                    left: attrs(&pair.left),
                    right: attrs(&pair.right),
                    text: serialize_pair(pair),
                }
            })
            .collect()
    }

    pub fn reports(&self) -> Vec<IterationReport> {
        self.lock().reports.clone()
    }

    pub fn submit(&self, request: &LabelRequest) -> std::result::Result<Submission, Rejection> {
        let label = check_label(request.label).map_err(|e| Rejection::Invalid(e.to_string()))?;
        let mut s = self.lock();
        if !s.in_batch.contains(&request.pair_id) {
            return Err(Rejection::NotPending(request.pair_id.clone()));
        }
        if let Some(&recorded) = s.received.get(&request.pair_id) {
            return if recorded == label {
                Ok(Submission::Duplicate)
            } else {
                Err(Rejection::Conflict {
                    pair_id: request.pair_id.clone(),
                    recorded,
                })
            };
        }
        let mut store = self.store.lock().unwrap_or_else(|e| e.into_inner());
        match store.record(&request.pair_id, label, Provenance::Human) {
            Ok(_) => {}
            Err(Error::LabelConflict { recorded, .. }) => {
                return Err(Rejection::Conflict {
                    pair_id: request.pair_id.clone(),
                    recorded,
                })
            }
            Err(e) => return Err(Rejection::Invalid(e.to_string())),
        }
        s.received.insert(request.pair_id.clone(), label);
        Ok(Submission::Accepted)
    }

    /// Resume the loop if every pair of the batch is labeled; otherwise no-op.
    pub fn advance(&self) -> bool {
        let mut s = self.lock();
        let complete = !s.batch.is_empty() && s.received.len() == s.batch.len();
        if complete {
            s.advance = true;
            self.wake.notify_all();
        }
        complete
    }

    pub fn publish(&self, report: IterationReport) {
        let mut s = self.lock();
        s.labels_before = report.labels_used;
        s.last_f1 = Some(report.f1);
        s.iteration = report.iteration;
        s.reports.push(report);
    }

    /// Loop finished; the queue stays empty.
    pub fn finish(&self) {
        let mut s = self.lock();
        s.running = false;
        s.batch.clear();
        s.in_batch.clear();
        s.received.clear();
    }

    /// Unblock a waiting loop with an error, e.g. on shutdown.
    pub fn close(&self) {
        let mut s = self.lock();
        s.closed = true;
        s.running = false;
        self.wake.notify_all();
    }

    fn wait_for_labels(&self, iteration: usize, pairs: &[&CandidatePair]) -> Result<Vec<Label>> {
        // labels journaled before a restart count immediately
        let journaled: HashMap<String, Label> = {
            let store = self.store.lock().unwrap_or_else(|e| e.into_inner());
            pairs
                .iter()
                .filter_map(|p| store.get(&p.pair_id).map(|l| (p.pair_id.clone(), l)))
                .collect()
        };
        {
            let mut s = self.lock();
            s.iteration = iteration;
            s.batch = pairs.iter().map(|p| p.pair_id.clone()).collect();
            s.in_batch = s.batch.iter().cloned().collect();
            s.advance = false;
            s.received = journaled;
        }
        let mut s = self.lock();
        while !(s.advance && s.received.len() == s.batch.len()) {
            if s.closed {
                return Err(Error::SessionClosed);
            }
            if s.batch.is_empty() {
                break;
            }
            s = self.wake.wait(s).unwrap_or_else(|e| e.into_inner());
        }
        let labels = s.batch.iter().map(|id| s.received[id]).collect();
        s.labels_before += s.batch.len();
        s.batch.clear();
        s.in_batch.clear();
        s.received.clear();
        s.advance = false;
        Ok(labels)
    }
}

/// Oracle handle held by the loop thread.
pub struct SessionOracle(pub Arc<Session>);

impl LabelOracle for SessionOracle {
    fn label_batch(&mut self, iteration: usize, pairs: &[&CandidatePair]) -> Result<Vec<Label>> {
        self.0.wait_for_labels(iteration, pairs)
    }
}
