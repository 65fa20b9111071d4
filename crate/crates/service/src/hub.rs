//! Per-patient state: writes are serialized by a mutex per patient, readers
//! take an `Arc` of the current snapshot and never wait on a write in progress.
//! Every accepted write bumps the revision by one and appends one notification.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use medreview_core::code::CodeRef;
use medreview_core::patient::{
    effective_preconizations, freeze_review, import_patient, mutate, Change, DataCategory,
    ImportError, ItemInput, ItemOp, MutationError, Provenance,
};
use medreview_core::questionnaire::{answer_ops, AnswerValue, QuestionnaireError};
use medreview_core::review::{review_document, ReviewError};
use medreview_core::rules::{compile, parse_rules, RulePlan};
use medreview_core::textextract::{annotate, ingest_annotations};
use medreview_core::{FixturePaths, Knowledge, KnowledgeError, PatientRecord};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tokio::sync::watch;

use crate::store::{valid_patient_id, FileStore, StoreError};
use crate::tabs::{DependencyMap, Tab, TabDirtyFlags};
use crate::users::{Role, Session, Users};
use crate::views::compute_views;

#[derive(Debug, Error)]
pub enum HubError {
    #[error("unknown patient `{0}`")]
    NotFound(String),
    #[error("patient `{0}` already exists")]
    Exists(String),
    #[error("{0}")]
    Forbidden(String),
    #[error(transparent)]
    Stale(MutationError),
    #[error(transparent)]
    Mutation(MutationError),
    #[error(transparent)]
    Questionnaire(QuestionnaireError),
    #[error("a review needs at least one preconization or note before validation")]
    EmptyReview,
    #[error("the review of patient `{0}` is already validated")]
    AlreadyValidated(String),
    #[error(transparent)]
    Import(#[from] ImportError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    BadRequest(String),
}

impl From<MutationError> for HubError {
    fn from(e: MutationError) -> Self {
        match e {
            MutationError::Stale { .. } => HubError::Stale(e),
            other => HubError::Mutation(other),
        }
    }
}

impl From<QuestionnaireError> for HubError {
    fn from(e: QuestionnaireError) -> Self {
        match e {
            QuestionnaireError::Mutation(m) => m.into(),
            other => HubError::Questionnaire(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Change,
    Chat,
    Validated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeNotification {
    pub patient_id: String,
    pub revision: u64,
    pub author: String,
    pub kind: EventKind,
    pub categories: BTreeSet<DataCategory>,
    /// Tab the change was made from, when the client said so.
    pub origin_tab: Option<Tab>,
    /// Flags for every other user.
    pub dirty: TabDirtyFlags,
    /// Flags for the author: `dirty` without the origin tab.
    pub author_dirty: TabDirtyFlags,
    /// The review document, on validation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<Value>,
}

impl ChangeNotification {
    /// Flags as seen by `user`.
    pub fn dirty_for(&self, user: &str) -> &TabDirtyFlags {
        if user == self.author {
            &self.author_dirty
        } else {
            &self.dirty
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub patient_id: String,
    pub revision: u64,
    pub record: PatientRecord,
    pub views: BTreeMap<Tab, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventBatch {
    pub revision: u64,
    pub events: Vec<ChangeNotification>,
    /// Set when notifications after `since` are no longer held; the client must
    /// refetch the snapshot.
    pub resync: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeRequest {
    #[serde(default)]
    pub base_revision: Option<u64>,
    #[serde(default)]
    pub tab: Option<Tab>,
    pub ops: Vec<ItemOp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub concept: CodeRef,
    pub value: AnswerValue,
    #[serde(default)]
    pub refinement: Option<CodeRef>,
    #[serde(default)]
    pub base_revision: Option<u64>,
}

struct Slot {
    write: Mutex<()>,
    current: RwLock<Arc<Snapshot>>,
    log: Mutex<Vec<ChangeNotification>>,
    /// Revision of the oldest notification we could replay from.
    first_revision: u64,
    revision: watch::Sender<u64>,
}

type Clock = Box<dyn Fn() -> u64 + Send + Sync>;

fn wall_clock_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn provenance(role: Role) -> Provenance {
    match role {
        Role::Gp => Provenance::ManualGp,
        Role::Pharmacist | Role::Observer => Provenance::ManualPharmacist,
    }
}

fn require_writer(session: &Session) -> Result<(), HubError> {
    if session.role.can_write() {
        Ok(())
    } else {
        Err(HubError::Forbidden(format!(
            "user `{}` has read-only access",
            session.user
        )))
    }
}

/// Paths the service reads at startup.
#[derive(Debug, Clone)]
pub struct HubConfig {
    pub fixtures: FixturePaths,
    pub rules: PathBuf,
    pub dependencies: PathBuf,
    pub users: PathBuf,
    pub data_dir: Option<PathBuf>,
}

impl HubConfig {
    /// Conventional file names inside one fixtures directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        HubConfig {
            fixtures: FixturePaths::in_dir(dir),
            rules: dir.join("rules.txt"),
            dependencies: dir.join("tab_dependencies.tsv"),
            users: dir.join("users.tsv"),
            data_dir: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn read(path: &Path) -> Result<String, StartupError> {
    std::fs::read_to_string(path).map_err(|e| StartupError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn invalid(path: &Path, e: impl std::fmt::Display) -> StartupError {
    StartupError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub struct Hub {
    knowledge: Arc<Knowledge>,
    plan: Arc<RulePlan>,
    deps: DependencyMap,
    users: Users,
    store: Option<FileStore>,
    clock: Clock,
    patients: RwLock<BTreeMap<String, Arc<Slot>>>,
}

impl Hub {
    pub fn new(
        knowledge: Arc<Knowledge>,
        plan: Arc<RulePlan>,
        deps: DependencyMap,
        users: Users,
    ) -> Self {
        Hub {
            knowledge,
            plan,
            deps,
            users,
            store: None,
            clock: Box::new(wall_clock_ms),
            patients: RwLock::new(BTreeMap::new()),
        }
    }

    /// Loads every knowledge file, the rules, the tab table and the tokens, then
    /// the stored patients.
    pub fn from_config(config: &HubConfig) -> Result<Self, StartupError> {
        let knowledge = Knowledge::load(&config.fixtures)?;
        let rules = parse_rules(&read(&config.rules)?, &knowledge.terminology)
            .map_err(|e| invalid(&config.rules, e))?;
        let plan =
            compile(&rules, &knowledge.terminology).map_err(|e| invalid(&config.rules, e))?;
        let deps = DependencyMap::parse(&read(&config.dependencies)?)
            .map_err(|e| invalid(&config.dependencies, e))?;
        let users = Users::parse(&read(&config.users)?).map_err(|e| invalid(&config.users, e))?;
        let hub = Hub::new(Arc::new(knowledge), Arc::new(plan), deps, users);
        match &config.data_dir {
            Some(dir) => Ok(hub.with_store(FileStore::open(dir)?)?),
            None => Ok(hub),
        }
    }

    /// Attaches a store and loads the patients it holds.
    pub fn with_store(mut self, store: FileStore) -> Result<Self, StoreError> {
        for record in store.load_all()? {
            let slot = self.slot_for(record);
            self.patients.get_mut().insert(slot.0, slot.1);
        }
        self.store = Some(store);
        Ok(self)
    }

    /// Replaces the millisecond clock used for chat and change timestamps.
    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn knowledge(&self) -> &Knowledge {
        &self.knowledge
    }

    pub fn plan(&self) -> &RulePlan {
        &self.plan
    }

    pub fn dependencies(&self) -> &DependencyMap {
        &self.deps
    }

    pub fn session(&self, token: &str) -> Option<Session> {
        self.users.session(token).cloned()
    }

    fn snapshot_of(&self, record: PatientRecord) -> Snapshot {
        Snapshot {
            patient_id: record.patient_id.clone(),
            revision: record.revision,
            views: compute_views(&self.plan, &record, &self.knowledge),
            record,
        }
    }

    fn slot_for(&self, record: PatientRecord) -> (String, Arc<Slot>) {
        let revision = record.revision;
        let snapshot = self.snapshot_of(record);
        let id = snapshot.patient_id.clone();
        let slot = Slot {
            write: Mutex::new(()),
            current: RwLock::new(Arc::new(snapshot)),
            log: Mutex::new(Vec::new()),
            first_revision: revision,
            revision: watch::channel(revision).0,
        };
        (id, Arc::new(slot))
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, HubError> {
        self.patients
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| HubError::NotFound(id.to_string()))
    }

    pub fn patient_ids(&self) -> Vec<String> {
        self.patients.read().keys().cloned().collect()
    }

    /// Adds a new patient. The record is stored as given.
    pub fn insert(&self, record: PatientRecord) -> Result<Arc<Snapshot>, HubError> {
        if !valid_patient_id(&record.patient_id) {
            return Err(HubError::BadRequest(format!(
                "invalid patient id `{}`",
                record.patient_id
            )));
        }
        let mut patients = self.patients.write();
        if patients.contains_key(&record.patient_id) {
            return Err(HubError::Exists(record.patient_id));
        }
        if let Some(store) = &self.store {
            store.save(&record)?;
        }
        let (id, slot) = self.slot_for(record);
        let snapshot = slot.current.read().clone();
        patients.insert(id, slot);
        Ok(snapshot)
    }

    /// Imports a document, runs the text reports through the concept extractor
    /// and adds the patient.
    pub fn import(&self, document: &str) -> Result<Arc<Snapshot>, HubError> {
        self.insert(import_record(document, &self.knowledge)?)
    }

    pub fn open(&self, id: &str) -> Result<Arc<Snapshot>, HubError> {
        Ok(self.slot(id)?.current.read().clone())
    }

    pub fn view(&self, id: &str, tab: Tab) -> Result<(u64, Value), HubError> {
        let snap = self.open(id)?;
        Ok((snap.revision, snap.views[&tab].clone()))
    }

    /// The serialized write path: `f` sees the current record and returns the
    /// next one plus the categories it touched.
    fn write<F>(
        &self,
        id: &str,
        author: &str,
        kind: EventKind,
        origin: Option<Tab>,
        f: F,
    ) -> Result<ChangeNotification, HubError>
    where
        F: FnOnce(
            &PatientRecord,
        )
            -> Result<(PatientRecord, BTreeSet<DataCategory>, Option<Value>), HubError>,
    {
        let slot = self.slot(id)?;
        let _guard = slot.write.lock();
        let current = slot.current.read().clone();
        let (next, categories, document) = f(&current.record)?;
        debug_assert_eq!(next.revision, current.revision + 1);
        if let Some(store) = &self.store {
            store.save(&next)?;
        }
        let dirty = self.deps.dirty_flags(&categories, None);
        let mut author_dirty = dirty.clone();
        if let Some(tab) = origin {
            author_dirty.clear(tab);
        }
        let notification = ChangeNotification {
            patient_id: id.to_string(),
            revision: next.revision,
            author: author.to_string(),
            kind,
            categories,
            origin_tab: origin,
            dirty,
            author_dirty,
            document,
        };
        let revision = next.revision;
        *slot.current.write() = Arc::new(self.snapshot_of(next));
        slot.log.lock().push(notification.clone());
        slot.revision.send_replace(revision);
        tracing::info!(patient = id, revision, author, ?kind, "change accepted");
        Ok(notification)
    }

    pub fn submit(
        &self,
        session: &Session,
        id: &str,
        request: ChangeRequest,
    ) -> Result<ChangeNotification, HubError> {
        require_writer(session)?;
        let timestamp = (self.clock)();
        self.write(
            id,
            &session.user,
            EventKind::Change,
            request.tab,
            |record| {
                let mut change =
                    Change::new(&session.user, provenance(session.role), request.ops).at(timestamp);
                change.base_revision = request.base_revision;
                if change.categories(record).contains(&DataCategory::Chat) {
                    return Err(HubError::BadRequest(
                        "chat messages go through the chat endpoint".into(),
                    ));
                }
                let categories = change.categories(record);
                let next = mutate(record, &change, &self.knowledge)?;
                Ok((next, categories, None))
            },
        )
    }

    pub fn post_chat(
        &self,
        session: &Session,
        id: &str,
        text: &str,
    ) -> Result<ChangeNotification, HubError> {
        require_writer(session)?;
        if text.trim().is_empty() {
            return Err(HubError::BadRequest("chat message is empty".into()));
        }
        let timestamp = (self.clock)();
        self.write(
            id,
            &session.user,
            EventKind::Chat,
            Some(Tab::Chat),
            |record| {
                let op = ItemOp::Add {
                    item: ItemInput::Chat {
                        text: text.to_string(),
                    },
                };
                let change =
                    Change::new(&session.user, provenance(session.role), vec![op]).at(timestamp);
                let next = mutate(record, &change, &self.knowledge)?;
                Ok((next, BTreeSet::from([DataCategory::Chat]), None))
            },
        )
    }

    pub fn answer(
        &self,
        session: &Session,
        id: &str,
        request: AnswerRequest,
    ) -> Result<ChangeNotification, HubError> {
        require_writer(session)?;
        let timestamp = (self.clock)();
        self.write(
            id,
            &session.user,
            EventKind::Change,
            Some(Tab::Interview),
            |record| {
                let ops = answer_ops(
                    &self.plan,
                    record,
                    &self.knowledge,
                    &request.concept,
                    request.value,
                    request.refinement.as_ref(),
                )?;
                if ops.is_empty() {
                    return Err(HubError::BadRequest(
                        "the answer is already recorded".into(),
                    ));
                }
                let mut change =
                    Change::new(&session.user, provenance(session.role), ops).at(timestamp);
                change.base_revision = request.base_revision;
                let next = mutate(record, &change, &self.knowledge)?;
                Ok((next, BTreeSet::from([DataCategory::Conditions]), None))
            },
        )
    }

    /// Freezes the preconization log and emits the review document.
    pub fn validate(&self, session: &Session, id: &str) -> Result<ChangeNotification, HubError> {
        if session.role != Role::Pharmacist {
            return Err(HubError::Forbidden(
                "only the pharmacist validates a review".into(),
            ));
        }
        self.write(
            id,
            &session.user,
            EventKind::Validated,
            Some(Tab::Preconizations),
            |record| {
                if record.review_frozen {
                    return Err(HubError::AlreadyValidated(record.patient_id.clone()));
                }
                let in_force = effective_preconizations(record).map_err(ReviewError::from)?;
                if in_force.is_empty() && record.review_notes.is_empty() {
                    return Err(HubError::EmptyReview);
                }
                let next = freeze_review(record, &session.user);
                let document = review_document(&self.plan, &next, &self.knowledge, &session.user)?;
                let document = serde_json::to_value(document)
                    .map_err(|e| HubError::BadRequest(e.to_string()))?;
                Ok((
                    next,
                    BTreeSet::from([DataCategory::Preconizations]),
                    Some(document),
                ))
            },
        )
    }

    /// Notifications after revision `since`, oldest first.
    pub fn events_since(&self, id: &str, since: u64) -> Result<EventBatch, HubError> {
        let slot = self.slot(id)?;
        let log = slot.log.lock();
        let revision = *slot.revision.borrow();
        Ok(EventBatch {
            revision,
            events: log.iter().filter(|n| n.revision > since).cloned().collect(),
            resync: since < slot.first_revision,
        })
    }

    /// Like `events_since`, but waits up to `wait` for a first event.
    pub async fn wait_events(
        &self,
        id: &str,
        since: u64,
        wait: Duration,
    ) -> Result<EventBatch, HubError> {
        let slot = self.slot(id)?;
        let mut rx = slot.revision.subscribe();
        let batch = self.events_since(id, since)?;
        if !batch.events.is_empty() || batch.resync || wait.is_zero() {
            return Ok(batch);
        }
        let _ = tokio::time::timeout(wait, rx.wait_for(|&r| r > since)).await;
        self.events_since(id, since)
    }
}

/// Import document to record: structured sections first, then one change per
/// free-text report that yields new items.
pub fn import_record(document: &str, knowledge: &Knowledge) -> Result<PatientRecord, HubError> {
    let outcome = import_patient(document, knowledge)?;
    let mut record = outcome.record;
    for text in &outcome.texts {
        let ops = ingest_annotations(
            &annotate(text, &knowledge.lexicon),
            text,
            &record,
            knowledge,
        );
        if !ops.is_empty() {
            record = mutate(
                &record,
                &Change::new("import", Provenance::TextReport, ops),
                knowledge,
            )?;
        }
    }
    Ok(record)
}
