//! Accounts, searches and feedback, independent of the HTTP layer.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use argon2::{Argon2, PasswordHasher, PasswordVerifier};
use diva_core::casebase::{fallback_ranking, preference_ranking, RankingConfig, RankingError};
use diva_core::preference::build_ldo;
use diva_core::recommend::{
    apply_longterm_feedback, merged_session_preference, recommend_excluding, ConstraintSet,
    Feedback, SessionState, ShortTermTag,
};
use diva_core::{rng, ItemId, MovieRecord, SamplerConfig, TotalOrder, TriageLists, UserId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{now_secs, Account, Store, StoreError};

/// Below this many items per list the registration response carries a warning.
pub const MIN_TRIAGE_PER_LIST: usize = 5;
pub const DEFAULT_PAGE_SIZE: usize = 10;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("login `{0}` is already taken")]
    LoginTaken(String),
    #[error("{0}")]
    Invalid(String),
    #[error("missing or unknown credentials")]
    Unauthorized,
    #[error("not allowed to act for `{0}`")]
    Forbidden(String),
    #[error("no {0}")]
    NotFound(String),
    #[error("search session {0} is closed or unknown")]
    SessionClosed(String),
    #[error(
        "no preferences yet; mark about five movies each as Like, OK and Dislike before searching"
    )]
    EmptyTriage,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::LoginTaken(_) => "login_taken",
            ServiceError::Invalid(_) => "invalid_request",
            ServiceError::Unauthorized => "unauthorized",
            ServiceError::Forbidden(_) => "forbidden",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::SessionClosed(_) => "session_closed",
            ServiceError::EmptyTriage => "empty_triage",
            ServiceError::Store(_) => "storage_error",
            ServiceError::Internal(_) => "internal_error",
        }
    }
}

pub type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Clone, PartialEq)]
pub struct AdvisorConfig {
    pub seed: u64,
    pub num_extensions: usize,
    pub num_iterations: u64,
    pub top_k: usize,
    pub page_size: usize,
}

impl Default for AdvisorConfig {
    fn default() -> Self {
        AdvisorConfig {
            seed: 0,
            num_extensions: 30,
            num_iterations: 100,
            top_k: 100,
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub login: String,
    pub password: String,
    #[serde(default)]
    pub triage: TriageLists,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountView {
    pub login: String,
    pub triage: TriageLists,
    pub created_at: u64,
    pub updated_at: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    #[serde(default)]
    pub constraints: ConstraintSet,
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub session_id: String,
    pub movies: Vec<MovieRecord>,
    /// The constraints were disjoined because too few movies met all of them.
    pub relaxed: bool,
    pub no_matches: bool,
    /// No case base was available; movies are in star-rating order.
    pub degraded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_user: Option<UserId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    /// Short-term edges ignored because they contradicted long-term preferences.
    #[serde(default)]
    pub dropped_session_edges: Vec<(ItemId, ItemId)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub session_id: String,
    /// Long-term verdicts written to the account.
    pub longterm_applied: usize,
    pub near_miss: BTreeSet<ItemId>,
    pub not_even_close: BTreeSet<ItemId>,
}

#[derive(Debug, Clone)]
struct SearchSession {
    owner: String,
    state: SessionState,
    last: Vec<ItemId>,
    seed: u64,
    page_size: usize,
}

/// Shared service state. Per-user operations are serialized by a per-login lock.
pub struct Advisor {
    config: AdvisorConfig,
    data_dir: Option<PathBuf>,
    store: RwLock<Store>,
    sessions: Mutex<HashMap<String, SearchSession>>,
    tokens: Mutex<HashMap<String, String>>,
    counters: Mutex<HashMap<String, u64>>,
    user_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn login_words(login: &str) -> Vec<u64> {
    login
        .as_bytes()
        .chunks(8)
        .map(|c| c.iter().fold(0u64, |acc, &b| (acc << 8) | u64::from(b)))
        .collect()
}

struct Ranked {
    order: TotalOrder,
    degraded: bool,
    matched_user: Option<UserId>,
    distance: Option<f64>,
    dropped: Vec<(ItemId, ItemId)>,
}

impl Advisor {
    /// `data_dir = None` keeps everything in memory.
    pub fn new(store: Store, data_dir: Option<PathBuf>, config: AdvisorConfig) -> Self {
        Advisor {
            config,
            data_dir,
            store: RwLock::new(store),
            sessions: Mutex::new(HashMap::new()),
            tokens: Mutex::new(HashMap::new()),
            counters: Mutex::new(HashMap::new()),
            user_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &AdvisorConfig {
        &self.config
    }

    fn user_lock(&self, login: &str) -> Arc<Mutex<()>> {
        lock(&self.user_locks)
            .entry(login.to_string())
            .or_default()
            .clone()
    }

    fn read_store(&self) -> std::sync::RwLockReadGuard<'_, Store> {
        self.store.read().unwrap_or_else(|e| e.into_inner())
    }

    fn persist_accounts(&self, store: &Store) -> Result<()> {
        if let Some(dir) = &self.data_dir {
            store.save_accounts(dir)?;
        }
        Ok(())
    }

    fn check_triage(&self, triage: &TriageLists) -> Result<Vec<String>> {
        triage
            .validate()
            .map_err(|e| ServiceError::Invalid(e.to_string()))?;
        let store = self.read_store();
        if let Some(unknown) = triage.items().find(|i| !store.catalog.contains(i)) {
            return Err(ServiceError::Invalid(format!(
                "movie {unknown} is not in the catalog"
            )));
        }
        let short: Vec<&str> = [
            ("Like", &triage.like),
            ("OK", &triage.ok),
            ("Dislike", &triage.dislike),
        ]
        .into_iter()
        .filter(|(_, list)| list.len() < MIN_TRIAGE_PER_LIST)
        .map(|(name, _)| name)
        .collect();
        Ok(if short.is_empty() {
            Vec::new()
        } else {
            vec![format!(
                "recommendations may be unreliable: fewer than {MIN_TRIAGE_PER_LIST} movies in {}",
                short.join(", ")
            )]
        })
    }

    pub fn register(&self, req: RegisterRequest) -> Result<AccountView> {
        let login = req.login.trim().to_string();
        if login.is_empty() {
            return Err(ServiceError::Invalid("login must not be empty".into()));
        }
        if req.password.is_empty() {
            return Err(ServiceError::Invalid("password must not be empty".into()));
        }
        let warnings = self.check_triage(&req.triage)?;
        let digest = Argon2::default()
            .hash_password(req.password.as_bytes())
            .map_err(|e| ServiceError::Internal(format!("password hashing failed: {e}")))?
            .to_string();
        let user_lock = self.user_lock(&login);
        let _guard = lock(&user_lock);
        let mut store = self.store.write().unwrap_or_else(|e| e.into_inner());
        if store.accounts.contains_key(&login) {
            return Err(ServiceError::LoginTaken(login));
        }
        let now = now_secs();
        let account = Account {
            login: login.clone(),
            password_digest: digest,
            triage: req.triage,
            created_at: now,
            updated_at: now,
        };
        store.accounts.insert(login.clone(), account.clone());
        if let Err(e) = self.persist_accounts(&store) {
            store.accounts.remove(&login);
            return Err(e);
        }
        Ok(view(&account, warnings))
    }

    /// Returns a bearer token for the account.
    pub fn login(&self, login: &str, password: &str) -> Result<String> {
        let digest = self
            .read_store()
            .accounts
            .get(login)
            .map(|a| a.password_digest.clone())
            .ok_or(ServiceError::Unauthorized)?;
        Argon2::default()
            .verify_password(password.as_bytes(), digest.as_str())
            .map_err(|_| ServiceError::Unauthorized)?;
        let token = uuid::Uuid::new_v4().simple().to_string();
        lock(&self.tokens).insert(token.clone(), login.to_string());
        Ok(token)
    }

    /// The login a bearer token belongs to.
    pub fn authenticate(&self, token: &str) -> Result<String> {
        lock(&self.tokens)
            .get(token)
            .cloned()
            .ok_or(ServiceError::Unauthorized)
    }

    pub fn movies(&self, title_prefix: Option<&str>) -> Vec<MovieRecord> {
        let store = self.read_store();
        let prefix = title_prefix.unwrap_or("").to_lowercase();
        let mut out: Vec<MovieRecord> = store
            .catalog
            .movies()
            .iter()
            .filter(|m| m.title.to_lowercase().starts_with(&prefix))
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            a.title
                .to_lowercase()
                .cmp(&b.title.to_lowercase())
                .then_with(|| a.id.cmp(&b.id))
        });
        out
    }

    pub fn account(&self, login: &str) -> Result<AccountView> {
        let store = self.read_store();
        let account = store
            .accounts
            .get(login)
            .ok_or_else(|| ServiceError::NotFound(format!("account `{login}`")))?;
        Ok(view(account, Vec::new()))
    }

    pub fn set_triage(&self, login: &str, triage: TriageLists) -> Result<AccountView> {
        let warnings = self.check_triage(&triage)?;
        let user_lock = self.user_lock(login);
        let _guard = lock(&user_lock);
        let mut store = self.store.write().unwrap_or_else(|e| e.into_inner());
        let account = store
            .accounts
            .get_mut(login)
            .ok_or_else(|| ServiceError::NotFound(format!("account `{login}`")))?;
        let previous = std::mem::replace(&mut account.triage, triage);
        account.updated_at = now_secs();
        let updated = account.clone();
        if let Err(e) = self.persist_accounts(&store) {
            store.accounts.get_mut(login).expect("present").triage = previous;
            return Err(e);
        }
        Ok(view(&updated, warnings))
    }

    fn rank(
        &self,
        triage: &TriageLists,
        session: Option<&SessionState>,
        seed: u64,
    ) -> Result<Ranked> {
        let store = self.read_store();
        let universe: BTreeSet<ItemId> = store.catalog.ids().cloned().collect();
        if store.casebase.is_empty() {
            return Ok(Ranked {
                order: fallback_ranking(&store.catalog),
                degraded: true,
                matched_user: None,
                distance: None,
                dropped: Vec::new(),
            });
        }
        let ldo = build_ldo(triage)
            .map_err(|e| ServiceError::Invalid(e.to_string()))?
            .restrict(&universe);
        let (active, dropped) = match session {
            Some(s) => {
                let merged = merged_session_preference(&ldo, s);
                (merged.preference, merged.dropped)
            }
            None => (ldo, Vec::new()),
        };
        let cfg = RankingConfig {
            sampler: SamplerConfig::new(
                self.config.num_extensions,
                self.config.num_iterations,
                seed,
            ),
            top_k: self.config.top_k,
        };
        match preference_ranking(&active, &store.casebase, &cfg, &universe) {
            Ok(r) => Ok(Ranked {
                order: r.order,
                degraded: false,
                matched_user: Some(r.matched_user),
                distance: Some(r.distance),
                dropped,
            }),
            Err(RankingError::EmptyPreference) => Err(ServiceError::EmptyTriage),
            Err(e) => Err(ServiceError::Internal(e.to_string())),
        }
    }

    fn respond(
        &self,
        sid: &str,
        session: &mut SearchSession,
        ranked: Ranked,
        triage: &TriageLists,
    ) -> SearchResponse {
        let store = self.read_store();
        let classified: BTreeSet<ItemId> = triage.items().cloned().collect();
        let rec = recommend_excluding(
            &ranked.order,
            &store.catalog,
            &mut session.state,
            session.page_size,
            &classified,
        );
        session.last = rec.movies.iter().map(|m| m.id.clone()).collect();
        SearchResponse {
            session_id: sid.to_string(),
            movies: rec.movies,
            relaxed: rec.relaxed,
            no_matches: rec.no_matches,
            degraded: ranked.degraded,
            matched_user: ranked.matched_user,
            distance: ranked.distance,
            dropped_session_edges: ranked.dropped,
        }
    }

    /// Opens a new search, closing any earlier one of the same user.
    pub fn search(&self, login: &str, req: SearchRequest) -> Result<SearchResponse> {
        req.constraints
            .validate()
            .map_err(|e| ServiceError::Invalid(e.to_string()))?;
        let page_size = req.n.unwrap_or(self.config.page_size);
        if page_size == 0 {
            return Err(ServiceError::Invalid("n must be at least 1".into()));
        }
        let user_lock = self.user_lock(login);
        let _guard = lock(&user_lock);
        let triage = self.account_triage(login)?;
        if triage.is_empty() {
            return Err(ServiceError::EmptyTriage);
        }
        lock(&self.sessions).retain(|_, s| s.owner != login);
        let counter = {
            let mut counters = lock(&self.counters);
            let c = counters.entry(login.to_string()).or_insert(0);
            *c += 1;
            *c
        };
        let mut parts = login_words(login);
        parts.push(counter);
        let seed = rng::derive_seed(self.config.seed, &parts);
        let ranked = self.rank(&triage, None, seed)?;
        let mut session = SearchSession {
            owner: login.to_string(),
            state: SessionState::new(req.constraints),
            last: Vec::new(),
            seed,
            page_size,
        };
        let sid = uuid::Uuid::new_v4().simple().to_string();
        let response = self.respond(&sid, &mut session, ranked, &triage);
        lock(&self.sessions).insert(sid, session);
        Ok(response)
    }

    fn account_triage(&self, login: &str) -> Result<TriageLists> {
        self.read_store()
            .accounts
            .get(login)
            .map(|a| a.triage.clone())
            .ok_or_else(|| ServiceError::NotFound(format!("account `{login}`")))
    }

    fn session(&self, login: &str, sid: &str) -> Result<SearchSession> {
        let sessions = lock(&self.sessions);
        let s = sessions
            .get(sid)
            .ok_or_else(|| ServiceError::SessionClosed(sid.to_string()))?;
        if s.owner != login {
            return Err(ServiceError::Forbidden(login.to_string()));
        }
        Ok(s.clone())
    }

    fn store_session(&self, sid: &str, session: SearchSession) -> Result<()> {
        let mut sessions = lock(&self.sessions);
        match sessions.get_mut(sid) {
            Some(slot) => {
                *slot = session;
                Ok(())
            }
            None => Err(ServiceError::SessionClosed(sid.to_string())),
        }
    }

    pub fn feedback(&self, login: &str, sid: &str, fb: Feedback) -> Result<FeedbackAck> {
        let user_lock = self.user_lock(login);
        let _guard = lock(&user_lock);
        let mut session = self.session(login, sid)?;
        let per_item = fb
            .normalized()
            .map_err(|e| ServiceError::Invalid(e.to_string()))?;
        if let Some(stray) = per_item.keys().find(|i| !session.last.contains(i)) {
            return Err(ServiceError::Invalid(format!(
                "movie {stray} is not in the current recommendation list"
            )));
        }
        let longterm_applied = per_item.values().filter(|(v, _)| v.is_some()).count();
        if longterm_applied > 0 {
            let mut store = self.store.write().unwrap_or_else(|e| e.into_inner());
            let account = store
                .accounts
                .get_mut(login)
                .ok_or_else(|| ServiceError::NotFound(format!("account `{login}`")))?;
            let next = apply_longterm_feedback(&account.triage, &fb)
                .map_err(|e| ServiceError::Invalid(e.to_string()))?;
            let previous = std::mem::replace(&mut account.triage, next);
            account.updated_at = now_secs();
            if let Err(e) = self.persist_accounts(&store) {
                store.accounts.get_mut(login).expect("present").triage = previous;
                return Err(e);
            }
        }
        for (item, (_, tag)) in per_item {
            let Some(tag) = tag else { continue };
            session.state.near_miss.remove(&item);
            session.state.not_even_close.remove(&item);
            match tag {
                ShortTermTag::NearMiss => session.state.near_miss.insert(item),
                ShortTermTag::NotEvenClose => session.state.not_even_close.insert(item),
            };
        }
        let ack = FeedbackAck {
            session_id: sid.to_string(),
            longterm_applied,
            near_miss: session.state.near_miss.clone(),
            not_even_close: session.state.not_even_close.clone(),
        };
        self.store_session(sid, session)?;
        Ok(ack)
    }

    /// Next page, re-ranked with the session's short-term edges and the
    /// current long-term lists.
    pub fn continue_search(&self, login: &str, sid: &str) -> Result<SearchResponse> {
        let user_lock = self.user_lock(login);
        let _guard = lock(&user_lock);
        let mut session = self.session(login, sid)?;
        let triage = self.account_triage(login)?;
        if triage.is_empty() {
            return Err(ServiceError::EmptyTriage);
        }
        let ranked = self.rank(&triage, Some(&session.state), session.seed)?;
        let response = self.respond(sid, &mut session, ranked, &triage);
        self.store_session(sid, session)?;
        Ok(response)
    }

    pub fn close(&self, login: &str, sid: &str) -> Result<()> {
        let user_lock = self.user_lock(login);
        let _guard = lock(&user_lock);
        self.session(login, sid)?;
        lock(&self.sessions).remove(sid);
        Ok(())
    }

    /// Open session ids of `login`.
    pub fn open_sessions(&self, login: &str) -> Vec<String> {
        let mut ids: Vec<String> = lock(&self.sessions)
            .iter()
            .filter(|(_, s)| s.owner == login)
            .map(|(k, _)| k.clone())
            .collect();
        ids.sort();
        ids
    }

    /// A copy of the current store.
    pub fn snapshot(&self) -> Store {
        self.read_store().clone()
    }
}

fn view(a: &Account, warnings: Vec<String>) -> AccountView {
    AccountView {
        login: a.login.clone(),
        triage: a.triage.clone(),
        created_at: a.created_at,
        updated_at: a.updated_at,
        warnings,
    }
}
