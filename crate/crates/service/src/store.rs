//! On-disk state: accounts, catalog and case base as JSON lines.
//!
//! Every file is rewritten whole through a temporary file in the same
//! directory and renamed into place, so readers never see a torn file.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use diva_core::casebase::{CaseBase, Catalog};
use diva_core::{MovieRecord, TriageLists};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ACCOUNTS_FILE: &str = "accounts.jsonl";
pub const CATALOG_FILE: &str = "catalog.jsonl";
pub const CASEBASE_FILE: &str = "casebase.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{file}:{line}: {reason}")]
    Corrupt {
        file: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub login: String,
    /// PHC-format salted hash.
    pub password_digest: String,
    pub triage: TriageLists,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub updated_at: u64,
}

pub fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Everything the service keeps between restarts.
#[derive(Debug, Clone, Default)]
pub struct Store {
    pub accounts: BTreeMap<String, Account>,
    pub catalog: Arc<Catalog>,
    pub casebase: Arc<CaseBase>,
}

impl PartialEq for Store {
    fn eq(&self, other: &Self) -> bool {
        self.accounts == other.accounts
            && *self.catalog == *other.catalog
            && *self.casebase == *other.casebase
    }
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(StoreError::io(path, e)),
    };
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            file: path.to_path_buf(),
            line: k + 1,
            reason: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Writes `path` via a sibling temporary file and an atomic rename.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), StoreError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| StoreError::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w).map_err(|e| StoreError::io(path, e))?;
        w.flush().map_err(|e| StoreError::io(path, e))?;
    }
    tmp.as_file()
        .sync_all()
        .map_err(|e| StoreError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| StoreError::io(path, e.error))?;
    Ok(())
}

fn write_lines<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<(), StoreError> {
    write_atomic(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, item)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

impl Store {
    pub fn new(catalog: Catalog, casebase: CaseBase) -> Self {
        Store {
            accounts: BTreeMap::new(),
            catalog: Arc::new(catalog),
            casebase: Arc::new(casebase),
        }
    }

    /// Loads whatever files exist in `dir`; missing files mean empty parts.
    pub fn load(dir: &Path) -> Result<Store, StoreError> {
        let mut accounts = BTreeMap::new();
        let path = dir.join(ACCOUNTS_FILE);
        for (k, a) in read_lines::<Account>(&path)?.into_iter().enumerate() {
            if a.login.is_empty() {
                return Err(StoreError::Corrupt {
                    file: path,
                    line: k + 1,
                    reason: "empty login".into(),
                });
            }
            if let Err(e) = a.triage.validate() {
                return Err(StoreError::Corrupt {
                    file: path,
                    line: k + 1,
                    reason: e.to_string(),
                });
            }
            if accounts.insert(a.login.clone(), a).is_some() {
                return Err(StoreError::Corrupt {
                    file: path,
                    line: k + 1,
                    reason: "duplicate login".into(),
                });
            }
        }
        let path = dir.join(CATALOG_FILE);
        let movies: Vec<MovieRecord> = read_lines(&path)?;
        let catalog = Catalog::new(movies).map_err(|e| StoreError::Corrupt {
            file: path,
            line: 0,
            reason: e.to_string(),
        })?;
        let path = dir.join(CASEBASE_FILE);
        let casebase = match File::open(&path) {
            Ok(f) => CaseBase::read_jsonl(BufReader::new(f)).map_err(|e| match e {
                diva_core::casebase::CaseBaseError::BadRecord { line, reason } => {
                    StoreError::Corrupt {
                        file: path.clone(),
                        line,
                        reason,
                    }
                }
                other => StoreError::Corrupt {
                    file: path.clone(),
                    line: 0,
                    reason: other.to_string(),
                },
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => CaseBase::new(),
            Err(e) => return Err(StoreError::io(&path, e)),
        };
        Ok(Store {
            accounts,
            catalog: Arc::new(catalog),
            casebase: Arc::new(casebase),
        })
    }

    pub fn save_accounts(&self, dir: &Path) -> Result<(), StoreError> {
        write_lines(&dir.join(ACCOUNTS_FILE), self.accounts.values())
    }

    pub fn save_catalog(&self, dir: &Path) -> Result<(), StoreError> {
        write_lines(&dir.join(CATALOG_FILE), self.catalog.movies())
    }

    pub fn save_casebase(&self, dir: &Path) -> Result<(), StoreError> {
        write_atomic(&dir.join(CASEBASE_FILE), |w| self.casebase.write_jsonl(w))
    }

    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        self.save_catalog(dir)?;
        self.save_casebase(dir)?;
        self.save_accounts(dir)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TruthLine {
    user: diva_core::UserId,
    liked: std::collections::BTreeSet<diva_core::ItemId>,
}

pub type GroundTruth = BTreeMap<diva_core::UserId, std::collections::BTreeSet<diva_core::ItemId>>;

pub fn save_ground_truth(dir: &Path, truth: &GroundTruth) -> Result<(), StoreError> {
    let lines: Vec<TruthLine> = truth
        .iter()
        .map(|(user, liked)| TruthLine {
            user: user.clone(),
            liked: liked.clone(),
        })
        .collect();
    write_lines(&dir.join(GROUND_TRUTH_FILE), &lines)
}

/// `None` when the data directory has no ground-truth file.
pub fn load_ground_truth(dir: &Path) -> Result<Option<GroundTruth>, StoreError> {
    let path = dir.join(GROUND_TRUTH_FILE);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(
        read_lines::<TruthLine>(&path)?
            .into_iter()
            .map(|t| (t.user, t.liked))
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use diva_core::evaluation::{synth_casebase, SynthConfig};
    use diva_core::ItemId;

    fn account(k: usize) -> Account {
        let mut triage = TriageLists::default();
        for j in 0..(k % 7) {
            let item = ItemId::new(format!("m{:03}", (k * 13 + j * 5) % 400)).unwrap();
            match j % 3 {
                0 => triage.like.insert(item),
                1 => triage.ok.insert(item),
                _ => triage.dislike.insert(item),
            };
        }
        triage.ok.retain(|i| !triage.like.contains(i));
        triage
            .dislike
            .retain(|i| !triage.like.contains(i) && !triage.ok.contains(i));
        Account {
            login: format!("user-{k}"),
            password_digest: format!("$argon2id$v=19$m=19456,t=2,p=1$salt{k}$hash{k}"),
            triage,
            created_at: 1_000 + k as u64,
            updated_at: 2_000 + k as u64,
        }
    }

    #[test]
    fn empty_store_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::default();
        store.save(dir.path()).unwrap();
        assert_eq!(Store::load(dir.path()).unwrap(), store);
        assert_eq!(Store::load(&dir.path().join("missing")).unwrap(), store);
    }

    #[test]
    fn hundred_accounts_round_trip_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let synth = synth_casebase(&SynthConfig {
            population: 30,
            catalog_size: 50,
            seed: 4,
            ..Default::default()
        });
        let mut store = Store::new(synth.catalog, synth.casebase);
        for k in 0..100 {
            let a = account(k);
            store.accounts.insert(a.login.clone(), a);
        }
        store.save(dir.path()).unwrap();
        let first: Vec<Vec<u8>> = [ACCOUNTS_FILE, CATALOG_FILE, CASEBASE_FILE]
            .iter()
            .map(|f| fs::read(dir.path().join(f)).unwrap())
            .collect();
        let loaded = Store::load(dir.path()).unwrap();
        assert_eq!(loaded, store);
        loaded.save(dir.path()).unwrap();
        let second: Vec<Vec<u8>> = [ACCOUNTS_FILE, CATALOG_FILE, CASEBASE_FILE]
            .iter()
            .map(|f| fs::read(dir.path().join(f)).unwrap())
            .collect();
        assert_eq!(first, second);
    }

    #[test]
    fn corrupt_line_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::default();
        store.accounts.insert("a".into(), account(1));
        store.save(dir.path()).unwrap();
        let path = dir.path().join(ACCOUNTS_FILE);
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{not json\n");
        fs::write(&path, text).unwrap();
        match Store::load(dir.path()) {
            Err(StoreError::Corrupt { line, file, .. }) => {
                assert_eq!(line, 2);
                assert!(file.ends_with(ACCOUNTS_FILE));
            }
            other => panic!("expected corruption error, got {other:?}"),
        }
    }

    #[test]
    fn ground_truth_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_ground_truth(dir.path()).unwrap(), None);
        let synth = synth_casebase(&SynthConfig {
            population: 5,
            catalog_size: 40,
            seed: 2,
            ..Default::default()
        });
        save_ground_truth(dir.path(), &synth.ground_truth).unwrap();
        assert_eq!(
            load_ground_truth(dir.path()).unwrap(),
            Some(synth.ground_truth)
        );
    }
}
