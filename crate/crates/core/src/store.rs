//! On-disk store shared by the CLI and the service.
//!
//! ```text
//! <root>/registry.toml               optional registry overrides
//! <root>/corpora/<debate>.json
//! <root>/corpora/<debate>.removed.jsonl
//! <root>/sets/<set>.jsonl
//! <root>/sets/<set>.manifest.json    model sets only
//! <root>/sets/<set>.failures.jsonl   model sets only
//! <root>/runs/<run>.json             service run status
//! ```

use std::path::{Path, PathBuf};

use crate::annotation::{self, read_set_header, AnnotationError, AnnotationSet, SetHeader};
use crate::corpus::{self, validate_debate_id, Corpus, CorpusError, Removal};
use crate::fsio::write_atomic;
use crate::schema::{load_registry, SchemaError, TagRegistry};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store {path} is unreadable: {detail}")]
    Unreadable { path: PathBuf, detail: String },
    #[error("no corpus {0:?} in store")]
    CorpusNotFound(String),
    #[error("no annotation set {0:?} in store")]
    SetNotFound(String),
    #[error("annotation set {0:?} already exists")]
    SetExists(String),
    #[error("invalid id {0:?}")]
    InvalidId(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
    registry: TagRegistry,
}

fn check_id(id: &str) -> Result<(), StoreError> {
    validate_debate_id(id).map_err(|_| StoreError::InvalidId(id.to_string()))
}

fn list_dir(dir: &Path, suffix: &str, exclude: &[&str]) -> Result<Vec<String>, StoreError> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(StoreError::IoFailure { path: dir.to_path_buf(), source }),
    };
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| StoreError::IoFailure { path: dir.to_path_buf(), source })?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if name.starts_with('.') || exclude.iter().any(|x| name.ends_with(x)) {
            continue;
        }
        if let Some(stem) = name.strip_suffix(suffix) {
            out.push(stem.to_string());
        }
    }
    out.sort();
    Ok(out)
}

impl Store {
    /// Opens an existing store directory, applying `registry.toml` if present.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let meta = std::fs::metadata(&root)
            .map_err(|e| StoreError::Unreadable { path: root.clone(), detail: e.to_string() })?;
        if !meta.is_dir() {
            return Err(StoreError::Unreadable { path: root, detail: "not a directory".into() });
        }
        std::fs::read_dir(&root).map_err(|e| StoreError::Unreadable { path: root.clone(), detail: e.to_string() })?;
        let reg_path = root.join("registry.toml");
        let registry = match std::fs::read_to_string(&reg_path) {
            Ok(src) => load_registry(Some(&src))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => load_registry(None)?,
            Err(source) => return Err(StoreError::IoFailure { path: reg_path, source }),
        };
        Ok(Store { root, registry })
    }

    /// Creates the directory if needed, then opens it.
    pub fn open_or_create(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|source| StoreError::IoFailure { path: root.clone(), source })?;
        Self::open(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn registry(&self) -> &TagRegistry {
        &self.registry
    }

    pub fn corpus_path(&self, debate_id: &str) -> PathBuf {
        self.root.join("corpora").join(format!("{debate_id}.json"))
    }

    pub fn removals_path(&self, debate_id: &str) -> PathBuf {
        self.root.join("corpora").join(format!("{debate_id}.removed.jsonl"))
    }

    pub fn set_path(&self, set_id: &str) -> PathBuf {
        self.root.join("sets").join(format!("{set_id}.jsonl"))
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn list_corpora(&self) -> Result<Vec<String>, StoreError> {
        list_dir(&self.root.join("corpora"), ".json", &[])
    }

    pub fn list_set_ids(&self) -> Result<Vec<String>, StoreError> {
        list_dir(&self.root.join("sets"), ".jsonl", &[".failures.jsonl"])
    }

    /// Headers of every set file, sorted by set id.
    pub fn list_sets(&self) -> Result<Vec<SetHeader>, StoreError> {
        self.list_set_ids()?.iter().map(|id| Ok(read_set_header(&self.set_path(id))?)).collect()
    }

    pub fn has_corpus(&self, debate_id: &str) -> bool {
        check_id(debate_id).is_ok() && self.corpus_path(debate_id).is_file()
    }

    pub fn has_set(&self, set_id: &str) -> bool {
        check_id(set_id).is_ok() && self.set_path(set_id).is_file()
    }

    pub fn load_corpus(&self, debate_id: &str) -> Result<Corpus, StoreError> {
        check_id(debate_id)?;
        let path = self.corpus_path(debate_id);
        if !path.is_file() {
            return Err(StoreError::CorpusNotFound(debate_id.to_string()));
        }
        Ok(corpus::load_corpus(&path)?)
    }

    /// Writes the corpus and its removal log.
    pub fn save_corpus(&self, corpus: &Corpus, removals: &[Removal]) -> Result<(), StoreError> {
        corpus::save_corpus(corpus, &self.corpus_path(corpus.debate_id()))?;
        let log: String =
            removals.iter().map(|r| serde_json::to_string(r).expect("removal serialises") + "\n").collect();
        let path = self.removals_path(corpus.debate_id());
        write_atomic(&path, log.as_bytes()).map_err(|source| StoreError::IoFailure { path, source })
    }

    pub fn set_header(&self, set_id: &str) -> Result<SetHeader, StoreError> {
        check_id(set_id)?;
        let path = self.set_path(set_id);
        if !path.is_file() {
            return Err(StoreError::SetNotFound(set_id.to_string()));
        }
        Ok(read_set_header(&path)?)
    }

    /// Loads a set together with the corpus it is bound to.
    pub fn load_set(&self, set_id: &str) -> Result<(AnnotationSet, Corpus), StoreError> {
        let header = self.set_header(set_id)?;
        let corpus = self.load_corpus(&header.debate_id)?;
        let set = annotation::load_set(&self.set_path(set_id), &self.registry, &corpus)?;
        Ok((set, corpus))
    }

    pub fn save_set(&self, set: &AnnotationSet) -> Result<(), StoreError> {
        Ok(annotation::save_set(set, &self.set_path(set.set_id()))?)
    }

    /// Writes an empty set; fails if one with the same id exists.
    pub fn create_set(&self, header: SetHeader) -> Result<AnnotationSet, StoreError> {
        let set = AnnotationSet::from_header(header)?;
        if self.set_path(set.set_id()).exists() {
            return Err(StoreError::SetExists(set.set_id().to_string()));
        }
        if !self.has_corpus(set.debate_id()) {
            return Err(StoreError::CorpusNotFound(set.debate_id().to_string()));
        }
        self.save_set(&set)?;
        Ok(set)
    }
}
