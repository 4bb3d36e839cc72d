//! In-memory registry of datasets, models and training jobs with
//! write-through persistence to an optional data directory.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use policyscope::data::{load_dataset, Dataset};
use policyscope::forecast::{ModelArtifact, ModelVariant, TrainingMetrics};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt stored entry {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Writes via a temporary file and rename so readers never see partial files.
fn write_atomic(path: &Path, contents: &str) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone)]
pub struct StoredDataset {
    pub id: String,
    pub dataset: Arc<Dataset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistryEntry {
    pub id: String,
    pub dataset_id: String,
    pub target_country: String,
    pub variant: ModelVariant,
    pub cluster_countries: Vec<String>,
    pub seed: u64,
    pub created_at: String,
    /// Artifact location relative to the data directory.
    pub artifact: String,
    pub metrics: TrainingMetrics,
}

#[derive(Debug, Clone)]
pub struct RegisteredModel {
    pub entry: ModelRegistryEntry,
    pub artifact: Arc<ModelArtifact>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobHandle {
    pub id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

#[derive(Debug, Default)]
struct Registry {
    datasets: HashMap<String, StoredDataset>,
    models: BTreeMap<String, RegisteredModel>,
    jobs: HashMap<String, JobHandle>,
    training_queues: HashMap<String, Arc<tokio::sync::Mutex<()>>>,
}

/// Shared service state. Cloning is cheap.
#[derive(Debug, Clone)]
pub struct Store {
    data_dir: Option<PathBuf>,
    registry: Arc<RwLock<Registry>>,
}

impl Store {
    /// Opens a store, re-registering anything persisted under `data_dir`.
    pub fn open(data_dir: Option<PathBuf>) -> Result<Self, StoreError> {
        let store = Self { data_dir, registry: Arc::default() };
        if let Some(dir) = &store.data_dir {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            store.rescan(dir)?;
        }
        Ok(store)
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    fn rescan(&self, dir: &Path) -> Result<(), StoreError> {
        let datasets = dir.join("datasets");
        if datasets.is_dir() {
            for entry in fs::read_dir(&datasets).map_err(io_err(&datasets))? {
                let path = entry.map_err(io_err(&datasets))?.path();
                let Some(id) = path.file_name().and_then(|n| n.to_str()).map(str::to_string) else {
                    continue;
                };
                if !path.is_dir() {
                    continue;
                }
                let cases = read(&path.join("cases.csv"))?;
                let policy = read(&path.join("policy.csv"))?;
                let dataset = load_dataset(&cases, &policy)
                    .map_err(|e| StoreError::Corrupt { path: path.clone(), message: e.to_string() })?;
                self.write().datasets.insert(id.clone(), StoredDataset { id, dataset: Arc::new(dataset) });
            }
        }
        let models = dir.join("models");
        if models.is_dir() {
            for entry in fs::read_dir(&models).map_err(io_err(&models))? {
                let path = entry.map_err(io_err(&models))?.path();
                let entry_path = path.join("entry.json");
                if !entry_path.is_file() {
                    continue;
                }
                let entry: ModelRegistryEntry = parse_json(&entry_path)?;
                let artifact_path = dir.join(&entry.artifact);
                let artifact = ModelArtifact::from_json(&read(&artifact_path)?)
                    .map_err(|e| StoreError::Corrupt { path: artifact_path.clone(), message: e.to_string() })?;
                self.write().models.insert(entry.id.clone(), RegisteredModel { entry, artifact: Arc::new(artifact) });
            }
        }
        Ok(())
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Registry> {
        self.registry.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Registry> {
        self.registry.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn add_dataset(
        &self,
        id: String,
        dataset: Dataset,
        cases_csv: &str,
        policy_csv: &str,
    ) -> Result<StoredDataset, StoreError> {
        if let Some(dir) = &self.data_dir {
            let base = dir.join("datasets").join(&id);
            write_atomic(&base.join("cases.csv"), cases_csv)?;
            write_atomic(&base.join("policy.csv"), policy_csv)?;
        }
        let stored = StoredDataset { id: id.clone(), dataset: Arc::new(dataset) };
        self.write().datasets.insert(id, stored.clone());
        Ok(stored)
    }

    pub fn dataset(&self, id: &str) -> Option<StoredDataset> {
        self.read().datasets.get(id).cloned()
    }

    /// Persists the artifact, then makes the model visible to readers.
    pub fn register_model(&self, entry: ModelRegistryEntry, artifact: ModelArtifact) -> Result<(), StoreError> {
        if let Some(dir) = &self.data_dir {
            write_atomic(&dir.join(&entry.artifact), &artifact.to_json())?;
            let entry_json = serde_json::to_string_pretty(&entry).expect("entry serializes");
            write_atomic(&dir.join("models").join(&entry.id).join("entry.json"), &entry_json)?;
        }
        self.write().models.insert(entry.id.clone(), RegisteredModel { entry, artifact: Arc::new(artifact) });
        Ok(())
    }

    pub fn model(&self, id: &str) -> Option<RegisteredModel> {
        self.read().models.get(id).cloned()
    }

    pub fn models(&self) -> Vec<ModelRegistryEntry> {
        self.read().models.values().map(|m| m.entry.clone()).collect()
    }

    pub fn insert_job(&self, job: JobHandle) {
        self.write().jobs.insert(job.id.clone(), job);
    }

    pub fn job(&self, id: &str) -> Option<JobHandle> {
        self.read().jobs.get(id).cloned()
    }

    /// Updates a job unless it already reached a terminal state.
    pub fn update_job(&self, id: &str, status: JobStatus, detail: String, model_id: Option<String>) {
        let mut reg = self.write();
        if let Some(job) = reg.jobs.get_mut(id) {
            if !job.status.is_terminal() {
                job.status = status;
                job.detail = detail;
                job.model_id = model_id;
            }
        }
    }

    /// FIFO lock serializing training jobs on one dataset.
    pub fn training_queue(&self, dataset_id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.write().training_queues.entry(dataset_id.to_string()).or_default().clone()
    }
}

fn read(path: &Path) -> Result<String, StoreError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| StoreError::Corrupt { path: path.to_path_buf(), message: e.to_string() })
}
