//! Planning artifacts and their on-disk store.
//!
//! An artifact is either the built-in reference planner or an external
//! program that speaks the planner protocol. Stored artifacts live at
//! `<root>/<env_id>/<hash>.json` with the strategy and planner source
//! written beside them as plain text for inspection.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use planshape_core::EnvId;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::planner::PlannerCommand;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Reference,
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningArtifact {
    pub kind: ArtifactKind,
    pub env_id: EnvId,
    /// Program text for external artifacts, an identifier for reference ones.
    pub source_text: String,
    #[serde(default)]
    pub strategy_text: Option<String>,
    #[serde(default)]
    pub prompt_hash: Option<String>,
    /// Unix seconds.
    pub created_at: u64,
    #[serde(default)]
    pub model_id: Option<String>,
    /// Interpreter the source is run with, e.g. `["python3"]`.
    #[serde(default)]
    pub runtime: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("artifact integrity check failed for {path}: {reason}")]
    Integrity { path: PathBuf, reason: String },
    #[error("artifact {hash} not found for {env}")]
    NotFound { env: EnvId, hash: String },
    #[error("invalid artifact: {0}")]
    Invalid(String),
    #[error("artifact store io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io { path: path.to_path_buf(), source }
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl PlanningArtifact {
    pub fn reference(env_id: EnvId) -> Self {
        Self {
            kind: ArtifactKind::Reference,
            env_id,
            source_text: format!("reference:{}", env_id.as_str()),
            strategy_text: None,
            prompt_hash: None,
            created_at: now_unix(),
            model_id: None,
            runtime: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ArtifactError> {
        match self.kind {
            ArtifactKind::Reference => {
                if self.prompt_hash.is_some() || self.model_id.is_some() {
                    return Err(ArtifactError::Invalid(
                        "reference artifacts carry no prompt hash or model id".into(),
                    ));
                }
            }
            ArtifactKind::External => {
                if self.prompt_hash.is_none() || self.model_id.is_none() {
                    return Err(ArtifactError::Invalid(
                        "external artifacts need a prompt hash and a model id".into(),
                    ));
                }
                if self.runtime.is_empty() {
                    return Err(ArtifactError::Invalid("external artifact has no runtime".into()));
                }
            }
        }
        Ok(())
    }

    /// Writes the source into `dir` and returns the command that runs it.
    pub fn command(&self, dir: &Path) -> Result<PlannerCommand, ArtifactError> {
        if self.kind != ArtifactKind::External {
            return Err(ArtifactError::Invalid("only external artifacts run as processes".into()));
        }
        let (program, rest) = self
            .runtime
            .split_first()
            .ok_or_else(|| ArtifactError::Invalid("external artifact has no runtime".into()))?;
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let name = format!("planner_{}.src", &sha256_hex(self.source_text.as_bytes())[..16]);
        let path = dir.join(name);
        fs::write(&path, &self.source_text).map_err(io_err(&path))?;
        let mut args = rest.to_vec();
        args.push(path.to_string_lossy().into_owned());
        Ok(PlannerCommand { program: program.into(), args })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stored {
    sha256: String,
    artifact: PlanningArtifact,
}

fn digest(artifact: &PlanningArtifact) -> String {
    sha256_hex(serde_json::to_string(artifact).expect("artifact serializes").as_bytes())
}

/// Content-addressed artifact directory. Files are named by prompt hash and
/// carry a checksum of their payload.
#[derive(Clone, Debug)]
pub struct ArtifactStore {
    root: PathBuf,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn env_dir(&self, env: EnvId) -> PathBuf {
        self.root.join(env.as_str())
    }

    pub fn path_for(&self, env: EnvId, hash: &str) -> PathBuf {
        self.env_dir(env).join(format!("{hash}.json"))
    }

    /// Stores an external artifact under its prompt hash and returns the hash.
    pub fn put(&self, artifact: &PlanningArtifact) -> Result<String, ArtifactError> {
        artifact.validate()?;
        let hash = artifact
            .prompt_hash
            .clone()
            .ok_or_else(|| ArtifactError::Invalid("only hashed artifacts can be stored".into()))?;
        if hash.is_empty() || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(ArtifactError::Invalid(format!("prompt hash {hash:?} is not hex")));
        }
        let dir = self.env_dir(artifact.env_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let stored = Stored { sha256: digest(artifact), artifact: artifact.clone() };
        let path = self.path_for(artifact.env_id, &hash);
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_string_pretty(&stored).expect("artifact serializes");
        fs::write(&tmp, body).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        let side = |suffix: &str, text: &str| -> Result<(), ArtifactError> {
            let p = dir.join(format!("{hash}.{suffix}"));
            fs::write(&p, text).map_err(io_err(&p))
        };
        side("strategy.txt", artifact.strategy_text.as_deref().unwrap_or(""))?;
        side("planner_source.txt", &artifact.source_text)?;
        Ok(hash)
    }

    pub fn get(&self, env: EnvId, hash: &str) -> Result<PlanningArtifact, ArtifactError> {
        let path = self.path_for(env, hash);
        if !path.exists() {
            return Err(ArtifactError::NotFound { env, hash: hash.to_string() });
        }
        self.read(&path)
    }

    fn read(&self, path: &Path) -> Result<PlanningArtifact, ArtifactError> {
        let integrity = |reason: String| ArtifactError::Integrity { path: path.to_path_buf(), reason };
        let bytes = fs::read(path).map_err(io_err(path))?;
        let stored: Stored =
            serde_json::from_slice(&bytes).map_err(|e| integrity(format!("unreadable: {e}")))?;
        let actual = digest(&stored.artifact);
        if actual != stored.sha256 {
            return Err(integrity(format!("checksum {actual} does not match {}", stored.sha256)));
        }
        let name_hash = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if stored.artifact.prompt_hash.as_deref() != Some(name_hash) {
            return Err(integrity("file name does not match the prompt hash".into()));
        }
        Ok(stored.artifact)
    }

    /// All stored artifacts for `env`, oldest first.
    pub fn list(&self, env: EnvId) -> Result<Vec<PlanningArtifact>, ArtifactError> {
        let dir = self.env_dir(env);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut out = paths.iter().map(|p| self.read(p)).collect::<Result<Vec<_>, _>>()?;
        out.sort_by_key(|a| a.created_at);
        Ok(out)
    }

    pub fn latest(&self, env: EnvId) -> Result<Option<PlanningArtifact>, ArtifactError> {
        Ok(self.list(env)?.pop())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn external(hash: &str) -> PlanningArtifact {
        PlanningArtifact {
            kind: ArtifactKind::External,
            env_id: EnvId::Lbf,
            source_text: "print('hi')\n".into(),
            strategy_text: Some("go together".into()),
            prompt_hash: Some(hash.into()),
            created_at: 7,
            model_id: Some("m".into()),
            runtime: vec!["python3".into()],
        }
    }

    #[test]
    fn put_then_get_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::new(dir.path());
        let a = external("ab12");
        assert_eq!(store.put(&a).unwrap(), "ab12");
        assert_eq!(store.get(EnvId::Lbf, "ab12").unwrap(), a);
        assert_eq!(store.latest(EnvId::Lbf).unwrap(), Some(a));
        assert!(dir.path().join("lbf/ab12.strategy.txt").exists());
        assert!(dir.path().join("lbf/ab12.planner_source.txt").exists());
    }

    #[test]
    fn empty_store_lists_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ArtifactStore::new(dir.path()).list(EnvId::MpeSpread).unwrap().is_empty());
    }

    #[test]
    fn flipped_byte_is_an_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::new(dir.path());
        store.put(&external("cd34")).unwrap();
        let path = store.path_for(EnvId::Lbf, "cd34");
        let mut bytes = fs::read(&path).unwrap();
        let at = bytes.windows(2).position(|w| w == b"hi").unwrap();
        bytes[at] ^= 0x01;
        fs::write(&path, bytes).unwrap();
        match store.get(EnvId::Lbf, "cd34") {
            Err(ArtifactError::Integrity { path: p, .. }) => assert_eq!(p, path),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn provenance_rules() {
        assert!(PlanningArtifact::reference(EnvId::Lbf).validate().is_ok());
        let mut a = external("ef");
        a.model_id = None;
        assert!(a.validate().is_err());
        let mut r = PlanningArtifact::reference(EnvId::Lbf);
        r.prompt_hash = Some("00".into());
        assert!(r.validate().is_err());
    }
}
