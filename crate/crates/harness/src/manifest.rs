//! Experiment directories: a manifest plus the artifacts it indexes.

use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::fsutil;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Original,
    Probe,
    Edit,
    Mask,
    Attention,
    Report,
    /// A copy of an external input, so the directory is self-contained.
    Input,
    Plot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the experiment directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub role: Role,
}

/// Which edit a sweep repeats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepTarget {
    EditAdd,
    EditNonrigid,
}

/// Everything a command needs besides the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Job {
    Generate {
        prompt: String,
    },
    ProbeVitality,
    ProbeProminence,
    EditAdd {
        src: String,
        trg: String,
    },
    EditNonrigid {
        src: String,
        trg: String,
        use_vital: bool,
    },
    /// Inverts `video` (relative path of an input artifact); edits it when
    /// `trg` is set.
    Invert {
        video: String,
        prompt: String,
        trg: Option<String>,
        nonrigid: bool,
        use_vital: bool,
    },
    Sweep {
        target: SweepTarget,
        src: String,
        trg: String,
        t_i: Vec<usize>,
        t_e: Vec<usize>,
    },
    Evaluate {
        source: String,
        target: String,
        src: String,
        trg: String,
    },
    Report {
        inputs: Vec<String>,
    },
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Generate { .. } => "generate",
            Job::ProbeVitality => "probe-vitality",
            Job::ProbeProminence => "probe-prominence",
            Job::EditAdd { .. } => "edit-add",
            Job::EditNonrigid { .. } => "edit-nonrigid",
            Job::Invert { .. } => "invert",
            Job::Sweep { .. } => "sweep",
            Job::Evaluate { .. } => "evaluate",
            Job::Report { .. } => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    /// Hash of the job and config, so identical runs share an id.
    pub id: String,
    /// RFC 3339 UTC; the only field that differs between identical runs.
    pub created_at: String,
    pub job: Job,
    pub config: ExperimentConfig,
    pub artifacts: Vec<Artifact>,
}

/// Deterministic run id: first 16 hex digits of SHA-256 over the job and config.
pub fn run_id(job: &Job, config: &ExperimentConfig) -> Result<String> {
    let text = fsutil::to_stable_json(&(job, config))?;
    Ok(fsutil::sha256_hex(text.as_bytes())[..16].to_string())
}

/// Rejects absolute paths and `..` so artifacts stay inside the directory.
pub fn check_relative(path: &str) -> Result<()> {
    let p = Path::new(path);
    let ok = !path.is_empty()
        && p.components().all(|c| matches!(c, Component::Normal(_)));
    if ok {
        Ok(())
    } else {
        Err(HarnessError::Manifest(format!("artifact path {path:?} escapes the experiment directory")))
    }
}

/// Collects artifacts while a command writes into its directory.
#[derive(Debug)]
pub struct ExperimentDir {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl ExperimentDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Records an already written file.
    pub fn record(&mut self, rel: &str, role: Role) -> Result<()> {
        check_relative(rel)?;
        let sha256 = fsutil::sha256_file(&self.path(rel))?;
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            sha256,
            role,
        });
        Ok(())
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8], role: Role) -> Result<()> {
        check_relative(rel)?;
        fsutil::write_bytes(&self.path(rel), bytes)?;
        self.record(rel, role)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T, role: Role) -> Result<()> {
        self.write_bytes(rel, fsutil::to_stable_json(value)?.as_bytes(), role)
    }

    pub fn write_tensor(&mut self, rel: &str, t: &crate::tensor_file::Tensor, role: Role) -> Result<()> {
        let bytes = crate::tensor_file::encode(t).map_err(|e| HarnessError::format(self.path(rel), e))?;
        self.write_bytes(rel, &bytes, role)
    }

    pub fn write_frames(&mut self, rel_dir: &str, video: &layerkv::Video, role: Role) -> Result<()> {
        for f in 0..video.frames() {
            let rel = format!("{rel_dir}/{}", crate::frames::frame_name(f));
            crate::frames::save_png(&crate::frames::frame_image(video, f), &self.path(&rel))?;
            self.record(&rel, role)?;
        }
        Ok(())
    }

    /// Writes the manifest last, once every artifact exists.
    pub fn finish(mut self, job: Job, config: ExperimentConfig) -> Result<Manifest> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            id: run_id(&job, &config)?,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            job,
            config,
            artifacts: self.artifacts,
        };
        fsutil::write_json(&self.root.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}

impl Manifest {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let m: Manifest =
            serde_json::from_slice(bytes).map_err(|e| HarnessError::Manifest(format!("invalid manifest: {e}")))?;
        if m.version != MANIFEST_VERSION {
            return Err(HarnessError::Manifest(format!("unsupported manifest version {}", m.version)));
        }
        for a in &m.artifacts {
            check_relative(&a.path)?;
        }
        Ok(m)
    }

    /// Reads `<dir>/manifest.json`, or the file itself when given one.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let (file, dir) = if path.is_dir() {
            (path.join(MANIFEST_FILE), path.to_path_buf())
        } else {
            (path.to_path_buf(), path.parent().unwrap_or(Path::new(".")).to_path_buf())
        };
        Ok((Self::parse(&fsutil::read_bytes(&file)?)?, dir))
    }

    /// Every artifact exists and matches its checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        let mut bad = Vec::new();
        for a in &self.artifacts {
            match fsutil::sha256_file(&dir.join(&a.path)) {
                Ok(h) if h == a.sha256 => {}
                Ok(_) => bad.push(format!("{} (checksum mismatch)", a.path)),
                Err(_) => bad.push(format!("{} (missing)", a.path)),
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Manifest(format!("artifacts failed verification: {}", bad.join(", "))))
        }
    }

    pub fn artifacts_with_role(&self, role: Role) -> impl Iterator<Item = &Artifact> {
        self.artifacts.iter().filter(move |a| a.role == role)
    }
}
