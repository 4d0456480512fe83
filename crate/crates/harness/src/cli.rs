//! Argument parsing and dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::commands::{execute, job_mode};
use crate::config::{parse_layer_list, parse_value_list, ExperimentConfig, Overrides};
use crate::error::{HarnessError, Result};
use crate::manifest::{ExperimentDir, Job, Manifest, Role, SweepTarget};

#[derive(Debug, Parser)]
#[command(name = "layerkv", version, about = "Layer-informed key/value injection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML experiment config; unset keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Experiment directory (default: experiments/<command>-<id>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EditFlags {
    #[arg(long = "t-i")]
    pub t_i: Option<usize>,
    #[arg(long = "t-e")]
    pub t_e: Option<usize>,
    #[arg(long = "t-mask")]
    pub t_mask: Option<f64>,
    /// Injected layers, e.g. `0,1,4-6`.
    #[arg(long)]
    pub layers: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample one video from a prompt.
    Generate {
        #[arg(long)]
        prompt: String,
        #[command(flatten)]
        common: Common,
    },
    /// Bypass and RoPE-drop sweeps with the vitality report.
    ProbeVitality {
        #[command(flatten)]
        common: Common,
    },
    /// RoPE-drop sweep with foreground/background prominence.
    ProbeProminence {
        #[command(flatten)]
        common: Common,
    },
    /// Object addition by masked injection into vital layers.
    EditAdd {
        #[arg(long)]
        src: String,
        #[arg(long)]
        trg: String,
        #[command(flatten)]
        edit: EditFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Non-rigid edit by injection into non-vital layers.
    EditNonrigid {
        #[arg(long)]
        src: String,
        #[arg(long)]
        trg: String,
        /// Inject into the vital layers instead (ablation).
        #[arg(long)]
        use_vital: bool,
        #[command(flatten)]
        edit: EditFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Invert a video tensor, re-sample it, and optionally edit it.
    Invert {
        /// Video tensor file `[F, H, W, 3]`.
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        trg: Option<String>,
        #[arg(long)]
        nonrigid: bool,
        #[arg(long)]
        use_vital: bool,
        #[command(flatten)]
        edit: EditFlags,
        #[command(flatten)]
        common: Common,
    },
    /// One edit per (T_i, T_e) combination, run concurrently.
    Sweep {
        #[arg(value_enum)]
        target: SweepTarget,
        #[arg(long)]
        src: String,
        #[arg(long)]
        trg: String,
        /// Comma-separated T_i values.
        #[arg(long = "t-i")]
        t_i: String,
        /// Comma-separated T_e values.
        #[arg(long = "t-e")]
        t_e: String,
        #[arg(long = "t-mask")]
        t_mask: Option<f64>,
        #[arg(long)]
        layers: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Metrics for a source/target pair of video tensors.
    Evaluate {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        src: String,
        #[arg(long)]
        trg: String,
        #[command(flatten)]
        common: Common,
    },
    /// Plots from vitality or prominence report files.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run the experiment a manifest describes.
    Rerun {
        /// Manifest file or experiment directory.
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn file_name(p: &Path) -> Result<String> {
    p.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .ok_or_else(|| HarnessError::Usage(format!("{} has no file name", p.display())))
}

fn base_config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn overrides(common: &Common, edit: Option<&EditFlags>) -> Result<Overrides> {
    Ok(Overrides {
        seed: common.seed,
        workers: common.workers,
        t_i: edit.and_then(|e| e.t_i),
        t_e: edit.and_then(|e| e.t_e),
        t_mask: edit.and_then(|e| e.t_mask),
        layers: edit
            .and_then(|e| e.layers.as_deref())
            .map(parse_layer_list)
            .transpose()?,
    })
}

fn out_dir(common: &Common, job: &Job, config: &ExperimentConfig) -> Result<PathBuf> {
    match &common.out {
        Some(p) => Ok(p.clone()),
        None => Ok(PathBuf::from("experiments").join(format!(
            "{}-{}",
            job.name(),
            crate::manifest::run_id(job, config)?
        ))),
    }
}

/// Files copied into the experiment directory before the job runs.
type Staging = Vec<(PathBuf, String)>;

/// Builds the job, its resolved config and the inputs to stage.
fn plan(command: Command) -> Result<(Job, ExperimentConfig, Common, Staging)> {
    let no_edit: Option<&EditFlags> = None;
    let (job, common, edit, staging) = match command {
        Command::Generate { prompt, common } => (Job::Generate { prompt }, common, None, vec![]),
        Command::ProbeVitality { common } => (Job::ProbeVitality, common, None, vec![]),
        Command::ProbeProminence { common } => (Job::ProbeProminence, common, None, vec![]),
        Command::EditAdd { src, trg, edit, common } => (Job::EditAdd { src, trg }, common, Some(edit), vec![]),
        Command::EditNonrigid {
            src,
            trg,
            use_vital,
            edit,
            common,
        } => (Job::EditNonrigid { src, trg, use_vital }, common, Some(edit), vec![]),
        Command::Invert {
            video,
            prompt,
            trg,
            nonrigid,
            use_vital,
            edit,
            common,
        } => {
            let rel = format!("inputs/{}", file_name(&video)?);
            let job = Job::Invert {
                video: rel.clone(),
                prompt,
                trg,
                nonrigid,
                use_vital,
            };
            (job, common, Some(edit), vec![(video, rel)])
        }
        Command::Sweep {
            target,
            src,
            trg,
            t_i,
            t_e,
            t_mask,
            layers,
            common,
        } => {
            let job = Job::Sweep {
                target,
                src,
                trg,
                t_i: parse_value_list(&t_i)?,
                t_e: parse_value_list(&t_e)?,
            };
            let edit = EditFlags {
                t_i: None,
                t_e: None,
                t_mask,
                layers,
            };
            (job, common, Some(edit), vec![])
        }
        Command::Evaluate {
            source,
            target,
            src,
            trg,
            common,
        } => {
            let (s, t) = (format!("inputs/source_{}", file_name(&source)?), format!("inputs/target_{}", file_name(&target)?));
            let job = Job::Evaluate {
                source: s.clone(),
                target: t.clone(),
                src,
                trg,
            };
            (job, common, None, vec![(source, s), (target, t)])
        }
        Command::Report { inputs, common } => {
            let mut staging = Vec::new();
            for (i, p) in inputs.iter().enumerate() {
                staging.push((p.clone(), format!("inputs/{i:02}_{}", file_name(p)?)));
            }
            let job = Job::Report {
                inputs: staging.iter().map(|(_, r)| r.clone()).collect(),
            };
            (job, common, None, staging)
        }
        Command::Rerun { .. } => unreachable!("rerun is dispatched separately"),
    };
    let mut config = base_config(&common)?;
    let (mode, use_vital) = job_mode(&job);
    config.apply(&overrides(&common, edit.as_ref().or(no_edit))?, mode, use_vital);
    Ok((job, config, common, staging))
}

fn run_job(job: Job, config: ExperimentConfig, out: &Path, staging: &[(PathBuf, String)]) -> Result<Manifest> {
    let mut dir = ExperimentDir::create(out)?;
    for (src, rel) in staging {
        let bytes = crate::fsutil::read_bytes(src)?;
        dir.write_bytes(rel, &bytes, Role::Input)?;
    }
    execute(job, config, dir)
}

/// Re-runs from a manifest, copying its input artifacts.
pub fn rerun(manifest: &Path, out: &Path) -> Result<Manifest> {
    let (m, src_dir) = Manifest::load(manifest)?;
    let staging: Vec<(PathBuf, String)> = m
        .artifacts_with_role(Role::Input)
        .map(|a| (src_dir.join(&a.path), a.path.clone()))
        .collect();
    if src_dir.canonicalize().ok() == out.canonicalize().ok() {
        return Err(HarnessError::Usage("rerun needs an --out directory different from the source".into()));
    }
    run_job(m.job, m.config, out, &staging)
}

/// Parses arguments and runs; returns the manifest of the finished run.
pub fn dispatch(cli: Cli) -> Result<(Manifest, PathBuf)> {
    if let Command::Rerun { manifest, common } = cli.command {
        let out = common
            .out
            .ok_or_else(|| HarnessError::Usage("rerun requires --out".into()))?;
        return Ok((rerun(&manifest, &out)?, out));
    }
    let (job, config, common, staging) = plan(cli.command)?;
    let out = out_dir(&common, &job, &config)?;
    Ok((run_job(job, config, &out, &staging)?, out))
}

/// Full CLI behaviour: returns the exit code and the line to print.
pub fn run<I, T>(args: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                return (0, e.to_string());
            }
            let first = e
                .to_string()
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ")
                .to_string();
            let err = HarnessError::Usage(first);
            return (err.exit_code(), err.line());
        }
    };
    match dispatch(cli) {
        Ok((m, out)) => (
            0,
            format!("ok command={} id={} dir={}", m.job.name(), m.id, out.display()),
        ),
        Err(e) => (e.exit_code(), e.line()),
    }
}
