//! Command execution. Each job writes one experiment directory.

use std::collections::BTreeMap;
use std::path::Path;

use layerkv::edit::{object_addition, run_edit_from, EditMode, EditOutput};
use layerkv::metrics::{evaluate_run, MetricReport};
use layerkv::probe::{
    generate_originals, run_probe_sweep_with, vitality_score, ProbeMode, ProbeSweep, PromptSet, ThumbnailEmbedder,
    VitalityReport,
};
use layerkv::prominence::{build_prominence_report, psnr, ForegroundProvider, LuminanceThreshold, ProminenceReport};
use layerkv::sampler::no_hooks;
use layerkv::{Error, Sampler, Video};
use serde::Serialize;

use crate::config::{ExperimentConfig, Runtime};
use crate::error::{HarnessError, Result};
use crate::manifest::{ExperimentDir, Job, Manifest, Role, SweepTarget};
use crate::plots;
use crate::tensor_file::{self, Tensor};

/// Edit mode and vital-layer switch a job validates against.
pub fn job_mode(job: &Job) -> (Option<EditMode>, bool) {
    match job {
        Job::EditAdd { .. } => (Some(EditMode::ObjectAddition), false),
        Job::EditNonrigid { use_vital, .. } => (Some(EditMode::NonRigid), *use_vital),
        Job::Invert {
            trg: Some(_),
            nonrigid,
            use_vital,
            ..
        } => (
            Some(if *nonrigid { EditMode::NonRigid } else { EditMode::ObjectAddition }),
            *use_vital,
        ),
        Job::Sweep { target, .. } => match target {
            SweepTarget::EditAdd => (Some(EditMode::ObjectAddition), false),
            SweepTarget::EditNonrigid => (Some(EditMode::NonRigid), false),
        },
        _ => (None, false),
    }
}

/// Validates the config, runs the job in `dir` and writes the manifest.
/// Inputs referenced by the job must already be staged in `dir`.
pub fn execute(job: Job, config: ExperimentConfig, dir: ExperimentDir) -> Result<Manifest> {
    let (mode, use_vital) = job_mode(&job);
    // A sweep checks each combination itself and records violations.
    let sweep = matches!(job, Job::Sweep { .. });
    config.validate(if sweep { None } else { mode }, use_vital)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.workers)
        .build()
        .map_err(|e| HarnessError::Usage(format!("thread pool: {e}")))?;
    let rt = config.runtime()?;
    pool.install(|| execute_with(job, config, &rt, dir))
}

fn execute_with(job: Job, config: ExperimentConfig, rt: &Runtime, mut dir: ExperimentDir) -> Result<Manifest> {
    let sampler = rt.sampler()?;
    log::info!("{} -> {}", job.name(), dir.root().display());
    match &job {
        Job::Generate { prompt } => generate(&sampler, &config, prompt, &mut dir)?,
        Job::ProbeVitality => probe_vitality(&sampler, &config, &mut dir)?,
        Job::ProbeProminence => probe_prominence(&sampler, &config, &mut dir)?,
        Job::EditAdd { src, trg } => {
            let plan = config.plan(EditMode::ObjectAddition, false);
            let out = object_addition(&sampler, src, trg, config.run.seed, &plan, None)?;
            write_edit(&sampler, &config, src, trg, &out, &mut dir)?;
        }
        Job::EditNonrigid { src, trg, use_vital } => {
            let plan = config.plan(EditMode::NonRigid, *use_vital);
            let z0 = sampler.initial_noise(config.run.seed);
            let out = run_edit_from(&sampler, z0, src, trg, &plan)?;
            write_edit(&sampler, &config, src, trg, &out, &mut dir)?;
        }
        Job::Invert {
            video,
            prompt,
            trg,
            nonrigid,
            use_vital,
        } => invert(&sampler, &config, video, prompt, trg.as_deref(), *nonrigid, *use_vital, &mut dir)?,
        Job::Sweep {
            target,
            src,
            trg,
            t_i,
            t_e,
        } => sweep(rt, &config, *target, src, trg, t_i, t_e, &mut dir)?,
        Job::Evaluate {
            source,
            target,
            src,
            trg,
        } => evaluate(&config, source, target, src, trg, &mut dir)?,
        Job::Report { inputs } => report(inputs, &mut dir)?,
    }
    dir.finish(job, config)
}

fn write_video(dir: &mut ExperimentDir, name: &str, video: &Video, role: Role) -> Result<()> {
    dir.write_tensor(&format!("tensors/{name}.lkvt"), &Tensor::from_video(video), role)?;
    dir.write_frames(&format!("frames/{name}"), video, role)
}

fn load_video(dir: &ExperimentDir, rel: &str) -> Result<Video> {
    Ok(tensor_file::read(&dir.path(rel))?.into_video()?)
}

fn generate(sampler: &Sampler<'_>, config: &ExperimentConfig, prompt: &str, dir: &mut ExperimentDir) -> Result<()> {
    let out = sampler.sample(prompt, config.run.seed, &no_hooks)?;
    dir.write_tensor("tensors/latent.lkvt", &Tensor::from_latent(&out.latent), Role::Original)?;
    write_video(dir, "video", &out.video, Role::Original)
}

fn probe_prompts(config: &ExperimentConfig) -> layerkv::Result<PromptSet> {
    let all = layerkv::prompts::probe_prompts();
    if config.probe.n_p > all.len() {
        return Err(Error::config(format!(
            "n_p = {} exceeds the {} bundled probe prompts",
            config.probe.n_p,
            all.len()
        )));
    }
    PromptSet::with_base_seed(all.into_iter().take(config.probe.n_p), config.probe.base_seed)
}

#[derive(Serialize)]
struct SweepSummary {
    mode: ProbeMode,
    prompts: Vec<String>,
    cells: usize,
    failures: BTreeMap<String, String>,
}

fn write_sweep(dir: &mut ExperimentDir, sweep: &ProbeSweep, write_originals: bool) -> Result<()> {
    if write_originals {
        for (p, v) in sweep.originals.iter().enumerate() {
            write_video(dir, &format!("original/p{p:02}"), v, Role::Original)?;
        }
    }
    for (&(p, l), v) in &sweep.probes {
        let rel = format!("tensors/probe/{}_p{p:02}_l{l:02}.lkvt", sweep.mode.name());
        dir.write_tensor(&rel, &Tensor::from_video(v), Role::Probe)?;
    }
    let summary = SweepSummary {
        mode: sweep.mode,
        prompts: sweep.prompts.prompts().to_vec(),
        cells: sweep.probes.len(),
        failures: sweep
            .failures
            .iter()
            .map(|(&(p, l), e)| (format!("p{p:02}_l{l:02}"), e.clone()))
            .collect(),
    };
    dir.write_json(&format!("sweep_{}.json", sweep.mode.name()), &summary, Role::Report)
}

fn probe_vitality(sampler: &Sampler<'_>, config: &ExperimentConfig, dir: &mut ExperimentDir) -> Result<()> {
    let prompts = probe_prompts(config)?;
    let originals = generate_originals(sampler, &prompts)?;
    let bypass = run_probe_sweep_with(sampler, ProbeMode::Bypass, &prompts, originals.clone())?;
    let rope = run_probe_sweep_with(sampler, ProbeMode::RopeDrop, &prompts, originals)?;
    write_sweep(dir, &bypass, true)?;
    write_sweep(dir, &rope, false)?;
    let n = sampler.model.num_layers();
    let emb = ThumbnailEmbedder::default();
    let vl = vitality_score(&bypass.originals, &bypass.probes, n, &emb)?;
    let vr = vitality_score(&rope.originals, &rope.probes, n, &emb)?;
    let report = VitalityReport::new(vl, vr, prompts.len(), layerkv::probe::PerceptualEmbedder::tag(&emb))?;
    dir.write_json("vitality.json", &report, Role::Report)?;
    write_vitality_plots(dir, &report)
}

fn write_vitality_plots(dir: &mut ExperimentDir, report: &VitalityReport) -> Result<()> {
    dir.write_bytes("plots/vitality.svg", plots::vitality_curves(report)?.as_bytes(), Role::Plot)?;
    dir.write_bytes("plots/correlation.svg", plots::correlation_scatter(report)?.as_bytes(), Role::Plot)
}

fn probe_prominence(sampler: &Sampler<'_>, config: &ExperimentConfig, dir: &mut ExperimentDir) -> Result<()> {
    let prompts = probe_prompts(config)?;
    let originals = generate_originals(sampler, &prompts)?;
    let provider = LuminanceThreshold {
        threshold: config.prominence.fg_threshold,
    };
    let masks = prompts
        .iter()
        .zip(&originals)
        .map(|((p, _), v)| provider.masks(p, layerkv::prompts::referent(p), v))
        .collect::<layerkv::Result<Vec<_>>>()?;
    let rope = run_probe_sweep_with(sampler, ProbeMode::RopeDrop, &prompts, originals)?;
    write_sweep(dir, &rope, true)?;
    for (p, m) in masks.iter().enumerate() {
        let (f, h, w) = m.dims();
        let t = Tensor::new(vec![f, h, w], m.values().iter().map(|&b| b as u8 as f32).collect())
            .map_err(|e| HarnessError::format(dir.path("masks"), e))?;
        dir.write_tensor(&format!("tensors/fg_mask/p{p:02}.lkvt"), &t, Role::Mask)?;
    }
    let report = build_prominence_report(
        &rope.originals,
        &rope.probes,
        &masks,
        sampler.model.num_layers(),
        config.prominence.c,
        config.prominence.normalization,
    )?;
    dir.write_json("prominence.json", &report, Role::Report)?;
    dir.write_bytes("plots/prominence.svg", plots::prominence_curve(&report)?.as_bytes(), Role::Plot)
}

#[derive(Serialize)]
struct EditSummary<'a> {
    source_prompt: &'a str,
    target_prompt: &'a str,
    delta_indices: &'a [usize],
    delta_words: &'a [String],
    injected_layers: Vec<usize>,
    mask_tokens: Option<usize>,
    mask_steps: Option<&'a [usize]>,
    divergence: &'a [f64],
    warnings: &'a [String],
}

fn write_edit(
    sampler: &Sampler<'_>,
    config: &ExperimentConfig,
    src: &str,
    trg: &str,
    out: &EditOutput,
    dir: &mut ExperimentDir,
) -> Result<()> {
    write_video(dir, "source", &out.source, Role::Edit)?;
    write_video(dir, "target", &out.target, Role::Edit)?;
    dir.write_tensor("tensors/source_latent.lkvt", &Tensor::from_latent(&out.source_latent), Role::Edit)?;
    dir.write_tensor("tensors/target_latent.lkvt", &Tensor::from_latent(&out.target_latent), Role::Edit)?;
    let grid = sampler.model.config().grid();
    let dims = (grid.frames, grid.height, grid.width);
    let fhw = vec![grid.frames, grid.height, grid.width];
    let tensors_dir = dir.path("tensors");
    let to_tensor = |data: Vec<f32>| Tensor::new(fhw.clone(), data).map_err(|e| HarnessError::format(&tensors_dir, e));
    if let Some(mask) = &out.mask {
        let m = to_tensor(mask.mask.iter().map(|&b| b as u8 as f32).collect())?;
        dir.write_tensor("tensors/mask.lkvt", &m, Role::Mask)?;
        let raw = to_tensor(mask.raw.iter().map(|&v| v as f32).collect())?;
        dir.write_tensor("tensors/mask_raw.lkvt", &raw, Role::Mask)?;
    }
    for (&(layer, step), a) in &out.attention {
        let (r, c) = a.weights.dim();
        let t = Tensor::new(vec![r, c], a.weights.iter().copied().collect())
            .map_err(|e| HarnessError::format(dir.path("attention"), e))?;
        dir.write_tensor(&format!("tensors/attention/l{layer:02}_s{step:02}.lkvt"), &t, Role::Attention)?;
    }
    if !out.delta.indices.is_empty() {
        for (step, img) in plots::attention_overlays(&out.target, &out.attention, &out.delta.indices, dims)? {
            let rel = format!("plots/attention_s{step:02}.png");
            crate::frames::save_png(&img, &dir.path(&rel))?;
            dir.record(&rel, Role::Plot)?;
        }
    }
    let plan = config.plan(
        if out.mask.is_some() { EditMode::ObjectAddition } else { EditMode::NonRigid },
        false,
    );
    let summary = EditSummary {
        source_prompt: src,
        target_prompt: trg,
        delta_indices: &out.delta.indices,
        delta_words: &out.delta.words,
        injected_layers: plan.injected_layers().to_vec(),
        mask_tokens: out.mask.as_ref().map(|m| m.count()),
        mask_steps: out.mask.as_ref().map(|m| m.steps.as_slice()),
        divergence: &out.divergence,
        warnings: &out.warnings,
    };
    dir.write_json("edit.json", &summary, Role::Report)?;
    let emb = config.embedder();
    let sample = evaluate_run(&out.source, &out.target, src, trg, &emb, None)?;
    let report = MetricReport::from_samples(vec![sample], config.metrics.clip_all_order, layerkv::metrics::Embedder::tag(&emb))?;
    dir.write_json("metrics.json", &report, Role::Report)
}

#[derive(Serialize)]
struct InversionSummary {
    prompt: String,
    psnr_db: f64,
}

#[allow(clippy::too_many_arguments)]
fn invert(
    sampler: &Sampler<'_>,
    config: &ExperimentConfig,
    video: &str,
    prompt: &str,
    trg: Option<&str>,
    nonrigid: bool,
    use_vital: bool,
    dir: &mut ExperimentDir,
) -> Result<()> {
    let input = load_video(dir, video)?;
    let z0 = sampler.invert_video(&input, prompt)?;
    dir.write_tensor("tensors/inverted_latent.lkvt", &Tensor::from_latent(&z0), Role::Original)?;
    let recon = sampler.sample_from(z0.clone(), prompt, &no_hooks)?;
    write_video(dir, "reconstruction", &recon.video, Role::Original)?;
    let summary = InversionSummary {
        prompt: prompt.to_string(),
        psnr_db: psnr(&input, &recon.video)?,
    };
    dir.write_json("inversion.json", &summary, Role::Report)?;
    if let Some(trg) = trg {
        let mode = if nonrigid { EditMode::NonRigid } else { EditMode::ObjectAddition };
        let out = run_edit_from(sampler, z0, prompt, trg, &config.plan(mode, use_vital))?;
        write_edit(sampler, config, prompt, trg, &out, dir)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SubRun {
    t_i: usize,
    t_e: usize,
    dir: String,
    status: &'static str,
    error_class: Option<String>,
    error: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    rt: &Runtime,
    config: &ExperimentConfig,
    target: SweepTarget,
    src: &str,
    trg: &str,
    t_i: &[usize],
    t_e: &[usize],
    dir: &mut ExperimentDir,
) -> Result<()> {
    use rayon::prelude::*;
    if t_i.is_empty() || t_e.is_empty() {
        return Err(Error::config("sweep axes must be non-empty").into());
    }
    let combos: Vec<(usize, usize)> = t_i.iter().flat_map(|&a| t_e.iter().map(move |&b| (a, b))).collect();
    let root = dir.root().to_path_buf();
    let results: Vec<(SubRun, Option<Manifest>)> = combos
        .par_iter()
        .map(|&(ti, te)| {
            let rel = format!("runs/ti{ti:02}_te{te:02}");
            let mut cfg = config.clone();
            cfg.edit.t_i = ti;
            cfg.edit.t_e = te;
            let job = match target {
                SweepTarget::EditAdd => Job::EditAdd {
                    src: src.into(),
                    trg: trg.into(),
                },
                SweepTarget::EditNonrigid => Job::EditNonrigid {
                    src: src.into(),
                    trg: trg.into(),
                    use_vital: false,
                },
            };
            let run = || -> Result<Manifest> {
                let (mode, use_vital) = job_mode(&job);
                cfg.validate(mode, use_vital)?;
                let sub = ExperimentDir::create(&root.join(&rel))?;
                execute_with(job, cfg.clone(), rt, sub)
            };
            match run() {
                Ok(m) => (
                    SubRun {
                        t_i: ti,
                        t_e: te,
                        dir: rel,
                        status: "ok",
                        error_class: None,
                        error: None,
                    },
                    Some(m),
                ),
                Err(e) => {
                    log::warn!("sub-run T_i={ti} T_e={te} failed: {e}");
                    (
                        SubRun {
                            t_i: ti,
                            t_e: te,
                            dir: rel,
                            status: "failed",
                            error_class: Some(e.class().to_string()),
                            error: Some(e.to_string()),
                        },
                        None,
                    )
                }
            }
        })
        .collect();
    let mut runs = Vec::new();
    for (run, manifest) in results {
        if manifest.is_some() {
            dir.record(&format!("{}/{}", run.dir, crate::manifest::MANIFEST_FILE), Role::Report)?;
        }
        runs.push(run);
    }
    dir.write_json("sweep.json", &runs, Role::Report)
}

fn evaluate(
    config: &ExperimentConfig,
    source: &str,
    target: &str,
    src: &str,
    trg: &str,
    dir: &mut ExperimentDir,
) -> Result<()> {
    let (sv, tv) = (load_video(dir, source)?, load_video(dir, target)?);
    let emb = config.embedder();
    let sample = evaluate_run(&sv, &tv, src, trg, &emb, None)?;
    let report = MetricReport::from_samples(vec![sample], config.metrics.clip_all_order, layerkv::metrics::Embedder::tag(&emb))?;
    dir.write_json("evaluation.json", &report, Role::Report)
}

const VITALITY_FIELDS: [&str; 4] = ["vitality_layer", "vitality_rope", "num_prompts", "embedder"];
const PROMINENCE_FIELDS: [&str; 6] = ["c", "psnr_fg", "psnr_bg", "s_fg", "s_bg", "p"];

fn report(inputs: &[String], dir: &mut ExperimentDir) -> Result<()> {
    if inputs.is_empty() {
        return Err(HarnessError::Usage("report needs at least one input report".into()));
    }
    for rel in inputs {
        let value: serde_json::Value = crate::fsutil::read_json(&dir.path(rel))?;
        let stem = Path::new(rel)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("report");
        let name = stem;
        if value.get("vitality_layer").is_some() || value.get("vitality_rope").is_some() {
            plots::require_fields(&value, &VITALITY_FIELDS)?;
            let r: VitalityReport = serde_json::from_value(value).map_err(|e| HarnessError::Plot(e.to_string()))?;
            dir.write_bytes(&format!("plots/{name}_vitality.svg"), plots::vitality_curves(&r)?.as_bytes(), Role::Plot)?;
            dir.write_bytes(
                &format!("plots/{name}_correlation.svg"),
                plots::correlation_scatter(&r)?.as_bytes(),
                Role::Plot,
            )?;
        } else if value.get("p").is_some() || value.get("psnr_fg").is_some() {
            plots::require_fields(&value, &PROMINENCE_FIELDS)?;
            let r: ProminenceReport = serde_json::from_value(value).map_err(|e| HarnessError::Plot(e.to_string()))?;
            dir.write_bytes(
                &format!("plots/{name}_prominence.svg"),
                plots::prominence_curve(&r)?.as_bytes(),
                Role::Plot,
            )?;
        } else {
            return Err(HarnessError::Plot(format!(
                "{rel}: incomplete report, missing fields: {} or {}",
                VITALITY_FIELDS.join(", "),
                PROMINENCE_FIELDS.join(", ")
            )));
        }
    }
    Ok(())
}
