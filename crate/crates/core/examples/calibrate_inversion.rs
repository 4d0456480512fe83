//! Measures invert→re-sample reconstruction PSNR on toy videos.
//!
//! The printed minimum is the regression constant used by the inversion
//! tests (`INVERSION_PSNR_FLOOR_DB`).

use std::time::Instant;

use layerkv::{Decoder, DecoderConfig, DenoiseSchedule, Model, ModelConfig, Sampler};
use layerkv::sampler::no_hooks;

fn psnr(a: &[f32], b: &[f32]) -> f64 {
    let mse = a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>() / a.len() as f64;
    -10.0 * mse.log10()
}

fn main() -> layerkv::Result<()> {
    let model = Model::new(ModelConfig::default())?;
    let decoder = Decoder::new(model.config().grid(), DecoderConfig::default())?;
    let schedule = DenoiseSchedule::default();
    let sampler = Sampler::new(&model, &decoder, &schedule)?;
    let prompts = layerkv::prompts::probe_prompts();
    let mut worst = f64::INFINITY;
    for (i, prompt) in prompts.iter().take(10).enumerate() {
        let t = Instant::now();
        let original = sampler.sample(prompt, i as u64, &no_hooks)?;
        let noise = sampler.invert_video(&original.video, prompt)?;
        let again = sampler.sample_from(noise, prompt, &no_hooks)?;
        let p = psnr(original.video.data(), again.video.data());
        worst = worst.min(p);
        println!("{i:2} {p:8.3} dB  ({:.2?})  {prompt}", t.elapsed());
    }
    println!("min {worst:.3} dB");
    Ok(())
}
