//! Static report figures: SVG charts and PNG attention overlays.

use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use layerkv::edit::accumulate_delta_attention;
use layerkv::probe::VitalityReport;
use layerkv::prominence::ProminenceReport;
use layerkv::{AttentionMap, Video};
use plotters::prelude::*;

use crate::error::{HarnessError, Result};

const SIZE: (u32, u32) = (640, 400);

fn plot_err<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Plot(e.to_string())
}

/// Fails with the list of absent top-level fields.
pub fn require_fields(report: &serde_json::Value, fields: &[&str]) -> Result<()> {
    let missing: Vec<&str> = fields
        .iter()
        .copied()
        .filter(|f| report.get(f).is_none_or(|v| v.is_null()))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Plot(format!("incomplete report, missing fields: {}", missing.join(", "))))
    }
}

fn y_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = ((hi - lo) * 0.05).max(1e-3);
    (lo - pad, hi + pad)
}

fn line_chart(title: &str, y_label: &str, series: &[(&str, &[Option<f64>], RGBColor)]) -> Result<String> {
    let n = series.iter().map(|s| s.1.len()).max().unwrap_or(0);
    if n == 0 {
        return Err(HarnessError::Plot(format!("{title}: no layers to plot")));
    }
    let (lo, hi) = y_range(series.iter().flat_map(|s| s.1.iter().flatten().copied()));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(35)
            .y_label_area_size(50)
            .build_cartesian_2d((0..n - 1).into_segmented(), lo..hi)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_labels(n)
            .x_desc("layer")
            .y_desc(y_label)
            .draw()
            .map_err(plot_err)?;
        for &(name, values, color) in series {
            let points: Vec<(SegmentValue<usize>, f64)> = values
                .iter()
                .enumerate()
                .filter_map(|(l, v)| v.map(|v| (SegmentValue::CenterOf(l), v)))
                .collect();
            chart
                .draw_series(LineSeries::new(points.clone(), color.stroke_width(2)))
                .map_err(plot_err)?
                .label(name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
            chart
                .draw_series(points.into_iter().map(|p| Circle::new(p, 3, color.filled())))
                .map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Bypass and RoPE-drop vitality per layer, overlaid.
pub fn vitality_curves(report: &VitalityReport) -> Result<String> {
    let layer: Vec<Option<f64>> = report.vitality_layer.iter().copied().map(Some).collect();
    let rope: Vec<Option<f64>> = report.vitality_rope.iter().copied().map(Some).collect();
    line_chart(
        "Layer vitality",
        "vitality",
        &[("bypass", &layer, BLUE), ("rope drop", &rope, RED)],
    )
}

pub fn prominence_curve(report: &ProminenceReport) -> Result<String> {
    line_chart("Layer prominence", "prominence", &[("P", &report.p, MAGENTA)])
}

/// RoPE vitality against bypass vitality, one point per layer.
pub fn correlation_scatter(report: &VitalityReport) -> Result<String> {
    let (x0, x1) = y_range(report.vitality_layer.iter().copied());
    let (y0, y1) = y_range(report.vitality_rope.iter().copied());
    let title = match report.pearson_r {
        Some(r) => format!("Vitality correlation (r = {r:.3})"),
        None => "Vitality correlation (r undefined)".to_string(),
    };
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(35)
            .y_label_area_size(50)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("bypass vitality")
            .y_desc("rope-drop vitality")
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(
                report
                    .vitality_layer
                    .iter()
                    .zip(&report.vitality_rope)
                    .map(|(&x, &y)| Circle::new((x, y), 4, BLUE.filled())),
            )
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// One overlay per captured step: frames side by side with the step's
/// delta-token attention blended in red.
pub fn attention_overlays(
    target: &Video,
    attention: &BTreeMap<(usize, usize), AttentionMap>,
    delta: &[usize],
    grid: (usize, usize, usize),
) -> Result<Vec<(usize, RgbImage)>> {
    let (f, h, w) = target.dims();
    let (gf, gh, gw) = grid;
    let mut out = Vec::new();
    for &(layer, step) in attention.keys() {
        let raw = accumulate_delta_attention(attention, layer, delta, &[step], grid)?;
        let mut img = RgbImage::new((w * f) as u32, h as u32);
        for t in 0..f {
            let ft = (t * gf / f).min(gf - 1);
            for y in 0..h {
                for x in 0..w {
                    let cell = (ft * gh + (y * gh / h).min(gh - 1)) * gw + (x * gw / w).min(gw - 1);
                    let a = raw.values[cell] as f32;
                    let [r, g, b] = target.pixel(t, y, x);
                    let mix = |c: f32, hot: f32| ((c * (1.0 - 0.6 * a) + hot * 0.6 * a).clamp(0.0, 1.0) * 255.0).round() as u8;
                    img.put_pixel((t * w + x) as u32, y as u32, Rgb([mix(r, 1.0), mix(g, 0.0), mix(b, 0.0)]));
                }
            }
        }
        out.push((step, img));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text_contents(svg: &str) -> Vec<String> {
        svg.split("<text")
            .skip(1)
            .filter_map(|t| {
                let body = &t[t.find('>')? + 1..];
                Some(body[..body.find("</text>")?].trim().to_string())
            })
            .collect()
    }

    fn report() -> VitalityReport {
        VitalityReport::new(
            (0..8).map(|l| 0.1 + l as f64 * 0.05).collect(),
            (0..8).map(|l| 0.2 + (l % 3) as f64 * 0.1).collect(),
            2,
            "test".into(),
        )
        .unwrap()
    }

    #[test]
    fn vitality_svg_has_one_tick_per_layer_and_is_deterministic() {
        let a = vitality_curves(&report()).unwrap();
        assert_eq!(a, vitality_curves(&report()).unwrap());
        assert!(a.starts_with("<svg"));
        let texts = text_contents(&a);
        for l in 0..8 {
            assert!(texts.contains(&l.to_string()), "missing tick {l}");
        }
        assert!(!texts.contains(&"8".to_string()));
        correlation_scatter(&report()).unwrap();
    }

    #[test]
    fn missing_fields_are_listed() {
        let v = serde_json::json!({"vitality_layer": [1.0], "pearson_r": null});
        let e = require_fields(&v, &["vitality_layer", "vitality_rope", "pearson_r"])
            .unwrap_err()
            .to_string();
        assert!(e.contains("vitality_rope, pearson_r"), "{e}");
    }
}
