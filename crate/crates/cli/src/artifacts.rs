//! Report and artifact serialization.
//!
//! Reports and the init JSON must be byte-identical across reruns with the
//! same config and seed, so everything non-deterministic (wall-clock) goes
//! into a separate timings file.

use std::fs;
use std::path::Path;
use std::time::Duration;

use serde_json::{json, Value};

use neurbf_core::config::{BudgetPlan, RunConfig};
use neurbf_core::error::Result;
use neurbf_core::field::{AssemblyInfo, TrainResult};
use neurbf_core::imageio::ImageBuffer;

/// JSON cannot hold non-finite numbers; metrics like PSNR legitimately hit
/// infinity on an exact fit, so those become string sentinels.
pub fn jf(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Rounds unit-range values to the nearest 8-bit level, the same rounding
/// the PNG writer applies, for quantized-metric reporting.
pub fn quantize_unit(vals: &[f64]) -> Vec<f64> {
    vals.iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
        .collect()
}

/// Loss curve subsampled at the metric cadence (always keeping the final
/// step); full per-step curves would bloat the report without adding
/// much.
fn loss_samples(curve: &[f64], eval_every: usize) -> Vec<Value> {
    let stride = if eval_every == 0 {
        curve.len().max(1)
    } else {
        eval_every
    };
    let mut out = Vec::new();
    for (i, &loss) in curve.iter().enumerate() {
        if (i + 1) % stride == 0 || i + 1 == curve.len() {
            out.push(json!({"step": i + 1, "loss": jf(loss)}));
        }
    }
    out
}

fn init_summary(info: &AssemblyInfo) -> Value {
    json!({
        "kmeans_objective": info.kmeans_objective.iter().map(|&v| jf(v)).collect::<Vec<_>>(),
        "mean_spacing": jf(info.mean_spacing),
        "reseeds": info.reseeds.len(),
    })
}

fn report_common(cfg: &RunConfig, plan: &BudgetPlan, trainable: usize) -> Value {
    json!({
        "task": cfg.task.name(),
        "seed": cfg.seed,
        "steps": cfg.steps,
        "batch": cfg.batch,
        "lr": jf(cfg.lr),
        "budget": cfg.budget,
        "trainable_params": trainable,
        "budget_plan": serde_json::to_value(plan).expect("plan serializes"),
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    let (Value::Object(b), Value::Object(e)) = (&mut base, extra) else {
        unreachable!("reports are objects");
    };
    b.extend(e);
    base
}

pub fn image_report(
    cfg: &RunConfig,
    plan: &BudgetPlan,
    info: &AssemblyInfo,
    result: &TrainResult,
    psnr_quantized: f64,
    trainable: usize,
) -> Value {
    let metrics: Vec<Value> = result
        .metric_curve
        .iter()
        .map(|p| json!({"step": p.step, "psnr": jf(p.value)}))
        .collect();
    merge(
        report_common(cfg, plan, trainable),
        json!({
            "init": init_summary(info),
            "loss_samples": loss_samples(&result.loss_curve, cfg.eval_every),
            "final_loss": jf(result.loss_curve.last().copied().unwrap_or(f64::NAN)),
            "metric_points": metrics,
            "final_psnr": jf(result.final_metric),
            "final_psnr_quantized": jf(psnr_quantized),
            "clamp_count": result.clamp_count,
        }),
    )
}

pub fn sdf_report(
    cfg: &RunConfig,
    plan: &BudgetPlan,
    info: &AssemblyInfo,
    result: &TrainResult,
    iou_res: usize,
    trainable: usize,
) -> Value {
    let metrics: Vec<Value> = result
        .metric_curve
        .iter()
        .map(|p| json!({"step": p.step, "iou": jf(p.value)}))
        .collect();
    merge(
        report_common(cfg, plan, trainable),
        json!({
            "init": init_summary(info),
            "loss_samples": loss_samples(&result.loss_curve, cfg.eval_every),
            "final_loss": jf(result.loss_curve.last().copied().unwrap_or(f64::NAN)),
            "metric_points": metrics,
            "final_iou": jf(result.final_metric),
            "iou_res": iou_res,
            "clamp_count": result.clamp_count,
        }),
    )
}

/// Wall-clock sidecar; deliberately not part of the deterministic report.
pub fn write_timings(path: &Path, threads: usize, stages: &[(&str, Duration)]) -> Result<()> {
    let mut obj = serde_json::Map::new();
    obj.insert("threads".into(), json!(threads));
    let mut total = 0.0;
    for (name, d) in stages {
        let secs = d.as_secs_f64();
        obj.insert(format!("{name}_s"), json!(secs));
        total += secs;
    }
    obj.insert("total_s".into(), json!(total));
    write_json(path, &Value::Object(obj))
}

/// Centers and packed inverse shapes of a 2-D basis, plus the clustering
/// diagnostics, in a stable order for byte-level reproducibility checks.
pub fn init_json(
    img: &ImageBuffer,
    centers: &[f64],
    inv_shapes: &[f64],
    info: &AssemblyInfo,
) -> Value {
    let n = centers.len() / 2;
    let cs: Vec<Value> = (0..n)
        .map(|i| json!([centers[2 * i], centers[2 * i + 1]]))
        .collect();
    let qs: Vec<Value> = (0..n)
        .map(|i| json!(inv_shapes[3 * i..3 * i + 3]))
        .collect();
    json!({
        "width": img.width,
        "height": img.height,
        "count": n,
        "centers": cs,
        "inv_shapes": qs,
        "mean_spacing": jf(info.mean_spacing),
        "kmeans_objective": info.kmeans_objective.iter().map(|&v| jf(v)).collect::<Vec<_>>(),
    })
}

/// Draws each basis ellipse (unit Mahalanobis level set) over the image in
/// yellow. Centers and shapes live in unit coordinates; pixel centers sit
/// at (i + 0.5) / size.
pub fn ellipse_overlay(img: &ImageBuffer, centers: &[f64], inv_shapes: &[f64]) -> ImageBuffer {
    let mut out = img.clone();
    out.bit_depth = 8;
    let (w, h) = (img.width as f64, img.height as f64);
    for i in 0..centers.len() / 2 {
        let c = [centers[2 * i], centers[2 * i + 1]];
        let q = &inv_shapes[3 * i..3 * i + 3];
        // The level set x'Qx = 1 is the image of the unit circle under any
        // L with L L' = Q^-1; use the Cholesky factor of the inverse.
        let det = q[0] * q[2] - q[1] * q[1];
        if det <= 0.0 || q[2] <= 0.0 {
            continue;
        }
        let (s11, s12, s22) = (q[2] / det, -q[1] / det, q[0] / det);
        if s11 <= 0.0 {
            continue;
        }
        let l11 = s11.sqrt();
        let l21 = s12 / l11;
        let rest = s22 - l21 * l21;
        if rest <= 0.0 {
            continue;
        }
        let l22 = rest.sqrt();
        let radius_px = (l11.max(l21.abs()).max(l22) * w.max(h)).max(1.0);
        let steps = ((radius_px * 8.0) as usize).clamp(24, 512);
        for s in 0..steps {
            let th = s as f64 / steps as f64 * std::f64::consts::TAU;
            let (sn, cs) = th.sin_cos();
            let x = c[0] + l11 * cs;
            let y = c[1] + l21 * cs + l22 * sn;
            let px = (x * w - 0.5).round();
            let py = (y * h - 0.5).round();
            if (0.0..w).contains(&px) && (0.0..h).contains(&py) {
                out.set_pixel(px as usize, py as usize, [1.0, 0.9, 0.1]);
            }
        }
    }
    out
}
