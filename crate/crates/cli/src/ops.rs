//! Command implementations: config resolution, the two fit pipelines,
//! checkpoint evaluation and initialization inspection.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use neurbf_core::checkpoint::Checkpoint;
use neurbf_core::config::{self, RunConfig, Task};
use neurbf_core::error::{Error, Result};
use neurbf_core::exec::{self, ExecMode};
use neurbf_core::field::{
    assemble_image, assemble_sdf, train, ImageEngine, SdfEngine, TaskData, TrainOptions,
};
use neurbf_core::imageio::{self, ImageBuffer};
use neurbf_core::mesh;
use neurbf_core::params::ParamStore;
use neurbf_core::sdf::{MeshSdf, SdfOracle};

use crate::artifacts::{self, jf};
use crate::{EvalArgs, RunArgs};

const MODE: ExecMode = ExecMode::Parallel;
/// Lattice resolution for IoU in training reports and `eval`.
const IOU_RES: usize = 64;

/// Prefixes I/O failures with the file that caused them; decode and format
/// errors already carry their own context.
fn with_path<T>(r: Result<T>, path: &Path) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    })
}

/// Defaults for the subcommand's task, overlaid with the config file and
/// the command-line overrides, then validated.
fn resolve_config(task: Task, args: &RunArgs, subcmd: &str) -> Result<RunConfig> {
    let partial = match &args.config {
        Some(path) => config::load_partial(path)?,
        None => Default::default(),
    };
    if let Some(t) = partial.task {
        if t != task {
            return Err(Error::config(format!(
                "config sets task `{}` but `{subcmd}` works on the {} task",
                t.name(),
                task.name()
            )));
        }
    }
    let mut cfg = config::merge(task, partial);
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.out {
        cfg.out = v.to_string_lossy().into_owned();
    }
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.budget {
        cfg.budget = v;
    }
    config::validate(&cfg)?;
    Ok(cfg)
}

fn setup_threads(requested: usize) -> usize {
    let n = if requested == 0 {
        std::thread::available_parallelism()
            .map(|v| v.get())
            .unwrap_or(1)
    } else {
        requested
    };
    exec::set_threads(n);
    n
}

/// Creates the output directory and echoes the fully resolved config;
/// feeding the echo back as `--config` reproduces the run.
fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = PathBuf::from(&cfg.out);
    with_path(fs::create_dir_all(&out).map_err(Error::Io), &out)?;
    let echo = serde_json::to_string_pretty(cfg)?;
    let path = out.join("config.echo.json");
    with_path(fs::write(&path, echo + "\n").map_err(Error::Io), &path)?;
    Ok(out)
}

fn load_image_input(cfg: &RunConfig) -> Result<ImageBuffer> {
    ImageBuffer::load(Path::new(cfg.input.image.as_ref().expect("validated")))
}

/// Mesh inputs are rescaled into the unit cube the field covers; analytic
/// shapes are taken as configured.
fn build_oracle(cfg: &RunConfig) -> Result<SdfOracle> {
    if let Some(shape) = &cfg.input.shape {
        return Ok(SdfOracle::Analytic(shape.to_oracle()));
    }
    let path = PathBuf::from(cfg.input.mesh.as_ref().expect("validated"));
    let mut m = with_path(mesh::load_mesh(&path), &path)?;
    m.normalize_to_unit();
    Ok(SdfOracle::Mesh(Box::new(MeshSdf::new(m)?)))
}

pub fn fit_image(args: &RunArgs) -> Result<()> {
    let cfg = resolve_config(Task::Image, args, "fit-image")?;
    let threads = setup_threads(cfg.threads);
    let img = load_image_input(&cfg)?;
    let (spec, plan) = config::build_model_spec(&cfg)?;
    let out = prepare_out(&cfg)?;

    let t0 = Instant::now();
    let (field, mut store, info) =
        assemble_image(&spec, img.width, img.height, &img.data, cfg.seed, MODE)?;
    let t_assemble = t0.elapsed();
    log::info!(
        "assembled {} trainable parameters in {:.1}s",
        field.param_count(),
        t_assemble.as_secs_f64()
    );

    let engine = ImageEngine::new(&field, &store, img.width, img.height, &img.data, MODE)?;
    let opts = TrainOptions {
        steps: cfg.steps,
        batch: cfg.batch,
        lr: cfg.lr,
        eval_every: cfg.eval_every,
        seed: cfg.seed,
    };
    let t1 = Instant::now();
    let result = train(&mut store, &TaskData::Image { engine: &engine }, &opts)?;
    let t_train = t1.elapsed();

    let t2 = Instant::now();
    let ckpt = Checkpoint::capture(&spec, serde_json::to_value(&cfg)?, &field, &store)?;
    ckpt.save(&out.join("checkpoint.nrbf"))?;
    let pred = engine.render(&store);
    let quantized = artifacts::quantize_unit(&pred);
    let psnr_q = imageio::psnr(&quantized, &img.data);
    save_rgb(&out.join("recon.png"), img.width, img.height, pred.clone())?;
    imageio::error_map(&pred, &img.data, img.width, img.height)
        .save(&out.join("error_map.png"))?;
    let report = artifacts::image_report(&cfg, &plan, &info, &result, psnr_q, field.param_count());
    artifacts::write_json(&out.join("report.json"), &report)?;
    let t_artifacts = t2.elapsed();
    artifacts::write_timings(
        &out.join("timings.json"),
        threads,
        &[
            ("assemble", t_assemble),
            ("train", t_train),
            ("artifacts", t_artifacts),
        ],
    )?;

    println!(
        "fit-image: PSNR {:.2} dB ({:.2} dB quantized) after {} steps -> {}",
        result.final_metric,
        psnr_q,
        cfg.steps,
        out.display()
    );
    Ok(())
}

pub fn fit_sdf(args: &RunArgs) -> Result<()> {
    let cfg = resolve_config(Task::Sdf, args, "fit-sdf")?;
    let threads = setup_threads(cfg.threads);
    let oracle = build_oracle(&cfg)?;
    let (spec, plan) = config::build_model_spec(&cfg)?;
    let out = prepare_out(&cfg)?;

    let t0 = Instant::now();
    let (field, mut store, info) =
        assemble_sdf(&spec, &oracle, cfg.init_samples, cfg.seed, MODE)?;
    let t_assemble = t0.elapsed();
    log::info!(
        "assembled {} trainable parameters in {:.1}s",
        field.param_count(),
        t_assemble.as_secs_f64()
    );

    let engine = SdfEngine::new(&field, &store, MODE)?;
    let opts = TrainOptions {
        steps: cfg.steps,
        batch: cfg.batch,
        lr: cfg.lr,
        eval_every: cfg.eval_every,
        seed: cfg.seed,
    };
    let task = TaskData::Sdf {
        engine: &engine,
        oracle: &oracle,
        iou_res: IOU_RES,
    };
    let t1 = Instant::now();
    let result = train(&mut store, &task, &opts)?;
    let t_train = t1.elapsed();

    let t2 = Instant::now();
    let ckpt = Checkpoint::capture(&spec, serde_json::to_value(&cfg)?, &field, &store)?;
    ckpt.save(&out.join("checkpoint.nrbf"))?;
    render_slice(&engine, &store, 256).save(&out.join("slice.png"))?;
    let report =
        artifacts::sdf_report(&cfg, &plan, &info, &result, IOU_RES, field.param_count());
    artifacts::write_json(&out.join("report.json"), &report)?;
    let t_artifacts = t2.elapsed();
    artifacts::write_timings(
        &out.join("timings.json"),
        threads,
        &[
            ("assemble", t_assemble),
            ("train", t_train),
            ("artifacts", t_artifacts),
        ],
    )?;

    println!(
        "fit-sdf: IoU {:.4} at {IOU_RES}^3 after {} steps -> {}",
        result.final_metric,
        cfg.steps,
        out.display()
    );
    Ok(())
}

fn save_rgb(path: &Path, width: usize, height: usize, data: Vec<f64>) -> Result<()> {
    ImageBuffer {
        width,
        height,
        data,
        bit_depth: 8,
    }
    .save(path)
}

/// Mid-depth cross-section of the predicted distance field, tone-mapped so
/// the zero level set sits at mid-gray.
fn render_slice(engine: &SdfEngine<'_>, store: &ParamStore, res: usize) -> ImageBuffer {
    let mut img = ImageBuffer::new(res, res);
    for row in 0..res {
        for col in 0..res {
            let p = [
                (col as f64 + 0.5) / res as f64,
                (row as f64 + 0.5) / res as f64,
                0.5,
            ];
            let d = engine.predict(store, p);
            let t = 0.5 + 0.5 * (d * 8.0).tanh();
            img.set_pixel(col, row, [t, t, t]);
        }
    }
    img
}

fn target_kind(path: &Path) -> Option<Task> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("png" | "jpg" | "jpeg") => Some(Task::Image),
        Some("obj" | "ply") => Some(Task::Sdf),
        _ => None,
    }
}

/// Recomputes a checkpoint's metrics against its target and prints them as
/// JSON. Rebuilding is exact, so right after a fit this reproduces the
/// report's final metrics bit for bit.
pub fn eval(args: &EvalArgs) -> Result<()> {
    setup_threads(args.threads.unwrap_or(0));
    let ckpt = with_path(Checkpoint::load(&args.checkpoint), &args.checkpoint)?;
    let cfg: RunConfig = serde_json::from_value(ckpt.run.clone()).map_err(|e| {
        Error::config(format!(
            "checkpoint does not carry a usable run config: {e}"
        ))
    })?;
    let (field, store) = ckpt.rebuild()?;
    if let Some(target) = &args.target {
        if let Some(kind) = target_kind(target) {
            if kind != cfg.task {
                return Err(Error::config(format!(
                    "checkpoint holds a {} model but `{}` is a {} target",
                    cfg.task.name(),
                    target.display(),
                    kind.name()
                )));
            }
        }
    }
    let metrics = match cfg.task {
        Task::Image => {
            let img = match &args.target {
                Some(path) => ImageBuffer::load(path)?,
                None => load_image_input(&cfg)?,
            };
            let engine = ImageEngine::new(&field, &store, img.width, img.height, &img.data, MODE)?;
            let psnr = engine.psnr(&store);
            let quantized = artifacts::quantize_unit(&engine.render(&store));
            let psnr_q = imageio::psnr(&quantized, &img.data);
            serde_json::json!({
                "task": "image",
                "psnr": jf(psnr),
                "psnr_quantized": jf(psnr_q),
            })
        }
        Task::Sdf => {
            let oracle = match &args.target {
                Some(path) => {
                    let mut m = with_path(mesh::load_mesh(path), path)?;
                    m.normalize_to_unit();
                    SdfOracle::Mesh(Box::new(MeshSdf::new(m)?))
                }
                None => build_oracle(&cfg)?,
            };
            let engine = SdfEngine::new(&field, &store, MODE)?;
            let iou = engine.iou(&store, &oracle, IOU_RES);
            serde_json::json!({
                "task": "sdf",
                "iou": jf(iou),
                "iou_res": IOU_RES,
            })
        }
    };
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

/// Runs the initialization pipeline only and writes the resulting centers
/// and shapes, both as JSON and as an ellipse overlay on the input image.
pub fn init_inspect(args: &RunArgs) -> Result<()> {
    let cfg = resolve_config(Task::Image, args, "init-inspect")?;
    setup_threads(cfg.threads);
    let img = load_image_input(&cfg)?;
    let (spec, _plan) = config::build_model_spec(&cfg)?;
    if spec.rbf.is_none() {
        return Err(Error::config(
            "init-inspect visualizes the adaptive basis; enable model.arbf",
        ));
    }
    let (field, _store, info) =
        assemble_image(&spec, img.width, img.height, &img.data, cfg.seed, MODE)?;
    let out = prepare_out(&cfg)?;
    let rbf = field.rbf.as_ref().expect("spec has a basis");
    let init = artifacts::init_json(&img, &rbf.centers, &rbf.inv_shapes, &info);
    artifacts::write_json(&out.join("init.json"), &init)?;
    artifacts::ellipse_overlay(&img, &rbf.centers, &rbf.inv_shapes)
        .save(&out.join("init_overlay.png"))?;
    println!(
        "init-inspect: {} centers -> {}",
        rbf.centers.len() / 2,
        out.display()
    );
    Ok(())
}
