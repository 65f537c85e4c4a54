//! Run configuration: schema, per-task defaults, file loading, merging and
//! the parameter-budget solver that turns a config into a model recipe.
//!
//! Configs are TOML (JSON also accepted, detected by extension). Users
//! provide any subset of keys ([`PartialConfig`]); unknown keys are
//! rejected. The resolved [`RunConfig`] with every field concrete is echoed
//! next to the run artifacts, and feeding the echo back reproduces the run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::Squash;
use crate::error::{Error, Result};
use crate::field::{GridSpec, ModelSpec, RbfSpec};
use crate::grid::HashGridEncoder;
use crate::rbf::MAX_K;
use crate::sdf::AnalyticSdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Image,
    Sdf,
}

impl Task {
    pub fn dim(self) -> usize {
        match self {
            Task::Image => 2,
            Task::Sdf => 3,
        }
    }

    pub fn out_dim(self) -> usize {
        match self {
            Task::Image => 3,
            Task::Sdf => 1,
        }
    }

    pub fn squash(self) -> Squash {
        match self {
            Task::Image => Squash::Sigmoid,
            Task::Sdf => Squash::Linear,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Image => "image",
            Task::Sdf => "sdf",
        }
    }
}

/// Analytic ground-truth shapes for the sdf task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase", tag = "kind")]
pub enum ShapeConfig {
    Sphere { center: [f64; 3], radius: f64 },
    Box { center: [f64; 3], half: [f64; 3] },
    Torus { center: [f64; 3], major: f64, minor: f64 },
}

impl ShapeConfig {
    pub fn to_oracle(&self) -> AnalyticSdf {
        match *self {
            ShapeConfig::Sphere { center, radius } => AnalyticSdf::Sphere { center, radius },
            ShapeConfig::Box { center, half } => AnalyticSdf::Box { center, half },
            ShapeConfig::Torus {
                center,
                major,
                minor,
            } => AnalyticSdf::Torus {
                center,
                major,
                minor,
            },
        }
    }
}

/// What to fit. The image task takes `image`; the sdf task takes exactly
/// one of `mesh` or `shape`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<ShapeConfig>,
}

/// Architecture knobs. Defaults depend on the task; see [`defaults`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Adaptive basis on. Off leaves a grid + MLP model.
    pub arbf: bool,
    /// Sinusoidal composition on the encoder.
    pub msc: bool,
    /// Sinusoidal residual on the decoder's first layer.
    pub residual: bool,
    /// Feature channels per adaptive center.
    pub feat_dim: usize,
    /// Neighborhood size of the adaptive basis.
    pub k: usize,
    /// Encoder frequency ladder bounds.
    pub freq_lo: f64,
    pub freq_hi: f64,
    /// Decoder residual frequency ladder bounds.
    pub freq0_lo: f64,
    pub freq0_hi: f64,
    /// Decoder hidden width.
    pub width: usize,
    /// Decoder learning-rate multiplier relative to the base rate.
    pub mlp_lr_scale: f64,
    /// Grid levels and resolution range.
    pub levels: usize,
    pub r_min: u32,
    pub r_max: u32,
    /// Feature channels per grid level.
    pub channels: usize,
    /// Upper bound on the per-level hash table size (power of two). The
    /// budget solver shrinks the actual table below this when needed.
    pub table_size_max: usize,
}

/// A fully resolved run: every knob concrete. Scalar fields come first so
/// the TOML form serializes cleanly (tables last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    /// Output directory for artifacts.
    pub out: String,
    /// Worker threads; 0 means all logical cores.
    pub threads: usize,
    /// Total parameter budget the solver allocates.
    pub budget: usize,
    pub steps: usize,
    pub batch: usize,
    /// Base learning rate (feature segments).
    pub lr: f64,
    /// Metric cadence in steps; 0 evaluates only at the end.
    pub eval_every: usize,
    /// Size of the initialization point cloud (sdf task only).
    pub init_samples: usize,
    pub input: InputConfig,
    pub model: ModelConfig,
}

/// Paper-default configuration for a task. The input is left empty; a run
/// needs it from the user.
pub fn defaults(task: Task) -> RunConfig {
    let model = match task {
        Task::Image => ModelConfig {
            arbf: true,
            msc: true,
            residual: true,
            feat_dim: 32,
            k: 4,
            freq_lo: 0.125,
            freq_hi: 4096.0,
            freq0_lo: 1.0,
            freq0_hi: 1000.0,
            width: 64,
            mlp_lr_scale: 0.2,
            levels: 8,
            r_min: 16,
            r_max: 256,
            channels: 2,
            table_size_max: 1 << 14,
        },
        Task::Sdf => ModelConfig {
            arbf: true,
            msc: true,
            residual: true,
            feat_dim: 16,
            k: 8,
            freq_lo: 1.0,
            freq_hi: 8.0,
            freq0_lo: 30.0,
            freq0_hi: 300.0,
            width: 64,
            mlp_lr_scale: 10.0,
            levels: 8,
            r_min: 16,
            r_max: 128,
            channels: 2,
            table_size_max: 1 << 14,
        },
    };
    match task {
        Task::Image => RunConfig {
            task,
            seed: 0,
            out: "out".into(),
            threads: 0,
            budget: 131_072,
            steps: 5000,
            batch: 65_536,
            lr: 5e-3,
            eval_every: 500,
            init_samples: 131_072,
            input: InputConfig::default(),
            model,
        },
        Task::Sdf => RunConfig {
            task,
            seed: 0,
            out: "out".into(),
            threads: 0,
            budget: 409_600,
            steps: 5000,
            batch: 16_384,
            lr: 1e-4,
            eval_every: 500,
            init_samples: 131_072,
            input: InputConfig::default(),
            model,
        },
    }
}

/// Default config as TOML, for `--print-defaults`.
pub fn default_toml(task: Task) -> String {
    toml::to_string_pretty(&defaults(task)).expect("defaults always serialize")
}

// ---------------------------------------------------------------------------
// Partial configs and merging.

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartialModelConfig {
    pub arbf: Option<bool>,
    pub msc: Option<bool>,
    pub residual: Option<bool>,
    pub feat_dim: Option<usize>,
    pub k: Option<usize>,
    pub freq_lo: Option<f64>,
    pub freq_hi: Option<f64>,
    pub freq0_lo: Option<f64>,
    pub freq0_hi: Option<f64>,
    pub width: Option<usize>,
    pub mlp_lr_scale: Option<f64>,
    pub levels: Option<usize>,
    pub r_min: Option<u32>,
    pub r_max: Option<u32>,
    pub channels: Option<usize>,
    pub table_size_max: Option<usize>,
}

/// User-provided subset of a [`RunConfig`]; anything omitted falls back to
/// the task defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartialConfig {
    pub task: Option<Task>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub threads: Option<usize>,
    pub budget: Option<usize>,
    pub steps: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub eval_every: Option<usize>,
    pub init_samples: Option<usize>,
    pub input: Option<InputConfig>,
    pub model: Option<PartialModelConfig>,
}

/// Parses a config file; the format follows the extension (`.json` is JSON,
/// anything else TOML). Malformed content is a config error, an unreadable
/// path an IO error.
pub fn load_partial(path: &Path) -> Result<PartialConfig> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

fn merge_model(base: &mut ModelConfig, p: PartialModelConfig) {
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = p.$f { base.$f = v; } )* };
    }
    take!(
        arbf, msc, residual, feat_dim, k, freq_lo, freq_hi, freq0_lo, freq0_hi, width,
        mlp_lr_scale, levels, r_min, r_max, channels, table_size_max
    );
}

/// Defaults for `task` overlaid with the user's partial config.
pub fn merge(task: Task, partial: PartialConfig) -> RunConfig {
    let mut cfg = defaults(task);
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = partial.$f { cfg.$f = v; } )* };
    }
    take!(seed, out, threads, budget, steps, batch, lr, eval_every, init_samples, input);
    if let Some(m) = partial.model {
        merge_model(&mut cfg.model, m);
    }
    cfg
}

/// Checks everything that does not need the budget solver. Solver and
/// construction failures surface as config errors of their own.
pub fn validate(cfg: &RunConfig) -> Result<()> {
    let fail = |msg: String| Err(Error::Config(msg));
    match cfg.task {
        Task::Image => {
            if cfg.input.image.is_none() {
                return fail("the image task needs input.image".into());
            }
            if cfg.input.mesh.is_some() || cfg.input.shape.is_some() {
                return fail("the image task takes only input.image".into());
            }
        }
        Task::Sdf => {
            if cfg.input.image.is_some() {
                return fail("the sdf task does not take input.image".into());
            }
            match (&cfg.input.mesh, &cfg.input.shape) {
                (Some(_), Some(_)) => {
                    return fail("give either input.mesh or input.shape, not both".into())
                }
                (None, None) => return fail("the sdf task needs input.mesh or input.shape".into()),
                _ => {}
            }
            if let Some(shape) = &cfg.input.shape {
                validate_shape(shape)?;
            }
            if cfg.init_samples == 0 {
                return fail("init_samples must be positive".into());
            }
        }
    }
    if cfg.steps == 0 {
        return fail("steps must be at least 1".into());
    }
    if cfg.batch == 0 {
        return fail("batch must be at least 1".into());
    }
    if !(cfg.lr > 0.0) || !cfg.lr.is_finite() {
        return fail(format!("lr must be positive and finite, got {}", cfg.lr));
    }
    if cfg.budget == 0 {
        return fail("budget must be positive".into());
    }
    if cfg.out.is_empty() {
        return fail("out directory must not be empty".into());
    }
    let m = &cfg.model;
    if m.arbf && (m.k == 0 || m.k > MAX_K) {
        return fail(format!("k must be in 1..={MAX_K}, got {}", m.k));
    }
    if m.arbf && m.feat_dim == 0 {
        return fail("feat_dim must be positive".into());
    }
    if m.width == 0 {
        return fail("width must be positive".into());
    }
    if m.channels == 0 || m.levels == 0 {
        return fail("grid needs at least one level and one channel".into());
    }
    if !(m.mlp_lr_scale > 0.0) || !m.mlp_lr_scale.is_finite() {
        return fail(format!(
            "mlp_lr_scale must be positive and finite, got {}",
            m.mlp_lr_scale
        ));
    }
    if !m.table_size_max.is_power_of_two() {
        return fail(format!(
            "table_size_max must be a power of two, got {}",
            m.table_size_max
        ));
    }
    Ok(())
}

fn validate_shape(shape: &ShapeConfig) -> Result<()> {
    let ok = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
    let good = match *shape {
        ShapeConfig::Sphere { center, radius } => ok(&center) && radius > 0.0,
        ShapeConfig::Box { center, half } => {
            ok(&center) && half.iter().all(|&h| h > 0.0 && h.is_finite())
        }
        ShapeConfig::Torus {
            center,
            major,
            minor,
        } => ok(&center) && major > 0.0 && minor > 0.0,
    };
    if good {
        Ok(())
    } else {
        Err(Error::config(format!(
            "shape dimensions must be positive and finite: {shape:?}"
        )))
    }
}

// ---------------------------------------------------------------------------
// Budget solver.

/// How the parameter budget was split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetPlan {
    /// Chosen per-level hash table size (power of two).
    pub table_size: usize,
    /// Grid table parameters at that size.
    pub grid_params: usize,
    /// Decoder parameters (all six segments).
    pub mlp_params: usize,
    /// Trainable phase parameters (feat_dim, 0 without the basis).
    pub phase_params: usize,
    /// Adaptive centers, `None` when the basis is off.
    pub rbf_count: Option<usize>,
    /// Budget units one center costs (position + shape + features).
    pub per_center: usize,
    /// Total trainable parameters of the planned model.
    pub trainable_params: usize,
}

fn mlp_params(in_dim: usize, width: usize, out_dim: usize) -> usize {
    width * in_dim + width + width * width + width + out_dim * width + out_dim
}

/// Largest power-of-two table size, at most `max`, whose actual storage
/// (dense levels stay dense) fits in `cap` parameters.
fn fit_table_size(
    dim: usize,
    levels: usize,
    r_min: u32,
    r_max: u32,
    channels: usize,
    max: usize,
    cap: usize,
) -> Result<(usize, usize)> {
    let mut t = max;
    while t >= 1 {
        let enc = HashGridEncoder::new(dim, levels, r_min, r_max, channels, t)?;
        let len = enc.table_len();
        if len <= cap {
            return Ok((t, len));
        }
        t /= 2;
    }
    Err(Error::config(format!(
        "budget leaves only {cap} parameters for the grid, too few for even a table size of 1"
    )))
}

/// Splits the budget: the grid takes `min(its natural size, 30% of the
/// budget)` (the whole remainder after the decoder when the adaptive basis
/// is off), then the remainder buys adaptive centers at
/// `D + D(D+1)/2 + F` budget units each (position, shape, features).
/// Trainable parameters never exceed the budget; the frozen geometry gives
/// the planned model slack under it.
pub fn plan_budget(cfg: &RunConfig) -> Result<BudgetPlan> {
    let m = &cfg.model;
    let dim = cfg.task.dim();
    let p = cfg.budget;
    let in_dim = if m.arbf { m.feat_dim } else { 0 } + m.levels * m.channels;
    let mlp = mlp_params(in_dim, m.width, cfg.task.out_dim());
    if !m.arbf {
        let cap = p.checked_sub(mlp).ok_or_else(|| {
            Error::config(format!("budget {p} cannot even hold the {mlp}-parameter decoder"))
        })?;
        let (table_size, grid_params) =
            fit_table_size(dim, m.levels, m.r_min, m.r_max, m.channels, m.table_size_max, cap)?;
        return Ok(BudgetPlan {
            table_size,
            grid_params,
            mlp_params: mlp,
            phase_params: 0,
            rbf_count: None,
            per_center: 0,
            trainable_params: grid_params + mlp,
        });
    }
    let grid_cap = p * 3 / 10;
    let (table_size, grid_params) =
        fit_table_size(dim, m.levels, m.r_min, m.r_max, m.channels, m.table_size_max, grid_cap)?;
    let phase = m.feat_dim;
    let used = grid_params + mlp + phase;
    let remainder = p.checked_sub(used).ok_or_else(|| {
        Error::config(format!(
            "budget {p} is smaller than the fixed costs (grid {grid_params} + decoder {mlp} + phase {phase})"
        ))
    })?;
    let per_center = dim + dim * (dim + 1) / 2 + m.feat_dim;
    let count = remainder / per_center;
    if count < m.k {
        return Err(Error::config(format!(
            "budget {p} leaves room for only {count} adaptive centers at {per_center} \
             parameters each, but the neighborhood needs k={}; raise the budget or drop k",
            m.k
        )));
    }
    Ok(BudgetPlan {
        table_size,
        grid_params,
        mlp_params: mlp,
        phase_params: phase,
        rbf_count: Some(count),
        per_center,
        trainable_params: count * m.feat_dim + phase + grid_params + mlp,
    })
}

/// Solves the budget and assembles the model recipe for a config.
pub fn build_model_spec(cfg: &RunConfig) -> Result<(ModelSpec, BudgetPlan)> {
    let plan = plan_budget(cfg)?;
    let m = &cfg.model;
    let spec = ModelSpec {
        dim: cfg.task.dim(),
        out_dim: cfg.task.out_dim(),
        squash: cfg.task.squash(),
        rbf: plan.rbf_count.map(|count| RbfSpec {
            count,
            feat_dim: m.feat_dim,
            k: m.k,
            msc: m.msc,
            freq_lo: m.freq_lo,
            freq_hi: m.freq_hi,
        }),
        grid: GridSpec {
            levels: m.levels,
            r_min: m.r_min,
            r_max: m.r_max,
            channels: m.channels,
            table_size: plan.table_size,
        },
        width: m.width,
        residual: m.residual.then_some((m.freq0_lo, m.freq0_hi)),
        mlp_lr_scale: m.mlp_lr_scale,
    };
    Ok((spec, plan))
}
