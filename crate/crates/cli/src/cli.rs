use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use oscr_core::artifacts::write_json;
use oscr_core::binding::{layout_attention_mask, summarize_mask, DEFAULT_PATCH_PX};
use oscr_core::image::write_file;
use oscr_core::metrics::{evaluate, EstimatesFile, EvalConfig, DEFAULT_OBJECTNESS_THRESHOLD};
use oscr_core::procgen::{dataset_stats, filter_augmentations, generate_dataset, GenConfig, Manifest};
use oscr_core::render::RenderOptions;
use oscr_core::scene::FaceColorMap;
use oscr_core::scores::ScoresFile;
use serde_json::{json, Value};

use crate::api::{self, parse_json, parse_layout, RenderMode, Rendered};
use crate::error::CliError;
use crate::service::{self, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "oscr", version, about = "Occlusion-aware box layout renderer and scene toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a layout to the condition image, masks and depth.
    Render(RenderArgs),
    /// Generate a filtered synthetic dataset.
    Gen(GenArgs),
    /// Keep only scenes whose every box scores at or above a threshold.
    FilterAug(FilterArgs),
    /// Histograms over a generated manifest.
    Stats(StatsArgs),
    /// Build the token binding attention mask for a layout.
    Mask(MaskArgs),
    /// Score estimated depths and orientations against a manifest.
    Eval(EvalArgs),
    /// Run the local HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub layout: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// JSON object mapping "+X".."-Z" to RGB triples in [0, 1].
    #[arg(long)]
    pub colors: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub mode: RenderMode,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_scenes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    /// Defaults to the manifest's `score_threshold`.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Defaults to `manifest.filtered.json` next to the input.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Defaults to `stats/` next to the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long)]
    pub layout: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PATCH_PX)]
    pub patch: u32,
    /// Bind appearance tokens to these box ids (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub personalize: Vec<u32>,
    #[arg(long, default_value_t = 0)]
    pub n_appearance: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub estimates: PathBuf,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = DEFAULT_OBJECTNESS_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long, default_value_t = service::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = service::DEFAULT_BODY_LIMIT)]
    pub body_limit: usize,
    #[arg(long, default_value_t = service::DEFAULT_RENDER_TIMEOUT.as_millis() as u64)]
    pub timeout_ms: u64,
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input("io", format!("{}: {e}", path.display())))
}

fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    parse_json(&read_input(path)?, &path.display().to_string())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn paths(ps: &[PathBuf]) -> Vec<String> {
    ps.iter().map(|p| p.display().to_string()).collect()
}

pub fn load_render_options(alpha: Option<f64>, colors: Option<&Path>) -> Result<RenderOptions, CliError> {
    let mut opts = RenderOptions::default();
    if let Some(a) = alpha {
        opts.alpha = a;
    }
    if let Some(p) = colors {
        let c: FaceColorMap = parse_json(&read_input(p)?, &p.display().to_string())?;
        c.validate().map_err(|m| CliError::input("invalid_colors", m))?;
        opts.colors = c;
    }
    Ok(opts)
}

/// Writes rendered outputs into `dir` and lists the files.
pub fn write_rendered(r: &Rendered, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::runtime("io", format!("{}: {e}", dir.display())))?;
    Ok(match r {
        Rendered::Oscr(a) => a.write(dir)?,
        Rendered::Depth(png) => {
            let p = dir.join(api::DEPTH_PNG);
            write_file(&p, png)?;
            vec![p]
        }
        Rendered::Layers(layers) => {
            let mut out = Vec::new();
            for l in layers {
                let p = dir.join(l.file_name());
                write_file(&p, &l.png)?;
                out.push(p);
            }
            let p = dir.join(api::LAYERS_JSON);
            write_json(&p, &api::layers_index(layers))?;
            out.push(p);
            out
        }
    })
}

fn cmd_render(a: RenderArgs) -> Result<Value, CliError> {
    let layout = parse_layout(&read_input(&a.layout)?, &a.layout.display().to_string())?;
    let opts = load_render_options(a.alpha, a.colors.as_deref())?;
    let rendered = api::render(&layout, &opts, a.mode)?;
    let files = write_rendered(&rendered, &a.out)?;
    Ok(json!({ "ok": true, "mode": a.mode, "files": paths(&files) }))
}

fn cmd_gen(a: GenArgs) -> Result<Value, CliError> {
    let mut cfg: GenConfig = match &a.config {
        Some(p) => parse_json(&read_input(p)?, &p.display().to_string())?,
        None => GenConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n_scenes {
        cfg.n_scenes = n;
    }
    let m = generate_dataset(&cfg, &a.out)?;
    Ok(json!({
        "ok": true,
        "manifest": a.out.join(oscr_core::procgen::dataset::MANIFEST_FILE).display().to_string(),
        "accepted": m.stats.accepted,
        "candidates": m.stats.candidates,
        "acceptance_rate": m.stats.acceptance_rate,
    }))
}

fn cmd_filter(a: FilterArgs) -> Result<Value, CliError> {
    let m = load_manifest(&a.manifest)?;
    let scores = ScoresFile::parse(&read_input(&a.scores)?, &a.scores.display().to_string())?;
    let threshold = a.threshold.unwrap_or(m.config.score_threshold);
    let filtered = filter_augmentations(&m, &scores, threshold);
    let out = a.out.unwrap_or_else(|| sibling(&a.manifest, "manifest.filtered.json"));
    write_json(&out, &filtered)?;
    let f = filtered.augmentation_filter.as_ref().expect("filter info is set");
    Ok(json!({
        "ok": true,
        "manifest": out.display().to_string(),
        "threshold": threshold,
        "kept": f.kept.len(),
        "rejected": f.rejected.len(),
    }))
}

fn cmd_stats(a: StatsArgs) -> Result<Value, CliError> {
    let m = load_manifest(&a.manifest)?;
    let stats = dataset_stats(&m)?;
    let dir = a.out.unwrap_or_else(|| sibling(&a.manifest, "stats"));
    let files = stats.write(&dir)?;
    Ok(json!({ "ok": true, "files": paths(&files) }))
}

fn cmd_mask(a: MaskArgs) -> Result<Value, CliError> {
    let layout = parse_layout(&read_input(&a.layout)?, &a.layout.display().to_string())?;
    let (mask, tokens) = layout_attention_mask(&layout, a.patch, &a.personalize, a.n_appearance)?;
    mask.write(&a.out)?;
    let summary = summarize_mask(&mask, &tokens.sectors());
    Ok(json!({ "ok": true, "file": a.out.display().to_string(), "summary": summary }))
}

fn cmd_eval(a: EvalArgs) -> Result<Value, CliError> {
    let m = load_manifest(&a.manifest)?;
    let est = EstimatesFile::parse(&read_input(&a.estimates)?, &a.estimates.display().to_string())?;
    let scores = match &a.scores {
        Some(p) => Some(ScoresFile::parse(&read_input(p)?, &p.display().to_string())?),
        None => None,
    };
    let cfg = EvalConfig {
        objectness_threshold: Some(a.threshold),
    };
    let report = evaluate(&m.ground_truth(), &est, scores.as_ref(), &cfg)?;
    write_json(&a.report, &report)?;
    eprint!("{}", report.to_table());
    Ok(json!({ "ok": true, "report": a.report.display().to_string() }))
}

fn cmd_serve(a: ServeArgs) -> Result<Value, CliError> {
    let cfg = ServiceConfig {
        bind: a.bind,
        port: a.port,
        static_dir: a.static_dir,
        body_limit: a.body_limit,
        render_timeout: Duration::from_millis(a.timeout_ms),
    };
    cfg.validate()?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::runtime("io", e.to_string()))?;
    rt.block_on(service::serve(cfg))?;
    Ok(json!({ "ok": true }))
}

/// Runs one command; the value is printed as a single JSON line on success.
pub fn run(cli: Cli) -> Result<Value, CliError> {
    match cli.command {
        Command::Render(a) => cmd_render(a),
        Command::Gen(a) => cmd_gen(a),
        Command::FilterAug(a) => cmd_filter(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Mask(a) => cmd_mask(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Serve(a) => cmd_serve(a),
    }
}
