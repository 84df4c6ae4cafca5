use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{CanopyError, Result};
use crate::geo::io::read_patch_header;
use crate::geo::{BandSet, Resampling};
use crate::nn::Variant;
use crate::pipeline::commands::*;
use crate::pipeline::PipelineConfig;
use crate::synth::{CloudFormat, SceneParams};

#[derive(Debug, Parser)]
#[command(name = "canopy", version, about = "Tree cover and canopy height from LiDAR and multi-spectral imagery")]
pub struct Cli {
    /// Pipeline settings as JSON; flags override individual fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene with known trees.
    Synth(SynthArgs),
    /// Derive tree-mask and pixel-height rasters from LiDAR and NAIP.
    GroundTruth(GroundTruthArgs),
    /// Stack, scale and cut imagery plus ground truth into patches.
    Prepare(PrepareArgs),
    /// Train a UNet on a patch file.
    Train(TrainArgs),
    /// Score trained models and write the comparison table.
    Eval(EvalArgs),
    /// Run a model over full scenes.
    Predict(PredictArgs),
    /// Canopy height, city-wide cover and per-zone statistics.
    Aggregate(AggregateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub n_trees: usize,
    /// Scene width in metres (multiple of 20).
    #[arg(long, default_value_t = 240)]
    pub width: usize,
    /// Scene height in metres (multiple of 20).
    #[arg(long, default_value_t = 240)]
    pub height: usize,
    #[arg(long, default_value_t = 4)]
    pub buildings: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "las")]
    pub cloud_format: CloudFormatArg,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum CloudFormatArg {
    Las,
    Csv,
}

#[derive(Debug, Args)]
pub struct GroundTruthArgs {
    /// Height-normalised point cloud (.las or x,y,z .csv).
    #[arg(long)]
    pub lidar: PathBuf,
    /// NAIP red, green, blue, NIR GeoTIFF or ASCII grid.
    #[arg(long)]
    pub naip: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ndvi_threshold: Option<f64>,
    #[arg(long)]
    pub zmin: Option<f64>,
    #[arg(long)]
    pub zmax: Option<f64>,
    #[arg(long)]
    pub window_radius: Option<f64>,
    #[arg(long)]
    pub th_seed: Option<f64>,
    #[arg(long)]
    pub th_cr: Option<f64>,
    /// Maximum crown radius in pixels.
    #[arg(long)]
    pub max_cr: Option<f64>,
    #[arg(long)]
    pub tile_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ImageryArgs {
    #[arg(long)]
    pub naip: PathBuf,
    #[arg(long = "s2-10m")]
    pub s2_10m: Option<PathBuf>,
    #[arg(long = "s2-20m")]
    pub s2_20m: Option<PathBuf>,
}

impl ImageryArgs {
    fn read(&self) -> Result<Imagery> {
        Imagery::read(&self.naip, self.s2_10m.as_deref(), self.s2_20m.as_deref())
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub imagery: ImageryArgs,
    #[arg(long)]
    pub tree_mask: PathBuf,
    #[arg(long)]
    pub pixel_height: PathBuf,
    /// Output patch file.
    #[arg(long)]
    pub out: PathBuf,
    /// Reuse input scaling from an earlier run instead of computing it.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Where to write the scaling; defaults to `<out>.stats.json`.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
    /// rgb or ms14.
    #[arg(long)]
    pub bands: Option<BandSet>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, value_enum)]
    pub resampling: Option<ResamplingArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ResamplingArg {
    Nearest,
    Bilinear,
}

impl From<ResamplingArg> for Resampling {
    fn from(r: ResamplingArg) -> Self {
        match r {
            ResamplingArg::Nearest => Resampling::Nearest,
            ResamplingArg::Bilinear => Resampling::Bilinear,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub patches: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// fully-shared, partially-shared, tree-mask, pixel-height or aux-mask.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Checked against the patch file; inferred from it when omitted.
    #[arg(long)]
    pub bands: Option<BandSet>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub split_block: Option<usize>,
    #[arg(long)]
    pub tree_weight: Option<f64>,
    #[arg(long)]
    pub height_weight: Option<f64>,
    #[arg(long)]
    pub aux_weight: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// One patch file shared by all models, or one per model in order.
    #[arg(long = "patches", required = true)]
    pub patches: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Held-out indices written by `train`; otherwise the split is
    /// recomputed from --seed and --test-fraction (0 scores every patch).
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub split_block: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub imagery: ImageryArgs,
    /// Input scaling written by `prepare`.
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Window size; defaults to the patch size.
    #[arg(long)]
    pub tile: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub height: PathBuf,
    #[arg(long)]
    pub zones: PathBuf,
    /// Per-zone CSV; the canopy-height raster and summary go next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Multiply mean canopy heights by this (80 gives feet for normalised heights).
    #[arg(long, default_value_t = 1.0)]
    pub height_scale: f64,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

/// Execute a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => {
            set(&mut cfg.seed, a.seed.map(Some));
            let params = SceneParams {
                n_trees: a.n_trees,
                width: a.width,
                height: a.height,
                n_buildings: a.buildings,
                seed: cfg.require_seed()?,
                origin_y: SceneParams::default().origin_y - 240.0 + a.height as f64,
                ..SceneParams::default()
            };
            let format = match a.cloud_format {
                CloudFormatArg::Las => CloudFormat::Las,
                CloudFormatArg::Csv => CloudFormat::Csv,
            };
            cmd_synth(&params, &a.out, format)?;
        }
        Command::GroundTruth(a) => {
            let gt = &mut cfg.ground_truth;
            set(&mut gt.ndvi_threshold, a.ndvi_threshold);
            set(&mut gt.zmin, a.zmin);
            set(&mut gt.zmax, a.zmax);
            set(&mut gt.window_radius, a.window_radius);
            set(&mut gt.dalponte.th_seed, a.th_seed);
            set(&mut gt.dalponte.th_cr, a.th_cr);
            set(&mut gt.dalponte.max_cr, a.max_cr);
            set(&mut gt.tile_size, a.tile_size);
            cfg.validate()?;
            cmd_ground_truth(&a.lidar, &a.naip, &a.out, &cfg.ground_truth)?;
        }
        Command::Prepare(a) => {
            let p = &mut cfg.prepare;
            set(&mut p.bands, a.bands);
            set(&mut p.patch_size, a.patch_size);
            set(&mut p.stride, a.stride.map(Some));
            set(&mut p.resampling, a.resampling.map(Into::into));
            cfg.validate()?;
            let stats_out = a
                .stats_out
                .unwrap_or_else(|| PathBuf::from(format!("{}.stats.json", a.out.display())));
            cmd_prepare(
                &a.imagery.read()?,
                &a.tree_mask,
                &a.pixel_height,
                a.stats.as_deref(),
                &a.out,
                &stats_out,
                &cfg.prepare,
            )?;
        }
        Command::Train(a) => {
            set(&mut cfg.seed, a.seed.map(Some));
            let t = &mut cfg.train;
            t.seed = cfg.seed.ok_or_else(|| {
                CanopyError::Config("a seed is required (--seed or \"seed\" in the config)".into())
            })?;
            set(&mut t.variant, a.variant);
            set(&mut t.depth, a.depth);
            set(&mut t.base_channels, a.base_channels);
            set(&mut t.epochs, a.epochs);
            set(&mut t.batch_size, a.batch_size);
            set(&mut t.lr, a.lr);
            set(&mut t.test_fraction, a.test_fraction);
            set(&mut t.split_block, a.split_block.map(Some));
            set(&mut t.weights.tree, a.tree_weight);
            set(&mut t.weights.height, a.height_weight);
            set(&mut t.weights.aux, a.aux_weight);
            t.bands = match a.bands {
                Some(b) => b,
                None => {
                    let (_, _, _, in_bands) = read_patch_header(&a.patches)?;
                    BandSet::from_count(in_bands).ok_or_else(|| {
                        CanopyError::Shape(format!("patches have {in_bands} bands; expected 3 or 14"))
                    })?
                }
            };
            cmd_train(&a.patches, &a.out, &cfg.train)?;
        }
        Command::Eval(a) => {
            let split = match a.split {
                Some(path) => EvalSplit::File(path),
                None => {
                    let fraction = a.test_fraction.unwrap_or(cfg.train.test_fraction);
                    if fraction == 0.0 {
                        EvalSplit::All
                    } else {
                        EvalSplit::Recompute {
                            test_fraction: fraction,
                            seed: a.seed.or(cfg.seed).unwrap_or(cfg.train.seed),
                            block: a.split_block.or(cfg.train.split_block),
                        }
                    }
                }
            };
            let table = cmd_eval(&a.models, &a.patches, &split, &a.out)?;
            log::info!("\n{}", table.to_markdown());
        }
        Command::Predict(a) => {
            let tile = a.tile.unwrap_or(cfg.prepare.patch_size);
            cmd_predict(&a.model, &a.imagery.read()?, &a.stats, &a.out, tile, &cfg.prepare)?;
        }
        Command::Aggregate(a) => {
            if !(a.height_scale > 0.0 && a.height_scale.is_finite()) {
                return Err(CanopyError::Config(format!(
                    "height scale must be positive, got {}",
                    a.height_scale
                )));
            }
            cmd_aggregate(&a.mask, &a.height, &a.zones, &a.out, a.height_scale)?;
        }
    }
    Ok(())
}

/// Parse `args`, run, and map the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
