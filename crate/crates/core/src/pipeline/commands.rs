use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{
    canopy_height, citywide_cover, format_cover, read_zones_geojson, zonal_stats, zone_stats_csv,
    ZoneOutcome,
};
use crate::error::{CanopyError, Result};
use crate::eval::{evaluate, results_table, ResultsTable};
use crate::geo::io::{read_patch_header, read_patches, read_raster, write_patches, write_raster, SampleType};
use crate::geo::{
    extract_patches, fill_nodata, mosaic, ndvi, normalize, normalize_height, resample_to, stack,
    window_origins, BandSet, BandStats, MosaicReducer, PatchSample, PatchTargets, Raster,
    RasterStack, MASK_NODATA, MS_ROLES, NODATA, RGB_ROLES,
};
use crate::lidar::io::read_point_cloud;
use crate::lidar::{
    dalponte_segment, filter_height, local_maxima, mask_by_ndvi, pitfree_chm, rasterize_truth,
    PointCloud, TreeTop,
};
use crate::nn::{load_model, save_model, Task, Tensor, UNetModel};
use crate::pipeline::{GroundTruthConfig, PrepareConfig};
use crate::synth::{generate_scene, write_scene, CloudFormat, Manifest, SceneParams};
use crate::train::{history_csv, train, DatasetSplit, TrainConfig};

/// Output file names.
pub mod outputs {
    pub const TREE_MASK: &str = "tree_mask.tif";
    pub const PIXEL_HEIGHT: &str = "pixel_height.tif";
    pub const CHM: &str = "chm.tif";
    pub const TREETOPS: &str = "treetops.csv";
    pub const MODEL: &str = "model.cnpm";
    pub const HISTORY: &str = "history.csv";
    pub const SPLIT: &str = "split.json";
    pub const TRAIN_CONFIG: &str = "train_config.json";
    pub const RESULTS_CSV: &str = "results.csv";
    pub const RESULTS_MD: &str = "results.md";
    pub const CANOPY_HEIGHT: &str = "canopy_height.tif";
    pub const SUMMARY: &str = "summary.json";
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CanopyError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CanopyError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serialises");
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CanopyError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CanopyError::format(path, e.to_string()))
}

/// Copy a pixel window out of `r`.
pub fn crop(r: &Raster, row0: usize, col0: usize, height: usize, width: usize) -> Result<Raster> {
    let g = r.geometry.window(row0, col0, height, width)?;
    let mut data = Vec::with_capacity(r.bands() * height * width);
    for b in 0..r.bands() {
        let band = r.band(b);
        for row in row0..row0 + height {
            let start = r.geometry.index(row, col0);
            data.extend_from_slice(&band[start..start + width]);
        }
    }
    Raster::from_data(g, r.bands(), data, r.nodata)
}

pub fn cmd_synth(params: &SceneParams, out_dir: &Path, format: CloudFormat) -> Result<Manifest> {
    let scene = generate_scene(params)?;
    ensure_dir(out_dir)?;
    write_scene(out_dir, &scene, format)?;
    info!(
        "synthetic scene: {} trees, {} points, planted cover {}",
        scene.manifest.trees.len(),
        scene.manifest.n_points,
        format_cover(scene.manifest.planted_cover_fraction)
    );
    Ok(scene.manifest)
}

/// Ground-truth layers on the NAIP grid.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub tree_mask: Raster,
    pub pixel_height: Raster,
    pub chm: Raster,
    /// Row/column refer to the full grid; ids are renumbered 1.. in tile order.
    pub treetops: Vec<TreeTop>,
    pub points_kept: usize,
}

/// NDVI from the red (band 0) and NIR (band 3) of a NAIP raster.
pub fn naip_ndvi(naip: &Raster) -> Result<Raster> {
    if naip.bands() < 4 {
        return Err(CanopyError::Shape(format!(
            "NAIP imagery needs red, green, blue and NIR bands, got {} bands",
            naip.bands()
        )));
    }
    ndvi(&naip.band_raster(3), &naip.band_raster(0))
}

struct TileResult {
    mask: Raster,
    height: Raster,
    chm: Raster,
    tops: Vec<TreeTop>,
}

fn ground_truth_tile(
    cloud: &PointCloud,
    naip_grid: &crate::geo::GridGeometry,
    (r0, c0, th, tw): (usize, usize, usize, usize),
    cfg: &GroundTruthConfig,
) -> Result<TileResult> {
    let buf = cfg.tile_buffer;
    let (br0, bc0) = (r0.saturating_sub(buf), c0.saturating_sub(buf));
    let br1 = (r0 + th + buf).min(naip_grid.height);
    let bc1 = (c0 + tw + buf).min(naip_grid.width);
    let gb = naip_grid.window(br0, bc0, br1 - br0, bc1 - bc0)?;
    let points: Vec<_> = cloud
        .points
        .iter()
        .filter(|p| gb.pixel_of(p.x, p.y).is_some())
        .copied()
        .collect();
    let local = PointCloud { points };
    let empty = |geom: &crate::geo::GridGeometry| -> Result<TileResult> {
        let g = geom.window(r0 - br0, c0 - bc0, th, tw)?;
        Ok(TileResult {
            mask: Raster::filled(g.clone(), 1, 0.0, MASK_NODATA),
            height: Raster::filled(g.clone(), 1, 0.0, NODATA),
            chm: Raster::nodata_filled(g, 1, NODATA),
            tops: Vec::new(),
        })
    };
    let chm = match pitfree_chm(&local, &gb, &cfg.pitfree) {
        Ok(chm) => chm,
        Err(CanopyError::Degenerate(msg)) => {
            if !local.is_empty() {
                warn!("tile at ({r0}, {c0}): {msg}; writing an empty tile");
            }
            return empty(&gb);
        }
        Err(e) => return Err(e),
    };
    let tops = local_maxima(&chm, cfg.window_radius, cfg.zmin)?;
    let crowns = dalponte_segment(&chm, &tops, &cfg.dalponte)?;
    let (mask, height) = rasterize_truth(&crowns, &chm)?;
    let (wr, wc) = (r0 - br0, c0 - bc0);
    let tops = tops
        .into_iter()
        .filter(|t| (wr..wr + th).contains(&t.row) && (wc..wc + tw).contains(&t.col))
        .map(|t| TreeTop {
            row: t.row + br0,
            col: t.col + bc0,
            ..t
        })
        .collect();
    Ok(TileResult {
        mask: crop(&mask, wr, wc, th, tw)?,
        height: crop(&height, wr, wc, th, tw)?,
        chm: crop(&chm, wr, wc, th, tw)?,
        tops,
    })
}

/// NDVI masking, height filtering, pit-free CHM, treetops, crown
/// segmentation and rasterization, tile by tile, mosaicked onto the NAIP grid.
pub fn ground_truth(cloud: &PointCloud, naip: &Raster, cfg: &GroundTruthConfig) -> Result<GroundTruth> {
    let ndvi = naip_ndvi(naip)?;
    let vegetation = mask_by_ndvi(cloud, &ndvi, cfg.ndvi_threshold)?;
    let kept = filter_height(&vegetation, cfg.zmin, cfg.zmax)?;
    info!(
        "{} of {} returns pass the NDVI and height filters",
        kept.len(),
        cloud.len()
    );
    let g = &naip.geometry;
    let t = cfg.tile_size;
    let windows: Vec<_> = (0..g.height.div_ceil(t))
        .flat_map(|i| (0..g.width.div_ceil(t)).map(move |j| (i * t, j * t)))
        .map(|(r0, c0)| (r0, c0, t.min(g.height - r0), t.min(g.width - c0)))
        .collect();
    let tiles: Vec<TileResult> = windows
        .par_iter()
        .map(|&w| ground_truth_tile(&kept, g, w, cfg))
        .collect::<Result<_>>()?;
    let mut treetops: Vec<TreeTop> = tiles.iter().flat_map(|t| t.tops.iter().copied()).collect();
    for (i, top) in treetops.iter_mut().enumerate() {
        top.id = i as u32 + 1;
    }
    let merge = |pick: fn(&TileResult) -> &Raster| -> Result<Raster> {
        let parts: Vec<Raster> = tiles.iter().map(|t| pick(t).clone()).collect();
        let mut out = mosaic(&parts, MosaicReducer::First)?;
        out.geometry = g.clone();
        Ok(out)
    };
    Ok(GroundTruth {
        tree_mask: merge(|t| &t.mask)?,
        pixel_height: merge(|t| &t.height)?,
        chm: merge(|t| &t.chm)?,
        treetops,
        points_kept: kept.len(),
    })
}

pub fn cmd_ground_truth(
    cloud_path: &Path,
    naip_path: &Path,
    out_dir: &Path,
    cfg: &GroundTruthConfig,
) -> Result<GroundTruth> {
    let cloud = read_point_cloud(cloud_path)?;
    let naip = read_raster(naip_path)?;
    let gt = ground_truth(&cloud, &naip, cfg)?;
    ensure_dir(out_dir)?;
    write_raster(&out_dir.join(outputs::TREE_MASK), &gt.tree_mask, SampleType::UInt8)?;
    write_raster(&out_dir.join(outputs::PIXEL_HEIGHT), &gt.pixel_height, SampleType::Float32)?;
    write_raster(&out_dir.join(outputs::CHM), &gt.chm, SampleType::Float32)?;
    let mut csv = String::from("id,row,col,x,y,height\n");
    for t in &gt.treetops {
        let (x, y) = naip.geometry.pixel_center(t.row, t.col);
        csv.push_str(&format!("{},{},{},{x},{y},{}\n", t.id, t.row, t.col, t.height));
    }
    write_text(&out_dir.join(outputs::TREETOPS), &csv)?;
    info!("{} treetops detected", gt.treetops.len());
    Ok(gt)
}

/// Imagery feeding the network.
#[derive(Debug, Clone)]
pub struct Imagery {
    /// 1 m red, green, blue, NIR.
    pub naip: Raster,
    /// 10 m, four bands; required for the 14-band set.
    pub s2_10m: Option<Raster>,
    /// 20 m, six bands; required for the 14-band set.
    pub s2_20m: Option<Raster>,
}

impl Imagery {
    pub fn read(naip: &Path, s2_10m: Option<&Path>, s2_20m: Option<&Path>) -> Result<Self> {
        Ok(Self {
            naip: read_raster(naip)?,
            s2_10m: s2_10m.map(read_raster).transpose()?,
            s2_20m: s2_20m.map(read_raster).transpose()?,
        })
    }

    /// Resample onto the NAIP grid and stack the bands of `bands`.
    pub fn stack(&self, bands: BandSet, resampling: crate::geo::Resampling) -> Result<RasterStack> {
        let naip = &self.naip;
        let need = match bands {
            BandSet::Rgb => 3,
            BandSet::Ms14 => 4,
        };
        if naip.bands() < need {
            return Err(CanopyError::Shape(format!(
                "band set {} needs {need} NAIP bands, got {}",
                bands.label(),
                naip.bands()
            )));
        }
        if bands == BandSet::Rgb {
            let rgb = crop_bands(naip, 3)?;
            return stack(&[&rgb], &RGB_ROLES);
        }
        let fetch = |r: &Option<Raster>, name: &str, n: usize| -> Result<Raster> {
            let r = r.as_ref().ok_or_else(|| {
                CanopyError::Config(format!("band set {} needs the {name} imagery", bands.label()))
            })?;
            if r.bands() != n {
                return Err(CanopyError::Shape(format!(
                    "{name} imagery must have {n} bands, got {}",
                    r.bands()
                )));
            }
            resample_to(r, &naip.geometry, resampling)
        };
        let s10 = fetch(&self.s2_10m, "Sentinel-2 10 m", 4)?;
        let s20 = fetch(&self.s2_20m, "Sentinel-2 20 m", 6)?;
        let naip4 = crop_bands(naip, 4)?;
        stack(&[&naip4, &s10, &s20], &MS_ROLES)
    }
}

fn crop_bands(r: &Raster, n: usize) -> Result<Raster> {
    if r.bands() == n {
        return Ok(r.clone());
    }
    let len = r.geometry.len();
    Raster::from_data(r.geometry.clone(), n, r.data()[..n * len].to_vec(), r.nodata)
}

/// Scaling applied to network inputs and height targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputStats {
    pub bands: BandSet,
    pub roles: Vec<String>,
    #[serde(flatten)]
    pub stats: BandStats,
    pub height_max: f32,
}

/// Scale a stack with `stats` and replace nodata by 0.
pub fn network_inputs(stack: &RasterStack, stats: &InputStats) -> Result<Raster> {
    if stats.roles != stack.band_roles {
        return Err(CanopyError::Shape(format!(
            "stats describe bands {:?}, stack has {:?}",
            stats.roles, stack.band_roles
        )));
    }
    let (scaled, warnings) = normalize(stack, &stats.stats)?;
    for w in warnings {
        warn!("band {} ({}) is constant at {}; set to 0", w.band, w.role, w.value);
    }
    Ok(fill_nodata(&scaled.raster, 0.0))
}

/// Impervious surface: NDVI < 0. Nodata counts as not impervious.
pub fn impervious_mask(naip: &Raster) -> Result<Raster> {
    let ndvi = naip_ndvi(naip)?;
    let data = ndvi
        .data()
        .iter()
        .map(|&v| (!ndvi.is_nodata(v) && v < 0.0) as u8 as f32)
        .collect();
    Raster::from_data(ndvi.geometry.clone(), 1, data, MASK_NODATA)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareSummary {
    pub n_patches: usize,
    pub stats: InputStats,
}

/// Patches from imagery and ground truth. Input scaling comes from
/// `stats` when given, otherwise it is computed from this scene.
pub fn prepare_patches(
    imagery: &Imagery,
    tree_mask: &Raster,
    pixel_height: &Raster,
    stats: Option<InputStats>,
    cfg: &PrepareConfig,
) -> Result<(Vec<PatchSample>, InputStats)> {
    let stacked = imagery.stack(cfg.bands, cfg.resampling)?;
    let stats = match stats {
        Some(s) => {
            if s.bands != cfg.bands {
                return Err(CanopyError::Shape(format!(
                    "stats are for {}, preparing {}",
                    s.bands.label(),
                    cfg.bands.label()
                )));
            }
            s
        }
        None => InputStats {
            bands: cfg.bands,
            roles: stacked.band_roles.clone(),
            stats: BandStats::compute(&stacked.raster),
            height_max: cfg.height_max,
        },
    };
    let inputs = network_inputs(&stacked, &stats)?;
    let inputs = RasterStack {
        raster: inputs,
        band_roles: stacked.band_roles,
    };
    let mask = fill_nodata(tree_mask, 0.0);
    let height = fill_nodata(&normalize_height(pixel_height, stats.height_max)?, 0.0);
    let aux = impervious_mask(&imagery.naip)?;
    let patches = extract_patches(
        &inputs,
        PatchTargets {
            tree_mask: &mask,
            pixel_height: &height,
            aux_mask: &aux,
        },
        cfg.patch_size,
        cfg.stride(),
    )?;
    Ok((patches.into_iter().map(|p| p.sample).collect(), stats))
}

pub fn cmd_prepare(
    imagery: &Imagery,
    tree_mask: &Path,
    pixel_height: &Path,
    stats_in: Option<&Path>,
    out: &Path,
    stats_out: &Path,
    cfg: &PrepareConfig,
) -> Result<PrepareSummary> {
    let mask = read_raster(tree_mask)?;
    let height = read_raster(pixel_height)?;
    let stats = stats_in.map(read_json::<InputStats>).transpose()?;
    let (patches, stats) = prepare_patches(imagery, &mask, &height, stats, cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_patches(out, &patches)?;
    write_json(stats_out, &stats)?;
    info!("{} patches of {} bands written", patches.len(), cfg.bands.count());
    Ok(PrepareSummary {
        n_patches: patches.len(),
        stats,
    })
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub model: UNetModel<f32>,
    pub split: DatasetSplit,
    pub epochs: usize,
}

pub fn cmd_train(patches_path: &Path, out_dir: &Path, cfg: &TrainConfig) -> Result<TrainSummary> {
    let (_, _, _, in_bands) = read_patch_header(patches_path)?;
    if in_bands != cfg.bands.count() {
        return Err(CanopyError::Shape(format!(
            "patches have {in_bands} bands, training configured for {} ({})",
            cfg.bands.count(),
            cfg.bands.label()
        )));
    }
    let patches = read_patches(patches_path)?;
    let (outcome, split) = train(&patches, cfg)?;
    ensure_dir(out_dir)?;
    save_model(&out_dir.join(outputs::MODEL), &outcome.model)?;
    write_text(&out_dir.join(outputs::HISTORY), &history_csv(&outcome.history))?;
    write_json(&out_dir.join(outputs::SPLIT), &split)?;
    write_json(&out_dir.join(outputs::TRAIN_CONFIG), cfg)?;
    Ok(TrainSummary {
        model: outcome.model,
        split,
        epochs: outcome.history.len(),
    })
}

/// Which patches a model is scored on.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalSplit {
    All,
    /// Held-out indices of a split recomputed as in training.
    Recompute {
        test_fraction: f64,
        seed: u64,
        block: Option<usize>,
    },
    /// Held-out indices from a `split.json` written by training.
    File(PathBuf),
}

impl EvalSplit {
    fn select(&self, n: usize) -> Result<Vec<usize>> {
        match self {
            EvalSplit::All => Ok((0..n).collect()),
            EvalSplit::Recompute {
                test_fraction,
                seed,
                block,
            } => {
                let cfg = TrainConfig {
                    test_fraction: *test_fraction,
                    seed: *seed,
                    split_block: *block,
                    ..TrainConfig::default()
                };
                Ok(cfg.split(n)?.test)
            }
            EvalSplit::File(path) => {
                let split: DatasetSplit = read_json(path)?;
                if let Some(&i) = split.test.iter().find(|&&i| i >= n) {
                    return Err(CanopyError::format(
                        path,
                        format!("test index {i} out of range for {n} patches"),
                    ));
                }
                Ok(split.test)
            }
        }
    }
}

/// Score each model on its patch file (one shared file or one per model).
pub fn cmd_eval(
    models: &[PathBuf],
    patches: &[PathBuf],
    split: &EvalSplit,
    out_dir: &Path,
) -> Result<ResultsTable> {
    if models.is_empty() || !(patches.len() == 1 || patches.len() == models.len()) {
        return Err(CanopyError::Config(format!(
            "need at least one model and one patch file per model or a single shared one ({} models, {} patch files)",
            models.len(),
            patches.len()
        )));
    }
    let mut rows = Vec::with_capacity(models.len());
    for (i, model_path) in models.iter().enumerate() {
        let model = load_model(model_path)?;
        let patch_path = &patches[if patches.len() == 1 { 0 } else { i }];
        let all = read_patches(patch_path)?;
        if let Some(p) = all.first() {
            if p.in_bands != model.config().in_bands {
                return Err(CanopyError::Shape(format!(
                    "{} expects {} bands, {} has {}",
                    model_path.display(),
                    model.config().in_bands,
                    patch_path.display(),
                    p.in_bands
                )));
            }
        }
        let chosen: Vec<PatchSample> = split
            .select(all.len())?
            .into_iter()
            .map(|k| all[k].clone())
            .collect();
        let row = evaluate(&model, &chosen)?;
        info!("{} ({}): {:?}", row.model_label(), row.bands.label(), row.metrics);
        rows.push(row);
    }
    let table = results_table(rows)?;
    ensure_dir(out_dir)?;
    write_text(&out_dir.join(outputs::RESULTS_CSV), &table.to_csv())?;
    write_text(&out_dir.join(outputs::RESULTS_MD), &table.to_markdown())?;
    Ok(table)
}

/// Run `model` over `inputs` in non-overlapping `tile × tile` windows.
/// Edge windows are zero-padded to full size and cropped back.
pub fn predict_raster(model: &UNetModel<f32>, inputs: &Raster, tile: usize) -> Result<BTreeMap<Task, Raster>> {
    let cfg = model.config();
    if inputs.bands() != cfg.in_bands {
        return Err(CanopyError::Shape(format!(
            "model expects {} input bands, got {}",
            cfg.in_bands,
            inputs.bands()
        )));
    }
    cfg.check_spatial(tile, tile)?;
    let g = &inputs.geometry;
    let bands = inputs.bands();
    let origins: Vec<(usize, usize)> = (0..g.height.div_ceil(tile))
        .flat_map(|i| (0..g.width.div_ceil(tile)).map(move |j| (i * tile, j * tile)))
        .collect();
    let mut out: BTreeMap<Task, Raster> = cfg
        .tasks
        .iter()
        .map(|&t| (t, Raster::filled(g.clone(), 1, 0.0, NODATA)))
        .collect();
    let px = tile * tile;
    for chunk in origins.chunks(8) {
        let mut batch = vec![0f32; chunk.len() * bands * px];
        for (k, &(r0, c0)) in chunk.iter().enumerate() {
            let (th, tw) = (tile.min(g.height - r0), tile.min(g.width - c0));
            for b in 0..bands {
                let band = inputs.band(b);
                for r in 0..th {
                    let src = g.index(r0 + r, c0);
                    let dst = (k * bands + b) * px + r * tile;
                    batch[dst..dst + tw].copy_from_slice(&band[src..src + tw]);
                }
            }
        }
        let batch = Tensor::from_vec(&[chunk.len(), bands, tile, tile], batch)?;
        let preds = model.forward(&batch)?;
        for (task, pred) in &preds {
            let raster = out.get_mut(task).expect("model task");
            for (k, &(r0, c0)) in chunk.iter().enumerate() {
                let (th, tw) = (tile.min(g.height - r0), tile.min(g.width - c0));
                for r in 0..th {
                    let src = k * px + r * tile;
                    let dst = g.index(r0 + r, c0);
                    raster.data_mut()[dst..dst + tw].copy_from_slice(&pred.data()[src..src + tw]);
                }
            }
        }
    }
    Ok(out)
}

pub fn cmd_predict(
    model_path: &Path,
    imagery: &Imagery,
    stats_path: &Path,
    out_dir: &Path,
    tile: usize,
    cfg: &PrepareConfig,
) -> Result<BTreeMap<Task, Raster>> {
    let model = load_model(model_path)?;
    let stats: InputStats = read_json(stats_path)?;
    let stacked = imagery.stack(stats.bands, cfg.resampling)?;
    let inputs = network_inputs(&stacked, &stats)?;
    let preds = predict_raster(&model, &inputs, tile)?;
    ensure_dir(out_dir)?;
    for (task, raster) in &preds {
        write_raster(&out_dir.join(format!("{task}.tif")), raster, SampleType::Float32)?;
    }
    Ok(preds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub citywide_cover: f64,
    pub cover_label: String,
    pub zones: usize,
    pub invalid_zones: usize,
}

/// Canopy height, city-wide cover and per-zone statistics. Writes the
/// zone CSV to `out_csv`, and the canopy-height raster and a JSON summary
/// next to it.
pub fn cmd_aggregate(
    mask_path: &Path,
    height_path: &Path,
    zones_path: &Path,
    out_csv: &Path,
    height_scale: f64,
) -> Result<AggregateSummary> {
    let mask = read_raster(mask_path)?;
    let height = read_raster(height_path)?;
    let zones = read_zones_geojson(zones_path)?;
    let canopy = canopy_height(&mask, &height)?;
    let cover = citywide_cover(&mask)?;
    let outcomes = zonal_stats(&mask, &canopy, &zones)?;
    let invalid = outcomes
        .iter()
        .filter(|o| matches!(o, ZoneOutcome::Invalid { .. }))
        .count();
    for o in &outcomes {
        if let ZoneOutcome::Invalid { zone_id, reason } = o {
            warn!("zone {zone_id} skipped: {reason}");
        }
    }
    let dir = out_csv.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    ensure_dir(dir)?;
    write_text(out_csv, &zone_stats_csv(&outcomes, height_scale))?;
    write_raster(&dir.join(outputs::CANOPY_HEIGHT), &canopy, SampleType::Float32)?;
    let summary = AggregateSummary {
        citywide_cover: cover,
        cover_label: format_cover(cover),
        zones: outcomes.len(),
        invalid_zones: invalid,
    };
    write_json(&dir.join(outputs::SUMMARY), &summary)?;
    info!("city-wide tree cover {}", summary.cover_label);
    Ok(summary)
}

/// Expected patch count of a scene, for checking prepared files.
pub fn expected_patch_count(height: usize, width: usize, cfg: &PrepareConfig) -> usize {
    window_origins(height, width, cfg.patch_size, cfg.stride()).len()
}
