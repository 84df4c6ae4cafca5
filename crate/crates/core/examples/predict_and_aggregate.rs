//! Predict a whole scene with a freshly trained model, then derive canopy
//! height, city-wide cover and per-zone statistics.

use canopy::aggregate::{canopy_height, citywide_cover, format_cover, zonal_stats, zone_stats_csv};
use canopy::geo::{Raster, MASK_NODATA};
use canopy::nn::Task;
use canopy::pipeline::{network_inputs, predict_raster, prepare_patches, Imagery, PrepareConfig};
use canopy::synth::{generate_scene, SceneParams, HEIGHT_SCALE_FT};
use canopy::train::{train, TrainConfig};

fn main() -> canopy::Result<()> {
    let scene = generate_scene(&SceneParams {
        n_trees: 10,
        min_gap: 3.0,
        seed: 2,
        ..SceneParams::default()
    })?;
    let imagery = Imagery {
        naip: scene.naip.clone(),
        s2_10m: Some(scene.s2_10m.clone()),
        s2_20m: Some(scene.s2_20m.clone()),
    };
    let prep = PrepareConfig {
        patch_size: 80,
        ..PrepareConfig::default()
    };
    let (patches, stats) = prepare_patches(&imagery, &scene.truth_mask, &scene.truth_height, None, &prep)?;
    let cfg = TrainConfig {
        depth: 2,
        base_channels: 8,
        lr: 3e-3,
        epochs: 20,
        test_fraction: 0.0,
        seed: 0,
        ..TrainConfig::default()
    };
    let (outcome, _) = train(&patches, &cfg)?;

    let inputs = network_inputs(&imagery.stack(stats.bands, prep.resampling)?, &stats)?;
    let preds = predict_raster(&outcome.model, &inputs, prep.patch_size)?;
    let probs = &preds[&Task::TreeMask];
    let binary = probs.data().iter().map(|&p| if p >= 0.5 { 1.0 } else { 0.0 }).collect();
    let mask = Raster::from_data(probs.geometry.clone(), 1, binary, MASK_NODATA)?;
    let canopy = canopy_height(&mask, &preds[&Task::PixelHeight])?;

    println!("predicted cover {}", format_cover(citywide_cover(&mask)?));
    println!("planted cover   {}", format_cover(scene.manifest.planted_cover_fraction));
    let outcomes = zonal_stats(&mask, &canopy, &scene.zones)?;
    print!("{}", zone_stats_csv(&outcomes, HEIGHT_SCALE_FT));
    Ok(())
}
