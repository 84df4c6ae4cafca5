//! Train a small multi-task UNet on patches cut from a synthetic scene.
//!
//! cargo run --release --example train_multitask -- [variant] [epochs]

use canopy::nn::Variant;
use canopy::pipeline::{prepare_patches, Imagery, PrepareConfig};
use canopy::synth::{generate_scene, SceneParams};
use canopy::train::{history_csv, train, TrainConfig};

fn main() -> canopy::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let variant: Variant = args.first().map_or(Ok(Variant::FullyShared), |s| s.parse())?;
    let epochs = args.get(1).map_or(5, |s| s.parse().expect("epochs"));

    let scene = generate_scene(&SceneParams {
        n_trees: 30,
        width: 480,
        height: 480,
        origin_y: 4_640_480.0,
        min_gap: 3.0,
        seed: 5,
        ..SceneParams::default()
    })?;
    let imagery = Imagery {
        naip: scene.naip,
        s2_10m: Some(scene.s2_10m),
        s2_20m: Some(scene.s2_20m),
    };
    let prep = PrepareConfig {
        patch_size: 120,
        ..PrepareConfig::default()
    };
    let (patches, _) = prepare_patches(&imagery, &scene.truth_mask, &scene.truth_height, None, &prep)?;
    println!("{} patches of {} bands", patches.len(), patches[0].in_bands);

    let cfg = TrainConfig {
        variant,
        depth: 2,
        base_channels: 8,
        lr: 3e-3,
        batch_size: 4,
        epochs,
        seed: 0,
        ..TrainConfig::default()
    };
    let (outcome, split) = train(&patches, &cfg)?;
    println!(
        "{} parameters, {} train / {} test patches",
        outcome.model.parameter_count(),
        split.train.len(),
        split.test.len()
    );
    print!("{}", history_csv(&outcome.history));
    Ok(())
}
