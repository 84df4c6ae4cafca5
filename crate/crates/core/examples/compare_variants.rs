//! Train every model variant briefly on the same patches and print the
//! comparison table.

use canopy::eval::{evaluate, results_table};
use canopy::nn::{Task, Variant};
use canopy::pipeline::{prepare_patches, Imagery, PrepareConfig};
use canopy::synth::{generate_scene, SceneParams};
use canopy::train::{train, TrainConfig};

fn main() -> canopy::Result<()> {
    let scene = generate_scene(&SceneParams {
        n_trees: 12,
        seed: 8,
        ..SceneParams::default()
    })?;
    let imagery = Imagery {
        naip: scene.naip,
        s2_10m: Some(scene.s2_10m),
        s2_20m: Some(scene.s2_20m),
    };
    let prep = PrepareConfig {
        patch_size: 80,
        ..PrepareConfig::default()
    };
    let (patches, _) = prepare_patches(&imagery, &scene.truth_mask, &scene.truth_height, None, &prep)?;

    let mut variants = vec![Variant::FullyShared, Variant::PartiallyShared];
    variants.extend(Task::ALL.map(Variant::SingleTask));
    let mut rows = Vec::new();
    for variant in variants {
        let cfg = TrainConfig {
            variant,
            depth: 2,
            base_channels: 4,
            lr: 3e-3,
            epochs: 8,
            seed: 1,
            ..TrainConfig::default()
        };
        let (outcome, split) = train(&patches, &cfg)?;
        let held_out: Vec<_> = split.test.iter().map(|&i| patches[i].clone()).collect();
        rows.push(evaluate(&outcome.model, &held_out)?);
    }
    print!("{}", results_table(rows)?.to_markdown());
    Ok(())
}
