//! Derive tree-mask and pixel-height labels from LiDAR and NAIP, and check
//! them against the trees planted in a synthetic scene.

use canopy::eval::{iou, IOU_THRESHOLD};
use canopy::pipeline::{ground_truth, GroundTruthConfig};
use canopy::synth::{generate_scene, SceneParams};

fn main() -> canopy::Result<()> {
    let scene = generate_scene(&SceneParams {
        n_trees: 8,
        seed: 3,
        ..SceneParams::default()
    })?;
    let gt = ground_truth(&scene.cloud, &scene.naip, &GroundTruthConfig::default())?;
    println!("{} of {} returns kept", gt.points_kept, scene.cloud.len());
    println!("{} treetops found for {} planted trees", gt.treetops.len(), scene.manifest.trees.len());
    for top in &gt.treetops {
        let (x, y) = gt.tree_mask.geometry.pixel_center(top.row, top.col);
        let nearest = scene
            .manifest
            .trees
            .iter()
            .min_by(|a, b| f64::hypot(a.x - x, a.y - y).total_cmp(&f64::hypot(b.x - x, b.y - y)))
            .expect("planted trees");
        println!(
            "  top {:>2} at row {:>3} col {:>3}: {:.2} ft (planted apex {:.2} ft)",
            top.id, top.row, top.col, top.height, nearest.apex_height_ft
        );
    }
    let score = iou(gt.tree_mask.data(), scene.truth_mask.data(), IOU_THRESHOLD)?;
    println!("tree-mask IoU against planted crowns: {score:.3}");
    Ok(())
}
