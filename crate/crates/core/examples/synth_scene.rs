//! Generate a synthetic scene and write it to disk.
//!
//! cargo run --example synth_scene -- [out_dir] [n_trees] [seed]

use std::path::PathBuf;

use canopy::aggregate::format_cover;
use canopy::pipeline::cmd_synth;
use canopy::synth::{CloudFormat, SceneParams};

fn main() -> canopy::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().map_or("scene", String::as_str));
    let params = SceneParams {
        n_trees: args.get(1).map_or(5, |s| s.parse().expect("n_trees")),
        seed: args.get(2).map_or(1, |s| s.parse().expect("seed")),
        ..SceneParams::default()
    };
    let manifest = cmd_synth(&params, &out, CloudFormat::Las)?;
    println!("{} points, planted cover {}", manifest.n_points, format_cover(manifest.planted_cover_fraction));
    for t in &manifest.trees {
        println!(
            "tree {:>2} at ({:.1}, {:.1}) apex {:.1} ft, crown radius {:.1} m",
            t.id, t.x, t.y, t.apex_height_ft, t.crown_radius_m
        );
    }
    println!("written to {}", out.display());
    Ok(())
}
