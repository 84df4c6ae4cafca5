//! Run the whole command-line pipeline in a scratch directory, exactly as
//! the `canopy` binary would.

use canopy::pipeline::cli::main_with_args;

fn run(args: &[&str]) {
    println!("$ canopy {}", args.join(" "));
    let code = main_with_args(std::iter::once("canopy").chain(args.iter().copied()));
    assert_eq!(code, 0, "canopy {} failed", args[0]);
}

fn main() {
    let dir = tempfile::tempdir().expect("scratch dir");
    std::env::set_current_dir(dir.path()).expect("cd");
    run(&["synth", "--out", "scene", "--n-trees", "12", "--width", "480", "--height", "480", "--seed", "4"]);
    run(&["ground-truth", "--lidar", "scene/lidar/points.las", "--naip", "scene/imagery/naip.tif", "--out", "gt"]);
    let imagery = ["--naip", "scene/imagery/naip.tif", "--s2-10m", "scene/imagery/s2_10m.tif", "--s2-20m", "scene/imagery/s2_20m.tif"];
    let mut prepare = vec!["prepare"];
    prepare.extend(imagery);
    prepare.extend(["--tree-mask", "gt/tree_mask.tif", "--pixel-height", "gt/pixel_height.tif", "--out", "patches.bin"]);
    run(&prepare);
    run(&["train", "--patches", "patches.bin", "--out", "run", "--seed", "1", "--depth", "2", "--base-channels", "4", "--epochs", "2"]);
    run(&["eval", "--model", "run/model.cnpm", "--patches", "patches.bin", "--split", "run/split.json", "--out", "report"]);
    let mut predict = vec!["predict", "--model", "run/model.cnpm", "--stats", "patches.bin.stats.json", "--out", "pred"];
    predict.extend(imagery);
    run(&predict);
    run(&["aggregate", "--mask", "gt/tree_mask.tif", "--height", "gt/pixel_height.tif", "--zones", "scene/zones.geojson", "--out", "agg/zones.csv"]);
    println!("{}", std::fs::read_to_string("report/results.md").expect("report"));
    println!("{}", std::fs::read_to_string("agg/summary.json").expect("summary"));
}
