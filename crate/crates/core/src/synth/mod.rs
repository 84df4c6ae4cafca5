//! Synthetic desk-scale scenes: truncated-cone trees, flat-roofed buildings
//! and grass, rendered as a height-normalised LiDAR cloud, NAIP-like 1 m
//! imagery, Sentinel-2-like 10 m and 20 m imagery, block zones and analytic
//! truth rasters.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aggregate::{zones_to_geojson, ZonePolygon};
use crate::error::{CanopyError, Result};
use crate::geo::io::{write_geotiff, SampleType};
use crate::geo::{GridGeometry, Raster, MASK_NODATA, NODATA};
use crate::lidar::io::{write_las, write_xyz_csv};
use crate::lidar::{Point, PointCloud};

/// Heights are normalised by this many feet when building patches.
pub const HEIGHT_SCALE_FT: f64 = 80.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub n_trees: usize,
    /// Scene size in metres (1 m pixels); both must be multiples of 20.
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub origin_x: f64,
    /// Northing of the top edge.
    pub origin_y: f64,
    pub crs: String,
    pub crown_radius: (f64, f64),
    pub apex_height_ft: (f64, f64),
    /// Crown base height as a fraction of the apex height.
    pub base_fraction: f64,
    /// Minimum gap between crown edges, metres.
    pub min_gap: f64,
    pub n_buildings: usize,
    /// Returns per square metre.
    pub ground_density: f64,
    pub crown_density: f64,
    pub roof_density: f64,
    /// Zones form a `rows × cols` grid of blocks.
    pub zone_grid: (usize, usize),
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            n_trees: 5,
            width: 240,
            height: 240,
            seed: 0,
            origin_x: 443_000.0,
            origin_y: 4_640_240.0,
            crs: "EPSG:26916".into(),
            crown_radius: (5.0, 9.0),
            apex_height_ft: (30.0, 70.0),
            base_fraction: 0.6,
            min_gap: 20.0,
            n_buildings: 4,
            ground_density: 1.5,
            crown_density: 12.0,
            roof_density: 2.0,
            zone_grid: (4, 4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTree {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub apex_height_ft: f64,
    pub base_height_ft: f64,
    pub crown_radius_m: f64,
}

impl PlantedTree {
    /// Crown surface height at planar distance `d` from the apex.
    pub fn surface(&self, d: f64) -> Option<f64> {
        (d <= self.crown_radius_m).then(|| {
            self.apex_height_ft - (self.apex_height_ft - self.base_height_ft) * d / self.crown_radius_m
        })
    }

    fn distance(&self, x: f64, y: f64) -> f64 {
        (x - self.x).hypot(y - self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
    pub height_ft: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub params: SceneParams,
    pub trees: Vec<PlantedTree>,
    pub buildings: Vec<Building>,
    pub n_points: usize,
    /// Share of pixels whose centre lies within a crown.
    pub planted_cover_fraction: f64,
}

pub struct Scene {
    pub naip: Raster,
    pub s2_10m: Raster,
    pub s2_20m: Raster,
    pub cloud: PointCloud,
    pub zones: Vec<ZonePolygon>,
    /// 0/1 crown-disk mask on the 1 m grid.
    pub truth_mask: Raster,
    /// Crown surface height (ft) at pixel centres inside crowns, else 0.
    pub truth_height: Raster,
    pub manifest: Manifest,
}

#[derive(Clone, Copy, PartialEq)]
enum Cover {
    Grass,
    Impervious,
    Tree(f64),
}

/// Reflectances of one 1 m pixel: NAIP (r, g, b, nir) then the six
/// Sentinel-2 20 m bands (three red-edge, narrow NIR, two SWIR).
fn spectrum(cover: Cover) -> [f64; 10] {
    let (r, g, b, nir, swir) = match cover {
        Cover::Grass => (0.12, 0.15, 0.08, 0.30, 0.25),
        Cover::Impervious => (0.30, 0.29, 0.28, 0.22, 0.35),
        Cover::Tree(h) => {
            let t = h / HEIGHT_SCALE_FT;
            (0.04, 0.06 + 0.4 * t, 0.03, 0.45 + 0.1 * t, 0.15)
        }
    };
    [
        r,
        g,
        b,
        nir,
        0.6 * r + 0.4 * nir,
        0.3 * r + 0.7 * nir,
        0.1 * r + 0.9 * nir,
        0.98 * nir,
        swir,
        0.6 * swir,
    ]
}

fn validate(p: &SceneParams) -> Result<()> {
    if p.width == 0 || p.height == 0 || p.width % 20 != 0 || p.height % 20 != 0 {
        return Err(CanopyError::Config(format!(
            "scene size must be positive multiples of 20 m, got {}x{}",
            p.width, p.height
        )));
    }
    let (r0, r1) = p.crown_radius;
    let (h0, h1) = p.apex_height_ft;
    if !(r0 > 0.0 && r0 <= r1 && h0 > 0.0 && h0 <= h1) {
        return Err(CanopyError::Config("crown radius and height ranges must be positive and ordered".into()));
    }
    if !(p.base_fraction > 0.0 && p.base_fraction < 1.0) {
        return Err(CanopyError::Config("crown base fraction must lie in (0, 1)".into()));
    }
    if p.zone_grid.0 == 0 || p.zone_grid.1 == 0 {
        return Err(CanopyError::Config("zone grid must be at least 1x1".into()));
    }
    Ok(())
}

fn mm(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn place_trees(p: &SceneParams, rng: &mut ChaCha8Rng) -> Result<Vec<PlantedTree>> {
    let mut trees: Vec<PlantedTree> = Vec::with_capacity(p.n_trees);
    let (w, h) = (p.width as f64, p.height as f64);
    let max_attempts = 10_000 * p.n_trees.max(1);
    let mut attempts = 0;
    while trees.len() < p.n_trees {
        attempts += 1;
        if attempts > max_attempts {
            return Err(CanopyError::Config(format!(
                "could not place {} separated trees in {}x{} m (placed {})",
                p.n_trees,
                p.width,
                p.height,
                trees.len()
            )));
        }
        let radius = rng.gen_range(p.crown_radius.0..=p.crown_radius.1);
        let margin = radius + 2.0;
        if 2.0 * margin >= w || 2.0 * margin >= h {
            continue;
        }
        let x = rng.gen_range(margin..w - margin);
        let y = rng.gen_range(margin..h - margin);
        let clear = trees.iter().all(|t| {
            (t.x - p.origin_x - x).hypot(p.origin_y - t.y - y) >= t.crown_radius_m + radius + p.min_gap
        });
        if !clear {
            continue;
        }
        let apex = rng.gen_range(p.apex_height_ft.0..=p.apex_height_ft.1);
        trees.push(PlantedTree {
            id: trees.len() + 1,
            x: mm(p.origin_x + x),
            y: mm(p.origin_y - y),
            apex_height_ft: mm(apex),
            base_height_ft: p.base_fraction * mm(apex),
            crown_radius_m: radius,
        });
    }
    Ok(trees)
}

fn place_buildings(
    p: &SceneParams,
    g: &GridGeometry,
    trees: &[PlantedTree],
    rng: &mut ChaCha8Rng,
) -> Vec<Building> {
    let mut out: Vec<Building> = Vec::new();
    for _ in 0..p.n_buildings * 200 {
        if out.len() == p.n_buildings {
            break;
        }
        let rows = rng.gen_range(8..=24usize).min(p.height / 4);
        let cols = rng.gen_range(8..=24usize).min(p.width / 4);
        if rows == 0 || cols == 0 {
            break;
        }
        let row0 = rng.gen_range(0..=p.height - rows);
        let col0 = rng.gen_range(0..=p.width - cols);
        let (x0, y1) = g.pixel_center(row0, col0);
        let (x1, y0) = g.pixel_center(row0 + rows - 1, col0 + cols - 1);
        let near_tree = trees.iter().any(|t| {
            let dx = (t.x - t.x.clamp(x0, x1)).abs();
            let dy = (t.y - t.y.clamp(y0, y1)).abs();
            dx.hypot(dy) < t.crown_radius_m + 4.0
        });
        let overlaps = out.iter().any(|b| {
            row0 < b.row0 + b.rows + 2 && b.row0 < row0 + rows + 2 && col0 < b.col0 + b.cols + 2 && b.col0 < col0 + cols + 2
        });
        if !near_tree && !overlaps {
            out.push(Building {
                row0,
                col0,
                rows,
                cols,
                height_ft: rng.gen_range(15.0..45.0),
            });
        }
    }
    out
}

fn block_mean(fine: &[f64], width: usize, height: usize, factor: usize) -> Vec<f32> {
    let (w2, h2) = (width / factor, height / factor);
    let mut out = vec![0f32; w2 * h2];
    let n = (factor * factor) as f64;
    for r in 0..h2 {
        for c in 0..w2 {
            let mut s = 0.0;
            for i in 0..factor {
                let row = &fine[(r * factor + i) * width + c * factor..(r * factor + i) * width + (c + 1) * factor];
                s += row.iter().sum::<f64>();
            }
            out[r * w2 + c] = (s / n) as f32;
        }
    }
    out
}

/// Build a scene deterministically from `params`.
pub fn generate_scene(params: &SceneParams) -> Result<Scene> {
    validate(params)?;
    let p = params;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let g = GridGeometry::new(p.origin_x, p.origin_y, 1.0, p.width, p.height, p.crs.clone())?;
    let trees = place_trees(p, &mut rng)?;
    let buildings = place_buildings(p, &g, &trees, &mut rng);

    // Per-pixel cover classes; the owning tree is the one whose disk holds the centre.
    let mut cover = vec![Cover::Grass; g.len()];
    let mut owner = vec![0usize; g.len()];
    for b in &buildings {
        for r in b.row0..b.row0 + b.rows {
            for c in b.col0..b.col0 + b.cols {
                cover[g.index(r, c)] = Cover::Impervious;
            }
        }
    }
    for t in &trees {
        let (r0, c0) = g.pixel_of(t.x, t.y).expect("trees lie inside the scene");
        let reach = t.crown_radius_m.ceil() as usize + 1;
        for r in r0.saturating_sub(reach)..(r0 + reach + 1).min(g.height) {
            for c in c0.saturating_sub(reach)..(c0 + reach + 1).min(g.width) {
                let (x, y) = g.pixel_center(r, c);
                if let Some(h) = t.surface(t.distance(x, y)) {
                    cover[g.index(r, c)] = Cover::Tree(h);
                    owner[g.index(r, c)] = t.id;
                }
            }
        }
    }

    let noise = Normal::new(0.0, 0.005).expect("valid std");
    let fine: Vec<[f64; 10]> = cover
        .iter()
        .map(|&c| {
            let mut s = spectrum(c);
            for v in &mut s {
                *v = (*v + noise.sample(&mut rng)).max(0.001);
            }
            s
        })
        .collect();
    let naip_data: Vec<f32> = (0..4)
        .flat_map(|b| fine.iter().map(move |s| s[b] as f32))
        .collect();
    let naip = Raster::from_data(g.clone(), 4, naip_data, NODATA)?;
    let coarse = |bands: &[usize], gain: f64, factor: usize| -> Result<Raster> {
        let gc = g.with_pixel_size(factor as f64)?;
        let mut data = Vec::with_capacity(bands.len() * gc.len());
        for &b in bands {
            let plane: Vec<f64> = fine.iter().map(|s| gain * s[b] + 0.01).collect();
            data.extend(block_mean(&plane, p.width, p.height, factor));
        }
        Raster::from_data(gc, bands.len(), data, NODATA)
    };
    // Sentinel-2 10 m order: blue, green, red, nir.
    let s2_10m = coarse(&[2, 1, 0, 3], 0.9, 10)?;
    let s2_20m = coarse(&[4, 5, 6, 7, 8, 9], 0.9, 20)?;

    let mut points = Vec::new();
    let mut apexes = Vec::new();
    let ground_z = Normal::<f64>::new(0.0, 0.2).expect("valid std");
    let n_ground = (p.ground_density * (p.width * p.height) as f64).round() as usize;
    for _ in 0..n_ground {
        let x = p.origin_x + rng.gen_range(0.0..p.width as f64);
        let y = p.origin_y - rng.gen_range(0.0..p.height as f64);
        if let Some((r, c)) = g.pixel_of(x, y) {
            if cover[g.index(r, c)] == Cover::Impervious && buildings.iter().any(|b| {
                (b.row0..b.row0 + b.rows).contains(&r) && (b.col0..b.col0 + b.cols).contains(&c)
            }) {
                continue;
            }
        }
        points.push(Point {
            x,
            y,
            z: ground_z.sample(&mut rng).abs(),
        });
    }
    for b in &buildings {
        let area = (b.rows * b.cols) as f64;
        for _ in 0..(p.roof_density * area).round() as usize {
            let x = p.origin_x + b.col0 as f64 + rng.gen_range(0.0..b.cols as f64);
            let y = p.origin_y - b.row0 as f64 - rng.gen_range(0.0..b.rows as f64);
            points.push(Point {
                x,
                y,
                z: b.height_ft + rng.gen_range(-0.1..0.1),
            });
        }
    }
    for t in &trees {
        // The apex itself, then surface returns restricted to pixels whose
        // centre lies inside the crown so the NDVI mask keeps all of them.
        apexes.push(Point {
            x: t.x,
            y: t.y,
            z: t.apex_height_ft,
        });
        let area = std::f64::consts::PI * t.crown_radius_m * t.crown_radius_m;
        for _ in 0..(p.crown_density * area).round() as usize {
            let d = t.crown_radius_m * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let (x, y) = (t.x + d * a.cos(), t.y + d * a.sin());
            let Some((r, c)) = g.pixel_of(x, y) else { continue };
            if owner[g.index(r, c)] != t.id {
                continue;
            }
            points.push(Point {
                x,
                y,
                z: t.surface(d).expect("inside the crown"),
            });
        }
    }
    // Low shrubs and a few high outliers exercise the height filter.
    for _ in 0..(p.width * p.height / 2000) {
        let x = p.origin_x + rng.gen_range(0.0..p.width as f64);
        let y = p.origin_y - rng.gen_range(0.0..p.height as f64);
        let z = if rng.gen_bool(0.8) {
            rng.gen_range(1.0..5.0)
        } else {
            rng.gen_range(90.0..150.0)
        };
        let Some((r, c)) = g.pixel_of(x, y) else { continue };
        if cover[g.index(r, c)] == Cover::Grass {
            points.push(Point { x, y, z });
        }
    }
    // Store coordinates at LAS millimetre precision, and drop returns that
    // sit on a pixel edge where rounding could move them to a neighbour.
    let quantize = |p: Point| Point {
        x: mm(p.x),
        y: mm(p.y),
        z: mm(p.z),
    };
    let near_edge = |v: f64| (v - v.round()).abs() < 0.002;
    let mut points: Vec<Point> = points
        .into_iter()
        .map(quantize)
        .filter(|p| !near_edge(p.x - g.origin_x) && !near_edge(g.origin_y - p.y))
        .collect();
    points.extend(apexes.into_iter().map(quantize));
    let cloud = PointCloud::new(points)?;

    let mask_data: Vec<f32> = owner.iter().map(|&o| (o > 0) as u8 as f32).collect();
    let planted = mask_data.iter().filter(|&&v| v == 1.0).count() as f64 / g.len() as f64;
    let height_data: Vec<f32> = cover
        .iter()
        .map(|c| match c {
            Cover::Tree(h) => *h as f32,
            _ => 0.0,
        })
        .collect();
    let truth_mask = Raster::from_data(g.clone(), 1, mask_data, MASK_NODATA)?;
    let truth_height = Raster::from_data(g.clone(), 1, height_data, NODATA)?;

    let (zr, zc) = p.zone_grid;
    let mut zones = Vec::with_capacity(zr * zc);
    for i in 0..zr {
        for j in 0..zc {
            let x0 = p.origin_x + (j * p.width) as f64 / zc as f64;
            let x1 = p.origin_x + ((j + 1) * p.width) as f64 / zc as f64;
            let y1 = p.origin_y - (i * p.height) as f64 / zr as f64;
            let y0 = p.origin_y - ((i + 1) * p.height) as f64 / zr as f64;
            zones.push(ZonePolygon::simple(
                &format!("block-{i}-{j}"),
                vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]],
            ));
        }
    }

    let manifest = Manifest {
        params: p.clone(),
        trees,
        buildings,
        n_points: cloud.len(),
        planted_cover_fraction: planted,
    };
    Ok(Scene {
        naip,
        s2_10m,
        s2_20m,
        cloud,
        zones,
        truth_mask,
        truth_height,
        manifest,
    })
}

/// Relative paths of everything [`write_scene`] produces.
pub mod files {
    pub const POINTS_LAS: &str = "lidar/points.las";
    pub const POINTS_CSV: &str = "lidar/points.csv";
    pub const NAIP: &str = "imagery/naip.tif";
    pub const S2_10M: &str = "imagery/s2_10m.tif";
    pub const S2_20M: &str = "imagery/s2_20m.tif";
    pub const ZONES: &str = "zones.geojson";
    pub const TRUTH_MASK: &str = "truth/tree_mask.tif";
    pub const TRUTH_HEIGHT: &str = "truth/pixel_height.tif";
    pub const MANIFEST: &str = "manifest.json";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudFormat {
    #[default]
    Las,
    Csv,
}

pub fn write_scene(dir: &Path, scene: &Scene, format: CloudFormat) -> Result<()> {
    for sub in ["lidar", "imagery", "truth"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| CanopyError::io(&d, e))?;
    }
    match format {
        CloudFormat::Las => write_las(&dir.join(files::POINTS_LAS), &scene.cloud, 0.001)?,
        CloudFormat::Csv => write_xyz_csv(&dir.join(files::POINTS_CSV), &scene.cloud)?,
    }
    write_geotiff(&dir.join(files::NAIP), &scene.naip, SampleType::Float32)?;
    write_geotiff(&dir.join(files::S2_10M), &scene.s2_10m, SampleType::Float32)?;
    write_geotiff(&dir.join(files::S2_20M), &scene.s2_20m, SampleType::Float32)?;
    write_geotiff(&dir.join(files::TRUTH_MASK), &scene.truth_mask, SampleType::UInt8)?;
    write_geotiff(&dir.join(files::TRUTH_HEIGHT), &scene.truth_height, SampleType::Float32)?;
    let zones = dir.join(files::ZONES);
    fs::write(&zones, zones_to_geojson(&scene.zones)).map_err(|e| CanopyError::io(&zones, e))?;
    let manifest = dir.join(files::MANIFEST);
    let json = serde_json::to_string_pretty(&scene.manifest).expect("manifest serialises");
    fs::write(&manifest, json).map_err(|e| CanopyError::io(&manifest, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| CanopyError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CanopyError::format(path, format!("bad manifest: {e}")))
}
