//! Canopy height from predictions, city-wide cover and per-zone statistics.

mod stats;
mod zones;

pub use stats::{
    canopy_height, citywide_cover, format_cover, zonal_stats, zone_stats_csv, ZoneOutcome,
    ZoneStats,
};
pub use zones::{
    parse_zones_geojson, read_zones_geojson, zones_to_geojson, PolygonRings, Ring, ZonePolygon,
};
