use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{CanopyError, Result};

pub type Ring = Vec<[f64; 2]>;

/// One polygon: an exterior ring followed by zero or more holes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonRings {
    pub exterior: Ring,
    pub holes: Vec<Ring>,
}

/// A zone: one or more polygons sharing an id.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonePolygon {
    pub id: String,
    pub polygons: Vec<PolygonRings>,
}

impl ZonePolygon {
    pub fn simple(id: &str, exterior: Ring) -> Self {
        Self {
            id: id.to_string(),
            polygons: vec![PolygonRings {
                exterior,
                holes: Vec::new(),
            }],
        }
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        self.polygons
            .iter()
            .flat_map(|p| std::iter::once(&p.exterior).chain(&p.holes))
    }

    /// Rings must be closed, have ≥ 3 distinct vertices and not cross
    /// themselves.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.polygons.is_empty() {
            return Err("zone has no polygons".into());
        }
        for (k, ring) in self.rings().enumerate() {
            if ring.iter().flatten().any(|v| !v.is_finite()) {
                return Err(format!("ring {k} has a non-finite coordinate"));
            }
            if ring.len() < 4 {
                return Err(format!("ring {k} has fewer than 3 vertices"));
            }
            if ring.first() != ring.last() {
                return Err(format!("ring {k} is not closed"));
            }
            if let Some((a, b)) = self_intersection(ring) {
                return Err(format!("ring {k} self-intersects at edges {a} and {b}"));
            }
        }
        Ok(())
    }

    /// Even-odd containment over all rings.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        for ring in self.rings() {
            for e in ring.windows(2) {
                let ([xi, yi], [xj, yj]) = (e[0], e[1]);
                if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// `(min_x, min_y, max_x, max_y)` of all vertices.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &[x, y] in self.rings().flatten() {
            b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
        }
        b
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_touch(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// First pair of non-adjacent edges that touch, if any.
fn self_intersection(ring: &Ring) -> Option<(usize, usize)> {
    let n = ring.len() - 1;
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Adjacent edges share one vertex; they still must not fold back.
                let (a, b, c) = if j == i + 1 {
                    (ring[i], ring[i + 1], ring[j + 1])
                } else {
                    (ring[j], ring[0], ring[1])
                };
                if orient(a, b, c) == 0.0 && (b[0] - a[0]) * (c[0] - b[0]) + (b[1] - a[1]) * (c[1] - b[1]) < 0.0 {
                    return Some((i, j));
                }
                continue;
            }
            if segments_touch(ring[i], ring[i + 1], ring[j], ring[j + 1]) {
                return Some((i, j));
            }
        }
    }
    None
}

fn parse_ring(v: &Value) -> Option<Ring> {
    v.as_array()?
        .iter()
        .map(|p| {
            let a = p.as_array()?;
            Some([a.first()?.as_f64()?, a.get(1)?.as_f64()?])
        })
        .collect()
}

fn parse_polygon(v: &Value) -> Option<PolygonRings> {
    let rings: Vec<Ring> = v.as_array()?.iter().map(parse_ring).collect::<Option<_>>()?;
    let mut it = rings.into_iter();
    Some(PolygonRings {
        exterior: it.next()?,
        holes: it.collect(),
    })
}

/// Read Polygon / MultiPolygon features from a GeoJSON FeatureCollection.
/// The zone id is the feature `id`, else `properties.id`, else its index.
pub fn read_zones_geojson(path: &Path) -> Result<Vec<ZonePolygon>> {
    let text = fs::read_to_string(path).map_err(|e| CanopyError::io(path, e))?;
    parse_zones_geojson(path, &text)
}

pub fn parse_zones_geojson(path: &Path, text: &str) -> Result<Vec<ZonePolygon>> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| CanopyError::format(path, format!("bad GeoJSON: {e}")))?;
    let features = doc["features"]
        .as_array()
        .ok_or_else(|| CanopyError::format(path, "expected a FeatureCollection"))?;
    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let id = match (&f["id"], &f["properties"]["id"]) {
                (Value::String(s), _) | (_, Value::String(s)) => s.clone(),
                (Value::Number(n), _) | (_, Value::Number(n)) => n.to_string(),
                _ => i.to_string(),
            };
            let geom = &f["geometry"];
            let bad = || CanopyError::format(path, format!("feature {id}: malformed geometry"));
            let polygons = match geom["type"].as_str() {
                Some("Polygon") => vec![parse_polygon(&geom["coordinates"]).ok_or_else(bad)?],
                Some("MultiPolygon") => geom["coordinates"]
                    .as_array()
                    .ok_or_else(bad)?
                    .iter()
                    .map(|p| parse_polygon(p).ok_or_else(bad))
                    .collect::<Result<_>>()?,
                other => {
                    return Err(CanopyError::format(
                        path,
                        format!("feature {id}: unsupported geometry {other:?}"),
                    ))
                }
            };
            Ok(ZonePolygon { id, polygons })
        })
        .collect()
}

/// Serialise zones as a GeoJSON FeatureCollection of Polygon features.
pub fn zones_to_geojson(zones: &[ZonePolygon]) -> String {
    let features: Vec<Value> = zones
        .iter()
        .map(|z| {
            let coords: Vec<Value> = z
                .polygons
                .iter()
                .map(|p| {
                    serde_json::json!(std::iter::once(&p.exterior)
                        .chain(&p.holes)
                        .collect::<Vec<_>>())
                })
                .collect();
            let geometry = if coords.len() == 1 {
                serde_json::json!({"type": "Polygon", "coordinates": coords[0]})
            } else {
                serde_json::json!({"type": "MultiPolygon", "coordinates": coords})
            };
            serde_json::json!({
                "type": "Feature",
                "id": z.id,
                "properties": {"id": z.id},
                "geometry": geometry,
            })
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "type": "FeatureCollection",
        "features": features,
    }))
    .expect("JSON values serialise")
}
