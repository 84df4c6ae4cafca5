//! Seeded region-growing crown delineation (Dalponte & Coomes).
//!
//! All crowns grow in synchronous rounds. In each round every crown, taken
//! in descending seed height, looks at the 4-neighbours of all its current
//! pixels; an unlabelled neighbour joins when it is
//!
//! - higher than `th_seed` × seed height,
//! - higher than `th_cr` × the crown's mean height at the start of the round,
//! - at least `th_tree`,
//! - within `max_cr` pixels (Euclidean) of the seed.
//!
//! A pixel reachable from several crowns goes to the one processed first.
//! Growth stops after a round that adds nothing.

use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};
use crate::geo::{GridGeometry, Raster};
use crate::lidar::TreeTop;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DalponteParams {
    pub th_seed: f64,
    pub th_cr: f64,
    /// Minimum height (ft) of a crown pixel.
    pub th_tree: f64,
    /// Maximum distance from the seed, in pixels.
    pub max_cr: f64,
}

impl Default for DalponteParams {
    fn default() -> Self {
        Self {
            th_seed: 0.45,
            th_cr: 0.55,
            th_tree: 6.0,
            max_cr: 10.0,
        }
    }
}

impl DalponteParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("th_seed", self.th_seed), ("th_cr", self.th_cr)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(CanopyError::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.max_cr >= 0.0) || !self.th_tree.is_finite() {
            return Err(CanopyError::Config(format!(
                "max_cr must be ≥ 0 and th_tree finite, got {} / {}",
                self.max_cr, self.th_tree
            )));
        }
        Ok(())
    }
}

/// Per-pixel crown labels: 0 = no tree, k > 0 = crown of treetop k.
#[derive(Debug, Clone, PartialEq)]
pub struct CrownMap {
    pub geometry: GridGeometry,
    pub labels: Vec<u32>,
}

impl CrownMap {
    pub fn label(&self, row: usize, col: usize) -> u32 {
        self.labels[self.geometry.index(row, col)]
    }

    pub fn crown_size(&self, id: u32) -> usize {
        self.labels.iter().filter(|&&l| l == id).count()
    }
}

pub fn dalponte_segment(chm: &Raster, tops: &[TreeTop], params: &DalponteParams) -> Result<CrownMap> {
    params.validate()?;
    chm.require_single_band("CHM")?;
    let g = &chm.geometry;
    let (h, w) = (g.height, g.width);
    let mut labels = vec![0u32; g.len()];

    let mut order: Vec<&TreeTop> = tops.iter().collect();
    order.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.id.cmp(&b.id)));

    struct Crown {
        id: u32,
        seed: (usize, usize),
        seed_height: f64,
        members: Vec<usize>,
        sum: f64,
    }
    let mut crowns = Vec::with_capacity(order.len());
    for t in &order {
        if t.row >= h || t.col >= w {
            return Err(CanopyError::Shape(format!(
                "treetop {} at ({}, {}) lies outside the CHM",
                t.id, t.row, t.col
            )));
        }
        let idx = g.index(t.row, t.col);
        if labels[idx] != 0 {
            return Err(CanopyError::Config(format!(
                "treetops {} and {} share a pixel",
                labels[idx], t.id
            )));
        }
        labels[idx] = t.id;
        let seed_value = chm.value(t.row, t.col).map_or(t.height, f64::from);
        crowns.push(Crown {
            id: t.id,
            seed: (t.row, t.col),
            seed_height: t.height,
            members: vec![idx],
            sum: seed_value,
        });
    }

    let max_cr2 = params.max_cr * params.max_cr;
    loop {
        let means: Vec<f64> = crowns
            .iter()
            .map(|c| c.sum / c.members.len() as f64)
            .collect();
        let mut grown = false;
        for (crown, mean) in crowns.iter_mut().zip(means) {
            let mut added = Vec::new();
            for &idx in &crown.members {
                let (r, c) = (idx / w, idx % w);
                let neighbours = [
                    (r.wrapping_sub(1), c),
                    (r, c.wrapping_sub(1)),
                    (r, c + 1),
                    (r + 1, c),
                ];
                for (nr, nc) in neighbours {
                    if nr >= h || nc >= w {
                        continue;
                    }
                    let nidx = g.index(nr, nc);
                    if labels[nidx] != 0 {
                        continue;
                    }
                    let Some(v) = chm.value(nr, nc) else { continue };
                    let v = v as f64;
                    let dr = nr as f64 - crown.seed.0 as f64;
                    let dc = nc as f64 - crown.seed.1 as f64;
                    if v > params.th_seed * crown.seed_height
                        && v > params.th_cr * mean
                        && v >= params.th_tree
                        && dr * dr + dc * dc <= max_cr2
                    {
                        labels[nidx] = crown.id;
                        added.push((nidx, v));
                    }
                }
            }
            if !added.is_empty() {
                grown = true;
                for (idx, v) in added {
                    crown.members.push(idx);
                    crown.sum += v;
                }
            }
        }
        if !grown {
            break;
        }
    }
    Ok(CrownMap {
        geometry: g.clone(),
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::NODATA;
    use crate::lidar::local_maxima;

    /// Full-grid-scan region growing with the same round semantics.
    fn oracle(chm: &Raster, tops: &[TreeTop], p: &DalponteParams) -> Vec<u32> {
        let g = &chm.geometry;
        let mut labels = vec![0u32; g.len()];
        let mut order: Vec<&TreeTop> = tops.iter().collect();
        order.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.id.cmp(&b.id)));
        for t in &order {
            labels[g.index(t.row, t.col)] = t.id;
        }
        loop {
            let snapshot = labels.clone();
            let mean = |id: u32| {
                let vals: Vec<f64> = (0..g.len())
                    .filter(|&i| snapshot[i] == id)
                    .map(|i| chm.data()[i] as f64)
                    .collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            let mut changed = false;
            for t in &order {
                let m = mean(t.id);
                for r in 0..g.height {
                    for c in 0..g.width {
                        if snapshot[g.index(r, c)] != t.id {
                            continue;
                        }
                        for (dr, dc) in [(-1i64, 0i64), (0, -1), (0, 1), (1, 0)] {
                            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                            if nr < 0 || nc < 0 || nr >= g.height as i64 || nc >= g.width as i64 {
                                continue;
                            }
                            let i = g.index(nr as usize, nc as usize);
                            let v = chm.data()[i];
                            if labels[i] != 0 || v == NODATA {
                                continue;
                            }
                            let v = v as f64;
                            let d2 = (nr - t.row as i64).pow(2) + (nc - t.col as i64).pow(2);
                            if v > p.th_seed * t.height
                                && v > p.th_cr * m
                                && v >= p.th_tree
                                && (d2 as f64) <= p.max_cr * p.max_cr
                            {
                                labels[i] = t.id;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                return labels;
            }
        }
    }

    /// Truncated cone: crown base at 60 % of apex height, zero outside.
    fn cones(size: usize, trees: &[(f64, f64, f64, f64)]) -> Raster {
        let g = GridGeometry::new(0.0, size as f64, 1.0, size, size, "t").unwrap();
        let mut r = Raster::filled(g, 1, 0.0, NODATA);
        for row in 0..size {
            for col in 0..size {
                let mut best = 0.0f64;
                for &(ar, ac, height, radius) in trees {
                    let d = ((row as f64 - ar).powi(2) + (col as f64 - ac).powi(2)).sqrt();
                    if d <= radius {
                        best = best.max(height * (0.6 + 0.4 * (1.0 - d / radius)));
                    }
                }
                r.set(0, row, col, best as f32);
            }
        }
        r
    }

    fn is_four_connected(map: &CrownMap, id: u32, seed: (usize, usize)) -> bool {
        let g = &map.geometry;
        let mut seen = vec![false; g.len()];
        let mut stack = vec![seed];
        seen[g.index(seed.0, seed.1)] = true;
        let mut count = 0;
        while let Some((r, c)) = stack.pop() {
            count += 1;
            for (nr, nc) in [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)] {
                if nr < g.height && nc < g.width {
                    let i = g.index(nr, nc);
                    if !seen[i] && map.labels[i] == id {
                        seen[i] = true;
                        stack.push((nr, nc));
                    }
                }
            }
        }
        count == map.crown_size(id)
    }

    #[test]
    fn empty_tops_give_empty_map() {
        let chm = cones(8, &[(4.0, 4.0, 30.0, 3.0)]);
        let map = dalponte_segment(&chm, &[], &DalponteParams::default()).unwrap();
        assert!(map.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn single_cone_matches_oracle() {
        let chm = cones(32, &[(15.0, 16.0, 50.0, 7.0)]);
        let tops = local_maxima(&chm, 3.0, 6.0).unwrap();
        assert_eq!(tops.len(), 1);
        let p = DalponteParams::default();
        let map = dalponte_segment(&chm, &tops, &p).unwrap();
        assert_eq!(map.labels, oracle(&chm, &tops, &p));
        assert_eq!(map.label(15, 16), 1);
        // Every pixel of the cone passes all thresholds here.
        let cone_pixels = chm.data().iter().filter(|&&v| v > 0.0).count();
        assert_eq!(map.crown_size(1), cone_pixels);
    }

    #[test]
    fn separated_cones_are_disjoint() {
        let chm = cones(32, &[(6.0, 6.0, 40.0, 5.0), (26.0, 26.0, 60.0, 5.0)]);
        let tops = local_maxima(&chm, 3.0, 6.0).unwrap();
        assert_eq!(tops.len(), 2);
        let p = DalponteParams::default();
        let map = dalponte_segment(&chm, &tops, &p).unwrap();
        assert_eq!(map.labels, oracle(&chm, &tops, &p));
        for t in &tops {
            assert_eq!(map.label(t.row, t.col), t.id);
            assert!(is_four_connected(&map, t.id, (t.row, t.col)));
        }
    }

    #[test]
    fn touching_crowns_follow_processing_order() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..25 {
            let trees: Vec<_> = (0..4)
                .map(|_| {
                    (
                        rng.gen_range(4.0..28.0),
                        rng.gen_range(4.0..28.0),
                        rng.gen_range(20.0..70.0),
                        rng.gen_range(3.0..8.0),
                    )
                })
                .collect();
            let chm = cones(32, &trees);
            let tops = local_maxima(&chm, 2.0, 6.0).unwrap();
            let p = DalponteParams {
                max_cr: rng.gen_range(2.0..10.0),
                ..DalponteParams::default()
            };
            let map = dalponte_segment(&chm, &tops, &p).unwrap();
            assert_eq!(map.labels, oracle(&chm, &tops, &p));
            for t in &tops {
                assert_eq!(map.label(t.row, t.col), t.id);
                assert!(is_four_connected(&map, t.id, (t.row, t.col)));
            }
        }
    }

    #[test]
    fn thresholds_outside_unit_interval_rejected() {
        let chm = cones(4, &[]);
        for p in [
            DalponteParams { th_seed: 0.0, ..Default::default() },
            DalponteParams { th_cr: 1.0, ..Default::default() },
        ] {
            assert!(matches!(dalponte_segment(&chm, &[], &p), Err(CanopyError::Config(_))));
        }
    }
}
