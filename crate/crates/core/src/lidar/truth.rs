use crate::error::Result;
use crate::geo::{Raster, MASK_NODATA, NODATA};
use crate::lidar::CrownMap;

/// Ground-truth layers from a crown map and its CHM.
///
/// The tree mask is 1 on labelled pixels and 0 elsewhere. Pixel height is
/// the CHM value wherever it is defined and 0 otherwise, so the height
/// target is dense.
pub fn rasterize_truth(crowns: &CrownMap, chm: &Raster) -> Result<(Raster, Raster)> {
    chm.require_single_band("CHM")?;
    crowns.geometry.ensure_same_grid(&chm.geometry)?;
    let mask = crowns
        .labels
        .iter()
        .map(|&l| if l > 0 { 1.0 } else { 0.0 })
        .collect();
    let height = chm
        .data()
        .iter()
        .map(|&v| if chm.is_nodata(v) { 0.0 } else { v })
        .collect();
    Ok((
        Raster::from_data(chm.geometry.clone(), 1, mask, MASK_NODATA)?,
        Raster::from_data(chm.geometry.clone(), 1, height, NODATA)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GridGeometry;

    #[test]
    fn mask_and_height() {
        let g = GridGeometry::new(0.0, 4.0, 1.0, 4, 4, "t").unwrap();
        let mut labels = vec![0u32; 16];
        for l in labels.iter_mut().take(12) {
            *l = 1;
        }
        let crowns = CrownMap {
            geometry: g.clone(),
            labels,
        };
        let mut chm_data = vec![12.0f32; 16];
        chm_data[15] = NODATA;
        chm_data[13] = 40.0;
        let chm = Raster::from_data(g, 1, chm_data, NODATA).unwrap();
        let (mask, height) = rasterize_truth(&crowns, &chm).unwrap();
        assert_eq!(mask.data().iter().filter(|&&v| v == 1.0).count(), 12);
        assert_eq!(mask.data()[13], 0.0);
        assert_eq!(height.data()[13], 40.0);
        assert_eq!(height.data()[15], 0.0);
    }

    #[test]
    fn grid_mismatch() {
        let g = GridGeometry::new(0.0, 2.0, 1.0, 2, 2, "t").unwrap();
        let crowns = CrownMap {
            geometry: g,
            labels: vec![0; 4],
        };
        let g2 = GridGeometry::new(0.0, 2.0, 1.0, 2, 1, "t").unwrap();
        let chm = Raster::filled(g2, 1, 0.0, NODATA);
        assert!(rasterize_truth(&crowns, &chm).is_err());
    }
}
