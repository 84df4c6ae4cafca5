//! Compare a highest-return canopy height model with the pit-free one on a
//! synthetic crown whose interior has a few low returns.

use canopy::geo::{GridGeometry, NODATA};
use canopy::lidar::{naive_chm, pitfree_chm, PitFreeParams, Point, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> canopy::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = GridGeometry::new(0.0, 40.0, 1.0, 40, 40, "local")?;
    let points = (0..4000)
        .map(|_| {
            let (x, y) = (rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0));
            let d = f64::hypot(x - 20.0, y - 20.0);
            let mut z = if d < 12.0 { 60.0 * (1.0 - 0.6 * d / 12.0) } else { rng.gen_range(0.0..0.5) };
            // Returns that slipped through the crown.
            if d < 12.0 && rng.gen_bool(0.08) {
                z = rng.gen_range(0.0..10.0);
            }
            Point { x, y, z }
        })
        .collect();
    let cloud = PointCloud::new(points)?;
    let naive = naive_chm(&cloud, &grid);
    let pitfree = pitfree_chm(&cloud, &grid, &PitFreeParams::default())?;

    let (mut pits, mut filled, mut gap) = (0, 0, 0.0f64);
    for (&a, &b) in naive.data().iter().zip(pitfree.data()) {
        if a == NODATA || b == NODATA {
            continue;
        }
        if b - a > 5.0 {
            pits += 1;
            gap = gap.max(f64::from(b - a));
        }
        if b > a {
            filled += 1;
        }
    }
    let empty = naive.data().iter().filter(|&&v| v == NODATA).count();
    println!("naive CHM: {empty} empty pixels");
    println!("pit-free CHM raised {filled} pixels; {pits} pits deeper than 5 ft, largest {gap:.1} ft");
    Ok(())
}
