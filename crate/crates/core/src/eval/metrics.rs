use crate::error::{CanopyError, Result};
use crate::nn::Scalar;

pub const IOU_THRESHOLD: f64 = 0.5;

fn check<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(CanopyError::Shape(format!(
            "prediction has {} values, truth {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Intersection over union after binarising `pred` at `threshold` (≥) and
/// `truth` at 0.5. Two empty masks agree perfectly (1.0).
pub fn iou<T: Scalar>(pred: &[T], truth: &[T], threshold: f64) -> Result<f64> {
    check(pred, truth)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        let p = p.as_f64() >= threshold;
        let t = t.as_f64() >= 0.5;
        inter += (p && t) as usize;
        union += (p || t) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Mean absolute difference over all elements.
pub fn mae<T: Scalar>(pred: &[T], truth: &[T]) -> Result<f64> {
    check(pred, truth)?;
    if pred.is_empty() {
        return Err(CanopyError::Shape("mean absolute error of nothing".into()));
    }
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(&p, &t)| (p.as_f64() - t.as_f64()).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn iou_examples() {
        let m = [1.0f64, 0.0, 1.0, 1.0];
        assert_eq!(iou(&m, &m, IOU_THRESHOLD).unwrap(), 1.0);
        assert_eq!(iou(&[1.0f64, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 1.0], 0.5).unwrap(), 0.0);
        let v = iou(&[1.0f64, 1.0, 0.0, 0.0], &[0.0, 1.0, 1.0, 0.0], 0.5).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&[0.2f64, 0.1], &[0.0, 0.0], 0.5).unwrap(), 1.0);
        assert_eq!(iou(&[0.5f64], &[1.0], 0.5).unwrap(), 1.0);
        assert!(iou(&[0.5f64], &[1.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn mae_examples() {
        let a = [0.1f64, 0.5, 0.7];
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        assert!((mae(&b, &a).unwrap() - 0.1).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn iou_symmetric(bits in prop::collection::vec((any::<bool>(), any::<bool>()), 1..64)) {
            let a: Vec<f64> = bits.iter().map(|b| b.0 as u8 as f64).collect();
            let b: Vec<f64> = bits.iter().map(|b| b.1 as u8 as f64).collect();
            prop_assert_eq!(iou(&a, &b, 0.5).unwrap(), iou(&b, &a, 0.5).unwrap());
        }

        #[test]
        fn mae_triangle(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..64)) {
            let a: Vec<f64> = v.iter().map(|t| t.0).collect();
            let b: Vec<f64> = v.iter().map(|t| t.1).collect();
            let c: Vec<f64> = v.iter().map(|t| t.2).collect();
            prop_assert!(mae(&a, &c).unwrap() <= mae(&a, &b).unwrap() + mae(&b, &c).unwrap() + 1e-12);
        }
    }
}
