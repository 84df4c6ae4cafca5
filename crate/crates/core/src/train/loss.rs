use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};
use crate::nn::{Scalar, Task};

pub const DEFAULT_SMOOTH: f64 = 1.0;

fn check_same_len<T>(pred: &[T], target: &[T]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(CanopyError::Shape(format!(
            "prediction has {} values, target {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<(f64, Vec<T>)> {
    check_same_len(pred, target)?;
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let d = p.as_f64() - y.as_f64();
            sum += d * d;
            T::from_f64(2.0 * d / n)
        })
        .collect();
    Ok((sum / n, grad))
}

/// Soft Jaccard distance `1 − (Σpy + s) / (Σp + Σy − Σpy + s)` and its
/// gradient with respect to `pred`. Sums run over every element given, so a
/// batch is scored as one pooled mask.
pub fn jaccard_loss<T: Scalar>(pred: &[T], target: &[T], smooth: f64) -> Result<(f64, Vec<T>)> {
    check_same_len(pred, target)?;
    if !(smooth > 0.0) {
        return Err(CanopyError::Config(format!("jaccard smoothing must be > 0, got {smooth}")));
    }
    let (mut inter, mut sp, mut sy) = (0.0, 0.0, 0.0);
    for (&p, &y) in pred.iter().zip(target) {
        let (p, y) = (p.as_f64(), y.as_f64());
        inter += p * y;
        sp += p;
        sy += y;
    }
    let num = inter + smooth;
    let den = sp + sy - inter + smooth;
    let loss = 1.0 - num / den;
    // d(num/den)/dp_i = (y_i·den − num·(1 − y_i)) / den²
    let grad = target
        .iter()
        .map(|&y| {
            let y = y.as_f64();
            T::from_f64(-(y * den - num * (1.0 - y)) / (den * den))
        })
        .collect();
    Ok((loss, grad))
}

/// Per-task loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub tree: f64,
    pub height: f64,
    pub aux: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            tree: 1.0,
            height: 0.5,
            aux: 0.25,
        }
    }
}

impl LossWeights {
    /// Weight 1 on `task`, 0 elsewhere.
    pub fn only(task: Task) -> Self {
        let mut w = Self {
            tree: 0.0,
            height: 0.0,
            aux: 0.0,
        };
        *w.get_mut(task) = 1.0;
        w
    }

    pub fn get(&self, task: Task) -> f64 {
        match task {
            Task::TreeMask => self.tree,
            Task::PixelHeight => self.height,
            Task::AuxMask => self.aux,
        }
    }

    fn get_mut(&mut self, task: Task) -> &mut f64 {
        match task {
            Task::TreeMask => &mut self.tree,
            Task::PixelHeight => &mut self.height,
            Task::AuxMask => &mut self.aux,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.tree, self.height, self.aux];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(CanopyError::Config(format!(
                "loss weights must be finite and non-negative, got {all:?}"
            )));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(CanopyError::Config("all loss weights are zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskLoss<T> {
    pub total: f64,
    /// Unweighted loss of every task present in both outputs and targets.
    pub per_task: BTreeMap<Task, f64>,
    /// Weighted gradient for each output with a non-zero weight.
    pub grads: BTreeMap<Task, Vec<T>>,
}

/// Loss of one task's prediction: Jaccard for masks, MSE for height.
pub fn task_loss<T: Scalar>(task: Task, pred: &[T], target: &[T]) -> Result<(f64, Vec<T>)> {
    if task.is_mask() {
        jaccard_loss(pred, target, DEFAULT_SMOOTH)
    } else {
        mse_loss(pred, target)
    }
}

/// `w_tree·J(tree) + w_height·MSE(height) + w_aux·J(aux)`. Tasks without an
/// output contribute nothing; an output without a target is an error.
pub fn multitask_loss<T: Scalar>(
    outputs: &BTreeMap<Task, Vec<T>>,
    targets: &BTreeMap<Task, Vec<T>>,
    weights: &LossWeights,
) -> Result<MultiTaskLoss<T>> {
    weights.validate()?;
    let mut out = MultiTaskLoss {
        total: 0.0,
        per_task: BTreeMap::new(),
        grads: BTreeMap::new(),
    };
    for (&task, pred) in outputs {
        let target = targets.get(&task).ok_or_else(|| {
            CanopyError::Config(format!("no target supplied for the {task} output"))
        })?;
        let (loss, grad) = task_loss(task, pred, target)?;
        out.per_task.insert(task, loss);
        let w = weights.get(task);
        if w > 0.0 {
            out.total += w * loss;
            let wt = T::from_f64(w);
            out.grads.insert(task, grad.into_iter().map(|g| g * wt).collect());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        let y = [0.2f64, 0.4, 0.9];
        assert_eq!(mse_loss(&y, &y).unwrap().0, 0.0);
        let p: Vec<f64> = y.iter().map(|v| v + 0.1).collect();
        assert!((mse_loss(&p, &y).unwrap().0 - 0.01).abs() < 1e-15);
        assert!(mse_loss(&p[..2], &y).is_err());
    }

    #[test]
    fn jaccard_examples() {
        let y = [1.0f64, 0.0, 1.0, 1.0];
        assert_eq!(jaccard_loss(&y, &y, 1.0).unwrap().0, 0.0);
        assert_eq!(jaccard_loss(&[0.0f64; 5], &[0.0; 5], 1.0).unwrap().0, 0.0);
        let l = jaccard_loss(&[0.5f64, 0.5], &[1.0, 0.0], 1.0).unwrap().0;
        assert!((l - 0.4).abs() < 1e-15);
        assert!(jaccard_loss(&[0.5f64], &[1.0], 0.0).is_err());
    }

    #[test]
    fn weights_validation_and_scaling() {
        let outputs: BTreeMap<Task, Vec<f64>> = Task::ALL
            .iter()
            .map(|&t| (t, vec![0.3, 0.6, 0.2, 0.8]))
            .collect();
        let targets: BTreeMap<Task, Vec<f64>> = Task::ALL
            .iter()
            .map(|&t| (t, vec![0.0, 1.0, 0.0, 1.0]))
            .collect();
        let zero = LossWeights {
            tree: 0.0,
            height: 0.0,
            aux: 0.0,
        };
        assert!(matches!(
            multitask_loss(&outputs, &targets, &zero),
            Err(CanopyError::Config(_))
        ));
        let tree_only = multitask_loss(&outputs, &targets, &LossWeights::only(Task::TreeMask)).unwrap();
        let j = jaccard_loss(&outputs[&Task::TreeMask], &targets[&Task::TreeMask], 1.0).unwrap().0;
        assert_eq!(tree_only.total, j);
        let base = multitask_loss(&outputs, &targets, &LossWeights::default()).unwrap();
        let scaled = multitask_loss(
            &outputs,
            &targets,
            &LossWeights {
                tree: 3.0,
                height: 1.5,
                aux: 0.75,
            },
        )
        .unwrap();
        assert!((scaled.total - 3.0 * base.total).abs() < 1e-12);
    }
}
