use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};
use crate::eval::{task_metrics, TaskMetrics};
use crate::geo::{BandSet, PatchSample};
use crate::nn::{Task, Tensor, UNetConfig, UNetModel, Variant};
use crate::train::{
    adam_step, multitask_loss, split_dataset, split_dataset_blocked, AdamConfig, AdamState,
    DatasetSplit, LossWeights, DEFAULT_TEST_FRACTION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub bands: BandSet,
    pub depth: usize,
    pub base_channels: usize,
    /// Ignored by single-task variants, which train on their own loss.
    pub weights: LossWeights,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub test_fraction: f64,
    /// Hold out runs of this many consecutive patches instead of single
    /// patches drawn uniformly.
    pub split_block: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::FullyShared,
            bands: BandSet::Ms14,
            depth: 4,
            base_channels: 32,
            weights: LossWeights::default(),
            lr: 1e-3,
            batch_size: 4,
            epochs: 50,
            seed: 0,
            test_fraction: DEFAULT_TEST_FRACTION,
            split_block: None,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self) -> UNetConfig {
        UNetConfig::new(self.variant, self.bands.count(), self.depth, self.base_channels)
    }

    pub fn effective_weights(&self) -> LossWeights {
        match self.variant {
            Variant::SingleTask(t) => LossWeights::only(t),
            _ => self.weights,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.effective_weights().validate()?;
        AdamConfig::with_lr(self.lr).validate()?;
        if self.batch_size == 0 {
            return Err(CanopyError::Config("batch size must be ≥ 1".into()));
        }
        Ok(())
    }

    /// A test fraction of 0 trains on every patch.
    pub fn split(&self, n: usize) -> Result<DatasetSplit> {
        if self.test_fraction == 0.0 {
            return Ok(DatasetSplit {
                train: (0..n).collect(),
                test: Vec::new(),
                seed: self.seed,
            });
        }
        match self.split_block {
            Some(block) => split_dataset_blocked(n, self.test_fraction, block, self.seed),
            None => split_dataset(n, self.test_fraction, self.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean weighted loss over the epoch's batches.
    pub loss: f64,
    /// Mean unweighted loss per task.
    pub task_losses: BTreeMap<Task, f64>,
    /// Held-out scores after the epoch, if there is a test set.
    pub test: Option<TaskMetrics>,
}

/// Higher is better: tree IoU, else aux IoU, else negated height MAE.
fn checkpoint_score(tasks: &[Task], m: &TaskMetrics) -> f64 {
    if tasks.contains(&Task::TreeMask) {
        m.tree_iou.unwrap_or(f64::NEG_INFINITY)
    } else if tasks.contains(&Task::AuxMask) {
        m.aux_iou.unwrap_or(f64::NEG_INFINITY)
    } else {
        -m.height_mae.unwrap_or(f64::INFINITY)
    }
}

fn targets_of(task: Task, p: &PatchSample) -> &[f32] {
    match task {
        Task::TreeMask => &p.tree_mask,
        Task::PixelHeight => &p.pixel_height,
        Task::AuxMask => &p.aux_mask,
    }
}

/// Epoch-by-epoch training with Adam and best-checkpoint tracking.
pub struct Trainer<'a> {
    weights: LossWeights,
    batch_size: usize,
    model: UNetModel<f32>,
    adam: AdamState,
    train: Vec<&'a PatchSample>,
    test: Vec<&'a PatchSample>,
    rng: ChaCha8Rng,
    history: Vec<EpochRecord>,
    best: Option<(f64, UNetModel<f32>)>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        config: &TrainConfig,
        train: Vec<&'a PatchSample>,
        test: Vec<&'a PatchSample>,
    ) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(CanopyError::Config("training needs at least one patch".into()));
        }
        let model_config = config.model_config();
        for p in train.iter().chain(&test) {
            p.validate()?;
            if p.in_bands != model_config.in_bands {
                return Err(CanopyError::Config(format!(
                    "patches have {} bands but the {} configuration needs {}",
                    p.in_bands,
                    config.bands.label(),
                    model_config.in_bands
                )));
            }
            model_config.check_spatial(p.height, p.width)?;
        }
        let model = UNetModel::init(model_config, config.seed)?;
        let adam = AdamState::new(AdamConfig::with_lr(config.lr), model.params())?;
        Ok(Self {
            weights: config.effective_weights(),
            batch_size: config.batch_size,
            model,
            adam,
            train,
            test,
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1)),
            history: Vec::new(),
            best: None,
        })
    }

    pub fn model(&self) -> &UNetModel<f32> {
        &self.model
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    /// Shuffle, run every batch once, then score the test set.
    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        let epoch = self.history.len() + 1;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut loss_sum = 0.0;
        let mut task_sums: BTreeMap<Task, f64> = BTreeMap::new();
        let batches: Vec<Vec<usize>> = order.chunks(self.batch_size).map(<[usize]>::to_vec).collect();
        for (b, batch) in batches.iter().enumerate() {
            let (loss, per_task) = self.step(batch).map_err(|e| match e {
                CanopyError::NonFinite(m) => {
                    CanopyError::NonFinite(format!("epoch {epoch}, batch {}: {m}", b + 1))
                }
                other => other,
            })?;
            loss_sum += loss;
            for (t, v) in per_task {
                *task_sums.entry(t).or_default() += v;
            }
        }
        let nb = batches.len() as f64;
        let test = if self.test.is_empty() {
            None
        } else {
            Some(task_metrics(&self.model, &self.test)?)
        };
        if let Some(m) = &test {
            let score = checkpoint_score(self.model.tasks(), m);
            if self.best.as_ref().is_none_or(|(best, _)| score > *best) {
                self.best = Some((score, self.model.clone()));
            }
        }
        let record = EpochRecord {
            epoch,
            loss: loss_sum / nb,
            task_losses: task_sums.into_iter().map(|(t, v)| (t, v / nb)).collect(),
            test,
        };
        info!("epoch {epoch}: loss {:.5}", record.loss);
        self.history.push(record);
        Ok(self.history.last().expect("just pushed"))
    }

    /// One optimiser step on the given training indices.
    fn step(&mut self, batch: &[usize]) -> Result<(f64, BTreeMap<Task, f64>)> {
        let model = &self.model;
        let samples: Vec<&PatchSample> = batch.iter().map(|&i| self.train[i]).collect();
        let caches = samples
            .par_iter()
            .map(|p| model.forward_sample(&p.inputs, p.height, p.width))
            .collect::<Result<Vec<_>>>()?;
        let mut outputs = BTreeMap::new();
        let mut targets = BTreeMap::new();
        for &task in model.tasks() {
            let mut o = Vec::new();
            let mut t = Vec::new();
            for (p, c) in samples.iter().zip(&caches) {
                o.extend_from_slice(model.output(c, task).expect("configured task"));
                t.extend_from_slice(targets_of(task, p));
            }
            outputs.insert(task, o);
            targets.insert(task, t);
        }
        let loss = multitask_loss(&outputs, &targets, &self.weights)?;
        if !loss.total.is_finite() {
            return Err(CanopyError::NonFinite(format!("loss is {}", loss.total)));
        }
        let mut offset = 0;
        let mut slices: Vec<BTreeMap<Task, Vec<f32>>> = Vec::with_capacity(samples.len());
        for p in &samples {
            let n = p.pixels();
            slices.push(
                loss.grads
                    .iter()
                    .map(|(&t, g)| (t, g[offset..offset + n].to_vec()))
                    .collect(),
            );
            offset += n;
        }
        let per_sample: Vec<Vec<Tensor<f32>>> = caches
            .par_iter()
            .zip(&slices)
            .map(|(c, d)| {
                let mut g = model.zero_grads();
                model.backward_sample(c, d, &mut g).map(|_| g)
            })
            .collect::<Result<_>>()?;
        let mut grads = model.zero_grads();
        for g in &per_sample {
            for (acc, gi) in grads.iter_mut().zip(g) {
                acc.add_assign(gi);
            }
        }
        let names = self.model.param_names().to_vec();
        adam_step(self.model.params_mut(), &grads, &mut self.adam, &names)?;
        Ok((loss.total, loss.per_task))
    }

    /// Best checkpoint by held-out score (the final model when there is no
    /// test set), the final model, and the history.
    pub fn finish(self) -> TrainOutcome {
        let last = self.model;
        let best = match self.best {
            Some((_, m)) => m,
            None => last.clone(),
        };
        TrainOutcome {
            model: best,
            last,
            history: self.history,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: UNetModel<f32>,
    pub last: UNetModel<f32>,
    pub history: Vec<EpochRecord>,
}

/// Split `patches`, train for `config.epochs`, return the best checkpoint.
pub fn train(patches: &[PatchSample], config: &TrainConfig) -> Result<(TrainOutcome, DatasetSplit)> {
    config.validate()?;
    let split = config.split(patches.len())?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| &patches[i]).collect::<Vec<_>>();
    let mut trainer = Trainer::new(config, pick(&split.train), pick(&split.test))?;
    for _ in 0..config.epochs {
        trainer.run_epoch()?;
    }
    Ok((trainer.finish(), split))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `epoch,loss,<task>_loss…,test_tree_iou,test_height_mae,test_aux_iou`;
/// absent values are empty fields.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss");
    for t in Task::ALL {
        let _ = write!(out, ",{t}_loss");
    }
    out.push_str(",test_tree_iou,test_height_mae,test_aux_iou\n");
    for r in history {
        let _ = write!(out, "{},{}", r.epoch, r.loss);
        for t in Task::ALL {
            let _ = write!(out, ",{}", opt(r.task_losses.get(&t).copied()));
        }
        let m = r.test.unwrap_or_default();
        let _ = writeln!(out, ",{},{},{}", opt(m.tree_iou), opt(m.height_mae), opt(m.aux_iou));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Inputs whose first band equals the tree mask, so the mapping is learnable.
    fn toy_patches(n: usize, size: usize) -> Vec<PatchSample> {
        (0..n)
            .map(|k| {
                let px = size * size;
                let tree: Vec<f32> = (0..px)
                    .map(|i| {
                        let (r, c) = (i / size, i % size);
                        let (cr, cc) = ((k * 3) % size, (k * 5) % size);
                        let d2 = (r as isize - cr as isize).pow(2) + (c as isize - cc as isize).pow(2);
                        (d2 <= 9) as u8 as f32
                    })
                    .collect();
                let height: Vec<f32> = tree.iter().map(|t| t * 0.6).collect();
                let aux: Vec<f32> = tree.iter().map(|t| 1.0 - t).collect();
                let mut inputs = tree.clone();
                inputs.extend(tree.iter().map(|t| 0.5 - 0.3 * t));
                inputs.extend(vec![0.2; px]);
                PatchSample {
                    in_bands: 3,
                    height: size,
                    width: size,
                    inputs,
                    tree_mask: tree,
                    pixel_height: height,
                    aux_mask: aux,
                }
            })
            .collect()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            bands: BandSet::Rgb,
            depth: 1,
            base_channels: 4,
            lr: 1e-2,
            batch_size: 2,
            epochs: 3,
            seed: 42,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let patches = toy_patches(8, 16);
        let cfg = TrainConfig {
            epochs: 0,
            ..small_config()
        };
        let (out, split) = train(&patches, &cfg).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(split.test.len(), 2);
        let init = UNetModel::<f32>::init(cfg.model_config(), cfg.seed).unwrap();
        assert_eq!(out.model.params(), init.params());
    }

    #[test]
    fn same_seed_same_history() {
        let patches = toy_patches(8, 16);
        let (a, _) = train(&patches, &small_config()).unwrap();
        let (b, _) = train(&patches, &small_config()).unwrap();
        assert_eq!(history_csv(&a.history), history_csv(&b.history));
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(a.history.len(), 3);
        assert!(a.history.iter().all(|r| r.test.is_some()));
    }

    #[test]
    fn loss_decreases_on_learnable_data() {
        let patches = toy_patches(4, 16);
        let refs: Vec<&PatchSample> = patches.iter().collect();
        let cfg = small_config();
        let mut t = Trainer::new(&cfg, refs, Vec::new()).unwrap();
        let first = t.run_epoch().unwrap().loss;
        for _ in 0..30 {
            t.run_epoch().unwrap();
        }
        let last = t.history().last().unwrap().loss;
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn band_mismatch_is_config_error() {
        let patches = toy_patches(8, 16);
        let cfg = TrainConfig {
            bands: BandSet::Ms14,
            ..small_config()
        };
        assert!(matches!(train(&patches, &cfg), Err(CanopyError::Config(_))));
    }

    #[test]
    fn history_csv_layout() {
        let rec = EpochRecord {
            epoch: 1,
            loss: 0.5,
            task_losses: [(Task::TreeMask, 0.25)].into_iter().collect(),
            test: None,
        };
        let csv = history_csv(&[rec]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "epoch,loss,tree_mask_loss,pixel_height_loss,aux_mask_loss,test_tree_iou,test_height_mae,test_aux_iou"
        );
        assert_eq!(lines[1], "1,0.5,0.25,,,,,");
    }
}
