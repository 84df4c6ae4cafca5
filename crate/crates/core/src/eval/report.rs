use std::borrow::Borrow;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};
use crate::eval::{iou, mae, IOU_THRESHOLD};
use crate::geo::{BandSet, PatchSample};
use crate::nn::{Task, UNetModel, Variant};

pub const REPORT_COLUMNS: [&str; 5] = [
    "Model",
    "Bands Used",
    "Tree Mask IoU",
    "Height MAE",
    "Auxiliary IoU",
];

/// Per-task scores, present only for tasks the model predicts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub tree_iou: Option<f64>,
    pub height_mae: Option<f64>,
    pub aux_iou: Option<f64>,
}

impl TaskMetrics {
    pub fn get(&self, task: Task) -> Option<f64> {
        match task {
            Task::TreeMask => self.tree_iou,
            Task::PixelHeight => self.height_mae,
            Task::AuxMask => self.aux_iou,
        }
    }

    fn slot(&mut self, task: Task) -> &mut Option<f64> {
        match task {
            Task::TreeMask => &mut self.tree_iou,
            Task::PixelHeight => &mut self.height_mae,
            Task::AuxMask => &mut self.aux_iou,
        }
    }
}

/// Score one patch: IoU for mask heads, MAE for the height head.
pub fn patch_metrics(model: &UNetModel<f32>, patch: &PatchSample) -> Result<TaskMetrics> {
    patch.validate()?;
    let cache = model.forward_sample(&patch.inputs, patch.height, patch.width)?;
    let mut m = TaskMetrics::default();
    for &task in model.tasks() {
        let pred = model.output(&cache, task).expect("configured task");
        let value = match task {
            Task::TreeMask => iou(pred, &patch.tree_mask, IOU_THRESHOLD)?,
            Task::AuxMask => iou(pred, &patch.aux_mask, IOU_THRESHOLD)?,
            Task::PixelHeight => mae(pred, &patch.pixel_height)?,
        };
        *m.slot(task) = Some(value);
    }
    Ok(m)
}

/// Unweighted mean of per-patch metrics.
pub fn task_metrics<P>(model: &UNetModel<f32>, patches: &[P]) -> Result<TaskMetrics>
where
    P: Borrow<PatchSample> + Sync,
{
    if patches.is_empty() {
        return Err(CanopyError::Config("evaluation needs at least one patch".into()));
    }
    let per_patch = patches
        .par_iter()
        .map(|p| patch_metrics(model, p.borrow()))
        .collect::<Result<Vec<_>>>()?;
    let mut mean = TaskMetrics::default();
    for &task in model.tasks() {
        let sum: f64 = per_patch.iter().map(|m| m.get(task).unwrap_or(0.0)).sum();
        *mean.slot(task) = Some(sum / per_patch.len() as f64);
    }
    Ok(mean)
}

/// Row label of a model variant.
pub fn model_label(variant: Variant) -> &'static str {
    match variant {
        Variant::SingleTask(Task::TreeMask) => "Tree Mask Alone",
        Variant::SingleTask(Task::PixelHeight) => "Pixel Height Alone",
        Variant::SingleTask(Task::AuxMask) => "Auxiliary Mask",
        Variant::FullyShared => "MT Fully Shared",
        Variant::PartiallyShared => "MT Partially Shared",
    }
}

fn variant_rank(variant: Variant) -> usize {
    match variant {
        Variant::SingleTask(Task::TreeMask) => 0,
        Variant::SingleTask(Task::PixelHeight) => 1,
        Variant::SingleTask(Task::AuxMask) => 2,
        Variant::FullyShared => 3,
        Variant::PartiallyShared => 4,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: Variant,
    pub bands: BandSet,
    #[serde(flatten)]
    pub metrics: TaskMetrics,
}

impl MetricsRow {
    pub fn model_label(&self) -> &'static str {
        model_label(self.variant)
    }

    fn key(&self) -> (usize, BandSet) {
        (variant_rank(self.variant), self.bands)
    }
}

/// Evaluate a model on held-out patches.
pub fn evaluate(model: &UNetModel<f32>, patches: &[PatchSample]) -> Result<MetricsRow> {
    let in_bands = model.config().in_bands;
    let bands = BandSet::from_count(in_bands).ok_or_else(|| {
        CanopyError::Config(format!("no band set has {in_bands} bands"))
    })?;
    Ok(MetricsRow {
        variant: model.config().variant,
        bands,
        metrics: task_metrics(model, patches)?,
    })
}

/// Comparison report, one row per (model, bands), ordered by variant then bands.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<MetricsRow>,
}

pub fn results_table(mut rows: Vec<MetricsRow>) -> Result<ResultsTable> {
    let mut seen = BTreeSet::new();
    for r in &rows {
        if !seen.insert(r.key()) {
            return Err(CanopyError::Config(format!(
                "duplicate report row ({}, {})",
                r.model_label(),
                r.bands.label()
            )));
        }
    }
    rows.sort_by_key(MetricsRow::key);
    Ok(ResultsTable { rows })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

impl ResultsTable {
    fn cells(&self) -> Vec<[String; 5]> {
        self.rows
            .iter()
            .map(|r| {
                [
                    r.model_label().to_string(),
                    r.bands.label().to_string(),
                    cell(r.metrics.tree_iou),
                    cell(r.metrics.height_mae),
                    cell(r.metrics.aux_iou),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        for row in self.cells() {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Markdown table with space-padded columns.
    pub fn to_markdown(&self) -> String {
        let body = self.cells();
        let mut width = REPORT_COLUMNS.map(str::len);
        for row in &body {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&width)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            format!("| {} |\n", padded.join(" | "))
        };
        let header = REPORT_COLUMNS.map(String::from);
        let mut out = line(&header);
        out.push_str(&line(&width.map(|w| "-".repeat(w))));
        for row in &body {
            out.push_str(&line(row));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variant: Variant, bands: BandSet) -> MetricsRow {
        let mut metrics = TaskMetrics::default();
        let tasks = match variant {
            Variant::SingleTask(t) => vec![t],
            _ => Task::ALL.to_vec(),
        };
        for t in tasks {
            *metrics.slot(t) = Some(0.5);
        }
        MetricsRow {
            variant,
            bands,
            metrics,
        }
    }

    fn all_variants() -> Vec<Variant> {
        vec![
            Variant::PartiallyShared,
            Variant::FullyShared,
            Variant::SingleTask(Task::AuxMask),
            Variant::SingleTask(Task::PixelHeight),
            Variant::SingleTask(Task::TreeMask),
        ]
    }

    #[test]
    fn full_grid_has_ten_ordered_rows() {
        let mut rows = Vec::new();
        for b in [BandSet::Ms14, BandSet::Rgb] {
            for v in all_variants() {
                rows.push(row(v, b));
            }
        }
        let t = results_table(rows).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], "Model,Bands Used,Tree Mask IoU,Height MAE,Auxiliary IoU");
        assert_eq!(lines[1], "Tree Mask Alone,RGB Only,0.500,-,-");
        assert_eq!(lines[2], "Tree Mask Alone,14 MS Bands,0.500,-,-");
        assert_eq!(lines[10], "MT Partially Shared,14 MS Bands,0.500,0.500,0.500");
        let md = t.to_markdown();
        assert_eq!(md.lines().count(), 12);
        let lens: BTreeSet<usize> = md.lines().map(|l| l.chars().count()).collect();
        assert_eq!(lens.len(), 1, "markdown columns are aligned");
    }

    #[test]
    fn empty_and_duplicate() {
        let t = results_table(Vec::new()).unwrap();
        assert_eq!(t.to_csv().lines().count(), 1);
        let dup = vec![row(Variant::FullyShared, BandSet::Rgb), row(Variant::FullyShared, BandSet::Rgb)];
        assert!(results_table(dup).is_err());
    }
}
