//! Segmentation and regression metrics and the model comparison report.

mod metrics;
mod report;

pub use metrics::{iou, mae, IOU_THRESHOLD};
pub use report::{
    evaluate, model_label, patch_metrics, results_table, task_metrics, MetricsRow, ResultsTable,
    TaskMetrics, REPORT_COLUMNS,
};
