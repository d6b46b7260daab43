//! Cross-validated evaluation: fold plans, regression metrics, the nested CV
//! harness, significance testing and report assembly.

pub mod anova;
pub mod cv;
pub mod metrics;
pub mod nested;
pub mod report;

pub use anova::{f_survival, incomplete_beta, ln_gamma, two_way_anova, AnovaResult};
pub use cv::FoldPlan;
pub use metrics::{metrics, pearson, Metrics};
pub use nested::{run_fold, run_nested_cv, CvSettings, PreparedDataset, PreparedTrial};
pub use report::{ExperimentReport, Metric, Pooling};
