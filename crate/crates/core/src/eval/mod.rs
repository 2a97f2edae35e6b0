//! Evaluation: error metrics, k-fold cross-validation, synthetic data and the
//! prediction throughput benchmark.

pub mod bench;
pub mod cv;
pub mod folds;
pub mod metrics;
pub mod synth;

pub use bench::{throughput_bench, write_bench_csv, BenchResult};
pub use cv::{cross_validate, write_reports_csv, EvalReport, FoldResult};
pub use folds::{kfold, FoldPlan};
pub use metrics::{adjusted_rand_index, mae, rmse};
pub use synth::{planted_clusters, synth_coupled, PlantedClusters, SynthConfig, SyntheticData};
