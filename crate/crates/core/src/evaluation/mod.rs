//! Model evaluation: accuracy metrics, cross-validation and random-split
//! experiments, and the synthetic project generator.

pub mod cv;
pub mod metrics;
pub mod synth;

pub use cv::{
    cross_validate, fit_plan, kfold_plan, random_split_experiment, resubstitution, train_size, AverageRow,
    ExperimentReport, ExperimentRow, FittedModel, FoldPlan, ModelingPlan, RetrainMode, Selection,
};
pub use metrics::{evaluate_predictions, mmre, mre, pred_at, EvalMetrics};
pub use synth::{generate_synthetic, reference_model, SynthConfig, SynthMetadata, SynthOutput};
