//! Multi-view fruit grading pipeline.
//!
//! The library covers the full desk-scale workflow: loading or synthesizing
//! multi-view orange datasets, composing the views of each fruit into a single
//! collage image, training ResNet-18 / SqueezeNet classifiers over the three
//! quality grades, and reporting per-class / average / overall accuracy.

pub mod collage;
pub mod domain;
pub mod eval;
pub mod experiment;
pub mod ingest;
pub mod model;
pub mod nn;
pub mod raster;
pub mod rng;
pub mod split;
pub mod synth;
pub mod train;

pub use collage::{compose_collage, select_single_view, CollageError, CollageLayout};
pub use domain::{
    class_counts, parse_grade, ClassCounts, Collage, Dataset, DomainError, GradeLabel,
    OrangeSample, ViewImage,
};
pub use eval::{
    evaluate, metrics_from_confusion, render_report, ConfusionMatrix, EvalError, EvalMode,
    MetricsReport,
};
pub use experiment::{run_experiment, ExperimentError, ExperimentPlan, RunSummary};
pub use ingest::{load_dataset, read_manifest, write_dataset, IngestError, ManifestRow};
pub use model::{
    build_model, load_model, ArchitectureKind, ModelError, ModelHandle, SqueezeNetVersion,
};
pub use raster::Interpolation;
pub use split::{stratified_split, SplitError, SplitResult, SplitSpec, TrainFraction};
pub use synth::{generate, SynthConfig};
pub use train::{cross_entropy, train, TrainConfig, TrainError, TrainRecord};
