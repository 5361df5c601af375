//! Declarative benchmark harness: a JSON config describes a grid of
//! training runs, [`run_benchmark`] executes the grid with resume and
//! parallelism, and [`evaluate`] turns finished runs into curves and
//! heatmaps of worst-case maximal accuracy.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod grid;
pub mod results;
pub mod runner;
pub mod svg;

pub use config::{load_config, parse_config, BenchmarkConfig};
pub use error::{Error, Result};
pub use evaluate::{emit_curves, emit_heatmap, worst_case_maximal_accuracy, CellFilter, Report};
pub use grid::{expand_grid, Experiment, ExperimentKey};
pub use results::{read_result, write_result, ExperimentResult};
pub use runner::{run_benchmark, Summary};
