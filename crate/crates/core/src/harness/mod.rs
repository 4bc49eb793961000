//! Built-in examples, error measurement, convergence studies and output.

pub mod bench;
pub mod config;
pub mod errors;
pub mod examples;
pub mod output;
pub mod study;

pub use bench::{benchmark_ensemble_vs_separate, BenchReport};
pub use config::{ConstantMember, RunConfig};
pub use errors::{ErrorAccumulator, MemberErrors};
pub use examples::{example, example1, example2, example3, manufactured};
pub use output::{SnapshotPolicy, SnapshotWriter};
pub use study::{convergence_study, rate, run_level, ConvergenceRow, ConvergenceTable, DtRule, LevelRun};
