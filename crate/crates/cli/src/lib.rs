//! Case-study orchestration for the persim simulator: presets, runs,
//! analysis artifacts and SVG plots.

pub mod error;
pub mod plot;
pub mod presets;
pub mod study;

pub use error::CliError;
pub use plot::emit_plots;
pub use presets::{base_config, merge_patch, CaseStudySpec, Preset};
pub use study::{analyze_dir, analyze_history, run_case_study, RunAnalysis, StudyEcho};
