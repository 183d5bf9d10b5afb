mod experiment;
mod metrics;
mod plot;

pub use experiment::{
    demo_config, run_experiment, run_experiment_config, write_run_artifacts, ExperimentConfig, ExperimentOutput,
    MetricsReport, MetricsRow, RunRecord, Variant,
};
pub use metrics::{
    adjacent_inconsistency_of, adjacent_view_inconsistency, kl_estimate, mean_nll, median, mode_distance,
    nearest_component, prompt_alignment_score,
};
pub use plot::{line_plot, trajectory_svg, velocity_svg, Series};
