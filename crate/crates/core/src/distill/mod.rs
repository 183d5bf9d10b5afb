mod engine;
mod estimator;
mod particles;
mod prior;
mod velocity;

pub use engine::{
    distill, retrieve_aligned, run_loop, DistillConfig, DistillOutput, RetrievedAssets, RunLog, RunLogRow,
    TrajectoryPoint,
};
pub use estimator::{dsm_step_zeta, pose_bucket, t_bucket, DsmSample, EstimatorConfig, VariationalEstimator};
pub use particles::{
    assign_assets, assign_assets_with_mode, init_particles, render_distance_table, AssignMode, AssignmentMap,
    ParticleSet,
};
pub use prior::{variational_epsilon, EpsilonModel, InjectedNoise, OraclePrior, VariationalModel};
pub use velocity::{
    asset_velocity_component, delta_denoise_adjust, kernel_velocity_exact, prior_residual, sds_velocity, v_2d, v_asset,
    WarmupConfig,
};
