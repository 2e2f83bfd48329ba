//! Metrics, evaluation, wall-time measurement and plotting.

mod bench;
mod checks;
mod eval;
mod metrics;
mod plot;

pub use bench::{bench_walltime, median, WallTime};
pub use checks::{burgers_toy_instance, physics_gradcheck};
pub use eval::{
    eval_run, noisy_instance, prediction_path, run_inference, used_obs_path, EvalSummary, PredictionMeta, PREDICTIONS_META,
};
pub use metrics::{metrics_table, rel_error, MetricsRow, METRICS_COLUMNS};
pub use plot::{plot_field, render_panels, save_png, ColorRange, Panel};
