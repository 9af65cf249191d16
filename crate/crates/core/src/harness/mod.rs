//! Run orchestration: configs, the training loop and on-disk artifacts.

mod config;
mod run;
mod train;

pub use config::{DataSource, EvalConfig, RunConfig, TrainConfig, PRESET_NAMES};
pub use run::{
    code_version, ensure_dir, manifest_rows, read_aggregate_csv, run_eval, run_train, table_from_manifests, write_aggregates,
    write_spectra, write_sweep, write_table, CentroidRow, RunManifest, CHECKPOINT_FILE, CONFIG_FILE, LOSS_FILE,
    MANIFEST_FILE,
};
pub use train::{train, train_step, BatchStream, TrainOutcome};
