//! Library half of the `pcl` command: experiment configuration, the
//! pipeline runner (ingest, clean, split, train, predict, evaluate), the
//! ablation and optimizer-comparison grids, and run manifests.

pub mod config;
pub mod manifest;
pub mod pipeline;

/// Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.
pub fn exit_code(err: &pcl_core::Error) -> i32 {
    match err {
        pcl_core::Error::Training(_) => 3,
        _ => 2,
    }
}
