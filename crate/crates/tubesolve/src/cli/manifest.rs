//! Reproducibility manifests: the config echo, kernel calibration
//! constants, grid hashes, per-stage tolerances and wall-clock times.
//! Re-running with identical manifest inputs reproduces all CSV outputs
//! bit-exactly (wall-clock entries are informational only).

use super::config::RunConfig;
use crate::kernels::KernelConfig;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Serialize)]
pub struct RunManifest {
    pub software: String,
    pub version: String,
    pub config: RunConfig,
    /// Calibrated c_n per ambient dimension (re, im).
    pub cn_table: BTreeMap<String, (f64, f64)>,
    /// Kernel configuration echoes per delta.
    pub kernels: BTreeMap<String, KernelConfig>,
    /// Content hashes of the quadrature grids per delta.
    pub grid_hashes: BTreeMap<String, String>,
    /// Pinned per-stage tolerances.
    pub tolerances: BTreeMap<String, f64>,
    /// Wall-clock seconds per stage (informational).
    pub wall_clock: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(config: RunConfig) -> Self {
        RunManifest {
            software: "tubesolve".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            cn_table: BTreeMap::new(),
            kernels: BTreeMap::new(),
            grid_hashes: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            wall_clock: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization")
    }
}
