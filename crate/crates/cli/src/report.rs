use std::collections::BTreeMap;
use std::path::Path;

use nfft_krr::data::RNG_NAME;
use nfft_krr::krr::MODEL_FORMAT;
use serde::Serialize;
use serde_json::Value;

pub const REPORT_SCHEMA: &str = "nfft-krr-report/1";

#[derive(Debug, Serialize)]
pub struct Versions {
    pub nfft_krr: &'static str,
    pub model_format: &'static str,
    pub rng: &'static str,
}

/// Machine-readable record of one command run.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub config: Value,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<&'static str, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub mvm_rel_errors: Vec<(usize, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<&'static str, Value>,
    pub versions: Versions,
}

impl RunReport {
    pub fn new(command: &'static str, config: Value, seed: Option<u64>) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            command,
            config,
            timings: BTreeMap::new(),
            accuracy: None,
            cg_iterations: None,
            cg_residual: None,
            converged: None,
            mvm_rel_errors: Vec::new(),
            seed,
            extra: BTreeMap::new(),
            versions: Versions {
                nfft_krr: env!("CARGO_PKG_VERSION"),
                model_format: MODEL_FORMAT,
                rng: RNG_NAME,
            },
        }
    }

    pub fn time(&mut self, stage: &'static str, seconds: f64) {
        self.timings.insert(stage, seconds.max(0.0));
    }

    pub fn note(&mut self, key: &'static str, value: impl Serialize) {
        self.extra.insert(key, serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn write(&self, path: &Path) -> nfft_krr::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
