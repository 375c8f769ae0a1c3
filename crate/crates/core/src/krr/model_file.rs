use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{FitDiagnostics, KrrConfig, KrrModel};
use crate::anova::WindowSet;
use crate::data::ScalerStats;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "krr-model/1";

#[derive(Serialize, Deserialize)]
struct PackedArray {
    shape: Vec<usize>,
    /// Little-endian f64, base64.
    data: String,
}

impl PackedArray {
    fn pack(shape: Vec<usize>, values: &[f64]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            shape,
            data: STANDARD.encode(bytes),
        }
    }

    fn unpack(&self, what: &str) -> Result<Vec<f64>> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Model(format!("{what}: {e}")))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Model(format!("{what}: byte length {} is not a multiple of 8", bytes.len())));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let expected: usize = self.shape.iter().product();
        if values.len() != expected {
            return Err(Error::Model(format!(
                "{what}: shape {:?} needs {expected} values, found {}",
                self.shape,
                values.len()
            )));
        }
        Ok(values)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    config: KrrConfig,
    column_names: Vec<String>,
    scaler: ScalerStats,
    mis_scores: Vec<f64>,
    windows: Vec<Vec<usize>>,
    dropped_features: Vec<usize>,
    kept_features: Vec<usize>,
    training_nodes: PackedArray,
    alpha: PackedArray,
    diagnostics: FitDiagnostics,
    seed: Option<u64>,
    rng: String,
}

impl KrrModel {
    pub fn to_json(&self) -> Result<String> {
        let (rows, cols) = self.nodes.dim();
        let nodes = self.nodes.as_standard_layout();
        let doc = ModelDocument {
            format: MODEL_FORMAT.to_string(),
            config: self.config,
            column_names: self.column_names.clone(),
            scaler: self.scaler.clone(),
            mis_scores: self.mis_scores.clone(),
            windows: self.windows.windows().to_vec(),
            dropped_features: self.dropped_features(),
            kept_features: self.kept.clone(),
            training_nodes: PackedArray::pack(vec![rows, cols], nodes.as_slice().expect("standard layout")),
            alpha: PackedArray::pack(vec![self.alpha.len()], &self.alpha),
            diagnostics: self.diagnostics,
            seed: self.seed,
            rng: self.rng.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Model(format!(
                "unsupported format '{}', expected '{MODEL_FORMAT}'",
                doc.format
            )));
        }
        doc.config.validate()?;
        let d = doc.column_names.len();
        if doc.scaler.means.len() != d || doc.scaler.stds.len() != d {
            return Err(Error::Model("scaler length differs from column count".into()));
        }
        let windows = WindowSet::new(doc.windows)?;
        if windows.features() != doc.kept_features || doc.kept_features.iter().any(|&f| f >= d) {
            return Err(Error::Model("kept features do not match the windows".into()));
        }
        let shape = &doc.training_nodes.shape;
        if shape.len() != 2 || shape[1] != doc.kept_features.len() {
            return Err(Error::Model(format!("training node shape {shape:?} is inconsistent")));
        }
        let nodes = Array2::from_shape_vec((shape[0], shape[1]), doc.training_nodes.unpack("training_nodes")?)
            .map_err(|e| Error::Model(e.to_string()))?;
        let alpha = doc.alpha.unpack("alpha")?;
        if alpha.len() != nodes.nrows() {
            return Err(Error::Model(format!(
                "{} coefficients for {} training nodes",
                alpha.len(),
                nodes.nrows()
            )));
        }
        if alpha.iter().chain(nodes.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Model("non-finite values in model arrays".into()));
        }
        Ok(Self {
            config: doc.config,
            column_names: doc.column_names,
            scaler: doc.scaler,
            mis_scores: doc.mis_scores,
            windows,
            kept: doc.kept_features,
            nodes,
            alpha,
            diagnostics: doc.diagnostics,
            seed: doc.seed,
            rng: doc.rng,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_roundtrip_is_bitwise() {
        let v = [0.1, -0.0, f64::MIN_POSITIVE, 1e300, -3.5];
        let p = PackedArray::pack(vec![5], &v);
        let back = p.unpack("v").unwrap();
        assert!(v.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn packed_rejects_bad_payloads() {
        let p = PackedArray {
            shape: vec![2],
            data: STANDARD.encode([0u8; 8]),
        };
        assert!(p.unpack("x").is_err());
        let p = PackedArray {
            shape: vec![1],
            data: "***".into(),
        };
        assert!(p.unpack("x").is_err());
        let p = PackedArray {
            shape: vec![1],
            data: STANDARD.encode([0u8; 7]),
        };
        assert!(p.unpack("x").is_err());
    }

    #[test]
    fn rejects_other_formats() {
        let err = KrrModel::from_json(r#"{"format":"krr-model/2"}"#).unwrap_err();
        assert!(matches!(err, Error::Json(_) | Error::Model(_)));
        assert!(KrrModel::from_json("not json").is_err());
    }
}
