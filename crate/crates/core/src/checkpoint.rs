//! Checkpoint persistence: model parameters plus the scaler that normalized
//! the training data, in one JSON document.
//!
//! The writer is hand-rolled so the byte layout is fully pinned down: keys
//! appear in a fixed order and every real is rendered with 17 significant
//! digits, which round-trips any finite f64 exactly. Saving a freshly loaded
//! checkpoint therefore reproduces the file byte for byte, and a reloaded
//! model predicts bit-identically.
//!
//! Layout, top to bottom: `format_version`, `architecture`, `config` (the
//! full hyperparameter set), `scaler` (`min`, `max`), and `params` mapping
//! flat `"layer.parameter"` names to `{shape, data}` pairs in lexicographic
//! order. Reading validates the version, the architecture against the
//! embedded config, and the exact parameter name set with shapes, so a
//! truncated, renamed, or mismatched file is rejected rather than silently
//! misloaded.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::data::ScalerParams;
use crate::error::{Error, Result};
use crate::model::{build_model, Architecture, Model, ModelConfig};
use crate::numerics::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u64 = 1;

/// 16 fractional digits in scientific notation: 17 significant digits,
/// enough to reproduce any f64 exactly on read-back.
fn push_real(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

fn check_finite(name: &str, data: &[f64]) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Checkpoint(format!(
            "parameter {name:?} contains a non-finite value"
        )));
    }
    Ok(())
}

/// Renders the checkpoint document. Deterministic for a given model and
/// scaler state.
pub fn checkpoint_string(model: &Model, scaler: &ScalerParams) -> Result<String> {
    scaler.validate()?;
    let cfg = model.config();
    let mut out = String::with_capacity(64 * 1024);
    out.push_str("{\n");
    writeln!(out, "  \"format_version\": {CHECKPOINT_FORMAT_VERSION},").unwrap();
    writeln!(out, "  \"architecture\": \"{}\",", cfg.architecture).unwrap();
    out.push_str("  \"config\": {\n");
    writeln!(out, "    \"architecture\": \"{}\",", cfg.architecture).unwrap();
    writeln!(out, "    \"window_length\": {},", cfg.window_length).unwrap();
    writeln!(out, "    \"conv_filters\": {},", cfg.conv_filters).unwrap();
    writeln!(out, "    \"conv_kernel\": {},", cfg.conv_kernel).unwrap();
    writeln!(out, "    \"recurrent_units\": {},", cfg.recurrent_units).unwrap();
    writeln!(out, "    \"heads\": {},", cfg.heads).unwrap();
    writeln!(out, "    \"d_ff\": {},", cfg.d_ff).unwrap();
    out.push_str("    \"dropout_rate\": ");
    push_real(&mut out, cfg.dropout_rate);
    out.push_str(",\n");
    writeln!(out, "    \"padding\": \"{}\",", cfg.padding).unwrap();
    writeln!(out, "    \"seed\": {}", cfg.seed).unwrap();
    out.push_str("  },\n");
    out.push_str("  \"scaler\": {\n    \"min\": ");
    push_real(&mut out, scaler.min);
    out.push_str(",\n    \"max\": ");
    push_real(&mut out, scaler.max);
    out.push_str("\n  },\n");
    out.push_str("  \"params\": {\n");
    let mut first = true;
    for (layer, params) in model.params() {
        for (name, tensor) in params.iter() {
            let key = format!("{layer}.{name}");
            check_finite(&key, tensor.data())?;
            if !first {
                out.push_str(",\n");
            }
            first = false;
            write!(out, "    \"{key}\": {{\"shape\": [").unwrap();
            for (i, dim) in tensor.shape().iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write!(out, "{dim}").unwrap();
            }
            out.push_str("], \"data\": [");
            for (i, &v) in tensor.data().iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                push_real(&mut out, v);
            }
            out.push_str("]}");
        }
    }
    out.push_str("\n  }\n}\n");
    Ok(out)
}

pub fn save_checkpoint(model: &Model, scaler: &ScalerParams, path: &Path) -> Result<()> {
    let document = checkpoint_string(model, scaler)?;
    std::fs::write(path, document)?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u64,
    architecture: String,
    config: ModelConfig,
    scaler: ScalerParams,
    params: BTreeMap<String, ParamEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Parses and validates a checkpoint document.
pub fn load_checkpoint_str(document: &str) -> Result<(Model, ScalerParams)> {
    let file: CheckpointFile = serde_json::from_str(document)
        .map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
    if file.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}, expected {CHECKPOINT_FORMAT_VERSION}",
            file.format_version
        )));
    }
    let declared: Architecture = file.architecture.parse()?;
    if declared != file.config.architecture {
        return Err(Error::Checkpoint(format!(
            "architecture field {:?} disagrees with config {:?}",
            file.architecture,
            file.config.architecture.as_str()
        )));
    }
    file.scaler.validate()?;

    // A fresh build supplies the authoritative name and shape layout; the
    // file must cover it exactly.
    let mut model = build_model(&file.config)?;
    let mut remaining = file.params;
    for (layer, params) in model.params_mut().iter_mut() {
        let names: Vec<String> = params.names().map(str::to_string).collect();
        for name in names {
            let key = format!("{layer}.{name}");
            let entry = remaining
                .remove(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {key:?}")))?;
            let expected = params.get(&name)?.shape().to_vec();
            if entry.shape != expected {
                return Err(Error::Checkpoint(format!(
                    "parameter {key:?} has shape {:?}, expected {expected:?}",
                    entry.shape
                )));
            }
            check_finite(&key, &entry.data)?;
            let tensor = Tensor::new(entry.shape, entry.data)
                .map_err(|e| Error::Checkpoint(format!("parameter {key:?}: {e}")))?;
            params.replace(&name, tensor)?;
        }
    }
    if let Some(extra) = remaining.keys().next() {
        return Err(Error::Checkpoint(format!(
            "unknown parameter {extra:?} in checkpoint"
        )));
    }
    Ok((model, file.scaler))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, ScalerParams)> {
    let document = std::fs::read_to_string(path)?;
    load_checkpoint_str(&document)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model(architecture: Architecture) -> Model {
        build_model(&ModelConfig {
            architecture,
            window_length: 6,
            conv_filters: 4,
            conv_kernel: 3,
            recurrent_units: 6,
            heads: 2,
            d_ff: 8,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    fn scaler() -> ScalerParams {
        ScalerParams { min: 1.5e9, max: 3.75e10 }
    }

    #[test]
    fn round_trip_is_byte_stable_and_prediction_exact() {
        for arch in Architecture::ALL {
            let model = small_model(arch);
            let first = checkpoint_string(&model, &scaler()).unwrap();
            let (loaded, loaded_scaler) = load_checkpoint_str(&first).unwrap();
            let second = checkpoint_string(&loaded, &loaded_scaler).unwrap();
            assert_eq!(first, second, "{arch}: save(load(save)) drifted");
            assert_eq!(loaded.params(), model.params());

            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let x = crate::numerics::Tensor::new(
                vec![3, 6, 1],
                (0..18).map(|_| rng.gen_range(0.0..1.0)).collect(),
            )
            .unwrap();
            assert_eq!(loaded.predict(&x).unwrap(), model.predict(&x).unwrap());
        }
    }

    #[test]
    fn file_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = small_model(Architecture::ConvLstmTransNet);
        save_checkpoint(&model, &scaler(), &path).unwrap();
        let (loaded, s) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.params(), model.params());
        assert_eq!(s.min, scaler().min);
        assert_eq!(s.max, scaler().max);
    }

    #[test]
    fn seventeen_digit_reals_survive_exactly() {
        // 0.1 and a full-precision irrational both need all 17 digits.
        let mut model = small_model(Architecture::Rnn);
        model
            .params_mut()
            .get_mut("head")
            .unwrap()
            .get_mut("b_y")
            .unwrap()
            .data_mut()[0] = std::f64::consts::PI * 1e9;
        let doc = checkpoint_string(&model, &ScalerParams { min: 0.1, max: 0.3 }).unwrap();
        let (loaded, s) = load_checkpoint_str(&doc).unwrap();
        assert_eq!(
            loaded.params()["head"].get("b_y").unwrap().data()[0],
            std::f64::consts::PI * 1e9
        );
        assert_eq!(s.min, 0.1);
        assert_eq!(s.max, 0.3);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let model = small_model(Architecture::Gru);
        let doc = checkpoint_string(&model, &scaler()).unwrap();
        let bumped = doc.replace("\"format_version\": 1,", "\"format_version\": 2,");
        let err = load_checkpoint_str(&bumped).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }

    #[test]
    fn architecture_config_disagreement_is_rejected() {
        let model = small_model(Architecture::Gru);
        let doc = checkpoint_string(&model, &scaler()).unwrap();
        let twisted = doc.replace("\"architecture\": \"gru\",\n  \"config\"", "\"architecture\": \"lstm\",\n  \"config\"");
        assert_ne!(twisted, doc);
        let err = load_checkpoint_str(&twisted).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }

    #[test]
    fn missing_renamed_and_extra_parameters_are_rejected() {
        let model = small_model(Architecture::Rnn);
        let doc = checkpoint_string(&model, &scaler()).unwrap();

        let renamed = doc.replace("\"rnn.W_h\"", "\"rnn.W_hidden\"");
        let err = load_checkpoint_str(&renamed).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");

        // Splicing a duplicate of one entry under a fresh name adds an
        // unknown parameter without touching the required set.
        let extra = doc.replace("\"rnn.b\":", "\"rnn.extra\": {\"shape\": [1], \"data\": [0.0000000000000000e0]},\n    \"rnn.b\":");
        let err = load_checkpoint_str(&extra).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let model = small_model(Architecture::Rnn);
        let doc = checkpoint_string(&model, &scaler()).unwrap();
        // head.W_y is [6, 1]; lie about it.
        let bent = doc.replace("\"head.W_y\": {\"shape\": [6, 1]", "\"head.W_y\": {\"shape\": [1, 6]");
        assert_ne!(bent, doc);
        let err = load_checkpoint_str(&bent).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }

    #[test]
    fn truncated_document_is_rejected() {
        let model = small_model(Architecture::Lstm);
        let doc = checkpoint_string(&model, &scaler()).unwrap();
        let err = load_checkpoint_str(&doc[..doc.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }
}
