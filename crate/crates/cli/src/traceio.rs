//! Homodyne trace files: little-endian f64 samples or one sample per CSV
//! line, with a JSON calibration sidecar.

use std::path::{Path, PathBuf};

use qcalab_core::homodyne::{HomodyneTrace, TraceMeta, TraceSource};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub sigma_snl_sq: f64,
    pub sigma_e_sq: f64,
    pub gain_m: f64,
    pub seed: Option<u64>,
    pub source: TraceSource,
}

impl Sidecar {
    pub fn of(trace: &HomodyneTrace) -> Self {
        Self {
            sigma_snl_sq: trace.sigma_snl_sq,
            sigma_e_sq: trace.sigma_e_sq,
            gain_m: trace.meta.gain_m,
            seed: trace.meta.seed,
            source: trace.meta.source,
        }
    }
}

/// `trace.bin` -> `trace.bin.json`.
pub fn default_sidecar_path(trace: &Path) -> PathBuf {
    let mut s = trace.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn encode_binary(samples: &[f64]) -> Vec<u8> {
    samples.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_binary(bytes: &[u8]) -> CliResult<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(CliError::config(format!(
            "binary trace has {} bytes, not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn encode_csv(samples: &[f64]) -> String {
    samples.iter().map(|v| format!("{v:e}\n")).collect()
}

pub fn decode_csv(text: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| {
            CliError::config(format!("trace line {}: `{t}` is not a number", i + 1))
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Writes samples in the format implied by the extension and the sidecar
/// next to them.
pub fn write_trace(path: &Path, trace: &HomodyneTrace) -> CliResult<PathBuf> {
    let bytes = if is_csv(path) {
        encode_csv(&trace.samples).into_bytes()
    } else {
        encode_binary(&trace.samples)
    };
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    let side = default_sidecar_path(path);
    let text = serde_json::to_string_pretty(&Sidecar::of(trace)).expect("serializable");
    std::fs::write(&side, text).map_err(|e| CliError::io(&side, e))?;
    Ok(side)
}

pub fn read_trace(path: &Path, sidecar: Option<&Path>) -> CliResult<HomodyneTrace> {
    let side_path = sidecar.map_or_else(|| default_sidecar_path(path), Path::to_path_buf);
    if !side_path.exists() {
        return Err(CliError::config(format!(
            "calibration sidecar {} missing",
            side_path.display()
        )));
    }
    let side_text = std::fs::read_to_string(&side_path).map_err(|e| CliError::io(&side_path, e))?;
    let side: Sidecar = serde_json::from_str(&side_text)
        .map_err(|e| CliError::config(format!("{}: {e}", side_path.display())))?;
    let samples = if is_csv(path) {
        decode_csv(&std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)?
    } else {
        decode_binary(&std::fs::read(path).map_err(|e| CliError::io(path, e))?)?
    };
    let trace = HomodyneTrace {
        samples,
        sigma_snl_sq: side.sigma_snl_sq,
        sigma_e_sq: side.sigma_e_sq,
        meta: TraceMeta {
            source: side.source,
            seed: side.seed,
            gain_m: side.gain_m,
        },
    };
    trace.validate()?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_is_exact() {
        let xs = [0.0, -1.5, 3.0e-300, f64::MAX, 1.0 / 3.0];
        assert_eq!(decode_binary(&encode_binary(&xs)).unwrap(), xs);
        assert!(decode_binary(&[0u8; 7]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let xs = [0.1, -2.0 / 3.0, 1e-12];
        assert_eq!(decode_csv(&encode_csv(&xs)).unwrap(), xs);
    }

    #[test]
    fn csv_error_names_line() {
        let err = decode_csv("1.0\n\nabc\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn sidecar_rejects_unknown_keys() {
        let text = r#"{"sigma_snl_sq":1,"sigma_e_sq":0,"gain_m":1,"seed":null,"source":"simulated","x":1}"#;
        assert!(serde_json::from_str::<Sidecar>(text).is_err());
    }
}
