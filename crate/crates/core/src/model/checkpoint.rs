//! Checkpoint file: a text manifest followed by the raw parameter values.
//!
//! ```text
//! demandfuse-checkpoint 1
//! config {"variant":"dl-fc",…}
//! param text.embedding 1 151x300
//! …
//! end
//! <little-endian f64 values of every parameter, in manifest order>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::config::ModelConfig;
use super::network::FusionModel;
use super::params::{param_specs, Init, Param, ParamStore};
use super::ModelError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &str = "demandfuse-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn to_bytes<T: Scalar>(model: &FusionModel<T>) -> Result<Vec<u8>, ModelError> {
    let mut out = Vec::new();
    writeln!(out, "{MAGIC} {CHECKPOINT_VERSION}")?;
    let cfg = serde_json::to_string(model.config()).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    writeln!(out, "config {cfg}")?;
    for p in model.params().iter() {
        let dims: Vec<String> = p.tensor.shape().iter().map(usize::to_string).collect();
        writeln!(out, "param {} {} {}", p.name, u8::from(p.trainable), dims.join("x"))?;
    }
    writeln!(out, "end")?;
    for p in model.params().iter() {
        for v in p.tensor.values() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<FusionModel<T>, ModelError> {
    let bad = |m: String| ModelError::Checkpoint(m);
    let mut pos = 0;
    let mut next_line = || -> Result<&str, ModelError> {
        let rest = &bytes[pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated manifest".into()))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| bad("manifest is not UTF-8".into()))
    };

    let header = next_line()?;
    match header.split_once(' ') {
        Some((MAGIC, v)) if v.parse() == Ok(CHECKPOINT_VERSION) => {}
        Some((MAGIC, v)) => return Err(bad(format!("unsupported checkpoint version {v}"))),
        _ => return Err(bad("not a checkpoint file".into())),
    }
    let cfg_line = next_line()?;
    let json = cfg_line.strip_prefix("config ").ok_or_else(|| bad("missing config line".into()))?;
    let config: ModelConfig = serde_json::from_str(json).map_err(|e| bad(format!("config: {e}")))?;

    let mut entries = Vec::new();
    loop {
        let line = next_line()?;
        if line == "end" {
            break;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        let ["param", name, trainable, dims] = fields[..] else {
            return Err(bad(format!("malformed manifest line {line:?}")));
        };
        let trainable = match trainable {
            "0" => false,
            "1" => true,
            _ => return Err(bad(format!("bad trainable flag in {line:?}"))),
        };
        let shape = dims
            .split('x')
            .map(|d| d.parse::<usize>().map_err(|_| bad(format!("bad shape in {line:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        entries.push((name.to_string(), trainable, shape));
    }

    let specs = param_specs(&config)?;
    let data = &bytes[pos..];
    let total: usize = entries.iter().map(|(_, _, s)| s.iter().product::<usize>()).sum();
    if data.len() != total * 8 {
        return Err(bad(format!("expected {} bytes of values, found {}", total * 8, data.len())));
    }
    let mut values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut store = ParamStore::new();
    for (name, trainable, shape) in entries {
        let spec = specs
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| bad(format!("unexpected parameter {name}")))?;
        if spec.trainable != trainable {
            return Err(bad(format!("parameter {name} has the wrong trainable flag")));
        }
        let n = shape.iter().product();
        let vals: Vec<T> = values.by_ref().take(n).map(T::lit).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("parameter {name} holds non-finite values")));
        }
        let frozen_rows = if spec.init == Init::Embedding { vec![0] } else { Vec::new() };
        store.insert(Param { name, tensor: Tensor::new(shape, vals)?, trainable, frozen_rows })?;
    }
    FusionModel::from_parts(config, store).map_err(|e| bad(e.to_string()))
}

pub fn save<T: Scalar>(model: &FusionModel<T>, path: &Path) -> Result<(), ModelError> {
    fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<FusionModel<T>, ModelError> {
    let bytes = fs::read(path)
        .map_err(|e| ModelError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    from_bytes(&bytes)
}
