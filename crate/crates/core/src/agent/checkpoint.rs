//! Parameter checkpoints: a short text header (architecture, parameter count,
//! SHA-256 of the payload) followed by the parameters as little-endian `f64`.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::network::{Architecture, NetworkParameters};
use crate::error::{Error, Result};

const MAGIC: &str = "SIMCIM-AGENT 1";

fn payload(params: &NetworkParameters) -> Vec<u8> {
    params.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn to_bytes(params: &NetworkParameters) -> Vec<u8> {
    let a = params.architecture();
    let body = payload(params);
    let digest = hex::encode(Sha256::digest(&body));
    let mut out = format!(
        "{MAGIC}\ninput {}\nhidden {}\nfeatures {}\nparams {}\nsha256 {digest}\n\n",
        a.input,
        a.hidden,
        a.features,
        params.len()
    )
    .into_bytes();
    out.extend_from_slice(&body);
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<NetworkParameters> {
    let bad = |m: String| Error::Checkpoint(m);
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| bad("missing header terminator".into()))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not UTF-8".into()))?;
    let body = &bytes[split + 2..];
    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("not a checkpoint file".into()));
    }
    let mut field = |name: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad(format!("missing field {name}")))?;
        line.strip_prefix(name)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| bad(format!("expected field {name}, found {line:?}")))
    };
    let num = |s: String, name: &str| s.parse::<usize>().map_err(|_| bad(format!("bad {name} value {s:?}")));
    let arch = Architecture {
        input: num(field("input")?, "input")?,
        hidden: num(field("hidden")?, "hidden")?,
        features: num(field("features")?, "features")?,
    };
    let count = num(field("params")?, "params")?;
    let digest = field("sha256")?;
    if count != arch.num_params() {
        return Err(bad(format!("parameter count {count} does not match architecture ({})", arch.num_params())));
    }
    if body.len() != count * 8 {
        return Err(bad(format!("payload has {} bytes, expected {}", body.len(), count * 8)));
    }
    if hex::encode(Sha256::digest(body)) != digest {
        return Err(bad("payload digest mismatch".into()));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    NetworkParameters::from_vec(arch, data)
}

pub fn save(params: &NetworkParameters, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_bytes(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<NetworkParameters> {
    from_bytes(&fs::read(path)?)
}
