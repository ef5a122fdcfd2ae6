//! Binary checkpoint: `UNCL1\n`, a `key=value` text header closed by `end\n`,
//! then one block per parameter tensor in declaration order, each a
//! little-endian `u64` element count followed by that many little-endian `f64`.

use std::fs;
use std::io::{BufRead, Read};
use std::path::Path;

use super::config::ModelConfig;
use super::uncle::{Normalization, UncleModel};
use crate::error::{io_err, parse_err, Result};

pub const MAGIC: &[u8] = b"UNCL1\n";
const END: &str = "end";

pub fn encode(model: &UncleModel) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    let mut header = String::new();
    for (k, v) in model.config.to_kv() {
        header.push_str(&format!("{k}={v}\n"));
    }
    let join = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    header.push_str(&format!("norm_mean={}\n", join(&model.normalization.mean)));
    header.push_str(&format!("norm_std={}\n", join(&model.normalization.std)));
    let params = model.params();
    header.push_str(&format!("blocks={}\n{END}\n", params.len()));
    out.extend_from_slice(header.as_bytes());
    for p in params {
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        for v in p.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<UncleModel> {
    let bad = |msg: &str| parse_err(origin, msg);
    if !bytes.starts_with(MAGIC) {
        return Err(bad("missing UNCL1 magic"));
    }
    let mut cursor = &bytes[MAGIC.len()..];
    let mut config = ModelConfig::new(1);
    let (mut mean, mut std, mut blocks) = (None, None, None);
    loop {
        let mut line = String::new();
        let read = cursor.read_line(&mut line).map_err(io_err(origin))?;
        if read == 0 {
            return Err(bad("header not terminated"));
        }
        let line = line.trim_end_matches('\n');
        if line == END {
            break;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| bad(&format!("malformed header line {line:?}")))?;
        let floats = |v: &str| -> Result<Vec<f64>> {
            v.split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| bad(&format!("bad float {s:?}"))))
                .collect()
        };
        match k {
            "norm_mean" => mean = Some(floats(v)?),
            "norm_std" => std = Some(floats(v)?),
            "blocks" => blocks = Some(v.parse::<usize>().map_err(|_| bad("bad block count"))?),
            _ => config.set(k, v).map_err(|e| bad(&e.to_string()))?,
        }
    }
    let normalization = Normalization {
        mean: mean.ok_or_else(|| bad("missing norm_mean"))?,
        std: std.ok_or_else(|| bad("missing norm_std"))?,
    };
    let mut model = UncleModel::new(config, normalization)?;
    let mut params = model.params_mut();
    if blocks != Some(params.len()) {
        return Err(bad(&format!("expected {} parameter blocks, header says {blocks:?}", params.len())));
    }
    for p in params.iter_mut() {
        let mut len_buf = [0u8; 8];
        cursor.read_exact(&mut len_buf).map_err(|_| bad("truncated block length"))?;
        let len = u64::from_le_bytes(len_buf) as usize;
        if len != p.len() {
            return Err(bad(&format!("block of {len} values where {} expected", p.len())));
        }
        for v in p.values_mut() {
            let mut b = [0u8; 8];
            cursor.read_exact(&mut b).map_err(|_| bad("truncated parameter block"))?;
            *v = f64::from_le_bytes(b);
        }
    }
    if !cursor.is_empty() {
        return Err(bad("trailing bytes after parameter blocks"));
    }
    Ok(model)
}

pub fn save(model: &UncleModel, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(io_err(path))
}

pub fn load(path: &Path) -> Result<UncleModel> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes, path)
}
