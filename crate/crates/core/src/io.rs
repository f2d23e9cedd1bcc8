//! Artifact formats.
//!
//! Binary artifacts are a single JSON header line followed by a raw
//! little-endian `f64` payload; tabular artifacts are a JSON header line
//! followed by a CSV block. All writes go through a temp file and a rename.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Write-temp-then-rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    atomic_write(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// JSON header line + little-endian f64 payload.
pub fn encode_binary<H: Serialize>(header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec(header)?;
    out.push(b'\n');
    out.reserve(8 * payload.len());
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_binary<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, Vec<f64>)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let header = serde_json::from_slice(&bytes[..nl])?;
    let body = &bytes[nl + 1..];
    if body.len() % 8 != 0 {
        return Err(Error::Format(format!("payload of {} bytes is not a multiple of 8", body.len())));
    }
    let payload = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, payload))
}

/// JSON header line + CSV block with a column header row.
pub fn encode_table<H: Serialize>(header: &H, columns: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut s = serde_json::to_string(header)?;
    s.push('\n');
    s.push_str(&columns.join(","));
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    Ok(s)
}

/// Plain CSV with a header row.
pub fn encode_csv(columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = columns.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// Shortest round-tripping decimal form.
pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct H {
        n: usize,
        tag: String,
    }

    #[test]
    fn binary_roundtrip() {
        let h = H { n: 3, tag: "x".into() };
        let data = vec![1.5, -0.0, f64::MIN_POSITIVE];
        let bytes = encode_binary(&h, &data).unwrap();
        let (h2, d2): (H, Vec<f64>) = decode_binary(&bytes).unwrap();
        assert_eq!(h, h2);
        assert_eq!(data, d2);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = encode_binary(&H { n: 1, tag: String::new() }, &[1.0]).unwrap();
        bytes.pop();
        assert!(decode_binary::<H>(&bytes).is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn sha_of_empty() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
