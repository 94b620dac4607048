//! Flat little-endian `f64` payload behind a JSON header.
//!
//! Layout: 8-byte magic `FLATBIN1`, `u64` LE header length, UTF-8 JSON header,
//! then `count` little-endian `f64` values. The header must carry `count`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FLATBIN1";

#[derive(Serialize, Deserialize)]
struct Count {
    count: usize,
}

pub fn write<H: Serialize>(path: &Path, header: &H, data: &[f64]) -> Result<()> {
    let mut value = serde_json::to_value(header)?;
    match value.as_object_mut() {
        Some(obj) => {
            obj.insert("count".into(), data.len().into());
        }
        None => return Err(Error::Param("flat-binary header must be a JSON object".into())),
    }
    let head = serde_json::to_vec(&value)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(head.len() as u64).to_le_bytes())?;
    w.write_all(&head)?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<f64>)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn decode<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, Vec<f64>)> {
    let fmt = |offset: usize, msg: &str| Error::Format {
        offset: offset as u64,
        msg: msg.to_string(),
    };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(fmt(0, "missing FLATBIN1 magic"));
    }
    let head_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = 16usize
        .checked_add(head_len)
        .filter(|&b| b <= bytes.len())
        .ok_or_else(|| fmt(8, "header length exceeds file size"))?;
    let head = &bytes[16..body];
    let count: Count = serde_json::from_slice(head).map_err(|e| fmt(16, &format!("bad header: {e}")))?;
    let header: H = serde_json::from_slice(head).map_err(|e| fmt(16, &format!("bad header: {e}")))?;
    let payload = &bytes[body..];
    if payload.len() != count.count * 8 {
        return Err(fmt(body, &format!("expected {} values, found {} bytes", count.count, payload.len())));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, data))
}
