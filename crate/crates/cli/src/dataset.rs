//! Dataset persistence: columnar binary payload behind a JSON header.
//!
//! Layout:
//! ```text
//! magic   8 bytes  "FOLIODS1"
//! length  4 bytes  little-endian u32, JSON header byte count
//! header  JSON     { version, assets, period_seconds, start_timestamp, periods }
//! prices  m*n f64  little-endian, row-major (asset-major)
//! volumes m*n f64  little-endian, row-major
//! ```
//! Cell bits are preserved verbatim, so re-saving a loaded dataset is
//! byte-identical.

use std::path::Path;

use folio_core::market::{AssetId, GlobalPriceMatrix};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

const MAGIC: &[u8; 8] = b"FOLIODS1";
const DATASET_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    assets: Vec<String>,
    period_seconds: u64,
    start_timestamp: i64,
    periods: usize,
}

pub fn save(data: &GlobalPriceMatrix, path: &Path) -> Result<(), CliError> {
    let header = Header {
        version: DATASET_VERSION,
        assets: data.assets().iter().map(|a| a.as_str().to_string()).collect(),
        period_seconds: data.period_seconds(),
        start_timestamp: data.timestamps()[0],
        periods: data.period_count(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| CliError::Data(format!("header serialization: {e}")))?;
    let cells = data.asset_count() * data.period_count();
    let mut bytes = Vec::with_capacity(8 + 4 + header_json.len() + 16 * cells);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for value in data.prices() {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    for value in data.volumes() {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<GlobalPriceMatrix, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let bad = |what: &str| CliError::Data(format!("{}: {what}", path.display()));
    if bytes.len() < 12 || &bytes[0..8] != MAGIC {
        return Err(bad("not a dataset file (bad magic)"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload_start = 12 + header_len;
    if bytes.len() < payload_start {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[12..payload_start])
        .map_err(|e| bad(&format!("bad header: {e}")))?;
    if header.version != DATASET_VERSION {
        return Err(bad(&format!("unsupported dataset version {}", header.version)));
    }
    let m = header.assets.len();
    let n = header.periods;
    let cells = m * n;
    if bytes.len() != payload_start + 16 * cells {
        return Err(bad(&format!(
            "payload holds {} bytes, expected {}",
            bytes.len() - payload_start,
            16 * cells
        )));
    }
    let read_grid = |offset: usize| -> Vec<f64> {
        (0..cells)
            .map(|i| {
                let at = payload_start + offset + 8 * i;
                f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
            })
            .collect()
    };
    let prices = read_grid(0);
    let volumes = read_grid(8 * cells);
    let assets: Vec<AssetId> = header
        .assets
        .iter()
        .map(|s| AssetId::new(s.clone()))
        .collect::<Result<_, _>>()
        .map_err(CliError::from)?;
    let timestamps: Vec<i64> = (0..n)
        .map(|k| header.start_timestamp + (k as u64 * header.period_seconds) as i64)
        .collect();
    GlobalPriceMatrix::from_parts(assets, timestamps, header.period_seconds, prices, volumes)
        .map_err(CliError::from)
}
