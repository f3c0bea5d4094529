//! GLB container header parsing and validation.

use serde::Serialize;

use super::ContentError;

pub const GLB_MAGIC: u32 = 0x4654_6C67;
pub const GLB_VERSION: u32 = 2;
pub const CHUNK_JSON: u32 = 0x4E4F_534A;
pub const CHUNK_BIN: u32 = 0x004E_4942;
pub const GLB_HEADER_LEN: usize = 12;
pub const CHUNK_HEADER_LEN: usize = 8;

/// Upper bound on accepted assets (64 MiB).
pub const MAX_ASSET_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChunkInfo {
    pub length: u32,
    pub chunk_type: u32,
    /// Offset of the chunk payload (after its 8-byte chunk header).
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GlbHeader {
    pub magic: u32,
    pub version: u32,
    pub length: u32,
    pub chunks: Vec<ChunkInfo>,
}

fn u32_at(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
}

pub fn validate_asset(bytes: &[u8]) -> Result<GlbHeader, ContentError> {
    if bytes.len() > MAX_ASSET_BYTES {
        return Err(ContentError::OversizeAsset(bytes.len()));
    }
    let magic = u32_at(bytes, 0).ok_or_else(|| truncated("missing magic"))?;
    if magic != GLB_MAGIC {
        return Err(ContentError::BadMagic(magic));
    }
    if bytes.len() < GLB_HEADER_LEN {
        return Err(truncated("header shorter than 12 bytes"));
    }
    let version = u32_at(bytes, 4).unwrap();
    if version != GLB_VERSION {
        return Err(ContentError::BadVersion(version));
    }
    let length = u32_at(bytes, 8).unwrap();
    if length as usize != bytes.len() {
        return Err(truncated(&format!(
            "declared length {length} but {} bytes present",
            bytes.len()
        )));
    }

    let mut chunks = Vec::new();
    let mut at = GLB_HEADER_LEN;
    while at < bytes.len() {
        let (Some(chunk_len), Some(chunk_type)) = (u32_at(bytes, at), u32_at(bytes, at + 4)) else {
            return Err(truncated(&format!("chunk header at offset {at}")));
        };
        let offset = at + CHUNK_HEADER_LEN;
        let end = offset
            .checked_add(chunk_len as usize)
            .filter(|end| *end <= bytes.len())
            .ok_or_else(|| truncated(&format!("chunk at offset {at} overruns container")))?;
        chunks.push(ChunkInfo { length: chunk_len, chunk_type, offset });
        at = end;
    }

    let first = chunks.first().ok_or_else(|| ContentError::BadMetadata("no chunks".into()))?;
    if first.chunk_type != CHUNK_JSON {
        return Err(ContentError::BadMetadata(format!(
            "first chunk type {:#010x} is not JSON",
            first.chunk_type
        )));
    }
    let json = &bytes[first.offset..first.offset + first.length as usize];
    let doc: serde_json::Value =
        serde_json::from_slice(json).map_err(|e| ContentError::BadMetadata(e.to_string()))?;
    let asset_version = doc.pointer("/asset/version").and_then(|v| v.as_str());
    if asset_version != Some("2.0") {
        return Err(ContentError::BadMetadata("asset.version must be \"2.0\"".into()));
    }

    Ok(GlbHeader { magic, version, length, chunks })
}

fn truncated(detail: &str) -> ContentError {
    ContentError::TruncatedChunk(detail.to_string())
}

#[cfg(test)]
pub(crate) fn minimal_glb(json: &str) -> Vec<u8> {
    let mut json = json.as_bytes().to_vec();
    while !json.len().is_multiple_of(4) {
        json.push(b' ');
    }
    let total = GLB_HEADER_LEN + CHUNK_HEADER_LEN + json.len();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&GLB_MAGIC.to_le_bytes());
    out.extend_from_slice(&GLB_VERSION.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_JSON.to_le_bytes());
    out.extend_from_slice(&json);
    out
}
