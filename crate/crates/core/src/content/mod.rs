//! Room content: preset manifests, GLB validation and the asset store.

mod glb;
mod manifest;
mod store;

use thiserror::Error;

pub use glb::{
    validate_asset, ChunkInfo, GlbHeader, CHUNK_BIN, CHUNK_JSON, GLB_MAGIC, GLB_VERSION,
    MAX_ASSET_BYTES,
};
pub use manifest::{
    builtin_molecule, load_manifest, parse_manifest, resolve_builtin_assets, serialize_manifest,
    starter_manifest, starter_manifest_text, PresetObject, PresetRoom, UnresolvedAsset,
    BUILTIN_SCHEME, MANIFEST_VERSION,
};
pub use store::{asset_url, check_external_url, parse_hash, AssetStore, ASSET_PREFIX};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContentError {
    #[error("bad manifest: {0}")]
    BadManifest(String),
    #[error("duplicate preset id `{0}`")]
    DuplicatePreset(String),
    #[error("bad GLB magic {0:#010x}")]
    BadMagic(u32),
    #[error("unsupported GLB version {0}")]
    BadVersion(u32),
    #[error("truncated GLB chunk: {0}")]
    TruncatedChunk(String),
    #[error("asset of {0} bytes exceeds the 64 MiB cap")]
    OversizeAsset(usize),
    #[error("bad GLB metadata: {0}")]
    BadMetadata(String),
    #[error("asset storage is full")]
    StorageFull,
    #[error("invalid asset: {0}")]
    InvalidAsset(String),
    #[error("storage error: {0}")]
    Io(String),
}

/// Decides whether an asset URL may enter a room.
pub trait AssetResolver {
    fn check(&self, url: &str) -> Result<(), ContentError>;
}

/// Accepts every URL. Useful for session tests that do not care about
/// content.
#[derive(Debug, Default, Clone, Copy)]
pub struct AcceptAll;

impl AssetResolver for AcceptAll {
    fn check(&self, _url: &str) -> Result<(), ContentError> {
        Ok(())
    }
}

impl<F> AssetResolver for F
where
    F: Fn(&str) -> Result<(), ContentError>,
{
    fn check(&self, url: &str) -> Result<(), ContentError> {
        self(url)
    }
}
