//! Content-addressed GLB store backed by a directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use sha2::{Digest, Sha256};

use super::glb::validate_asset;
use super::{AssetResolver, ContentError};

/// URL prefix under which stored assets are served.
pub const ASSET_PREFIX: &str = "/assets/";

#[derive(Debug)]
pub struct AssetStore {
    dir: PathBuf,
    capacity_bytes: u64,
    used_bytes: Mutex<u64>,
}

impl AssetStore {
    /// Opens (creating if needed) a store rooted at `dir`. Existing `.glb`
    /// files count against `capacity_bytes`.
    pub fn open(dir: impl Into<PathBuf>, capacity_bytes: u64) -> Result<Self, ContentError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let mut used = 0;
        for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            if entry.path().extension().is_some_and(|ext| ext == "glb") {
                used += entry.metadata().map(|m| m.len()).unwrap_or(0);
            }
        }
        Ok(Self { dir, capacity_bytes, used_bytes: Mutex::new(used) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn used_bytes(&self) -> u64 {
        *self.used_bytes.lock()
    }

    /// Validates and persists `bytes`, returning the URL they are served at.
    /// Storing identical bytes again returns the same URL.
    pub fn store(&self, bytes: &[u8]) -> Result<String, ContentError> {
        validate_asset(bytes)?;
        let hash = hex::encode(Sha256::digest(bytes));
        let path = self.path_for(&hash);

        let mut used = self.used_bytes.lock();
        if path.exists() {
            return Ok(asset_url(&hash));
        }
        if *used + bytes.len() as u64 > self.capacity_bytes {
            return Err(ContentError::StorageFull);
        }
        let tmp = self.dir.join(format!(".{hash}.tmp"));
        let mut file = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        file.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
        file.sync_all().map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
        *used += bytes.len() as u64;
        Ok(asset_url(&hash))
    }

    /// Fetches by hash (with or without the `.glb` suffix) or by full URL.
    pub fn fetch(&self, key: &str) -> Option<Vec<u8>> {
        let hash = parse_hash(key)?;
        fs::read(self.path_for(hash)).ok()
    }

    fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.glb"))
    }
}

pub fn asset_url(hash: &str) -> String {
    format!("{ASSET_PREFIX}{hash}.glb")
}

/// Extracts the hex digest from `"/assets/<hash>.glb"`, `"<hash>.glb"` or
/// `"<hash>"`. Anything that is not a 64-digit lowercase hex digest is
/// rejected, which also keeps lookups inside the store directory.
pub fn parse_hash(key: &str) -> Option<&str> {
    let key = key.strip_prefix(ASSET_PREFIX).unwrap_or(key);
    let hash = key.strip_suffix(".glb").unwrap_or(key);
    let ok = hash.len() == 64 && hash.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
    ok.then_some(hash)
}

fn io_err(path: &Path, e: std::io::Error) -> ContentError {
    ContentError::Io(format!("{}: {e}", path.display()))
}

impl AssetResolver for AssetStore {
    fn check(&self, url: &str) -> Result<(), ContentError> {
        if url.starts_with(ASSET_PREFIX) {
            let bytes = self
                .fetch(url)
                .ok_or_else(|| ContentError::InvalidAsset(format!("{url} is not in the asset store")))?;
            return validate_asset(&bytes).map(|_| ());
        }
        check_external_url(url)
    }
}

/// External links are fetched by clients directly; the server only checks
/// that they look like an http(s) link to a GLB file.
pub fn check_external_url(url: &str) -> Result<(), ContentError> {
    let rest = url
        .strip_prefix("https://")
        .or_else(|| url.strip_prefix("http://"))
        .ok_or_else(|| ContentError::InvalidAsset(format!("{url}: not an asset-store or http(s) URL")))?;
    let path = rest.split(['?', '#']).next().unwrap_or_default();
    let host_ok = path.split('/').next().is_some_and(|h| !h.is_empty());
    if !host_ok || !path.to_ascii_lowercase().ends_with(".glb") || url.chars().any(char::is_whitespace) {
        return Err(ContentError::InvalidAsset(format!("{url}: expected a link to a .glb file")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::glb::minimal_glb;
    use super::*;

    fn glb() -> Vec<u8> {
        minimal_glb(r#"{"asset":{"version":"2.0"}}"#)
    }

    #[test]
    fn store_is_idempotent_and_fetchable() {
        let dir = tempfile::tempdir().unwrap();
        let store = AssetStore::open(dir.path(), 1 << 20).unwrap();
        let bytes = glb();
        let a = store.store(&bytes).unwrap();
        let b = store.store(&bytes).unwrap();
        assert_eq!(a, b);
        assert_eq!(store.used_bytes(), bytes.len() as u64);
        assert_eq!(store.fetch(&a).unwrap(), bytes);
        assert!(a.starts_with("/assets/") && a.ends_with(".glb"));
    }

    #[test]
    fn invalid_bytes_are_not_stored() {
        let dir = tempfile::tempdir().unwrap();
        let store = AssetStore::open(dir.path(), 1 << 20).unwrap();
        assert_eq!(store.store(&[0u8; 32]), Err(ContentError::BadMagic(0)));
        assert_eq!(store.used_bytes(), 0);
    }

    #[test]
    fn oversize_upload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = AssetStore::open(dir.path(), u64::MAX).unwrap();
        let bytes = vec![0u8; 65 * 1024 * 1024];
        assert!(matches!(store.store(&bytes), Err(ContentError::OversizeAsset(_))));
    }

    #[test]
    fn capacity_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let store = AssetStore::open(dir.path(), 8).unwrap();
        assert_eq!(store.store(&glb()), Err(ContentError::StorageFull));
    }

    #[test]
    fn hash_parsing_rejects_traversal() {
        assert!(parse_hash("../../etc/passwd").is_none());
        assert!(parse_hash("/assets/abc.glb").is_none());
        let h = "a".repeat(64);
        assert_eq!(parse_hash(&format!("/assets/{h}.glb")), Some(h.as_str()));
    }

    #[test]
    fn resolver_checks_urls() {
        let dir = tempfile::tempdir().unwrap();
        let store = AssetStore::open(dir.path(), 1 << 20).unwrap();
        let url = store.store(&glb()).unwrap();
        assert!(store.check(&url).is_ok());
        assert!(store.check(&asset_url(&"0".repeat(64))).is_err());
        assert!(store.check("https://example.org/models/co2.glb").is_ok());
        assert!(store.check("ftp://example.org/co2.glb").is_err());
        assert!(store.check("https://example.org/co2.png").is_err());
    }
}
