//! Preset-room manifest.
//!
//! The manifest is a versioned TOML document:
//!
//! ```toml
//! version = 1
//!
//! [[preset]]
//! id = "symmetry"
//! title = "Symmetry elements of molecules"
//!
//! [[preset.object]]
//! label = "Water (C2v)"
//! asset_url = "builtin:water"      # or /assets/<sha256>.glb, or an https link
//! position = [0.0, 1.3, -1.0]      # metres, room frame
//! orientation = [0.0, 0.0, 0.0, 1.0] # optional quaternion (x, y, z, w)
//! scale = 0.6                      # optional, default 1
//! ```
//!
//! `builtin:<name>` refers to one of the sample molecules bundled with the
//! crate; [`resolve_builtin_assets`] turns them into stored GLBs.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::store::AssetStore;
use super::{AssetResolver, ContentError};
use crate::pdb2asset::{self, MeshStyle};
use crate::protocol::{Transform, UnitQuat, Vec3};

pub const MANIFEST_VERSION: u32 = 1;
pub const BUILTIN_SCHEME: &str = "builtin:";

const STARTER_MANIFEST: &str = include_str!("../../assets/manifest.toml");

#[derive(Debug, Clone, PartialEq)]
pub struct PresetObject {
    pub asset_url: String,
    pub label: String,
    pub transform: Transform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetRoom {
    pub preset_id: String,
    pub title: String,
    pub objects: Vec<PresetObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawManifest {
    version: u32,
    #[serde(default, rename = "preset")]
    presets: Vec<RawPreset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawPreset {
    id: String,
    title: String,
    #[serde(default, rename = "object", skip_serializing_if = "Vec::is_empty")]
    objects: Vec<RawObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawObject {
    label: String,
    asset_url: String,
    #[serde(default)]
    position: [f32; 3],
    #[serde(default = "identity_orientation")]
    orientation: [f32; 4],
    #[serde(default = "unit_scale")]
    scale: f32,
}

fn identity_orientation() -> [f32; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

fn unit_scale() -> f32 {
    1.0
}

pub fn parse_manifest(text: &str) -> Result<Vec<PresetRoom>, ContentError> {
    if text.trim().is_empty() {
        return Err(ContentError::BadManifest("manifest is empty".into()));
    }
    let raw: RawManifest =
        toml::from_str(text).map_err(|e| ContentError::BadManifest(e.to_string()))?;
    if raw.version != MANIFEST_VERSION {
        return Err(ContentError::BadManifest(format!(
            "unsupported manifest version {}",
            raw.version
        )));
    }
    let mut seen = HashSet::new();
    let mut presets = Vec::with_capacity(raw.presets.len());
    for preset in raw.presets {
        if preset.id.trim().is_empty() {
            return Err(ContentError::BadManifest("preset with empty id".into()));
        }
        if !seen.insert(preset.id.clone()) {
            return Err(ContentError::DuplicatePreset(preset.id));
        }
        let objects = preset
            .objects
            .into_iter()
            .map(|o| {
                let [x, y, z, w] = o.orientation;
                let transform = Transform::new(o.position.into(), UnitQuat::from_xyzw(x, y, z, w), o.scale)
                    .map_err(|e| {
                        ContentError::BadManifest(format!("{}/{}: {e}", preset.id, o.label))
                    })?;
                Ok(PresetObject { asset_url: o.asset_url, label: o.label, transform })
            })
            .collect::<Result<Vec<_>, ContentError>>()?;
        presets.push(PresetRoom { preset_id: preset.id, title: preset.title, objects });
    }
    Ok(presets)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<PresetRoom>, ContentError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ContentError::BadManifest(format!("{}: {e}", path.display())))?;
    parse_manifest(&text)
}

pub fn serialize_manifest(presets: &[PresetRoom]) -> String {
    let raw = RawManifest {
        version: MANIFEST_VERSION,
        presets: presets
            .iter()
            .map(|p| RawPreset {
                id: p.preset_id.clone(),
                title: p.title.clone(),
                objects: p
                    .objects
                    .iter()
                    .map(|o| RawObject {
                        label: o.label.clone(),
                        asset_url: o.asset_url.clone(),
                        position: o.transform.position.to_array(),
                        orientation: o.transform.orientation.to_array(),
                        scale: o.transform.scale,
                    })
                    .collect(),
            })
            .collect(),
    };
    toml::to_string(&raw).expect("manifest serializes")
}

/// The manifest shipped with the crate: eight themed rooms, the first one
/// empty, populated with bundled sample molecules.
pub fn starter_manifest() -> Vec<PresetRoom> {
    parse_manifest(STARTER_MANIFEST).expect("bundled manifest is valid")
}

pub fn starter_manifest_text() -> &'static str {
    STARTER_MANIFEST
}

/// Bundled sample structures addressable as `builtin:<name>`.
pub fn builtin_molecule(name: &str) -> Option<&'static str> {
    Some(match name {
        "water" => include_str!("../../assets/molecules/water.pdb"),
        "ammonia" => include_str!("../../assets/molecules/ammonia.pdb"),
        "methane" => include_str!("../../assets/molecules/methane.pdb"),
        "co2" => include_str!("../../assets/molecules/co2.pdb"),
        "ethylene" => include_str!("../../assets/molecules/ethylene.pdb"),
        "butane" => include_str!("../../assets/molecules/butane.pdb"),
        "nacl" => include_str!("../../assets/molecules/nacl.pdb"),
        "glycine" => include_str!("../../assets/molecules/glycine.pdb"),
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnresolvedAsset {
    pub preset_id: String,
    pub label: String,
    pub asset_url: String,
    pub reason: String,
}

/// Generates and stores GLBs for every `builtin:` asset, rewriting the URLs
/// in place. Objects whose URL cannot be resolved are kept but returned as
/// flagged.
pub fn resolve_builtin_assets(
    presets: &mut [PresetRoom],
    store: &AssetStore,
) -> Vec<UnresolvedAsset> {
    let mut flagged = Vec::new();
    for preset in presets.iter_mut() {
        for object in &mut preset.objects {
            let resolved = match object.asset_url.strip_prefix(BUILTIN_SCHEME) {
                Some(name) => build_builtin(name, &object.label, store),
                None => store.check(&object.asset_url).map(|_| object.asset_url.clone()),
            };
            match resolved {
                Ok(url) => object.asset_url = url,
                Err(e) => flagged.push(UnresolvedAsset {
                    preset_id: preset.preset_id.clone(),
                    label: object.label.clone(),
                    asset_url: object.asset_url.clone(),
                    reason: e.to_string(),
                }),
            }
        }
    }
    flagged
}

fn build_builtin(name: &str, label: &str, store: &AssetStore) -> Result<String, ContentError> {
    let pdb = builtin_molecule(name)
        .ok_or_else(|| ContentError::InvalidAsset(format!("no bundled molecule `{name}`")))?;
    let glb = pdb2asset::pdb_to_glb(pdb.as_bytes(), MeshStyle::BallAndStick, 2, label)
        .map_err(|e| ContentError::InvalidAsset(format!("builtin:{name}: {e}")))?;
    store.store(&glb)
}

impl PresetObject {
    pub fn at(label: &str, asset_url: &str, position: Vec3) -> Self {
        Self { asset_url: asset_url.into(), label: label.into(), transform: Transform::at(position) }
    }
}
