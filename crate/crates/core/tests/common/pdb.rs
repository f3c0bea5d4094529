//! Oracles for the structure-to-asset pipeline.

use std::path::{Path, PathBuf};
use std::process::Command;

use molxr::content::validate_asset;
use molxr::pdb2asset::{bond_cutoff, MolecularModel, MIN_BOND_DISTANCE};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FIXTURES: [&str; 8] =
    ["ammonia", "butane", "co2", "ethylene", "glycine", "methane", "nacl", "water"];

pub fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("assets/molecules/{name}.pdb"))).unwrap()
}

/// Every pair compared against its cutoff, no spatial index.
pub fn brute_force_bonds(model: &MolecularModel) -> Vec<(usize, usize)> {
    let mut bonds = Vec::new();
    for i in 0..model.atoms.len() {
        for j in i + 1..model.atoms.len() {
            let (a, b) = (&model.atoms[i], &model.atoms[j]);
            let d2 = (a.position.x as f64 - b.position.x as f64).powi(2)
                + (a.position.y as f64 - b.position.y as f64).powi(2)
                + (a.position.z as f64 - b.position.z as f64).powi(2);
            let cutoff = bond_cutoff(&a.element, &b.element);
            if d2 <= cutoff * cutoff && d2 > MIN_BOND_DISTANCE * MIN_BOND_DISTANCE {
                bonds.push((i, j));
            }
        }
    }
    bonds
}

/// `n` atoms of common elements scattered through a box centred off the
/// origin so cells straddle negative coordinates, written as PDB text.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> String {
    const ELEMENTS: [&str; 7] = ["C", "N", "O", "H", "S", "P", "FE"];
    let side = (n as f64).cbrt() * 1.6;
    let mut text = String::from("REMARK   1 random cloud\n");
    for serial in 1..=n {
        let el = ELEMENTS[rng.random_range(0..ELEMENTS.len())];
        let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(-side / 2.0..side / 2.0) - 1.3);
        let name = format!("{el}{}", serial % 100);
        text.push_str(&format!(
            "HETATM{serial:5} {name:<4} MOL A   1    {:8.3}{:8.3}{:8.3}  1.00  0.00          {el:>2}\n",
            p[0], p[1], p[2]
        ));
    }
    text.push_str("END\n");
    text
}

/// Counts ATOM/HETATM lines of the first model, the way `grep -c` would.
pub fn grep_atom_records(pdb: &str) -> usize {
    let mut count = 0;
    for line in pdb.lines() {
        if line.starts_with("ENDMDL") {
            break;
        }
        if line.starts_with("ATOM  ") || line.starts_with("HETATM") {
            count += 1;
        }
    }
    count
}

/// Closed-form UV-sphere vertex count for a tessellation quality.
pub fn uv_sphere_vertices(quality: u8) -> usize {
    let segments = 8 * 2usize.pow(quality as u32 - 1);
    let rings = 4 * 2usize.pow(quality as u32 - 1);
    (rings - 1) * segments + 2
}

/// Container checks plus the bounding-box normalization, read straight
/// from the JSON chunk.
pub fn check_glb(bytes: &[u8]) -> Result<(), String> {
    let header = validate_asset(bytes).map_err(|e| e.to_string())?;
    if header.length as usize != bytes.len() || bytes[..4] != 0x4654_6C67u32.to_le_bytes() {
        return Err("header disagrees with the byte length or magic".into());
    }
    let json_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let doc: serde_json::Value = serde_json::from_slice(&bytes[20..20 + json_len]).map_err(|e| e.to_string())?;
    let position = &doc["accessors"][0];
    let (min, max) = (&position["min"], &position["max"]);
    let scale = doc["nodes"][0]["scale"][0].as_f64().ok_or("root node has no scale")?;
    let diagonal = (0..3).map(|k| (max[k].as_f64().unwrap() - min[k].as_f64().unwrap()).powi(2)).sum::<f64>().sqrt();
    if (diagonal * scale - 1.0).abs() > 1e-6 {
        return Err(format!("scaled diagonal is {}", diagonal * scale));
    }
    Ok(())
}

pub fn validator_script() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../tools/gltf-validator/validate.mjs")
}

#[derive(Debug)]
pub struct ExternalVerdict {
    pub files: usize,
    pub errors: u64,
    pub warnings: u64,
    pub details: Vec<String>,
}

/// Runs the Khronos glTF validator over `paths`. An unavailable validator
/// is an error, never a pass.
pub fn external_validate(paths: &[PathBuf]) -> Result<ExternalVerdict, String> {
    let script = validator_script();
    let output = Command::new("node")
        .arg(&script)
        .args(paths)
        .output()
        .map_err(|e| format!("cannot run node: {e}"))?;
    let stdout = String::from_utf8_lossy(&output.stdout);
    let mut verdict = ExternalVerdict { files: 0, errors: 0, warnings: 0, details: Vec::new() };
    for line in stdout.lines() {
        let report: serde_json::Value = serde_json::from_str(line).map_err(|e| format!("{e}: {line}"))?;
        verdict.files += 1;
        verdict.errors += report["errors"].as_u64().unwrap_or(u64::MAX);
        verdict.warnings += report["warnings"].as_u64().unwrap_or(0);
        for d in report["details"].as_array().into_iter().flatten() {
            verdict.details.push(format!("{}: {}", report["path"], d));
        }
    }
    if verdict.files != paths.len() {
        return Err(format!(
            "validator reported on {} of {} files (is `npm ci --prefix tools/gltf-validator` done?): {}",
            verdict.files,
            paths.len(),
            String::from_utf8_lossy(&output.stderr)
        ));
    }
    Ok(verdict)
}
