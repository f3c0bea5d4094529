//! Molecular structure to GLB asset pipeline: parse PDB text, infer bonds,
//! tessellate ball-and-stick or space-filling meshes and write GLB 2.0.

mod bonds;
mod cli;
pub mod elements;
mod glb;
mod mesh;
mod parse;

use thiserror::Error;

pub use bonds::{bond_cutoff, infer_bonds, BOND_TOLERANCE, MIN_BOND_DISTANCE};
pub use cli::{cli_main, EXIT_GENERATION, EXIT_INPUT, EXIT_OUTPUT};
pub use glb::{write_glb, MAX_VERTICES};
pub use mesh::{
    build_mesh, sphere_resolution, Mesh, MeshStyle, Submesh, SubmeshKind, BALL_FRACTION,
    BOND_RADIUS,
};
pub use parse::{parse_pdb, Atom, MolecularModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssetError {
    #[error("structure contains no atoms")]
    EmptyModel,
    #[error("malformed record on line {line}: {detail}")]
    MalformedRecord { line: usize, detail: String },
    #[error("quality must be between 1 and 4, got {0}")]
    InvalidQuality(u8),
    #[error("mesh has {0} vertices, limit is 2^24")]
    MeshTooLarge(usize),
}

/// Parse, infer bonds, mesh and serialize in one call.
pub fn pdb_to_glb(pdb: &[u8], style: MeshStyle, quality: u8, label: &str) -> Result<Vec<u8>, AssetError> {
    let model = infer_bonds(parse_pdb(pdb)?);
    write_glb(&build_mesh(&model, style, quality)?, label)
}
