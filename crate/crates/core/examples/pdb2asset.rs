//! PDB to GLB converter.
//!
//! ```text
//! cargo run --example pdb2asset -- --in assets/molecules/glycine.pdb --out glycine.glb --quality 3
//! cargo run --example pdb2asset -- --in assets/molecules/nacl.pdb --out nacl.glb --style space_filling
//! ```

fn main() {
    std::process::exit(molxr::pdb2asset::cli_main(std::env::args_os()));
}
