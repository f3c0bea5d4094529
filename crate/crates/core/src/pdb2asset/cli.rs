//! `pdb2asset --in <file.pdb> --out <file.glb> [--style ...] [--quality 1..4]`

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use super::{build_mesh, infer_bonds, parse_pdb, write_glb, MeshStyle};

pub const EXIT_INPUT: i32 = 1;
pub const EXIT_GENERATION: i32 = 2;
pub const EXIT_OUTPUT: i32 = 3;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StyleArg {
    #[value(name = "ball_and_stick")]
    BallAndStick,
    #[value(name = "space_filling")]
    SpaceFilling,
}

#[derive(Debug, Parser)]
#[command(name = "pdb2asset", about = "Convert a PDB structure into a GLB 3D asset")]
struct Args {
    /// Input PDB file.
    #[arg(long = "in", value_name = "FILE.pdb")]
    input: PathBuf,
    /// Output GLB file.
    #[arg(long, value_name = "FILE.glb")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "ball_and_stick")]
    style: StyleArg,
    /// Sphere tessellation level.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=4))]
    quality: u8,
    /// Node name inside the GLB (defaults to the input file stem).
    #[arg(long)]
    label: Option<String>,
}

/// Runs the converter and returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(args) => args,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    match run(&args) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err((code, message)) => {
            eprintln!("pdb2asset: {message}");
            code
        }
    }
}

fn run(args: &Args) -> Result<String, (i32, String)> {
    let bytes = std::fs::read(&args.input)
        .map_err(|e| (EXIT_INPUT, format!("cannot read {}: {e}", args.input.display())))?;
    let model = parse_pdb(&bytes).map_err(|e| (EXIT_INPUT, format!("{}: {e}", args.input.display())))?;
    let model = infer_bonds(model);
    let style = match args.style {
        StyleArg::BallAndStick => MeshStyle::BallAndStick,
        StyleArg::SpaceFilling => MeshStyle::SpaceFilling,
    };
    let mesh = build_mesh(&model, style, args.quality).map_err(|e| (EXIT_GENERATION, e.to_string()))?;
    let label = args.label.clone().unwrap_or_else(|| {
        args.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
    });
    let glb = write_glb(&mesh, &label).map_err(|e| (EXIT_GENERATION, e.to_string()))?;
    std::fs::write(&args.out, &glb)
        .map_err(|e| (EXIT_OUTPUT, format!("cannot write {}: {e}", args.out.display())))?;
    Ok(format!(
        "wrote {} ({} atoms, {} bonds, {} vertices, {} bytes)",
        args.out.display(),
        model.atoms.len(),
        model.bonds.len(),
        mesh.vertex_count(),
        glb.len()
    ))
}
