//! Fixed-column PDB reader (ATOM, HETATM, CONECT, MODEL/ENDMDL).

use serde::Serialize;

use super::elements::{lookup, normalize_symbol};
use super::AssetError;
use crate::protocol::Vec3;

/// Shortest ATOM/HETATM line that still holds all three coordinates.
const COORDINATE_END: usize = 54;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    pub serial: Option<i64>,
    pub name: String,
    pub element: String,
    /// Ångström.
    pub position: Vec3,
    pub residue_name: String,
    pub chain_id: String,
    pub residue_seq: Option<i32>,
    pub hetero: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MolecularModel {
    pub atoms: Vec<Atom>,
    /// Atom index pairs, `i < j`, sorted, no duplicates.
    pub bonds: Vec<(usize, usize)>,
}

impl MolecularModel {
    /// Sorts and deduplicates bonds, dropping self-bonds and out-of-range
    /// indices.
    pub fn normalize_bonds(&mut self) {
        let n = self.atoms.len();
        let mut bonds: Vec<(usize, usize)> = self
            .bonds
            .iter()
            .filter(|(i, j)| i != j && *i < n && *j < n)
            .map(|&(i, j)| (i.min(j), i.max(j)))
            .collect();
        bonds.sort_unstable();
        bonds.dedup();
        self.bonds = bonds;
    }
}

fn column(line: &str, from: usize, to: usize) -> &str {
    // PDB columns are 1-based and inclusive.
    let end = to.min(line.len());
    line.get(from - 1..end).unwrap_or("").trim()
}

pub fn parse_pdb(bytes: &[u8]) -> Result<MolecularModel, AssetError> {
    let text = String::from_utf8_lossy(bytes);
    let mut atoms = Vec::new();
    let mut conect: Vec<(i64, i64)> = Vec::new();

    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        let record = line.get(..6).unwrap_or(line).trim_end();
        match record {
            "ENDMDL" if !atoms.is_empty() => break,
            "ATOM" | "HETATM" => atoms.push(parse_atom(line, line_no + 1, record == "HETATM")?),
            "CONECT" => {
                let Ok(from) = column(line, 7, 11).parse::<i64>() else { continue };
                for (a, b) in [(12, 16), (17, 21), (22, 26), (27, 31)] {
                    if let Ok(to) = column(line, a, b).parse::<i64>() {
                        conect.push((from, to));
                    }
                }
            }
            _ => {}
        }
    }

    if atoms.is_empty() {
        return Err(AssetError::EmptyModel);
    }

    let by_serial: std::collections::HashMap<i64, usize> = atoms
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.serial.map(|s| (s, i)))
        .collect();
    let mut model = MolecularModel {
        bonds: conect
            .into_iter()
            .filter_map(|(a, b)| Some((*by_serial.get(&a)?, *by_serial.get(&b)?)))
            .collect(),
        atoms,
    };
    model.normalize_bonds();
    Ok(model)
}

fn parse_atom(line: &str, line_no: usize, hetero: bool) -> Result<Atom, AssetError> {
    if line.len() < COORDINATE_END {
        return Err(AssetError::MalformedRecord {
            line: line_no,
            detail: format!("{} columns, coordinates need {COORDINATE_END}", line.len()),
        });
    }
    let coord = |from, to, axis| {
        column(line, from, to).parse::<f32>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
            AssetError::MalformedRecord {
                line: line_no,
                detail: format!("unreadable {axis} coordinate `{}`", column(line, from, to)),
            }
        })
    };
    let position = Vec3::new(coord(31, 38, "x")?, coord(39, 46, "y")?, coord(47, 54, "z")?);
    let raw_name = line.get(12..16).unwrap_or("");
    let name = raw_name.trim().to_string();
    let element = element_symbol(column(line, 77, 78), raw_name);
    Ok(Atom {
        serial: column(line, 7, 11).parse().ok(),
        name,
        element,
        position,
        residue_name: column(line, 18, 20).to_string(),
        chain_id: column(line, 22, 22).to_string(),
        residue_seq: column(line, 23, 26).parse().ok(),
        hetero,
    })
}

/// Element from columns 77-78, falling back to the atom-name convention:
/// two-letter elements start in column 13, one-letter elements in column 14.
fn element_symbol(field: &str, raw_name: &str) -> String {
    let field = normalize_symbol(field);
    if !field.is_empty() {
        return field;
    }
    let padded = format!("{raw_name:<4}");
    let bytes = padded.as_bytes();
    if bytes[0].is_ascii_alphabetic() && bytes[1].is_ascii_alphabetic() {
        let two = normalize_symbol(&padded[..2]);
        if lookup(&two).is_some() {
            return two;
        }
    }
    padded
        .chars()
        .find(|c| c.is_ascii_alphabetic())
        .map(|c| c.to_ascii_uppercase().to_string())
        .unwrap_or_else(|| "X".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    const WATER: &str = include_str!("../../assets/molecules/water.pdb");

    #[test]
    fn water_has_three_atoms() {
        let model = parse_pdb(WATER.as_bytes()).unwrap();
        let elements: Vec<_> = model.atoms.iter().map(|a| a.element.as_str()).collect();
        assert_eq!(elements, ["O", "H", "H"]);
        assert!(model.bonds.is_empty());
        let oh = model.atoms[0].position.distance(&model.atoms[1].position);
        assert!((oh - 0.96).abs() < 1e-3);
    }

    #[test]
    fn remarks_only_is_empty_model() {
        let text = "REMARK   1 nothing here\nREMARK   2 still nothing\n";
        assert_eq!(parse_pdb(text.as_bytes()), Err(AssetError::EmptyModel));
        assert_eq!(parse_pdb(b""), Err(AssetError::EmptyModel));
    }

    #[test]
    fn short_atom_line_is_malformed() {
        let text = "REMARK\nATOM      1  N   GLY A   1      -1.053  -0.439\n";
        assert!(matches!(
            parse_pdb(text.as_bytes()),
            Err(AssetError::MalformedRecord { line: 2, .. })
        ));
    }

    #[test]
    fn conect_records_become_bonds() {
        let model = parse_pdb(include_bytes!("../../assets/molecules/co2.pdb")).unwrap();
        assert_eq!(model.bonds, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn only_first_model_is_read() {
        let atom = |serial: usize, x: f32| {
            format!("ATOM  {serial:>5}  CA  ALA A   1    {x:>8.3}{:>8.3}{:>8.3}  1.00  0.00           C", 0.0, 0.0)
        };
        let text = format!(
            "MODEL        1\n{}\n{}\nENDMDL\nMODEL        2\n{}\n{}\n{}\nENDMDL\n",
            atom(1, 0.0),
            atom(2, 1.5),
            atom(1, 0.0),
            atom(2, 1.5),
            atom(3, 3.0)
        );
        assert_eq!(parse_pdb(text.as_bytes()).unwrap().atoms.len(), 2);
    }

    #[test]
    fn element_falls_back_to_atom_name() {
        assert_eq!(element_symbol("", "FE  "), "Fe");
        assert_eq!(element_symbol("", " CA "), "C");
        assert_eq!(element_symbol("", "CA  "), "Ca");
        assert_eq!(element_symbol("", "1HB "), "H");
        assert_eq!(element_symbol("", " OXT"), "O");
        assert_eq!(element_symbol("SE", " SE "), "Se");
    }
}
