//! Distance-based bond inference over a uniform spatial grid.

use std::collections::HashMap;

use super::elements::element_data;
use super::parse::MolecularModel;

/// Bonded iff distance ≤ `BOND_TOLERANCE` × (r_cov(i) + r_cov(j)).
pub const BOND_TOLERANCE: f64 = 1.2;
/// Pairs closer than this are treated as coincident-atom artifacts.
pub const MIN_BOND_DISTANCE: f64 = 0.4;

pub fn bond_cutoff(a: &str, b: &str) -> f64 {
    BOND_TOLERANCE * (element_data(a).covalent_radius + element_data(b).covalent_radius)
}

/// Adds distance-inferred bonds to the model's explicit bonds.
pub fn infer_bonds(mut model: MolecularModel) -> MolecularModel {
    let atoms = &model.atoms;
    if atoms.len() < 2 {
        model.normalize_bonds();
        return model;
    }

    let radii: Vec<f64> = atoms.iter().map(|a| element_data(&a.element).covalent_radius).collect();
    let max_radius = radii.iter().cloned().fold(0.0, f64::max);
    let cell = BOND_TOLERANCE * 2.0 * max_radius;
    let positions: Vec<[f64; 3]> = atoms
        .iter()
        .map(|a| [a.position.x as f64, a.position.y as f64, a.position.z as f64])
        .collect();
    let cell_of = |p: &[f64; 3]| {
        [
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        ]
    };

    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in positions.iter().enumerate() {
        grid.entry(cell_of(p)).or_default().push(i);
    }

    let mut found = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        let [cx, cy, cz] = cell_of(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = grid.get(&[cx + dx, cy + dy, cz + dz]) else { continue };
                    for &j in bucket.iter().filter(|&&j| j > i) {
                        let q = &positions[j];
                        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                        let cutoff = BOND_TOLERANCE * (radii[i] + radii[j]);
                        if d2 <= cutoff * cutoff && d2 > MIN_BOND_DISTANCE * MIN_BOND_DISTANCE {
                            found.push((i, j));
                        }
                    }
                }
            }
        }
    }

    model.bonds.extend(found);
    model.normalize_bonds();
    model
}

#[cfg(test)]
mod tests {
    use super::super::parse::{parse_pdb, Atom};
    use super::*;
    use crate::protocol::Vec3;

    fn atom(element: &str, x: f32, y: f32, z: f32) -> Atom {
        Atom {
            serial: None,
            name: element.to_uppercase(),
            element: element.into(),
            position: Vec3::new(x, y, z),
            residue_name: String::new(),
            chain_id: String::new(),
            residue_seq: None,
            hetero: true,
        }
    }

    #[test]
    fn water_gets_two_oh_bonds() {
        let model = infer_bonds(parse_pdb(include_bytes!("../../assets/molecules/water.pdb")).unwrap());
        assert_eq!(model.bonds, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn distant_atoms_do_not_bond() {
        let model = MolecularModel { atoms: vec![atom("C", 0.0, 0.0, 0.0), atom("C", 10.0, 0.0, 0.0)], bonds: vec![] };
        assert!(infer_bonds(model).bonds.is_empty());
    }

    #[test]
    fn coincident_atoms_do_not_bond() {
        let model = MolecularModel { atoms: vec![atom("C", 0.0, 0.0, 0.0), atom("C", 0.3, 0.0, 0.0)], bonds: vec![] };
        assert!(infer_bonds(model).bonds.is_empty());
    }

    #[test]
    fn explicit_bonds_are_kept_and_deduplicated() {
        let model = MolecularModel {
            atoms: vec![atom("C", 0.0, 0.0, 0.0), atom("O", 1.2, 0.0, 0.0), atom("Fe", 8.0, 0.0, 0.0)],
            bonds: vec![(1, 0), (0, 2)],
        };
        assert_eq!(infer_bonds(model).bonds, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn negative_coordinates_share_cells_correctly() {
        let model = MolecularModel { atoms: vec![atom("C", -0.7, 0.0, 0.0), atom("C", 0.7, 0.0, 0.0)], bonds: vec![] };
        assert_eq!(infer_bonds(model).bonds, vec![(0, 1)]);
    }
}
