//! Ball-and-stick and space-filling triangle meshes.
//!
//! Every atom becomes one UV-sphere submesh and, in ball-and-stick mode,
//! every bond becomes two half-cylinder submeshes meeting at the bond
//! midpoint, each tinted with the color of the atom it touches. Vertices are
//! expressed relative to the centre of the atoms' bounding box.

use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::elements::element_data;
use super::parse::MolecularModel;
use super::AssetError;

/// Stick radius in Å.
pub const BOND_RADIUS: f64 = 0.12;
/// Ball radius as a fraction of the van der Waals radius.
pub const BALL_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshStyle {
    #[default]
    BallAndStick,
    SpaceFilling,
}

impl std::str::FromStr for MeshStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ball_and_stick" => Ok(MeshStyle::BallAndStick),
            "space_filling" => Ok(MeshStyle::SpaceFilling),
            other => Err(format!("unknown style `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmeshKind {
    Atom { atom: usize },
    HalfBond { bond: usize, atom: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Submesh {
    pub kind: SubmeshKind,
    pub vertices: Range<u32>,
    pub indices: Range<usize>,
    pub color: [f32; 4],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub positions: Vec<[f32; 3]>,
    pub normals: Vec<[f32; 3]>,
    pub indices: Vec<u32>,
    pub submeshes: Vec<Submesh>,
    /// Model-space point (Å) that maps to the mesh origin.
    pub origin: [f64; 3],
}

impl Mesh {
    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.indices.len() / 3
    }

    /// Axis-aligned bounds of all vertices.
    pub fn bounds(&self) -> ([f32; 3], [f32; 3]) {
        let mut min = [f32::INFINITY; 3];
        let mut max = [f32::NEG_INFINITY; 3];
        for p in &self.positions {
            for k in 0..3 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        (min, max)
    }
}

/// `(segments, rings)` for a tessellation quality in `1..=4`.
pub fn sphere_resolution(quality: u8) -> (usize, usize) {
    let factor = 1usize << (quality.saturating_sub(1));
    (8 * factor, 4 * factor)
}

pub fn build_mesh(model: &MolecularModel, style: MeshStyle, quality: u8) -> Result<Mesh, AssetError> {
    if !(1..=4).contains(&quality) {
        return Err(AssetError::InvalidQuality(quality));
    }
    if model.atoms.is_empty() {
        return Err(AssetError::EmptyModel);
    }
    let (segments, rings) = sphere_resolution(quality);

    let centers: Vec<[f64; 3]> = model
        .atoms
        .iter()
        .map(|a| [a.position.x as f64, a.position.y as f64, a.position.z as f64])
        .collect();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for c in &centers {
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let origin = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0];
    let local = |c: &[f64; 3]| [c[0] - origin[0], c[1] - origin[1], c[2] - origin[2]];

    let mut builder = Builder { mesh: Mesh { origin, ..Mesh::default() } };
    for (i, atom) in model.atoms.iter().enumerate() {
        let data = element_data(&atom.element);
        let radius = match style {
            MeshStyle::BallAndStick => BALL_FRACTION * data.vdw_radius,
            MeshStyle::SpaceFilling => data.vdw_radius,
        };
        builder.sphere(local(&centers[i]), radius, segments, rings, SubmeshKind::Atom { atom: i }, rgba(data.color));
    }
    if style == MeshStyle::BallAndStick {
        for (b, &(i, j)) in model.bonds.iter().enumerate() {
            let (a, c) = (local(&centers[i]), local(&centers[j]));
            let mid = [(a[0] + c[0]) / 2.0, (a[1] + c[1]) / 2.0, (a[2] + c[2]) / 2.0];
            for (atom, from) in [(i, a), (j, c)] {
                let color = rgba(element_data(&model.atoms[atom].element).color);
                builder.cylinder(from, mid, BOND_RADIUS, segments, SubmeshKind::HalfBond { bond: b, atom }, color);
            }
        }
    }
    Ok(builder.mesh)
}

fn rgba(rgb: [u8; 3]) -> [f32; 4] {
    [rgb[0] as f32 / 255.0, rgb[1] as f32 / 255.0, rgb[2] as f32 / 255.0, 1.0]
}

struct Builder {
    mesh: Mesh,
}

impl Builder {
    fn push_vertex(&mut self, p: [f64; 3], n: [f64; 3]) {
        self.mesh.positions.push([p[0] as f32, p[1] as f32, p[2] as f32]);
        self.mesh.normals.push([n[0] as f32, n[1] as f32, n[2] as f32]);
    }

    fn finish(&mut self, kind: SubmeshKind, color: [f32; 4], first_vertex: usize, first_index: usize) {
        self.mesh.submeshes.push(Submesh {
            kind,
            vertices: first_vertex as u32..self.mesh.positions.len() as u32,
            indices: first_index..self.mesh.indices.len(),
            color,
        });
    }

    /// UV-sphere with two poles and `rings - 1` latitude rings of
    /// `segments` vertices each.
    fn sphere(&mut self, c: [f64; 3], r: f64, segments: usize, rings: usize, kind: SubmeshKind, color: [f32; 4]) {
        let base = self.mesh.positions.len();
        let first_index = self.mesh.indices.len();
        let mut point = |n: [f64; 3]| self.push_vertex([c[0] + r * n[0], c[1] + r * n[1], c[2] + r * n[2]], n);

        point([0.0, 1.0, 0.0]);
        for ring in 1..rings {
            let theta = PI * ring as f64 / rings as f64;
            let (st, ct) = theta.sin_cos();
            for seg in 0..segments {
                let phi = 2.0 * PI * seg as f64 / segments as f64;
                let (sp, cp) = phi.sin_cos();
                point([st * cp, ct, st * sp]);
            }
        }
        point([0.0, -1.0, 0.0]);

        let north = base as u32;
        let south = (base + 1 + (rings - 1) * segments) as u32;
        let at = |ring: usize, seg: usize| (base + 1 + (ring - 1) * segments + seg % segments) as u32;
        let idx = &mut self.mesh.indices;
        for s in 0..segments {
            idx.extend_from_slice(&[north, at(1, s + 1), at(1, s)]);
        }
        for ring in 1..rings - 1 {
            for s in 0..segments {
                let (a, b) = (at(ring, s), at(ring, s + 1));
                let (c, d) = (at(ring + 1, s), at(ring + 1, s + 1));
                idx.extend_from_slice(&[a, b, d, a, d, c]);
            }
        }
        for s in 0..segments {
            idx.extend_from_slice(&[south, at(rings - 1, s), at(rings - 1, s + 1)]);
        }
        self.finish(kind, color, base, first_index);
    }

    /// Open cylinder from `a` to `b` with radial normals.
    fn cylinder(&mut self, a: [f64; 3], b: [f64; 3], r: f64, segments: usize, kind: SubmeshKind, color: [f32; 4]) {
        let base = self.mesh.positions.len();
        let first_index = self.mesh.indices.len();
        let axis = normalize([b[0] - a[0], b[1] - a[1], b[2] - a[2]]);
        let helper = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let u = normalize(cross(axis, helper));
        let v = cross(axis, u);
        for end in [a, b] {
            for seg in 0..segments {
                let phi = 2.0 * PI * seg as f64 / segments as f64;
                let (sp, cp) = phi.sin_cos();
                let n = [cp * u[0] + sp * v[0], cp * u[1] + sp * v[1], cp * u[2] + sp * v[2]];
                self.push_vertex([end[0] + r * n[0], end[1] + r * n[1], end[2] + r * n[2]], n);
            }
        }
        let at = |ring: usize, seg: usize| (base + ring * segments + seg % segments) as u32;
        for s in 0..segments {
            let (a0, a1, b0, b1) = (at(0, s), at(0, s + 1), at(1, s), at(1, s + 1));
            self.mesh.indices.extend_from_slice(&[a0, a1, b1, a0, b1, b0]);
        }
        self.finish(kind, color, base, first_index);
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}
