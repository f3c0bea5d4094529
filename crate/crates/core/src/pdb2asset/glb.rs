//! Single-buffer GLB 2.0 writer.

use serde_json::json;

use super::mesh::Mesh;
use super::AssetError;
use crate::content::{CHUNK_BIN, CHUNK_JSON, GLB_MAGIC, GLB_VERSION};

/// Largest mesh `write_glb` accepts.
pub const MAX_VERTICES: usize = 1 << 24;

const FLOAT: u32 = 5126;
const UNSIGNED_INT: u32 = 5125;
const ARRAY_BUFFER: u32 = 34962;
const ELEMENT_ARRAY_BUFFER: u32 = 34963;
const TRIANGLES: u32 = 4;

/// Serializes `mesh` as a GLB. Submeshes sharing a color are merged into
/// one primitive with one material. The root node carries a uniform scale
/// that makes the bounding-box diagonal 1 m.
pub fn write_glb(mesh: &Mesh, label: &str) -> Result<Vec<u8>, AssetError> {
    let vertex_count = mesh.vertex_count();
    if vertex_count > MAX_VERTICES {
        return Err(AssetError::MeshTooLarge(vertex_count));
    }
    if vertex_count == 0 {
        return Err(AssetError::EmptyModel);
    }

    // Group submesh index ranges by color, in order of first appearance.
    let mut groups: Vec<([f32; 4], Vec<u32>)> = Vec::new();
    for sub in &mesh.submeshes {
        let slice = &mesh.indices[sub.indices.clone()];
        match groups.iter_mut().find(|(color, _)| *color == sub.color) {
            Some((_, indices)) => indices.extend_from_slice(slice),
            None => groups.push((sub.color, slice.to_vec())),
        }
    }

    let mut bin: Vec<u8> = Vec::new();
    let mut views = Vec::new();
    let mut push_view = |bin: &mut Vec<u8>, data: &[u8], target: u32| {
        let offset = bin.len();
        bin.extend_from_slice(data);
        views.push(json!({ "buffer": 0, "byteOffset": offset, "byteLength": data.len(), "target": target }));
        views.len() - 1
    };
    let floats = |v: &[[f32; 3]]| v.iter().flatten().flat_map(|f| f.to_le_bytes()).collect::<Vec<u8>>();
    let position_view = push_view(&mut bin, &floats(&mesh.positions), ARRAY_BUFFER);
    let normal_view = push_view(&mut bin, &floats(&mesh.normals), ARRAY_BUFFER);

    let (min, max) = mesh.bounds();
    let mut accessors = vec![
        json!({ "bufferView": position_view, "componentType": FLOAT, "count": vertex_count,
                "type": "VEC3", "min": min, "max": max }),
        json!({ "bufferView": normal_view, "componentType": FLOAT, "count": vertex_count, "type": "VEC3" }),
    ];
    let mut primitives = Vec::new();
    let mut materials = Vec::new();
    for (material, (color, indices)) in groups.iter().enumerate() {
        let bytes: Vec<u8> = indices.iter().flat_map(|i| i.to_le_bytes()).collect();
        let view = push_view(&mut bin, &bytes, ELEMENT_ARRAY_BUFFER);
        let index_max = indices.iter().copied().max().unwrap_or(0);
        let index_min = indices.iter().copied().min().unwrap_or(0);
        accessors.push(json!({ "bufferView": view, "componentType": UNSIGNED_INT, "count": indices.len(),
                               "type": "SCALAR", "min": [index_min], "max": [index_max] }));
        primitives.push(json!({
            "attributes": { "POSITION": 0, "NORMAL": 1 },
            "indices": accessors.len() - 1,
            "material": material,
            "mode": TRIANGLES,
        }));
        materials.push(json!({
            "name": format!("cpk-{:02x}{:02x}{:02x}", (color[0] * 255.0).round() as u8,
                            (color[1] * 255.0).round() as u8, (color[2] * 255.0).round() as u8),
            "pbrMetallicRoughness": { "baseColorFactor": color, "metallicFactor": 0.0, "roughnessFactor": 0.6 },
        }));
    }

    let diagonal = ((max[0] as f64 - min[0] as f64).powi(2)
        + (max[1] as f64 - min[1] as f64).powi(2)
        + (max[2] as f64 - min[2] as f64).powi(2))
    .sqrt();
    let scale = if diagonal > 0.0 { 1.0 / diagonal } else { 1.0 };

    let document = json!({
        "asset": { "version": "2.0", "generator": concat!("molxr pdb2asset ", env!("CARGO_PKG_VERSION")) },
        "scene": 0,
        "scenes": [{ "nodes": [0] }],
        "nodes": [{ "name": label, "mesh": 0, "scale": [scale, scale, scale] }],
        "meshes": [{ "name": label, "primitives": primitives }],
        "materials": materials,
        "accessors": accessors,
        "bufferViews": views,
        "buffers": [{ "byteLength": bin.len() }],
    });

    let mut json_bytes = serde_json::to_vec(&document).expect("document serializes");
    pad(&mut json_bytes, b' ');
    pad(&mut bin, 0);

    let total = 12 + 8 + json_bytes.len() + 8 + bin.len();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&GLB_MAGIC.to_le_bytes());
    out.extend_from_slice(&GLB_VERSION.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(json_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_JSON.to_le_bytes());
    out.extend_from_slice(&json_bytes);
    out.extend_from_slice(&(bin.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_BIN.to_le_bytes());
    out.extend_from_slice(&bin);
    Ok(out)
}

fn pad(bytes: &mut Vec<u8>, with: u8) {
    while !bytes.len().is_multiple_of(4) {
        bytes.push(with);
    }
}

#[cfg(test)]
mod tests {
    use super::super::{build_mesh, infer_bonds, parse_pdb, MeshStyle};
    use super::*;
    use crate::content::validate_asset;

    fn water_glb() -> Vec<u8> {
        let model = infer_bonds(parse_pdb(include_bytes!("../../assets/molecules/water.pdb")).unwrap());
        write_glb(&build_mesh(&model, MeshStyle::BallAndStick, 2).unwrap(), "water").unwrap()
    }

    #[test]
    fn header_is_self_consistent() {
        let bytes = water_glb();
        assert_eq!(&bytes[..4], &[0x67, 0x6C, 0x54, 0x46]);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize, bytes.len());
        assert_eq!(bytes.len() % 4, 0);
    }

    #[test]
    fn output_validates() {
        let header = validate_asset(&water_glb()).unwrap();
        assert_eq!(header.chunks.len(), 2);
        assert_eq!(header.chunks[1].chunk_type, CHUNK_BIN);
    }

    #[test]
    fn one_material_per_color() {
        let bytes = water_glb();
        let header = validate_asset(&bytes).unwrap();
        let json = &bytes[header.chunks[0].offset..header.chunks[0].offset + header.chunks[0].length as usize];
        let doc: serde_json::Value = serde_json::from_slice(json).unwrap();
        // Oxygen red and hydrogen white.
        assert_eq!(doc["materials"].as_array().unwrap().len(), 2);
        assert_eq!(doc["meshes"][0]["primitives"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn empty_mesh_is_rejected() {
        assert_eq!(write_glb(&Mesh::default(), "x"), Err(AssetError::EmptyModel));
    }
}
