//! ASCII OBJ reader/writer.
//!
//! The reader honors `v` and `f` records, fan-triangulates polygonal faces,
//! resolves negative (relative) indices, and ignores every other record type.
//! The writer emits `v` records with 9 significant digits (scientific
//! notation), which keeps a write/read round trip within 1e-7 relative error
//! at every magnitude, then `f` records with 1-based indices.

use super::{TriMesh, Vec3};
use crate::error::{Error, Result};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub fn read_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let file = std::fs::File::open(path)?;
    read_obj_from(BufReader::new(file))
}

pub fn read_obj_from(reader: impl Read) -> Result<TriMesh> {
    let reader = BufReader::new(reader);
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let malformed = |message: String| Error::MalformedObj {
            line: lineno,
            message,
        };

        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut fields = body.split_whitespace();
        match fields.next() {
            Some("v") => {
                let mut coord = |name: &str| -> Result<f64> {
                    fields
                        .next()
                        .ok_or_else(|| malformed(format!("vertex record missing {name}")))?
                        .parse::<f64>()
                        .map_err(|e| malformed(format!("bad {name} coordinate: {e}")))
                };
                let (x, y, z) = (coord("x")?, coord("y")?, coord("z")?);
                // A 4th field (w) is legal; anything after is not checked.
                vertices.push(Vec3::new(x, y, z));
            }
            Some("f") => {
                let mut corners: Vec<u32> = Vec::new();
                for field in fields {
                    let idx_str = field.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str
                        .parse()
                        .map_err(|e| malformed(format!("bad face index {idx_str:?}: {e}")))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(malformed("face index 0 is not allowed".into()));
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(malformed(format!(
                            "face index {idx} out of range ({} vertices so far)",
                            vertices.len()
                        )));
                    }
                    corners.push(resolved as u32);
                }
                if corners.len() < 3 {
                    return Err(malformed(format!(
                        "face record has {} corners, need at least 3",
                        corners.len()
                    )));
                }
                for i in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[i], corners[i + 1]]);
                }
            }
            // Normals, texcoords, groups, materials, lines, points: ignored.
            Some(_) => {}
            None => {}
        }
    }
    Ok(TriMesh {
        vertices,
        triangles,
    })
}

pub fn write_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_obj_to(mesh, BufWriter::new(file))
}

pub fn write_obj_to(mesh: &TriMesh, mut writer: impl Write) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(writer, "v {:.8e} {:.8e} {:.8e}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(writer, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    writer.flush()?;
    Ok(())
}
