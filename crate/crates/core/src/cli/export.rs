//! Mesh files: OBJ for surfaces in R³, a JSON dump for every target.

use crate::error::{Error, Result};
use crate::immersion::ImmersionMesh;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const MESH_SCHEMA_VERSION: u32 = 1;

/// `v x y z` lines with 17 significant digits, then 1-based quads.
pub fn obj_string(mesh: &ImmersionMesh) -> Result<String> {
    let pts = mesh
        .real_positions()
        .ok_or_else(|| Error::Unsupported("target not embeddable in R³".into()))?;
    let (nx, ny) = mesh.shape();
    let mut s = format!("# {} {nx}x{ny}\n", mesh.target.name());
    for p in &pts {
        writeln!(s, "v {:.16e} {:.16e} {:.16e}", p[0], p[1], p[2]).expect("write to String");
    }
    for f in mesh.faces() {
        writeln!(s, "f {} {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1, f[3] + 1).expect("write to String");
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshDump {
    pub schema_version: u32,
    pub target: String,
    pub shape: [usize; 2],
    pub origin: Complex64,
    pub step_j: Complex64,
    pub step_k: Complex64,
    /// Row-major over `(j, k)`, vertex `j·ny + k`.
    pub positions: Vec<[Complex64; 3]>,
    /// 0-based quads.
    pub faces: Vec<[usize; 4]>,
}

impl MeshDump {
    pub fn new(mesh: &ImmersionMesh) -> Self {
        let (nx, ny) = mesh.shape();
        MeshDump {
            schema_version: MESH_SCHEMA_VERSION,
            target: mesh.target.name().into(),
            shape: [nx, ny],
            origin: mesh.lattice.origin,
            step_j: mesh.lattice.step_j,
            step_k: mesh.lattice.step_k,
            positions: mesh.positions.iter().map(|p| [p[0], p[1], p[2]]).collect(),
            faces: mesh.faces(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let dump: MeshDump = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if dump.schema_version != MESH_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!("mesh schema_version {} is not supported", dump.schema_version)));
        }
        if dump.positions.len() != dump.shape[0] * dump.shape[1] {
            return Err(Error::InvalidInput("mesh dump has the wrong number of vertices".into()));
        }
        Ok(dump)
    }
}

/// Writes OBJ or JSON according to the extension of `path`.
pub fn export_mesh(mesh: &ImmersionMesh, path: &Path) -> Result<()> {
    let text = match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => obj_string(mesh)?,
        Some("json") => serde_json::to_string(&MeshDump::new(mesh))? + "\n",
        _ => return Err(Error::InvalidInput(format!("unknown mesh format for {}", path.display()))),
    };
    std::fs::write(path, text)?;
    Ok(())
}
