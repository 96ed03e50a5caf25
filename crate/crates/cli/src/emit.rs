//! File emitters: OBJ meshes, per-vertex annotation JSON, CSV traces.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;
use ttstar::factorization::Orbit;
use ttstar::geometry::{SurfaceMesh, VertexStatus};
use ttstar::painleve3::TraceNode;

/// Writes the non-singular vertices as `v x1 x2 x3` and the kept quads as
/// 1-indexed `f` lines. Returns the OBJ index of each mesh vertex.
pub fn write_obj<W: Write>(mesh: &SurfaceMesh, mut w: W) -> io::Result<Vec<Option<usize>>> {
    writeln!(w, "# spacelike CMC surface in R^(2,1), a = {}", mesh.a)?;
    writeln!(
        w,
        "# {} x {} polar grid, r in [{}, {}]",
        mesh.grid.nr, mesh.grid.ntheta, mesh.grid.r_min, mesh.grid.r_max
    )?;
    let mut index = vec![None; mesh.vertices.len()];
    let mut next = 1;
    for (i, v) in mesh.vertices.iter().enumerate() {
        if let Some(s) = &v.sample {
            let [x1, x2, x3] = s.point;
            writeln!(w, "v {x1:.17e} {x2:.17e} {x3:.17e}")?;
            index[i] = Some(next);
            next += 1;
        }
    }
    for q in &mesh.faces {
        let ids = q.map(|k| index[k].expect("kept faces have factorized vertices"));
        writeln!(w, "f {} {} {} {}", ids[0], ids[1], ids[2], ids[3])?;
    }
    w.flush()?;
    Ok(index)
}

#[derive(Clone, Debug, Serialize)]
pub struct VertexAnnotation {
    pub obj_index: Option<usize>,
    pub r: f64,
    pub theta: f64,
    pub u: Option<f64>,
    pub k: Option<f64>,
    pub orbit: Option<Orbit>,
    pub residual: Option<f64>,
    pub condition: Option<f64>,
    pub reality_defect: Option<f64>,
    pub reconstruction: Option<f64>,
    pub status: VertexStatus,
}

/// Annotation sidecar keyed by mesh vertex index.
pub fn annotations(mesh: &SurfaceMesh, obj_index: &[Option<usize>]) -> BTreeMap<usize, VertexAnnotation> {
    mesh.vertices
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let d = v.diagnostics;
            (
                i,
                VertexAnnotation {
                    obj_index: obj_index[i],
                    r: v.r,
                    theta: v.theta,
                    u: v.sample.map(|s| s.u),
                    k: v.sample.map(|s| s.k),
                    orbit: v.sample.map(|s| s.orbit),
                    residual: d.map(|d| d.residual),
                    condition: d.map(|d| d.condition),
                    reality_defect: d.map(|d| d.reality_defect),
                    reconstruction: d.map(|d| d.reconstruction),
                    status: v.status.clone(),
                },
            )
        })
        .collect()
}

/// `x,v,vp,y` with 17 significant digits.
pub fn write_trace_csv<W: Write>(nodes: &[TraceNode], mut w: W) -> io::Result<()> {
    writeln!(w, "x,v,vp,y")?;
    for n in nodes {
        writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", n.x, n.v, n.vp, n.v.exp())?;
    }
    w.flush()
}
