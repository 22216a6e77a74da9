//! OFF triangle meshes and area-proportional surface sampling.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pointcloud::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OffMesh {
    pub vertices: Vec<[f64; 3]>,
    /// Triangles after fan triangulation of every polygon face.
    pub triangles: Vec<[usize; 3]>,
}

impl OffMesh {
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(|l| l.split_whitespace());
        let header = tokens
            .next()
            .ok_or_else(|| Error::Parse("empty OFF file".into()))?;
        if !header.starts_with("OFF") {
            return Err(Error::Parse(format!(
                "missing OFF header, found `{header}`"
            )));
        }
        // Some ModelNet files glue the first count onto the header ("OFF1234").
        let glued = &header[3..];
        let mut tokens: Box<dyn Iterator<Item = &str>> = if glued.is_empty() {
            Box::new(tokens)
        } else {
            Box::new(std::iter::once(glued).chain(tokens))
        };
        let mut next_num = |what: &str| -> Result<f64> {
            let t = tokens.next().ok_or_else(|| {
                Error::Parse(format!("unexpected end of OFF file reading {what}"))
            })?;
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad {what} `{t}`")))
        };
        let nv = next_num("vertex count")? as usize;
        let nf = next_num("face count")? as usize;
        let _edges = next_num("edge count")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            vertices.push([next_num("x")?, next_num("y")?, next_num("z")?]);
        }
        let mut triangles = Vec::with_capacity(nf);
        for _ in 0..nf {
            let k = next_num("face arity")? as usize;
            let idx = (0..k)
                .map(|_| next_num("face index").map(|v| v as usize))
                .collect::<Result<Vec<_>>>()?;
            if let Some(bad) = idx.iter().find(|&&i| i >= nv) {
                return Err(Error::Parse(format!(
                    "face references vertex {bad} of {nv}"
                )));
            }
            for j in 1..k.saturating_sub(1) {
                triangles.push([idx[0], idx[j], idx[j + 1]]);
            }
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let u = sub(b, a);
        let v = sub(c, a);
        let cr = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        0.5 * (cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2]).sqrt()
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Uniform point on a triangle from two unit draws.
pub(crate) fn triangle_point(a: [f64; 3], b: [f64; 3], c: [f64; 3], r1: f64, r2: f64) -> [f64; 3] {
    let s = r1.sqrt();
    let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
    [
        wa * a[0] + wb * b[0] + wc * c[0],
        wa * a[1] + wb * b[1] + wc * c[1],
        wa * a[2] + wb * b[2] + wc * c[2],
    ]
}

/// Samples `count` points over the mesh surface, choosing triangles in
/// proportion to their area.
pub fn sample_mesh_surface(mesh: &OffMesh, count: usize, seed: u64) -> Result<PointCloud> {
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            let t = cumulative
                .partition_point(|&c| c <= u)
                .min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangles[t].map(|i| mesh.vertices[i]);
            let p = triangle_point(a, b, c, rng.gen(), rng.gen());
            p.map(|v| v as f32)
        })
        .collect();
    Ok(PointCloud::new("mesh", None, points))
}
