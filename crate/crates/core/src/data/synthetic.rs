//! Procedural shape classes used as a desk-scale stand-in for CAD benchmarks.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, Recipe, SampleEntry, Split};
use super::pcld::write_pointcloud_file;
use super::pointcloud::{normalize_unit_sphere, Point, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Sphere,
    Cube,
    Cylinder,
    Cone,
    Torus,
    /// Plane with four legs.
    Table,
    /// Seat plane plus back plane.
    Chair,
    Capsule,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 8] = [
        ShapeKind::Sphere,
        ShapeKind::Cube,
        ShapeKind::Cylinder,
        ShapeKind::Cone,
        ShapeKind::Torus,
        ShapeKind::Table,
        ShapeKind::Chair,
        ShapeKind::Capsule,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cube => "cube",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Cone => "cone",
            ShapeKind::Torus => "torus",
            ShapeKind::Table => "table",
            ShapeKind::Chair => "chair",
            ShapeKind::Capsule => "capsule",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "sphere" => ShapeKind::Sphere,
            "cube" => ShapeKind::Cube,
            "cylinder" => ShapeKind::Cylinder,
            "cone" => ShapeKind::Cone,
            "torus" => ShapeKind::Torus,
            "table" | "plane-with-legs" => ShapeKind::Table,
            "chair" | "two-plane" => ShapeKind::Chair,
            "capsule" => ShapeKind::Capsule,
            _ => return Err(Error::UnknownShape(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Primitive {
    Box { center: [f64; 3], half: [f64; 3] },
    Lateral { r: f64, z0: f64, z1: f64 },
    Disk { z: f64, r: f64 },
    Cone { z0: f64, h: f64, r: f64 },
    Hemisphere { z: f64, r: f64, up: bool },
    Torus { major: f64, minor: f64 },
}

impl Primitive {
    fn area(&self) -> f64 {
        match *self {
            Primitive::Box {
                half: [a, b, c], ..
            } => 8.0 * (a * b + b * c + a * c),
            Primitive::Lateral { r, z0, z1 } => TAU * r * (z1 - z0),
            Primitive::Disk { r, .. } => PI * r * r,
            Primitive::Cone { h, r, .. } => PI * r * (r * r + h * h).sqrt(),
            Primitive::Hemisphere { r, .. } => TAU * r * r,
            Primitive::Torus { major, minor } => 4.0 * PI * PI * major * minor,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 3] {
        match *self {
            Primitive::Box { center, half } => {
                let [a, b, c] = half;
                // face pairs normal to x, y, z with areas 4bc, 4ac, 4ab
                let areas = [b * c, a * c, a * b];
                let total: f64 = areas.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                let mut axis = 2;
                for (k, w) in areas.iter().enumerate() {
                    if u < *w {
                        axis = k;
                        break;
                    }
                    u -= w;
                }
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let mut p = [0.0; 3];
                for k in 0..3 {
                    p[k] = if k == axis {
                        sign * half[k]
                    } else {
                        rng.gen_range(-half[k]..half[k])
                    };
                    p[k] += center[k];
                }
                p
            }
            Primitive::Lateral { r, z0, z1 } => {
                let t = rng.gen_range(0.0..TAU);
                [r * t.cos(), r * t.sin(), rng.gen_range(z0..z1)]
            }
            Primitive::Disk { z, r } => {
                let t = rng.gen_range(0.0..TAU);
                let rho = r * rng.gen::<f64>().sqrt();
                [rho * t.cos(), rho * t.sin(), z]
            }
            Primitive::Cone { z0, h, r } => {
                // distance from apex has density proportional to itself
                let s = rng.gen::<f64>().sqrt();
                let t = rng.gen_range(0.0..TAU);
                [r * s * t.cos(), r * s * t.sin(), z0 + h * (1.0 - s)]
            }
            Primitive::Hemisphere { z, r, up } => {
                let d = unit_vector(rng);
                let dz = if up { d[2].abs() } else { -d[2].abs() };
                [r * d[0], r * d[1], z + r * dz]
            }
            Primitive::Torus { major, minor } => loop {
                let phi = rng.gen_range(0.0..TAU);
                let accept = (major + minor * phi.cos()) / (major + minor);
                if rng.gen::<f64>() <= accept {
                    let theta = rng.gen_range(0.0..TAU);
                    let rho = major + minor * phi.cos();
                    break [rho * theta.cos(), rho * theta.sin(), minor * phi.sin()];
                }
            },
        }
    }
}

fn unit_vector<R: Rng>(rng: &mut R) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let t = rng.gen_range(0.0..TAU);
    let rho = (1.0 - z * z).max(0.0).sqrt();
    [rho * t.cos(), rho * t.sin(), z]
}

fn primitives_for<R: Rng>(kind: ShapeKind, rng: &mut R) -> Vec<Primitive> {
    match kind {
        ShapeKind::Sphere => unreachable!("sphere sampled antipodally"),
        ShapeKind::Cube => vec![Primitive::Box {
            center: [0.0; 3],
            half: [
                rng.gen_range(0.6..1.0),
                rng.gen_range(0.6..1.0),
                rng.gen_range(0.6..1.0),
            ],
        }],
        ShapeKind::Cylinder => {
            let r = rng.gen_range(0.4..0.7);
            let h = rng.gen_range(1.2..2.0);
            vec![
                Primitive::Lateral {
                    r,
                    z0: -h / 2.0,
                    z1: h / 2.0,
                },
                Primitive::Disk { z: -h / 2.0, r },
                Primitive::Disk { z: h / 2.0, r },
            ]
        }
        ShapeKind::Cone => {
            let r = rng.gen_range(0.5..0.9);
            let h = rng.gen_range(1.0..1.8);
            vec![
                Primitive::Cone { z0: -h / 2.0, h, r },
                Primitive::Disk { z: -h / 2.0, r },
            ]
        }
        ShapeKind::Torus => vec![Primitive::Torus {
            major: rng.gen_range(0.7..0.9),
            minor: rng.gen_range(0.18..0.3),
        }],
        ShapeKind::Table => {
            let (w, d) = (rng.gen_range(0.8..1.0), rng.gen_range(0.5..0.8));
            let leg_h = rng.gen_range(0.3..0.45);
            let top_z = 2.0 * leg_h;
            let mut prims = vec![Primitive::Box {
                center: [0.0, 0.0, top_z],
                half: [w, d, 0.04],
            }];
            for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                prims.push(Primitive::Box {
                    center: [sx * (w - 0.1), sy * (d - 0.1), leg_h],
                    half: [0.05, 0.05, leg_h],
                });
            }
            prims
        }
        ShapeKind::Chair => {
            let half = rng.gen_range(0.45..0.6);
            let back_h = rng.gen_range(0.5..0.75);
            vec![
                Primitive::Box {
                    center: [0.0, 0.0, 0.0],
                    half: [half, half, 0.04],
                },
                Primitive::Box {
                    center: [0.0, -half, back_h],
                    half: [half, 0.04, back_h],
                },
            ]
        }
        ShapeKind::Capsule => {
            let r = rng.gen_range(0.35..0.5);
            let h = rng.gen_range(0.8..1.4);
            vec![
                Primitive::Lateral {
                    r,
                    z0: -h / 2.0,
                    z1: h / 2.0,
                },
                Primitive::Hemisphere {
                    z: h / 2.0,
                    r,
                    up: true,
                },
                Primitive::Hemisphere {
                    z: -h / 2.0,
                    r,
                    up: false,
                },
            ]
        }
    }
}

fn sample_sphere<R: Rng>(count: usize, rng: &mut R) -> Vec<[f64; 3]> {
    // antipodal pairs keep the sample centroid at the origin
    let mut pts = Vec::with_capacity(count);
    let triple = count % 2 == 1 && count >= 3;
    let pairs = if triple { (count - 3) / 2 } else { count / 2 };
    for _ in 0..pairs {
        let d = unit_vector(rng);
        pts.push(d);
        pts.push(d.map(|v| -v));
    }
    if triple {
        let a = unit_vector(rng);
        let helper = if a[0].abs() < 0.9 {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 1.0, 0.0]
        };
        let b = normalize(cross(a, helper));
        let c = cross(a, b);
        for k in 0..3 {
            let t = TAU * k as f64 / 3.0;
            pts.push([0, 1, 2].map(|i| t.cos() * b[i] + t.sin() * c[i]));
        }
    } else if count % 2 == 1 {
        pts.push(unit_vector(rng));
    }
    pts
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    a.map(|v| v / n)
}

/// One normalized sample of `kind` with `count` points.
pub fn generate_shape(kind: ShapeKind, count: usize, noise_sigma: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<[f64; 3]> = if kind == ShapeKind::Sphere {
        sample_sphere(count, &mut rng)
    } else {
        let prims = primitives_for(kind, &mut rng);
        let areas: Vec<f64> = prims.iter().map(Primitive::area).collect();
        let total: f64 = areas.iter().sum();
        (0..count)
            .map(|_| {
                let mut u = rng.gen::<f64>() * total;
                let mut chosen = prims.len() - 1;
                for (k, a) in areas.iter().enumerate() {
                    if u < *a {
                        chosen = k;
                        break;
                    }
                    u -= a;
                }
                prims[chosen].sample(&mut rng)
            })
            .collect()
    };
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("finite sigma");
        for p in &mut pts {
            for c in p.iter_mut() {
                *c += normal.sample(&mut rng);
            }
        }
    }
    let points: Vec<Point> = pts.into_iter().map(|p| p.map(|v| v as f32)).collect();
    normalize_unit_sphere(&PointCloud::new(kind.name(), None, points))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClass {
    pub shape: ShapeKind,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: Vec<SyntheticClass>,
    pub points: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// `kinds` given by name; unknown names are rejected.
    pub fn from_names(
        kinds: &[&str],
        train: usize,
        test: usize,
        points: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        let classes = kinds
            .iter()
            .map(|k| {
                Ok(SyntheticClass {
                    shape: k.parse()?,
                    train,
                    test,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            classes,
            points,
            noise_sigma,
            seed,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Validation("need at least two shape kinds".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.classes {
            if !seen.insert(c.shape) {
                return Err(Error::Validation(format!(
                    "shape kind {} listed twice",
                    c.shape
                )));
            }
            if c.train == 0 || c.test == 0 {
                return Err(Error::Validation(format!(
                    "shape kind {} needs ≥1 sample per split",
                    c.shape
                )));
            }
        }
        if self.points == 0 {
            return Err(Error::Validation("point count must be positive".into()));
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(SampleEntry, Recipe)> {
        let mut out = Vec::new();
        for (class, c) in self.classes.iter().enumerate() {
            for (split, n) in [(Split::Train, c.train), (Split::Test, c.test)] {
                for i in 0..n {
                    let recipe = Recipe {
                        shape: c.shape,
                        points: self.points,
                        noise_sigma: self.noise_sigma,
                        seed: mix_seed(&[self.seed, class as u64, split as u64, i as u64]),
                    };
                    let entry = SampleEntry {
                        id: format!("{}_{}_{:04}", c.shape, split, i),
                        class,
                        split,
                        file: None,
                        recipe: None,
                    };
                    out.push((entry, recipe));
                }
            }
        }
        out
    }

    /// Manifest whose samples are generator recipes; nothing touches disk.
    pub fn to_manifest(&self) -> Result<DatasetManifest> {
        self.validate()?;
        let samples = self
            .entries()
            .into_iter()
            .map(|(mut e, r)| {
                e.recipe = Some(r);
                e
            })
            .collect();
        Ok(DatasetManifest {
            classes: self.classes.iter().map(|c| c.shape.to_string()).collect(),
            samples,
            root: Default::default(),
        })
    }
}

/// Writes every sample as a PCLD file under `out_dir/<split>/` plus
/// `out_dir/manifest.json`, and returns the manifest.
pub fn generate_synthetic_dataset(
    spec: &SyntheticSpec,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let mut samples = Vec::new();
    for (mut entry, recipe) in spec.entries() {
        let rel = format!("{}/{}.pcld", entry.split, entry.id);
        let pc = recipe.generate();
        write_pointcloud_file(out_dir.join(&rel), &pc.points)?;
        entry.file = Some(rel);
        samples.push(entry);
    }
    let manifest = DatasetManifest {
        classes: spec.classes.iter().map(|c| c.shape.to_string()).collect(),
        samples,
        root: out_dir.to_path_buf(),
    };
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// SplitMix64-style combination of seed components.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(h << 6)
            .wrapping_add(h >> 2);
        h = splitmix(h);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
