use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Single-precision point, the storage format of every cloud.
pub type Point = [f32; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub id: String,
    /// Dataset class index, `None` for unlabeled clouds read straight from disk.
    pub label: Option<usize>,
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(id: impl Into<String>, label: Option<usize>, points: Vec<Point>) -> Self {
        Self {
            id: id.into(),
            label,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().flatten().all(|c| c.is_finite())
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.points.len().max(1) as f64;
        let mut c = [0.0f64; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k] as f64;
            }
        }
        c.map(|v| v / n)
    }

    pub fn max_radius(&self) -> f64 {
        self.points
            .iter()
            .map(|p| norm3(p.map(|v| v as f64)))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn norm3(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Centers the cloud at the origin and scales its farthest point to radius 1.
/// A cloud whose points all coincide collapses to the origin.
pub fn normalize_unit_sphere(pc: &PointCloud) -> PointCloud {
    let c = pc.centroid();
    let centered: Vec<[f64; 3]> = pc
        .points
        .iter()
        .map(|p| [p[0] as f64 - c[0], p[1] as f64 - c[1], p[2] as f64 - c[2]])
        .collect();
    let radius = centered.iter().map(|p| norm3(*p)).fold(0.0, f64::max);
    let scale = if radius > 0.0 { 1.0 / radius } else { 0.0 };
    let points = centered
        .into_iter()
        .map(|p| p.map(|v| (v * scale) as f32))
        .collect();
    PointCloud {
        id: pc.id.clone(),
        label: pc.label,
        points,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub rotate_z: bool,
    pub jitter_sigma: f64,
    pub jitter_clip: f64,
}

impl Default for Augmentation {
    fn default() -> Self {
        Self {
            rotate_z: true,
            jitter_sigma: 0.01,
            jitter_clip: 0.05,
        }
    }
}

impl Augmentation {
    pub const NONE: Augmentation = Augmentation {
        rotate_z: false,
        jitter_sigma: 0.0,
        jitter_clip: 0.0,
    };
}

pub fn rotate_about_z(pc: &PointCloud, angle: f64) -> PointCloud {
    let (s, c) = angle.sin_cos();
    let points = pc
        .points
        .iter()
        .map(|p| {
            let (x, y) = (p[0] as f64, p[1] as f64);
            [(c * x - s * y) as f32, (s * x + c * y) as f32, p[2]]
        })
        .collect();
    PointCloud {
        id: pc.id.clone(),
        label: pc.label,
        points,
    }
}

/// Random rotation about the up (z) axis followed by clipped Gaussian jitter.
pub fn augment(pc: &PointCloud, seed: u64, aug: &Augmentation) -> PointCloud {
    assert!(aug.jitter_clip >= 0.0, "jitter_clip must be non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = if aug.rotate_z {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        rotate_about_z(pc, angle)
    } else {
        pc.clone()
    };
    if aug.jitter_sigma > 0.0 {
        let normal = Normal::new(0.0, aug.jitter_sigma).expect("finite sigma");
        for p in &mut out.points {
            for c in p.iter_mut() {
                let d = normal
                    .sample(&mut rng)
                    .clamp(-aug.jitter_clip, aug.jitter_clip);
                *c = (*c as f64 + d) as f32;
            }
        }
    }
    out
}

/// Draws exactly `count` points with replacement when the cloud has a
/// different size; same-size clouds are returned unchanged.
pub fn resample(pc: &PointCloud, count: usize, seed: u64) -> PointCloud {
    if pc.points.len() == count || pc.points.is_empty() {
        return pc.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pc.points.len();
    let points = (0..count).map(|_| pc.points[rng.gen_range(0..n)]).collect();
    PointCloud {
        id: pc.id.clone(),
        label: pc.label,
        points,
    }
}
