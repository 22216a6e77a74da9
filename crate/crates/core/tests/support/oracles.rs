//! Brute-force references for sampling, neighbor search and herding.

use inor_core::data::{farthest_point_sampling, knn_query, Point};
use inor_core::trainer::select_exemplars;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist2(a: &Point, b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] as f64 - b[k]).powi(2)).sum()
}

fn as_f64(p: &Point) -> [f64; 3] {
    [p[0] as f64, p[1] as f64, p[2] as f64]
}

/// Max-min selection with the distance to the selected set recomputed from
/// scratch at every step.
pub fn fps_oracle(points: &[Point], count: usize, start: usize) -> Vec<usize> {
    let mut selected = vec![start];
    while selected.len() < count {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..points.len() {
            if selected.contains(&i) {
                continue;
            }
            let d = selected
                .iter()
                .map(|&s| dist2(&points[i], as_f64(&points[s])))
                .fold(f64::INFINITY, f64::min);
            match best {
                Some((b, _)) if d <= b => {}
                _ => best = Some((d, i)),
            }
        }
        selected.push(best.unwrap().1);
    }
    selected
}

/// Full sort by (distance, index).
pub fn knn_oracle(points: &[Point], center: [f64; 3], m: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (dist2(p, center), i))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(m).map(|(_, i)| i).collect()
}

/// Greedy herding that rebuilds the candidate mean from the selected list at
/// every evaluation.
pub fn herding_oracle(features: &[Vec<f64>], quota: usize) -> Vec<usize> {
    let d = features[0].len();
    let n = features.len();
    let mean: Vec<f64> = (0..d)
        .map(|j| features.iter().map(|f| f[j]).sum::<f64>() / n as f64)
        .collect();
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < quota {
        let mut best: Option<(f64, usize)> = None;
        for cand in 0..n {
            if chosen.contains(&cand) {
                continue;
            }
            let t = (chosen.len() + 1) as f64;
            let gap: f64 = (0..d)
                .map(|j| {
                    let s = chosen.iter().map(|&c| features[c][j]).sum::<f64>() + features[cand][j];
                    (mean[j] - s / t).powi(2)
                })
                .sum();
            match best {
                Some((b, _)) if gap >= b => {}
                _ => best = Some((gap, cand)),
            }
        }
        chosen.push(best.unwrap().1);
    }
    chosen
}

/// Points on a coarse grid half of the time so that ties and duplicates
/// occur.
fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
    let coarse = rng.gen_bool(0.5);
    (0..n)
        .map(|_| {
            [0; 3].map(|_: i32| {
                if coarse {
                    rng.gen_range(-2i32..=2) as f32 * 0.5
                } else {
                    rng.gen_range(-1.0f32..1.0)
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct OracleReport {
    pub instances: usize,
    pub mismatches: usize,
    pub first_mismatch: Option<String>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.instances > 0
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.instances += 1;
        if !ok {
            self.mismatches += 1;
            if self.first_mismatch.is_none() {
                self.first_mismatch = Some(what());
            }
        }
    }
}

pub fn fps_suite(instances: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::default();
    for _ in 0..instances {
        let n = rng.gen_range(1..=64);
        let pts = random_cloud(&mut rng, n);
        let count = rng.gen_range(1..=n);
        let start = rng.gen_range(0..n);
        let got = farthest_point_sampling(&pts, count, start).unwrap();
        let want = fps_oracle(&pts, count, start);
        report.record(got == want, || {
            format!("fps n={n} count={count} start={start}: {got:?} vs {want:?}")
        });
    }
    report
}

pub fn knn_suite(instances: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::default();
    for _ in 0..instances {
        let n = rng.gen_range(1..=64);
        let pts = random_cloud(&mut rng, n);
        let m = rng.gen_range(1..=n);
        let center = if rng.gen_bool(0.5) {
            as_f64(&pts[rng.gen_range(0..n)])
        } else {
            [0; 3].map(|_: i32| rng.gen_range(-1.0..1.0))
        };
        let got = knn_query(&pts, center, m).unwrap();
        let want = knn_oracle(&pts, center, m);
        report.record(got == want, || {
            format!("knn n={n} m={m}: {got:?} vs {want:?}")
        });
    }
    report
}

pub fn herding_suite(instances: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::default();
    for _ in 0..instances {
        let n = rng.gen_range(1..=64);
        let d = rng.gen_range(1..=6);
        let integer = rng.gen_bool(0.5);
        let features: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        if integer {
                            rng.gen_range(-2i32..=2) as f64
                        } else {
                            rng.gen_range(-1.0..1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let quota = rng.gen_range(1..=n);
        let got = select_exemplars(&features, quota).unwrap();
        let want = herding_oracle(&features, quota);
        report.record(got == want, || {
            format!("herding n={n} d={d} quota={quota}: {got:?} vs {want:?}")
        });
    }
    report
}
