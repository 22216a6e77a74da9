//! Ablation trend and run-to-run determinism on the desk benchmark.

use std::fs;
use std::path::Path;

use inor_core::benchmark::{desk_dataset_spec, Variant};
use inor_core::metrics::MetricsRecord;
use inor_core::trainer::{run_incremental, Dataset};

pub const SEEDS: [u64; 3] = [0, 1, 2];
/// Adjacent rows of the ordering may tie within this accuracy gap.
pub const TIE: f64 = 0.01;
pub const NAIVE_MARGIN: f64 = 0.10;

pub fn desk_dataset() -> Dataset {
    let manifest = desk_dataset_spec()
        .to_manifest()
        .expect("valid benchmark spec");
    Dataset::load(&manifest, 256).expect("generated clouds")
}

#[derive(Debug, Clone)]
pub struct VariantScores {
    pub name: String,
    pub per_seed: Vec<f64>,
}

impl VariantScores {
    pub fn mean(&self) -> f64 {
        self.per_seed.iter().sum::<f64>() / self.per_seed.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct TrendReport {
    /// Ordered full, w/oSFC, w/oWFC, w/oCGA, w/oCGR, naive.
    pub rows: Vec<VariantScores>,
    /// metrics.json of the full model at the first seed.
    pub full_first_seed: Vec<u8>,
}

impl TrendReport {
    fn mean_of(&self, name: &str) -> f64 {
        self.rows
            .iter()
            .find(|r| r.name == name)
            .expect("known row")
            .mean()
    }

    /// Failed comparisons; empty when the criterion holds. The full model
    /// must reach every single ablation (the adjacent no-SFC row within
    /// TIE) and beat the naive baseline by NAIVE_MARGIN.
    pub fn violations(&self) -> Vec<String> {
        let full = self.mean_of("full");
        let mut out = Vec::new();
        for row in &self.rows[1..self.rows.len() - 1] {
            let slack = if row.name == "w/oSFC" { TIE } else { 0.0 };
            if full + slack < row.mean() {
                out.push(format!("full {full:.4} < {} {:.4}", row.name, row.mean()));
            }
        }
        let naive = self.mean_of("naive");
        if full - naive < NAIVE_MARGIN {
            out.push(format!(
                "full {full:.4} beats naive {naive:.4} by less than {NAIVE_MARGIN}"
            ));
        }
        out
    }

    /// Adjacent pairs of the ablation chain that are out of order by more
    /// than TIE; informational.
    pub fn chain_inversions(&self) -> Vec<String> {
        self.rows[..self.rows.len() - 1]
            .windows(2)
            .filter(|w| w[0].mean() + TIE < w[1].mean())
            .map(|w| {
                format!(
                    "{} {:.4} < {} {:.4}",
                    w[0].name,
                    w[0].mean(),
                    w[1].name,
                    w[1].mean()
                )
            })
            .collect()
    }
}

fn run_variant(
    variant: Variant,
    seed: u64,
    data: &Dataset,
    dir: &Path,
) -> (MetricsRecord, Option<MetricsRecord>) {
    let config = variant.config(seed);
    let id = format!("{}_{seed}", variant.name().replace('/', ""));
    let run_dir = dir.join(&id);
    fs::create_dir_all(&run_dir).expect("run directory");
    let out = run_incremental(&config, data, &id, Some(&run_dir)).expect("training run");
    out.metrics
        .save(run_dir.join("metrics.json"))
        .expect("metrics written");
    (out.metrics, out.metrics_without_sfc)
}

/// Trains every variant at every seed under `dir`.
pub fn trend_suite(data: &Dataset, dir: &Path) -> TrendReport {
    let mut rows: Vec<VariantScores> = Vec::new();
    let mut push = |name: &str, v: f64| match rows.iter_mut().find(|r| r.name == name) {
        Some(r) => r.per_seed.push(v),
        None => rows.push(VariantScores {
            name: name.to_string(),
            per_seed: vec![v],
        }),
    };
    for seed in SEEDS {
        for variant in Variant::TRAINED {
            let (metrics, plain) = run_variant(variant, seed, data, dir);
            push(variant.name(), metrics.avg_top1);
            if variant == Variant::Full {
                push(
                    "w/oSFC",
                    plain.expect("full model records a no-SFC pass").avg_top1,
                );
            }
        }
    }
    let order = ["full", "w/oSFC", "w/oWFC", "w/oCGA", "w/oCGR", "naive"];
    rows.sort_by_key(|r| order.iter().position(|n| *n == r.name).expect("known row"));
    let full_first_seed = fs::read(dir.join(format!("full_{}", SEEDS[0])).join("metrics.json"))
        .expect("metrics file");
    TrendReport {
        rows,
        full_first_seed,
    }
}

/// Trains the full model at `seed` into `dir` and returns its metrics file.
pub fn full_metrics_bytes(data: &Dataset, seed: u64, dir: &Path) -> Vec<u8> {
    run_variant(Variant::Full, seed, data, dir);
    fs::read(dir.join(format!("full_{seed}")).join("metrics.json")).expect("metrics file")
}
