//! Partition and gain studies on fusion stacks, with CSV/JSON output.

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::builders::{build_fusion_stack, fusion_stack_nodes};
use crate::dag::{DagError, DagNet};
use crate::partition::{census_with_table, PartitionCensus, PartitionError, PatternTable};
use crate::rng::Normal;
use crate::stability::{
    node_max_gains, scale_to_stability, stability_certificate, NormKind, StabilityError, StabilityReport,
};

/// Above this sample count the gain study draws random pairs.
pub const ALL_PAIRS_LIMIT: usize = 2_000;
pub const SAMPLED_PAIRS: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] DagError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

/// `%.12g`-style formatting.
pub fn fmt_g(x: f64) -> String {
    const P: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-4..P).contains(&exp) {
        trim(&format!("{:.*}", (P - 1 - exp) as usize, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    }
}

/// `n x dim` i.i.d. standard-normal samples.
pub fn normal_samples(n: usize, dim: usize, seed: u64) -> Array2<f64> {
    Normal::substream(seed, &[u64::MAX, 0x5a]).matrix(n, dim)
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionConfig {
    pub layers: usize,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig { layers: 5, dim: 14, samples: 5_000, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionRow {
    pub layer: usize,
    pub channel: &'static str,
    pub census: PartitionCensus,
}

pub const PARTITION_HEADER: &str = "layer,channel,region_count,multi_point_count,max_intra_dist";

pub fn partition_csv(rows: &[PartitionRow]) -> String {
    let mut s = format!("{PARTITION_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.layer,
            r.channel,
            r.census.region_count,
            r.census.multi_point_count,
            fmt_g(r.census.max_intra_dist)
        ));
    }
    s
}

/// Censuses at the top, bottom and fusion node of every fusion layer.
pub fn run_partition_experiment(cfg: &PartitionConfig) -> Result<Vec<PartitionRow>, ExperimentError> {
    if cfg.layers == 0 || cfg.dim == 0 || cfg.samples == 0 {
        return Err(ExperimentError::Config("layers, dim and samples must be positive".into()));
    }
    let net = build_fusion_stack(cfg.layers, cfg.dim, cfg.seed)?;
    let samples = normal_samples(cfg.samples, cfg.dim, cfg.seed);
    partition_rows(&net, cfg.layers, &samples)
}

pub fn partition_rows(
    net: &DagNet,
    layers: usize,
    samples: &Array2<f64>,
) -> Result<Vec<PartitionRow>, ExperimentError> {
    let table = PatternTable::compute(net, samples).map_err(PartitionError::from)?;
    let mut rows = Vec::new();
    for k in 1..=layers {
        let [_, top, bottom, fuse] = fusion_stack_nodes(k);
        for (channel, node) in [("top", &top), ("bottom", &bottom), ("fusion", &fuse)] {
            let census = census_with_table(net, &table, node, samples)?;
            rows.push(PartitionRow { layer: k, channel, census });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityConfig {
    pub layers: usize,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub scaled: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig { layers: 5, dim: 20, samples: 500, seed: 7, scaled: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityOutcome {
    pub config: StabilityConfig,
    pub report: StabilityReport,
    /// Maximum gain at the output of each fusion layer.
    pub gains: Vec<f64>,
    pub pairs: usize,
    pub pairs_subsampled: bool,
}

impl StabilityOutcome {
    pub fn gain_csv(&self) -> String {
        let mut s = String::from("layer,max_gain\n");
        for (k, g) in self.gains.iter().enumerate() {
            s.push_str(&format!("{},{}\n", k + 1, fmt_g(*g)));
        }
        s
    }

    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}

/// All unordered pairs for small `n`, otherwise `SAMPLED_PAIRS` seeded
/// random pairs of distinct indices.
pub fn sample_pairs(n: usize, seed: u64) -> (Vec<(usize, usize)>, bool) {
    if n <= ALL_PAIRS_LIMIT {
        let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        return (pairs, false);
    }
    let mut rng = Normal::substream(seed, &[u64::MAX, 0x9a]);
    let pairs = (0..SAMPLED_PAIRS)
        .map(|_| {
            let i = rng.below(n as u64) as usize;
            let mut j = rng.below(n as u64 - 1) as usize;
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect();
    (pairs, true)
}

pub fn run_stability_experiment(cfg: &StabilityConfig) -> Result<StabilityOutcome, ExperimentError> {
    if cfg.layers == 0 || cfg.dim == 0 {
        return Err(ExperimentError::Config("layers and dim must be positive".into()));
    }
    let mut net = build_fusion_stack(cfg.layers, cfg.dim, cfg.seed)?;
    if cfg.scaled {
        net = scale_to_stability(&net, NormKind::Frobenius)?;
    }
    let norm = if cfg.scaled { NormKind::Frobenius } else { NormKind::Spectral };
    let mut report = stability_certificate(&net, norm)?;
    let samples = normal_samples(cfg.samples, cfg.dim, cfg.seed);
    let (pairs, pairs_subsampled) = sample_pairs(cfg.samples, cfg.seed);
    let gains = if pairs.is_empty() {
        Vec::new()
    } else {
        let nodes: Vec<String> = (1..=cfg.layers).map(|k| fusion_stack_nodes(k)[3].clone()).collect();
        let refs: Vec<&str> = nodes.iter().map(String::as_str).collect();
        node_max_gains(&net, &refs, &samples, &pairs)?
    };
    report.empirical_gain = gains.last().copied();
    Ok(StabilityOutcome { config: cfg.clone(), report, gains, pairs: pairs.len(), pairs_subsampled })
}
