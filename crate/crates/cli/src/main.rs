use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ndarray::{Array1, Array2};

use unrectify::builders::{
    build_attention_toy, build_fusion, build_fusion_stack, build_lenet_shape, build_resnet_block, build_series,
    LayerSpec,
};
use unrectify::experiments::{
    fmt_g, normal_samples, partition_csv, run_partition_experiment, run_stability_experiment, sample_pairs,
    PartitionConfig, StabilityConfig, PARTITION_HEADER,
};
use unrectify::forward::{eval, signature_arcs};
use unrectify::io::{load_graph, read_matrix_csv, save_graph};
use unrectify::lower::{lower_cpwl_to_relu, lower_maxpool_n};
use unrectify::partition::{census_with_table, PatternTable};
use unrectify::rng::Normal;
use unrectify::stability::{level_max_gains, level_sums, scale_to_stability, stability_certificate, NormKind};
use unrectify::{signature, Activation, CpwlSpec, DagNet};

#[derive(Parser)]
#[command(name = "unrectify", version, about = "Build and analyze piecewise-linear networks as DAGs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Series,
    Fusion,
    FusionStack,
    Resnet,
    Attention,
    Lenet,
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    Spectral,
    Frobenius,
}

impl From<Norm> for NormKind {
    fn from(n: Norm) -> Self {
        match n {
            Norm::Spectral => NormKind::Spectral,
            Norm::Frobenius => NormKind::Frobenius,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a network and write its graph file.
    Build {
        kind: Kind,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        layers: usize,
        #[arg(long, default_value_t = 14)]
        dim: usize,
        /// Softmax inverse temperature (attention).
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 4)]
        seq_len: usize,
        #[arg(short = 'o', long = "output", value_name = "PATH")]
        o: PathBuf,
    },
    /// Lower a CPWL activation or a max-pool block to a ReLU fragment.
    Lower {
        #[arg(long, conflicts_with = "maxpool", required_unless_present = "maxpool")]
        spec: Option<PathBuf>,
        #[arg(long)]
        maxpool: Option<usize>,
        #[arg(short = 'o', long = "output", value_name = "PATH")]
        o: PathBuf,
    },
    /// Evaluate a graph on the rows of an input CSV.
    Eval {
        graph: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Append the hashed region signature of the output node.
        #[arg(long)]
        signature: bool,
        #[arg(short = 'o', long = "output", value_name = "PATH")]
        o: PathBuf,
    },
    /// Partition census at graph nodes.
    Census {
        graph: PathBuf,
        /// Input CSV; standard-normal samples are drawn when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Nodes to census (default: every node without transforms upstream).
        #[arg(long)]
        node: Vec<String>,
        #[arg(short = 'o', long = "output", value_name = "PATH")]
        o: PathBuf,
    },
    /// Level sums, certificate, bound and measured gains of a graph.
    Stability {
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "spectral")]
        norm: Norm,
        /// Rescale weights first so every level sum is at most 1.
        #[arg(long)]
        scaled: bool,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output directory.
        #[arg(short = 'o', long = "output", value_name = "PATH")]
        o: PathBuf,
    },
    /// Fusion-stack studies.
    Experiment {
        #[command(subcommand)]
        which: Experiment,
    },
}

#[derive(Subcommand)]
enum Experiment {
    /// Region censuses at each layer's channels and fusion node.
    Partition {
        #[arg(long, default_value_t = 5)]
        layers: usize,
        #[arg(long, default_value_t = 14)]
        dim: usize,
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(short = 'o', long = "output", value_name = "PATH")]
        o: PathBuf,
    },
    /// Per-layer maximum gain, optionally after rescaling.
    Gain {
        #[arg(long, default_value_t = 5)]
        layers: usize,
        #[arg(long, default_value_t = 20)]
        dim: usize,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        scaled: bool,
        /// Output directory.
        #[arg(short = 'o', long = "output", value_name = "PATH")]
        o: PathBuf,
    },
}

fn build(kind: Kind, seed: u64, layers: usize, dim: usize, lambda: f64, seq_len: usize) -> Result<DagNet> {
    let net = match kind {
        Kind::Series => {
            let specs: Vec<LayerSpec> = (0..layers)
                .map(|k| {
                    let mut rng = Normal::substream(seed, &[k as u64]);
                    LayerSpec::relu(rng.matrix(dim, dim), rng.vector(dim))
                })
                .collect();
            build_series(dim, &specs)?
        }
        Kind::Fusion => {
            let channels = (0..2u64)
                .map(|c| {
                    let mut rng = Normal::substream(seed, &[1, c]);
                    build_series(dim, &[LayerSpec::relu(rng.matrix(dim, dim), rng.vector(dim))])
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut l = Array2::zeros((dim, 2 * dim));
            for i in 0..dim {
                l[[i, i]] = 1.0;
                l[[i, dim + i]] = 1.0;
            }
            build_fusion(&channels, &l)?
        }
        Kind::FusionStack => build_fusion_stack(layers, dim, seed)?,
        Kind::Resnet => {
            let mut rng = Normal::substream(seed, &[2]);
            let scale = 1.0 / (dim as f64).sqrt();
            let (w1, b1) = (rng.matrix(dim, dim) * scale, rng.vector(dim));
            let (w2, b2) = (rng.matrix(dim, dim) * scale, rng.vector(dim));
            build_resnet_block(&w1, &b1, &w2, &b2)?
        }
        Kind::Attention => {
            let mut rng = Normal::substream(seed, &[3]);
            let (wq, wk, wv) = (rng.matrix(dim, dim), rng.matrix(dim, dim), rng.matrix(dim, dim));
            build_attention_toy(&wq, &wk, &wv, lambda, seq_len)?
        }
        Kind::Lenet => build_lenet_shape(seed)?,
    };
    Ok(net)
}

fn read_spec(path: &Path) -> Result<CpwlSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(Activation::Cpwl(spec)) = serde_json::from_str::<Activation>(&text) {
        return Ok(spec);
    }
    serde_json::from_str::<CpwlSpec>(&text).with_context(|| format!("parsing CPWL spec {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run_eval(graph: &Path, input: &Path, with_sig: bool, out: &Path) -> Result<()> {
    let net = load_graph(graph)?;
    let xs = read_matrix_csv(input)?;
    if xs.ncols() != net.input_dim() {
        bail!("input has {} columns, graph expects {}", xs.ncols(), net.input_dim());
    }
    let mut header: Vec<String> = (0..net.output_dim()).map(|i| format!("y{i}")).collect();
    if with_sig {
        header.push("signature".into());
    }
    let mut s = header.join(",") + "\n";
    for row in xs.outer_iter() {
        let x: Array1<f64> = row.to_owned();
        let y = eval(&net, &x)?;
        let mut fields: Vec<String> = y.iter().map(|v| fmt_g(*v)).collect();
        if with_sig {
            fields.push(signature(&net, net.output(), &x)?.hex());
        }
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    write(out, &s)
}

fn run_census(
    graph: &Path,
    input: Option<&Path>,
    samples: usize,
    seed: u64,
    nodes: &[String],
    out: &Path,
) -> Result<()> {
    let net = load_graph(graph)?;
    let xs = match input {
        Some(p) => read_matrix_csv(p)?,
        None => normal_samples(samples, net.input_dim(), seed),
    };
    let targets: Vec<String> = if nodes.is_empty() {
        net.node_ids()
            .iter()
            .enumerate()
            .filter(|(i, _)| signature_arcs(&net, *i).is_ok())
            .map(|(_, id)| id.clone())
            .collect()
    } else {
        nodes.to_vec()
    };
    let table = PatternTable::compute(&net, &xs)?;
    let mut s = format!("{PARTITION_HEADER}\n");
    for id in &targets {
        let c = census_with_table(&net, &table, id, &xs)?;
        let level = net.level_of(id).expect("known node");
        s.push_str(&format!(
            "{level},{id},{},{},{}\n",
            c.region_count,
            c.multi_point_count,
            fmt_g(c.max_intra_dist)
        ));
    }
    write(out, &s)
}

fn run_stability(graph: &Path, norm: NormKind, scaled: bool, samples: usize, seed: u64, dir: &Path) -> Result<()> {
    let mut net = load_graph(graph)?;
    if scaled {
        net = scale_to_stability(&net, norm)?;
    }
    fs::create_dir_all(dir)?;
    let mut report = stability_certificate(&net, norm)?;
    let spectral = level_sums(&net, NormKind::Spectral)?;
    let frobenius = level_sums(&net, NormKind::Frobenius)?;
    let mut levels = String::from("level,sum_spectral,sum_frobenius\n");
    for (n, (s, f)) in spectral.iter().zip(&frobenius).enumerate() {
        levels.push_str(&format!("{},{},{}\n", n + 1, fmt_g(*s), fmt_g(*f)));
    }
    write(&dir.join("levels.csv"), &levels)?;

    let xs = normal_samples(samples, net.input_dim(), seed);
    let (pairs, _) = sample_pairs(samples, seed);
    let mut gain = String::from("layer,max_gain\n");
    if !pairs.is_empty() {
        let gains = level_max_gains(&net, &xs, &pairs)?;
        for (n, g) in gains.iter().enumerate().skip(1) {
            gain.push_str(&format!("{n},{}\n", fmt_g(*g)));
        }
        report.empirical_gain = gains.last().copied();
    }
    write(&dir.join("gain.csv"), &gain)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write(&dir.join("report.json"), &json)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("UNRECTIFY_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("UNRECTIFY_THREADS={v}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn main() -> Result<()> {
    configure_threads()?;
    match Cli::parse().cmd {
        Cmd::Build { kind, seed, layers, dim, lambda, seq_len, o } => {
            save_graph(&build(kind, seed, layers, dim, lambda, seq_len)?, &o)?;
        }
        Cmd::Lower { spec, maxpool, o } => {
            let net = match (spec, maxpool) {
                (Some(p), _) => lower_cpwl_to_relu(&read_spec(&p)?)?,
                (None, Some(k)) if k >= 2 => lower_maxpool_n(k)?,
                (None, Some(k)) => bail!("max-pool block size must be at least 2, got {k}"),
                (None, None) => bail!("one of --spec or --maxpool is required"),
            };
            save_graph(&net, &o)?;
        }
        Cmd::Eval { graph, input, signature, o } => run_eval(&graph, &input, signature, &o)?,
        Cmd::Census { graph, input, samples, seed, node, o } => {
            run_census(&graph, input.as_deref(), samples, seed, &node, &o)?
        }
        Cmd::Stability { graph, norm, scaled, samples, seed, o } => {
            run_stability(&graph, norm.into(), scaled, samples, seed, &o)?
        }
        Cmd::Experiment { which } => match which {
            Experiment::Partition { layers, dim, samples, seed, o } => {
                let rows = run_partition_experiment(&PartitionConfig { layers, dim, samples, seed })?;
                write(&o, &partition_csv(&rows))?;
            }
            Experiment::Gain { layers, dim, samples, seed, scaled, o } => {
                let out = run_stability_experiment(&StabilityConfig { layers, dim, samples, seed, scaled })?;
                fs::create_dir_all(&o)?;
                write(&o.join("gain.csv"), &out.gain_csv())?;
                write(&o.join("report.json"), &out.json())?;
            }
        },
    }
    Ok(())
}
