//! Constructors for common network shapes.

use ndarray::{s, Array1, Array2};

use crate::dag::{Combine, DagBuilder, DagError, DagNet};
use crate::ops::{Activation, ArcOp, CpwlSpec, Transform};
use crate::rng::Normal;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub act: Activation,
}

impl LayerSpec {
    pub fn relu(weight: Array2<f64>, bias: Array1<f64>) -> Self {
        LayerSpec { weight, bias, act: Activation::Relu }
    }
}

/// Chain `x -> h1 -> ... -> hL` of activation-after-affine arcs.
pub fn build_series(dim: usize, layers: &[LayerSpec]) -> Result<DagNet, DagError> {
    let mut b = DagBuilder::new("x", dim);
    let mut prev = "x".to_string();
    for (k, l) in layers.iter().enumerate() {
        let next = format!("h{}", k + 1);
        let op = ArcOp::ActivationAffine { act: l.act.clone(), weight: l.weight.clone(), bias: l.bias.clone() };
        b.add_arc(&prev, &next, op)?;
        prev = next;
    }
    b.freeze()
}

/// Copies the input to every channel and fuses the channel outputs with
/// `l`: the output is `l [c_1(x); ...; c_m(x)]`, realised as one column
/// block of `l` per channel feeding a summing node.
pub fn build_fusion(channels: &[DagNet], l: &Array2<f64>) -> Result<DagNet, DagError> {
    let dim = channels.first().map_or(0, |c| c.input_dim());
    let total: usize = channels.iter().map(|c| c.output_dim()).sum();
    if l.ncols() != total {
        return Err(DagError::DimMismatch { at: "fusion matrix".into(), expected: total, found: l.ncols() });
    }
    let mut b = DagBuilder::new("x", dim);
    b.add_arc("x", "dup", ArcOp::Identity)?;
    b.add_node("fuse", Combine::Sum)?;
    let mut col = 0;
    for (i, c) in channels.iter().enumerate() {
        if c.input_dim() != dim {
            return Err(DagError::DimMismatch { at: format!("channel {i}"), expected: dim, found: c.input_dim() });
        }
        let out = b.embed(c, "dup", &format!("c{i}."))?;
        let block = l.slice(s![.., col..col + c.output_dim()]).to_owned();
        b.add_arc(&out, "fuse", ArcOp::linear(block))?;
        col += c.output_dim();
    }
    b.freeze()
}

/// Node names of fusion layer `k` (1-based) in a fusion stack.
pub fn fusion_stack_nodes(k: usize) -> [String; 4] {
    ["dup", "top", "bottom", "fuse"].map(|n| format!("f{k:02}.{n}"))
}

/// Stack of fusion layers. Layer `k` copies its input to a top and a bottom
/// ReLU channel with standard-normal `dim x dim` weights and `dim` biases and
/// sums the two channel outputs.
pub fn build_fusion_stack(layers: usize, dim: usize, seed: u64) -> Result<DagNet, DagError> {
    let mut b = DagBuilder::new("x", dim);
    let mut prev = "x".to_string();
    for k in 1..=layers {
        let [dup, top, bottom, fuse] = fusion_stack_nodes(k);
        b.add_arc(&prev, &dup, ArcOp::Identity)?;
        b.add_node(&fuse, Combine::Sum)?;
        for (ch, node) in [(0u64, &top), (1, &bottom)] {
            let mut rng = Normal::substream(seed, &[k as u64, ch]);
            let w = rng.matrix(dim, dim);
            let bias = rng.vector(dim);
            b.add_arc(&dup, node, ArcOp::relu_affine(w, bias))?;
            b.add_arc(node, &fuse, ArcOp::linear(Array2::eye(dim)))?;
        }
        prev = fuse;
    }
    b.freeze()
}

/// Residual block `y = relu(x - (W2 relu(W1 x + b1) + b2))`.
pub fn build_resnet_block(
    w1: &Array2<f64>,
    b1: &Array1<f64>,
    w2: &Array2<f64>,
    b2: &Array1<f64>,
) -> Result<DagNet, DagError> {
    let dim = w1.ncols();
    let mut b = DagBuilder::new("x", dim);
    b.add_arc("x", "h", ArcOp::relu_affine(w1.clone(), b1.clone()))?;
    b.add_node("s", Combine::Sum)?;
    b.add_arc("x", "s", ArcOp::Identity)?;
    b.add_arc("h", "s", ArcOp::affine(-w2, -b2))?;
    b.add_arc("s", "y", ArcOp::Activation(Activation::Relu))?;
    b.freeze()
}

fn block_diag(block: &Array2<f64>, copies: usize) -> Array2<f64> {
    let (r, c) = block.dim();
    let mut out = Array2::zeros((r * copies, c * copies));
    for t in 0..copies {
        out.slice_mut(s![t * r..(t + 1) * r, t * c..(t + 1) * c]).assign(block);
    }
    out
}

/// Single-head self-attention on `seq_len` stacked tokens.
///
/// Queries, keys and values are per-token linear maps. Scores are inner
/// products of normalized query/key pairs, each score row goes through a
/// softmax with inverse temperature `lambda`, and output token `i` is the
/// probability-weighted sum of the value vectors.
pub fn build_attention_toy(
    wq: &Array2<f64>,
    wk: &Array2<f64>,
    wv: &Array2<f64>,
    lambda: f64,
    seq_len: usize,
) -> Result<DagNet, DagError> {
    if wq.dim() != wk.dim() {
        return Err(DagError::DimMismatch { at: "key matrix".into(), expected: wq.nrows(), found: wk.nrows() });
    }
    let t = seq_len;
    let mut b = DagBuilder::new("x", t * wq.ncols());
    b.add_arc("x", "q", ArcOp::linear(block_diag(wq, t)))?;
    b.add_arc("x", "k", ArcOp::linear(block_diag(wk, t)))?;
    b.add_arc("x", "v", ArcOp::linear(block_diag(wv, t)))?;
    b.add_arc("q", "qk", ArcOp::Identity)?;
    b.add_arc("k", "qk", ArcOp::Identity)?;
    b.add_arc("qk", "s", ArcOp::Transform(Transform::CosineScores { seq_len: t, dim: wq.nrows() }))?;
    for i in 0..t {
        let mut sel = Array2::zeros((t, t * t));
        for j in 0..t {
            sel[[j, i * t + j]] = 1.0;
        }
        let op = ArcOp::TransformAffine { sigma: Transform::Softmax { lambda }, weight: sel, bias: Array1::zeros(t) };
        let p = format!("p{i}");
        b.add_arc("s", &p, op)?;
        b.add_arc(&p, "pv", ArcOp::Identity)?;
    }
    b.add_arc("v", "pv", ArcOp::Identity)?;
    b.add_arc("pv", "y", ArcOp::Transform(Transform::Mix { seq_len: t, dim: wv.nrows() }))?;
    b.freeze()
}

/// Row of a pooled convolution output: windows in row-major order, the four
/// positions of a 2x2 window consecutive so that two MaxLU2 passes pool it.
fn pooled_row(r: usize, c: usize, width: usize) -> usize {
    let window = (r / 2) * (width / 2) + c / 2;
    4 * window + 2 * (r % 2) + c % 2
}

/// Dense matrix of a stride-1 convolution producing one output channel.
fn conv_matrix(
    rng: &mut Normal,
    in_ch: usize,
    in_size: usize,
    k: usize,
    pad: usize,
) -> (Array2<f64>, Array1<f64>) {
    let out_size = in_size + 2 * pad - k + 1;
    let scale = 1.0 / ((in_ch * k * k) as f64).sqrt();
    let kernel = rng.matrix(in_ch, k * k) * scale;
    let bias = rng.sample() * scale;
    let mut w = Array2::zeros((out_size * out_size, in_ch * in_size * in_size));
    for r in 0..out_size {
        for c in 0..out_size {
            let row = pooled_row(r, c, out_size);
            for ch in 0..in_ch {
                for dr in 0..k {
                    for dc in 0..k {
                        let (ir, ic) = ((r + dr) as isize - pad as isize, (c + dc) as isize - pad as isize);
                        if ir < 0 || ic < 0 || ir >= in_size as isize || ic >= in_size as isize {
                            continue;
                        }
                        let col = ch * in_size * in_size + ir as usize * in_size + ic as usize;
                        w[[row, col]] = kernel[[ch, dr * k + dc]];
                    }
                }
            }
        }
    }
    (w, Array1::from_elem(out_size * out_size, bias))
}

/// LeNet-5 topology with random weights: two convolution stages of parallel
/// channels with MaxLU pooling and concatenation, then a 400-120-84-10
/// fully connected tail.
pub fn build_lenet_shape(seed: u64) -> Result<DagNet, DagError> {
    let mut b = DagBuilder::new("x", 28 * 28);
    for ch in 0..6 {
        let mut rng = Normal::substream(seed, &[1, ch]);
        let (w, bias) = conv_matrix(&mut rng, 1, 28, 5, 2);
        let conv = format!("c1.{ch}");
        b.add_arc("x", &conv, ArcOp::ActivationAffine { act: Activation::Maxlu2, weight: w, bias })?;
        b.add_arc(&conv, "pool1", ArcOp::Activation(Activation::Maxlu2))?;
    }
    for ch in 0..16 {
        let mut rng = Normal::substream(seed, &[2, ch]);
        let (w, bias) = conv_matrix(&mut rng, 6, 14, 5, 0);
        let conv = format!("c2.{ch:02}");
        b.add_arc("pool1", &conv, ArcOp::ActivationAffine { act: Activation::Maxlu2, weight: w, bias })?;
        b.add_arc(&conv, "pool2", ArcOp::Activation(Activation::Maxlu2))?;
    }
    let dense = |k: u64, rows: usize, cols: usize| {
        let mut rng = Normal::substream(seed, &[3, k]);
        let scale = 1.0 / (cols as f64).sqrt();
        (rng.matrix(rows, cols) * scale, rng.vector(rows) * scale)
    };
    let (w, bias) = dense(0, 120, 400);
    b.add_arc("pool2", "fc1", ArcOp::relu_affine(w, bias))?;
    let (w, bias) = dense(1, 84, 120);
    b.add_arc("fc1", "fc2", ArcOp::relu_affine(w, bias))?;
    let (w, bias) = dense(2, 10, 84);
    b.add_arc("fc2", "y", ArcOp::affine(w, bias))?;
    b.freeze()
}

fn random_cpwl(rng: &mut Normal) -> CpwlSpec {
    let nr = 1 + rng.below(3) as usize;
    let nl = rng.below(2) as usize;
    let right = (0..nr).map(|_| (rng.sample(), 0.5 * rng.sample())).collect();
    let left = (0..nl).map(|_| (rng.sample(), 0.5 * rng.sample())).collect();
    CpwlSpec::new(right, left).expect("small finite spec")
}

fn random_op(rng: &mut Normal, in_dim: usize, out_dim: usize, scale: f64) -> ArcOp {
    let w = |rng: &mut Normal, rows: usize| rng.matrix(rows, in_dim) * (scale / (in_dim as f64).sqrt());
    match rng.below(6) {
        0 | 1 => {
            let weight = w(rng, out_dim);
            ArcOp::relu_affine(weight, rng.vector(out_dim) * 0.5)
        }
        2 => {
            let weight = w(rng, 2 * out_dim);
            ArcOp::ActivationAffine { act: Activation::Maxlu2, weight, bias: rng.vector(2 * out_dim) * 0.5 }
        }
        3 => {
            let weight = w(rng, out_dim);
            let act = Activation::Cpwl(random_cpwl(rng));
            ArcOp::ActivationAffine { act, weight, bias: rng.vector(out_dim) * 0.5 }
        }
        4 => {
            let weight = w(rng, out_dim);
            ArcOp::affine(weight, rng.vector(out_dim) * 0.5)
        }
        _ => ArcOp::linear(w(rng, out_dim)),
    }
}

/// Random valid net of at most `max_nodes` nodes, grown by series arcs,
/// parallel branches, summing fusions and concatenations. `scale` multiplies
/// every weight (roughly the per-arc gain).
pub fn random_dag(seed: u64, max_nodes: usize, scale: f64) -> DagNet {
    assert!(max_nodes >= 2);
    let mut rng = Normal::substream(seed, &[0xda9]);
    let dim = 2 + rng.below(2) as usize;
    let mut b = DagBuilder::new("n00", dim);
    let mut names = vec!["n00".to_string()];
    let mut sinks = vec!["n00".to_string()];
    let fresh = |names: &mut Vec<String>| {
        let id = format!("n{:02}", names.len());
        names.push(id.clone());
        id
    };
    // Reserve one node for the final fusion.
    while names.len() < max_nodes - 1 {
        let choice = rng.below(4);
        let v = fresh(&mut names);
        let out_dim = 1 + rng.below(3) as usize;
        match choice {
            // Series: extend a sink.
            0 => {
                let k = rng.below(sinks.len() as u64) as usize;
                let u = sinks.remove(k);
                let op = random_op(&mut rng, b.dim(&u).unwrap(), out_dim, scale);
                b.add_arc(&u, &v, op).unwrap();
            }
            // Parallel: branch from any node.
            1 => {
                let u = names[rng.below(names.len() as u64 - 1) as usize].clone();
                let op = random_op(&mut rng, b.dim(&u).unwrap(), out_dim, scale);
                b.add_arc(&u, &v, op).unwrap();
            }
            // Fusion by summation, or concatenation, of two sinks.
            _ if sinks.len() >= 2 => {
                let i = rng.below(sinks.len() as u64) as usize;
                let u1 = sinks.remove(i);
                let j = rng.below(sinks.len() as u64) as usize;
                let u2 = sinks.remove(j);
                if choice == 2 {
                    b.add_node(&v, Combine::Sum).unwrap();
                }
                for u in [u1, u2] {
                    let op = random_op(&mut rng, b.dim(&u).unwrap(), out_dim, scale);
                    b.add_arc(&u, &v, op).unwrap();
                }
            }
            _ => {
                let u = sinks.pop().unwrap();
                let op = random_op(&mut rng, b.dim(&u).unwrap(), out_dim, scale);
                b.add_arc(&u, &v, op).unwrap();
            }
        }
        sinks.push(v);
    }
    // Nodes that lost their sink status through a branch still count; collect
    // every node without outgoing arcs.
    let mut open: Vec<String> = names
        .iter()
        .filter(|n| !b.arcs().iter().any(|a| &a.from == *n))
        .cloned()
        .collect();
    if open.len() > 1 || open == ["n00"] {
        let out = fresh(&mut names);
        b.add_node(&out, Combine::Sum).unwrap();
        let out_dim = 1 + rng.below(3) as usize;
        for u in open.drain(..) {
            let op = random_op(&mut rng, b.dim(&u).unwrap(), out_dim, scale);
            b.add_arc(&u, &out, op).unwrap();
        }
    }
    b.freeze().expect("generator builds valid nets")
}
