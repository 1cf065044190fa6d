//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::{grid, jacobi_eigenvalues, oracle_spectral_norm, random_orthogonal, random_spec};
use ndarray::{array, Array1, Array2};
use unrectify::builders::{build_resnet_block, random_dag};
use unrectify::experiments::{
    normal_samples, run_partition_experiment, run_stability_experiment, PartitionConfig, StabilityConfig,
};
use unrectify::lower::{lower_cpwl_to_relu, lower_maxpool_n};
use unrectify::partition::{refinement_check_with_table, PatternTable};
use unrectify::rng::Normal;
use unrectify::stability::{
    empirical_max_gain, lipschitz_upper_bound, resnet_stability_check, scale_to_stability, spectral_norm,
    stability_certificate, StabilityError, DEFAULT_TOL,
};
use unrectify::{eval, partition_census, region_affine, signature, Activation, ArcOp, DagBuilder, NormKind};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ac1() -> Check {
    let start = Instant::now();
    let rows = run_partition_experiment(&PartitionConfig::default()).map_err(|e| e.to_string())?;
    let mut violations = 0;
    for k in rows.chunks(3) {
        let (t, b, f) = (&k[0].census, &k[1].census, &k[2].census);
        violations += (f.region_count < t.region_count.max(b.region_count)) as usize;
        violations += (f.multi_point_count > t.multi_point_count.min(b.multi_point_count)) as usize;
        violations += (f.max_intra_dist > t.max_intra_dist.min(b.max_intra_dist)) as usize;
    }
    ensure!(rows.len() == 15, "{} rows", rows.len());
    ensure!(violations == 0, "{violations} dominance violations");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    let last = &rows[14].census;
    Ok(format!("layer-5 fusion regions {} of {} samples, {secs:.1}s", last.region_count, last.samples))
}

fn ac2() -> Check {
    let mut pairs = 0;
    for seed in 0..20 {
        let net = random_dag(1000 + seed, 12, 1.0);
        ensure!(net.node_count() <= 12, "net {seed} has {} nodes", net.node_count());
        let xs = normal_samples(10_000, net.input_dim(), seed);
        let table = PatternTable::compute(&net, &xs).map_err(|e| e.to_string())?;
        for a in net.node_ids() {
            let ai = net.node_index(a).unwrap();
            for b in net.node_ids() {
                if !net.is_ancestor(net.node_index(b).unwrap(), ai) {
                    continue;
                }
                let v = refinement_check_with_table(&net, &table, a, b).map_err(|e| e.to_string())?;
                ensure!(v == 0, "net {seed}: {v} violations for ({a}, {b})");
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} node pairs, 0 violations"))
}

fn ac3() -> Check {
    let unscaled = run_stability_experiment(&StabilityConfig::default()).map_err(|e| e.to_string())?;
    let g = &unscaled.gains;
    ensure!(g.windows(2).all(|w| w[1] >= w[0]), "unscaled gains not monotone: {g:?}");
    ensure!(g[g.len() - 1] / g[0] > 2.0, "final/first ratio {}", g[g.len() - 1] / g[0]);
    let cfg = StabilityConfig { scaled: true, ..StabilityConfig::default() };
    let scaled = run_stability_experiment(&cfg).map_err(|e| e.to_string())?;
    let s = &scaled.gains;
    ensure!(s.iter().all(|&x| x <= 1.05 * s[0]), "scaled gains exceed 1.05x layer 1: {s:?}");
    ensure!(scaled.report.certified && scaled.report.m == Some(1), "certificate m={:?}", scaled.report.m);
    ensure!(scaled.report.d == 1.0, "d = {}", scaled.report.d);
    Ok(format!("unscaled ratio {:.1}, scaled final {:.3}", g[g.len() - 1] / g[0], s[s.len() - 1]))
}

fn ac4() -> Check {
    let mut rng = Normal::new(404);
    let (mut certified, mut uncertified) = (0, 0);
    for seed in 0..50 {
        let raw = random_dag(4000 + seed, 10, 1.5);
        let net = if seed % 2 == 1 {
            scale_to_stability(&raw, NormKind::Spectral).unwrap_or_else(|_| random_dag(4000 + seed, 10, 0.3))
        } else {
            raw
        };
        let report = stability_certificate(&net, NormKind::Spectral).map_err(|e| e.to_string())?;
        if report.certified {
            certified += 1;
        } else {
            uncertified += 1;
        }
        let pairs: Vec<(Array1<f64>, Array1<f64>)> = (0..500)
            .map(|k| {
                let x = rng.vector(net.input_dim());
                let step = if k % 2 == 0 { 1e-3 } else { 1.0 };
                let y = &x + &(rng.vector(net.input_dim()) * step);
                (x, y)
            })
            .collect();
        let gain = empirical_max_gain(&net, &pairs).map_err(|e| e.to_string())?;
        let bound = lipschitz_upper_bound(&net, NormKind::Spectral).map_err(|e| e.to_string())?;
        ensure!(gain <= bound * (1.0 + 1e-9), "net {seed}: gain {gain} > bound {bound}");
    }
    ensure!(certified > 0 && uncertified > 0, "{certified} certified, {uncertified} uncertified");
    Ok(format!("{certified} certified, {uncertified} uncertified"))
}

fn ac5() -> Check {
    let mut rng = Normal::new(505);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let spec = random_spec(&mut rng, 8);
        let net = lower_cpwl_to_relu(&spec).map_err(|e| e.to_string())?;
        for _ in 0..1000 {
            let x = 4.0 * rng.sample();
            let got = eval(&net, &Array1::from_elem(1, x)).map_err(|e| e.to_string())?[0];
            worst = worst.max((got - spec.eval(x)).abs());
        }
    }
    ensure!(worst <= 1e-10, "cpwl lowering error {worst}");
    let mut pool_worst: f64 = 0.0;
    for k in 2..=5 {
        let net = lower_maxpool_n(k).map_err(|e| e.to_string())?;
        for _ in 0..10_000 {
            let x = rng.vector(k);
            let want = x.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let got = eval(&net, &x).map_err(|e| e.to_string())?[0];
            pool_worst = pool_worst.max((got - want).abs());
        }
    }
    ensure!(pool_worst <= 1e-12, "max-pool error {pool_worst}");
    Ok(format!("cpwl max error {worst:.1e}, max-pool max error {pool_worst:.1e}"))
}

fn ac6() -> Check {
    let mut rng = Normal::new(606);
    let (mut pairs, mut worst, mut seed) = (0, 0.0f64, 0);
    while pairs < 1000 {
        let net = random_dag(6000 + seed, 12, 1.0);
        seed += 1;
        ensure!(seed < 1000, "too few same-signature pairs");
        for _ in 0..50 {
            let x = rng.vector(net.input_dim());
            let y = &x + &(rng.vector(net.input_dim()) * 1e-3);
            let out = net.output();
            if signature(&net, out, &x).map_err(|e| e.to_string())?
                != signature(&net, out, &y).map_err(|e| e.to_string())?
            {
                continue;
            }
            let (a, b) = region_affine(&net, &x).map_err(|e| e.to_string())?;
            let fy = eval(&net, &y).map_err(|e| e.to_string())?;
            let err = (&fy - &(a.dot(&y) + &b)).mapv(|t| t * t).sum().sqrt();
            let tol = 1e-8 * (1.0 + fy.dot(&fy).sqrt());
            ensure!(err <= tol, "net {seed}: residual {err} > {tol}");
            worst = worst.max(err);
            pairs += 1;
        }
    }
    Ok(format!("{pairs} pairs over {seed} nets, max residual {worst:.1e}"))
}

fn ac7() -> Check {
    let mut rng = Normal::new(707);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let (r, c) = (1 + rng.below(50) as usize, 1 + rng.below(50) as usize);
        let w = rng.matrix(r, c);
        let got = spectral_norm(&w, DEFAULT_TOL).map_err(|e| e.to_string())?;
        let want = oracle_spectral_norm(&w);
        let rel = (got - want).abs() / want;
        ensure!(rel <= 1e-6, "matrix {k} ({r}x{c}): relative error {rel}");
        worst = worst.max(rel);
    }
    Ok(format!("max relative error {worst:.1e}"))
}

fn ac8() -> Check {
    let pts = grid(-2.0, 2.0, 200);
    let count = |op: ArcOp| -> Result<usize, String> {
        let mut b = DagBuilder::new("I", 2);
        b.add_arc("I", "O", op).map_err(|e| e.to_string())?;
        let net = b.freeze().map_err(|e| e.to_string())?;
        let c = partition_census(&net, "O", &pts).map_err(|e| e.to_string())?;
        let direct: HashSet<_> = pts.outer_iter().map(|x| signature(&net, "O", &x.to_owned()).unwrap()).collect();
        ensure!(direct.len() == c.region_count, "census disagrees with direct grouping");
        Ok(c.region_count)
    };
    let maxlu = count(ArcOp::Activation(Activation::Maxlu2))?;
    let plain = count(ArcOp::Activation(Activation::Relu))?;
    let generic = count(ArcOp::relu_affine(array![[1.0, 0.4], [-0.7, 1.2]], array![0.3, -0.1]))?;
    ensure!(maxlu == 3, "MaxLU2 gives {maxlu} signatures");
    ensure!(plain <= 4 && generic == 4, "ReLU gives {plain} / {generic} signatures");
    Ok(format!("MaxLU2 {maxlu}, ReLU {plain}, generic ReLU {generic}"))
}

fn ac9() -> Check {
    let mut rng = Normal::new(909);
    let (w1, b1, w2, b2) = (rng.matrix(6, 4), rng.vector(6), rng.matrix(4, 6), rng.vector(4));
    let net = build_resnet_block(&w1, &b1, &w2, &b2).map_err(|e| e.to_string())?;
    match scale_to_stability(&net, NormKind::Spectral) {
        Err(StabilityError::Unscalable { .. }) => {}
        other => return Err(format!("expected Unscalable, got {other:?}")),
    }
    let mut agree = 0;
    for k in 0..100 {
        let n = 2 + rng.below(6) as usize;
        let q = random_orthogonal(n, &mut rng);
        // Eigenvalues inside [0, 2] for even k; one pushed outside for odd k.
        let eig: Vec<f64> = (0..n)
            .map(|i| match (k % 2, i, k % 4) {
                (1, 0, 1) => 2.01 + rng.uniform(),
                (1, 0, _) => -0.01 - rng.uniform(),
                _ => (2.0 * rng.uniform()).clamp(1e-6, 2.0 - 1e-6),
            })
            .collect();
        let w1 = q.t().to_owned();
        let w2 = &q * &Array1::from(eig);
        let p = w2.dot(&w1);
        let sym: Array2<f64> = (&p + &p.t()) * 0.5;
        let want = jacobi_eigenvalues(&sym).iter().all(|&e| (-1e-12..=2.0 + 1e-12).contains(&e));
        let got = resnet_stability_check(&w1, &w2).map_err(|e| e.to_string())?;
        ensure!(got == want, "case {k}: check {got}, eigenvalue criterion {want}");
        agree += 1;
    }
    Ok(format!("Unscalable; {agree}/100 PSD cases agree"))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_unrectify"))
        .args(args)
        .current_dir(dir)
        .env("UNRECTIFY_THREADS", "2")
        .status()
        .map_err(|e| e.to_string())?;
    ensure!(status.success(), "`unrectify {}` failed", args.join(" "));
    Ok(())
}

fn cli_session(dir: &Path) -> Result<(), String> {
    std::fs::write(dir.join("spec.json"), r#"{"r": [1.0, -0.5], "a": [0.0, 1.5], "l": [0.25], "t": [-1.0]}"#)
        .map_err(|e| e.to_string())?;
    for kind in ["series", "fusion", "fusion-stack", "resnet", "attention", "lenet"] {
        run_cli(dir, &["build", kind, "--seed", "3", "--layers", "3", "--dim", "4", "-o", &format!("{kind}.json")])?;
    }
    run_cli(dir, &["lower", "--spec", "spec.json", "-o", "cpwl.json"])?;
    run_cli(dir, &["lower", "--maxpool", "5", "-o", "pool.json"])?;
    let xs = normal_samples(20, 4, 1);
    let csv: String = xs
        .outer_iter()
        .map(|r| r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    std::fs::write(dir.join("x.csv"), csv).map_err(|e| e.to_string())?;
    run_cli(dir, &["eval", "fusion-stack.json", "--input", "x.csv", "--signature", "-o", "eval.csv"])?;
    run_cli(dir, &["census", "fusion-stack.json", "--samples", "400", "-o", "census.csv"])?;
    run_cli(dir, &["census", "fusion-stack.json", "--input", "x.csv", "-o", "census_x.csv"])?;
    run_cli(dir, &["stability", "fusion-stack.json", "--samples", "60", "-o", "stab"])?;
    run_cli(dir, &["stability", "series.json", "--scaled", "--norm", "frobenius", "--samples", "60", "-o", "stab2"])?;
    run_cli(dir, &["experiment", "partition", "--dim", "6", "--samples", "500", "-o", "partition.csv"])?;
    run_cli(dir, &["experiment", "gain", "--dim", "6", "--samples", "80", "-o", "gain"])?;
    run_cli(dir, &["experiment", "gain", "--dim", "6", "--samples", "80", "--scaled", "-o", "gain_scaled"])?;
    Ok(())
}

fn ac10() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    cli_session(a.path())?;
    cli_session(b.path())?;
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    ensure!(sa.keys().eq(sb.keys()), "different file sets");
    for (name, bytes) in &sa {
        ensure!(!bytes.is_empty(), "{name} is empty");
        ensure!(sb[name] == *bytes, "{name} differs between runs");
    }
    Ok(format!("{} files identical across two runs", sa.len()))
}

fn main() {
    let checks: [(&str, fn() -> Check); 10] = [
        ("AC1 fusion partition dominance", ac1),
        ("AC2 refinement property suite", ac2),
        ("AC3 fusion-stack gain study", ac3),
        ("AC4 bound soundness", ac4),
        ("AC5 lowering exactness", ac5),
        ("AC6 region-affine exactness", ac6),
        ("AC7 spectral-norm oracle agreement", ac7),
        ("AC8 MaxLU2/ReLU partition counts", ac8),
        ("AC9 residual block checks", ac9),
        ("AC10 CLI determinism", ac10),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
