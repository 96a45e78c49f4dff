//! Release acceptance checks. Each criterion prints one PASS/FAIL line with
//! its measured values and runtime; the process fails if any criterion does.
//!
//! Run alone with `cargo test -p cect-cli --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use cect::data::{split_counts, synth_generate, Dataset, SplitSpec};
use cect::eval::{evaluate, init_seed, metrics, AblationSpec, ConfusionMatrix, SweepSpec};
use cect::model::ceb::ceb_forward;
use cect::model::swin::{window_attention, AttentionGeometry};
use cect::model::tdb::{decoder_forward, tdb_forward};
use cect::model::{
    model_grad_check, Branch, Cect, CectConfig, EnsembleCoefficients, ModelGradCheckConfig, ParamStore, ScaleTag,
};
use cect::report::{affinities, read_json, tsne, RunReport, Table, TsneConfig};
use cect::tensor::kernels;
use cect::train::{fit, Plateau, PlateauConfig, TrainConfig, BEST_CHECKPOINT, LAST_CHECKPOINT};
use cect::{Graph, Rng, Tensor};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

/// Runs one criterion, enforcing its time budget, and prints its line.
fn criterion(name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let result = result.and_then(|detail| {
        if elapsed <= budget {
            Ok(detail)
        } else {
            Err(format!(
                "{detail}; runtime {} exceeds budget {}",
                secs(elapsed),
                secs(budget)
            ))
        }
    });
    match &result {
        Ok(detail) => println!("PASS  {name:<28} [{:>7}]  {detail}", secs(elapsed)),
        Err(detail) => println!("FAIL  {name:<28} [{:>7}]  {detail}", secs(elapsed)),
    }
    result.is_ok()
}

fn cli(args: &[&str]) -> i32 {
    cect_cli::run(std::iter::once("cect").chain(args.iter().copied()))
}

fn image(n: usize, r: usize, seed: u64) -> Tensor {
    Tensor::uniform(&[n, 3, r, r], 1.0, &mut Rng::new(seed))
}

fn metric_reproduction() -> Outcome {
    let m = metrics(&ConfusionMatrix::new(348, 12, 14, 1007)).map_err(|e| e.to_string())?;
    let reference = [
        ("ACC", m.acc, 98.1),
        ("NPV", m.npv, 98.6),
        ("PPV", m.ppv, 96.7),
        ("SEN", m.sen, 96.1),
        ("SPE", m.spe, 98.8),
        ("FOS", m.fos, 96.4),
    ];
    let mut worst = 0.0f64;
    for (name, got, want) in reference {
        let got = got.ok_or(format!("{name} undefined"))? * 100.0;
        let dev = (got - want).abs();
        ensure!(dev <= 0.05, "{name} = {got:.4}% vs reference {want}%");
        worst = worst.max(dev);
    }
    Ok(format!("max deviation {worst:.4} percentage points"))
}

fn split_reproduction() -> Outcome {
    let spec = SplitSpec::standard(0);
    let pos = split_counts(3616, &spec).map_err(|e| e.to_string())?;
    let neg = split_counts(10192, &spec).map_err(|e| e.to_string())?;
    ensure!(pos == (2892, 362, 362), "positive split {pos:?}");
    ensure!(neg == (8154, 1019, 1019), "negative split {neg:?}");
    Ok(format!("{pos:?} / {neg:?}"))
}

fn scale_contract() -> Outcome {
    let mut report = Vec::new();
    for (r, cfg) in [
        (32, CectConfig::micro()),
        (64, CectConfig::tiny()),
        (224, CectConfig::reference()),
    ] {
        let start = Instant::now();
        let model = Cect::new(cfg.clone(), 0).map_err(|e| e.to_string())?;
        let mut g = Graph::new();
        let p = model.params().bind(&mut g, false);
        let x = g.input(image(1, r, 1));
        let enc = ceb_forward(&mut g, &p, &cfg, x).map_err(|e| e.to_string())?;
        for b in Branch::ALL {
            let fm = enc[b.index()].ok_or("missing encoder output")?;
            let side = g.shape(fm.var)[2];
            ensure!(
                side == r / [8, 4, 2][b.index()],
                "R={r} {}: encoder map side {side}",
                b.name()
            );
            let dec = decoder_forward(&mut g, &p, &cfg, fm, b).map_err(|e| e.to_string())?;
            ensure!(
                dec.scale == ScaleTag::S224 && g.shape(dec.var)[2..] == [r, r],
                "R={r} {}: decoder shape {:?}",
                b.name(),
                g.shape(dec.var)
            );
        }
        let logits = model.logits(&image(1, r, 2)).map_err(|e| e.to_string())?;
        ensure!(logits.shape() == [1, 2], "R={r}: logits shape {:?}", logits.shape());
        let took = start.elapsed();
        if r == 224 {
            ensure!(took < Duration::from_secs(30), "R=224 full model took {}", secs(took));
        }
        report.push(format!("R={r} ok in {}", secs(took)));
    }
    Ok(report.join(", "))
}

fn degeneracy() -> Outcome {
    let cfg = CectConfig::tiny();
    let model = Cect::new(cfg.clone(), 5).map_err(|e| e.to_string())?;
    let mut g = Graph::new();
    let p = model.params().bind(&mut g, false);
    let x = g.input(image(2, 64, 6));
    let enc = ceb_forward(&mut g, &p, &cfg, x).map_err(|e| e.to_string())?;
    for b in Branch::ALL {
        let single =
            decoder_forward(&mut g, &p, &cfg, enc[b.index()].ok_or("missing map")?, b).map_err(|e| e.to_string())?;
        let fused = tdb_forward(&mut g, &p, &cfg, &enc, &EnsembleCoefficients::only(b)).map_err(|e| e.to_string())?;
        ensure!(
            g.value(fused.var) == g.value(single.var),
            "{} one-hot fusion differs from the branch output",
            b.name()
        );
    }
    let invalid = [
        (0.5, 0.4, 0.4),
        (1.2, -0.1, -0.1),
        (f64::NAN, 0.5, 0.5),
        (0.3, 0.3, 0.3),
    ];
    for (a, b, c) in invalid {
        ensure!(EnsembleCoefficients::new(a, b, c).is_err(), "({a}, {b}, {c}) accepted");
    }
    Ok(format!(
        "3 one-hot triples bit-exact, {} invalid triples rejected",
        invalid.len()
    ))
}

fn attention_params(d: usize, heads: usize, window: usize, rng: &mut Rng) -> ParamStore<f64> {
    let mut p = ParamStore::new();
    let side = (2 * window - 1).pow(2);
    for (name, shape) in [
        ("norm1.gain", vec![d]),
        ("norm1.bias", vec![d]),
        ("attn.qkv.weight", vec![d, 3 * d]),
        ("attn.qkv.bias", vec![3 * d]),
        ("attn.proj.weight", vec![d, d]),
        ("attn.proj.bias", vec![d]),
        ("attn.rel_bias", vec![side, heads]),
    ] {
        p.insert(format!("blk.{name}"), Tensor::uniform(&shape, 0.8, rng));
    }
    p
}

/// Pre-norm residual multi-head self-attention over all tokens at once.
fn naive_attention(z: &Tensor<f64>, p: &ParamStore<f64>, heads: usize) -> Vec<f64> {
    let d = *z.shape().last().expect("rank");
    let t = z.numel() / d;
    let hd = d / heads;
    let get = |n: &str| p.get(&format!("blk.{n}")).expect("param").data().to_vec();
    let (gain, bias) = (get("norm1.gain"), get("norm1.bias"));
    let (wqkv, bqkv, wo, bo) = (
        get("attn.qkv.weight"),
        get("attn.qkv.bias"),
        get("attn.proj.weight"),
        get("attn.proj.bias"),
    );
    let zd = z.data();
    let mut x = vec![0.0; t * d];
    for i in 0..t {
        let row = &zd[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        for c in 0..d {
            x[i * d + c] = (row[c] - mean) / (var + 1e-5).sqrt() * gain[c] + bias[c];
        }
    }
    let qkv: Vec<f64> = (0..t * 3 * d)
        .map(|idx| {
            let (i, o) = (idx / (3 * d), idx % (3 * d));
            bqkv[o] + (0..d).map(|c| x[i * d + c] * wqkv[c * 3 * d + o]).sum::<f64>()
        })
        .collect();
    let at = |i: usize, which: usize, h: usize, j: usize| qkv[i * 3 * d + which * d + h * hd + j];
    let mut ctx = vec![0.0; t * d];
    for h in 0..heads {
        for i in 0..t {
            let logits: Vec<f64> = (0..t)
                .map(|k| (0..hd).map(|j| at(i, 0, h, j) * at(k, 1, h, j)).sum::<f64>() / (hd as f64).sqrt())
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for j in 0..hd {
                ctx[i * d + h * hd + j] = (0..t).map(|k| e[k] / s * at(k, 2, h, j)).sum::<f64>();
            }
        }
    }
    (0..t * d)
        .map(|idx| {
            let (i, o) = (idx / d, idx % d);
            zd[idx] + bo[o] + (0..d).map(|c| ctx[i * d + c] * wo[c * d + o]).sum::<f64>()
        })
        .collect()
}

fn attention_oracle() -> Outcome {
    let mut rng = Rng::new(21);
    let (grid, d, heads) = (4, 6, 2);
    let mut p = attention_params(d, heads, grid, &mut rng);
    p.insert("blk.attn.rel_bias", Tensor::zeros(&[(2 * grid - 1).pow(2), heads]));
    let z = Tensor::<f64>::uniform(&[1, grid, grid, d], 1.0, &mut rng);
    let mut g = Graph::new();
    let bound = p.bind(&mut g, false);
    let zv = g.input(z.clone());
    let out = window_attention(
        &mut g,
        &bound,
        "blk",
        zv,
        AttentionGeometry {
            heads,
            window: grid,
            shift: 0,
        },
    )
    .map_err(|e| e.to_string())?;
    let want = naive_attention(&z, &p, heads);
    let diff = g
        .value(out.out)
        .data()
        .iter()
        .zip(&want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure!(diff < 1e-6, "W-MSA vs naive attention max abs diff {diff:e}");

    let (grid, window, shift, d, heads) = (8, 4, 2, 4, 2);
    let p = attention_params(d, heads, window, &mut rng);
    let mut g = Graph::new();
    let bound = p.bind(&mut g, false);
    let zv = g.input(Tensor::<f64>::uniform(&[2, grid, grid, d], 3.0, &mut rng));
    let out = window_attention(&mut g, &bound, "blk", zv, AttentionGeometry { heads, window, shift })
        .map_err(|e| e.to_string())?;
    let w = g.value(out.weights);
    let side = grid / window;
    let t = window * window;
    let wrapped = |r: usize| r + shift >= grid;
    let mut leak = 0.0f64;
    let mut blocked = 0;
    for n in 0..2 {
        for win in 0..side * side {
            let pos = |i: usize| ((win / side) * window + i / window, (win % side) * window + i % window);
            for h in 0..heads {
                for i in 0..t {
                    for j in 0..t {
                        let (a, b) = (pos(i), pos(j));
                        if wrapped(a.0) != wrapped(b.0) || wrapped(a.1) != wrapped(b.1) {
                            leak = leak.max(w.at(&[n, win, h, i, j]));
                            blocked += 1;
                        }
                    }
                }
            }
        }
    }
    ensure!(blocked > 0, "no masked pairs in the shifted layout");
    ensure!(leak < 1e-12, "SW-MSA leaks weight {leak:e} across shifted boundaries");
    Ok(format!(
        "W-MSA diff {diff:.2e}, SW-MSA max leaked weight {leak:.1e} over {blocked} masked pairs"
    ))
}

fn gradient_soundness() -> Outcome {
    let opts = ModelGradCheckConfig::default();
    ensure!(opts.draws == 3, "expected 3 draws, configured {}", opts.draws);
    let check = model_grad_check(&CectConfig::tiny(), 17, &opts).map_err(|e| e.to_string())?;
    ensure!(check.draws.len() == 3, "{} draws ran", check.draws.len());
    ensure!(
        check.passed && check.max_rel_err < 1e-3,
        "max relative error {:e} (worst {:?})",
        check.max_rel_err,
        check.worst_tensor
    );
    Ok(format!("max relative error {:.2e} over 3 draws", check.max_rel_err))
}

fn adjointness() -> Outcome {
    let mut rng = Rng::new(4);
    let pick = |rng: &mut Rng, n: usize| rng.below(n as u64) as usize;
    let (mut draws, mut worst) = (0, 0.0f64);
    while draws < 20 {
        let (n, c, o, k, s) = (
            1 + pick(&mut rng, 2),
            1 + pick(&mut rng, 3),
            1 + pick(&mut rng, 3),
            1 + pick(&mut rng, 4),
            1 + pick(&mut rng, 3),
        );
        let p = pick(&mut rng, k);
        let (ho, wo) = (1 + pick(&mut rng, 4), 1 + pick(&mut rng, 4));
        let (h, w) = ((ho - 1) * s + k, (wo - 1) * s + k);
        if h <= 2 * p || w <= 2 * p {
            continue;
        }
        draws += 1;
        let x = Tensor::<f64>::uniform(&[n, c, h - 2 * p, w - 2 * p], 1.0, &mut rng);
        let kern = Tensor::<f64>::uniform(&[o, c, k, k], 1.0, &mut rng);
        let y = Tensor::<f64>::uniform(&[n, o, ho, wo], 1.0, &mut rng);
        let fwd = kernels::conv2d(&x, &kern, s, p).map_err(|e| e.to_string())?;
        let back = kernels::conv_transpose2d(&y, &kern, s, p).map_err(|e| e.to_string())?;
        ensure!(
            fwd.shape() == y.shape() && back.shape() == x.shape(),
            "shape mismatch at draw {draws}"
        );
        let (lhs, rhs) = (fwd.dot(&y), x.dot(&back));
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12);
        ensure!(rel < 1e-5, "draw {draws}: <conv x, y> = {lhs}, <x, convT y> = {rhs}");
        worst = worst.max(rel);
    }
    Ok(format!("20 draws, worst relative gap {worst:.1e}"))
}

fn overfit_smoke() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model_cfg = CectConfig::tiny();
    let r = model_cfg.input_resolution;
    let manifest = synth_generate(dir.path(), 16, r, 0).map_err(|e| e.to_string())?;
    let data = Dataset::load(&manifest, r).map_err(|e| e.to_string())?;
    ensure!(data.len() == 32, "synthetic set has {} images", data.len());
    let cfg = TrainConfig {
        epochs: 200,
        max_steps: Some(200),
        augment: None,
        ..TrainConfig::tiny()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let out = pool.install(|| {
        let net = Cect::new(model_cfg.clone(), init_seed(cfg.seed))?;
        let out = fit(net, &data, &data, &cfg, None, &mut |_| {})?;
        let clean = evaluate(&out.model, &data, &cfg.normalization)?;
        Ok::<_, cect::CectError>((out, clean))
    });
    let (out, clean) = out.map_err(|e| e.to_string())?;
    let steps = out.history.step_losses.len();
    let acc = clean.metrics.acc.unwrap_or(0.0);
    let first = out.history.epochs.first().map_or(f64::NAN, |e| e.train_loss);
    ensure!(steps <= 200, "{steps} optimizer steps");
    ensure!(acc >= 0.95, "train accuracy {acc:.4} after {steps} steps");
    Ok(format!(
        "train accuracy {acc:.4} after {steps} steps on one thread; loss {first:.4} -> {:.4}",
        clean.loss
    ))
}

fn harness_shape() -> Outcome {
    let reference: [[f64; 3]; 7] = [
        [0.8, 0.1, 0.1],
        [0.6, 0.2, 0.2],
        [0.1, 0.8, 0.1],
        [0.2, 0.6, 0.2],
        [0.1, 0.1, 0.8],
        [0.2, 0.2, 0.6],
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    ];
    let groups: Vec<[f64; 3]> = SweepSpec::default().groups.iter().map(|g| g.as_array()).collect();
    ensure!(groups == reference, "default sweep groups {groups:?}");
    let rows = AblationSpec::standard();
    ensure!(rows.len() == 7, "{} ablation rows", rows.len());

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().ok_or("non-UTF-8 temp path")?;
    let common = [
        "--out",
        out,
        "--preset",
        "micro",
        "--seed",
        "5",
        "-q",
        "--set",
        "synth.n=6",
        "--set",
        "data.split=0.5,0.25,0.25",
        "--set",
        "train.epochs=2",
        "--set",
        "train.batch_size=4",
        "--set",
        "train.lr=0.001",
    ];
    for sub in ["sweep", "ablate", "train"] {
        let code = cli(&[&[sub][..], &common[..]].concat());
        ensure!(code == 0, "`cect {sub}` exited with {code}");
    }
    let csv = |name: &str| -> Result<Table, String> {
        let text = std::fs::read_to_string(Path::new(out).join(name)).map_err(|e| format!("{name}: {e}"))?;
        Table::from_csv(&text).map_err(|e| e.to_string())
    };
    let sweep = csv("sweep-s5.sweep.csv")?;
    ensure!(sweep.rows.len() == 7, "sweep CSV has {} rows", sweep.rows.len());
    for (row, want) in sweep.rows.iter().zip(&reference) {
        let got: Vec<f64> = row[..3].iter().map(|v| v.parse().unwrap_or(f64::NAN)).collect();
        ensure!(got == want, "sweep row {got:?} != {want:?}");
    }
    let ablation = csv("ablate-s5.ablation.csv")?;
    ensure!(
        ablation.rows.len() == 7,
        "ablation CSV has {} rows",
        ablation.rows.len()
    );
    let report = |name: &str| read_json::<RunReport>(&Path::new(out).join(name)).map_err(|e| e.to_string());
    let ablate = report("ablate-s5.report.json")?;
    let train = report("train-s5.report.json")?;
    let main = train.training.ok_or("train report lacks history")?.step_losses;
    let rows = ablate.ablation.ok_or("ablation report lacks rows")?;
    let full = rows
        .last()
        .and_then(|r| r.history.as_ref())
        .ok_or("full row did not train")?;
    let same_bits = full.step_losses.len() == main.len()
        && full
            .step_losses
            .iter()
            .zip(&main)
            .all(|(a, b)| a.to_bits() == b.to_bits());
    ensure!(same_bits, "full ablation row losses differ from the main run");
    Ok(format!(
        "7 sweep groups, 7 ablation rows, full row matches {} main-run losses bit for bit",
        main.len()
    ))
}

fn scheduler() -> Outcome {
    let mut s = Plateau::new(
        PlateauConfig {
            factor: 0.5,
            patience: 5,
        },
        0.003,
    );
    let mut trace = vec![s.step(1.0).map_err(|e| e.to_string())?];
    for _ in 0..6 {
        trace.push(s.step(1.0).map_err(|e| e.to_string())?);
    }
    ensure!(
        trace == [0.003, 0.003, 0.003, 0.003, 0.003, 0.003, 0.0015],
        "lr trace {trace:?}"
    );
    Ok(format!("lr trace {trace:?}"))
}

fn gaussian(n: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    (0..n * d).map(|_| rng.normal()).collect()
}

fn tsne_suite() -> Outcome {
    let (n, d) = (100, 10);
    let x = gaussian(n, d, 1);
    let a = affinities(&x, n, d, 30.0).map_err(|e| e.to_string())?;
    let perp_err = a.row_perplexities.iter().map(|p| (p - 30.0).abs()).fold(0.0, f64::max);
    ensure!(perp_err < 1e-4, "row perplexity off by {perp_err:e}");

    let r = tsne(&x, n, d, &TsneConfig::default()).map_err(|e| e.to_string())?;
    let tail = &r.kl_trace[r.kl_trace.len() - 100..];
    let rises = tail.windows(2).filter(|w| w[1] > w[0]).count();
    ensure!(rises == 0, "KL rose {rises} times over the final 100 iterations");

    let d = 64;
    let mut x = gaussian(n, d, 3);
    for i in 50..n {
        x[i * d] += 10.0;
    }
    let r = tsne(
        &x,
        n,
        d,
        &TsneConfig {
            seed: 4,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let centroid = |range: std::ops::Range<usize>| {
        let k = range.len() as f64;
        range.fold([0.0, 0.0], |c, i| {
            [c[0] + r.points[i][0] / k, c[1] + r.points[i][1] / k]
        })
    };
    let (c0, c1) = (centroid(0..50), centroid(50..n));
    let d2 = |p: [f64; 2], c: [f64; 2]| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
    let pure = (0..n)
        .filter(|&i| (d2(r.points[i], c0) < d2(r.points[i], c1)) == (i < 50))
        .count();
    ensure!(pure == n, "cluster purity {pure}/{n}");
    Ok(format!(
        "perplexity error {perp_err:.1e}, KL non-increasing over last 100, purity {pure}/{n}"
    ))
}

fn determinism() -> Outcome {
    let dirs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    for d in &dirs {
        let code = cli(&[
            "train",
            "--preset",
            "tiny",
            "--seed",
            "13",
            "-q",
            "--out",
            d.path().to_str().ok_or("path")?,
        ]);
        ensure!(code == 0, "train exited with {code}");
    }
    let files = [
        "train-s13.losses.csv".to_string(),
        format!("train-s13/{BEST_CHECKPOINT}"),
        format!("train-s13/{LAST_CHECKPOINT}"),
    ];
    let mut bytes = 0;
    for f in &files {
        let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(f)).map_err(|e| format!("{f}: {e}"));
        let (a, b) = (read(&dirs[0])?, read(&dirs[1])?);
        ensure!(a == b, "{f} differs between runs");
        bytes += a.len();
    }
    Ok(format!(
        "loss trace and both checkpoints identical ({bytes} bytes compared)"
    ))
}

fn main() {
    let minute = Duration::from_secs(60);
    let results = [
        criterion("metric reproduction", Duration::from_secs(1), metric_reproduction),
        criterion("split reproduction", Duration::from_secs(1), split_reproduction),
        criterion("scale contract", 3 * minute, scale_contract),
        criterion("coefficient degeneracy", minute, degeneracy),
        criterion("attention oracle", Duration::from_secs(10), attention_oracle),
        criterion("gradient soundness", 5 * minute, gradient_soundness),
        criterion("adjointness", minute, adjointness),
        criterion("overfit smoke", 10 * minute, overfit_smoke),
        criterion("sweep/ablation harness", 10 * minute, harness_shape),
        criterion("scheduler", Duration::from_secs(1), scheduler),
        criterion("t-SNE properties", 2 * minute, tsne_suite),
        criterion("determinism", 10 * minute, determinism),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
