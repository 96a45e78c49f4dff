use std::collections::BTreeMap;

use cect::model::ceb::ceb_forward;
use cect::model::checkpoint;
use cect::model::swin::{cswt_block_pair, window_attention, window_partition, window_reverse, AttentionGeometry};
use cect::model::tdb::{decoder_forward, fuse, tdb_forward};
use cect::model::{
    init_params, model_grad_check, Architecture, Branch, Cect, CectConfig, EnsembleCoefficients, ModelGradCheckConfig,
    ParamStore, ScaleTag,
};
use cect::tensor::gradcheck::grad_check_at;
use cect::{Graph, Rng, Tensor};
use proptest::prelude::*;

fn image(n: usize, r: usize, seed: u64) -> Tensor {
    Tensor::uniform(&[n, 3, r, r], 1.0, &mut Rng::new(seed))
}

fn hflip(x: &Tensor) -> Tensor {
    let s = x.shape();
    let w = s[3];
    Tensor::from_fn(s, |i| x.data()[i - i % w + (w - 1 - i % w)])
}

/// Random attention-block parameters under `prefix`.
fn block_params(prefix: &str, d: usize, heads: usize, window: usize, rng: &mut Rng) -> ParamStore<f64> {
    let mut p = ParamStore::new();
    let side = (2 * window - 1).pow(2);
    let mut put = |name: &str, shape: &[usize], rng: &mut Rng| {
        p.insert(format!("{prefix}.{name}"), Tensor::uniform(shape, 0.8, rng))
    };
    put("norm1.gain", &[d], rng);
    put("norm1.bias", &[d], rng);
    put("attn.qkv.weight", &[d, 3 * d], rng);
    put("attn.qkv.bias", &[3 * d], rng);
    put("attn.proj.weight", &[d, d], rng);
    put("attn.proj.bias", &[d], rng);
    put("attn.rel_bias", &[side, heads], rng);
    p
}

fn naive_attention(z: &Tensor<f64>, p: &ParamStore<f64>, prefix: &str, heads: usize) -> Vec<f64> {
    let d = *z.shape().last().unwrap();
    let t = z.numel() / d;
    let hd = d / heads;
    let get = |n: &str| p.get(&format!("{prefix}.{n}")).unwrap().data().to_vec();
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
    let mut qkv = vec![0.0; t * 3 * d];
    for i in 0..t {
        for o in 0..3 * d {
            qkv[i * 3 * d + o] = bqkv[o] + (0..d).map(|c| x[i * d + c] * wqkv[c * 3 * d + o]).sum::<f64>();
        }
    }
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

#[test]
fn full_window_attention_matches_naive_oracle() {
    let mut rng = Rng::new(21);
    let (grid, d, heads) = (4, 6, 2);
    let mut p = block_params("blk", d, heads, grid, &mut rng);
    p.insert("blk.attn.rel_bias", Tensor::zeros(&[(2 * grid - 1).pow(2), heads]));
    let z = Tensor::<f64>::uniform(&[1, grid, grid, d], 1.0, &mut rng);
    let mut g = Graph::new();
    let bound = p.bind(&mut g, false);
    let zv = g.input(z.clone());
    let geo = AttentionGeometry {
        heads,
        window: grid,
        shift: 0,
    };
    let out = window_attention(&mut g, &bound, "blk", zv, geo).unwrap();
    let want = naive_attention(&z, &p, "blk", heads);
    let diff = g
        .value(out.out)
        .data()
        .iter()
        .zip(&want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");
}

#[test]
fn shifted_mask_blocks_wrapped_neighbours() {
    let mut rng = Rng::new(22);
    let (grid, window, shift, d, heads) = (8, 4, 2, 4, 2);
    let p = block_params("blk", d, heads, window, &mut rng);
    let z = Tensor::<f64>::uniform(&[2, grid, grid, d], 3.0, &mut rng);
    let mut g = Graph::new();
    let bound = p.bind(&mut g, false);
    let zv = g.input(z);
    let out = window_attention(&mut g, &bound, "blk", zv, AttentionGeometry { heads, window, shift }).unwrap();
    let w = g.value(out.weights);
    let nw_side = grid / window;
    let t = window * window;
    assert_eq!(w.shape(), &[2, nw_side * nw_side, heads, t, t]);
    // After rolling by -shift, position r on an axis holds original
    // coordinate (r + shift) mod grid; it wrapped iff r + shift >= grid.
    let wrapped = |r: usize| r + shift >= grid;
    let (mut blocked, mut open) = (0, 0);
    for n in 0..2 {
        for win in 0..nw_side * nw_side {
            let (wr, wc) = (win / nw_side, win % nw_side);
            let pos = |i: usize| (wr * window + i / window, wc * window + i % window);
            for h in 0..heads {
                for i in 0..t {
                    let mut row = 0.0;
                    for j in 0..t {
                        let (a, b) = (pos(i), pos(j));
                        let v = w.at(&[n, win, h, i, j]);
                        row += v;
                        if wrapped(a.0) != wrapped(b.0) || wrapped(a.1) != wrapped(b.1) {
                            assert!(v < 1e-12, "leak {v} at window {win} ({i},{j})");
                            blocked += 1;
                        } else {
                            assert!(v > 0.0);
                            open += 1;
                        }
                    }
                    assert!((row - 1.0).abs() < 1e-12);
                }
            }
        }
    }
    assert!(blocked > 0 && open > 0);
}

#[test]
fn zero_block_weights_are_identity() {
    let cfg = CectConfig::tiny();
    let mut p = init_params(&cfg, 1);
    let names: Vec<String> = p.names().filter(|n| n.starts_with("tcb.s0.b")).cloned().collect();
    for n in names {
        if n.contains("attn.") || n.contains("mlp.") {
            let shape = p.get(&n).unwrap().shape().to_vec();
            p.insert(n, Tensor::zeros(&shape));
        }
    }
    let z = Tensor::<f32>::normal(&[2, 32, 32, 4], 1.0, &mut Rng::new(2));
    let mut g = Graph::new();
    let bound = p.bind(&mut g, false);
    let zv = g.input(z.clone());
    let y = cswt_block_pair(&mut g, &bound, "tcb.s0.b0", "tcb.s0.b1", zv, 1, 4).unwrap();
    assert_eq!(g.value(y), &z);
}

#[test]
fn block_pair_gradients() {
    let cfg = CectConfig::micro();
    let mut rng = Rng::new(23);
    let p = init_params(&cfg, 4).cast::<f64>();
    let mut names = vec![];
    let mut inputs = vec![Tensor::<f64>::normal(&[1, 16, 16, 2], 1.0, &mut rng)];
    for (n, t) in p
        .iter()
        .filter(|(n, _)| n.starts_with("tcb.s0.b0.") || n.starts_with("tcb.s0.b1."))
    {
        names.push(n.clone());
        let noise = Tensor::<f64>::normal(t.shape(), 0.3, &mut rng);
        inputs.push(
            Tensor::new(
                t.shape().to_vec(),
                t.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect(),
            )
            .unwrap(),
        );
    }
    let coords: Vec<_> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel().min(40)).map(move |c| (i, c)))
        .collect();
    let w = Tensor::<f64>::normal(&[512, 1], 1.0, &mut rng);
    let r = grad_check_at(
        |g, v| {
            let bound = cect::model::Bound::from_vars(
                names
                    .iter()
                    .cloned()
                    .zip(v[1..].iter().copied())
                    .collect::<BTreeMap<_, _>>(),
            );
            let y = cswt_block_pair(g, &bound, "tcb.s0.b0", "tcb.s0.b1", v[0], 1, 2)?;
            let flat = g.reshape(y, &[1, 512])?;
            let wv = g.input(w.clone());
            let s = g.matmul(flat, wv)?;
            g.sum(s)
        },
        &inputs,
        &coords,
        1e-5,
        1e-3,
    )
    .unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn window_partition_examples() {
    let mut g = Graph::<f32>::new();
    let x = Tensor::normal(&[1, 4, 4, 3], 1.0, &mut Rng::new(3));
    let xv = g.input(x.clone());
    let one = window_partition(&mut g, xv, 4).unwrap();
    assert_eq!(g.shape(one), &[1, 16, 3]);
    assert_eq!(g.value(one).data(), x.data());
    let y = g.input(Tensor::zeros(&[1, 8, 8, 2]));
    let four = window_partition(&mut g, y, 4).unwrap();
    assert_eq!(g.shape(four), &[4, 16, 2]);
    assert!(window_partition(&mut g, y, 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn window_round_trip(n in 1usize..3, wh in 1usize..4, ww in 1usize..4, window in 1usize..5, d in 1usize..4, seed in any::<u64>()) {
        let (h, w) = (wh * window, ww * window);
        let x = Tensor::<f32>::normal(&[n, h, w, d], 1.0, &mut Rng::new(seed));
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let p = window_partition(&mut g, xv, window).unwrap();
        prop_assert_eq!(g.shape(p), &[n * wh * ww, window * window, d][..]);
        let back = window_reverse(&mut g, p, window, n, h, w).unwrap();
        prop_assert_eq!(g.value(back), &x);
    }
}

fn scale_config(r: usize) -> CectConfig {
    match r {
        32 => CectConfig::micro(),
        64 => CectConfig::tiny(),
        _ => {
            let mut c = CectConfig::tiny();
            c.input_resolution = r;
            c.tcb.patch_size = 4;
            c.tcb.window = 7;
            c
        }
    }
}

#[test]
fn scale_contracts() {
    for r in [32, 64, 224] {
        let cfg = scale_config(r);
        cfg.validate().unwrap();
        let model = Cect::new(cfg.clone(), 0).unwrap();
        let mut g = Graph::new();
        let p = model.params().bind(&mut g, false);
        let x = g.input(image(1, r, 1));
        let enc = ceb_forward(&mut g, &p, &cfg, x).unwrap();
        for b in Branch::ALL {
            let fm = enc[b.index()].unwrap();
            assert_eq!(g.shape(fm.var)[2], r / [8, 4, 2][b.index()]);
            let dec = decoder_forward(&mut g, &p, &cfg, fm, b).unwrap();
            assert_eq!(dec.scale, ScaleTag::S224);
            assert_eq!(&g.shape(dec.var)[2..], &[r, r]);
        }
        assert_eq!(model.logits(&image(1, r, 2)).unwrap().shape(), &[1, 2]);
    }
    let mut bad = CectConfig::tiny();
    bad.input_resolution = 60;
    assert!(bad.validate().is_err());
}

#[test]
fn degenerate_coefficients_select_one_branch_exactly() {
    let cfg = CectConfig::tiny();
    let model = Cect::new(cfg.clone(), 5).unwrap();
    let mut g = Graph::new();
    let p = model.params().bind(&mut g, false);
    let x = g.input(image(2, 64, 6));
    let enc = ceb_forward(&mut g, &p, &cfg, x).unwrap();
    let decoded: Vec<_> = Branch::ALL
        .iter()
        .map(|&b| {
            (
                b,
                decoder_forward(&mut g, &p, &cfg, enc[b.index()].unwrap(), b).unwrap(),
            )
        })
        .collect();
    for b in Branch::ALL {
        let fused = tdb_forward(&mut g, &p, &cfg, &enc, &EnsembleCoefficients::only(b)).unwrap();
        assert_eq!(g.value(fused.var), g.value(decoded[b.index()].1.var), "{}", b.name());
    }
    // Linearity of the weighted sum: the midpoint of two coefficient
    // triples fuses to the midpoint of their outputs.
    let c1 = EnsembleCoefficients::new(0.8, 0.1, 0.1).unwrap();
    let c2 = EnsembleCoefficients::new(0.2, 0.2, 0.6).unwrap();
    let mid = EnsembleCoefficients::new(0.5, 0.15, 0.35).unwrap();
    let y1 = fuse(&mut g, &decoded, &c1).unwrap();
    let y2 = fuse(&mut g, &decoded, &c2).unwrap();
    let ym = fuse(&mut g, &decoded, &mid).unwrap();
    let sum = g.add(y1, y2).unwrap();
    let avg = g.scale(sum, 0.5).unwrap();
    assert!(g.value(avg).max_abs_diff(g.value(ym)) < 1e-5);
    assert!(EnsembleCoefficients::new(0.5, 0.4, 0.4).is_err());
}

#[test]
fn degenerate_model_ignores_other_decoders() {
    let cfg = CectConfig::tiny().with_coefficients(EnsembleCoefficients::only(Branch::Sd1));
    let model = Cect::new(cfg.clone(), 5).unwrap();
    let x = image(2, 64, 7);
    let base = model.logits(&x).unwrap();
    // Scrambling the SD2/SD3 decoders must not matter when their
    // coefficients are zero.
    let mut params = model.params().clone();
    for (name, t) in params.iter_mut() {
        if name.starts_with("tdb.sd2")
            || name.starts_with("tdb.sd3")
            || name.starts_with("ceb.se2")
            || name.starts_with("ceb.se3")
        {
            *t = Tensor::full(t.shape(), 7.0);
        }
    }
    let scrambled = Cect::from_params(cfg, params).unwrap();
    assert_eq!(scrambled.logits(&x).unwrap(), base);
}

#[test]
fn perturbation_reaches_every_branch_and_the_logits() {
    let cfg = CectConfig::tiny();
    let model = Cect::new(cfg.clone(), 8).unwrap();
    let x = image(1, 64, 9);
    let noise = Tensor::normal(x.shape(), 0.05, &mut Rng::new(10));
    let y = Tensor::new(
        x.shape().to_vec(),
        x.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect(),
    )
    .unwrap();
    let maps = |img: &Tensor| {
        let mut g = Graph::new();
        let p = model.params().bind(&mut g, false);
        let v = g.input(img.clone());
        let enc = ceb_forward(&mut g, &p, &cfg, v).unwrap();
        enc.map(|fm| g.value(fm.unwrap().var).clone())
    };
    let (a, b) = (maps(&x), maps(&y));
    for i in 0..3 {
        assert!(a[i].is_finite());
        assert!(a[i].max_abs_diff(&b[i]) > 1e-6, "branch {i} did not respond");
    }
    assert!(model.logits(&x).unwrap().max_abs_diff(&model.logits(&y).unwrap()) > 0.0);
}

#[test]
fn end_to_end_shapes_and_head() {
    let model = Cect::new(CectConfig::tiny(), 3).unwrap();
    let x = image(4, 64, 11);
    let inf = model.infer(&x).unwrap();
    assert_eq!(inf.logits.shape(), &[4, 2]);
    assert_eq!(inf.penultimate.shape(), &[4, 32]);
    let mut g = Graph::new();
    let pen = g.input(inf.penultimate.clone());
    let w = g.input(model.params().get("head.weight").unwrap().clone());
    let b = g.input(model.params().get("head.bias").unwrap().clone());
    let logits = g.linear(pen, w, Some(b)).unwrap();
    assert_eq!(g.value(logits), &inf.logits);
    // Chunked inference agrees with one graph over the whole batch.
    let whole = cect::model::cect_forward(&x, model.config(), model.params()).unwrap();
    assert_eq!(whole, inf.logits);
}

#[test]
fn horizontal_flip_changes_the_embedding() {
    let model = Cect::new(CectConfig::tiny(), 12).unwrap();
    let x = image(1, 64, 13);
    let a = model.extract_penultimate(&x).unwrap();
    let b = model.extract_penultimate(&hflip(&x)).unwrap();
    assert!(a.max_abs_diff(&b) > 1e-6);
}

#[test]
fn ablation_architectures_run() {
    let mut enc = CectConfig::tiny();
    enc.architecture = Architecture::EncoderOnly(Branch::Sd2);
    let m = Cect::new(enc, 0).unwrap();
    let inf = m.infer(&image(2, 64, 1)).unwrap();
    assert_eq!(inf.penultimate.shape(), &[2, 12]);
    let mut tr = CectConfig::tiny();
    tr.architecture = Architecture::TransformerOnly;
    let m = Cect::new(tr, 0).unwrap();
    assert!(m
        .params()
        .names()
        .all(|n| !n.starts_with("ceb") && !n.starts_with("tdb")));
    assert_eq!(m.logits(&image(2, 64, 1)).unwrap().shape(), &[2, 2]);
}

#[test]
fn checkpoint_round_trip_and_digest() {
    let cfg = CectConfig::tiny();
    let model = Cect::new(cfg.clone(), 14).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&path, &cfg, model.params().iter().map(|(k, v)| (k.as_str(), v))).unwrap();
    let ck = checkpoint::load(&path, &cfg).unwrap();
    let mut restored = ParamStore::new();
    for (k, v) in ck.records {
        restored.insert(k, v);
    }
    assert_eq!(&restored, model.params());
    let other = cfg.with_coefficients(EnsembleCoefficients::only(Branch::Sd3));
    assert!(checkpoint::load(&path, &other).is_err());
}

#[test]
fn micro_model_gradients() {
    let report = model_grad_check(&CectConfig::micro(), 1, &ModelGradCheckConfig::default()).unwrap();
    assert_eq!(report.draws.len(), 3);
    assert!(report.passed, "{report:?}");
}
