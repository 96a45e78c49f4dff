use std::collections::BTreeMap;

use super::config::{Architecture, Branch, CectConfig};
use crate::error::{CectError, Result};
use crate::rng::Rng;
use crate::tensor::{Graph, Real, Tensor, Var};

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T: Real = f32> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Registers every tensor on `graph`, as trainable leaves or constants.
    pub fn bind(&self, graph: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| {
                let var = if trainable {
                    graph.param(v.clone())
                } else {
                    graph.input(v.clone())
                };
                (k.clone(), var)
            })
            .collect();
        Bound { vars }
    }

    /// Same names and shapes as `other`.
    pub fn check_layout(&self, other: &ParamStore<T>) -> Result<()> {
        for (name, t) in &other.tensors {
            match self.tensors.get(name) {
                None => return Err(CectError::MissingParameter(name.clone())),
                Some(mine) if mine.shape() != t.shape() => {
                    return Err(CectError::ShapeMismatch {
                        op: "load parameters",
                        left: mine.shape().to_vec(),
                        right: t.shape().to_vec(),
                    })
                }
                _ => {}
            }
        }
        if let Some(extra) = self.tensors.keys().find(|k| !other.tensors.contains_key(*k)) {
            return Err(CectError::Checkpoint(format!("unexpected parameter `{extra}`")));
        }
        Ok(())
    }
}

/// Parameter names resolved to graph variables for one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn from_vars(vars: BTreeMap<String, Var>) -> Self {
        Bound { vars }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| CectError::MissingParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

#[derive(Clone, Copy, Debug)]
enum Init {
    /// Uniform in `±gain·sqrt(3 / fan_in)`.
    Kaiming {
        fan_in: usize,
        gain: f64,
    },
    Zeros,
    Ones,
}

struct Spec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

#[derive(Default)]
struct Specs(Vec<Spec>);

const RELU_GAIN: f64 = std::f64::consts::SQRT_2;
/// Prediction heads start small so untrained logits sit near zero.
const HEAD_GAIN: f64 = 0.1;

impl Specs {
    fn add(&mut self, name: String, shape: &[usize], init: Init) {
        self.0.push(Spec {
            name,
            shape: shape.to_vec(),
            init,
        });
    }

    fn conv(&mut self, prefix: &str, out: usize, inp: usize, k: usize, gain: f64) {
        self.add(
            format!("{prefix}.weight"),
            &[out, inp, k, k],
            Init::Kaiming {
                fan_in: inp * k * k,
                gain,
            },
        );
        self.add(format!("{prefix}.bias"), &[out], Init::Zeros);
    }

    fn tconv(&mut self, prefix: &str, inp: usize, out: usize, gain: f64) {
        // 4×4 kernel at stride 2: each output pixel sees inp·(4/2)² inputs.
        self.add(
            format!("{prefix}.weight"),
            &[inp, out, 4, 4],
            Init::Kaiming { fan_in: inp * 4, gain },
        );
        self.add(format!("{prefix}.bias"), &[out], Init::Zeros);
    }

    fn linear(&mut self, prefix: &str, inp: usize, out: usize, bias: bool, gain: f64) {
        self.add(
            format!("{prefix}.weight"),
            &[inp, out],
            Init::Kaiming { fan_in: inp, gain },
        );
        if bias {
            self.add(format!("{prefix}.bias"), &[out], Init::Zeros);
        }
    }

    fn norm(&mut self, prefix: &str, d: usize) {
        self.add(format!("{prefix}.gain"), &[d], Init::Ones);
        self.add(format!("{prefix}.bias"), &[d], Init::Zeros);
    }
}

pub(crate) fn encoder_prefix(b: Branch) -> String {
    format!("ceb.se{}", b.index() + 1)
}

fn declare(cfg: &CectConfig) -> Specs {
    let mut s = Specs::default();
    for b in cfg.active_branches() {
        let width = cfg.encoder_widths[b.index()];
        let pre = encoder_prefix(b);
        for stage in 0..b.encoder_stages() {
            let inp = if stage == 0 { cfg.input_channels } else { width };
            s.conv(&format!("{pre}.s{stage}.conv1"), width, inp, 3, RELU_GAIN);
            s.conv(&format!("{pre}.s{stage}.conv2"), width, width, 3, RELU_GAIN);
        }
        if let Architecture::Full = cfg.architecture {
            let dec = format!("tdb.{}", b.name());
            match b {
                Branch::Sd1 | Branch::Sd2 => {
                    s.tconv(&format!("{dec}.tconv1"), width, width, RELU_GAIN);
                    s.tconv(&format!("{dec}.tconv2"), width, cfg.decoder_channels, 1.0);
                }
                Branch::Sd3 => s.tconv(&format!("{dec}.tconv1"), width, cfg.decoder_channels, 1.0),
            }
        }
    }
    if cfg.uses_transformer() {
        let t = &cfg.tcb;
        let p = t.patch_size;
        s.conv("tcb.patch", t.dims[0], cfg.tcb_in_channels(), p, 1.0);
        s.norm("tcb.patch_norm", t.dims[0]);
        let w = t.window;
        for stage in 0..4 {
            let d = t.dims[stage];
            for block in 0..2 * t.depths[stage] {
                let pre = format!("tcb.s{stage}.b{block}");
                s.norm(&format!("{pre}.norm1"), d);
                s.linear(&format!("{pre}.attn.qkv"), d, 3 * d, true, 1.0);
                s.linear(&format!("{pre}.attn.proj"), d, d, true, 1.0);
                s.add(
                    format!("{pre}.attn.rel_bias"),
                    &[(2 * w - 1) * (2 * w - 1), t.heads[stage]],
                    Init::Zeros,
                );
                s.norm(&format!("{pre}.norm2"), d);
                s.linear(&format!("{pre}.mlp.fc1"), d, t.mlp_ratio * d, true, RELU_GAIN);
                s.linear(&format!("{pre}.mlp.fc2"), t.mlp_ratio * d, d, true, 1.0);
            }
            if stage < 3 {
                s.norm(&format!("tcb.s{stage}.merge.norm"), 4 * d);
                s.linear(&format!("tcb.s{stage}.merge.reduction"), 4 * d, 2 * d, false, 1.0);
            }
        }
        s.norm("tcb.norm", t.dims[3]);
    }
    s.linear("head", cfg.penultimate_width(), 2, true, HEAD_GAIN);
    s
}

/// Fresh parameters for `cfg`. Each tensor draws from a stream keyed by its
/// own name, so a parameter's initial value does not depend on which other
/// blocks exist.
pub fn init_params(cfg: &CectConfig, seed: u64) -> ParamStore<f32> {
    let root = Rng::new(seed).fork("init");
    let mut store = ParamStore::new();
    for spec in declare(cfg).0 {
        let t = match spec.init {
            Init::Zeros => Tensor::zeros(&spec.shape),
            Init::Ones => Tensor::full(&spec.shape, 1.0),
            Init::Kaiming { fan_in, gain } => {
                let bound = gain * (3.0 / fan_in as f64).sqrt();
                Tensor::uniform(&spec.shape, bound, &mut root.fork(&spec.name))
            }
        };
        store.insert(spec.name, t);
    }
    store
}
