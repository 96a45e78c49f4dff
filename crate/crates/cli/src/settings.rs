//! Flat `key = value` configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! line    := blank | comment | entry
//! comment := '#' any*
//! entry   := key '=' value
//! key     := segment ('.' segment)*        e.g. train.plateau.patience
//! value   := any* (surrounding whitespace trimmed; lists are comma separated)
//! ```
//!
//! Keys are checked against a fixed schema; an unknown key, a repeated key
//! or a value of the wrong type is an error that names the key and the
//! expected type. Precedence, lowest first: preset defaults, config file,
//! `--set` overrides, `--seed`.

use std::path::{Path, PathBuf};

use cect::data::{AugmentConfig, SplitSpec};
use cect::eval::SweepSpec;
use cect::model::{CectConfig, EnsembleCoefficients, ModelGradCheckConfig};
use cect::report::TsneConfig;
use cect::train::TrainConfig;
use cect::{CectError, Result};

pub const PRESETS: [&str; 3] = ["reference", "tiny", "micro"];

/// Everything a command needs, after presets, file and overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub preset: String,
    pub seed: u64,
    pub model: CectConfig,
    /// Training schedule; `seed` and `augment` are filled in by [`Settings::train_config`].
    pub train: TrainConfig,
    pub augment_enabled: bool,
    pub augment: AugmentConfig,
    /// Image directory or manifest CSV; `None` means a generated synthetic set.
    pub data_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub split: Vec<f64>,
    /// Synthetic images per class.
    pub synth_n: usize,
    pub sweep: SweepSpec,
    pub tsne: TsneConfig,
    pub gradcheck: ModelGradCheckConfig,
}

impl Settings {
    pub fn preset(name: &str) -> Result<Self> {
        let model = CectConfig::preset(name).ok_or_else(|| {
            CectError::Config(format!(
                "unknown preset `{name}` (expected one of {})",
                PRESETS.join(", ")
            ))
        })?;
        let train = if name == "reference" {
            TrainConfig::default()
        } else {
            TrainConfig::tiny()
        };
        Ok(Settings {
            preset: name.to_string(),
            seed: 0,
            model,
            augment_enabled: train.augment.is_some(),
            augment: train.augment.clone().unwrap_or_default(),
            train,
            data_path: None,
            test_path: None,
            split: vec![0.8, 0.1, 0.1],
            synth_n: 16,
            sweep: SweepSpec::default(),
            tsne: TsneConfig::default(),
            gradcheck: ModelGradCheckConfig::default(),
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            augment: self.augment_enabled.then(|| self.augment.clone()),
            ..self.train.clone()
        }
    }

    pub fn tsne_config(&self) -> TsneConfig {
        TsneConfig {
            seed: self.seed,
            ..self.tsne.clone()
        }
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        match (&self.test_path, self.split.as_slice()) {
            (None, &[a, b, c]) => SplitSpec::three_way(a, b, c, self.seed),
            (Some(_), &[a, b]) => SplitSpec::two_way(a, b, self.seed),
            (None, _) => Err(CectError::Config(
                "key `data.split`: expected three ratios (train,val,test)".into(),
            )),
            (Some(_), _) => Err(CectError::Config(
                "key `data.split`: expected two ratios (train,val) when data.test_path is set".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train_config().validate()?;
        self.sweep.validate()?;
        self.tsne.validate()?;
        self.split_spec()?;
        if self.synth_n == 0 {
            return Err(CectError::Config("key `synth.n`: expected a positive integer".into()));
        }
        let g = &self.gradcheck;
        if g.draws == 0 || g.batch == 0 || !(g.eps > 0.0) || !(g.tol > 0.0) {
            return Err(CectError::Config(
                "gradcheck draws, batch, eps and tol must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Every key with its current value, in schema order. Loading this text
    /// reproduces the settings exactly.
    pub fn snapshot(&self) -> String {
        let mut s = String::from("# resolved configuration\n");
        s.push_str(&format!("preset = {}\n", self.preset));
        for k in KEYS {
            s.push_str(&format!("{} = {}\n", k.name, (k.get)(self)));
        }
        s
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = KEYS
            .iter()
            .find(|k| k.name == key)
            .ok_or_else(|| CectError::Config(format!("unknown key `{key}`")))?;
        (k.set)(self, value.trim())
            .map_err(|()| CectError::Config(format!("key `{key}`: expected {}, got `{}`", k.expected, value.trim())))
    }
}

struct Key {
    name: &'static str,
    expected: &'static str,
    get: fn(&Settings) -> String,
    set: fn(&mut Settings, &str) -> std::result::Result<(), ()>,
}

type Parsed<T> = std::result::Result<T, ()>;

fn int(v: &str) -> Parsed<usize> {
    v.parse().map_err(drop)
}

fn float(v: &str) -> Parsed<f64> {
    v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or(())
}

fn boolean(v: &str) -> Parsed<bool> {
    match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(()),
    }
}

fn list<T, const N: usize>(v: &str, item: fn(&str) -> Parsed<T>) -> Parsed<[T; N]> {
    let items = v.split(',').map(|s| item(s.trim())).collect::<Parsed<Vec<T>>>()?;
    items.try_into().map_err(drop)
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn coefficients(v: &str) -> Parsed<EnsembleCoefficients> {
    let [a, b, c] = list::<f64, 3>(v, float)?;
    EnsembleCoefficients::new(a, b, c).map_err(drop)
}

fn show_coefficients(c: &EnsembleCoefficients) -> String {
    join(&c.as_array())
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_deref()
        .map(Path::display)
        .map(|d| d.to_string())
        .unwrap_or_default()
}

const KEYS: &[Key] = &[
    Key {
        name: "seed",
        expected: "an unsigned integer",
        get: |s| s.seed.to_string(),
        set: |s, v| {
            s.seed = v.parse().map_err(drop)?;
            Ok(())
        },
    },
    Key {
        name: "coefficients",
        expected: "three ratios in [0,1] summing to 1",
        get: |s| show_coefficients(&s.model.coefficients),
        set: |s, v| {
            s.model.coefficients = coefficients(v)?;
            Ok(())
        },
    },
    Key {
        name: "model.resolution",
        expected: "a positive integer",
        get: |s| s.model.input_resolution.to_string(),
        set: |s, v| {
            s.model.input_resolution = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "model.encoder_widths",
        expected: "three integers",
        get: |s| join(&s.model.encoder_widths),
        set: |s, v| {
            s.model.encoder_widths = list(v, int)?;
            Ok(())
        },
    },
    Key {
        name: "model.decoder_channels",
        expected: "a positive integer",
        get: |s| s.model.decoder_channels.to_string(),
        set: |s, v| {
            s.model.decoder_channels = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "model.branches",
        expected: "three booleans",
        get: |s| join(&s.model.enabled_branches),
        set: |s, v| {
            s.model.enabled_branches = list(v, boolean)?;
            Ok(())
        },
    },
    Key {
        name: "model.patch_size",
        expected: "a positive integer",
        get: |s| s.model.tcb.patch_size.to_string(),
        set: |s, v| {
            s.model.tcb.patch_size = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "model.window",
        expected: "a positive integer",
        get: |s| s.model.tcb.window.to_string(),
        set: |s, v| {
            s.model.tcb.window = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "model.depths",
        expected: "four integers",
        get: |s| join(&s.model.tcb.depths),
        set: |s, v| {
            s.model.tcb.depths = list(v, int)?;
            Ok(())
        },
    },
    Key {
        name: "model.dims",
        expected: "four integers",
        get: |s| join(&s.model.tcb.dims),
        set: |s, v| {
            s.model.tcb.dims = list(v, int)?;
            Ok(())
        },
    },
    Key {
        name: "model.heads",
        expected: "four integers",
        get: |s| join(&s.model.tcb.heads),
        set: |s, v| {
            s.model.tcb.heads = list(v, int)?;
            Ok(())
        },
    },
    Key {
        name: "model.mlp_ratio",
        expected: "a positive integer",
        get: |s| s.model.tcb.mlp_ratio.to_string(),
        set: |s, v| {
            s.model.tcb.mlp_ratio = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "train.epochs",
        expected: "a positive integer",
        get: |s| s.train.epochs.to_string(),
        set: |s, v| {
            s.train.epochs = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "train.lr",
        expected: "a positive number",
        get: |s| s.train.initial_lr.to_string(),
        set: |s, v| {
            s.train.initial_lr = float(v)?;
            Ok(())
        },
    },
    Key {
        name: "train.batch_size",
        expected: "a positive integer",
        get: |s| s.train.batch_size.to_string(),
        set: |s, v| {
            s.train.batch_size = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "train.max_steps",
        expected: "a positive integer or `none`",
        get: |s| s.train.max_steps.map_or("none".into(), |n| n.to_string()),
        set: |s, v| {
            s.train.max_steps = if v == "none" { None } else { Some(int(v)?) };
            Ok(())
        },
    },
    Key {
        name: "train.plateau.factor",
        expected: "a number in (0,1)",
        get: |s| s.train.plateau.factor.to_string(),
        set: |s, v| {
            s.train.plateau.factor = float(v)?;
            Ok(())
        },
    },
    Key {
        name: "train.plateau.patience",
        expected: "a non-negative integer",
        get: |s| s.train.plateau.patience.to_string(),
        set: |s, v| {
            s.train.plateau.patience = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "train.adam.beta1",
        expected: "a number in [0,1)",
        get: |s| s.train.adam.beta1.to_string(),
        set: |s, v| {
            s.train.adam.beta1 = float(v)?;
            Ok(())
        },
    },
    Key {
        name: "train.adam.beta2",
        expected: "a number in [0,1)",
        get: |s| s.train.adam.beta2.to_string(),
        set: |s, v| {
            s.train.adam.beta2 = float(v)?;
            Ok(())
        },
    },
    Key {
        name: "train.adam.eps",
        expected: "a positive number",
        get: |s| s.train.adam.eps.to_string(),
        set: |s, v| {
            s.train.adam.eps = float(v)?;
            Ok(())
        },
    },
    Key {
        name: "train.augment",
        expected: "a boolean",
        get: |s| s.augment_enabled.to_string(),
        set: |s, v| {
            s.augment_enabled = boolean(v)?;
            Ok(())
        },
    },
    Key {
        name: "augment.scale",
        expected: "two numbers (min,max)",
        get: |s| join(&[s.augment.scale.0, s.augment.scale.1]),
        set: |s, v| {
            s.augment.scale = list::<f64, 2>(v, float)?.into();
            Ok(())
        },
    },
    Key {
        name: "augment.ratio",
        expected: "two numbers (min,max)",
        get: |s| join(&[s.augment.ratio.0, s.augment.ratio.1]),
        set: |s, v| {
            s.augment.ratio = list::<f64, 2>(v, float)?.into();
            Ok(())
        },
    },
    Key {
        name: "augment.flip_p",
        expected: "a probability",
        get: |s| s.augment.flip_p.to_string(),
        set: |s, v| {
            s.augment.flip_p = float(v)?;
            Ok(())
        },
    },
    Key {
        name: "norm.mean",
        expected: "three numbers",
        get: |s| join(&s.train.normalization.mean),
        set: |s, v| {
            s.train.normalization.mean = list(v, |x| float(x).map(|f| f as f32))?;
            Ok(())
        },
    },
    Key {
        name: "norm.std",
        expected: "three numbers",
        get: |s| join(&s.train.normalization.std),
        set: |s, v| {
            s.train.normalization.std = list(v, |x| float(x).map(|f| f as f32))?;
            Ok(())
        },
    },
    Key {
        name: "data.path",
        expected: "a path (empty for synthetic data)",
        get: |s| show_path(&s.data_path),
        set: |s, v| {
            s.data_path = path(v);
            Ok(())
        },
    },
    Key {
        name: "data.test_path",
        expected: "a path (empty for none)",
        get: |s| show_path(&s.test_path),
        set: |s, v| {
            s.test_path = path(v);
            Ok(())
        },
    },
    Key {
        name: "data.split",
        expected: "two or three ratios",
        get: |s| join(&s.split),
        set: |s, v| {
            let r = v.split(',').map(|x| float(x.trim())).collect::<Parsed<Vec<f64>>>()?;
            if !(2..=3).contains(&r.len()) {
                return Err(());
            }
            s.split = r;
            Ok(())
        },
    },
    Key {
        name: "synth.n",
        expected: "a positive integer",
        get: |s| s.synth_n.to_string(),
        set: |s, v| {
            s.synth_n = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "sweep.groups",
        expected: "`;`-separated coefficient triples",
        get: |s| {
            s.sweep
                .groups
                .iter()
                .map(show_coefficients)
                .collect::<Vec<_>>()
                .join("; ")
        },
        set: |s, v| {
            s.sweep.groups = v.split(';').map(|g| coefficients(g.trim())).collect::<Parsed<_>>()?;
            Ok(())
        },
    },
    Key {
        name: "tsne.perplexity",
        expected: "a number >= 2",
        get: |s| s.tsne.perplexity.to_string(),
        set: |s, v| {
            s.tsne.perplexity = float(v)?;
            Ok(())
        },
    },
    Key {
        name: "tsne.iterations",
        expected: "a positive integer",
        get: |s| s.tsne.iterations.to_string(),
        set: |s, v| {
            s.tsne.iterations = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "tsne.learning_rate",
        expected: "a positive number",
        get: |s| s.tsne.learning_rate.to_string(),
        set: |s, v| {
            s.tsne.learning_rate = float(v)?;
            Ok(())
        },
    },
    Key {
        name: "tsne.exaggeration",
        expected: "a number >= 1",
        get: |s| s.tsne.exaggeration.to_string(),
        set: |s, v| {
            s.tsne.exaggeration = float(v)?;
            Ok(())
        },
    },
    Key {
        name: "tsne.exaggeration_iterations",
        expected: "a non-negative integer",
        get: |s| s.tsne.exaggeration_iterations.to_string(),
        set: |s, v| {
            s.tsne.exaggeration_iterations = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "gradcheck.draws",
        expected: "a positive integer",
        get: |s| s.gradcheck.draws.to_string(),
        set: |s, v| {
            s.gradcheck.draws = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "gradcheck.batch",
        expected: "a positive integer",
        get: |s| s.gradcheck.batch.to_string(),
        set: |s, v| {
            s.gradcheck.batch = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "gradcheck.coords_per_param",
        expected: "a non-negative integer",
        get: |s| s.gradcheck.coords_per_param.to_string(),
        set: |s, v| {
            s.gradcheck.coords_per_param = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "gradcheck.input_coords",
        expected: "a non-negative integer",
        get: |s| s.gradcheck.input_coords.to_string(),
        set: |s, v| {
            s.gradcheck.input_coords = int(v)?;
            Ok(())
        },
    },
    Key {
        name: "gradcheck.eps",
        expected: "a positive number",
        get: |s| s.gradcheck.eps.to_string(),
        set: |s, v| {
            s.gradcheck.eps = float(v)?;
            Ok(())
        },
    },
    Key {
        name: "gradcheck.tol",
        expected: "a positive number",
        get: |s| s.gradcheck.tol.to_string(),
        set: |s, v| {
            s.gradcheck.tol = float(v)?;
            Ok(())
        },
    },
    Key {
        name: "gradcheck.jitter",
        expected: "a non-negative number",
        get: |s| s.gradcheck.jitter.to_string(),
        set: |s, v| {
            s.gradcheck.jitter = float(v)?;
            Ok(())
        },
    },
];

/// Parses config text into `(line, key, value)` entries.
pub fn parse_entries(text: &str, origin: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CectError::Config(format!("{origin}:{}: expected `key = value`, got `{line}`", i + 1)))?;
        let key = k.trim();
        let well_formed = !key.is_empty()
            && key
                .split('.')
                .all(|seg| !seg.is_empty() && seg.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
        if !well_formed {
            return Err(CectError::Config(format!("{origin}:{}: malformed key `{key}`", i + 1)));
        }
        if let Some((first, ..)) = out.iter().find(|(_, k, _)| k == key) {
            return Err(CectError::Config(format!(
                "{origin}:{}: key `{key}` already set on line {first}",
                i + 1
            )));
        }
        out.push((i + 1, key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Command-line sources of configuration.
#[derive(Clone, Debug, Default)]
pub struct Sources {
    /// A config file path, or a preset name when no such file exists.
    pub config: Option<String>,
    pub preset: Option<String>,
    /// `key=value` strings.
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
}

pub fn load_settings(src: &Sources) -> Result<Settings> {
    let mut file_entries = Vec::new();
    let mut origin = String::new();
    let mut config_preset = None;
    if let Some(c) = &src.config {
        let p = Path::new(c);
        if p.is_file() {
            let text = std::fs::read_to_string(p).map_err(|e| CectError::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            origin = p.display().to_string();
            file_entries = parse_entries(&text, &origin)?;
        } else if PRESETS.contains(&c.as_str()) {
            config_preset = Some(c.clone());
        } else {
            return Err(CectError::Io {
                path: p.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "config file not found"),
            });
        }
    }
    let mut overrides = Vec::new();
    for o in &src.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CectError::Config(format!("--set expects key=value, got `{o}`")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let named = |entries: &[(String, String)]| {
        entries
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.clone())
    };
    let file_pairs: Vec<(String, String)> = file_entries.into_iter().map(|(_, k, v)| (k, v)).collect();
    let preset = src
        .preset
        .clone()
        .or_else(|| named(&overrides))
        .or(config_preset)
        .or_else(|| named(&file_pairs))
        .unwrap_or_else(|| "reference".to_string());
    let mut s = Settings::preset(&preset)?;
    for (k, v) in file_pairs.iter().chain(&overrides) {
        if k != "preset" {
            s.set(k, v).map_err(|e| match e {
                CectError::Config(m) if !origin.is_empty() && file_pairs.iter().any(|(fk, _)| fk == k) => {
                    CectError::Config(format!("{origin}: {m}"))
                }
                other => other,
            })?;
        }
    }
    if let Some(seed) = src.seed {
        s.seed = seed;
    }
    s.validate()?;
    Ok(s)
}
