use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CectError, Result};

/// Convex weights of the three decoder branches in the fused feature map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCoefficients {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl EnsembleCoefficients {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CectError::Validation(format!(
                    "coefficient {name} = {v} outside [0, 1]"
                )));
            }
        }
        let sum = alpha + beta + gamma;
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(CectError::Validation(format!(
                "coefficients ({alpha}, {beta}, {gamma}) sum to {sum}, expected 1"
            )));
        }
        Ok(EnsembleCoefficients { alpha, beta, gamma })
    }

    /// `(1/3, 1/3, 1/3)`.
    pub fn equal() -> Self {
        let third = 1.0 / 3.0;
        EnsembleCoefficients {
            alpha: third,
            beta: third,
            gamma: third,
        }
    }

    pub fn only(branch: Branch) -> Self {
        let mut c = [0.0; 3];
        c[branch.index()] = 1.0;
        EnsembleCoefficients {
            alpha: c[0],
            beta: c[1],
            gamma: c[2],
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn get(&self, branch: Branch) -> f64 {
        self.as_array()[branch.index()]
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }
}

impl std::fmt::Display for EnsembleCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{}", self.alpha, self.beta, self.gamma)
    }
}

/// Local-feature branch: sub-encoder `SE_i` paired with sub-decoder `SD_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    Sd1,
    Sd2,
    Sd3,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Sd1, Branch::Sd2, Branch::Sd3];

    pub fn index(self) -> usize {
        match self {
            Branch::Sd1 => 0,
            Branch::Sd2 => 1,
            Branch::Sd3 => 2,
        }
    }

    /// Number of stride-2 encoder stages.
    pub fn encoder_stages(self) -> usize {
        3 - self.index()
    }

    pub fn scale(self) -> ScaleTag {
        match self {
            Branch::Sd1 => ScaleTag::S28,
            Branch::Sd2 => ScaleTag::S56,
            Branch::Sd3 => ScaleTag::S112,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Sd1 => "sd1",
            Branch::Sd2 => "sd2",
            Branch::Sd3 => "sd3",
        }
    }
}

/// Spatial scale of a feature map, named by its extent at 224×224 input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScaleTag {
    S28,
    S56,
    S112,
    S224,
}

impl ScaleTag {
    pub const ALL: [ScaleTag; 4] = [ScaleTag::S28, ScaleTag::S56, ScaleTag::S112, ScaleTag::S224];

    pub fn divisor(self) -> usize {
        match self {
            ScaleTag::S28 => 8,
            ScaleTag::S56 => 4,
            ScaleTag::S112 => 2,
            ScaleTag::S224 => 1,
        }
    }

    pub fn nominal(self) -> usize {
        224 / self.divisor()
    }

    pub fn extent(self, resolution: usize) -> usize {
        resolution / self.divisor()
    }
}

/// Which blocks make up the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Encoders, decoders, fusion and transformer.
    Full,
    /// One sub-encoder with a pooled linear head.
    EncoderOnly(Branch),
    /// The transformer applied to the raw image.
    TransformerOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcbConfig {
    pub patch_size: usize,
    pub window: usize,
    /// Block pairs (W-MSA + SW-MSA) per stage.
    pub depths: [usize; 4],
    pub dims: [usize; 4],
    pub heads: [usize; 4],
    pub mlp_ratio: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CectConfig {
    pub input_resolution: usize,
    pub input_channels: usize,
    pub encoder_widths: [usize; 3],
    pub decoder_channels: usize,
    pub tcb: TcbConfig,
    pub coefficients: EnsembleCoefficients,
    pub enabled_branches: [bool; 3],
    pub architecture: Architecture,
}

impl CectConfig {
    /// Full-size network at 224×224.
    pub fn reference() -> Self {
        CectConfig {
            input_resolution: 224,
            input_channels: 3,
            encoder_widths: [64, 48, 32],
            decoder_channels: 3,
            tcb: TcbConfig {
                patch_size: 4,
                window: 7,
                depths: [2, 2, 2, 2],
                dims: [96, 192, 384, 768],
                heads: [3, 6, 12, 24],
                mlp_ratio: 4,
            },
            coefficients: EnsembleCoefficients::equal(),
            enabled_branches: [true; 3],
            architecture: Architecture::Full,
        }
    }

    /// Desk-scale network at 64×64.
    pub fn tiny() -> Self {
        CectConfig {
            input_resolution: 64,
            input_channels: 3,
            encoder_widths: [16, 12, 8],
            decoder_channels: 3,
            tcb: TcbConfig {
                patch_size: 2,
                window: 4,
                depths: [1, 1, 1, 1],
                dims: [4, 8, 16, 32],
                heads: [1, 1, 2, 4],
                mlp_ratio: 2,
            },
            ..Self::reference()
        }
    }

    /// Smallest network used for finite-difference checks (32×32).
    pub fn micro() -> Self {
        CectConfig {
            input_resolution: 32,
            input_channels: 3,
            encoder_widths: [4, 4, 4],
            decoder_channels: 3,
            tcb: TcbConfig {
                patch_size: 2,
                window: 2,
                depths: [1, 1, 1, 1],
                dims: [2, 4, 8, 16],
                heads: [1, 1, 2, 2],
                mlp_ratio: 2,
            },
            ..Self::reference()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "reference" => Some(Self::reference()),
            "tiny" => Some(Self::tiny()),
            "micro" => Some(Self::micro()),
            _ => None,
        }
    }

    pub fn with_coefficients(mut self, c: EnsembleCoefficients) -> Self {
        self.coefficients = c;
        self
    }

    /// Branches that contribute to the fused map.
    pub fn active_branches(&self) -> Vec<Branch> {
        match self.architecture {
            Architecture::Full => Branch::ALL
                .into_iter()
                .filter(|b| self.enabled_branches[b.index()] && self.coefficients.get(*b) > 0.0)
                .collect(),
            Architecture::EncoderOnly(b) => vec![b],
            Architecture::TransformerOnly => vec![],
        }
    }

    pub fn uses_transformer(&self) -> bool {
        !matches!(self.architecture, Architecture::EncoderOnly(_))
    }

    pub fn tcb_in_channels(&self) -> usize {
        match self.architecture {
            Architecture::TransformerOnly => self.input_channels,
            _ => self.decoder_channels,
        }
    }

    /// Token grid side per transformer stage.
    pub fn token_grids(&self) -> [usize; 4] {
        let g = self.input_resolution / self.tcb.patch_size.max(1);
        [g, g / 2, g / 4, g / 8]
    }

    /// Width of the representation feeding the prediction head.
    pub fn penultimate_width(&self) -> usize {
        match self.architecture {
            Architecture::EncoderOnly(b) => self.encoder_widths[b.index()],
            _ => self.tcb.dims[3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.input_resolution;
        if r == 0 || r % 32 != 0 {
            return Err(CectError::Config(format!(
                "input_resolution {r} must be a positive multiple of 32"
            )));
        }
        if self.input_channels == 0 || self.decoder_channels == 0 || self.encoder_widths.contains(&0) {
            return Err(CectError::Config("channel counts must be positive".into()));
        }
        for b in Branch::ALL {
            if !self.enabled_branches[b.index()] && self.coefficients.get(b) != 0.0 {
                return Err(CectError::Config(format!(
                    "branch {} is disabled but has coefficient {}",
                    b.name(),
                    self.coefficients.get(b)
                )));
            }
        }
        if matches!(self.architecture, Architecture::Full) && self.active_branches().is_empty() {
            return Err(CectError::Config("no active decoder branch".into()));
        }
        if self.uses_transformer() {
            self.validate_tcb()?;
        }
        Ok(())
    }

    fn validate_tcb(&self) -> Result<()> {
        let t = &self.tcb;
        if t.patch_size == 0 || t.window == 0 || t.mlp_ratio == 0 {
            return Err(CectError::Config(
                "patch_size, window and mlp_ratio must be positive".into(),
            ));
        }
        if self.input_resolution % t.patch_size != 0 {
            return Err(CectError::Config(format!(
                "input_resolution {} not divisible by patch_size {}",
                self.input_resolution, t.patch_size
            )));
        }
        for (stage, grid) in self.token_grids().into_iter().enumerate() {
            if grid == 0 || grid % t.window != 0 {
                return Err(CectError::Config(format!(
                    "stage {stage}: token grid {grid} not divisible by window {}",
                    t.window
                )));
            }
            if stage < 3 && grid % 2 != 0 {
                return Err(CectError::Config(format!(
                    "stage {stage}: token grid {grid} cannot be merged 2x2"
                )));
            }
        }
        for i in 0..4 {
            if t.dims[i] == 0 || t.heads[i] == 0 || t.dims[i] % t.heads[i] != 0 {
                return Err(CectError::Config(format!(
                    "stage {i}: {} heads do not divide dim {}",
                    t.heads[i], t.dims[i]
                )));
            }
            if i > 0 && t.dims[i] != 2 * t.dims[i - 1] {
                return Err(CectError::Config(format!(
                    "stage {i}: dim {} must double the previous {}",
                    t.dims[i],
                    t.dims[i - 1]
                )));
            }
        }
        Ok(())
    }

    /// Stable textual form of every shape- or semantics-affecting field.
    pub fn canonical(&self) -> String {
        let t = &self.tcb;
        let arch = match self.architecture {
            Architecture::Full => "full".to_string(),
            Architecture::EncoderOnly(b) => format!("encoder-only:{}", b.name()),
            Architecture::TransformerOnly => "transformer-only".to_string(),
        };
        format!(
            "resolution={};channels={};encoder={:?};decoder={};patch={};window={};depths={:?};dims={:?};heads={:?};mlp={};coefficients={:?};branches={:?};arch={}",
            self.input_resolution,
            self.input_channels,
            self.encoder_widths,
            self.decoder_channels,
            t.patch_size,
            t.window,
            t.depths,
            t.dims,
            t.heads,
            t.mlp_ratio,
            self.coefficients.as_array(),
            self.enabled_branches,
            arch
        )
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_constraints() {
        assert!(EnsembleCoefficients::new(0.8, 0.1, 0.1).is_ok());
        let third = 1.0 / 3.0;
        assert!(EnsembleCoefficients::new(third, third, third).is_ok());
        let err = EnsembleCoefficients::new(0.5, 0.4, 0.4).unwrap_err();
        assert!(err.to_string().contains("1.3"), "{err}");
        assert!(EnsembleCoefficients::new(1.2, -0.1, -0.1).is_err());
        assert!(EnsembleCoefficients::new(1.0, 0.0, 1e-8).is_err());
        assert!(EnsembleCoefficients::new(1.0, 0.0, 1e-10).is_ok());
    }

    #[test]
    fn presets_validate() {
        for cfg in [CectConfig::reference(), CectConfig::tiny(), CectConfig::micro()] {
            cfg.validate().unwrap();
        }
        assert_eq!(CectConfig::reference().token_grids(), [56, 28, 14, 7]);
    }

    #[test]
    fn bad_window_names_stage() {
        let mut cfg = CectConfig::tiny();
        cfg.tcb.patch_size = 4;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("stage 3"), "{err}");
    }

    #[test]
    fn disabled_branch_needs_zero_coefficient() {
        let mut cfg = CectConfig::tiny();
        cfg.enabled_branches = [false, true, true];
        assert!(cfg.validate().is_err());
        cfg.coefficients = EnsembleCoefficients::new(0.0, 0.5, 0.5).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.active_branches(), vec![Branch::Sd2, Branch::Sd3]);
    }

    #[test]
    fn digest_tracks_coefficients() {
        let a = CectConfig::tiny();
        let b = a.clone().with_coefficients(EnsembleCoefficients::only(Branch::Sd1));
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), CectConfig::tiny().digest());
    }
}
