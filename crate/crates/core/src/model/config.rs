use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nn::Activation;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of the content feature `h_t`.
    pub content_feature_dim: usize,
    /// Width of the motion feature `h'_t`.
    pub motion_feature_dim: usize,
    /// Width of each Gaussian latent.
    pub latent_dim: usize,
    /// Width of the predictor output `g_t`.
    pub predictor_feature_dim: usize,
    pub recurrent_width: usize,
    pub predictor_layers: usize,
    pub num_classes: usize,
    pub channels: usize,
    pub frame_size: usize,
    /// Content encoder block widths; the decoder mirrors them.
    pub content_channels: Vec<usize>,
    /// Motion encoder block widths (one conv per block).
    pub motion_channels: Vec<usize>,
    pub convs_per_block: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            content_feature_dim: 128,
            motion_feature_dim: 128,
            latent_dim: 16,
            predictor_feature_dim: 128,
            recurrent_width: 256,
            predictor_layers: 2,
            num_classes: 4,
            channels: 3,
            frame_size: 64,
            content_channels: vec![32, 64, 128, 256],
            motion_channels: vec![4, 8, 16, 32],
            convs_per_block: 2,
            activation: Activation::Silu,
        }
    }
}

impl ModelConfig {
    /// 8x8 frames, two latent dims, a handful of units per layer.
    pub fn tiny() -> Self {
        ModelConfig {
            content_feature_dim: 6,
            motion_feature_dim: 5,
            latent_dim: 2,
            predictor_feature_dim: 6,
            recurrent_width: 5,
            predictor_layers: 2,
            num_classes: 4,
            channels: 1,
            frame_size: 8,
            content_channels: vec![2, 3],
            motion_channels: vec![1, 2],
            convs_per_block: 1,
            activation: Activation::Silu,
        }
    }

    /// Reduced widths at the default resolution, for CPU-scale experiments.
    pub fn small() -> Self {
        ModelConfig {
            content_feature_dim: 128,
            motion_feature_dim: 128,
            latent_dim: 16,
            predictor_feature_dim: 128,
            recurrent_width: 128,
            predictor_layers: 2,
            content_channels: vec![16, 32, 64, 128],
            motion_channels: vec![2, 4, 8, 16],
            convs_per_block: 1,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("content_feature_dim", self.content_feature_dim),
            ("motion_feature_dim", self.motion_feature_dim),
            ("latent_dim", self.latent_dim),
            ("predictor_feature_dim", self.predictor_feature_dim),
            ("recurrent_width", self.recurrent_width),
            ("predictor_layers", self.predictor_layers),
            ("num_classes", self.num_classes),
            ("channels", self.channels),
            ("frame_size", self.frame_size),
            ("convs_per_block", self.convs_per_block),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Argument(format!("model.{name} must be positive")));
            }
        }
        for (name, widths) in [
            ("content_channels", &self.content_channels),
            ("motion_channels", &self.motion_channels),
        ] {
            if widths.is_empty() || widths.contains(&0) {
                return Err(Error::Argument(format!(
                    "model.{name} must be a non-empty list of positive widths"
                )));
            }
            let scale = 1usize << widths.len();
            if !self.frame_size.is_multiple_of(scale) {
                return Err(Error::Argument(format!(
                    "frame_size {} is not divisible by 2^{} for model.{name}",
                    self.frame_size,
                    widths.len()
                )));
            }
        }
        Ok(())
    }

    /// Spatial size after the content encoder's last pooling.
    pub fn content_bottleneck(&self) -> usize {
        self.frame_size >> self.content_channels.len()
    }

    pub fn motion_bottleneck(&self) -> usize {
        self.frame_size >> self.motion_channels.len()
    }
}

/// Which parts of `[C, M, L]` a variant uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentMask {
    pub content: bool,
    pub motion: bool,
    pub label: bool,
}

impl LatentMask {
    /// Rejects masks without a real-valued part (label-only or empty).
    pub fn new(content: bool, motion: bool, label: bool) -> Result<Self> {
        if !content && !motion {
            return Err(Error::Argument(
                "a latent mask needs content or motion; label-only is not a variant".into(),
            ));
        }
        Ok(LatentMask {
            content,
            motion,
            label,
        })
    }

    /// `latent_dim * #real parts + num_classes * [label]`.
    pub fn width(&self, latent_dim: usize, num_classes: usize) -> usize {
        latent_dim * (self.content as usize + self.motion as usize)
            + if self.label { num_classes } else { 0 }
    }
}

/// The ablation variants, all sharing one architecture with parts masked out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "TPG_VAE")]
    TpgVae,
    #[serde(rename = "ML_VAE")]
    MlVae,
    #[serde(rename = "CL_VAE")]
    ClVae,
    #[serde(rename = "CM_VAE")]
    CmVae,
    #[serde(rename = "M_VAE")]
    MVae,
    #[serde(rename = "SVG_LP_STAR")]
    SvgLpStar,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::TpgVae,
        Variant::MlVae,
        Variant::ClVae,
        Variant::CmVae,
        Variant::MVae,
        Variant::SvgLpStar,
    ];

    pub fn mask(self) -> LatentMask {
        let (content, motion, label) = match self {
            Variant::TpgVae => (true, true, true),
            Variant::MlVae => (false, true, true),
            Variant::ClVae => (true, false, true),
            Variant::CmVae => (true, true, false),
            Variant::MVae => (false, true, false),
            Variant::SvgLpStar => (true, false, false),
        };
        LatentMask {
            content,
            motion,
            label,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::TpgVae => "TPG_VAE",
            Variant::MlVae => "ML_VAE",
            Variant::ClVae => "CL_VAE",
            Variant::CmVae => "CM_VAE",
            Variant::MVae => "M_VAE",
            Variant::SvgLpStar => "SVG_LP_STAR",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Accepts the canonical names case-insensitively, with `-` or `_`.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        let norm = match norm.as_str() {
            "SVG_LP*" | "SVG_LP" => "SVG_LP_STAR".to_string(),
            _ => norm,
        };
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::Argument(format!("unknown variant {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_law() {
        let w = |v: Variant| v.mask().width(16, 4);
        assert_eq!(w(Variant::TpgVae), 36);
        assert_eq!(w(Variant::MlVae), 20);
        assert_eq!(w(Variant::ClVae), 20);
        assert_eq!(w(Variant::CmVae), 32);
        assert_eq!(w(Variant::MVae), 16);
        assert_eq!(w(Variant::SvgLpStar), 16);
    }

    #[test]
    fn label_only_rejected() {
        assert!(LatentMask::new(false, false, true).is_err());
        assert!(LatentMask::new(false, false, false).is_err());
        assert!(LatentMask::new(false, true, true).is_ok());
        for v in Variant::ALL {
            let m = v.mask();
            assert!(LatentMask::new(m.content, m.motion, m.label).is_ok());
        }
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.name()));
        }
        assert_eq!("tpg-vae".parse::<Variant>().unwrap(), Variant::TpgVae);
        assert_eq!("SVG-LP*".parse::<Variant>().unwrap(), Variant::SvgLpStar);
        assert!("LABEL_VAE".parse::<Variant>().is_err());
    }

    #[test]
    fn presets_validate() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
        ModelConfig::small().validate().unwrap();
        let bad = ModelConfig {
            frame_size: 36,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        let zero = ModelConfig {
            latent_dim: 0,
            ..ModelConfig::default()
        };
        assert!(zero.validate().is_err());
    }
}
