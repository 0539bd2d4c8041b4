//! TOML run configuration. Every section is optional and every key defaults to
//! the toolkit's standard setting; unknown keys are rejected.

use std::path::{Path, PathBuf};

use ldvqe_core::codec::{DegradationProfile, GopConfig};
use ldvqe_core::dihedral::DihedralElement;
use ldvqe_core::enhance::{
    enhancer_external, enhancer_identity, enhancer_smooth, Enhancer, TrimAnalysisConfig,
};
use ldvqe_core::ensemble::{TtaConfig, TtaPlanes};
use ldvqe_core::fusion::{FusionConfig, HeuristicConfig};
use ldvqe_core::metrics::{LossWeights, PsnrOptions};
use ldvqe_core::process::CommandTemplate;
use ldvqe_core::vio::ReportFormat;
use ldvqe_core::ChromaLayout;
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub report: Option<ReportFormat>,
    pub report_path: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: u64,
    pub heuristic: HeuristicConfig,
    pub fusion: FusionSection,
    pub tta: TtaSection,
    pub trim: TrimAnalysisConfig,
    pub gop: GopConfig,
    pub degradation: DegradationProfile,
    pub encoder: Option<EncoderSection>,
    pub segment: SegmentSection,
    pub loss: LossWeights,
    pub psnr: PsnrOptions,
    pub enhancers: EnhancersSection,
    pub raw: RawSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub short_len: usize,
    pub intra_len: usize,
    pub head_len: usize,
}

impl Default for FusionSection {
    fn default() -> Self {
        let d = FusionConfig::default();
        FusionSection {
            short_len: d.short_len,
            intra_len: d.intra_len,
            head_len: d.head_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtaSection {
    /// Applies to `fuse`: run every variant under TTA.
    pub enabled: bool,
    pub elements: Vec<DihedralElement>,
    pub planes: TtaPlanes,
}

impl Default for TtaSection {
    fn default() -> Self {
        let d = TtaConfig::default();
        TtaSection {
            enabled: false,
            elements: d.elements,
            planes: d.planes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub command: String,
    #[serde(default)]
    pub extra_args: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    pub length: usize,
}

impl Default for SegmentSection {
    fn default() -> Self {
        SegmentSection { length: 30 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnhancerSpec {
    #[default]
    Identity,
    Smooth {
        radius: usize,
        strength: f64,
    },
    External {
        command: String,
        #[serde(default)]
        extra_args: String,
        #[serde(default = "yes")]
        deterministic: bool,
    },
}

fn yes() -> bool {
    true
}

impl EnhancerSpec {
    pub fn build(&self) -> Result<Box<dyn Enhancer>, CliError> {
        Ok(match self {
            EnhancerSpec::Identity => Box::new(enhancer_identity()),
            EnhancerSpec::Smooth { radius, strength } => {
                Box::new(enhancer_smooth(*radius, *strength).map_err(CliError::config)?)
            }
            EnhancerSpec::External {
                command,
                extra_args,
                deterministic,
            } => Box::new(
                enhancer_external(CommandTemplate::new(command.clone()).map_err(CliError::config)?)
                    .with_extra_args(extra_args.clone())
                    .with_deterministic(*deterministic),
            ),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhancersSection {
    pub main: EnhancerSpec,
    pub intra: EnhancerSpec,
}

/// Geometry for headerless `.yuv` inputs.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawSection {
    pub width: usize,
    pub height: usize,
    pub layout: ChromaLayout,
    pub fps_num: u32,
    pub fps_den: u32,
}

impl Default for RawSection {
    fn default() -> Self {
        RawSection {
            width: 0,
            height: 0,
            layout: ChromaLayout::Yuv420,
            fps_num: 25,
            fps_den: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::config_msg(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config_msg(e.to_string()))
    }

    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            short_len: self.fusion.short_len,
            intra_len: self.fusion.intra_len,
            head_len: self.fusion.head_len,
            heuristic: self.heuristic,
        }
    }

    pub fn tta_config(&self) -> TtaConfig {
        TtaConfig {
            elements: self.tta.elements.clone(),
            planes: self.tta.planes,
        }
    }

    /// Checks every section that has its own invariants.
    pub fn validate(&self) -> Result<(), CliError> {
        self.fusion_config().validate().map_err(CliError::config)?;
        self.tta_config().validate().map_err(CliError::config)?;
        self.trim.validate().map_err(CliError::config)?;
        self.gop.validate().map_err(CliError::config)?;
        self.degradation
            .validate(&self.gop)
            .map_err(CliError::config)?;
        self.loss.validate().map_err(CliError::config)?;
        if self.segment.length == 0 {
            return Err(CliError::config_msg("segment.length must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(CliError::config_msg("threads must be at least 1"));
        }
        Ok(())
    }
}
