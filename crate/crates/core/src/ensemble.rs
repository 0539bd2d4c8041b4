//! Test-time augmentation over the dihedral group.
//!
//! The enhancer runs once per selected element on the transformed clip; each
//! output is transformed back and the results are averaged sample by sample in
//! canonical element order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dihedral::{apply_dihedral, DihedralElement};
use crate::enhance::{enhance_checked, Enhancer};
use crate::error::{Error, Result};
use crate::frame::{Frame, Plane, VideoSequence};
use crate::numeric::tree_sum;

/// Which planes receive the ensemble average.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtaPlanes {
    #[default]
    All,
    /// Chroma is taken from the identity run.
    LumaOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtaConfig {
    pub elements: Vec<DihedralElement>,
    pub planes: TtaPlanes,
}

impl Default for TtaConfig {
    fn default() -> Self {
        TtaConfig {
            elements: DihedralElement::ALL.to_vec(),
            planes: TtaPlanes::All,
        }
    }
}

impl TtaConfig {
    pub fn identity_only() -> Self {
        TtaConfig {
            elements: vec![DihedralElement::IDENTITY],
            planes: TtaPlanes::All,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.elements.contains(&DihedralElement::IDENTITY) {
            return Err(Error::InvalidParameter(
                "TTA element set must include the identity".into(),
            ));
        }
        Ok(())
    }

    /// Distinct elements in canonical order.
    pub fn canonical_elements(&self) -> Vec<DihedralElement> {
        let mut e = self.elements.clone();
        e.sort_by_key(|t| t.index());
        e.dedup();
        e
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TtaOutput {
    pub sequence: VideoSequence,
    pub used: Vec<DihedralElement>,
    /// Human-readable notes, e.g. elements dropped for odd 4:2:0 dimensions.
    pub warnings: Vec<String>,
}

fn transform_sequence(seq: &VideoSequence, t: DihedralElement) -> Result<VideoSequence> {
    let frames = seq
        .frames()
        .iter()
        .map(|f| apply_dihedral(f, t))
        .collect::<Result<Vec<_>>>()?;
    seq.with_frames(frames)
}

pub fn tta_enhance(
    seq: &VideoSequence,
    enhancer: &dyn Enhancer,
    cfg: &TtaConfig,
) -> Result<TtaOutput> {
    cfg.validate()?;
    let mut used = Vec::new();
    let mut warnings = Vec::new();
    for t in cfg.canonical_elements() {
        if t.supports(seq.shape()) {
            used.push(t);
        } else {
            warnings.push(format!(
                "dropped {t}: 4:2:0 frames of {}x{} cannot be rotated",
                seq.width(),
                seq.height()
            ));
        }
    }

    let outputs: Vec<VideoSequence> = used
        .par_iter()
        .map(|&t| -> Result<VideoSequence> {
            let transformed = transform_sequence(seq, t)?;
            let out = enhance_checked(enhancer, &transformed)
                .map_err(|e| Error::Protocol(format!("TTA element {t}: {e}")))?;
            transform_sequence(&out, t.inverse())
        })
        .collect::<Result<_>>()?;

    let identity_pos = used
        .iter()
        .position(|&t| t == DihedralElement::IDENTITY)
        .expect("identity always supported");
    let frames: Vec<Frame> = (0..seq.len())
        .into_par_iter()
        .map(|i| {
            let reference = outputs[identity_pos].frame(i);
            reference.map_planes(|pi, plane| {
                if pi > 0 && cfg.planes == TtaPlanes::LumaOnly {
                    return plane.clone();
                }
                let mut lane = vec![0.0; outputs.len()];
                let data = (0..plane.data().len())
                    .map(|s| {
                        for (slot, out) in lane.iter_mut().zip(&outputs) {
                            *slot = out.frame(i).plane(pi).data()[s];
                        }
                        tree_sum(&lane) / outputs.len() as f64
                    })
                    .collect();
                Plane::new(plane.width(), plane.height(), data).expect("same dimensions")
            })
        })
        .collect();

    Ok(TtaOutput {
        sequence: seq.with_frames(frames)?,
        used,
        warnings,
    })
}
