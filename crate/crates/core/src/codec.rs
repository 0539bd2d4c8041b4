//! Low-delay coding structure and a blockwise-DCT stand-in for the encoder.
//!
//! A low-delay clip has exactly one intra frame (index 0). Every later frame is
//! an inter frame whose quality depends on its position inside a repeating
//! group of pictures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, Plane, VideoSequence};
use crate::process::{self, CommandTemplate};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GopConfig {
    pub gop_size: usize,
    pub intra_index: usize,
    /// Hierarchy level for each within-group offset.
    pub hierarchy_levels: Vec<usize>,
}

impl Default for GopConfig {
    /// Group of four; the last frame of each group is the anchor (level 0).
    fn default() -> Self {
        GopConfig {
            gop_size: 4,
            intra_index: 0,
            hierarchy_levels: vec![1, 1, 1, 0],
        }
    }
}

impl GopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gop_size == 0 {
            return Err(Error::InvalidParameter(
                "gop_size must be at least 1".into(),
            ));
        }
        if self.intra_index != 0 {
            return Err(Error::InvalidParameter(
                "low-delay structure has its intra frame at index 0".into(),
            ));
        }
        if self.hierarchy_levels.len() != self.gop_size {
            return Err(Error::InvalidParameter(format!(
                "hierarchy_levels has {} entries for a group of {}",
                self.hierarchy_levels.len(),
                self.gop_size
            )));
        }
        Ok(())
    }

    pub fn level_count(&self) -> usize {
        self.hierarchy_levels.iter().max().map_or(0, |m| m + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum FrameKind {
    Intra,
    Inter { gop_offset: usize, level: usize },
}

pub fn classify_frame(index: usize, cfg: &GopConfig) -> FrameKind {
    if index == cfg.intra_index {
        return FrameKind::Intra;
    }
    let gop_offset = (index - 1) % cfg.gop_size;
    FrameKind::Inter {
        gop_offset,
        level: cfg.hierarchy_levels[gop_offset],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationProfile {
    /// Quantization step for the intra frame.
    pub intra_step: f64,
    /// Quantization step per hierarchy level.
    pub level_steps: Vec<f64>,
    pub block_size: usize,
    /// Randomized rounding of coefficients, seeded per frame.
    pub dither: bool,
}

impl Default for DegradationProfile {
    fn default() -> Self {
        DegradationProfile {
            intra_step: 2.0,
            level_steps: vec![12.0, 16.0],
            block_size: 8,
            dither: false,
        }
    }
}

impl DegradationProfile {
    /// Steps must be non-negative; a zero step disables quantization.
    pub fn validate(&self, gop: &GopConfig) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::InvalidParameter(
                "block_size must be at least 1".into(),
            ));
        }
        if self.level_steps.len() < gop.level_count() {
            return Err(Error::InvalidParameter(format!(
                "{} level steps given, hierarchy uses {} levels",
                self.level_steps.len(),
                gop.level_count()
            )));
        }
        for &s in std::iter::once(&self.intra_step).chain(&self.level_steps) {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "quantization step {s} must be finite and non-negative"
                )));
            }
        }
        for &s in &self.level_steps {
            let ok = if s == 0.0 {
                self.intra_step == 0.0
            } else {
                self.intra_step < s
            };
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "intra step {} must be below every inter step (got {s})",
                    self.intra_step
                )));
            }
        }
        Ok(())
    }

    pub fn step_for(&self, kind: FrameKind) -> f64 {
        match kind {
            FrameKind::Intra => self.intra_step,
            FrameKind::Inter { level, .. } => self.level_steps[level],
        }
    }
}

/// Orthonormal type-II DCT of size `n`.
struct Dct {
    n: usize,
    basis: Vec<f64>,
}

impl Dct {
    fn new(n: usize) -> Self {
        let mut basis = vec![0.0; n * n];
        let nf = n as f64;
        for k in 0..n {
            let alpha = if k == 0 {
                (1.0 / nf).sqrt()
            } else {
                (2.0 / nf).sqrt()
            };
            for i in 0..n {
                basis[k * n + i] = alpha
                    * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos();
            }
        }
        Dct { n, basis }
    }

    /// `B · X · Bᵀ`
    fn forward(&self, block: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        let n = self.n;
        let b = &self.basis;
        for k in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += b[k * n + i] * block[i * n + j];
                }
                tmp[k * n + j] = acc;
            }
        }
        for k in 0..n {
            for l in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += tmp[k * n + j] * b[l * n + j];
                }
                out[k * n + l] = acc;
            }
        }
    }

    /// `Bᵀ · C · B`
    fn inverse(&self, coeffs: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        let n = self.n;
        let b = &self.basis;
        for i in 0..n {
            for l in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += b[k * n + i] * coeffs[k * n + l];
                }
                tmp[i * n + l] = acc;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += tmp[i * n + l] * b[l * n + j];
                }
                out[i * n + j] = acc;
            }
        }
    }
}

fn quantize_plane(plane: &Plane, dct: &Dct, step: f64, rng: Option<&mut ChaCha8Rng>) -> Plane {
    let n = dct.n;
    let (w, h) = (plane.width(), plane.height());
    let mut out = plane.clone();
    let mut block = vec![0.0; n * n];
    let mut coeffs = vec![0.0; n * n];
    let mut tmp = vec![0.0; n * n];
    let mut rng = rng;
    for by in (0..h).step_by(n) {
        for bx in (0..w).step_by(n) {
            // Edge replication for partial blocks.
            for i in 0..n {
                let y = (by + i).min(h - 1);
                for j in 0..n {
                    block[i * n + j] = plane.get((bx + j).min(w - 1), y);
                }
            }
            dct.forward(&block, &mut coeffs, &mut tmp);
            for c in coeffs.iter_mut() {
                let jitter = match rng.as_deref_mut() {
                    Some(r) => r.gen_range(-0.25..0.25),
                    None => 0.0,
                };
                *c = (*c / step + jitter).round() * step;
            }
            dct.inverse(&coeffs, &mut block, &mut tmp);
            for i in 0..n.min(h - by) {
                for j in 0..n.min(w - bx) {
                    out.set(bx + j, by + i, block[i * n + j]);
                }
            }
        }
    }
    out
}

/// Degrades one frame with the given step (zero leaves samples untouched).
pub fn degrade_frame(
    frame: &Frame,
    step: f64,
    block_size: usize,
    dither_seed: Option<u64>,
) -> Frame {
    if step == 0.0 {
        return frame.clamped();
    }
    let dct = Dct::new(block_size);
    let mut rng = dither_seed.map(ChaCha8Rng::seed_from_u64);
    frame
        .map_planes(|_, p| quantize_plane(p, &dct, step, rng.as_mut()))
        .clamped()
}

/// Blockwise DCT quantization with the step each frame's coding role selects.
///
/// Frames are processed independently; `seed` only matters when dithering is on.
pub fn simulate_low_delay(
    seq: &VideoSequence,
    cfg: &GopConfig,
    prof: &DegradationProfile,
    seed: u64,
) -> Result<VideoSequence> {
    cfg.validate()?;
    prof.validate(cfg)?;
    let frames: Vec<Frame> = seq
        .frames()
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let step = prof.step_for(classify_frame(i, cfg));
            let frame_seed = prof
                .dither
                .then(|| seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            degrade_frame(f, step, prof.block_size, frame_seed)
        })
        .collect();
    seq.with_frames(frames)
}

/// Cuts `seq` into consecutive non-overlapping runs of `segment_len` frames.
/// A trailing remainder shorter than `segment_len` is dropped.
pub fn segment_video(seq: &VideoSequence, segment_len: usize) -> Result<Vec<VideoSequence>> {
    if segment_len == 0 {
        return Err(Error::InvalidParameter(
            "segment length must be at least 1".into(),
        ));
    }
    (0..seq.len() / segment_len)
        .map(|k| {
            let part = seq.slice(k * segment_len..(k + 1) * segment_len)?;
            let name = format!("{}_seg{k:03}", seq.name());
            Ok(part.with_name(name))
        })
        .collect()
}

/// Round-trips `seq` through an external encoder/decoder pipeline.
pub fn encode_external(
    seq: &VideoSequence,
    command: &CommandTemplate,
    extra_args: &str,
) -> Result<VideoSequence> {
    let rendered = command.render(extra_args);
    let out = process::pipe_through(&rendered, seq)?;
    process::check_round_trip(&format!("encoder `{rendered}`"), seq, &out)?;
    Ok(out.to_scale(seq.scale()).with_tags(seq.tags().clone()))
}
