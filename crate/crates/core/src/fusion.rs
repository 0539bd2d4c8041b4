//! Adaptive context-aware fusion of three enhanced variants.
//!
//! The input clip is enhanced three ways: the whole clip (`FULL`), a short
//! prefix (`SHORT`) and a prefix run through an intra-specialised enhancer
//! (`INTRA`). Output frame 0 comes from `INTRA` or `SHORT` depending on whether
//! the clip looks static; the next `head_len` frames come from `SHORT` and the
//! rest from `FULL`.
//!
//! Static content is detected from the average of every `m`-th frame: a still
//! scene averages to a sharp image with large gradient energy, while motion
//! blurs the average and drives the energy down.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, Plane, Rational, SampleScale, VideoSequence};
use crate::metrics::gradient_l1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicConfig {
    /// Threshold on average-frame gradient energy, in eight-bit sample units.
    pub tau: f64,
    pub m_slow: usize,
    pub m_fast: usize,
    pub fps_cutoff: f64,
    /// Compare the per-pixel energy (`G / (W·H)`) instead of the raw sum.
    pub normalize_per_pixel: bool,
    /// `true`: `G ≥ τ` means slow motion. `false`: `G < τ` does.
    pub slow_motion_when_gradient_at_least_tau: bool,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            tau: 2300.0,
            m_slow: 4,
            m_fast: 8,
            fps_cutoff: 30.0,
            normalize_per_pixel: false,
            slow_motion_when_gradient_at_least_tau: true,
        }
    }
}

impl HeuristicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.m_slow == 0 || self.m_fast == 0 {
            return Err(Error::InvalidParameter("strides must be at least 1".into()));
        }
        if self.fps_cutoff.is_nan() || self.fps_cutoff <= 0.0 {
            return Err(Error::InvalidParameter(
                "fps_cutoff must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub short_len: usize,
    pub intra_len: usize,
    pub head_len: usize,
    pub heuristic: HeuristicConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            short_len: 154,
            intra_len: 122,
            head_len: 63,
            heuristic: HeuristicConfig::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.head_len + 1 > self.short_len {
            return Err(Error::InvalidParameter(format!(
                "short run of {} frames cannot cover frame 0 plus {} head frames",
                self.short_len, self.head_len
            )));
        }
        if self.intra_len == 0 {
            return Err(Error::InvalidParameter(
                "intra_len must be at least 1".into(),
            ));
        }
        self.heuristic.validate()
    }
}

/// Mean of frames `0, m, 2m, …` below `N`.
pub fn average_frame(seq: &VideoSequence, m: usize) -> Result<Frame> {
    if m == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    let picked: Vec<&Frame> = seq.frames().iter().step_by(m).collect();
    let k = picked.len() as f64;
    let first = picked[0];
    Ok(first.map_planes(|pi, plane| {
        let mut acc = vec![0.0; plane.data().len()];
        for f in &picked {
            for (a, &v) in acc.iter_mut().zip(f.plane(pi).data()) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= k;
        }
        Plane::new(plane.width(), plane.height(), acc).expect("same dimensions")
    }))
}

/// Sampling stride: `m_slow` up to and including the cutoff, `m_fast` above it.
pub fn select_stride(fps: Rational, h: &HeuristicConfig) -> usize {
    if fps.as_f64() <= h.fps_cutoff {
        h.m_slow
    } else {
        h.m_fast
    }
}

/// L1 gradient energy of the luma plane, optionally divided by the pixel count.
pub fn gradient_energy(frame: &Frame, normalize_per_pixel: bool) -> f64 {
    let g = gradient_l1(frame.luma());
    if normalize_per_pixel {
        g / (frame.width() * frame.height()) as f64
    } else {
        g
    }
}

/// Outcome of the static-content test, with the values it was based on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MotionDecision {
    pub slow_motion: bool,
    /// Gradient energy of the average frame in eight-bit units.
    pub gradient: f64,
    pub stride: usize,
    pub tau: f64,
    pub normalized: bool,
    pub sampled_frames: usize,
}

pub fn detect_slow_motion(seq: &VideoSequence, h: &HeuristicConfig) -> Result<MotionDecision> {
    h.validate()?;
    let stride = select_stride(seq.fps(), h);
    let avg = average_frame(seq, stride)?;
    let to_eight_bit = SampleScale::EightBit.max_value() / seq.scale().max_value();
    let gradient = gradient_energy(&avg, h.normalize_per_pixel) * to_eight_bit;
    let above = gradient >= h.tau;
    Ok(MotionDecision {
        slow_motion: if h.slow_motion_when_gradient_at_least_tau {
            above
        } else {
            !above
        },
        gradient,
        stride,
        tau: h.tau,
        normalized: h.normalize_per_pixel,
        sampled_frames: seq.len().div_ceil(stride),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Source {
    Intra,
    Short,
    Full,
}

impl Source {
    pub fn code(self) -> u8 {
        match self {
            Source::Intra => 0,
            Source::Short => 1,
            Source::Full => 2,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Intra => "INTRA",
            Source::Short => "SHORT",
            Source::Full => "FULL",
        })
    }
}

/// The three enhanced versions of one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantSet {
    pub full: VideoSequence,
    pub short: VideoSequence,
    pub intra: VideoSequence,
}

impl VariantSet {
    pub fn new(full: VideoSequence, short: VideoSequence, intra: VideoSequence) -> Result<Self> {
        for (name, v) in [("short", &short), ("intra", &intra)] {
            if !v.frame(0).is_compatible(full.frame(0)) {
                return Err(Error::ShapeMismatch(format!(
                    "{name} variant is {}, full is {}",
                    v.shape(),
                    full.shape()
                )));
            }
            if v.len() > full.len() {
                return Err(Error::LengthMismatch {
                    expected: full.len(),
                    actual: v.len(),
                });
            }
        }
        Ok(VariantSet { full, short, intra })
    }

    pub fn get(&self, source: Source) -> &VideoSequence {
        match source {
            Source::Intra => &self.intra,
            Source::Short => &self.short,
            Source::Full => &self.full,
        }
    }
}

/// One source per output frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FusionPlan {
    sources: Vec<Source>,
}

impl FusionPlan {
    pub fn from_sources(sources: Vec<Source>) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok(FusionPlan { sources })
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Run-length form, e.g. `INTRA:0;SHORT:1-63;FULL:64-299`.
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        let mut start = 0;
        for i in 1..=self.sources.len() {
            if i == self.sources.len() || self.sources[i] != self.sources[start] {
                let range = if i - 1 == start {
                    start.to_string()
                } else {
                    format!("{start}-{}", i - 1)
                };
                parts.push(format!("{}:{range}", self.sources[start]));
                start = i;
            }
        }
        parts.join(";")
    }

    pub fn count(&self, source: Source) -> usize {
        self.sources.iter().filter(|&&s| s == source).count()
    }
}

pub fn build_plan(n_frames: usize, slow_motion: bool, cfg: &FusionConfig) -> Result<FusionPlan> {
    if n_frames == 0 {
        return Err(Error::EmptySequence);
    }
    let first = if slow_motion {
        Source::Short
    } else {
        Source::Intra
    };
    let sources = (0..n_frames)
        .map(|i| match i {
            0 => first,
            i if i <= cfg.head_len => Source::Short,
            _ => Source::Full,
        })
        .collect();
    FusionPlan::from_sources(sources)
}

/// Assembles the fused clip by copying each frame from its assigned variant.
pub fn apply_plan(variants: &VariantSet, plan: &FusionPlan) -> Result<VideoSequence> {
    let n = variants.full.len();
    if plan.len() != n {
        return Err(Error::PlanValidity(format!(
            "plan covers {} frames, full variant has {n}",
            plan.len()
        )));
    }
    for (i, &s) in plan.sources().iter().enumerate() {
        let available = variants.get(s).len();
        if i >= available {
            return Err(Error::PlanValidity(format!(
                "frame {i} assigned to {s}, which only has {available} frames"
            )));
        }
    }
    let frames: Vec<Frame> = plan
        .sources()
        .par_iter()
        .enumerate()
        .map(|(i, &s)| variants.get(s).frame(i).clone())
        .collect();
    variants.full.with_frames(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::ChromaLayout;
    use proptest::prelude::*;

    fn fps(n: u32) -> Rational {
        Rational::new(n, 1).unwrap()
    }

    fn mono_seq(frames: Vec<Plane>, rate: u32) -> VideoSequence {
        VideoSequence::new(
            frames
                .into_iter()
                .map(|p| Frame::mono(p, SampleScale::EightBit))
                .collect(),
            fps(rate),
            "s",
        )
        .unwrap()
    }

    #[test]
    fn average_of_constant_video() {
        let seq = mono_seq(vec![Plane::filled(3, 3, 42.0); 9], 25);
        for m in 1..12 {
            assert_eq!(average_frame(&seq, m).unwrap().luma().data(), &[42.0; 9]);
        }
    }

    #[test]
    fn average_uses_strided_frames() {
        let seq = mono_seq((0..10).map(|i| Plane::filled(1, 1, i as f64)).collect(), 25);
        // Oracle: indices i·m < N enumerated directly.
        let idx: Vec<usize> = (0..).map(|i| i * 4).take_while(|&k| k < 10).collect();
        assert_eq!(idx, vec![0, 4, 8]);
        let want = idx.iter().map(|&k| k as f64).sum::<f64>() / idx.len() as f64;
        assert_eq!(average_frame(&seq, 4).unwrap().luma().data(), &[want]);
        let short = mono_seq(
            (0..3)
                .map(|i| Plane::filled(1, 1, i as f64 + 7.0))
                .collect(),
            25,
        );
        assert_eq!(average_frame(&short, 8).unwrap(), *short.frame(0));
        assert!(average_frame(&seq, 0).is_err());
    }

    #[test]
    fn stride_selection() {
        let h = HeuristicConfig::default();
        assert_eq!(select_stride(fps(25), &h), 4);
        assert_eq!(select_stride(fps(50), &h), 8);
        assert_eq!(select_stride(fps(30), &h), 4);
        assert_eq!(select_stride(Rational::new(30000, 1001).unwrap(), &h), 4);
        assert_eq!(select_stride(Rational::new(60000, 1001).unwrap(), &h), 8);
    }

    #[test]
    fn gradient_energy_examples() {
        let c = Frame::filled(4, 4, ChromaLayout::Mono, SampleScale::EightBit, 3.0);
        assert_eq!(gradient_energy(&c, false), 0.0);
        let f = Frame::mono(
            Plane::from_rows(&[[0.0, 1.0], [0.0, 1.0]]).unwrap(),
            SampleScale::EightBit,
        );
        assert_eq!(gradient_energy(&f, false), 2.0);
        assert_eq!(gradient_energy(&f, true), 0.5);
        let one = Frame::filled(1, 1, ChromaLayout::Mono, SampleScale::EightBit, 9.0);
        assert_eq!(gradient_energy(&one, false), 0.0);
    }

    #[test]
    fn gradient_energy_scales_with_sample_range() {
        let f = Frame::mono(
            Plane::from_fn(7, 5, |x, y| ((x * 31 + y * 17) % 256) as f64),
            SampleScale::EightBit,
        );
        let g8 = gradient_energy(&f, false);
        let gu = gradient_energy(&f.to_scale(SampleScale::Unit), false);
        assert!((gu * 255.0 - g8).abs() <= 1e-12 * g8);
    }

    #[test]
    fn decision_boundary_takes_at_least_branch() {
        // Two horizontal steps of 1150 each: G = 2300 exactly.
        let p = Plane::from_rows(&[[0.0, 1150.0, 2300.0]]).unwrap();
        let seq = mono_seq(vec![p; 4], 25);
        let d = detect_slow_motion(&seq, &HeuristicConfig::default()).unwrap();
        assert_eq!(d.gradient, 2300.0);
        assert!(d.slow_motion);
        let inverted = HeuristicConfig {
            slow_motion_when_gradient_at_least_tau: false,
            ..Default::default()
        };
        assert!(!detect_slow_motion(&seq, &inverted).unwrap().slow_motion);
    }

    #[test]
    fn unit_scale_gradient_is_reported_in_eight_bit_units() {
        let p = Plane::from_rows(&[[0.0, 1150.0, 2300.0]]).unwrap();
        let seq = mono_seq(vec![p; 2], 25).to_scale(SampleScale::Unit);
        let d = detect_slow_motion(&seq, &HeuristicConfig::default()).unwrap();
        assert!((d.gradient - 2300.0).abs() < 1e-9);
    }

    #[test]
    fn plan_shapes() {
        let cfg = FusionConfig::default();
        let p = build_plan(300, false, &cfg).unwrap();
        assert_eq!(p.summary(), "INTRA:0;SHORT:1-63;FULL:64-299");
        assert_eq!(
            (
                p.count(Source::Intra),
                p.count(Source::Short),
                p.count(Source::Full)
            ),
            (1, 63, 236)
        );
        let p = build_plan(300, true, &cfg).unwrap();
        assert_eq!(p.summary(), "SHORT:0-63;FULL:64-299");
        let p = build_plan(50, false, &cfg).unwrap();
        assert_eq!(p.summary(), "INTRA:0;SHORT:1-49");
        assert_eq!(build_plan(1, true, &cfg).unwrap().summary(), "SHORT:0");
        assert!(build_plan(0, true, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = FusionConfig {
            short_len: 63,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let ok = FusionConfig {
            short_len: 64,
            ..Default::default()
        };
        assert!(ok.validate().is_ok());
        let bad_tau = FusionConfig {
            heuristic: HeuristicConfig {
                tau: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(bad_tau.validate().is_err());
    }

    fn numbered(n: usize, offset: f64) -> VideoSequence {
        mono_seq(
            (0..n)
                .map(|i| Plane::filled(2, 1, i as f64 + offset))
                .collect(),
            25,
        )
    }

    #[test]
    fn apply_plan_copies_assigned_frames() {
        let v = VariantSet::new(numbered(10, 0.0), numbered(5, 100.0), numbered(3, 200.0)).unwrap();
        let cfg = FusionConfig {
            short_len: 5,
            intra_len: 3,
            head_len: 2,
            ..Default::default()
        };
        let plan = build_plan(10, false, &cfg).unwrap();
        let out = apply_plan(&v, &plan).unwrap();
        let firsts: Vec<f64> = out.frames().iter().map(|f| f.luma().get(0, 0)).collect();
        assert_eq!(
            firsts,
            vec![200.0, 101.0, 102.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
        );

        let all_full = FusionPlan::from_sources(vec![Source::Full; 10]).unwrap();
        assert_eq!(apply_plan(&v, &all_full).unwrap(), v.full);

        let bad = FusionPlan::from_sources(vec![Source::Intra; 10]).unwrap();
        assert!(matches!(apply_plan(&v, &bad), Err(Error::PlanValidity(_))));
        let short_plan = FusionPlan::from_sources(vec![Source::Full; 9]).unwrap();
        assert!(matches!(
            apply_plan(&v, &short_plan),
            Err(Error::PlanValidity(_))
        ));
    }

    proptest! {
        #[test]
        fn plan_invariants(n in 1usize..400, slow in any::<bool>(), head in 0usize..80) {
            let cfg = FusionConfig { short_len: head + 1, head_len: head, ..Default::default() };
            let plan = build_plan(n, slow, &cfg).unwrap();
            prop_assert_eq!(plan.len(), n);
            for (i, &s) in plan.sources().iter().enumerate() {
                if s == Source::Intra { prop_assert_eq!(i, 0); }
                if s == Source::Short { prop_assert!(i <= head); }
                if i > head { prop_assert_eq!(s, Source::Full); }
            }
        }

        #[test]
        fn static_video_decision_ignores_frame_order(perm_seed in any::<u64>(), n in 1usize..20) {
            let p = Plane::from_fn(5, 4, |x, y| ((x * 7 + y * 13) % 50) as f64 * 4.0);
            let seq = mono_seq(vec![p; n], 25);
            let mut frames = seq.frames().to_vec();
            let k = (perm_seed as usize) % n;
            frames.rotate_left(k);
            let shuffled = seq.with_frames(frames).unwrap();
            let h = HeuristicConfig::default();
            prop_assert_eq!(
                detect_slow_motion(&seq, &h).unwrap(),
                detect_slow_motion(&shuffled, &h).unwrap()
            );
        }
    }
}
