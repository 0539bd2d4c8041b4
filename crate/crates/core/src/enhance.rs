//! Pluggable enhancers and the orchestration that runs them.
//!
//! An [`Enhancer`] maps a clip to an enhanced clip of the same length and
//! frame shape. [`enhance_checked`] enforces that contract for every call made
//! by this crate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, Plane, VideoSequence};
use crate::fusion::{FusionConfig, VariantSet};
use crate::metrics::{psnr_per_frame, MetricsReport, PsnrOptions};
use crate::numeric::pairwise_sum;
use crate::process::{self, CommandTemplate};

pub trait Enhancer: Send + Sync {
    fn name(&self) -> &str;

    fn is_deterministic(&self) -> bool {
        true
    }

    fn enhance(&self, input: &VideoSequence) -> Result<VideoSequence>;
}

/// Runs `enhancer` and rejects output whose frame count or shape differs from
/// the input. Output is returned at the input's sample scale.
pub fn enhance_checked(enhancer: &dyn Enhancer, input: &VideoSequence) -> Result<VideoSequence> {
    let out = enhancer.enhance(input)?;
    process::check_round_trip(&format!("enhancer `{}`", enhancer.name()), input, &out)?;
    Ok(if out.scale() == input.scale() {
        out
    } else {
        out.to_scale(input.scale())
    })
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityEnhancer;

impl Enhancer for IdentityEnhancer {
    fn name(&self) -> &str {
        "identity"
    }

    fn enhance(&self, input: &VideoSequence) -> Result<VideoSequence> {
        Ok(input.clone())
    }
}

pub fn enhancer_identity() -> IdentityEnhancer {
    IdentityEnhancer
}

/// Separable box blur blended with the input: `(1 - s)·x + s·blur_r(x)`.
///
/// Edges are handled by replication, so the filter commutes with flips and
/// quarter turns.
#[derive(Clone, Debug)]
pub struct SmoothEnhancer {
    radius: usize,
    strength: f64,
    name: String,
}

impl SmoothEnhancer {
    pub fn new(radius: usize, strength: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&strength) {
            return Err(Error::InvalidParameter(format!(
                "smoothing strength {strength} outside [0, 1]"
            )));
        }
        Ok(SmoothEnhancer {
            radius,
            strength,
            name: format!("smooth(r={radius},s={strength})"),
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn smooth_frame(&self, frame: &Frame) -> Frame {
        if self.strength == 0.0 {
            return frame.clone();
        }
        let s = self.strength;
        frame.map_planes(|_, p| {
            let blurred = box_blur(p, self.radius);
            let data = p
                .data()
                .iter()
                .zip(blurred.data())
                .map(|(&x, &b)| (1.0 - s) * x + s * b)
                .collect();
            Plane::new(p.width(), p.height(), data).expect("same dimensions")
        })
    }
}

pub fn enhancer_smooth(radius: usize, strength: f64) -> Result<SmoothEnhancer> {
    SmoothEnhancer::new(radius, strength)
}

fn box_blur(p: &Plane, r: usize) -> Plane {
    if r == 0 {
        return p.clone();
    }
    let (w, h) = (p.width(), p.height());
    let norm = 1.0 / (2 * r + 1) as f64;
    let r = r as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let horizontal = Plane::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for d in -r..=r {
            acc += p.get(clamp(x as isize + d, w), y);
        }
        acc * norm
    });
    Plane::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for d in -r..=r {
            acc += horizontal.get(x, clamp(y as isize + d, h));
        }
        acc * norm
    })
}

impl Enhancer for SmoothEnhancer {
    fn name(&self) -> &str {
        &self.name
    }

    fn enhance(&self, input: &VideoSequence) -> Result<VideoSequence> {
        let frames = input
            .frames()
            .par_iter()
            .map(|f| self.smooth_frame(f))
            .collect();
        input.with_frames(frames)
    }
}

/// Enhancement delegated to a child process speaking YUV4MPEG2 over pipes.
#[derive(Clone, Debug)]
pub struct ExternalEnhancer {
    command: CommandTemplate,
    extra_args: String,
    deterministic: bool,
}

impl ExternalEnhancer {
    pub fn new(command: CommandTemplate) -> Self {
        ExternalEnhancer {
            command,
            extra_args: String::new(),
            deterministic: true,
        }
    }

    pub fn with_extra_args(mut self, args: impl Into<String>) -> Self {
        self.extra_args = args.into();
        self
    }

    pub fn with_deterministic(mut self, deterministic: bool) -> Self {
        self.deterministic = deterministic;
        self
    }
}

pub fn enhancer_external(command: CommandTemplate) -> ExternalEnhancer {
    ExternalEnhancer::new(command)
}

impl Enhancer for ExternalEnhancer {
    fn name(&self) -> &str {
        self.command.as_str()
    }

    fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    fn enhance(&self, input: &VideoSequence) -> Result<VideoSequence> {
        let out = process::pipe_through(&self.command.render(&self.extra_args), input)?;
        Ok(out.with_tags(input.tags().clone()))
    }
}

/// Enhances the whole clip, its first `short_len` frames, and its first
/// `intra_len` frames with the intra enhancer.
pub fn run_variants(
    input: &VideoSequence,
    main: &dyn Enhancer,
    intra: &dyn Enhancer,
    cfg: &FusionConfig,
) -> Result<VariantSet> {
    cfg.validate()?;
    let short_in = input.prefix(cfg.short_len)?;
    let intra_in = input.prefix(cfg.intra_len)?;
    let (full, (short, intra)) = rayon::join(
        || enhance_checked(main, input),
        || {
            rayon::join(
                || enhance_checked(main, &short_in),
                || enhance_checked(intra, &intra_in),
            )
        },
    );
    VariantSet::new(full?, short?, intra?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrimAnalysisConfig {
    pub gaps: Vec<usize>,
    pub start_shifts: Vec<usize>,
    pub psnr: PsnrOptions,
}

impl Default for TrimAnalysisConfig {
    fn default() -> Self {
        TrimAnalysisConfig {
            gaps: vec![90, 122, 154, 186],
            start_shifts: vec![0, 32],
            psnr: PsnrOptions::default(),
        }
    }
}

impl TrimAnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gaps.is_empty() || self.gaps.contains(&0) {
            return Err(Error::InvalidParameter(
                "trim gaps must be a non-empty list of positive lengths".into(),
            ));
        }
        if self.start_shifts.is_empty() {
            return Err(Error::InvalidParameter("no start shifts given".into()));
        }
        Ok(())
    }
}

pub fn trim_series_name(shift: usize, gap: usize) -> String {
    format!("delta_psnr_shift{shift}_gap{gap}")
}

/// Per-frame PSNR change from enhancing trimmed windows instead of the whole clip.
///
/// For each `(shift, gap)` the enhancer runs on `input[shift .. shift + gap)`
/// (clamped to the clip) and the PSNR of each output frame is compared with
/// the full-clip run at the same absolute frame index.
pub fn trim_analysis(
    input: &VideoSequence,
    gt: &VideoSequence,
    enhancer: &dyn Enhancer,
    cfg: &TrimAnalysisConfig,
) -> Result<MetricsReport> {
    cfg.validate()?;
    input.check_matching(gt)?;
    let n = input.len();
    if let Some(&shift) = cfg.start_shifts.iter().find(|&&s| s >= n) {
        return Err(Error::Window {
            start: shift,
            frames: n,
        });
    }
    let cap = cfg.psnr.cap;
    let baseline_out = enhance_checked(enhancer, input)?;
    let baseline: Vec<f64> = psnr_per_frame(&baseline_out, gt, cfg.psnr.planes)?
        .into_iter()
        .map(|p| p.capped(cap))
        .collect();

    let windows: Vec<(usize, usize, usize)> = cfg
        .start_shifts
        .iter()
        .flat_map(|&shift| {
            cfg.gaps
                .iter()
                .map(move |&gap| (shift, gap, (shift + gap).min(n)))
        })
        .collect();
    let deltas: Vec<Vec<f64>> = windows
        .par_iter()
        .map(|&(shift, _, end)| -> Result<Vec<f64>> {
            let out = enhance_checked(enhancer, &input.slice(shift..end)?)?;
            let psnr = psnr_per_frame(&out, &gt.slice(shift..end)?, cfg.psnr.planes)?;
            Ok(psnr
                .iter()
                .enumerate()
                .map(|(k, p)| p.capped(cap) - baseline[shift + k])
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut report = MetricsReport::new(input.name(), n, input.scale());
    report.psnr_cap = cap;
    report
        .notes
        .insert("enhancer".into(), enhancer.name().to_string());
    report
        .aggregates
        .insert("psnr_full_mean".into(), pairwise_sum(&baseline) / n as f64);
    report.series.insert(
        "psnr_full".into(),
        baseline.iter().copied().map(Some).collect(),
    );
    for (&(shift, gap, end), delta) in windows.iter().zip(deltas) {
        let name = trim_series_name(shift, gap);
        let mut column = vec![None; n];
        for (k, d) in delta.iter().enumerate() {
            column[shift + k] = Some(*d);
        }
        report.aggregates.insert(
            format!("mean_{name}"),
            pairwise_sum(&delta) / delta.len() as f64,
        );
        report.notes.insert(
            format!("window_{name}"),
            format!("{shift}..{end} ({} frames)", end - shift),
        );
        report.series.insert(name, column);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{ChromaLayout, Rational, SampleScale};

    fn ramp(n: usize, w: usize, h: usize) -> VideoSequence {
        let frames = (0..n)
            .map(|t| {
                Frame::mono(
                    Plane::from_fn(w, h, |x, y| ((x * 13 + y * 7 + t * 3) % 97) as f64),
                    SampleScale::EightBit,
                )
            })
            .collect();
        VideoSequence::new(frames, Rational::new(25, 1).unwrap(), "ramp").unwrap()
    }

    struct DropFrame;

    impl Enhancer for DropFrame {
        fn name(&self) -> &str {
            "drop"
        }

        fn enhance(&self, input: &VideoSequence) -> Result<VideoSequence> {
            input.prefix(input.len().saturating_sub(1).max(1))
        }
    }

    #[test]
    fn identity_returns_input() {
        let s = ramp(4, 3, 3);
        assert_eq!(enhance_checked(&enhancer_identity(), &s).unwrap(), s);
    }

    #[test]
    fn checked_enhance_rejects_frame_loss() {
        let s = ramp(4, 3, 3);
        assert!(matches!(
            enhance_checked(&DropFrame, &s),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn smooth_zero_strength_is_identity() {
        let s = ramp(3, 5, 4);
        let e = enhancer_smooth(2, 0.0).unwrap();
        assert_eq!(e.enhance(&s).unwrap(), s);
        assert!(enhancer_smooth(1, 1.5).is_err());
    }

    #[test]
    fn smooth_keeps_constants() {
        let f = Frame::filled(6, 5, ChromaLayout::Yuv420, SampleScale::EightBit, 77.0);
        let e = enhancer_smooth(2, 0.8).unwrap();
        for v in e.smooth_frame(&f).samples() {
            assert!((v - 77.0).abs() < 1e-12);
        }
    }

    #[test]
    fn box_blur_matches_direct_window_average() {
        let p = Plane::from_fn(5, 4, |x, y| (x * x + 3 * y) as f64);
        let b = box_blur(&p, 1);
        // Oracle: explicit 3x3 average with replicated edges.
        for y in 0..4 {
            for x in 0..5 {
                let mut acc = 0.0;
                for dy in -1i32..=1 {
                    for dx in -1i32..=1 {
                        let xx = (x as i32 + dx).clamp(0, 4) as usize;
                        let yy = (y as i32 + dy).clamp(0, 3) as usize;
                        acc += p.get(xx, yy);
                    }
                }
                assert!((b.get(x, y) - acc / 9.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn variants_are_prefixes_under_identity() {
        let s = ramp(200, 2, 2);
        let v = run_variants(
            &s,
            &IdentityEnhancer,
            &IdentityEnhancer,
            &FusionConfig::default(),
        )
        .unwrap();
        assert_eq!(v.full, s);
        assert_eq!(v.short.len(), 154);
        assert_eq!(v.intra.len(), 122);
        assert_eq!(v.short.frames(), &s.frames()[..154]);

        let small = ramp(100, 2, 2);
        let v = run_variants(
            &small,
            &IdentityEnhancer,
            &IdentityEnhancer,
            &FusionConfig::default(),
        )
        .unwrap();
        assert_eq!((v.short.len(), v.intra.len()), (100, 100));
    }

    #[test]
    fn identity_trim_analysis_is_flat_zero() {
        let s = ramp(60, 3, 2);
        let gt = s
            .with_frames(
                s.frames()
                    .iter()
                    .map(|f| f.map_samples(|v| v + 1.0))
                    .collect(),
            )
            .unwrap();
        let cfg = TrimAnalysisConfig {
            gaps: vec![10, 25, 100],
            start_shifts: vec![0, 32],
            ..Default::default()
        };
        let r = trim_analysis(&s, &gt, &IdentityEnhancer, &cfg).unwrap();
        assert_eq!(r.series.len(), 1 + 6);
        for (name, col) in r.series.iter().skip(1) {
            assert!(col.iter().flatten().all(|&d| d == 0.0), "{name}");
        }
        // shift 32 + gap 100 is clamped to the clip end.
        let col = &r.series[&trim_series_name(32, 100)];
        assert_eq!(col.iter().flatten().count(), 28);
        assert!(col[..32].iter().all(Option::is_none));
        assert_eq!(
            r.notes["window_delta_psnr_shift32_gap100"],
            "32..60 (28 frames)"
        );
        // No values past the end of a trimmed window.
        let col = &r.series[&trim_series_name(0, 10)];
        assert!(col[10..].iter().all(Option::is_none));
    }

    #[test]
    fn trim_analysis_window_errors() {
        let s = ramp(20, 2, 2);
        let cfg = TrimAnalysisConfig::default();
        assert!(matches!(
            trim_analysis(&s, &s, &IdentityEnhancer, &cfg),
            Err(Error::Window { start: 32, .. })
        ));
        let short = s.prefix(10).unwrap();
        assert!(matches!(
            trim_analysis(
                &s,
                &short,
                &IdentityEnhancer,
                &TrimAnalysisConfig {
                    start_shifts: vec![0],
                    ..Default::default()
                }
            ),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
