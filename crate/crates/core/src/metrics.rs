//! Frame and sequence quality metrics and the restoration loss terms.
//!
//! Every reduction is a pairwise sum in fixed index order, so results do not
//! depend on the number of worker threads.

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{frame_linear_combine, Frame, Plane, SampleScale, VideoSequence};
use crate::numeric::{pairwise_sum, pairwise_sum_by};

/// PSNR value used for identical frames when aggregating and serializing.
pub const DEFAULT_PSNR_CAP: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Db(f64),
    /// Zero mean squared error.
    Identical,
}

impl Psnr {
    pub fn is_identical(self) -> bool {
        matches!(self, Psnr::Identical)
    }

    /// The value in dB, limited to `cap`.
    pub fn capped(self, cap: f64) -> f64 {
        match self {
            Psnr::Db(v) => v.min(cap),
            Psnr::Identical => cap,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsnrPlanes {
    #[default]
    Luma,
    /// MSE pooled over every sample of every plane.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsnrOptions {
    pub planes: PsnrPlanes,
    pub cap: f64,
}

impl Default for PsnrOptions {
    fn default() -> Self {
        PsnrOptions {
            planes: PsnrPlanes::Luma,
            cap: DEFAULT_PSNR_CAP,
        }
    }
}

fn check_frames(a: &Frame, b: &Frame) -> Result<()> {
    if a.is_compatible(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{} ({:?}) vs {} ({:?})",
            a.shape(),
            a.scale(),
            b.shape(),
            b.scale()
        )))
    }
}

fn squared_error(a: &Plane, b: &Plane) -> f64 {
    let (a, b) = (a.data(), b.data());
    pairwise_sum_by(a.len(), |i| {
        let d = a[i] - b[i];
        d * d
    })
}

pub fn mse_frame(a: &Frame, b: &Frame, planes: PsnrPlanes) -> Result<f64> {
    check_frames(a, b)?;
    let used = match planes {
        PsnrPlanes::Luma => 1,
        PsnrPlanes::All => a.planes().len(),
    };
    let mut sse = 0.0;
    let mut count = 0usize;
    for i in 0..used {
        sse += squared_error(a.plane(i), b.plane(i));
        count += a.plane(i).data().len();
    }
    Ok(sse / count as f64)
}

/// `10·log10(max² / MSE)`, or [`Psnr::Identical`] when the MSE is zero.
pub fn psnr_frame(a: &Frame, b: &Frame, max_value: f64, planes: PsnrPlanes) -> Result<Psnr> {
    let mse = mse_frame(a, b, planes)?;
    if mse == 0.0 {
        Ok(Psnr::Identical)
    } else {
        Ok(Psnr::Db(10.0 * (max_value * max_value / mse).log10()))
    }
}

/// Per-frame PSNR of `x` against `reference`.
pub fn psnr_per_frame(
    x: &VideoSequence,
    reference: &VideoSequence,
    planes: PsnrPlanes,
) -> Result<Vec<Psnr>> {
    x.check_matching(reference)?;
    let max = x.scale().max_value();
    x.frames()
        .par_iter()
        .zip(reference.frames().par_iter())
        .map(|(a, b)| psnr_frame(a, b, max, planes))
        .collect()
}

pub fn mean_capped(values: &[Psnr], cap: f64) -> f64 {
    pairwise_sum_by(values.len(), |i| values[i].capped(cap)) / values.len() as f64
}

/// Per-frame PSNR series (`psnr`) with its arithmetic mean (`psnr_mean`).
pub fn psnr_sequence(
    x: &VideoSequence,
    reference: &VideoSequence,
    opts: &PsnrOptions,
) -> Result<MetricsReport> {
    let values = psnr_per_frame(x, reference, opts.planes)?;
    let mut report = MetricsReport::new(x.name(), x.len(), x.scale());
    report.psnr_cap = opts.cap;
    report
        .aggregates
        .insert("psnr_mean".into(), mean_capped(&values, opts.cap));
    let identical = values.iter().filter(|p| p.is_identical()).count();
    report
        .notes
        .insert("identical_frames".into(), identical.to_string());
    report.series.insert(
        "psnr".into(),
        values.iter().map(|p| Some(p.capped(opts.cap))).collect(),
    );
    Ok(report)
}

/// Elementwise `a - b` over the common length.
pub fn delta_series(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "Charbonnier epsilon must be positive, got {epsilon}"
        )))
    }
}

/// Mean over all samples of every plane of `sqrt((x - ref)² + ε²)`.
pub fn charbonnier(x: &VideoSequence, reference: &VideoSequence, epsilon: f64) -> Result<f64> {
    x.check_matching(reference)?;
    check_epsilon(epsilon)?;
    Ok(charbonnier_frames(x.frames(), reference.frames(), epsilon))
}

fn charbonnier_frames(x: &[Frame], reference: &[Frame], epsilon: f64) -> f64 {
    let eps2 = epsilon * epsilon;
    let per_frame: Vec<f64> = x
        .par_iter()
        .zip(reference.par_iter())
        .map(|(a, b)| {
            a.planes()
                .iter()
                .zip(b.planes())
                .map(|(pa, pb)| {
                    let (da, db) = (pa.data(), pb.data());
                    pairwise_sum_by(da.len(), |i| {
                        let d = da[i] - db[i];
                        (d * d + eps2).sqrt()
                    })
                })
                .fold(0.0, |acc, s| acc + s)
        })
        .collect();
    let count = x.len() * x[0].sample_count();
    pairwise_sum(&per_frame) / count as f64
}

/// `(Σ|∂x| + Σ|∂y|)` of forward differences over a plane.
pub fn gradient_l1(plane: &Plane) -> f64 {
    let (w, h) = (plane.width(), plane.height());
    let d = plane.data();
    let horizontal = pairwise_sum_by(h * (w - 1), |i| {
        let (y, x) = (i / (w - 1), i % (w - 1));
        (d[y * w + x + 1] - d[y * w + x]).abs()
    });
    let vertical = pairwise_sum_by((h - 1) * w, |i| (d[i + w] - d[i]).abs());
    horizontal + vertical
}

/// Anisotropic total variation of the luma plane, normalized by pixel count
/// and averaged over frames.
pub fn tv_loss(x: &VideoSequence) -> f64 {
    let pixels = (x.width() * x.height()) as f64;
    let per_frame: Vec<f64> = x
        .frames()
        .par_iter()
        .map(|f| gradient_l1(f.luma()) / pixels)
        .collect();
    pairwise_sum(&per_frame) / x.len() as f64
}

fn temporal_gradient(frames: &[Frame]) -> Vec<Frame> {
    frames
        .par_windows(2)
        .map(|w| frame_linear_combine(&[&w[1], &w[0]], &[1.0, -1.0]).expect("frames share shape"))
        .collect()
}

/// Charbonnier distance between the consecutive-frame difference sequences.
pub fn tg_loss(x: &VideoSequence, reference: &VideoSequence, epsilon: f64) -> Result<f64> {
    x.check_matching(reference)?;
    check_epsilon(epsilon)?;
    if x.len() < 2 {
        return Err(Error::InsufficientFrames {
            required: 2,
            actual: x.len(),
        });
    }
    let gx = temporal_gradient(x.frames());
    let gr = temporal_gradient(reference.frames());
    Ok(charbonnier_frames(&gx, &gr, epsilon))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_char: f64,
    pub w_tg: f64,
    pub w_tv: f64,
    pub epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_char: 1.0,
            w_tg: 1e-3,
            w_tv: 1e-4,
            epsilon: 1e-3,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("w_char", self.w_char),
            ("w_tg", self.w_tg),
            ("w_tv", self.w_tv),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be a finite non-negative weight, got {w}"
                )));
            }
        }
        check_epsilon(self.epsilon)
    }

    pub fn combine(&self, c: &LossComponents) -> f64 {
        self.w_char * c.charbonnier
            + self.w_tg * c.temporal_gradient
            + self.w_tv * c.total_variation
    }
}

/// Unweighted loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossComponents {
    pub charbonnier: f64,
    pub temporal_gradient: f64,
    pub total_variation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub components: LossComponents,
    pub total: f64,
}

pub fn combined_loss(
    x: &VideoSequence,
    reference: &VideoSequence,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let components = LossComponents {
        charbonnier: charbonnier(x, reference, weights.epsilon)?,
        temporal_gradient: tg_loss(x, reference, weights.epsilon)?,
        total_variation: tv_loss(x),
    };
    Ok(LossBreakdown {
        total: weights.combine(&components),
        components,
    })
}

/// Named per-frame series plus scalar aggregates and free-form notes.
///
/// Series are indexed by absolute frame number; `None` marks frames a series
/// does not cover.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub video: String,
    pub frame_count: usize,
    pub scale: SampleScale,
    pub psnr_cap: f64,
    pub series: IndexMap<String, Vec<Option<f64>>>,
    pub aggregates: IndexMap<String, f64>,
    pub notes: IndexMap<String, String>,
}

impl MetricsReport {
    pub fn new(video: impl Into<String>, frame_count: usize, scale: SampleScale) -> Self {
        MetricsReport {
            video: video.into(),
            frame_count,
            scale,
            psnr_cap: DEFAULT_PSNR_CAP,
            series: IndexMap::new(),
            aggregates: IndexMap::new(),
            notes: IndexMap::new(),
        }
    }

    /// Appends the contents of `other`; later keys overwrite earlier ones.
    pub fn merge(&mut self, other: MetricsReport) {
        self.series.extend(other.series);
        self.aggregates.extend(other.aggregates);
        self.notes.extend(other.notes);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{ChromaLayout, Rational};
    use proptest::prelude::*;

    fn fps() -> Rational {
        Rational::new(25, 1).unwrap()
    }

    fn seq_of(frames: Vec<Vec<Vec<f64>>>, scale: SampleScale) -> VideoSequence {
        let frames = frames
            .into_iter()
            .map(|rows| Frame::mono(Plane::from_rows(&rows).unwrap(), scale))
            .collect();
        VideoSequence::new(frames, fps(), "t").unwrap()
    }

    #[test]
    fn psnr_identical_is_marker() {
        let f = Frame::filled(3, 2, ChromaLayout::Yuv420, SampleScale::EightBit, 9.0);
        assert_eq!(
            psnr_frame(&f, &f, 255.0, PsnrPlanes::All).unwrap(),
            Psnr::Identical
        );
        assert_eq!(Psnr::Identical.capped(DEFAULT_PSNR_CAP), 100.0);
    }

    #[test]
    fn psnr_unit_half_mse() {
        let a = Frame::mono(Plane::from_rows(&[[0.0, 0.0]]).unwrap(), SampleScale::Unit);
        let b = Frame::mono(Plane::from_rows(&[[0.0, 1.0]]).unwrap(), SampleScale::Unit);
        let Psnr::Db(v) = psnr_frame(&a, &b, 1.0, PsnrPlanes::Luma).unwrap() else {
            panic!()
        };
        assert!((v - 3.010300).abs() < 1e-6, "{v}");
    }

    #[test]
    fn psnr_eight_bit_unit_error() {
        let a = Frame::filled(4, 4, ChromaLayout::Mono, SampleScale::EightBit, 10.0);
        let b = Frame::filled(4, 4, ChromaLayout::Mono, SampleScale::EightBit, 11.0);
        let v = psnr_frame(&a, &b, 255.0, PsnrPlanes::Luma)
            .unwrap()
            .capped(100.0);
        assert!((v - 48.130804).abs() < 1e-6, "{v}");
    }

    #[test]
    fn psnr_luma_ignores_chroma_but_all_planes_does_not() {
        let a = Frame::filled(2, 2, ChromaLayout::Yuv420, SampleScale::EightBit, 10.0);
        let mut b = a.clone();
        b.plane_mut(1).set(0, 0, 20.0);
        assert!(psnr_frame(&a, &b, 255.0, PsnrPlanes::Luma)
            .unwrap()
            .is_identical());
        // 100 / 6 samples
        let mse = mse_frame(&a, &b, PsnrPlanes::All).unwrap();
        assert!((mse - 100.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_shape_mismatch() {
        let a = Frame::filled(2, 2, ChromaLayout::Mono, SampleScale::EightBit, 0.0);
        let b = Frame::filled(2, 3, ChromaLayout::Mono, SampleScale::EightBit, 0.0);
        assert!(matches!(
            psnr_frame(&a, &b, 255.0, PsnrPlanes::Luma),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn sequence_psnr_mean_and_cap() {
        let x = seq_of(vec![vec![vec![1.0, 2.0]]; 3], SampleScale::EightBit);
        let r = psnr_sequence(&x, &x, &PsnrOptions::default()).unwrap();
        assert_eq!(r.aggregates["psnr_mean"], 100.0);
        assert_eq!(r.notes["identical_frames"], "3");
        assert_eq!(r.series["psnr"], vec![Some(100.0); 3]);

        assert_eq!(mean_capped(&[Psnr::Db(30.0), Psnr::Db(40.0)], 100.0), 35.0);

        let y = seq_of(vec![vec![vec![1.0, 2.0]]; 2], SampleScale::EightBit);
        assert!(matches!(
            psnr_sequence(&x, &y, &PsnrOptions::default()),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn delta_against_self_is_zero() {
        let s = [31.5, 100.0, 28.25];
        assert_eq!(delta_series(&s, &s), vec![0.0; 3]);
    }

    #[test]
    fn charbonnier_examples() {
        let x = seq_of(vec![vec![vec![5.0, 7.0]]], SampleScale::EightBit);
        assert_eq!(charbonnier(&x, &x, 1e-3).unwrap(), 1e-3);

        let a = seq_of(vec![vec![vec![3.0]]], SampleScale::EightBit);
        let b = seq_of(vec![vec![vec![0.0]]], SampleScale::EightBit);
        let v = charbonnier(&a, &b, 1e-3).unwrap();
        assert!((v - (9.0f64 + 1e-6).sqrt()).abs() < 1e-15);
        assert!((v - 3.000000167).abs() < 1e-9);
        assert!(charbonnier(&a, &b, 0.0).is_err());
    }

    #[test]
    fn tv_examples() {
        let c = seq_of(vec![vec![vec![4.0; 3]; 3]; 2], SampleScale::EightBit);
        assert_eq!(tv_loss(&c), 0.0);
        let a = seq_of(vec![vec![vec![0.0, 1.0]]], SampleScale::Unit);
        assert_eq!(tv_loss(&a), 0.5);
        let b = seq_of(
            vec![vec![vec![0.0, 1.0], vec![0.0, 1.0]]],
            SampleScale::Unit,
        );
        assert_eq!(tv_loss(&b), 0.5);
    }

    #[test]
    fn tg_examples() {
        let x = seq_of(vec![vec![vec![0.0]], vec![vec![1.0]]], SampleScale::Unit);
        let r = seq_of(vec![vec![vec![0.0]], vec![vec![0.0]]], SampleScale::Unit);
        assert_eq!(tg_loss(&x, &x, 1e-3).unwrap(), 1e-3);
        let v = tg_loss(&x, &r, 1e-3).unwrap();
        assert!((v - (1.0f64 + 1e-6).sqrt()).abs() < 1e-15);

        let still_a = seq_of(vec![vec![vec![3.0, 9.0]]; 4], SampleScale::EightBit);
        let still_b = seq_of(vec![vec![vec![200.0, 1.0]]; 4], SampleScale::EightBit);
        assert_eq!(tg_loss(&still_a, &still_b, 1e-3).unwrap(), 1e-3);

        let one = seq_of(vec![vec![vec![0.0]]], SampleScale::Unit);
        assert!(matches!(
            tg_loss(&one, &one, 1e-3),
            Err(Error::InsufficientFrames { .. })
        ));
    }

    #[test]
    fn combined_examples() {
        let w = LossWeights::default();
        let c = LossComponents {
            charbonnier: 0.1,
            temporal_gradient: 0.2,
            total_variation: 0.3,
        };
        assert!((w.combine(&c) - 0.10023).abs() < 1e-15);
        let zero = LossWeights {
            w_char: 0.0,
            w_tg: 0.0,
            w_tv: 0.0,
            ..w
        };
        assert_eq!(zero.combine(&c), 0.0);

        let x = seq_of(
            vec![vec![vec![0.0, 10.0]], vec![vec![5.0, 5.0]]],
            SampleScale::EightBit,
        );
        let b = combined_loss(&x, &x, &w).unwrap();
        let expected = 1e-3 + 1e-3 * 1e-3 + 1e-4 * tv_loss(&x);
        assert!((b.total - expected).abs() < 1e-15);
        assert!(LossWeights { w_tg: -1.0, ..w }.validate().is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (VideoSequence, VideoSequence)> {
        (1usize..4, 1usize..4, 2usize..4).prop_flat_map(|(w, h, n)| {
            let len = w * h * n;
            (
                proptest::collection::vec(0.0f64..255.0, len),
                proptest::collection::vec(0.0f64..255.0, len),
            )
                .prop_map(move |(a, b)| {
                    let build = |d: Vec<f64>| {
                        let frames = d
                            .chunks(w * h)
                            .map(|c| {
                                Frame::mono(
                                    Plane::new(w, h, c.to_vec()).unwrap(),
                                    SampleScale::EightBit,
                                )
                            })
                            .collect();
                        VideoSequence::new(frames, Rational::new(25, 1).unwrap(), "p").unwrap()
                    };
                    (build(a), build(b))
                })
        })
    }

    proptest! {
        #[test]
        fn psnr_is_symmetric((a, b) in arb_pair()) {
            let p = psnr_per_frame(&a, &b, PsnrPlanes::Luma).unwrap();
            let q = psnr_per_frame(&b, &a, PsnrPlanes::Luma).unwrap();
            prop_assert_eq!(p, q);
        }

        #[test]
        fn charbonnier_bounded_below_and_monotone((a, b) in arb_pair(), e1 in 1e-6f64..1.0, e2 in 1e-6f64..1.0) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let c_lo = charbonnier(&a, &b, lo).unwrap();
            let c_hi = charbonnier(&a, &b, hi).unwrap();
            prop_assert!(c_lo >= lo);
            prop_assert!(c_lo <= c_hi);
            if a != b {
                prop_assert!(c_lo > lo);
            }
        }

        #[test]
        fn tg_ignores_shared_per_frame_offsets((a, b) in arb_pair(), offsets in proptest::collection::vec(-50.0f64..50.0, 4)) {
            let shift = |s: &VideoSequence| {
                let frames = s.frames().iter().enumerate()
                    .map(|(i, f)| f.map_samples(|v| v + offsets[i % offsets.len()].round()))
                    .collect();
                s.with_frames(frames).unwrap()
            };
            let base = tg_loss(&a, &b, 1e-3).unwrap();
            let moved = tg_loss(&shift(&a), &shift(&b), 1e-3).unwrap();
            prop_assert!((base - moved).abs() <= 1e-12 * base.max(1.0));
        }

        #[test]
        fn combined_with_char_only_is_charbonnier((a, b) in arb_pair()) {
            let w = LossWeights { w_char: 1.0, w_tg: 0.0, w_tv: 0.0, epsilon: 1e-3 };
            prop_assert_eq!(combined_loss(&a, &b, &w).unwrap().total, charbonnier(&a, &b, 1e-3).unwrap());
        }
    }
}
