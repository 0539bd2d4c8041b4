//! Planar frames and video sequences with real-valued samples.
//!
//! Samples are `f64` throughout. Quantization to 8-bit integers only happens
//! when a sequence is written out (see [`crate::vio`]).

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vio::ContainerTags;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChromaLayout {
    Mono,
    #[serde(rename = "yuv420")]
    Yuv420,
}

impl ChromaLayout {
    pub fn plane_count(self) -> usize {
        match self {
            ChromaLayout::Mono => 1,
            ChromaLayout::Yuv420 => 3,
        }
    }

    /// Dimensions of plane `index` for a `width`×`height` luma plane.
    pub fn plane_dims(self, index: usize, width: usize, height: usize) -> (usize, usize) {
        if index == 0 {
            (width, height)
        } else {
            (width.div_ceil(2), height.div_ceil(2))
        }
    }

    pub fn frame_samples(self, width: usize, height: usize) -> usize {
        (0..self.plane_count())
            .map(|i| {
                let (w, h) = self.plane_dims(i, width, height);
                w * h
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleScale {
    /// Samples in `[0, 1]`.
    Unit,
    /// Samples in `[0, 255]`.
    EightBit,
}

impl SampleScale {
    pub fn max_value(self) -> f64 {
        match self {
            SampleScale::Unit => 1.0,
            SampleScale::EightBit => 255.0,
        }
    }
}

/// Frame rate as an exact ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rational {
    pub num: u32,
    pub den: u32,
}

impl Rational {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidParameter(format!(
                "frame rate {num}:{den} must have positive terms"
            )));
        }
        Ok(Rational { num, den })
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.num, self.den)
    }
}

/// A single 2-D grid of samples in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "plane dimensions {width}x{height} must be positive"
            )));
        }
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} samples supplied for a {width}x{height} plane",
                data.len()
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "plane dimensions must be positive");
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "plane dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    /// Builds a plane from row slices; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(width * height);
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::ShapeMismatch("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Plane::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Shape shared by frames that can be combined sample-by-sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FrameShape {
    pub width: usize,
    pub height: usize,
    pub layout: ChromaLayout,
}

impl fmt::Display for FrameShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} {:?}", self.width, self.height, self.layout)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    planes: Vec<Plane>,
    layout: ChromaLayout,
    scale: SampleScale,
}

impl Frame {
    pub fn new(planes: Vec<Plane>, layout: ChromaLayout, scale: SampleScale) -> Result<Self> {
        if planes.len() != layout.plane_count() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} layout needs {} planes, got {}",
                layout,
                layout.plane_count(),
                planes.len()
            )));
        }
        let (w, h) = (planes[0].width, planes[0].height);
        for (i, p) in planes.iter().enumerate().skip(1) {
            let expected = layout.plane_dims(i, w, h);
            if (p.width, p.height) != expected {
                return Err(Error::ShapeMismatch(format!(
                    "plane {i} is {}x{}, expected {}x{}",
                    p.width, p.height, expected.0, expected.1
                )));
            }
        }
        Ok(Frame {
            planes,
            layout,
            scale,
        })
    }

    pub fn mono(luma: Plane, scale: SampleScale) -> Self {
        Frame {
            planes: vec![luma],
            layout: ChromaLayout::Mono,
            scale,
        }
    }

    pub fn filled(
        width: usize,
        height: usize,
        layout: ChromaLayout,
        scale: SampleScale,
        value: f64,
    ) -> Self {
        let planes = (0..layout.plane_count())
            .map(|i| {
                let (w, h) = layout.plane_dims(i, width, height);
                Plane::filled(w, h, value)
            })
            .collect();
        Frame {
            planes,
            layout,
            scale,
        }
    }

    pub fn width(&self) -> usize {
        self.planes[0].width
    }

    pub fn height(&self) -> usize {
        self.planes[0].height
    }

    pub fn layout(&self) -> ChromaLayout {
        self.layout
    }

    pub fn scale(&self) -> SampleScale {
        self.scale
    }

    pub fn shape(&self) -> FrameShape {
        FrameShape {
            width: self.width(),
            height: self.height(),
            layout: self.layout,
        }
    }

    pub fn luma(&self) -> &Plane {
        &self.planes[0]
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn plane(&self, index: usize) -> &Plane {
        &self.planes[index]
    }

    pub fn plane_mut(&mut self, index: usize) -> &mut Plane {
        &mut self.planes[index]
    }

    pub fn into_planes(self) -> Vec<Plane> {
        self.planes
    }

    pub fn sample_count(&self) -> usize {
        self.planes.iter().map(|p| p.data.len()).sum()
    }

    /// Iterates over every sample, plane by plane.
    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.planes.iter().flat_map(|p| p.data.iter().copied())
    }

    /// Same dimensions, layout and sample scale.
    pub fn is_compatible(&self, other: &Frame) -> bool {
        self.shape() == other.shape() && self.scale == other.scale
    }

    pub fn map_planes(&self, mut f: impl FnMut(usize, &Plane) -> Plane) -> Frame {
        Frame {
            planes: self
                .planes
                .iter()
                .enumerate()
                .map(|(i, p)| f(i, p))
                .collect(),
            layout: self.layout,
            scale: self.scale,
        }
    }

    pub fn map_samples(&self, f: impl Fn(f64) -> f64) -> Frame {
        self.map_planes(|_, p| p.map(&f))
    }

    /// Clamps every sample into `[0, scale max]`.
    pub fn clamped(&self) -> Frame {
        let max = self.scale.max_value();
        self.map_samples(|v| v.clamp(0.0, max))
    }

    /// Rescales samples to another nominal range.
    pub fn to_scale(&self, scale: SampleScale) -> Frame {
        if scale == self.scale {
            return self.clone();
        }
        let factor = scale.max_value() / self.scale.max_value();
        let mut out = self.map_samples(|v| v * factor);
        out.scale = scale;
        out
    }

    /// Drops chroma planes.
    pub fn to_mono(&self) -> Frame {
        Frame::mono(self.planes[0].clone(), self.scale)
    }

    /// Adds neutral (mid-range) chroma planes to a mono frame.
    pub fn to_yuv420(&self) -> Frame {
        if self.layout == ChromaLayout::Yuv420 {
            return self.clone();
        }
        let (cw, ch) = ChromaLayout::Yuv420.plane_dims(1, self.width(), self.height());
        let mid = match self.scale {
            SampleScale::EightBit => 128.0,
            SampleScale::Unit => 128.0 / 255.0,
        };
        Frame {
            planes: vec![
                self.planes[0].clone(),
                Plane::filled(cw, ch, mid),
                Plane::filled(cw, ch, mid),
            ],
            layout: ChromaLayout::Yuv420,
            scale: self.scale,
        }
    }
}

/// Per-sample weighted sum `Σ wᵢ·framesᵢ`, accumulated in list order. No clamping.
pub fn frame_linear_combine(frames: &[&Frame], weights: &[f64]) -> Result<Frame> {
    let first = frames.first().ok_or(Error::EmptySequence)?;
    if weights.len() != frames.len() {
        return Err(Error::LengthMismatch {
            expected: frames.len(),
            actual: weights.len(),
        });
    }
    for f in &frames[1..] {
        if !f.is_compatible(first) {
            return Err(Error::ShapeMismatch(format!(
                "cannot combine {} with {}",
                first.shape(),
                f.shape()
            )));
        }
    }
    Ok(first.map_planes(|pi, plane| {
        let mut data = vec![0.0; plane.data.len()];
        for (frame, &w) in frames.iter().zip(weights) {
            for (acc, &v) in data.iter_mut().zip(&frame.planes[pi].data) {
                *acc += w * v;
            }
        }
        Plane {
            width: plane.width,
            height: plane.height,
            data,
        }
    }))
}

/// An ordered, non-empty run of frames sharing one shape and sample scale.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSequence {
    frames: Vec<Frame>,
    fps: Rational,
    name: String,
    tags: ContainerTags,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>, fps: Rational, name: impl Into<String>) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptySequence)?;
        for (i, f) in frames.iter().enumerate().skip(1) {
            if !f.is_compatible(first) {
                return Err(Error::ShapeMismatch(format!(
                    "frame {i} is {} ({:?}), sequence is {} ({:?})",
                    f.shape(),
                    f.scale(),
                    first.shape(),
                    first.scale()
                )));
            }
        }
        Ok(VideoSequence {
            frames,
            fps,
            name: name.into(),
            tags: ContainerTags::default(),
        })
    }

    /// Replaces the frames, keeping fps, name and container tags.
    pub fn with_frames(&self, frames: Vec<Frame>) -> Result<Self> {
        let mut seq = VideoSequence::new(frames, self.fps, self.name.clone())?;
        seq.tags = self.tags.clone();
        Ok(seq)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_tags(mut self, tags: ContainerTags) -> Self {
        self.tags = tags;
        self
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn frame(&self, index: usize) -> &Frame {
        &self.frames[index]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> Rational {
        self.fps
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tags(&self) -> &ContainerTags {
        &self.tags
    }

    pub fn shape(&self) -> FrameShape {
        self.frames[0].shape()
    }

    pub fn scale(&self) -> SampleScale {
        self.frames[0].scale()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    /// Frames in `range`, which must be non-empty and in bounds.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::Window {
                start: range.start,
                frames: self.len(),
            });
        }
        self.with_frames(self.frames[range].to_vec())
    }

    /// The first `min(n, len)` frames.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        self.slice(0..n.min(self.len()))
    }

    pub fn to_scale(&self, scale: SampleScale) -> Self {
        let mut out = self.clone();
        for f in &mut out.frames {
            *f = f.to_scale(scale);
        }
        out
    }

    /// Same frame count, shapes and scale.
    pub fn is_compatible(&self, other: &VideoSequence) -> bool {
        self.len() == other.len() && self.frames[0].is_compatible(&other.frames[0])
    }

    pub(crate) fn check_matching(&self, other: &VideoSequence) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        if !self.frames[0].is_compatible(&other.frames[0]) {
            return Err(Error::ShapeMismatch(format!(
                "{} ({:?}) vs {} ({:?})",
                self.shape(),
                self.scale(),
                other.shape(),
                other.scale()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mono(rows: &[&[f64]]) -> Frame {
        Frame::mono(Plane::from_rows(rows).unwrap(), SampleScale::EightBit)
    }

    #[test]
    fn chroma_planes_round_up_for_odd_dimensions() {
        let f = Frame::filled(5, 3, ChromaLayout::Yuv420, SampleScale::EightBit, 1.0);
        assert_eq!((f.plane(1).width(), f.plane(1).height()), (3, 2));
        assert_eq!(f.sample_count(), 15 + 2 * 6);
        assert_eq!(ChromaLayout::Yuv420.frame_samples(2, 2), 6);
    }

    #[test]
    fn frame_rejects_bad_chroma_dimensions() {
        let planes = vec![
            Plane::filled(4, 4, 0.0),
            Plane::filled(2, 2, 0.0),
            Plane::filled(3, 2, 0.0),
        ];
        assert!(matches!(
            Frame::new(planes, ChromaLayout::Yuv420, SampleScale::Unit),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn linear_combine_single_frame_with_unit_weight() {
        let f = mono(&[&[1.5, 2.0], &[3.0, 4.25]]);
        assert_eq!(frame_linear_combine(&[&f], &[1.0]).unwrap(), f);
    }

    #[test]
    fn linear_combine_identical_halves() {
        let f = mono(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(frame_linear_combine(&[&f, &f], &[0.5, 0.5]).unwrap(), f);
    }

    #[test]
    fn linear_combine_midpoint() {
        let a = mono(&[&[0.0]]);
        let b = mono(&[&[2.0]]);
        let m = frame_linear_combine(&[&a, &b], &[0.5, 0.5]).unwrap();
        assert_eq!(m.luma().data(), &[1.0]);
    }

    #[test]
    fn linear_combine_does_not_clamp() {
        let a = mono(&[&[200.0]]);
        let m = frame_linear_combine(&[&a, &a], &[1.0, 1.0]).unwrap();
        assert_eq!(m.luma().data(), &[400.0]);
    }

    #[test]
    fn linear_combine_rejects_shape_mismatch() {
        let a = mono(&[&[0.0, 1.0]]);
        let b = mono(&[&[0.0], &[1.0]]);
        assert!(matches!(
            frame_linear_combine(&[&a, &b], &[0.5, 0.5]),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            frame_linear_combine(&[&a, &a], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn sequence_requires_frames_and_matching_shapes() {
        let fps = Rational::new(25, 1).unwrap();
        assert!(matches!(
            VideoSequence::new(vec![], fps, "x"),
            Err(Error::EmptySequence)
        ));
        let a = mono(&[&[0.0, 1.0]]);
        let b = mono(&[&[0.0], &[1.0]]);
        assert!(VideoSequence::new(vec![a.clone(), b], fps, "x").is_err());
        let c = a.to_scale(SampleScale::Unit);
        assert!(VideoSequence::new(vec![a, c], fps, "x").is_err());
    }

    #[test]
    fn scale_conversion_round_trips_and_clamps() {
        let f = mono(&[&[0.0, 51.0, 255.0, 300.0]]);
        let u = f.to_scale(SampleScale::Unit);
        assert_eq!(u.luma().data()[1], 0.2);
        assert_eq!(u.clamped().luma().data()[3], 1.0);
        assert!(Rational::new(0, 1).is_err());
    }
}
