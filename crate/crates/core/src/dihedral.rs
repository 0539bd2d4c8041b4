//! The eight symmetries of the square acting on frames.
//!
//! An element is stored as `rot^k ∘ hflip^f`: the optional horizontal flip is
//! applied first, then `k` counter-clockwise quarter turns.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ChromaLayout, Frame, FrameShape, Plane};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DihedralElement {
    flip: bool,
    quarter_turns: u8,
}

impl DihedralElement {
    pub const IDENTITY: Self = Self::new(false, 0);
    pub const ROT90: Self = Self::new(false, 1);
    pub const ROT180: Self = Self::new(false, 2);
    pub const ROT270: Self = Self::new(false, 3);
    pub const HFLIP: Self = Self::new(true, 0);
    pub const HFLIP_ROT90: Self = Self::new(true, 1);
    pub const HFLIP_ROT180: Self = Self::new(true, 2);
    pub const HFLIP_ROT270: Self = Self::new(true, 3);

    /// All eight elements in canonical index order.
    pub const ALL: [Self; 8] = [
        Self::IDENTITY,
        Self::ROT90,
        Self::ROT180,
        Self::ROT270,
        Self::HFLIP,
        Self::HFLIP_ROT90,
        Self::HFLIP_ROT180,
        Self::HFLIP_ROT270,
    ];

    const fn new(flip: bool, quarter_turns: u8) -> Self {
        DihedralElement {
            flip,
            quarter_turns: quarter_turns % 4,
        }
    }

    /// Position in [`DihedralElement::ALL`].
    pub fn index(self) -> usize {
        (self.flip as usize) * 4 + self.quarter_turns as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn is_flip(self) -> bool {
        self.flip
    }

    pub fn quarter_turns(self) -> u8 {
        self.quarter_turns
    }

    /// True when width and height are exchanged.
    pub fn swaps_axes(self) -> bool {
        self.quarter_turns % 2 == 1
    }

    pub fn inverse(self) -> Self {
        if self.flip {
            self
        } else {
            Self::new(false, (4 - self.quarter_turns) % 4)
        }
    }

    /// The element equivalent to applying `self` and then `next`.
    pub fn then(self, next: Self) -> Self {
        // hflip ∘ rot^a = rot^-a ∘ hflip
        let turns = if next.flip {
            next.quarter_turns + 4 - self.quarter_turns
        } else {
            next.quarter_turns + self.quarter_turns
        };
        Self::new(self.flip ^ next.flip, turns)
    }

    /// Whether this element can act on frames of `shape` without resampling chroma.
    pub fn supports(self, shape: FrameShape) -> bool {
        !(self.swaps_axes()
            && shape.layout == ChromaLayout::Yuv420
            && (shape.width % 2 == 1 || shape.height % 2 == 1))
    }

    /// Output shape for an input of `shape`.
    pub fn output_shape(self, shape: FrameShape) -> FrameShape {
        if self.swaps_axes() {
            FrameShape {
                width: shape.height,
                height: shape.width,
                ..shape
            }
        } else {
            shape
        }
    }

    /// Maps input coordinate `(x, y)` of a `w`×`h` grid to its output coordinate.
    #[inline]
    pub fn map_coord(self, x: usize, y: usize, w: usize, h: usize) -> (usize, usize) {
        let x = if self.flip { w - 1 - x } else { x };
        match self.quarter_turns {
            0 => (x, y),
            1 => (y, w - 1 - x),
            2 => (w - 1 - x, h - 1 - y),
            _ => (h - 1 - y, x),
        }
    }

    pub fn apply_plane(self, plane: &Plane) -> Plane {
        let (w, h) = (plane.width(), plane.height());
        let (ow, oh) = if self.swaps_axes() { (h, w) } else { (w, h) };
        let mut out = vec![0.0; w * h];
        let src = plane.data();
        for y in 0..h {
            for x in 0..w {
                let (ox, oy) = self.map_coord(x, y, w, h);
                out[oy * ow + ox] = src[y * w + x];
            }
        }
        Plane::new(ow, oh, out).expect("dihedral map preserves sample count")
    }
}

/// Transforms every plane of `frame` by `t`.
///
/// Quarter turns of 4:2:0 frames with an odd dimension are rejected since the
/// chroma grid would not survive the rotation.
pub fn apply_dihedral(frame: &Frame, t: DihedralElement) -> Result<Frame> {
    if t == DihedralElement::IDENTITY {
        return Ok(frame.clone());
    }
    if !t.supports(frame.shape()) {
        return Err(Error::Unsupported(format!(
            "{t} on a 4:2:0 frame with odd dimensions {}x{}",
            frame.width(),
            frame.height()
        )));
    }
    Ok(frame.map_planes(|_, p| t.apply_plane(p)))
}

pub fn inverse_dihedral(t: DihedralElement) -> DihedralElement {
    t.inverse()
}

impl fmt::Display for DihedralElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rot = match self.quarter_turns {
            0 => "",
            1 => "rot90",
            2 => "rot180",
            _ => "rot270",
        };
        match (self.flip, rot.is_empty()) {
            (false, true) => f.write_str("identity"),
            (false, false) => f.write_str(rot),
            (true, true) => f.write_str("hflip"),
            (true, false) => write!(f, "hflip_{rot}"),
        }
    }
}

impl FromStr for DihedralElement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.to_string() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown dihedral element `{s}`")))
    }
}

impl TryFrom<String> for DihedralElement {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DihedralElement> for String {
    fn from(e: DihedralElement) -> String {
        e.to_string()
    }
}
