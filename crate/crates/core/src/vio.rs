//! YUV4MPEG2 and headerless planar YUV streams, plus report serialization.
//!
//! Only 8-bit 4:2:0 (`C420`, `C420jpeg`, `C420mpeg2`) and `Cmono` streams are
//! accepted. Header parameters the reader does not interpret are kept in
//! [`ContainerTags`] and written back verbatim, in their original order, so a
//! read/write cycle reproduces the input byte for byte.

use std::io::{self, BufRead, BufReader, Read, Write};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::frame::{ChromaLayout, Frame, Plane, Rational, SampleScale, VideoSequence};
use crate::metrics::MetricsReport;

const MAGIC: &str = "YUV4MPEG2";
const MAX_LINE: usize = 4096;
const MAX_FRAME_BYTES: usize = 1 << 30;

/// Header parameters carried alongside a sequence so they can be echoed on write.
///
/// `params` holds every header token after the magic, verbatim and in order.
/// `W`, `H`, `F` and `C` are regenerated from the sequence when written.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContainerTags {
    params: Vec<String>,
}

impl ContainerTags {
    fn find(&self, key: char) -> Option<&str> {
        self.params
            .iter()
            .find(|p| p.starts_with(key))
            .map(|p| &p[1..])
    }

    pub fn chroma(&self) -> Option<&str> {
        self.find('C')
    }

    pub fn interlacing(&self) -> Option<&str> {
        self.find('I')
    }

    pub fn aspect(&self) -> Option<&str> {
        self.find('A')
    }

    /// `X` parameters and any tokens with an unrecognised key letter.
    pub fn extensions(&self) -> impl Iterator<Item = &str> {
        self.params
            .iter()
            .filter(|p| !matches!(p.as_bytes()[0], b'W' | b'H' | b'F' | b'I' | b'A' | b'C'))
            .map(String::as_str)
    }
}

/// Parsed YUV4MPEG2 stream header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamHeader {
    pub width: usize,
    pub height: usize,
    pub fps: Rational,
    pub layout: ChromaLayout,
    pub tags: ContainerTags,
}

impl StreamHeader {
    pub fn parse(line: &str) -> Result<Self> {
        let mut tokens = line.split(' ');
        if tokens.next() != Some(MAGIC) {
            return Err(Error::Format("missing YUV4MPEG2 magic".into()));
        }
        let mut width = None;
        let mut height = None;
        let mut fps = None;
        let mut layout = ChromaLayout::Yuv420;
        let mut seen = Vec::new();
        let mut params = Vec::new();
        for tok in tokens {
            let key = tok
                .chars()
                .next()
                .ok_or_else(|| Error::Format("empty header token".into()))?;
            let value = &tok[key.len_utf8()..];
            if matches!(key, 'W' | 'H' | 'F' | 'I' | 'A' | 'C') {
                if seen.contains(&key) {
                    return Err(Error::Format(format!("duplicate header parameter `{key}`")));
                }
                seen.push(key);
            }
            match key {
                'W' => width = Some(parse_dimension(value, "width")?),
                'H' => height = Some(parse_dimension(value, "height")?),
                'F' => fps = Some(parse_ratio(value)?),
                'C' => layout = parse_chroma(value)?,
                _ => {}
            }
            params.push(tok.to_string());
        }
        let width = width.ok_or_else(|| Error::Format("header lacks W parameter".into()))?;
        let height = height.ok_or_else(|| Error::Format("header lacks H parameter".into()))?;
        let fps = fps.ok_or_else(|| Error::Format("header lacks F parameter".into()))?;
        if layout.frame_samples(width, height) > MAX_FRAME_BYTES {
            return Err(Error::Unsupported(format!(
                "{width}x{height} frames exceed the supported size"
            )));
        }
        Ok(StreamHeader {
            width,
            height,
            fps,
            layout,
            tags: ContainerTags { params },
        })
    }

    pub fn for_sequence(seq: &VideoSequence) -> Self {
        StreamHeader {
            width: seq.width(),
            height: seq.height(),
            fps: seq.fps(),
            layout: seq.shape().layout,
            tags: seq.tags().clone(),
        }
    }

    pub fn to_line(&self) -> String {
        let chroma_token = |existing: Option<&str>| -> String {
            match (self.layout, existing) {
                (ChromaLayout::Yuv420, Some(c)) if c.starts_with("420") => format!("C{c}"),
                (ChromaLayout::Yuv420, _) => "C420jpeg".to_string(),
                (ChromaLayout::Mono, _) => "Cmono".to_string(),
            }
        };
        let mut out = vec![MAGIC.to_string()];
        let mut has = [false; 4];
        for p in &self.tags.params {
            let tok = match p.as_bytes()[0] {
                b'W' => {
                    has[0] = true;
                    format!("W{}", self.width)
                }
                b'H' => {
                    has[1] = true;
                    format!("H{}", self.height)
                }
                b'F' => {
                    has[2] = true;
                    format!("F{}", self.fps)
                }
                b'C' => {
                    has[3] = true;
                    chroma_token(Some(&p[1..]))
                }
                _ => p.clone(),
            };
            out.push(tok);
        }
        if !has[0] {
            out.push(format!("W{}", self.width));
        }
        if !has[1] {
            out.push(format!("H{}", self.height));
        }
        if !has[2] {
            out.push(format!("F{}", self.fps));
        }
        if !has[3] && self.layout == ChromaLayout::Mono {
            out.push("Cmono".into());
        }
        out.join(" ")
    }

    pub fn frame_bytes(&self) -> usize {
        self.layout.frame_samples(self.width, self.height)
    }
}

fn parse_dimension(value: &str, what: &str) -> Result<usize> {
    match value.parse::<usize>() {
        Ok(v) if (1..=1 << 16).contains(&v) => Ok(v),
        _ => Err(Error::Format(format!("invalid {what} `{value}`"))),
    }
}

fn parse_ratio(value: &str) -> Result<Rational> {
    let (n, d) = value
        .split_once(':')
        .ok_or_else(|| Error::Format(format!("invalid frame rate `{value}`")))?;
    match (n.parse::<u32>(), d.parse::<u32>()) {
        (Ok(n), Ok(d)) if n >= 1 && d >= 1 => Ok(Rational { num: n, den: d }),
        _ => Err(Error::Format(format!("invalid frame rate `{value}`"))),
    }
}

fn parse_chroma(value: &str) -> Result<ChromaLayout> {
    match value {
        "420" | "420jpeg" | "420mpeg2" => Ok(ChromaLayout::Yuv420),
        "mono" => Ok(ChromaLayout::Mono),
        other => Err(Error::Unsupported(format!("chroma tag `C{other}`"))),
    }
}

/// A decoded YUV4MPEG2 stream including per-frame parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Y4mStream {
    pub sequence: VideoSequence,
    /// Text following `FRAME ` on each marker line, if any.
    pub frame_params: Vec<Option<String>>,
}

enum Line {
    Eof,
    Partial(usize),
    Complete(Vec<u8>),
}

fn read_line<R: BufRead>(r: &mut R) -> io::Result<Line> {
    let mut buf = Vec::new();
    let n = r
        .by_ref()
        .take(MAX_LINE as u64)
        .read_until(b'\n', &mut buf)?;
    if n == 0 {
        return Ok(Line::Eof);
    }
    if buf.last() != Some(&b'\n') {
        return Ok(Line::Partial(buf.len()));
    }
    buf.pop();
    Ok(Line::Complete(buf))
}

pub fn decode_y4m<R: Read>(reader: R) -> Result<Y4mStream> {
    let mut r = BufReader::new(reader);
    let header = match read_line(&mut r)? {
        Line::Eof => return Err(Error::Format("empty stream".into())),
        Line::Partial(n) if n >= MAX_LINE => {
            return Err(Error::Format("header line too long".into()))
        }
        Line::Partial(_) => return Err(Error::Format("unterminated header line".into())),
        Line::Complete(bytes) => {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::Format("header is not valid text".into()))?;
            StreamHeader::parse(&text)?
        }
    };

    let frame_bytes = header.frame_bytes();
    let mut frames = Vec::new();
    let mut frame_params = Vec::new();
    let mut payload = vec![0u8; frame_bytes];
    loop {
        let index = frames.len();
        let marker = match read_line(&mut r)? {
            Line::Eof => break,
            Line::Partial(n) if n < MAX_LINE => {
                return Err(Error::Truncated {
                    frame: index,
                    detail: "incomplete FRAME marker".into(),
                })
            }
            Line::Partial(_) => {
                return Err(Error::Format(format!(
                    "frame {index}: marker line too long"
                )))
            }
            Line::Complete(bytes) => bytes,
        };
        let params = match marker.as_slice() {
            b"FRAME" => None,
            m if m.starts_with(b"FRAME ") => Some(
                String::from_utf8(m[6..].to_vec())
                    .map_err(|_| Error::Format(format!("frame {index}: invalid marker text")))?,
            ),
            _ => {
                return Err(Error::Format(format!(
                    "frame {index}: expected FRAME marker"
                )))
            }
        };
        r.read_exact(&mut payload).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Truncated {
                frame: index,
                detail: format!("expected {frame_bytes} payload bytes"),
            },
            _ => Error::Io(e),
        })?;
        frames.push(frame_from_bytes(
            &payload,
            header.width,
            header.height,
            header.layout,
        ));
        frame_params.push(params);
    }
    let sequence = VideoSequence::new(frames, header.fps, "")?.with_tags(header.tags);
    Ok(Y4mStream {
        sequence,
        frame_params,
    })
}

/// Reads a YUV4MPEG2 stream into an eight-bit sequence.
pub fn read_y4m<R: Read>(reader: R) -> Result<VideoSequence> {
    decode_y4m(reader).map(|s| s.sequence)
}

pub fn encode_y4m<W: Write>(stream: &Y4mStream, mut sink: W) -> Result<()> {
    let seq = &stream.sequence;
    let header = StreamHeader::for_sequence(seq);
    sink.write_all(header.to_line().as_bytes())?;
    sink.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(header.frame_bytes());
    for (i, frame) in seq.frames().iter().enumerate() {
        match stream.frame_params.get(i).and_then(Option::as_deref) {
            Some(p) => writeln!(sink, "FRAME {p}")?,
            None => sink.write_all(b"FRAME\n")?,
        }
        buf.clear();
        frame_to_bytes(frame, &mut buf);
        sink.write_all(&buf)?;
    }
    sink.flush()?;
    Ok(())
}

/// Writes `seq` as YUV4MPEG2, quantizing samples to 8 bits.
pub fn write_y4m<W: Write>(seq: &VideoSequence, sink: W) -> Result<()> {
    let stream = Y4mStream {
        sequence: seq.clone(),
        frame_params: Vec::new(),
    };
    encode_y4m(&stream, sink)
}

/// Slices a headerless planar stream into frames. `fps` must come from the caller.
pub fn read_raw_yuv<R: Read>(
    mut reader: R,
    width: usize,
    height: usize,
    layout: ChromaLayout,
    fps: Rational,
) -> Result<VideoSequence> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "raw frame size {width}x{height} must be positive"
        )));
    }
    let frame_bytes = layout.frame_samples(width, height);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.is_empty() {
        return Err(Error::EmptySequence);
    }
    if bytes.len() % frame_bytes != 0 {
        return Err(Error::Truncated {
            frame: bytes.len() / frame_bytes,
            detail: format!(
                "{} trailing bytes do not form a {frame_bytes}-byte frame",
                bytes.len() % frame_bytes
            ),
        });
    }
    let frames = bytes
        .chunks_exact(frame_bytes)
        .map(|chunk| frame_from_bytes(chunk, width, height, layout))
        .collect();
    VideoSequence::new(frames, fps, "")
}

pub fn write_raw_yuv<W: Write>(seq: &VideoSequence, mut sink: W) -> Result<()> {
    let mut buf = Vec::new();
    for frame in seq.frames() {
        buf.clear();
        frame_to_bytes(frame, &mut buf);
        sink.write_all(&buf)?;
    }
    sink.flush()?;
    Ok(())
}

fn frame_from_bytes(bytes: &[u8], width: usize, height: usize, layout: ChromaLayout) -> Frame {
    let mut offset = 0;
    let planes = (0..layout.plane_count())
        .map(|i| {
            let (w, h) = layout.plane_dims(i, width, height);
            let data = bytes[offset..offset + w * h]
                .iter()
                .map(|&b| b as f64)
                .collect();
            offset += w * h;
            Plane::new(w, h, data).expect("plane size derived from layout")
        })
        .collect();
    Frame::new(planes, layout, SampleScale::EightBit).expect("planes derived from layout")
}

/// Rounds half away from zero, then clamps to `[0, 255]`.
pub fn quantize_sample(v: f64) -> u8 {
    let r = v.round();
    if r.is_nan() {
        0
    } else {
        r.clamp(0.0, 255.0) as u8
    }
}

fn frame_to_bytes(frame: &Frame, out: &mut Vec<u8>) {
    let factor = 255.0 / frame.scale().max_value();
    for plane in frame.planes() {
        if factor == 1.0 {
            out.extend(plane.data().iter().map(|&v| quantize_sample(v)));
        } else {
            out.extend(plane.data().iter().map(|&v| quantize_sample(v * factor)));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidParameter(format!(
                "unknown report format `{other}`"
            ))),
        }
    }
}

fn fixed6(v: f64) -> String {
    format!("{v:.6}")
}

fn json_number(v: f64) -> Value {
    // Round-trip through the 6-decimal text form so JSON and CSV agree.
    fixed6(v)
        .parse::<f64>()
        .ok()
        .and_then(serde_json::Number::from_f64)
        .map_or(Value::Null, Value::Number)
}

/// Writes `report` in the requested format.
///
/// CSV output is the per-frame table: a `frame_index` column followed by one
/// column per series in insertion order. Missing values are empty cells.
/// JSON output also carries aggregates, notes and metadata.
pub fn write_report<W: Write>(report: &MetricsReport, format: ReportFormat, sink: W) -> Result<()> {
    match format {
        ReportFormat::Csv => write_series_csv(report, sink),
        ReportFormat::Json => {
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, &report_json(report))
                .map_err(io::Error::from)?;
            sink.write_all(b"\n")?;
            sink.flush()?;
            Ok(())
        }
    }
}

fn write_series_csv<W: Write>(report: &MetricsReport, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["frame_index".to_string()];
    header.extend(report.series.keys().cloned());
    w.write_record(&header).map_err(csv_error)?;
    let rows = report.series.values().map(Vec::len).max().unwrap_or(0);
    for i in 0..rows {
        let mut record = vec![i.to_string()];
        for values in report.series.values() {
            record.push(
                values
                    .get(i)
                    .copied()
                    .flatten()
                    .map(fixed6)
                    .unwrap_or_default(),
            );
        }
        w.write_record(&record).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Scalar entries of a report (metadata, aggregates, notes) as `key,value` CSV.
pub fn write_summary_csv<W: Write>(report: &MetricsReport, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["key", "value"]).map_err(csv_error)?;
    w.write_record(["video", &report.video])
        .map_err(csv_error)?;
    w.write_record(["frame_count", &report.frame_count.to_string()])
        .map_err(csv_error)?;
    w.write_record(["psnr_cap", &fixed6(report.psnr_cap)])
        .map_err(csv_error)?;
    for (k, v) in &report.aggregates {
        w.write_record([k.as_str(), &fixed6(*v)])
            .map_err(csv_error)?;
    }
    for (k, v) in &report.notes {
        w.write_record([k.as_str(), v.as_str()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(io::Error::other(format!("{other:?}"))),
    }
}

fn report_json(report: &MetricsReport) -> Value {
    let aggregates: Map<String, Value> = report
        .aggregates
        .iter()
        .map(|(k, v)| (k.clone(), json_number(*v)))
        .collect();
    let notes: Map<String, Value> = report
        .notes
        .iter()
        .map(|(k, v)| (k.clone(), Value::String(v.clone())))
        .collect();
    let series: Map<String, Value> = report
        .series
        .iter()
        .map(|(k, vals)| {
            let arr = vals
                .iter()
                .map(|v| v.map_or(Value::Null, json_number))
                .collect();
            (k.clone(), Value::Array(arr))
        })
        .collect();
    json!({
        "video": report.video,
        "frame_count": report.frame_count,
        "sample_scale": report.scale,
        "psnr_cap": json_number(report.psnr_cap),
        "aggregates": aggregates,
        "notes": notes,
        "series": series,
    })
}
