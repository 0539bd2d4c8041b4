//! Child-process bridge checks using POSIX shell utilities as stand-in tools.

use ldvqe_core::codec::encode_external;
use ldvqe_core::enhance::{enhance_checked, enhancer_external};
use ldvqe_core::process::{pipe_through, CommandTemplate};
use ldvqe_core::{Error, Frame, Plane, Rational, SampleScale, VideoSequence};

fn clip(n: usize) -> VideoSequence {
    let frames = (0..n)
        .map(|t| {
            Frame::mono(
                Plane::from_fn(6, 4, |x, y| ((x * 31 + y * 17 + t * 5) % 256) as f64),
                SampleScale::EightBit,
            )
        })
        .collect();
    VideoSequence::new(frames, Rational { num: 25, den: 1 }, "clip").unwrap()
}

#[test]
fn cat_is_a_lossless_round_trip() {
    let seq = clip(5);
    let out = pipe_through("cat", &seq).unwrap();
    assert_eq!(out.frames(), seq.frames());
    let enc = encode_external(
        &seq,
        &CommandTemplate::new("cat {extra_args}").unwrap(),
        "-",
    )
    .unwrap();
    assert_eq!(enc.frames(), seq.frames());
}

#[test]
fn unit_scale_input_comes_back_in_unit_scale() {
    let seq = clip(2).to_scale(SampleScale::Unit);
    let out = enhance_checked(
        &enhancer_external(CommandTemplate::new("cat").unwrap()),
        &seq,
    )
    .unwrap();
    assert_eq!(out.scale(), SampleScale::Unit);
    for (a, b) in out.frames().iter().zip(seq.frames()) {
        for (x, y) in a.samples().zip(b.samples()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn failing_tool_reports_status_and_stderr() {
    let err = pipe_through("echo broken >&2; exit 3", &clip(2)).unwrap_err();
    match &err {
        Error::ExternalTool { status, stderr, .. } => {
            assert!(status.contains('3'), "{status}");
            assert_eq!(stderr, "broken");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(err.code(), "external-tool");
}

#[test]
fn dropped_frames_are_protocol_errors() {
    let seq = clip(4);
    // Header (one line) plus two complete frames: "FRAME\n" + 24 bytes each.
    let header = "YUV4MPEG2 W6 H4 F25:1 Cmono\n".len();
    let keep = header + 2 * (6 + 24);
    let cmd = CommandTemplate::new(format!("head -c {keep}")).unwrap();
    let err = encode_external(&seq, &cmd, "").unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err:?}");
    let err = enhance_checked(&enhancer_external(cmd), &seq).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err:?}");
}

#[test]
fn garbage_output_is_a_protocol_error() {
    let err = pipe_through("cat >/dev/null; echo nonsense", &clip(1)).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err:?}");
}

#[test]
fn tool_that_ignores_stdin_does_not_deadlock() {
    let big = VideoSequence::new(
        (0..40)
            .map(|_| Frame::mono(Plane::filled(256, 256, 7.0), SampleScale::EightBit))
            .collect(),
        Rational { num: 25, den: 1 },
        "big",
    )
    .unwrap();
    let err = pipe_through("exit 0", &big).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err:?}");
}
