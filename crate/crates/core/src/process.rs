//! Streaming a sequence through an external filter process.
//!
//! The child reads YUV4MPEG2 on stdin, writes YUV4MPEG2 on stdout and may log
//! to stderr. It must exit with status 0.

use std::io::{self, Read, Write};
use std::process::{Command, Stdio};
use std::thread;

use crate::error::{Error, Result};
use crate::frame::VideoSequence;
use crate::vio;

pub const EXTRA_ARGS_PLACEHOLDER: &str = "{extra_args}";

/// Shell command line with an optional `{extra_args}` substitution point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommandTemplate {
    template: String,
}

impl CommandTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        if template.trim().is_empty() {
            return Err(Error::InvalidParameter("empty command template".into()));
        }
        Ok(CommandTemplate { template })
    }

    pub fn render(&self, extra_args: &str) -> String {
        self.template.replace(EXTRA_ARGS_PLACEHOLDER, extra_args)
    }

    pub fn as_str(&self) -> &str {
        &self.template
    }
}

/// Runs `command` under `sh -c`, feeding `input` as Y4M and decoding its output.
///
/// Only the exit status and the stream syntax are checked here; frame count
/// and shape checks belong to the caller.
pub fn pipe_through(command: &str, input: &VideoSequence) -> Result<VideoSequence> {
    let mut encoded = Vec::new();
    vio::write_y4m(input, &mut encoded)?;

    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");

    let (out, err) = thread::scope(|s| {
        let writer = s.spawn(move || match stdin.write_all(&encoded) {
            // A filter may legitimately stop reading early.
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
            other => other,
        });
        let err_reader = s.spawn(move || {
            let mut buf = Vec::new();
            stderr.read_to_end(&mut buf).map(|_| buf)
        });
        let mut out = Vec::new();
        let read = stdout.read_to_end(&mut out);
        let wrote = writer.join().expect("stdin writer panicked");
        let err = err_reader.join().expect("stderr reader panicked");
        (read.and(wrote).map(|_| out), err)
    });
    let status = child.wait()?;
    let stderr_text = String::from_utf8_lossy(&err.unwrap_or_default())
        .trim()
        .to_string();
    if !status.success() {
        return Err(Error::ExternalTool {
            command: command.to_string(),
            status: status.to_string(),
            stderr: stderr_text,
        });
    }
    let out = out?;
    let seq = vio::read_y4m(&out[..])
        .map_err(|e| Error::Protocol(format!("`{command}` produced an unreadable stream: {e}")))?;
    Ok(seq.with_name(input.name()))
}

/// Checks that `output` has the frame count and per-frame shape the caller expects.
pub fn check_round_trip(
    what: &str,
    expected: &VideoSequence,
    output: &VideoSequence,
) -> Result<()> {
    if output.len() != expected.len() {
        return Err(Error::Protocol(format!(
            "{what}: expected {} frames, got {}",
            expected.len(),
            output.len()
        )));
    }
    if output.shape() != expected.shape() {
        return Err(Error::Protocol(format!(
            "{what}: expected shape {}, got {}",
            expected.shape(),
            output.shape()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_substitution() {
        let t = CommandTemplate::new("x265 {extra_args} -o -").unwrap();
        assert_eq!(t.render("--qp 37"), "x265 --qp 37 -o -");
        assert!(CommandTemplate::new("  ").is_err());
    }
}
