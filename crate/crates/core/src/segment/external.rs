//! `segproto/1`: line-delimited JSON to a child process.
//!
//! The child prints `{"proto":"segproto/1"}` on start, then answers each
//! request line with one response line carrying an RLE mask.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{rle, BBox, Prompt2D, Segmentation, Segmenter};
use crate::error::{Error, Result};
use crate::volume::{HuSlice, Mask2D};

pub const PROTO: &str = "segproto/1";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePrompt {
    pub pos: Vec<[usize; 2]>,
    pub neg: Vec<[usize; 2]>,
    pub bbox: Option<[usize; 4]>,
    pub prior_rle: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub op: String,
    pub width: usize,
    pub height: usize,
    pub window: [f64; 2],
    pub pixels: String,
    pub prompt: WirePrompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub rle: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Handshake {
    proto: String,
}

impl Request {
    pub fn new(id: u64, slice: &HuSlice, prompt: &Prompt2D) -> Self {
        let pts = |v: &[(usize, usize)]| v.iter().map(|&(x, y)| [x, y]).collect();
        Self {
            id,
            op: "segment".into(),
            width: slice.width,
            height: slice.height,
            window: [slice.window.lo, slice.window.hi],
            pixels: base64::engine::general_purpose::STANDARD.encode(slice.to_u8()),
            prompt: WirePrompt {
                pos: pts(&prompt.positive),
                neg: pts(&prompt.negative),
                bbox: prompt.bbox.map(|b| b.to_array()),
                prior_rle: prompt.prior.as_ref().map(|p| rle::encode(&p.mask)),
            },
        }
    }
}

enum Line {
    Text(String),
    Eof,
    Failed(std::io::Error),
}

/// Segmenter backed by a child process. One request in flight at a time;
/// the child is killed on drop.
pub struct ExternalSegmenter {
    command: String,
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<Line>,
    timeout: Duration,
    next_id: u64,
}

impl std::fmt::Debug for ExternalSegmenter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalSegmenter").field("command", &self.command).finish_non_exhaustive()
    }
}

impl ExternalSegmenter {
    pub fn spawn(command: &str) -> Result<Self> {
        Self::spawn_with_timeout(command, DEFAULT_TIMEOUT)
    }

    /// Starts `sh -c command` and waits for the handshake line.
    pub fn spawn_with_timeout(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::external(format!("cannot start {command:?}: {e}"), ""))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut buf = String::new();
                let msg = match reader.read_line(&mut buf) {
                    Ok(0) => Line::Eof,
                    Ok(_) => Line::Text(buf),
                    Err(e) => Line::Failed(e),
                };
                let stop = !matches!(msg, Line::Text(_));
                if tx.send(msg).is_err() || stop {
                    return;
                }
            }
        });
        let mut seg = Self { command: command.to_string(), child, stdin, lines: rx, timeout, next_id: 0 };
        let line = seg.read_line("handshake")?;
        match serde_json::from_str::<Handshake>(&line) {
            Ok(h) if h.proto == PROTO => Ok(seg),
            Ok(h) => Err(Error::external(format!("unsupported protocol {:?}", h.proto), &line)),
            Err(e) => Err(Error::external(format!("bad handshake: {e}"), &line)),
        }
    }

    fn read_line(&mut self, stage: &str) -> Result<String> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Line::Text(s)) => Ok(s.trim_end().to_string()),
            Ok(Line::Eof) | Err(RecvTimeoutError::Disconnected) => {
                Err(Error::external(format!("child closed stdout during {stage}"), ""))
            }
            Ok(Line::Failed(e)) => Err(Error::external(format!("read failed during {stage}: {e}"), "")),
            Err(RecvTimeoutError::Timeout) => {
                Err(Error::external(format!("timed out after {:?} during {stage}", self.timeout), ""))
            }
        }
    }
}

impl Segmenter for ExternalSegmenter {
    fn segment(&mut self, slice: &HuSlice, prompt: &Prompt2D) -> Result<Segmentation> {
        prompt.validate(slice.width, slice.height)?;
        let id = self.next_id;
        self.next_id += 1;
        let mut line = serde_json::to_string(&Request::new(id, slice, prompt)).expect("request serializes");
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::external(format!("write failed: {e}"), ""))?;
        let reply = self.read_line("segment")?;
        let resp: Response =
            serde_json::from_str(&reply).map_err(|e| Error::external(format!("bad response: {e}"), &reply))?;
        if resp.id != id {
            return Err(Error::external(format!("response id {} for request {id}", resp.id), &reply));
        }
        let total: u64 = resp.rle.iter().map(|&r| r as u64).sum();
        if total != (slice.width * slice.height) as u64 {
            return Err(Error::external(
                format!("dims mismatch: mask covers {total} pixels, slice is {}x{}", slice.width, slice.height),
                &reply,
            ));
        }
        let mask = rle::decode(&resp.rle, slice.width, slice.height)?;
        Ok(Segmentation { mask, runaway: false })
    }
}

impl Drop for ExternalSegmenter {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// The stub contract: the prior mask if given, else the filled bbox, else
/// the positive points.
pub fn echo_mask(req: &Request) -> Result<Mask2D> {
    let (w, h) = (req.width, req.height);
    if let Some(r) = &req.prompt.prior_rle {
        return rle::decode(r, w, h);
    }
    if let Some([x0, y0, x1, y1]) = req.prompt.bbox {
        let b = BBox::new(x0, y0, x1, y1);
        return Ok(Mask2D::from_fn(w, h, |x, y| b.contains(x, y)));
    }
    let mut m = Mask2D::empty(w, h);
    for &[x, y] in &req.prompt.pos {
        if x < w && y < h {
            m.set(x, y, true);
        }
    }
    Ok(m)
}

/// Answers one request line as the echo stub would.
pub fn echo_reply(line: &str) -> Result<String> {
    let req: Request = serde_json::from_str(line).map_err(|e| Error::external(format!("bad request: {e}"), line))?;
    let mask = echo_mask(&req)?;
    Ok(serde_json::to_string(&Response { id: req.id, rle: rle::encode(&mask) }).expect("response serializes"))
}

/// Handshake line printed by a conforming child.
pub fn handshake_line() -> String {
    serde_json::to_string(&Handshake { proto: PROTO.into() }).expect("handshake serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::WindowSpec;

    fn slice() -> HuSlice {
        HuSlice::new(4, 3, vec![0.0; 12], WindowSpec::default()).unwrap()
    }

    #[test]
    fn request_field_order() {
        let s = HuSlice::new(2, 1, vec![-500.0, 1000.0], WindowSpec::default()).unwrap();
        let req = Request::new(7, &s, &Prompt2D::point(1, 0));
        let json = serde_json::to_string(&req).unwrap();
        assert_eq!(
            json,
            r#"{"id":7,"op":"segment","width":2,"height":1,"window":[-500.0,1000.0],"pixels":"AP8=","prompt":{"pos":[[1,0]],"neg":[],"bbox":null,"prior_rle":null}}"#
        );
    }

    #[test]
    fn echo_fills_bbox() {
        let req = Request::new(0, &slice(), &Prompt2D::bbox(BBox::new(1, 0, 2, 1)));
        let m = echo_mask(&req).unwrap();
        assert_eq!(m.count(), 4);
        assert!(m.get(1, 0) && m.get(2, 1) && !m.get(0, 0));
    }

    #[test]
    fn shell_child_round_trip() {
        // A shell child that answers every request with a full 4x3 mask.
        let cmd = r#"echo '{"proto":"segproto/1"}'; n=0; while read line; do echo "{\"id\":$n,\"rle\":[0,12]}"; n=$((n+1)); done"#;
        let mut seg = ExternalSegmenter::spawn(cmd).unwrap();
        for _ in 0..2 {
            let out = seg.segment(&slice(), &Prompt2D::point(0, 0)).unwrap();
            assert_eq!(out.mask.count(), 12);
        }
    }

    #[test]
    fn wrong_dims_is_external_error() {
        let cmd = r#"echo '{"proto":"segproto/1"}'; while read line; do echo '{"id":0,"rle":[0,5]}'; done"#;
        let mut seg = ExternalSegmenter::spawn(cmd).unwrap();
        match seg.segment(&slice(), &Prompt2D::point(0, 0)).unwrap_err() {
            Error::External { message, excerpt } => {
                assert!(message.contains("dims mismatch"), "{message}");
                assert!(excerpt.contains("rle"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_handshake_rejected() {
        let err = ExternalSegmenter::spawn(r#"echo '{"proto":"other/9"}'"#).unwrap_err();
        assert!(matches!(err, Error::External { .. }));
        let err = ExternalSegmenter::spawn("true").unwrap_err();
        assert!(matches!(err, Error::External { .. }));
    }

    #[test]
    fn silent_child_times_out() {
        let err = ExternalSegmenter::spawn_with_timeout("sleep 5", Duration::from_millis(100)).unwrap_err();
        match err {
            Error::External { message, .. } => assert!(message.contains("timed out")),
            other => panic!("{other}"),
        }
    }
}
