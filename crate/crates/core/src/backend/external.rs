//! Client and server halves of the newline-delimited JSON backend protocol.
//!
//! ```text
//! -> {"type":"hello","version":1}
//! <- {"type":"hello_ack","version":1,"capabilities":["detect","segment_box","segment_point"]}
//! -> {"type":"detect","id":1,"image":"000139.jpg"}
//! <- {"type":"detections","id":1,"items":[{"box":[x0,y0,x1,y1],"category_id":3,"score":0.91}]}
//! -> {"type":"segment","id":2,"image":"000139.jpg","prompt":{"kind":"point","point":[12.5,40.0]}}
//! <- {"type":"mask","id":2,"rle":{"size":[h,w],"counts":[...]},"score":0.97}
//! <- {"type":"error","id":2,"message":"..."}
//! ```
//!
//! One request is in flight per connection. Responses carrying an id older
//! than the pending request (late answers to timed-out requests) are dropped.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{BackendError, BackendStats, Detection, Detector, ImageRef, SegmentResult, Segmenter};
use crate::mask::{BBox, RleMask};
use crate::prompt::Prompt;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const CAPABILITIES: [&str; 3] = ["detect", "segment_box", "segment_point"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WirePrompt {
    Box {
        #[serde(rename = "box")]
        bbox: [f64; 4],
    },
    Point {
        point: [f64; 2],
    },
}

impl From<&Prompt> for WirePrompt {
    fn from(p: &Prompt) -> Self {
        match p {
            Prompt::Box(b) => {
                let [x0, y0, x1, y1] = b.bbox.as_array();
                WirePrompt::Box {
                    bbox: [x0 as f64, y0 as f64, x1 as f64, y1 as f64],
                }
            }
            Prompt::Point(p) => WirePrompt::Point { point: [p.x, p.y] },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub category_id: i64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Hello {
        version: u32,
    },
    Detect {
        id: u64,
        image: String,
    },
    Segment {
        id: u64,
        image: String,
        prompt: WirePrompt,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    HelloAck {
        version: u32,
        capabilities: Vec<String>,
    },
    Detections {
        id: u64,
        items: Vec<WireDetection>,
    },
    Mask {
        id: u64,
        rle: RleMask,
        score: f64,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}

impl Response {
    fn id(&self) -> Option<u64> {
        match self {
            Response::HelloAck { .. } => None,
            Response::Detections { id, .. } | Response::Mask { id, .. } => Some(*id),
            Response::Error { id, .. } => *id,
        }
    }
}

fn to_detection(d: &WireDetection) -> Result<Detection, BackendError> {
    if !(0.0..=1.0).contains(&d.score) {
        return Err(BackendError::Protocol(format!(
            "detection score {} outside [0, 1]",
            d.score
        )));
    }
    let [x0, y0, x1, y1] = d.bbox;
    let bbox = BBox::from_f64(x0, y0, x1, y1)
        .map_err(|e| BackendError::Protocol(format!("bad detection box: {e}")))?;
    Ok(Detection {
        bbox,
        category_id: d.category_id,
        score: d.score,
    })
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    next_id: u64,
}

impl Connection {
    fn send(&mut self, req: &Request) -> Result<(), BackendError> {
        let mut line = serde_json::to_string(req).expect("requests always serialize");
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| BackendError::Unavailable(format!("write failed: {e}")))
    }

    fn recv(&mut self, deadline: Instant) -> Result<Response, BackendError> {
        let remaining = deadline.saturating_duration_since(Instant::now());
        match self.lines.recv_timeout(remaining) {
            Ok(Ok(line)) => serde_json::from_str(line.trim())
                .map_err(|e| BackendError::Protocol(format!("bad frame {:?}: {e}", line.trim()))),
            Ok(Err(e)) => Err(BackendError::Unavailable(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                Err(BackendError::Unavailable("request timed out".into()))
            }
            Err(RecvTimeoutError::Disconnected) => Err(BackendError::Unavailable(
                "backend closed its output".into(),
            )),
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Client for an out-of-process detector/segmenter.
pub struct ExternalBackend {
    conn: Mutex<Connection>,
    timeout: Duration,
    capabilities: Vec<String>,
    segmenter_calls: AtomicU64,
    detector_calls: AtomicU64,
}

impl ExternalBackend {
    /// Launch `program` and talk to it over its standard streams.
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> Result<Self, BackendError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Unavailable(format!("cannot launch {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Self::handshake(stdout, Box::new(stdin), Some(child), timeout)
    }

    pub fn connect_tcp(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self, BackendError> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| BackendError::Unavailable(format!("connect failed: {e}")))?;
        let _ = stream.set_nodelay(true);
        let reader = stream
            .try_clone()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        Self::handshake(reader, Box::new(stream), None, timeout)
    }

    /// Use an arbitrary stream pair, e.g. in-process pipes.
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        Self::handshake(reader, Box::new(writer), None, timeout)
    }

    fn handshake(
        reader: impl Read + Send + 'static,
        writer: Box<dyn Write + Send>,
        child: Option<Child>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if line.trim().is_empty() {
                            continue;
                        }
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        let mut conn = Connection {
            writer,
            lines: rx,
            child,
            next_id: 1,
        };
        conn.send(&Request::Hello {
            version: PROTOCOL_VERSION,
        })?;
        let capabilities = match conn.recv(Instant::now() + timeout)? {
            Response::HelloAck {
                version,
                capabilities,
            } if version == PROTOCOL_VERSION => capabilities,
            Response::HelloAck { version, .. } => {
                return Err(BackendError::Protocol(format!(
                    "unsupported protocol version {version}"
                )))
            }
            other => {
                return Err(BackendError::Protocol(format!(
                    "expected hello_ack, got {other:?}"
                )))
            }
        };
        debug!("external backend ready, capabilities {capabilities:?}");
        Ok(Self {
            conn: Mutex::new(conn),
            timeout,
            capabilities,
            segmenter_calls: AtomicU64::new(0),
            detector_calls: AtomicU64::new(0),
        })
    }

    pub fn capabilities(&self) -> &[String] {
        &self.capabilities
    }

    pub fn stats(&self) -> BackendStats {
        BackendStats {
            segmenter_calls: self.segmenter_calls.load(Ordering::Relaxed),
            detector_calls: self.detector_calls.load(Ordering::Relaxed),
            wall_time: 0.0,
        }
    }

    fn round_trip(&self, build: impl FnOnce(u64) -> Request) -> Result<Response, BackendError> {
        let mut conn = self.conn.lock().map_err(|_| {
            BackendError::Unavailable("connection poisoned by a panicked caller".into())
        })?;
        let id = conn.next_id;
        conn.next_id += 1;
        conn.send(&build(id))?;
        let deadline = Instant::now() + self.timeout;
        loop {
            let resp = conn.recv(deadline)?;
            match resp.id() {
                Some(got) if got == id => {
                    return match resp {
                        Response::Error { message, .. } => {
                            Err(BackendError::Remote { id, message })
                        }
                        other => Ok(other),
                    }
                }
                Some(got) if got < id => {
                    warn!("dropping stale response for request {got}");
                }
                got => {
                    return Err(BackendError::Protocol(format!(
                        "response id {got:?} does not match request {id}"
                    )))
                }
            }
        }
    }
}

impl Detector for ExternalBackend {
    fn detect(&self, image: &ImageRef) -> Result<Vec<Detection>, BackendError> {
        self.detector_calls.fetch_add(1, Ordering::Relaxed);
        let resp = self.round_trip(|id| Request::Detect {
            id,
            image: image.source.clone(),
        })?;
        match resp {
            Response::Detections { items, .. } => items.iter().map(to_detection).collect(),
            other => Err(BackendError::Protocol(format!(
                "expected detections, got {other:?}"
            ))),
        }
    }
}

impl Segmenter for ExternalBackend {
    fn segment(&self, image: &ImageRef, prompt: &Prompt) -> Result<SegmentResult, BackendError> {
        self.segmenter_calls.fetch_add(1, Ordering::Relaxed);
        let resp = self.round_trip(|id| Request::Segment {
            id,
            image: image.source.clone(),
            prompt: prompt.into(),
        })?;
        match resp {
            Response::Mask { rle, score, .. } => {
                if rle.width() != image.width || rle.height() != image.height {
                    return Err(BackendError::Protocol(format!(
                        "mask is {}x{}, image is {}x{}",
                        rle.width(),
                        rle.height(),
                        image.width,
                        image.height
                    )));
                }
                if !(0.0..=1.0).contains(&score) {
                    return Err(BackendError::Protocol(format!(
                        "mask score {score} outside [0, 1]"
                    )));
                }
                Ok(SegmentResult {
                    mask: rle.decode(),
                    score,
                })
            }
            other => Err(BackendError::Protocol(format!(
                "expected mask, got {other:?}"
            ))),
        }
    }
}

/// Server-side request handling for [`serve`].
pub trait RequestHandler {
    fn detect(&mut self, image: &str) -> Result<Vec<WireDetection>, String>;
    fn segment(&mut self, image: &str, prompt: &WirePrompt) -> Result<(RleMask, f64), String>;
}

/// Answer requests from `input` until EOF.
///
/// Unparseable lines produce an `error` frame without an id; handler
/// failures produce an `error` frame echoing the request id.
pub fn serve(
    input: impl BufRead,
    mut output: impl Write,
    handler: &mut dyn RequestHandler,
) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Request>(&line) {
            Ok(Request::Hello { .. }) => Response::HelloAck {
                version: PROTOCOL_VERSION,
                capabilities: CAPABILITIES.iter().map(|s| s.to_string()).collect(),
            },
            Ok(Request::Detect { id, image }) => match handler.detect(&image) {
                Ok(items) => Response::Detections { id, items },
                Err(message) => Response::Error {
                    id: Some(id),
                    message,
                },
            },
            Ok(Request::Segment { id, image, prompt }) => match handler.segment(&image, &prompt) {
                Ok((rle, score)) => Response::Mask { id, rle, score },
                Err(message) => Response::Error {
                    id: Some(id),
                    message,
                },
            },
            Err(e) => Response::Error {
                id: None,
                message: format!("unparseable request: {e}"),
            },
        };
        // one write per frame keeps small frames from stalling on sockets
        let mut frame = serde_json::to_vec(&resp)?;
        frame.push(b'\n');
        output.write_all(&frame)?;
        output.flush()?;
    }
    Ok(())
}
