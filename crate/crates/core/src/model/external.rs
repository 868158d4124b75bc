//! Client side of the model-worker protocol: JSON lines over a child
//! process's stdin/stdout, one request at a time.
//!
//! ```text
//! → {"id":n,"op":"hello"}
//! ← {"id":n,"name":str,"input_shape":[...],"num_classes":int}
//! → {"id":n,"op":"logits","shape":[...],"data":<base64 f64 LE>}
//! ← {"id":n,"logits":[...]}
//! → {"id":n,"op":"grad","class":c,"shape":[...],"data":<base64>}
//! ← {"id":n,"shape":[...],"data":<base64>}
//! ← {"id":n,"error":str}            on failure
//! ```

use std::ffi::OsStr;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::{json, Value};

use super::Classifier;
use crate::error::{Result, WamError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Base64 of the little-endian float64 bytes.
pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> std::result::Result<Vec<f64>, String> {
    let bytes = STANDARD.decode(text).map_err(|e| format!("invalid base64: {e}"))?;
    if bytes.len() % 8 != 0 {
        return Err(format!("payload of {} bytes is not a float64 array", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn failure(msg: impl Into<String>) -> WamError {
    WamError::ExternalWorkerFailure(msg.into())
}

struct Connection {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    broken: Option<String>,
}

impl Connection {
    fn request(&mut self, mut body: serde_json::Map<String, Value>, timeout: Duration) -> Result<Value> {
        if let Some(reason) = &self.broken {
            return Err(failure(format!("worker unusable: {reason}")));
        }
        let id = self.next_id;
        self.next_id += 1;
        body.insert("id".into(), json!(id));
        let mut line = serde_json::to_string(&Value::Object(body))?;
        line.push('\n');
        if let Err(e) = self.stdin.write_all(line.as_bytes()).and_then(|_| self.stdin.flush()) {
            return Err(self.fail(format!("write failed: {e}")));
        }
        let reply = match self.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(self.fail(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                return Err(self.fail(format!("no response within {timeout:?}")));
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.child.wait().map(|s| s.to_string()).unwrap_or_default();
                return Err(self.fail(format!("worker exited ({status})")));
            }
        };
        let value: Value = serde_json::from_str(&reply)
            .map_err(|e| self.fail(format!("malformed response `{reply}`: {e}")))?;
        if value.get("id") != Some(&json!(id)) {
            return Err(self.fail(format!("response id {:?} does not match request {id}", value.get("id"))));
        }
        if let Some(err) = value.get("error") {
            return Err(failure(err.as_str().unwrap_or("unknown error").to_string()));
        }
        Ok(value)
    }

    fn fail(&mut self, reason: String) -> WamError {
        self.broken = Some(reason.clone());
        failure(reason)
    }
}

/// A model served by a child process.
///
/// Requests are serialised through a mutex, so concurrent callers are
/// queued in arrival order over the single pipe pair. Any protocol error,
/// timeout or exit marks the worker unusable.
pub struct ExternalWorker {
    name: String,
    input_shape: Vec<usize>,
    num_classes: usize,
    timeout: Duration,
    conn: Mutex<Connection>,
}

impl ExternalWorker {
    /// Starts `program` and completes the hello handshake.
    pub fn spawn<S: AsRef<OsStr>>(program: S, args: &[String], timeout: Duration) -> Result<Self> {
        let mut child = Command::new(program.as_ref())
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| failure(format!("cannot start {:?}: {e}", program.as_ref())))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut conn = Connection {
            child,
            stdin,
            lines: rx,
            next_id: 0,
            broken: None,
        };
        let hello = conn.request(json!({"op": "hello"}).as_object().unwrap().clone(), timeout)?;
        let name = hello.get("name").and_then(Value::as_str).unwrap_or("worker").to_string();
        let input_shape: Vec<usize> = hello
            .get("input_shape")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .ok_or_else(|| failure("hello response lacks input_shape"))?;
        let num_classes = hello
            .get("num_classes")
            .and_then(Value::as_u64)
            .ok_or_else(|| failure("hello response lacks num_classes"))? as usize;
        crate::signal::check_shape(&input_shape)
            .map_err(|e| failure(format!("worker declared a bad shape: {e}")))?;
        Ok(Self {
            name,
            input_shape,
            num_classes,
            timeout,
            conn: Mutex::new(conn),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn call(&self, body: Value) -> Result<Value> {
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        conn.request(body.as_object().unwrap().clone(), self.timeout)
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(WamError::ShapeMismatch {
                expected: self.input_shape.clone(),
                actual: vec![x.len()],
            });
        }
        Ok(())
    }
}

impl Drop for ExternalWorker {
    fn drop(&mut self) {
        let conn = self.conn.get_mut().unwrap_or_else(|p| p.into_inner());
        let _ = conn.child.kill();
        let _ = conn.child.wait();
    }
}

impl Classifier for ExternalWorker {
    fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn logits_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        let reply = self.call(json!({
            "op": "logits",
            "shape": self.input_shape,
            "data": encode_f64s(x),
        }))?;
        let logits: Vec<f64> = reply
            .get("logits")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .ok_or_else(|| failure("logits response lacks `logits`"))?;
        if logits.len() != self.num_classes {
            return Err(failure(format!(
                "worker returned {} logits, declared {} classes",
                logits.len(),
                self.num_classes
            )));
        }
        Ok(logits)
    }

    fn gradient_raw(&self, x: &[f64], class: usize) -> Result<Vec<f64>> {
        self.check_len(x)?;
        self.check_class(class)?;
        let reply = self.call(json!({
            "op": "grad",
            "class": class,
            "shape": self.input_shape,
            "data": encode_f64s(x),
        }))?;
        let shape: Vec<usize> = reply
            .get("shape")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .ok_or_else(|| failure("grad response lacks `shape`"))?;
        if shape != self.input_shape {
            return Err(failure(format!("gradient shape {shape:?} != {:?}", self.input_shape)));
        }
        let data = reply
            .get("data")
            .and_then(Value::as_str)
            .ok_or_else(|| failure("grad response lacks `data`"))?;
        let grad = decode_f64s(data).map_err(failure)?;
        if grad.len() != x.len() {
            return Err(failure(format!("gradient holds {} values, expected {}", grad.len(), x.len())));
        }
        Ok(grad)
    }
}
