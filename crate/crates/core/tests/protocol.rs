//! The worker client against the scripted fixture worker.

use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use wam_core::attribution::{wam_saliency, IgConfig, MethodConfig};
use wam_core::model::{decode_f64s, encode_f64s, BuiltinModel, Classifier, ExternalWorker};
use wam_core::{dwt, Family, Signal, WamError, WaveletSpec};

const WORKER: &str = env!("CARGO_BIN_EXE_wam-fixture-worker");

fn weight(c: usize, i: usize) -> f64 {
    ((7 * c + 3 * i) % 11) as f64 / 4.0 - 1.25
}

fn args(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn spawn(mode: &str, shape: &str, classes: usize, timeout: Duration) -> wam_core::Result<ExternalWorker> {
    let classes = classes.to_string();
    ExternalWorker::spawn(
        WORKER,
        &args(&["--input-shape", shape, "--classes", &classes, "--mode", mode]),
        timeout,
    )
}

fn linear(shape: &str, n: usize, classes: usize) -> (ExternalWorker, BuiltinModel) {
    let worker = spawn("linear", shape, classes, Duration::from_secs(10)).unwrap();
    let dims: Vec<usize> = shape.split(',').map(|s| s.parse().unwrap()).collect();
    let w = (0..classes).flat_map(|c| (0..n).map(move |i| weight(c, i))).collect();
    let b = (0..classes).map(|c| 0.1 * c as f64).collect();
    (worker, BuiltinModel::linear(&dims, w, b).unwrap())
}

#[test]
fn handshake_reports_the_declared_model() {
    let w = spawn("linear", "8,8", 4, Duration::from_secs(10)).unwrap();
    assert_eq!(w.name(), "fixture-linear");
    assert_eq!(w.input_shape(), &[8, 8]);
    assert_eq!(w.num_classes(), 4);
}

#[test]
fn logits_and_gradients_match_the_linear_model_exactly() {
    let (worker, local) = linear("16", 16, 3);
    let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
    let remote = worker.logits_raw(&x).unwrap();
    let expected = local.logits_raw(&x).unwrap();
    for (a, b) in remote.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    for c in 0..3 {
        let g = worker.gradient_raw(&x, c).unwrap();
        let exact: Vec<f64> = (0..16).map(|i| weight(c, i)).collect();
        assert_eq!(g, exact);
    }
}

#[test]
fn wavelet_saliency_through_a_worker_matches_the_transformed_weights() {
    let (worker, _) = linear("8,8", 64, 2);
    let spec = WaveletSpec::new(Family::Haar, 2);
    let x = Signal::new(vec![8, 8], (0..64).map(|i| i as f64 / 64.0).collect()).unwrap();
    let attr = wam_saliency(&worker, &x, 1, &spec).unwrap();
    let w = Signal::new(vec![8, 8], (0..64).map(|i| weight(1, i)).collect()).unwrap();
    let expected = dwt(&w, &spec).unwrap().into_flat_values();
    for (a, e) in attr.values.iter().zip(&expected) {
        assert!((a - e.abs()).abs() < 1e-12);
    }
}

#[test]
fn ig_through_a_worker_matches_the_builtin_model() {
    let (worker, local) = linear("32", 32, 2);
    let spec = WaveletSpec::new(Family::Db2, 2);
    let x = Signal::new(vec![32], (0..32).map(|i| (i as f64 * 0.2).cos()).collect()).unwrap();
    let cfg = MethodConfig::Ig(IgConfig::with_steps(16));
    let domain = wam_core::attribution::Domain::Wavelet(spec);
    let remote = wam_core::attribution::attribute(&worker, &x, 0, domain, &cfg).unwrap();
    let builtin = wam_core::attribution::attribute(&local, &x, 0, domain, &cfg).unwrap();
    for (a, b) in remote.values.iter().zip(&builtin.values) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn wrong_payload_length_is_caught_before_sending() {
    let (worker, _) = linear("8", 8, 2);
    assert!(matches!(worker.logits_raw(&[0.0; 5]), Err(WamError::ShapeMismatch { .. })));
    assert!(matches!(worker.gradient_raw(&[0.0; 8], 7), Err(WamError::ClassOutOfRange { .. })));
    // the worker is still usable afterwards
    assert_eq!(worker.logits_raw(&[0.0; 8]).unwrap().len(), 2);
}

#[test]
fn logit_count_disagreeing_with_the_handshake_is_a_failure() {
    let w = spawn("fixed", "4", 2, Duration::from_secs(10)).unwrap();
    assert!(matches!(w.logits_raw(&[0.0; 4]), Err(WamError::ExternalWorkerFailure(_))));
}

#[test]
fn hanging_worker_times_out() {
    let w = spawn("hang", "4", 3, Duration::from_millis(300)).unwrap();
    let start = Instant::now();
    let err = w.logits_raw(&[0.0; 4]).unwrap_err();
    assert!(matches!(err, WamError::ExternalWorkerFailure(_)));
    assert!(start.elapsed() < Duration::from_secs(5));
    // a timed-out worker stays unusable
    assert!(matches!(w.logits_raw(&[0.0; 4]), Err(WamError::ExternalWorkerFailure(_))));
}

#[test]
fn exiting_worker_is_a_failure() {
    let w = spawn("exit", "4", 3, Duration::from_secs(10)).unwrap();
    assert!(matches!(w.gradient_raw(&[0.0; 4], 0), Err(WamError::ExternalWorkerFailure(_))));
}

#[test]
fn mismatched_reply_id_is_a_failure() {
    let w = spawn("bad-id", "4", 3, Duration::from_secs(10)).unwrap();
    assert!(matches!(w.logits_raw(&[0.0; 4]), Err(WamError::ExternalWorkerFailure(_))));
}

#[test]
fn missing_worker_binary_is_a_failure() {
    let err = ExternalWorker::spawn("/no/such/worker", &[], Duration::from_secs(1)).err().unwrap();
    assert!(matches!(err, WamError::ExternalWorkerFailure(_)));
}

/// Drives the worker line by line: hello, logits, grad, a malformed line,
/// grad again. Every reply is predictable from the linear model.
#[test]
fn scripted_transcript() {
    let mut child = Command::new(WORKER)
        .args(args(&["--input-shape", "4", "--classes", "2"]))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let mut ask = |line: String| -> Value {
        writeln!(stdin, "{line}").unwrap();
        stdin.flush().unwrap();
        serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap()
    };
    let x = [1.0, -2.0, 0.5, 4.0];

    let hello = ask(json!({"id": 0, "op": "hello"}).to_string());
    assert_eq!(hello, json!({"id": 0, "name": "fixture-linear", "input_shape": [4], "num_classes": 2}));

    let logits = ask(json!({"id": 1, "op": "logits", "shape": [4], "data": encode_f64s(&x)}).to_string());
    let expected: Vec<f64> = (0..2)
        .map(|c| 0.1 * c as f64 + x.iter().enumerate().map(|(i, v)| weight(c, i) * v).sum::<f64>())
        .collect();
    assert_eq!(logits, json!({"id": 1, "logits": expected}));

    let grad = |id: u64| json!({"id": id, "op": "grad", "class": 1, "shape": [4], "data": encode_f64s(&x)}).to_string();
    let g = ask(grad(2));
    assert_eq!(g["id"], json!(2));
    assert_eq!(decode_f64s(g["data"].as_str().unwrap()).unwrap(), vec![0.5, 1.25, -0.75, 0.0]);

    let bad = ask("{not json".into());
    assert_eq!(bad["id"], Value::Null);
    assert!(bad["error"].as_str().unwrap().starts_with("malformed request"));

    let short = ask(json!({"id": 3, "op": "logits", "shape": [2], "data": encode_f64s(&[1.0, 2.0])}).to_string());
    assert_eq!(short["id"], json!(3));
    assert!(short.get("error").is_some());

    let again = ask(grad(4));
    assert_eq!(again["id"], json!(4));
    assert_eq!(again["data"], g["data"]);

    drop(stdin);
    assert!(child.wait().unwrap().success());
}
