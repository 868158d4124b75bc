//! Scripted model worker used by the protocol tests.
//!
//! Serves a fixed linear model `logit_c = Σ_i W[c][i] x_i + 0.1 c` with
//! `W[c][i] = ((7c + 3i) mod 11) / 4 − 1.25`, so clients can check answers
//! exactly. Other modes exercise failure handling:
//!
//! * `--mode fixed`   logits are always [1, 2, 3]; gradients are zero
//! * `--mode hang`    stops answering after the handshake
//! * `--mode exit`    exits with status 3 after the handshake
//! * `--mode bad-id`  answers with the wrong request id after the handshake

use std::io::{self, BufRead, Write};

use serde_json::{json, Value};
use wam_core::model::{decode_f64s, encode_f64s};

struct Config {
    shape: Vec<usize>,
    classes: usize,
    mode: String,
}

fn parse_args() -> Config {
    let mut cfg = Config {
        shape: vec![4],
        classes: 3,
        mode: "linear".into(),
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut i = 0;
    while i + 1 < args.len() {
        match args[i].as_str() {
            "--input-shape" => {
                cfg.shape = args[i + 1].split(',').map(|s| s.parse().expect("shape")).collect()
            }
            "--classes" => cfg.classes = args[i + 1].parse().expect("classes"),
            "--mode" => cfg.mode = args[i + 1].clone(),
            other => panic!("unknown flag {other}"),
        }
        i += 2;
    }
    cfg
}

fn weight(c: usize, i: usize) -> f64 {
    ((7 * c + 3 * i) % 11) as f64 / 4.0 - 1.25
}

fn handle(cfg: &Config, req: &Value) -> Result<Value, String> {
    let n: usize = cfg.shape.iter().product();
    let op = req.get("op").and_then(Value::as_str).ok_or("missing op")?;
    let payload = || -> Result<Vec<f64>, String> {
        let data = req.get("data").and_then(Value::as_str).ok_or("missing data")?;
        let x = decode_f64s(data)?;
        if x.len() != n {
            return Err(format!("payload holds {} values, expected {n}", x.len()));
        }
        Ok(x)
    };
    match op {
        "hello" => Ok(json!({"name": format!("fixture-{}", cfg.mode), "input_shape": cfg.shape, "num_classes": cfg.classes})),
        "logits" => {
            let x = payload()?;
            if cfg.mode == "fixed" {
                return Ok(json!({"logits": [1.0, 2.0, 3.0]}));
            }
            let logits: Vec<f64> = (0..cfg.classes)
                .map(|c| 0.1 * c as f64 + x.iter().enumerate().map(|(i, v)| weight(c, i) * v).sum::<f64>())
                .collect();
            Ok(json!({ "logits": logits }))
        }
        "grad" => {
            let _ = payload()?;
            let c = req.get("class").and_then(Value::as_u64).ok_or("missing class")? as usize;
            if c >= cfg.classes {
                return Err(format!("class {c} out of range"));
            }
            let g: Vec<f64> = if cfg.mode == "fixed" {
                vec![0.0; n]
            } else {
                (0..n).map(|i| weight(c, i)).collect()
            };
            Ok(json!({"shape": cfg.shape, "data": encode_f64s(&g)}))
        }
        other => Err(format!("unknown op `{other}`")),
    }
}

fn main() {
    let cfg = parse_args();
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut answered = 0usize;
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let (id, reply) = match serde_json::from_str::<Value>(&line) {
            Ok(req) => {
                let id = req.get("id").cloned().unwrap_or(Value::Null);
                (id, handle(&cfg, &req))
            }
            Err(e) => (Value::Null, Err(format!("malformed request: {e}"))),
        };
        if answered > 0 {
            match cfg.mode.as_str() {
                "hang" => std::thread::sleep(std::time::Duration::from_secs(3600)),
                "exit" => std::process::exit(3),
                _ => {}
            }
        }
        let id = if cfg.mode == "bad-id" && answered > 0 { json!(-1) } else { id };
        let mut msg = match reply {
            Ok(v) => v,
            Err(e) => json!({ "error": e }),
        };
        msg["id"] = id;
        writeln!(out, "{msg}").unwrap();
        out.flush().unwrap();
        answered += 1;
    }
}
