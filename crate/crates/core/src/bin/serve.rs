//! Serves a local model file over the line-delimited JSON oracle protocol.
//!
//! Usage: `taylor-attr-serve MODEL.json`

use std::io::{self, BufRead, Write};
use std::process::ExitCode;

use serde::Deserialize;
use serde_json::json;
use taylor_attr::oracle::{evaluate_rows, load_model};

#[derive(Deserialize)]
struct Request {
    id: u64,
    inputs: Vec<Vec<f64>>,
}

fn main() -> ExitCode {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: taylor-attr-serve MODEL.json");
        return ExitCode::from(2);
    };
    let model = match load_model(&path) {
        Ok(m) if !m.is_external() => m,
        Ok(_) => {
            eprintln!("refusing to proxy an external model");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(req) => {
                let rows: Vec<&[f64]> = req.inputs.iter().map(Vec::as_slice).collect();
                match evaluate_rows(&model, &rows) {
                    Ok(outputs) => json!({ "id": req.id, "outputs": outputs }),
                    Err(e) => json!({ "id": req.id, "error": e.to_string() }),
                }
            }
            Err(e) => json!({ "id": null, "error": e.to_string() }),
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}
