//! JSON-lines control protocol for driving one environment over a byte stream.
//!
//! Each request is one JSON object per line carrying an integer `id` and a
//! `cmd`. Every request gets exactly one response line echoing the `id`.
//! Malformed input produces an `error` response and the loop keeps going.

use std::io::{self, BufRead, Write};

use serde_json::{json, Map, Value};

use crate::env::{hash_hex, EnvConfig, EnvError, LayoutEnv, LayoutObs, Observation};
use crate::render::{render_env, save_png, RenderStyle};
use crate::scenario::{resolve_scenario, Scenario};

/// Error codes carried in `{"error": {"code": ...}}`.
pub mod codes {
    pub const PARSE_ERROR: &str = "parse_error";
    pub const BAD_REQUEST: &str = "bad_request";
    pub const UNKNOWN_COMMAND: &str = "unknown_command";
    pub const OUT_OF_RANGE: &str = "out_of_range";
    pub const NO_EPISODE: &str = "no_episode";
    pub const EPISODE_OVER: &str = "episode_over";
    pub const INVALID_SCENARIO: &str = "invalid_scenario";
    pub const IO_ERROR: &str = "io_error";
}

struct Failure {
    code: &'static str,
    message: String,
}

fn fail(code: &'static str, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

impl From<EnvError> for Failure {
    fn from(e: EnvError) -> Self {
        let code = match e {
            EnvError::OutOfRange { .. } => codes::OUT_OF_RANGE,
            EnvError::EpisodeOver => codes::EPISODE_OVER,
            EnvError::NotReset => codes::NO_EPISODE,
            EnvError::Scenario(_) => codes::INVALID_SCENARIO,
        };
        fail(code, e.to_string())
    }
}

/// One environment plus the protocol state around it.
pub struct Server {
    env: LayoutEnv,
    config: EnvConfig,
    style: RenderStyle,
    closed: bool,
}

impl Server {
    pub fn new(scenario: Scenario, config: EnvConfig) -> Result<Self, EnvError> {
        Ok(Server {
            env: LayoutEnv::new(scenario, config)?,
            config,
            style: RenderStyle::default(),
            closed: false,
        })
    }

    pub fn env(&self) -> &LayoutEnv {
        &self.env
    }

    /// Set once a `close` request has been answered.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Answers one request line. Never panics on malformed input.
    pub fn handle_line(&mut self, line: &str) -> String {
        let request: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return error_line(Value::Null, &fail(codes::PARSE_ERROR, e.to_string())),
        };
        let Some(obj) = request.as_object() else {
            return error_line(Value::Null, &fail(codes::BAD_REQUEST, "request must be a JSON object"));
        };
        let id = match obj.get("id") {
            Some(v @ Value::Number(n)) if n.is_i64() || n.is_u64() => v.clone(),
            _ => return error_line(Value::Null, &fail(codes::BAD_REQUEST, "missing integer `id`")),
        };
        let result = match obj.get("cmd").and_then(Value::as_str) {
            Some("spec") => Ok(self.spec()),
            Some("reset") => self.reset(obj),
            Some("step") => self.step(obj),
            Some("render") => self.render(obj),
            Some("close") => {
                self.closed = true;
                Ok(json!({ "closed": true }))
            }
            Some(other) => Err(fail(codes::UNKNOWN_COMMAND, format!("unknown command `{other}`"))),
            None => Err(fail(codes::BAD_REQUEST, "missing string `cmd`")),
        };
        match result {
            Ok(Value::Object(mut body)) => {
                let mut out = Map::new();
                out.insert("id".into(), id);
                out.append(&mut body);
                Value::Object(out).to_string()
            }
            Ok(_) => unreachable!("responses are objects"),
            Err(f) => error_line(id, &f),
        }
    }

    fn spec(&self) -> Value {
        let dims = self.env.dims();
        let mut obs = json!({
            "mode": match self.config.obs {
                crate::env::ObsMode::Features => "features",
                crate::env::ObsMode::Image => "image",
            },
            "features": dims.features,
            "context": dims.context,
            "n_max": dims.n_max,
        });
        if let Some((h, w, c)) = dims.image {
            obs["image"] = json!([h, w, c]);
        }
        let s = self.env.scenario();
        json!({
            "action_space": self.env.action_count(),
            "obs_dims": obs,
            "scenario": s.name,
            "grid": [s.grid.width, s.grid.height],
            "max_steps": s.max_steps,
        })
    }

    fn reset(&mut self, req: &Map<String, Value>) -> Result<Value, Failure> {
        let seed = req
            .get("seed")
            .and_then(Value::as_u64)
            .ok_or_else(|| fail(codes::BAD_REQUEST, "reset needs a non-negative integer `seed`"))?;
        if let Some(name) = req.get("scenario") {
            let name = name
                .as_str()
                .ok_or_else(|| fail(codes::BAD_REQUEST, "`scenario` must be a string"))?;
            let scenario = resolve_scenario(name).map_err(|e| fail(codes::INVALID_SCENARIO, e.to_string()))?;
            self.env = LayoutEnv::new(scenario, self.config)?;
        }
        let (obs, info) = self.env.reset(seed);
        Ok(json!({
            "obs": obs_json(&obs),
            "info": {
                "seed": info.seed,
                "n_rooms": info.n_rooms,
                "free_cells": info.free_cells,
                "hash": hash_hex(self.env.layout_hash()),
            },
        }))
    }

    fn step(&mut self, req: &Map<String, Value>) -> Result<Value, Failure> {
        let action = match req.get("action") {
            Some(Value::Number(n)) => match (n.as_i64(), n.as_u64()) {
                (Some(a), _) => a,
                (None, Some(_)) => i64::MAX,
                (None, None) => return Err(fail(codes::BAD_REQUEST, "`action` must be an integer")),
            },
            _ => return Err(fail(codes::BAD_REQUEST, "step needs an integer `action`")),
        };
        let r = self.env.step(action)?;
        let mut info = json!({
            "accepted": r.info.accepted,
            "rooms_so_far": r.info.rooms_so_far,
            "hash": hash_hex(self.env.layout_hash()),
        });
        if let Some(reason) = r.info.reject_reason {
            info["reason"] = json!(reason.code());
        }
        if let Some(m) = r.info.missed_adjacencies {
            info["missed_adjacencies"] = json!(m);
        }
        Ok(json!({
            "obs": obs_json(&r.obs),
            "reward": r.reward,
            "terminated": r.terminated,
            "truncated": r.truncated,
            "info": info,
        }))
    }

    fn render(&mut self, req: &Map<String, Value>) -> Result<Value, Failure> {
        let path = req
            .get("path")
            .and_then(Value::as_str)
            .ok_or_else(|| fail(codes::BAD_REQUEST, "render needs a string `path`"))?;
        let img = render_env(&self.env, &self.style).map_err(|e| fail(codes::IO_ERROR, e.to_string()))?;
        save_png(&img, path).map_err(|e| fail(codes::IO_ERROR, e.to_string()))?;
        Ok(json!({ "path": path, "width": img.width(), "height": img.height() }))
    }
}

fn obs_json(obs: &Observation) -> Value {
    let context = floats(&obs.context);
    match &obs.layout {
        LayoutObs::Features(f) => json!({ "features": floats(f), "context": context }),
        LayoutObs::Image(px) => json!({ "image": px, "context": context }),
    }
}

/// Widens through the shortest decimal form so `0.4f32` prints as `0.4`.
fn floats(v: &[f32]) -> Vec<f64> {
    v.iter().map(|x| x.to_string().parse().unwrap_or(f64::NAN)).collect()
}

fn error_line(id: Value, f: &Failure) -> String {
    json!({ "id": id, "error": { "code": f.code, "message": f.message } }).to_string()
}

/// Runs the request loop until `close` or end of input. Blank lines are ignored.
pub fn serve<R: BufRead, W: Write>(server: &mut Server, input: R, mut output: W) -> io::Result<()> {
    for line in input.split(b'\n') {
        let line = line?;
        let text = String::from_utf8_lossy(&line);
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let response = server.handle_line(text);
        output.write_all(response.as_bytes())?;
        output.write_all(b"\n")?;
        output.flush()?;
        if server.is_closed() {
            break;
        }
    }
    Ok(())
}
