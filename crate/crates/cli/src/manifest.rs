//! Run manifest: the resolved configuration, timing, warnings and output
//! checksums of one invocation. Re-running with the same inputs reproduces
//! the same checksums; timestamps live only in the manifest itself.

use serde::Serialize;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::ExperimentConfig;
use crate::output::WrittenFile;

#[derive(Serialize)]
pub struct RunManifest {
    pub tool: ToolInfo,
    pub command: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub started_utc: String,
    pub finished_utc: String,
    pub threads: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub diagnostics: serde_json::Value,
    pub outputs: Vec<WrittenFile>,
    pub config: ExperimentConfig,
}

#[derive(Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Minimal ISO-8601 UTC formatter (civil-from-days algorithm).
pub fn iso8601_utc(unix_ms: u128) -> String {
    let secs = (unix_ms / 1000) as i64;
    let ms = (unix_ms % 1000) as i64;
    let days = secs.div_euclid(86_400);
    let sod = secs.rem_euclid(86_400);
    let (h, m, s) = (sod / 3600, (sod % 3600) / 60, sod % 60);
    // Howard Hinnant's civil_from_days.
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let mo = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = if mo <= 2 { y + 1 } else { y };
    format!("{y:04}-{mo:02}-{d:02}T{h:02}:{m:02}:{s:02}.{ms:03}Z")
}

impl RunManifest {
    pub fn new(command: &str, config: ExperimentConfig, seed: u64, started_ms: u128) -> Self {
        RunManifest {
            tool: ToolInfo { name: "dephasim", version: env!("CARGO_PKG_VERSION") },
            command: command.to_string(),
            started_unix_ms: started_ms,
            finished_unix_ms: 0,
            started_utc: iso8601_utc(started_ms),
            finished_utc: String::new(),
            threads: rayon::current_num_threads(),
            seed,
            warnings: Vec::new(),
            diagnostics: serde_json::Value::Null,
            outputs: Vec::new(),
            config,
        }
    }

    pub fn finish(&mut self, outputs: Vec<WrittenFile>) {
        let t = now_ms();
        self.finished_unix_ms = t;
        self.finished_utc = iso8601_utc(t);
        self.outputs = outputs;
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("manifest serializes");
        v.push(b'\n');
        v
    }
}
