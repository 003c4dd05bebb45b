//! Deterministic file output: fixed-precision CSV, content checksums, and
//! all-or-nothing staging so a failed run leaves no partial artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Format a float with 17 significant digits so the CSV round-trips and
/// checksums are meaningful.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// FNV-1a 64-bit content hash; cheap, dependency-free, reproducible.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Collects finished file contents and writes them all at once; on error
/// nothing is left behind.
pub struct OutputStage {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, serde::Serialize)]
pub struct WrittenFile {
    pub file: String,
    pub bytes: usize,
    pub fnv1a64: String,
}

impl OutputStage {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutputStage { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn add(&mut self, name: &str, contents: Vec<u8>) {
        self.files.push((name.to_string(), contents));
    }

    /// Checksums of everything staged so far, in insertion order.
    pub fn checksums(&self) -> Vec<WrittenFile> {
        self.files
            .iter()
            .map(|(name, bytes)| WrittenFile {
                file: name.clone(),
                bytes: bytes.len(),
                fnv1a64: format!("{:016x}", fnv1a64(bytes)),
            })
            .collect()
    }

    /// Write every staged file through a temporary name, then rename.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::new();
        let mut tmp_paths = Vec::new();
        let stage_result = (|| -> Result<(), CliError> {
            for (name, bytes) in &self.files {
                let tmp = self.dir.join(format!(".{name}.tmp"));
                let mut f = fs::File::create(&tmp)
                    .map_err(|e| CliError::Io(format!("create {}: {e}", tmp.display())))?;
                tmp_paths.push(tmp.clone());
                f.write_all(bytes)
                    .map_err(|e| CliError::Io(format!("write {}: {e}", tmp.display())))?;
            }
            Ok(())
        })();
        if let Err(e) = stage_result {
            for t in &tmp_paths {
                let _ = fs::remove_file(t);
            }
            return Err(e);
        }
        for (name, _) in &self.files {
            let tmp = self.dir.join(format!(".{name}.tmp"));
            let fin = self.dir.join(name);
            if let Err(e) = fs::rename(&tmp, &fin) {
                for t in &tmp_paths {
                    let _ = fs::remove_file(t);
                }
                for w in &written {
                    let _ = fs::remove_file(w);
                }
                return Err(CliError::Io(format!("rename {}: {e}", fin.display())));
            }
            written.push(fin);
        }
        Ok(written)
    }
}

/// Render the main time-series table.
pub fn series_csv(series: &dephasim::observables::DecoherenceSeries) -> Vec<u8> {
    let with_d = series.d_complex.is_some();
    let mut out = String::new();
    out.push_str(if with_d { "t,h,D,log10_D,d_re,d_im\n" } else { "t,h,D,log10_D\n" });
    for j in 0..series.times.len() {
        let log10_d = series.log_d[j] / std::f64::consts::LN_10;
        out.push_str(&fmt_f64(series.times[j]));
        out.push(',');
        out.push_str(&fmt_f64(series.fields[j]));
        out.push(',');
        out.push_str(&fmt_f64(series.d[j]));
        out.push(',');
        out.push_str(&fmt_f64(log10_d));
        if let Some(d) = &series.d_complex {
            out.push(',');
            out.push_str(&fmt_f64(d[j].re));
            out.push(',');
            out.push_str(&fmt_f64(d[j].im));
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// Render per-mode factors at snapshot fields.
pub fn modes_csv(
    modes: &[dephasim::model::KMode],
    series: &dephasim::observables::DecoherenceSeries,
    snapshot_h: &[f64],
) -> Vec<u8> {
    let mut out = String::from("k,F_k,snapshot_h\n");
    for &h in snapshot_h {
        // Nearest grid sample.
        let j = series
            .fields
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - h).abs().partial_cmp(&(b.1 - h).abs()).unwrap())
            .map(|(j, _)| j)
            .unwrap_or(0);
        for (i, mode) in modes.iter().enumerate() {
            out.push_str(&fmt_f64(mode.k));
            out.push(',');
            out.push_str(&fmt_f64(series.per_mode_f[i][j]));
            out.push(',');
            out.push_str(&fmt_f64(series.fields[j]));
            out.push('\n');
        }
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_is_stable() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_ne!(fnv1a64(b"ab"), fnv1a64(b"ba"));
    }

    #[test]
    fn float_format_round_trips() {
        for &v in &[0.1, -3.25e-300, 1.0 / 3.0, 2.0_f64.sqrt() * 1e17] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{s}");
        }
    }
}
