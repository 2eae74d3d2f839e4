//! Metric files.
//!
//! JSONL: the first line is `{"header": {...}}`, then one [`RunRecord`] per
//! line. CSV: `#`-prefixed header lines, a column row, then one row per
//! iteration. Floats use Rust's shortest round-trip formatting, so identical
//! runs give byte-identical files. Wall-clock time is never written.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunRecord;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Self-description embedded in every metric file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputHeader {
    pub schema_version: u32,
    /// SHA-256 of the resolved config text.
    pub config_hash: String,
    pub seed: u64,
    pub algorithm: String,
    pub eta: f64,
    /// The resolved config, verbatim.
    pub config: String,
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn write_jsonl(mut out: impl Write, header: &OutputHeader, records: &[RunRecord]) -> Result<()> {
    let h = serde_json::json!({ "header": header });
    writeln!(out, "{h}")?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl_records(input: impl BufRead) -> Result<(OutputHeader, Vec<RunRecord>)> {
    #[derive(Deserialize)]
    struct Head {
        header: OutputHeader,
    }
    let mut lines = input.lines();
    let first = lines.next().ok_or_else(|| Error::Io("empty metric file".into()))??;
    let head: Head = serde_json::from_str(&first)?;
    let mut records = Vec::new();
    for line in lines {
        records.push(serde_json::from_str(&line?)?);
    }
    Ok((head.header, records))
}

/// Shortest round-trip text; scientific notation outside `[1e-4, 1e16)`.
fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e16).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Columns:
/// `t` server iteration; `virtual_time` simulator time units; `loss` `F(w^t)`;
/// `grad_norm_sq` `‖∇F(w^{t−1})‖²`; `contributors` space-separated worker ids;
/// `tau_max` largest defined `τ_i(t)` (empty if none); `queue_depth_max`
/// largest per-worker backlog (empty if not tracked).
pub fn write_csv(mut out: impl Write, header: &OutputHeader, records: &[RunRecord]) -> Result<()> {
    writeln!(out, "# schema_version={}", header.schema_version)?;
    writeln!(out, "# config_hash={}", header.config_hash)?;
    writeln!(out, "# seed={}", header.seed)?;
    writeln!(out, "# algorithm={}", header.algorithm)?;
    writeln!(out, "# eta={}", num(header.eta))?;
    writeln!(out, "# units: virtual_time is unitless simulator time")?;
    writeln!(
        out,
        "t,virtual_time,loss,grad_norm_sq,contributors,tau_max,queue_depth_max"
    )?;
    for r in records {
        let tau_max = r.tau.iter().flatten().max().map(|v| v.to_string()).unwrap_or_default();
        let depth = r
            .queue_depths
            .as_ref()
            .and_then(|d| d.iter().max())
            .map(|v| v.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.t,
            num(r.virtual_time),
            num(r.loss),
            num(r.grad_norm_sq),
            join(&r.contributors),
            tau_max,
            depth
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> OutputHeader {
        OutputHeader {
            schema_version: SCHEMA_VERSION,
            config_hash: config_hash("x = 1\n"),
            seed: 3,
            algorithm: "dude_asgd".into(),
            eta: 0.01,
            config: "x = 1\n".into(),
        }
    }

    fn records() -> Vec<RunRecord> {
        vec![RunRecord {
            t: 1,
            virtual_time: 0.1 + 0.2,
            loss: -1.5,
            grad_norm_sq: 1e-300,
            contributors: vec![0, 2],
            tau: vec![Some(1), None, Some(1)],
            d: vec![Some(0), None, Some(0)],
            queue_depths: Some(vec![1, 3, 1]),
        }]
    }

    #[test]
    fn jsonl_round_trip() {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &header(), &records()).unwrap();
        let (h, r) = read_jsonl_records(&buf[..]).unwrap();
        assert_eq!(h, header());
        assert_eq!(r, records());
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &header(), &records()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let last = text.lines().last().unwrap();
        assert_eq!(last, "1,0.30000000000000004,-1.5,1e-300,0 2,1,3");
        assert!(text.starts_with("# schema_version=1\n"));
    }

    #[test]
    fn hash_is_sha256() {
        assert_eq!(
            config_hash(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
