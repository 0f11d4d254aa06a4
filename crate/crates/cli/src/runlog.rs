use std::fmt::Write as _;
use std::path::Path;

use minibatch_sfl::protocol::{RunLog, StepRecord};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// First line of every run log.
pub const MAGIC: &str = "# msfl-runlog v1";

/// Fixed column order. The first eleven are the core schema; the rest are
/// diagnostics that are empty when not tracked.
pub const COLUMNS: [&str; 15] = [
    "i",
    "t",
    "e",
    "m",
    "loss",
    "accuracy",
    "dist_sq_to_wstar",
    "eta_c",
    "eta_s",
    "grad_var_at_client_mean",
    "grad_var_across_clients",
    "dist_sq_server",
    "dist_sq_client",
    "client_divergence",
    "grad_noise_sq",
];

/// Content hash in the style of a git object id, over SHA-256:
/// `sha256("blob <len>\0" ++ content)`.
pub fn content_hash(content: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content.as_bytes());
    hex::encode(h.finalize())
}

/// 17 significant digits, enough to round-trip any `f64`. Non-finite values
/// are written as empty fields.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn row(r: &StepRecord) -> String {
    [
        r.i.to_string(),
        r.t.to_string(),
        r.e.to_string(),
        r.m.to_string(),
        fmt_f64(r.loss),
        fmt_opt(r.accuracy),
        fmt_opt(r.dist_sq_to_wstar),
        fmt_opt(r.eta_c),
        fmt_opt(r.eta_s),
        fmt_opt(r.grad_var_at_client_mean),
        fmt_opt(r.grad_var_across_clients),
        fmt_opt(r.dist_sq_server),
        fmt_opt(r.dist_sq_client),
        fmt_f64(r.client_divergence),
        fmt_opt(r.grad_noise_sq),
    ]
    .join(",")
}

/// Renders a run log. `config` is the single-cell config that reproduces
/// the rows; `wall_time` adds a footer line.
pub fn render(config: &ExperimentConfig, log: &RunLog, wall_time: Option<f64>) -> String {
    let json = config.to_json();
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "# config_hash: {}", content_hash(&json)).unwrap();
    writeln!(out, "# config: {json}").unwrap();
    writeln!(out, "{}", COLUMNS.join(",")).unwrap();
    for r in &log.records {
        writeln!(out, "{}", row(r)).unwrap();
    }
    let last = log.last();
    writeln!(out, "# final_loss: {}", fmt_f64(last.loss)).unwrap();
    writeln!(out, "# final_accuracy: {}", fmt_opt(last.accuracy)).unwrap();
    if let Some(w) = wall_time {
        writeln!(out, "# wall_time_s: {w:.3}").unwrap();
    }
    out
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// The config recorded in a run-log header, after checking its hash.
pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |message: &str| CliError::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("not a run log"));
    }
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("# config_hash: "))
        .ok_or_else(|| bad("missing config hash"))?;
    let json = lines
        .next()
        .and_then(|l| l.strip_prefix("# config: "))
        .ok_or_else(|| bad("missing config"))?;
    if content_hash(json) != hash {
        return Err(bad("config hash does not match the recorded config"));
    }
    serde_json::from_str(json).map_err(|e| bad(&e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            123_456_789.123_456_79,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(f64::NAN), "");
        assert_eq!(fmt_f64(f64::INFINITY), "");
    }

    #[test]
    fn hash_matches_git_sha256_blob_id() {
        // `printf hello | git hash-object --stdin` in a sha256 repository.
        assert_eq!(
            content_hash("hello"),
            "8aec4e4876f854f688d0ebfc8f37598f38e5fd6903cccc850ca36591175aeb60"
        );
    }

    #[test]
    fn schema_starts_with_core_columns() {
        assert_eq!(
            COLUMNS[..11].join(","),
            "i,t,e,m,loss,accuracy,dist_sq_to_wstar,eta_c,eta_s,grad_var_at_client_mean,grad_var_across_clients"
        );
    }
}
