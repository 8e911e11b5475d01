//! Helpers shared by the CLI and acceptance test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use hcr::RawSeries;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Path of the compiled `hcr` binary.
pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hcr")
}

/// Run the binary; returns (exit code, stdout, stderr).
pub fn run(args: &[&str]) -> (i32, String, String) {
    let output = Command::new(bin())
        .args(args)
        .output()
        .expect("failed to spawn the hcr binary");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

/// Fresh per-test scratch directory under the cargo-managed tmp dir.
pub fn workdir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("create test workdir");
    dir
}

pub fn laplace_quantile(u: f64) -> f64 {
    if u <= 0.5 {
        (2.0 * u).ln()
    } else {
        -(2.0 * (1.0 - u)).ln()
    }
}

/// Two-variable random walk whose residual pairs carry both temporal (AR)
/// and strong cross-variable dependence — the kind of structure a context
/// model is supposed to pick up.
pub fn dependent_raw(seed: u64, n1: usize) -> RawSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((n1 + 1, 2));
    let mut carry = 0.0;
    for t in 0..n1 {
        let e1 = laplace_quantile(rng.random::<f64>());
        let e2 = laplace_quantile(rng.random::<f64>());
        let r1 = 0.6 * carry + e1;
        let r2 = -r1 + 0.5 * e2;
        carry = r1;
        values[[t + 1, 0]] = values[[t, 0]] + r1;
        values[[t + 1, 1]] = values[[t, 1]] + r2;
    }
    RawSeries::new(vec!["a".into(), "b".into()], values).unwrap()
}

/// Write a raw series as a CSV the CLI can ingest.
pub fn write_series_csv(path: &Path, series: &RawSeries) {
    let mut out = String::from("date,");
    out.push_str(&series.names().join(","));
    out.push('\n');
    for (t, time) in series.times().iter().enumerate() {
        out.push_str(time);
        for i in 0..series.n_vars() {
            out.push_str(&format!(",{:.17e}", series.values()[[t, i]]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).expect("write test CSV");
}
