//! CSV writers for trajectories, drift tables, rate reports and plot data.
//!
//! UTF-8, `.` decimal separator, mandatory header row. Floats use Rust's
//! shortest round-trip formatting so reruns are byte-identical. Metadata
//! goes in leading `# key=value` comment lines.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::averaging::DriftEstimate;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::experiments::{ProfileReport, RateReport};
use crate::spectral::SpectralField;

fn comment_lines(out: &mut String, meta: &[(&str, String)]) {
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
}

/// Columns `t, x1..xN` and `y1..yN` when the fast component was recorded.
pub fn trajectory_csv(traj: &Trajectory, meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, meta);
    let n = traj.dim();
    let has_y = traj.y(0).is_some();
    out.push('t');
    for k in 1..=n {
        let _ = write!(out, ",x{k}");
    }
    if has_y {
        for k in 1..=n {
            let _ = write!(out, ",y{k}");
        }
    }
    out.push('\n');
    for (i, t) in traj.times().iter().enumerate() {
        let _ = write!(out, "{t}");
        for v in traj.x(i) {
            let _ = write!(out, ",{v}");
        }
        if let Some(y) = traj.y(i) {
            for v in y {
                let _ = write!(out, ",{v}");
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRow {
    pub t: f64,
    pub mode: usize,
    pub value: f64,
    pub stderr: f64,
    pub median_of_means: f64,
    pub oracle: Option<f64>,
}

/// One row per mode (1-based).
pub fn drift_rows(t: f64, est: &DriftEstimate, oracle: Option<&SpectralField>) -> Vec<DriftRow> {
    (0..est.mean.dim())
        .map(|k| DriftRow {
            t,
            mode: k + 1,
            value: est.mean.coeffs()[k],
            stderr: est.stderr[k],
            median_of_means: est.median_of_means[k],
            oracle: oracle.map(|o| o.coeffs()[k]),
        })
        .collect()
}

/// Columns `t, mode, value, stderr, median_of_means, oracle`; `oracle` is empty when unavailable.
pub fn drift_table_csv(rows: &[DriftRow], meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, meta);
    out.push_str("t,mode,value,stderr,median_of_means,oracle\n");
    for r in rows {
        let oracle = r.oracle.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t, r.mode, r.value, r.stderr, r.median_of_means, oracle
        );
    }
    out
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Columns `eps, p, error, stderr, slope, theory, verdict`, one row per `eps`.
pub fn report_csv(report: &RateReport, meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, meta);
    out.push_str("eps,p,error,stderr,slope,theory,verdict\n");
    for e in &report.errors {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.eps,
            e.p,
            e.value,
            e.stderr,
            report.fit.slope,
            report.fit.theory,
            verdict(report.passed())
        );
    }
    out
}

/// Columns `eps, window, phi1, phi2_tilde, bound, error, ratio`.
pub fn profile_csv(report: &ProfileReport, meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    comment_lines(&mut out, meta);
    out.push_str("eps,window,phi1,phi2_tilde,bound,error,ratio\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.eps, r.window, r.phi1, r.phi2_tilde, r.bound, r.error, r.ratio
        );
    }
    out
}

/// Two-column plot data.
pub fn plot_data(x_label: &str, y_label: &str, xs: &[f64], ys: &[f64]) -> String {
    let mut out = format!("{x_label},{y_label}\n");
    for (x, y) in xs.iter().zip(ys) {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

/// Writes `contents` to `path`, refusing to replace an existing file unless `force`.
pub fn write_output(path: &Path, contents: &str, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::io(
            path,
            std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                "refusing to overwrite without --force",
            ),
        ));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
