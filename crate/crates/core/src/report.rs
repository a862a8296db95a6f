//! Experiment outputs: one CSV per policy plus a JSON manifest.
//!
//! CSV numbers are written with 17 significant digits so parsing them back
//! reproduces the exact f64 bit patterns; the files are line-feed
//! terminated UTF-8 and depend only on the experiment results, never on
//! wall time or host details (those live in the manifest). A failed run
//! removes every file it already wrote.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::sampler::{self, SamplerParams};
use crate::family::ExpFamilyModel;
use crate::simulate::{
    asymptotic_constant, asymptotic_ratio, run_monte_carlo, McOptions, RegretSummary, SimError,
};

/// Errors raised while producing reports.
#[derive(Debug, Error)]
pub enum ReportError {
    /// Filesystem failure.
    #[error("failed to {action} `{path}`: {source}")]
    Io {
        action: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Simulation failure.
    #[error(transparent)]
    Sim(#[from] SimError),
    /// Sampler failure (curve dumps).
    #[error(transparent)]
    Sampler(#[from] sampler::SamplerError),
}

/// Formats a float with 17 significant digits, enough for exact f64
/// round-trips.
fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err<'a>(
    action: &'static str,
    path: &'a Path,
) -> impl FnOnce(std::io::Error) -> ReportError + 'a {
    move |source| ReportError::Io { action, path: path.to_path_buf(), source }
}

/// Paths written by a successful experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    /// The JSON manifest.
    pub manifest_path: PathBuf,
    /// One CSV per policy, in configuration order.
    pub csv_paths: Vec<PathBuf>,
    /// The per-policy summaries, for display.
    pub summaries: Vec<RegretSummary>,
}

#[derive(Serialize)]
struct ToolInfo {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    policy: String,
    csv: String,
    #[serde(flatten)]
    summary: &'a RegretSummary,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: ToolInfo,
    config: &'a ExperimentConfig,
    workers: Option<usize>,
    asymptotic_constant: f64,
    wall_time_seconds: f64,
    results: Vec<ManifestEntry<'a>>,
}

/// Renders one policy summary as CSV.
fn summary_csv(summary: &RegretSummary, constant: f64) -> String {
    let mut out = String::from("t,mean_regret,stderr,regret_over_log_t,asymptotic_constant\n");
    let ratios = asymptotic_ratio(summary);
    for j in 0..summary.checkpoints.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            summary.checkpoints[j],
            format_float(summary.mean_regret[j]),
            format_float(summary.stderr[j]),
            format_float(ratios[j].1),
            format_float(constant),
        ));
    }
    out
}

/// Generates a plotting script stub for the written CSV files (plots are
/// never rendered in-process).
fn plot_stub(csv_paths: &[PathBuf]) -> String {
    let mut out = String::from(
        "#!/usr/bin/env python3\n\
         \"\"\"Plot mean regret curves from the CSVs next to this script.\"\"\"\n\
         import csv\n\
         import pathlib\n\n\
         import matplotlib.pyplot as plt\n\n\
         HERE = pathlib.Path(__file__).resolve().parent\n\
         FILES = [\n",
    );
    for path in csv_paths {
        out.push_str(&format!("    {:?},\n", path.file_name().unwrap().to_string_lossy()));
    }
    out.push_str(
        "]\n\n\
         for name in FILES:\n\
         \x20   with open(HERE / name, newline=\"\") as f:\n\
         \x20       rows = list(csv.DictReader(f))\n\
         \x20   t = [int(r[\"t\"]) for r in rows]\n\
         \x20   mean = [float(r[\"mean_regret\"]) for r in rows]\n\
         \x20   err = [float(r[\"stderr\"]) for r in rows]\n\
         \x20   label = name.removesuffix(\".csv\")\n\
         \x20   plt.plot(t, mean, label=label)\n\
         \x20   plt.fill_between(t, [m - e for m, e in zip(mean, err)],\n\
         \x20                    [m + e for m, e in zip(mean, err)], alpha=0.2)\n\n\
         plt.xscale(\"log\")\n\
         plt.xlabel(\"t\")\n\
         plt.ylabel(\"mean pseudo-regret\")\n\
         plt.legend()\n\
         plt.tight_layout()\n\
         plt.savefig(HERE / \"regret.png\", dpi=160)\n\
         print(\"wrote\", HERE / \"regret.png\")\n",
    );
    out
}

/// Runs every configured policy and writes the per-policy CSV files, a
/// `plot.py` stub that renders them, and a `manifest.json` into the
/// configured output directory.
///
/// `workers` overrides the worker pool for all policies. On any failure the
/// files written so far are removed before the error is returned; the
/// output directory itself is left in place.
pub fn run_experiment(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<ExperimentReport, ReportError> {
    let start = Instant::now();
    let dir = &config.output_path;
    fs::create_dir_all(dir).map_err(io_err("create directory", dir))?;

    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        let constant = asymptotic_constant(&config.instance);
        let opts = McOptions {
            replications: config.replications,
            base_seed: config.base_seed,
            checkpoint_ratio: config.checkpoint_ratio,
            workers,
        };
        let mut summaries = Vec::new();
        let mut csv_paths = Vec::new();
        for &policy in &config.policies {
            let summary = run_monte_carlo(policy, &config.instance, config.horizon, &opts)?;
            let path = dir.join(format!("{policy}.csv"));
            fs::write(&path, summary_csv(&summary, constant)).map_err(io_err("write", &path))?;
            written.push(path.clone());
            csv_paths.push(path);
            summaries.push(summary);
        }

        let plot_path = dir.join("plot.py");
        fs::write(&plot_path, plot_stub(&csv_paths)).map_err(io_err("write", &plot_path))?;
        written.push(plot_path);

        let manifest = Manifest {
            tool: ToolInfo { name: "expts", version: env!("CARGO_PKG_VERSION") },
            config,
            workers,
            asymptotic_constant: constant,
            wall_time_seconds: start.elapsed().as_secs_f64(),
            results: summaries
                .iter()
                .zip(&csv_paths)
                .map(|(summary, path)| ManifestEntry {
                    policy: summary.policy.to_string(),
                    csv: path.file_name().unwrap().to_string_lossy().into_owned(),
                    summary,
                })
                .collect(),
        };
        let manifest_path = dir.join("manifest.json");
        let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        body.push('\n');
        fs::write(&manifest_path, body).map_err(io_err("write", &manifest_path))?;
        written.push(manifest_path.clone());

        Ok(ExperimentReport { manifest_path, csv_paths, summaries })
    })();

    if result.is_err() {
        for path in &written {
            let _ = fs::remove_file(path);
        }
    }
    result
}

/// Tabulates a sampling distribution and writes it as CSV with columns
/// `x,pdf,cdf,tail_probability`.
pub fn write_sampler_dump(
    path: &Path,
    model: &ExpFamilyModel,
    params: &SamplerParams,
    points: usize,
) -> Result<(), ReportError> {
    let curve = sampler::sampler_curve(model, params, points)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err("create directory", parent))?;
    }
    let file = fs::File::create(path).map_err(io_err("create", path))?;
    let mut w = std::io::BufWriter::new(file);
    (|| {
        writeln!(w, "x,pdf,cdf,tail_probability")?;
        for p in &curve {
            writeln!(
                w,
                "{},{},{},{}",
                format_float(p.x),
                format_float(p.pdf),
                format_float(p.cdf),
                format_float(p.tail)
            )?;
        }
        w.flush()
    })()
    .map_err(io_err("write", path))?;
    Ok(())
}
