//! Experiment dispatch and result emission.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use levy_sync::mc::{self, ExperimentReport};

use crate::config::{Experiment, RunConfig};
use crate::error::CliError;
use crate::plot::{emit_plot_rows, PlotKind};

pub const REPORT_FILE: &str = "report.csv";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
/// Present in the output directory when the last run stopped with an error.
pub const FAILED_MARKER: &str = "FAILED";

/// Outcome of a run that did not crash.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Passed,
    ChecksFailed,
}

impl RunStatus {
    pub fn exit_code(self) -> u8 {
        match self {
            RunStatus::Passed => 0,
            RunStatus::ChecksFailed => 2,
        }
    }
}

/// Exit code for a run that stopped with an error.
pub const ERROR_EXIT_CODE: u8 = 1;

/// Runs the configured experiment without touching the file system.
pub fn execute(config: &RunConfig) -> Result<ExperimentReport, CliError> {
    config.validate()?;
    let mc = &config.mc;
    let mut report = match config.experiment {
        Experiment::SamplerCheck => mc::sampler_check(config.spec.alpha, mc.n_paths, mc.master_seed)?,
        experiment => {
            let spec = config.coupled_spec()?;
            match experiment {
                Experiment::Averaging => mc::averaging_convergence(&spec, mc)?,
                Experiment::Persistence => mc::synchronization_persistence(&spec, mc)?,
                Experiment::Moments => mc::moment_uniformity(&spec, mc)?,
                Experiment::Attractor => mc::attractor_diameter(&spec, &config.initial_set(), mc)?,
                Experiment::Mixing => mc::mixing_experiment(&spec, mc)?,
                Experiment::Holder => mc::holder_experiment(&spec, mc)?,
                Experiment::SamplerCheck => unreachable!(),
            }
        }
    };
    report
        .manifest
        .extra
        .insert("config".into(), config.to_toml().into());
    Ok(report)
}

pub fn plot_kind(experiment: Experiment) -> PlotKind {
    match experiment {
        Experiment::SamplerCheck => PlotKind::Linear,
        Experiment::Attractor => PlotKind::SemiLog,
        _ => PlotKind::LogLog,
    }
}

/// File name of the chart for `estimator`.
pub fn plot_file_name(estimator: &str) -> String {
    let stem: String = estimator
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("plot_{stem}.svg")
}

/// Writes `bytes` to `dir/name` through a temporary file in `dir`.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let io = |path: &PathBuf| {
        let path = path.clone();
        move |source| CliError::Io { path, source }
    };
    let mut file = fs::File::create(&tmp).map_err(io(&tmp))?;
    file.write_all(bytes).map_err(io(&tmp))?;
    file.sync_all().map_err(io(&tmp))?;
    fs::rename(&tmp, &target).map_err(io(&target))
}

/// Report CSV, manifest and (optionally) one chart per estimator, as
/// `(file name, contents)` pairs.
pub fn render_outputs(
    report: &ExperimentReport,
    experiment: Experiment,
    plots: bool,
) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let mut manifest = Vec::new();
    report.write_manifest(&mut manifest)?;
    let mut files = vec![(REPORT_FILE.to_string(), csv), (MANIFEST_FILE.to_string(), manifest)];
    if plots {
        for name in report.estimators() {
            let rows: Vec<_> = report.rows_for(name).cloned().collect();
            let title = format!("{}: {name}", report.manifest.experiment);
            let svg = emit_plot_rows(&rows, plot_kind(experiment), &title)?;
            files.push((plot_file_name(name), svg.into_bytes()));
        }
    }
    Ok(files)
}

/// Executes the run and writes its outputs into `config.output_dir`.
///
/// On error a `FAILED` marker holding the message is left in the output
/// directory; a successful run removes a stale marker.
pub fn run(config: &RunConfig) -> Result<(RunStatus, ExperimentReport), CliError> {
    config.validate()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    let marker = dir.join(FAILED_MARKER);
    let outcome = execute(config).and_then(|report| {
        for (name, bytes) in render_outputs(&report, config.experiment, config.emit_plots)? {
            write_atomic(dir, &name, &bytes)?;
        }
        Ok(report)
    });
    match outcome {
        Ok(report) => {
            if marker.exists() {
                fs::remove_file(&marker).map_err(|source| CliError::Io { path: marker, source })?;
            }
            let status = if report.passed() {
                RunStatus::Passed
            } else {
                RunStatus::ChecksFailed
            };
            Ok((status, report))
        }
        Err(e) => {
            let _ = write_atomic(dir, FAILED_MARKER, format!("{e}\n").as_bytes());
            Err(e)
        }
    }
}

/// Worker count requested through the thread override variable.
pub fn thread_override(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Validation {
                field: crate::THREADS_ENV.into(),
                message: format!("'{v}' is not a positive integer"),
            }),
        },
    }
}
