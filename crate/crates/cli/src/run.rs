use std::path::Path;
use std::sync::Mutex;

use delocsim::dynamics::{checkerboard, run_quench_with, QuenchOptions};
use delocsim::hamiltonian::{build_hamiltonian, sample_disorder};
use delocsim::lattice::CouplingGraph;
use delocsim::spectral::{realization_spectrum, EnsembleDescriptor, PolfedConfig};
use rayon::prelude::*;

use crate::aggregate::{
    completed_on_disk, gap_ratio_aggregates, quench_aggregates, spectrum_path, trace_path, Completed, GapRatioReport,
    QuenchSummary,
};
use crate::error::{CliError, CliResult};
use crate::manifest::{unix_now, write_atomic, Diagnostics, RunManifest, TaskRecord, TaskStatus};
use crate::spec::{ExperimentSpec, Mode};

/// Environment variable consulted when `--workers` is not given.
pub const WORKERS_ENV: &str = "DELOCSIM_WORKERS";

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    pub resume: bool,
}

/// Explicit count, then the environment, then the machine's parallelism.
pub fn resolve_workers(explicit: Option<usize>) -> CliResult<usize> {
    if let Some(n) = explicit {
        return if n == 0 {
            Err(CliError::Validation("--workers must be at least 1".into()))
        } else {
            Ok(n)
        };
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Validation(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Summary {
    Quench(QuenchSummary),
    Spectrum { files: usize },
    GapRatio(GapRatioReport),
}

#[derive(Debug, Clone)]
pub struct RunReport {
    /// Absent for fit-only runs, which do not schedule tasks.
    pub manifest: Option<RunManifest>,
    pub summary: Summary,
}

fn output_path(mode: Mode) -> fn(f64, usize) -> String {
    match mode {
        Mode::Quench | Mode::FitOnly => trace_path,
        Mode::Spectrum | Mode::GapRatio => spectrum_path,
    }
}

fn fresh_manifest(spec: &ExperimentSpec) -> RunManifest {
    let path_of = output_path(spec.mode);
    let tasks = spec
        .w_list
        .iter()
        .flat_map(|&w| {
            (0..spec.realizations).map(move |index| TaskRecord {
                w,
                index,
                seed: spec.seed(index),
                output: path_of(w, index),
                status: TaskStatus::Pending,
                diagnostics: None,
            })
        })
        .collect();
    RunManifest {
        spec_digest: spec.digest(),
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        seed_base: spec.seed_base,
        seed_rule: "splitmix64(seed_base + index * 0x9E3779B97F4A7C15), shared across W".into(),
        started_unix: unix_now(),
        finished_unix: None,
        tasks,
    }
}

fn run_task(spec: &ExperimentSpec, graph: &CouplingGraph, task: &TaskRecord, dir: &Path) -> CliResult<Option<Diagnostics>> {
    let mut bytes = Vec::new();
    let diagnostics = match spec.mode {
        Mode::Quench => {
            let disorder = sample_disorder(graph.len(), task.w, task.seed)?;
            let pattern = checkerboard(graph, spec.pattern.parity(task.index));
            let h = build_hamiltonian(graph, &disorder, pattern.len())?;
            let times = spec.time_grid.times()?;
            let opts = QuenchOptions {
                record_occupations: spec.record_occupations,
                ..Default::default()
            };
            let trace = run_quench_with(&h, &pattern, *times.last().unwrap(), &times, opts)?;
            trace.write_csv(&mut bytes)?;
            Some(Diagnostics {
                norm_drift: trace.norm_drift,
                number_drift: trace.number_drift,
                initial_imbalance: trace.imbalance[0],
            })
        }
        Mode::Spectrum | Mode::GapRatio => {
            let desc = EnsembleDescriptor {
                graph: graph.clone(),
                w: task.w,
                n_excitations: spec.spectral_excitations(),
                seed_base: spec.seed_base,
            };
            let result = realization_spectrum(&desc, spec.window(), task.index, PolfedConfig::default())?;
            result.write_csv(&mut bytes)?;
            None
        }
        Mode::FitOnly => unreachable!("fit-only runs schedule no tasks"),
    };
    write_atomic(&dir.join(&task.output), &bytes)?;
    Ok(diagnostics)
}

/// Runs every pending `(W, realization)` task of `spec`, then reduces the
/// outputs. With `resume`, tasks already marked done in an existing manifest
/// of the same experiment are skipped.
pub fn run_experiment(spec: &ExperimentSpec, opts: RunOptions) -> CliResult<RunReport> {
    spec.validate()?;
    let dir = spec.out.as_path();
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let spec_json = serde_json::to_string_pretty(spec).expect("spec serializes");
    write_atomic(&dir.join("spec.json"), spec_json.as_bytes())?;

    if spec.mode == Mode::FitOnly {
        let completed = completed_on_disk(spec, dir, trace_path);
        let summary = quench_aggregates(spec, dir, &completed)?;
        return Ok(RunReport {
            manifest: RunManifest::load(dir)?,
            summary: Summary::Quench(summary),
        });
    }

    let graph = spec.graph()?;
    let mut manifest = fresh_manifest(spec);
    if opts.resume {
        if let Some(old) = RunManifest::load(dir)? {
            if old.spec_digest != manifest.spec_digest {
                return Err(CliError::DigestMismatch {
                    dir: dir.display().to_string(),
                    found: old.spec_digest,
                    expected: manifest.spec_digest,
                });
            }
            manifest.started_unix = old.started_unix;
            for (new, old) in manifest.tasks.iter_mut().zip(old.tasks) {
                if old.status == TaskStatus::Done && dir.join(&old.output).is_file() {
                    *new = old;
                }
            }
        }
    }
    manifest.save(dir)?;

    let pending: Vec<usize> = (0..manifest.tasks.len())
        .filter(|&k| manifest.tasks[k].status != TaskStatus::Done)
        .collect();
    let skipped = manifest.tasks.len() - pending.len();
    if skipped > 0 {
        log::info!("resuming: {skipped} tasks already done, {} to run", pending.len());
    }

    let workers = resolve_workers(opts.workers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start {workers} workers: {e}")))?;
    let shared = Mutex::new((manifest, None::<CliError>));
    pool.install(|| {
        pending.par_iter().for_each(|&k| {
            let task = shared.lock().unwrap().0.tasks[k].clone();
            let outcome = run_task(spec, &graph, &task, dir);
            let mut guard = shared.lock().unwrap();
            let (manifest, save_error) = &mut *guard;
            let record = &mut manifest.tasks[k];
            match outcome {
                Ok(diag) => {
                    record.status = TaskStatus::Done;
                    record.diagnostics = diag;
                }
                Err(e) => {
                    log::warn!("task W = {} realization {} failed: {e}", task.w, task.index);
                    record.status = TaskStatus::Failed { message: e.to_string() };
                }
            }
            if let Err(e) = manifest.save(dir) {
                save_error.get_or_insert(e);
            }
        })
    });
    let (mut manifest, save_error) = shared.into_inner().unwrap();
    if let Some(e) = save_error {
        return Err(e);
    }

    let mut completed: Completed = spec.w_list.iter().map(|&w| (w, Vec::new())).collect();
    let mut failures = Vec::new();
    for (k, t) in manifest.tasks.iter().enumerate() {
        match &t.status {
            TaskStatus::Done => completed[k / spec.realizations].1.push(t.index),
            TaskStatus::Failed { message } => failures.push((t.w, t.index, message.clone())),
            TaskStatus::Pending => unreachable!("every pending task was run"),
        }
    }

    let summary = match spec.mode {
        Mode::Quench => Summary::Quench(quench_aggregates(spec, dir, &completed)?),
        Mode::GapRatio => Summary::GapRatio(gap_ratio_aggregates(spec, dir, &completed, &failures)?),
        Mode::Spectrum => Summary::Spectrum {
            files: completed.iter().map(|c| c.1.len()).sum(),
        },
        Mode::FitOnly => unreachable!(),
    };
    manifest.finished_unix = Some(unix_now());
    manifest.save(dir)?;

    let failed = manifest.failed();
    if failed > 0 {
        return Err(CliError::TasksFailed {
            failed,
            total: manifest.tasks.len(),
        });
    }
    Ok(RunReport {
        manifest: Some(manifest),
        summary,
    })
}
