//! Parallel replication and scenario execution.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use banditq_core::env::Environment;
use banditq_core::sim::{run_once, PolicyAccumulator, PolicyResult, RecordOptions, RunRecord, SimError};
use banditq_core::PolicyDescriptor;
use rayon::prelude::*;

use crate::output;
use crate::scenario::Scenario;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error("environment: {0}")]
    Environment(String),
    #[error("runtime assertion failed: {0}")]
    Assertion(#[from] SimError),
    #[error(transparent)]
    Io(#[from] anyhow::Error),
}

/// Replicates every policy `reps` times; replication `r` uses seed
/// `base_seed + r`. Replications run in parallel in batches of the pool
/// size and are folded in replication order, so results do not depend on
/// scheduling.
pub fn replicate_parallel<F>(
    env: &Environment,
    descriptors: &[PolicyDescriptor],
    reps: usize,
    base_seed: u64,
    stride: usize,
    options: &RecordOptions,
    on_record: F,
) -> Result<Vec<PolicyResult>, RunError>
where
    F: Fn(&PolicyDescriptor, usize, &RunRecord) -> anyhow::Result<()> + Sync,
{
    let batch = rayon::current_num_threads().max(1);
    let mut out = Vec::with_capacity(descriptors.len());
    for d in descriptors {
        let mut acc = PolicyAccumulator::new(&d.label, env.spec().horizon, stride);
        let mut start = 0;
        while start < reps {
            let end = (start + batch).min(reps);
            let records: Vec<Result<RunRecord, SimError>> =
                (start..end).into_par_iter().map(|r| run_once(env, d, base_seed + r as u64, options)).collect();
            for (offset, record) in records.into_iter().enumerate() {
                let record = record?;
                on_record(d, start + offset, &record)?;
                acc.push(&record);
            }
            start = end;
        }
        out.push(acc.finish());
    }
    Ok(out)
}

/// Command-line overrides of scenario fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub reps: Option<usize>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub check: Option<bool>,
}

impl Overrides {
    pub fn apply(&self, scenario: &mut Scenario) {
        if let Some(r) = self.reps {
            scenario.reps = r;
        }
        if let Some(t) = self.horizon {
            scenario.horizon = t;
        }
        if let Some(s) = self.seed {
            scenario.base_seed = s;
        }
        if let Some(o) = &self.out_dir {
            scenario.output_dir = o.to_string_lossy().into_owned();
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub results: Vec<PolicyResult>,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn checks_passed(&self) -> bool {
        self.results.iter().all(PolicyResult::checks_passed)
    }

    pub fn result(&self, label: &str) -> Option<&PolicyResult> {
        self.results.iter().find(|r| r.label == label)
    }
}

/// Runs a validated scenario and writes its outputs into `scenario.output_dir`:
/// `<policy>.csv`, `<policy>.timeavg.csv`, `summary.txt`, `plot.svg`, plus
/// the noise file and per-run record files when requested.
pub fn run_scenario(scenario: &Scenario, check: bool) -> Result<RunOutcome, RunError> {
    scenario.validate()?;
    let spec = scenario.environment_spec();
    let env = spec.prepare().map_err(|e| RunError::Environment(e.to_string()))?;
    let descriptors = scenario.descriptors()?;
    let out_dir = PathBuf::from(&scenario.output_dir);
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let mut files = Vec::new();
    if let (Some(name), Some(noise)) = (&scenario.noise_file, env.service_noise()) {
        let path = out_dir.join(name);
        output::write_noise_file(&path, noise)?;
        files.push(path);
    }

    let options = RecordOptions {
        check,
        per_slot: scenario.save_records,
        queue_stride: usize::from(scenario.save_records),
        common_random_numbers: scenario.common_random_numbers,
    };
    let record_dir = out_dir.clone();
    let results = replicate_parallel(&env, &descriptors, scenario.reps, scenario.base_seed, scenario.stride, &options, |d, rep, record| {
        if scenario.save_records {
            let path = record_dir.join(format!("{}.rep{}.record.csv", output::slug(&d.label), rep + 1));
            output::write_record(&path, record)?;
        }
        Ok(())
    })?;
    if scenario.save_records {
        for d in &descriptors {
            for rep in 0..scenario.reps {
                files.push(out_dir.join(format!("{}.rep{}.record.csv", output::slug(&d.label), rep + 1)));
            }
        }
    }

    for r in &results {
        let slug = output::slug(&r.label);
        let path = out_dir.join(format!("{slug}.csv"));
        write_file(&path, &output::series_csv(r))?;
        files.push(path);
        let path = out_dir.join(format!("{slug}.timeavg.csv"));
        write_file(&path, &output::time_average_csv(r))?;
        files.push(path);
    }
    let path = out_dir.join("plot.svg");
    write_file(&path, &output::emit_plot(&scenario.name, &results)?)?;
    files.push(path);
    let path = out_dir.join("summary.txt");
    write_file(&path, &summary_text(scenario, &results, check))?;
    files.push(path);

    Ok(RunOutcome { results, out_dir, files })
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn summary_text(scenario: &Scenario, results: &[PolicyResult], check: bool) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", scenario.name);
    let _ = writeln!(
        s,
        "horizon: {}  reps: {}  base seed: {}  noise seed: {}",
        scenario.horizon, scenario.reps, scenario.base_seed, scenario.environment.noise_seed
    );
    let _ = writeln!(s, "final window: slots ({}, {}]", scenario.horizon - scenario.horizon / 10, scenario.horizon);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<16} {:>18} {:>18} {:>8}", "policy", "final-window mean", "time average", "checks");
    for r in results {
        let status = if !check {
            "off"
        } else if r.checks_passed() {
            "pass"
        } else {
            "FAIL"
        };
        let _ = writeln!(s, "{:<16} {:>18.3} {:>18.3} {:>8}", r.label, r.final_window_mean(), r.time_average(), status);
    }
    if check {
        let _ = writeln!(s);
        let _ = writeln!(s, "checker reports (worst over all replications):");
        for r in results {
            for c in &r.checks {
                let _ = writeln!(s, "  {}: {}", r.label, c);
            }
        }
    }
    s
}
