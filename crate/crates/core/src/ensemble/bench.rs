//! Timing harness that only reports backends verified against classic
//! traversal on the same rows.

use std::time::{Duration, Instant};

use serde::Serialize;

use super::{Backend, EnsembleModel, EnsembleOutput, EnsembleScorer, ScorerOptions};
use crate::error::{Error, Result};
use crate::schema::Dataset;

#[derive(Debug, Clone, Serialize)]
pub struct BenchEntry {
    pub backend: Backend,
    pub iteration_order: String,
    pub trees: usize,
    pub leaves: usize,
    pub batch_size: usize,
    pub workers: usize,
    pub repetitions: usize,
    /// Median over the timed repetitions.
    pub wall_time_ms: f64,
    pub wall_times_ms: Vec<f64>,
    pub rows_per_sec: f64,
    pub verified: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub environment: String,
    pub reference: Backend,
    pub entries: Vec<BenchEntry>,
}

fn environment_note(workers: usize) -> String {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let profile = if cfg!(debug_assertions) {
        "debug"
    } else {
        "release"
    };
    format!(
        "{}-{}, {cores} hardware threads, {workers} scoring threads, {profile} build",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Describes the first few rows where `got` differs from `want`.
fn diff_sample(want: &[EnsembleOutput], got: &[EnsembleOutput]) -> Option<String> {
    let rows: Vec<String> = want
        .iter()
        .zip(got)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .take(3)
        .map(|(i, (a, b))| {
            let leaves = |o: &EnsembleOutput| match &o.leaves {
                Some(l) => format!("{l:?}"),
                None => "-".into(),
            };
            format!(
                "row {i}: classic {} leaves {} vs {} leaves {}",
                a.value,
                leaves(a),
                b.value,
                leaves(b)
            )
        })
        .collect();
    let total = want.iter().zip(got).filter(|(a, b)| a != b).count();
    (total > 0).then(|| format!("{total} differing rows; {}", rows.join("; ")))
}

/// Times each backend over `dataset`. The first pass of every backend is a
/// warm-up that is also compared row by row with classic traversal; any
/// difference aborts with [`Error::Disagreement`] before timings exist.
pub fn run_bench(
    model: &EnsembleModel,
    dataset: &Dataset,
    backends: &[Backend],
    repetitions: usize,
    workers: usize,
) -> Result<BenchReport> {
    if repetitions == 0 {
        return Err(Error::Config("bench needs at least one repetition".into()));
    }
    if backends.is_empty() {
        return Err(Error::Config("bench needs at least one backend".into()));
    }
    if backends.contains(&Backend::Soft) {
        return Err(Error::Unsupported(
            "soft scores blend leaves and cannot be verified against classic traversal".into(),
        ));
    }
    if dataset.schema != *model.schema() {
        return Err(Error::Schema(
            "dataset schema differs from the model's".into(),
        ));
    }
    let workers = workers.max(1);
    let reference = EnsembleScorer::new(model, Backend::Classic, ScorerOptions::default())
        .map_err(|e| Error::Disagreement(format!("classic reference unavailable: {e}")))?
        .score_rows(&dataset.rows, workers)?;

    let mut verified = Vec::with_capacity(backends.len());
    for &backend in backends {
        let scorer = EnsembleScorer::new(model, backend, ScorerOptions::default())?;
        if backend == Backend::Classic {
            // The reference pass was this backend's warm-up.
            verified.push(scorer);
            continue;
        }
        let got = scorer.score_rows(&dataset.rows, workers)?;
        let mismatch = if backend.is_hard() {
            diff_sample(&reference, &got)
        } else {
            let values_only: Vec<EnsembleOutput> = reference
                .iter()
                .map(|o| EnsembleOutput {
                    value: o.value,
                    leaves: None,
                })
                .collect();
            diff_sample(&values_only, &got)
        };
        if let Some(sample) = mismatch {
            return Err(Error::Disagreement(format!("{backend}: {sample}")));
        }
        verified.push(scorer);
    }

    let n = dataset.len();
    let entries = verified
        .iter()
        .map(|scorer| {
            let mut times = Vec::with_capacity(repetitions);
            for _ in 0..repetitions {
                let start = Instant::now();
                let out = scorer.score_rows(&dataset.rows, workers)?;
                times.push(ms(start.elapsed()));
                std::hint::black_box(out);
            }
            let wall = median(times.clone());
            Ok(BenchEntry {
                backend: scorer.backend(),
                iteration_order: scorer.iteration_order().to_string(),
                trees: model.len(),
                leaves: model.total_leaves(),
                batch_size: n,
                workers,
                repetitions,
                wall_time_ms: wall,
                wall_times_ms: times,
                rows_per_sec: if wall > 0.0 {
                    n as f64 / (wall / 1e3)
                } else {
                    f64::INFINITY
                },
                verified: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        environment: environment_note(workers),
        reference: Backend::Classic,
        entries,
    })
}
