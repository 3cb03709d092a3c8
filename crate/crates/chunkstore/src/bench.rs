//! Download-time benchmark over a sweep of chunk sizes.
//!
//! For each candidate size the file is stored once, fetched `trials`
//! times with a stopwatch around each fetch, then removed. Every trial
//! opens fresh connections and file handles; on a local filesystem the
//! operating system may still serve repeated reads from its page
//! cache, so absolute numbers flatter the small sizes — the CSV says
//! so in its comment header.

use std::fmt::Write as _;
use std::time::Instant;

use crate::registry::NodeRegistry;
use crate::store;
use crate::StoreError;

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub chunk_size: u64,
    pub trial_seconds: Vec<f64>,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub results: Vec<BenchResult>,
    /// Chunk size with the smallest mean download time (first on ties).
    pub best_chunk_size: u64,
    /// Sample standard deviation over every trial of every size.
    pub pooled_std_seconds: f64,
}

/// Runs the sweep. The optional `per_trial` hook runs inside the timed
/// region on the downloaded bytes, so a caller can measure
/// download-plus-parse instead of download alone. Each trial's bytes
/// are compared against the original before the trial counts.
pub fn bench_download(
    data: &[u8],
    file_name: &str,
    chunk_sizes: &[u64],
    trials: usize,
    replication: usize,
    registry: &NodeRegistry,
    seed: u64,
    mut per_trial: Option<&mut dyn FnMut(&[u8]) -> Result<(), StoreError>>,
) -> Result<BenchReport, StoreError> {
    if data.is_empty() {
        return Err(StoreError::EmptyFile);
    }
    if trials == 0 {
        return Err(StoreError::BadTrialCount);
    }
    if chunk_sizes.is_empty() {
        return Err(StoreError::NoChunkSizes);
    }

    let mut results = Vec::with_capacity(chunk_sizes.len());
    for (i, &chunk_size) in chunk_sizes.iter().enumerate() {
        let manifest = store::put(
            data,
            file_name,
            chunk_size,
            replication,
            registry,
            seed.wrapping_add(i as u64),
        )?;
        let mut trial_seconds = Vec::with_capacity(trials);
        for _ in 0..trials {
            let started = Instant::now();
            let bytes = store::get(&manifest, registry)?;
            if let Some(hook) = per_trial.as_deref_mut() {
                hook(&bytes)?;
            }
            let elapsed = started.elapsed().as_secs_f64();
            if bytes != data {
                return Err(StoreError::Protocol(format!(
                    "reassembled bytes differ from the original at chunk size {chunk_size}"
                )));
            }
            trial_seconds.push(elapsed);
        }
        store::delete(&manifest, registry)?;
        let mean_seconds = mean(&trial_seconds);
        let std_seconds = sample_std(&trial_seconds);
        results.push(BenchResult {
            chunk_size,
            trial_seconds,
            mean_seconds,
            std_seconds,
        });
    }

    let best_chunk_size = results
        .iter()
        .min_by(|a, b| a.mean_seconds.total_cmp(&b.mean_seconds))
        .map(|r| r.chunk_size)
        .unwrap();
    let all_trials: Vec<f64> = results
        .iter()
        .flat_map(|r| r.trial_seconds.iter().copied())
        .collect();
    Ok(BenchReport {
        results,
        best_chunk_size,
        pooled_std_seconds: sample_std(&all_trials),
    })
}

/// Renders the report as CSV: one row per trial, then `mean` and `std`
/// rows per chunk size, a pooled `std` row, and a final `best` row.
/// Numbers use the shortest round-trip decimal form, so parsing the
/// file back recovers them exactly.
pub fn bench_csv(report: &BenchReport) -> String {
    let mut out = String::new();
    out.push_str(
        "# fresh handles per trial; repeated local reads may still be served from the OS page cache\n",
    );
    out.push_str("chunk_size_bytes,trial,seconds\n");
    for result in &report.results {
        for (t, secs) in result.trial_seconds.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", result.chunk_size, t, secs);
        }
        let _ = writeln!(out, "{},mean,{}", result.chunk_size, result.mean_seconds);
        let _ = writeln!(out, "{},std,{}", result.chunk_size, result.std_seconds);
    }
    let _ = writeln!(out, "pooled,std,{}", report.pooled_std_seconds);
    let _ = writeln!(out, "best,chunk_size_bytes,{}", report.best_chunk_size);
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}
