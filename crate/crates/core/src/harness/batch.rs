//! Monte-Carlo batches over generated scenarios.

use super::{make_planner, run_episode, EpisodeResult, ExperimentConfig, Method, TransportKind};
use crate::error::Error;
use crate::scenario::Layout;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;

/// One cell of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub config: ExperimentConfig,
    pub method: Method,
    pub flocking: bool,
    pub episodes: usize,
    /// Episode `k` uses seed `base_seed + k`.
    pub base_seed: u64,
    /// Worker threads; `None` uses rayon's default.
    #[serde(skip)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSummary {
    pub layout: String,
    pub episodes: usize,
    /// Percentages in `[0, 100]`.
    pub success_rate: f64,
    pub collision_rate: f64,
    pub discomfort_rate: f64,
    /// Over successful episodes only.
    pub mean_travel_time: Option<f64>,
    pub mean_ibr_iters: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub method: Method,
    pub flocking: bool,
    pub num_humans: usize,
    pub episodes: usize,
    pub layouts: Vec<LayoutSummary>,
    pub overall: LayoutSummary,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub method: String,
    pub layout: String,
    pub seed: u64,
    pub success: bool,
    pub travel_time: Option<f64>,
    pub collision: bool,
    pub discomfort: bool,
    pub mean_ibr_iters: f64,
}

impl From<&EpisodeResult> for CsvRow {
    fn from(r: &EpisodeResult) -> Self {
        Self {
            method: r.method.clone(),
            layout: r.layout.as_str().to_string(),
            seed: r.seed,
            success: r.success,
            travel_time: r.travel_time,
            collision: r.collision,
            discomfort: r.discomfort,
            mean_ibr_iters: r.mean_ibr_iters(),
        }
    }
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

/// Aggregates in a canonical order, so the result does not depend on the
/// order of `results`.
fn summarize(label: &str, results: &[&EpisodeResult]) -> LayoutSummary {
    let mut sorted: Vec<&EpisodeResult> = results.to_vec();
    sorted.sort_by(|a, b| (a.layout, a.seed, &a.method).cmp(&(b.layout, b.seed, &b.method)));
    let n = sorted.len();
    let times: Vec<f64> = sorted.iter().filter_map(|r| r.travel_time).collect();
    LayoutSummary {
        layout: label.to_string(),
        episodes: n,
        success_rate: pct(sorted.iter().filter(|r| r.success).count(), n),
        collision_rate: pct(sorted.iter().filter(|r| r.collision).count(), n),
        discomfort_rate: pct(sorted.iter().filter(|r| r.discomfort).count(), n),
        mean_travel_time: if times.is_empty() {
            None
        } else {
            Some(times.iter().sum::<f64>() / times.len() as f64)
        },
        mean_ibr_iters: if n == 0 {
            0.0
        } else {
            sorted.iter().map(|r| r.mean_ibr_iters()).sum::<f64>() / n as f64
        },
    }
}

pub fn summarize_results(
    spec: &BatchSpec,
    results: &[EpisodeResult],
) -> Result<BatchSummary, Error> {
    let mut layouts: Vec<Layout> = results.iter().map(|r| r.layout).collect();
    layouts.sort();
    layouts.dedup();
    let all: Vec<&EpisodeResult> = results.iter().collect();
    let fingerprint = {
        let bytes = serde_json::to_vec(spec)?;
        let digest = Sha256::digest(&bytes);
        digest
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect::<String>()
    };
    Ok(BatchSummary {
        method: spec.method,
        flocking: spec.flocking,
        num_humans: spec.config.num_humans,
        episodes: results.len(),
        layouts: layouts
            .iter()
            .map(|l| {
                let subset: Vec<&EpisodeResult> =
                    results.iter().filter(|r| r.layout == *l).collect();
                summarize(l.as_str(), &subset)
            })
            .collect(),
        overall: summarize("all", &all),
        config_fingerprint: fingerprint,
    })
}

/// Runs `spec.episodes` episodes, alternating layouts unless the config
/// fixes one. Results are in episode order regardless of thread count.
pub fn run_batch(spec: &BatchSpec) -> Result<(Vec<EpisodeResult>, BatchSummary), Error> {
    let mut config = spec.config.clone();
    if !spec.flocking {
        config.params = config.params.without_flocking();
    }
    let run_one = |k: usize| -> Result<EpisodeResult, Error> {
        let seed = spec.base_seed + k as u64;
        let sc = config.scenario(seed, config.layout_for(k))?;
        let predictor = config.predictor.build(&sc.params)?;
        let mut planner = make_planner(spec.method, TransportKind::InProcess, sc.num_robots())?;
        let (res, _) = run_episode(&sc, planner.as_mut(), predictor.as_ref())?;
        Ok(res)
    };
    let results: Vec<EpisodeResult> = match spec.threads {
        Some(1) => (0..spec.episodes).map(run_one).collect::<Result<_, _>>()?,
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
            pool.install(|| {
                (0..spec.episodes)
                    .into_par_iter()
                    .map(run_one)
                    .collect::<Result<_, _>>()
            })?
        }
        None => (0..spec.episodes)
            .into_par_iter()
            .map(run_one)
            .collect::<Result<_, _>>()?,
    };
    let summary = summarize_results(spec, &results)?;
    Ok((results, summary))
}

/// Results CSV with header
/// `method,layout,seed,success,travel_time,collision,discomfort,mean_ibr_iters`.
pub fn write_csv<W: Write>(results: &[EpisodeResult], w: W) -> Result<(), Error> {
    let mut out = csv::Writer::from_writer(w);
    for r in results {
        out.serialize(CsvRow::from(r))
            .map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    }
    if results.is_empty() {
        out.write_record([
            "method",
            "layout",
            "seed",
            "success",
            "travel_time",
            "collision",
            "discomfort",
            "mean_ibr_iters",
        ])
        .map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(summaries: &[BatchSummary], mut w: W) -> Result<(), Error> {
    serde_json::to_writer_pretty(&mut w, summaries)?;
    w.write_all(b"\n")?;
    Ok(())
}
