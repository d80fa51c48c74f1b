//! Parameter sweeps with replications, producing plot-ready rows.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{ProblemInstance, UncachedModel};
use crate::sim::{simulate, student_t_quantile, Horizon, SimConfig, Workload};
use crate::solve::{solve, Algorithm, SolveOptions};
use crate::workload::{fit_instance, gen_instance, split_budget, split_segments, FitParams, GenParams, LayoutParams, TraceSegment};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Total cache slots, split evenly across caches.
    CacheBudget,
    /// Absolute back-end service rate `μ`.
    ServiceRate,
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cache_budget" => Ok(SweepVariable::CacheBudget),
            "service_rate" => Ok(SweepVariable::ServiceRate),
            _ => Err(Error::InvalidParameter(format!(
                "unknown sweep variable `{s}` (expected cache_budget or service_rate)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    /// A fresh instance per replication, seeded `seed + replication`.
    Generated(GenParams),
    Fixed(ProblemInstance),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    Analytical,
    /// Poisson replay of each solution for this many requests.
    Simulated { requests: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub source: InstanceSource,
    pub algorithms: Vec<Algorithm>,
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub evaluation: Evaluation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    pub mean_delay: f64,
    /// 95% half-width across replications (0 for a single one).
    pub half_width: f64,
}

fn summarize(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 || !mean.is_finite() {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, student_t_quantile(n - 1) * (var / n as f64).sqrt())
}

fn apply_sweep(instance: &mut ProblemInstance, sweep: SweepVariable, value: f64) -> Result<()> {
    match sweep {
        SweepVariable::CacheBudget => {
            if value < instance.num_caches as f64 || value.fract() != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "cache budget {value} must be an integer of at least {}",
                    instance.num_caches
                )));
            }
            instance.cache_capacity = split_budget(value as usize, instance.num_caches);
        }
        SweepVariable::ServiceRate => {
            if !(value > 0.0) {
                return Err(Error::InvalidParameter(format!("service rate {value} must be positive")));
            }
            instance.uncached_model = UncachedModel::CongestionSensitive { service_rate: value };
        }
    }
    Ok(())
}

fn point_instance(spec: &ExperimentSpec, value: f64, replication: usize) -> Result<ProblemInstance> {
    let mut instance = match &spec.source {
        InstanceSource::Generated(params) => {
            let mut params = params.clone();
            if spec.sweep == SweepVariable::CacheBudget {
                params.cache_budget = value as usize;
            }
            gen_instance(&params, spec.seed.wrapping_add(replication as u64))?
        }
        InstanceSource::Fixed(instance) => instance.clone(),
    };
    apply_sweep(&mut instance, spec.sweep, value)?;
    Ok(instance)
}

fn measured_delay(
    instance: &ProblemInstance,
    algorithm: Algorithm,
    evaluation: Evaluation,
    seed: u64,
    options: SolveOptions,
) -> Result<f64> {
    let out = solve(instance, algorithm, options)?;
    match evaluation {
        Evaluation::Analytical => Ok(out.average_delay.value()),
        Evaluation::Simulated { requests } => {
            let config = SimConfig::new(out.policy, Horizon::Requests(requests), seed);
            Ok(simulate(instance, Workload::Poisson, &config)?.mean_delay)
        }
    }
}

pub fn run_experiment(spec: &ExperimentSpec, exec: Execution) -> Result<Vec<ExperimentRow>> {
    if spec.values.is_empty() || spec.algorithms.is_empty() || spec.replications == 0 {
        return Err(Error::InvalidParameter(
            "an experiment needs sweep values, algorithms and at least one replication".into(),
        ));
    }
    let reps = spec.replications;
    // Points fan out; solvers inside each point run sequentially.
    let options = SolveOptions {
        exec: Execution::Sequential,
        ..SolveOptions::default()
    };
    let cells = exec.map_range(spec.values.len() * reps, |cell| -> Result<Vec<f64>> {
        let (v, r) = (cell / reps, cell % reps);
        let instance = point_instance(spec, spec.values[v], r)?;
        spec.algorithms
            .iter()
            .map(|&a| measured_delay(&instance, a, spec.evaluation, spec.seed.wrapping_add(cell as u64), options))
            .collect()
    });
    let cells: Vec<Vec<f64>> = cells.into_iter().collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (v, &value) in spec.values.iter().enumerate() {
        for (a, &algorithm) in spec.algorithms.iter().enumerate() {
            let samples: Vec<f64> = (0..reps).map(|r| cells[v * reps + r][a]).collect();
            let (mean_delay, half_width) = summarize(&samples);
            rows.push(ExperimentRow {
                sweep_value: value,
                algorithm,
                mean_delay,
                half_width,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceExperimentSpec {
    pub layout: LayoutParams,
    pub algorithms: Vec<Algorithm>,
    pub budgets: Vec<usize>,
    pub service_ratio: Option<f64>,
    pub segment_size: usize,
    /// Consecutive (learn, test) segment pairs to average over.
    pub pairs: usize,
    pub seed: u64,
    pub warmup_fraction: f64,
}

/// Learns each policy on one segment and replays the next segment through
/// the simulator.
pub fn run_trace_experiment(trace: &TraceSegment, spec: &TraceExperimentSpec, exec: Execution) -> Result<Vec<ExperimentRow>> {
    let segments = split_segments(trace, spec.segment_size);
    let pairs = spec.pairs.min(segments.len().saturating_sub(1));
    if pairs == 0 || spec.budgets.is_empty() || spec.algorithms.is_empty() {
        return Err(Error::InvalidParameter(
            "a trace experiment needs two segments, budgets and algorithms".into(),
        ));
    }
    let options = SolveOptions {
        exec: Execution::Sequential,
        ..SolveOptions::default()
    };
    let cells = exec.map_range(spec.budgets.len() * pairs, |cell| -> Result<Vec<f64>> {
        let (b, p) = (cell / pairs, cell % pairs);
        let fit = FitParams {
            layout: spec.layout.clone(),
            cache_budget: spec.budgets[b],
            service_ratio: spec.service_ratio,
        };
        let instance = fit_instance(&segments[p], &fit)?;
        let test = &segments[p + 1];
        spec.algorithms
            .iter()
            .map(|&a| {
                let out = solve(&instance, a, options)?;
                let mut config = SimConfig::new(out.policy, Horizon::Requests(test.len()), spec.seed.wrapping_add(cell as u64));
                config.warmup_fraction = spec.warmup_fraction;
                Ok(simulate(&instance, Workload::Trace(test), &config)?.mean_delay)
            })
            .collect()
    });
    let cells: Vec<Vec<f64>> = cells.into_iter().collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (b, &budget) in spec.budgets.iter().enumerate() {
        for (a, &algorithm) in spec.algorithms.iter().enumerate() {
            let samples: Vec<f64> = (0..pairs).map(|p| cells[b * pairs + p][a]).collect();
            let (mean_delay, half_width) = summarize(&samples);
            rows.push(ExperimentRow {
                sweep_value: budget as f64,
                algorithm,
                mean_delay,
                half_width,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv(writer: impl Write, rows: &[ExperimentRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["sweep_value", "algorithm", "mean_delay", "half_width"])?;
    for r in rows {
        csv.write_record([
            r.sweep_value.to_string(),
            r.algorithm.to_string(),
            r.mean_delay.to_string(),
            r.half_width.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
