//! Uniform entry point over all placement algorithms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{brute_force_placement_with, DEFAULT_ENUMERATION_CAP};
use crate::exec::Execution;
use crate::greedy::{greedy_fast, greedy_wg_with, GreedyTrace};
use crate::model::{Delay, ProblemInstance};
use crate::plru::{build_plru, plru_delay};
use crate::sim::SimPolicy;
use crate::solution::Solution;
use crate::special::{solve_one_file_per_user, solve_two_cache_lp};
use crate::EvaluationReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Bruteforce,
    Greedywg,
    Greedy,
    Matching,
    TwocacheLp,
    Plru,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Bruteforce,
        Algorithm::Greedywg,
        Algorithm::Greedy,
        Algorithm::Matching,
        Algorithm::TwocacheLp,
        Algorithm::Plru,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bruteforce => "bruteforce",
            Algorithm::Greedywg => "greedywg",
            Algorithm::Greedy => "greedy",
            Algorithm::Matching => "matching",
            Algorithm::TwocacheLp => "twocache-lp",
            Algorithm::Plru => "plru",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                Error::InvalidParameter(format!("unknown algorithm `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    pub enumeration_cap: u128,
    pub exec: Execution,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            exec: Execution::default(),
        }
    }
}

/// Solver result; its `policy` is what the simulator replays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub algorithm: Algorithm,
    pub average_delay: Delay,
    pub stable: bool,
    pub policy: SimPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvaluationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<GreedyTrace>,
}

impl SolveOutput {
    fn from_solution(algorithm: Algorithm, solution: Solution, trace: Option<GreedyTrace>) -> Self {
        SolveOutput {
            algorithm,
            average_delay: solution.report.average_delay,
            stable: solution.report.stable,
            policy: SimPolicy::Static {
                placement: solution.placement,
                routing: solution.routing,
            },
            report: Some(solution.report),
            trace,
        }
    }
}

pub fn solve(instance: &ProblemInstance, algorithm: Algorithm, options: SolveOptions) -> Result<SolveOutput> {
    instance.ensure_valid()?;
    Ok(match algorithm {
        Algorithm::Bruteforce => SolveOutput::from_solution(
            algorithm,
            brute_force_placement_with(instance, options.enumeration_cap, options.exec)?,
            None,
        ),
        Algorithm::Greedywg => {
            let (s, t) = greedy_wg_with(instance, options.exec);
            SolveOutput::from_solution(algorithm, s, Some(t))
        }
        Algorithm::Greedy => {
            let (s, t) = greedy_fast(instance);
            SolveOutput::from_solution(algorithm, s, Some(t))
        }
        Algorithm::Matching => SolveOutput::from_solution(algorithm, solve_one_file_per_user(instance)?, None),
        Algorithm::TwocacheLp => SolveOutput::from_solution(algorithm, solve_two_cache_lp(instance)?, None),
        Algorithm::Plru => {
            let model = build_plru(instance)?;
            let d = plru_delay(instance, &model, model.p_star);
            SolveOutput {
                algorithm,
                average_delay: Delay(d),
                stable: d.is_finite(),
                policy: SimPolicy::PLru {
                    probability: model.p_star,
                },
                report: None,
                trace: None,
            }
        }
    })
}
