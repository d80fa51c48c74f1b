use serde::{Deserialize, Serialize};

use crate::eval::{evaluate, EvaluationReport};
use crate::model::{Placement, ProblemInstance, RoutingPolicy};
use crate::routing::optimal_routing;

/// A placement with its optimal routing and the resulting delay report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub placement: Placement,
    pub routing: RoutingPolicy,
    pub report: EvaluationReport,
}

impl Solution {
    /// Routes optimally for `placement` and evaluates the result.
    pub fn for_placement(instance: &ProblemInstance, placement: Placement) -> Self {
        let routing = optimal_routing(instance, &placement);
        let report = evaluate(instance, &placement, &routing);
        Solution {
            placement,
            routing,
            report,
        }
    }

    pub fn average_delay(&self) -> f64 {
        self.report.average_delay.value()
    }
}
