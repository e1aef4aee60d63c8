//! Shell-crossing searches against a labyrinth or a value band, and the
//! completeness summary of a finished run.

use crate::geometry::Shell;
use crate::holo::CandidateMap;
use crate::induction::{j_lambda, Schedule};
use crate::labyrinth::TangentLabyrinth;
use crate::verify::path::{search, BandField, ObstacleField, PathSearchConfig, PathSearchResult};
use serde::{Deserialize, Serialize};

/// Shortest crossing found in `shell` avoiding the labyrinth by `cfg.clearance`.
pub fn min_avoiding_path(
    shell: &Shell,
    lab: &TangentLabyrinth,
    cfg: &PathSearchConfig,
) -> PathSearchResult {
    let field = ObstacleField::new(lab.components(), cfg.clearance, shell);
    let dim = if lab.is_empty() { 4 } else { lab.dim() };
    search(shell, dim, &field, cfg, None)
}

/// Shortest crossing found in `shell` on which `lambda <= |F| <= 1/lambda`.
pub fn min_band_path(
    shell: &Shell,
    f: &CandidateMap,
    lambda: f64,
    cfg: &PathSearchConfig,
) -> PathSearchResult {
    let field = BandField {
        map: f,
        lambda,
        step: cfg.resolution,
    };
    search(shell, 2 * f.n(), &field, cfg, None)
}

/// Verdict of a band search against a length budget. A search that never
/// connects the shell passes vacuously.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandVerdict {
    pub shell: usize,
    pub lambda: f64,
    pub delta: f64,
    pub best_length: Option<f64>,
    pub vacuous: bool,
    pub passes: bool,
}

impl BandVerdict {
    pub fn from_search(shell: usize, lambda: f64, delta: f64, res: &PathSearchResult) -> Self {
        let best_length = res.best_length();
        Self {
            shell,
            lambda,
            delta,
            best_length,
            vacuous: best_length.is_none(),
            passes: best_length.is_none_or(|l| l > delta),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellCost {
    pub j: usize,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSection {
    pub lambda: f64,
    pub j_lambda: Option<usize>,
    pub costs: Vec<ShellCost>,
    pub partial_sum: f64,
    pub statement: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub accepted_steps: usize,
    pub bands: Vec<BandSection>,
}

/// For each band `lambda`, the certified crossing costs `delta_j` for
/// `j_lambda <= j <= J` and their sum: a path in the band from the inner
/// ball to the boundary crosses every such shell along pairwise disjoint
/// parameter intervals, so its length is at least the partial sum, and the
/// sum diverges as `J` grows.
pub fn completeness_summary(
    schedule: &Schedule,
    eps: &[f64],
    accepted: usize,
    bands: &[f64],
) -> CompletenessReport {
    let bands = bands
        .iter()
        .map(|&lambda| {
            let jl = j_lambda(schedule, eps, lambda, accepted).ok();
            let costs: Vec<ShellCost> = match jl {
                Some(j0) => (j0..=accepted).map(|j| ShellCost { j, delta: schedule.delta[j - 1] }).collect(),
                None => Vec::new(),
            };
            let partial_sum = costs.iter().map(|c| c.delta).sum();
            let statement = match jl {
                Some(j0) => format!(
                    "every path with {lambda} <= |F| <= {} starting in the ball of radius {} and leaving the ball of radius {} \
                     crosses shells {j0}..={accepted} on pairwise disjoint parameter intervals [a_j, b_j], hence has length \
                     at least {partial_sum}; with one shell per step the sum grows without bound",
                    1.0 / lambda,
                    schedule.inner[j0 - 1],
                    schedule.outer[accepted - 1],
                ),
                None => format!("no accepted step reaches the band {lambda} <= |F| <= {}", 1.0 / lambda),
            };
            BandSection { lambda, j_lambda: jl, costs, partial_sum, statement }
        })
        .collect();
    CompletenessReport {
        accepted_steps: accepted,
        bands,
    }
}
