//! Independent certification of a run: constrained shortest-path searches,
//! fiber tracing, zero scans and completeness summaries.

pub mod path;
pub mod summary;
pub mod trace;
pub mod zeros;

pub use path::{
    is_feasible, search, BandField, ObstacleField, PathConstraint, PathSearchConfig,
    PathSearchResult, Polyline, RestartRecord,
};
pub use summary::{
    completeness_summary, min_avoiding_path, min_band_path, BandVerdict, CompletenessReport,
};
pub use trace::{trace_fiber, TraceConfig, TraceError, TraceLedger};
pub use zeros::{zero_avoidance, Neighborhood, ZeroScan, ZeroScanConfig};
