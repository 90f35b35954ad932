//! Changepoint detection for high-dimensional time series through distance
//! and angle mappings.
//!
//! A `n × p` series is reduced to two univariate series, the distance and the
//! angle of every time vector relative to a fixed reference, and an exact
//! penalized search is run on both. Changepoints found in both mapped series
//! within a small window are merged.
//!
//! ```
//! use geomcp::{geomcp_detect, DetectionConfig, SeriesMatrix};
//!
//! let rows: Vec<Vec<f64>> = (0..120)
//!     .map(|i| (0..20).map(|j| if i < 60 { ((i * 7 + j * 3) % 5) as f64 } else { 9.0 + ((i + j) % 3) as f64 }).collect())
//!     .collect();
//! let m = SeriesMatrix::from_rows(&rows).unwrap();
//! let result = geomcp_detect(&m, &DetectionConfig::default()).unwrap();
//! assert!(result.reconciled.iter().any(|&c| (c as i64 - 60).abs() <= 2));
//! ```

pub mod asymptotics;
pub mod config;
pub mod cost;
pub mod crops;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod pelt;
pub mod pipeline;
pub mod simulation;

pub use asymptotics::{theorem1_moments, NormalityStats, Theorem1Moments};
pub use config::{DetectionSettings, RunFile};
pub use cost::{CostContext, CostModel};
pub use error::{Error, Result};
pub use evaluation::{fpr, match_changepoints, tdr_fdr, EvalReport};
pub use geometry::{angle_map, distance_map, translate, MapKind, MappedSeries, SeriesMatrix, TranslatedMatrix};
pub use crops::{crops, elbow_table, CropsEntry, CropsResult, ElbowRow};
pub use io::{load_csv, read_csv, scale_mad, write_csv};
pub use pipeline::{geomcp_detect, reconcile, DetectionConfig, DetectionResult, Source};
pub use simulation::{generate, replication_rng, ChangeKind, ChangePlan, CovarianceKind, ScenarioSpec};
pub use pelt::{brute_force_segment, mbic_penalty, pelt, Penalty, PenaltyValue, Segmentation};
