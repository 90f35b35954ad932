//! Run configuration files.
//!
//! ```toml
//! reps = 100
//! seed = 7
//!
//! [detection]
//! cost = "empirical"
//! penalty = "manual:20"
//! xi = 10
//!
//! [scenario]
//! n = 500
//! p = 200
//! kappa = 0.5
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::cost::{CostModel, DEFAULT_VARIANCE_FLOOR};
use crate::error::{Error, Result};
use crate::pipeline::DetectionConfig;
use crate::simulation::ScenarioSpec;

/// Detection settings as written in a file; unset fields keep their defaults.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSettings {
    /// `normal` or `empirical`.
    pub cost: Option<String>,
    pub quantiles: Option<usize>,
    pub variance_floor: Option<f64>,
    /// `mbic` or `manual:<beta>`.
    pub penalty: Option<String>,
    pub xi: Option<usize>,
    pub minseglen: Option<usize>,
    pub scale_mad: Option<bool>,
}

impl DetectionSettings {
    /// Overlays the set fields onto `base`.
    pub fn apply(&self, mut base: DetectionConfig) -> Result<DetectionConfig> {
        if self.cost.is_some() || self.quantiles.is_some() || self.variance_floor.is_some() {
            let name = match (&self.cost, base.model) {
                (Some(c), _) => c.as_str(),
                (None, CostModel::NormalMeanVar { .. }) => "normal",
                (None, CostModel::Empirical { .. }) => "empirical",
            };
            base.model = cost_model(name, self.quantiles, self.variance_floor)?;
        }
        if let Some(p) = &self.penalty {
            base.penalty = p.parse()?;
        }
        if let Some(xi) = self.xi {
            base.xi = xi;
        }
        if let Some(m) = self.minseglen {
            base.minseglen = m;
        }
        if let Some(s) = self.scale_mad {
            base.scale_first = s;
        }
        Ok(base)
    }
}

/// Builds a cost model from its name and optional parameters.
pub fn cost_model(name: &str, quantiles: Option<usize>, variance_floor: Option<f64>) -> Result<CostModel> {
    let model = match name.trim().to_ascii_lowercase().as_str() {
        "normal" | "normal_mean_var" => {
            if quantiles.is_some() {
                return Err(Error::config("quantiles only apply to the empirical cost"));
            }
            CostModel::NormalMeanVar {
                variance_floor: variance_floor.unwrap_or(DEFAULT_VARIANCE_FLOOR),
            }
        }
        "empirical" => {
            if variance_floor.is_some() {
                return Err(Error::config("variance_floor only applies to the normal cost"));
            }
            CostModel::Empirical { quantiles }
        }
        other => return Err(Error::config(format!("unknown cost '{other}' (expected normal or empirical)"))),
    };
    model.validate()?;
    Ok(model)
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub detection: DetectionSettings,
    pub scenario: Option<ScenarioSpec>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub tolerance: Option<usize>,
}

impl RunFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pelt::Penalty;

    #[test]
    fn parses_documented_example() {
        let f = RunFile::parse(
            "reps = 100\nseed = 7\n[detection]\ncost = \"empirical\"\npenalty = \"manual:20\"\nxi = 10\n[scenario]\nn = 500\np = 200\nkappa = 0.5\n",
        )
        .unwrap();
        assert_eq!((f.reps, f.seed), (Some(100), Some(7)));
        let cfg = f.detection.apply(DetectionConfig::default()).unwrap();
        assert_eq!(cfg.model, CostModel::empirical());
        assert_eq!(cfg.penalty, Penalty::Manual(20.0));
        assert_eq!(cfg.xi, 10);
        let s = f.scenario.unwrap();
        assert_eq!((s.n, s.p, s.kappa, s.min_gap), (500, 200, 0.5, 30));
    }

    #[test]
    fn empty_file_keeps_defaults() {
        let f = RunFile::parse("").unwrap();
        assert_eq!(f.detection.apply(DetectionConfig::default()).unwrap(), DetectionConfig::default());
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(matches!(RunFile::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunFile::parse("[detection]\nxi = -1"), Err(Error::Config(_))));
        let bad = |s: &str| RunFile::parse(s).unwrap().detection.apply(DetectionConfig::default());
        assert!(matches!(bad("[detection]\ncost = \"laplace\""), Err(Error::Config(_))));
        assert!(matches!(bad("[detection]\npenalty = \"bic\""), Err(Error::Config(_))));
        assert!(matches!(bad("[detection]\ncost = \"normal\"\nquantiles = 5"), Err(Error::Config(_))));
        assert!(matches!(bad("[detection]\ncost = \"empirical\"\nquantiles = 0"), Err(Error::Config(_))));
        assert!(matches!(RunFile::load("/nonexistent.toml"), Err(Error::Input(_))));
    }

    #[test]
    fn quantiles_alone_keep_current_cost() {
        let s = DetectionSettings {
            quantiles: Some(12),
            ..Default::default()
        };
        let base = DetectionConfig {
            model: CostModel::empirical(),
            ..Default::default()
        };
        assert_eq!(s.apply(base).unwrap().model, CostModel::Empirical { quantiles: Some(12) });
        assert!(s.apply(DetectionConfig::default()).is_err());
    }
}
