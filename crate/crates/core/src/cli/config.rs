//! TOML run configuration: one table per module, every key optional.
//!
//! ```toml
//! seed = 9
//! reuse_selection_folds = false
//!
//! [preprocess]
//! max_missing = 6
//! redundancy_threshold = 0.7
//! sort_genes = false
//!
//! [lasso]
//! max_iter = 10000
//! tol = 1e-7
//! lambda_bisection_steps = 60
//!
//! [selection]
//! folds = 5
//! repeats = 10
//! support_k = 30
//! top_per_iter = 20
//! final_count = 20
//!
//! [svr]
//! c = 1.0
//! epsilon = 0.1
//!
//! [evaluate]
//! folds = 5
//! repeats = 10
//! inner_folds = 3
//! grid_mode = "nested"   # or "global"
//!
//! [analysis]
//! r_gene = 0.4
//! r_label = 0.2
//! ```
//!
//! The seed is set at top level only; per-module `seed` keys are overwritten
//! by the effective seed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::EvaluateConfig;
use crate::lasso::LassoConfig;
use crate::preprocess::PreprocessConfig;
use crate::selection::SelectionConfig;
use crate::svr::SvrConfig;

pub const SEED_ENV: &str = "RADSENS_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub r_gene: f64,
    pub r_label: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            r_gene: 0.4,
            r_label: 0.2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigBundle {
    pub seed: Option<u64>,
    /// Evaluate on the same splits the selection stage used.
    pub reuse_selection_folds: bool,
    pub preprocess: PreprocessConfig,
    pub lasso: LassoConfig,
    pub selection: SelectionConfig,
    pub svr: SvrConfig,
    pub evaluate: EvaluateConfig,
    pub analysis: AnalysisConfig,
}

impl ConfigBundle {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.lasso.validate()?;
        self.selection.validate()?;
        self.svr.validate()?;
        self.evaluate.validate()?;
        if !(0.0..=1.0).contains(&self.analysis.r_gene) || !(0.0..=1.0).contains(&self.analysis.r_label) {
            return Err(Error::invalid("analysis thresholds must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Resolves the seed (flag, then file, then environment, then 0) and
    /// pushes it into the module configs.
    pub fn resolve_seed(&mut self, flag: Option<u64>, env: Option<&str>) -> Result<u64> {
        let env_seed = match env {
            Some(s) => Some(
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::invalid(format!("{SEED_ENV}='{s}' is not an unsigned integer")))?,
            ),
            None => None,
        };
        let seed = flag.or(self.seed).or(env_seed).unwrap_or(0);
        self.seed = Some(seed);
        self.selection.seed = seed;
        self.evaluate.seed = if self.reuse_selection_folds {
            seed
        } else {
            seed ^ 0x5EED_0F_E7A1
        };
        Ok(seed)
    }
}

pub fn parse_config(text: &str) -> Result<ConfigBundle> {
    let bundle: ConfigBundle = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {}", e.message())))?;
    bundle.validate()?;
    Ok(bundle)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ConfigBundle> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_defaults() {
        let b = parse_config("").unwrap();
        assert_eq!(b.selection.folds, 5);
        assert_eq!(b.selection.repeats, 10);
        assert_eq!(b.selection.support_k, 30);
        assert_eq!(b.selection.top_per_iter, 20);
        assert_eq!(b.evaluate.c_grid.len(), 21);
        assert_eq!(b.evaluate.c_grid[0], 2f64.powi(-10));
        assert_eq!(b.evaluate.c_grid[20], 1024.0);
    }

    #[test]
    fn bad_values_rejected() {
        assert!(parse_config("[selection]\nfolds = 1\n").is_err());
        let err = parse_config("[selection]\nfoldz = 3\n").unwrap_err().to_string();
        assert!(err.contains("foldz"), "{err}");
        assert!(parse_config("[svr]\nc = \"big\"\n").is_err());
        let err = parse_config("bogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn seed_precedence() {
        let mut b = parse_config("seed = 9\n").unwrap();
        assert_eq!(b.resolve_seed(Some(3), Some("5")).unwrap(), 3);
        let mut b = parse_config("seed = 9\n").unwrap();
        assert_eq!(b.resolve_seed(None, Some("5")).unwrap(), 9);
        let mut b = parse_config("").unwrap();
        assert_eq!(b.resolve_seed(None, Some("5")).unwrap(), 5);
        let mut b = parse_config("").unwrap();
        assert_eq!(b.resolve_seed(None, None).unwrap(), 0);
        assert_eq!(b.selection.seed, 0);
        assert!(parse_config("").unwrap().resolve_seed(None, Some("x")).is_err());
    }

    #[test]
    fn reuse_folds_shares_seed() {
        let mut b = parse_config("reuse_selection_folds = true\n").unwrap();
        b.resolve_seed(Some(4), None).unwrap();
        assert_eq!(b.evaluate.seed, b.selection.seed);
        let mut b = parse_config("").unwrap();
        b.resolve_seed(Some(4), None).unwrap();
        assert_ne!(b.evaluate.seed, b.selection.seed);
    }
}
