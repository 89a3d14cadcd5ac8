//! Subgroup-discovery methods.
//!
//! Every method maps a training set and one hyperparameter setting to a
//! [`Region`]; the Cox model reported for that region is always refit on all
//! training points inside it. Each method exposes a grid of exactly 100
//! settings (Base has a single setting).
//!
//! [`run_method`] runs one setting. [`MethodRunner`] runs many settings over
//! the same data and reuses work that does not depend on every
//! hyperparameter (core groups, rejection scores, grown trees, region fits);
//! its results are identical to independent [`run_method`] calls with the same
//! [`SearchOptions`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cox::{fit_cox, CoxModel, FitError};
use crate::data::{Region, SurvivalDataset};
use crate::metrics::{empirical_epe, MetricError};

pub mod ddgroup;
pub mod prim;
pub mod simple;
pub mod tree;

pub use ddgroup::{
    conformity_scores, core_group, core_group_with, ddgroup, grow_box, labels_from_scores,
    rejection_labels, CoreGroup, CoreQuality, DDGroupVariant, RejectionScore,
};
pub use prim::prim;
pub use simple::{base_method, random_method};
pub use tree::{cox_tree, survival_tree, Leaf, TreeParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MethodError {
    #[error("need at least {required} points, have {available}")]
    TooFewPoints { required: usize, available: usize },
    #[error("no tree leaf admits a Cox fit")]
    NoValidLeaf,
    #[error("no valid region: {0}")]
    NoValidRegion(String),
    #[error("no neighbourhood admits a Cox fit")]
    NoValidCoreGroup,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Base,
    Random,
    SurvivalTree,
    CoxTree,
    Prim,
    DDGroup,
    DDGroupCI,
    DDGroupPL,
    DDGroupNE,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Base,
        Method::Random,
        Method::SurvivalTree,
        Method::CoxTree,
        Method::Prim,
        Method::DDGroup,
        Method::DDGroupCI,
        Method::DDGroupPL,
        Method::DDGroupNE,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Random => "random",
            Method::SurvivalTree => "st",
            Method::CoxTree => "ct",
            Method::Prim => "prim",
            Method::DDGroup => "ddgroup",
            Method::DDGroupCI => "dg-ci",
            Method::DDGroupPL => "dg-pl",
            Method::DDGroupNE => "dg-ne",
        }
    }

    /// The full hyperparameter grid, in a fixed order.
    pub fn grid(self) -> Vec<MethodConfig> {
        let percent = |k: usize| k as f64 / 100.0;
        let params: Vec<MethodParams> = match self {
            Method::Base => vec![MethodParams::None],
            Method::Random => (0..100).map(|seed| MethodParams::Random { seed }).collect(),
            Method::SurvivalTree | Method::CoxTree => (1..=25)
                .flat_map(|max_depth| {
                    [5, 10, 20, 40].map(|min_leaf| MethodParams::Tree {
                        max_depth,
                        min_leaf,
                    })
                })
                .collect(),
            Method::Prim => (1..=25)
                .flat_map(|a| {
                    [0.005, 0.01, 0.02, 0.04].map(|beta0| MethodParams::Prim {
                        alpha: percent(a),
                        beta0,
                    })
                })
                .collect(),
            Method::DDGroup | Method::DDGroupCI | Method::DDGroupPL => [0.05, 0.1]
                .into_iter()
                .flat_map(|core_frac| {
                    (1..=50).map(move |q| MethodParams::DDGroup {
                        core_frac,
                        rej_quantile: percent(q),
                    })
                })
                .collect(),
            Method::DDGroupNE => (1..=100)
                .map(|k| MethodParams::CoreOnly {
                    core_frac: percent(k),
                })
                .collect(),
        };
        params
            .into_iter()
            .map(|params| MethodConfig {
                method: self,
                params,
            })
            .collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .or(match key.as_str() {
                "survival-tree" => Some(Method::SurvivalTree),
                "cox-tree" => Some(Method::CoxTree),
                "dg" => Some(Method::DDGroup),
                _ => None,
            })
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodParams {
    None,
    Random { seed: u64 },
    Tree { max_depth: usize, min_leaf: usize },
    Prim { alpha: f64, beta0: f64 },
    DDGroup { core_frac: f64, rej_quantile: f64 },
    CoreOnly { core_frac: f64 },
}

impl fmt::Display for MethodParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodParams::None => f.write_str("-"),
            MethodParams::Random { seed } => write!(f, "seed={seed}"),
            MethodParams::Tree {
                max_depth,
                min_leaf,
            } => write!(f, "max_depth={max_depth};min_leaf={min_leaf}"),
            MethodParams::Prim { alpha, beta0 } => write!(f, "alpha={alpha};beta0={beta0}"),
            MethodParams::DDGroup {
                core_frac,
                rej_quantile,
            } => write!(f, "core_frac={core_frac};rej_quantile={rej_quantile}"),
            MethodParams::CoreOnly { core_frac } => write!(f, "core_frac={core_frac}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub params: MethodParams,
}

impl MethodConfig {
    /// Parses `key=value` pairs (separated by `;` or `,`) for `method`.
    /// Missing keys fall back to the first grid setting's values.
    pub fn parse(method: Method, spec: &str) -> Result<Self, String> {
        let mut values = HashMap::new();
        for part in spec
            .split([';', ','])
            .map(str::trim)
            .filter(|p| !p.is_empty())
        {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got '{part}'"))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| format!("bad number in '{part}'"))?;
            values.insert(k.trim().to_string(), v);
        }
        let default = method.grid()[0].params;
        let get = |key: &str, fallback: f64| values.get(key).copied().unwrap_or(fallback);
        let params = match default {
            MethodParams::None => MethodParams::None,
            MethodParams::Random { seed } => MethodParams::Random {
                seed: get("seed", seed as f64) as u64,
            },
            MethodParams::Tree {
                max_depth,
                min_leaf,
            } => MethodParams::Tree {
                max_depth: get("max_depth", max_depth as f64) as usize,
                min_leaf: get("min_leaf", min_leaf as f64) as usize,
            },
            MethodParams::Prim { alpha, beta0 } => MethodParams::Prim {
                alpha: get("alpha", alpha),
                beta0: get("beta0", beta0),
            },
            MethodParams::DDGroup {
                core_frac,
                rej_quantile,
            } => MethodParams::DDGroup {
                core_frac: get("core_frac", core_frac),
                rej_quantile: get("rej_quantile", rej_quantile),
            },
            MethodParams::CoreOnly { core_frac } => MethodParams::CoreOnly {
                core_frac: get("core_frac", core_frac),
            },
        };
        Ok(Self { method, params })
    }
}

impl fmt::Display for MethodConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.method, self.params)
    }
}

/// Knobs that trade exhaustiveness for runtime. The default is exhaustive.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Upper bound on pairwise terms evaluated per core-group search; when the
    /// exhaustive search would exceed it, an evenly strided subset of rows is
    /// used as neighbourhood centres.
    pub core_pair_budget: Option<u64>,
    /// At most this many candidate thresholds per feature in Cox-tree splits,
    /// taken at evenly spaced positions among the valid midpoints.
    pub cox_tree_max_thresholds: Option<usize>,
}

impl SearchOptions {
    /// Budgets that keep a full 100-setting sweep at desk scale.
    pub fn desk_scale() -> Self {
        Self {
            core_pair_budget: Some(100_000_000),
            cox_tree_max_thresholds: Some(32),
        }
    }
}

/// Outcome of one (method, hyperparameter) run on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupResult {
    pub config: MethodConfig,
    pub region: Option<Region>,
    /// Cox model refit on every training point inside `region`.
    pub model: Option<CoxModel>,
    pub train_epe: Option<f64>,
    pub n_in_region: usize,
    pub failed: Option<String>,
}

impl SubgroupResult {
    pub fn is_ok(&self) -> bool {
        self.failed.is_none()
    }

    fn failure(config: MethodConfig, err: impl fmt::Display) -> Self {
        Self {
            config,
            region: None,
            model: None,
            train_epe: None,
            n_in_region: 0,
            failed: Some(err.to_string()),
        }
    }
}

/// Runs a single configuration with exhaustive search options.
pub fn run_method(data: &SurvivalDataset, config: MethodConfig) -> SubgroupResult {
    MethodRunner::new(data, SearchOptions::default()).run(config)
}

type FitOutcome = Result<(CoxModel, f64), MethodError>;

/// Fits a Cox model on `rows` and scores it with the training EPE.
pub(crate) fn fit_and_score(data: &SurvivalDataset, rows: &[usize]) -> FitOutcome {
    let subset = data.subset(rows);
    let model = fit_cox(&subset, 0.0)?;
    let epe = empirical_epe(&model.beta, &subset)?;
    Ok((model, epe))
}

/// Caches region fits by membership so repeated regions are fitted once.
/// Keys are two independent 64-bit hashes of the sorted row set.
#[derive(Default)]
pub(crate) struct FitCache {
    entries: HashMap<(u64, u64, usize), FitOutcome>,
}

impl FitCache {
    pub(crate) fn get(&mut self, data: &SurvivalDataset, rows: &[usize]) -> FitOutcome {
        let mut sorted;
        let rows = if rows.is_sorted() {
            rows
        } else {
            sorted = rows.to_vec();
            sorted.sort_unstable();
            &sorted[..]
        };
        let key = membership_key(rows);
        self.entries
            .entry(key)
            .or_insert_with(|| fit_and_score(data, rows))
            .clone()
    }
}

fn membership_key(rows: &[usize]) -> (u64, u64, usize) {
    use std::hash::{Hash, Hasher};
    let mut a = std::collections::hash_map::DefaultHasher::new();
    rows.hash(&mut a);
    let mut b = std::collections::hash_map::DefaultHasher::new();
    0x9e37_79b9_7f4a_7c15_u64.hash(&mut b);
    rows.hash(&mut b);
    (a.finish(), b.finish(), rows.len())
}

const TREE_GROWTH_DEPTH: usize = 25;

/// Runs many configurations on one training set, sharing intermediate work.
pub struct MethodRunner<'a> {
    data: &'a SurvivalDataset,
    options: SearchOptions,
    fits: FitCache,
    cores: HashMap<(u64, CoreQuality), Result<CoreGroup, MethodError>>,
    scores: HashMap<(u64, RejectionScore), Result<Vec<f64>, MethodError>>,
    trees: HashMap<(tree::SplitCriterion, usize), tree::GrownTree>,
}

impl<'a> MethodRunner<'a> {
    pub fn new(data: &'a SurvivalDataset, options: SearchOptions) -> Self {
        Self {
            data,
            options,
            fits: FitCache::default(),
            cores: HashMap::new(),
            scores: HashMap::new(),
            trees: HashMap::new(),
        }
    }

    pub fn data(&self) -> &SurvivalDataset {
        self.data
    }

    /// Runs every setting of `method`'s grid.
    pub fn run_grid(&mut self, method: Method) -> Vec<SubgroupResult> {
        method.grid().into_iter().map(|c| self.run(c)).collect()
    }

    pub fn run(&mut self, config: MethodConfig) -> SubgroupResult {
        match self.region_for(config) {
            Ok(region) => self.finish(config, region),
            Err(err) => SubgroupResult::failure(config, err),
        }
    }

    fn finish(&mut self, config: MethodConfig, region: Region) -> SubgroupResult {
        let rows = self.data.members(&region);
        match self.fits.get(self.data, &rows) {
            Ok((model, epe)) => SubgroupResult {
                config,
                region: Some(region),
                model: Some(model),
                train_epe: Some(epe),
                n_in_region: rows.len(),
                failed: None,
            },
            Err(err) => SubgroupResult {
                n_in_region: rows.len(),
                region: Some(region),
                ..SubgroupResult::failure(config, err)
            },
        }
    }

    fn region_for(&mut self, config: MethodConfig) -> Result<Region, MethodError> {
        let data = self.data;
        match (config.method, config.params) {
            (Method::Base, MethodParams::None) => Ok(base_method(data)),
            (Method::Random, MethodParams::Random { seed }) => random_method(data, seed),
            (
                method @ (Method::SurvivalTree | Method::CoxTree),
                MethodParams::Tree {
                    max_depth,
                    min_leaf,
                },
            ) => {
                let (criterion, max_thresholds) = if method == Method::SurvivalTree {
                    (tree::SplitCriterion::LogRank, None)
                } else {
                    (
                        tree::SplitCriterion::Epe,
                        self.options.cox_tree_max_thresholds,
                    )
                };
                if max_depth == 0 || max_depth > TREE_GROWTH_DEPTH {
                    return Err(MethodError::InvalidArgument(format!(
                        "max_depth must be in 1..={TREE_GROWTH_DEPTH}"
                    )));
                }
                let grown = self.trees.entry((criterion, min_leaf)).or_insert_with(|| {
                    let params = TreeParams {
                        max_depth: TREE_GROWTH_DEPTH,
                        min_leaf,
                        max_thresholds,
                    };
                    tree::grow_tree(data, criterion, &params)
                });
                let leaves = grown.leaves(data, max_depth)?;
                tree::min_epe_leaf(data, &leaves, &mut self.fits)
            }
            (Method::Prim, MethodParams::Prim { alpha, beta0 }) => {
                prim::prim_cached(data, alpha, beta0, &mut self.fits)
            }
            (
                method @ (Method::DDGroup | Method::DDGroupCI | Method::DDGroupPL),
                MethodParams::DDGroup {
                    core_frac,
                    rej_quantile,
                },
            ) => {
                let variant = match method {
                    Method::DDGroup => DDGroupVariant::Crs,
                    Method::DDGroupCI => DDGroupVariant::CIndex,
                    _ => DDGroupVariant::PartialLikelihood,
                };
                ddgroup::validate_quantile(rej_quantile)?;
                let quality = variant.core_quality();
                let score = variant.rejection_score().expect("expanding variant");
                let core = self.core(core_frac, quality)?;
                let key = (core_frac.to_bits(), score);
                let scores = match self.scores.get(&key) {
                    Some(s) => s.clone()?,
                    None => {
                        let s = conformity_scores(data, &core.indices, &core.model.beta, score);
                        self.scores.insert(key, s.clone());
                        s?
                    }
                };
                let rejected = labels_from_scores(&scores, rej_quantile);
                ddgroup::expand(data, &core, &rejected)
            }
            (Method::DDGroupNE, MethodParams::CoreOnly { core_frac }) => {
                let core = self.core(core_frac, CoreQuality::Epe)?;
                Ok(ddgroup::core_bounding_box(data, &core))
            }
            (method, params) => Err(MethodError::InvalidArgument(format!(
                "parameters {params:?} do not apply to {method}"
            ))),
        }
    }

    fn core(&mut self, core_frac: f64, quality: CoreQuality) -> Result<CoreGroup, MethodError> {
        let key = (core_frac.to_bits(), quality);
        if let Some(core) = self.cores.get(&key) {
            return core.clone();
        }
        let core = core_group_with(self.data, core_frac, quality, &self.options);
        self.cores.insert(key, core.clone());
        core
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_grid_has_one_hundred_settings() {
        for method in Method::ALL {
            let expected = if method == Method::Base { 1 } else { 100 };
            assert_eq!(method.grid().len(), expected, "{method}");
        }
        let prim = Method::Prim.grid();
        assert!(
            matches!(prim[0].params, MethodParams::Prim { alpha, beta0 } if alpha == 0.01 && beta0 == 0.005)
        );
        assert!(
            matches!(prim[99].params, MethodParams::Prim { alpha, beta0 } if alpha == 0.25 && beta0 == 0.04)
        );
        let ne = Method::DDGroupNE.grid();
        assert!(matches!(ne[99].params, MethodParams::CoreOnly { core_frac } if core_frac == 1.0));
    }

    #[test]
    fn method_names_round_trip() {
        for method in Method::ALL {
            assert_eq!(method.name().parse::<Method>().unwrap(), method);
        }
        assert_eq!("DG_CI".parse::<Method>().unwrap(), Method::DDGroupCI);
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn config_parsing() {
        let c = MethodConfig::parse(Method::DDGroup, "core_frac=0.1; rej_quantile=0.2").unwrap();
        assert_eq!(
            c.params,
            MethodParams::DDGroup {
                core_frac: 0.1,
                rej_quantile: 0.2
            }
        );
        let c = MethodConfig::parse(Method::SurvivalTree, "max_depth=3").unwrap();
        assert_eq!(
            c.params,
            MethodParams::Tree {
                max_depth: 3,
                min_leaf: 5
            }
        );
        assert!(MethodConfig::parse(Method::Prim, "alpha").is_err());
    }
}
