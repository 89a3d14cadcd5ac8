//! Axis-aligned survival trees: log-rank splits and Cox-EPE splits.
//!
//! Candidate thresholds are midpoints between consecutive distinct feature
//! values, so no training point lies on a threshold. A node splits on the best
//! candidate over all features (first encountered on ties, features then
//! thresholds in ascending order) whose children both hold at least
//! `min_leaf` points. Growth does not depend on `max_depth` except for where
//! it stops, so a deep tree truncated at depth `D` is the tree grown to `D`.

use serde::{Deserialize, Serialize};

use super::{FitCache, MethodError};
use crate::cox::{fit_cox, CoxModel};
use crate::data::{Region, SurvivalDataset};
use crate::metrics::empirical_epe;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Cap on candidate thresholds per feature, evenly spaced among the
    /// valid midpoints. `None` tries every midpoint.
    pub max_thresholds: Option<usize>,
}

/// A leaf box with the Cox model fitted on the training points inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub region: Region,
    pub rows: Vec<usize>,
    pub model: CoxModel,
    /// `None` when the leaf has no comparable pair.
    pub train_epe: Option<f64>,
}

/// Tree with log-rank splits. Returns every leaf whose Cox fit succeeds.
pub fn survival_tree(
    data: &SurvivalDataset,
    params: &TreeParams,
) -> Result<Vec<Leaf>, MethodError> {
    fit_leaves(data, SplitCriterion::LogRank, params)
}

/// Tree whose splits minimise the size-weighted EPE of the refit children.
pub fn cox_tree(data: &SurvivalDataset, params: &TreeParams) -> Result<Vec<Leaf>, MethodError> {
    fit_leaves(data, SplitCriterion::Epe, params)
}

fn fit_leaves(
    data: &SurvivalDataset,
    criterion: SplitCriterion,
    params: &TreeParams,
) -> Result<Vec<Leaf>, MethodError> {
    let tree = grow_tree(data, criterion, params);
    let leaves: Vec<Leaf> = tree
        .leaves(data, params.max_depth)?
        .into_iter()
        .filter_map(|(region, rows)| {
            let subset = data.subset(&rows);
            let model = fit_cox(&subset, 0.0).ok()?;
            let train_epe = empirical_epe(&model.beta, &subset).ok();
            Some(Leaf {
                region,
                rows,
                model,
                train_epe,
            })
        })
        .collect();
    if leaves.is_empty() {
        return Err(MethodError::NoValidLeaf);
    }
    Ok(leaves)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum SplitCriterion {
    LogRank,
    Epe,
}

#[derive(Debug, Clone)]
struct Node {
    depth: usize,
    /// Rows in non-decreasing time order.
    rows: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub(crate) struct GrownTree {
    nodes: Vec<Node>,
}

pub(crate) fn grow_tree(
    data: &SurvivalDataset,
    criterion: SplitCriterion,
    params: &TreeParams,
) -> GrownTree {
    let d = data.d_subgp();
    let mut nodes = vec![Node {
        depth: 0,
        rows: data.sort_index().to_vec(),
        lower: vec![f64::NEG_INFINITY; d],
        upper: vec![f64::INFINITY; d],
        children: None,
    }];
    let mut next = 0;
    while next < nodes.len() {
        let node = &nodes[next];
        if node.depth < params.max_depth && node.rows.len() >= 2 * params.min_leaf.max(1) {
            if let Some((feature, threshold)) = best_split(data, &node.rows, criterion, params) {
                let x = data.x_subgp();
                let (left, right): (Vec<usize>, Vec<usize>) = node
                    .rows
                    .iter()
                    .partition(|&&r| x[[r, feature]] <= threshold);
                let mut l = Node {
                    depth: node.depth + 1,
                    rows: left,
                    lower: node.lower.clone(),
                    upper: node.upper.clone(),
                    children: None,
                };
                let mut r = Node {
                    rows: right,
                    ..l.clone()
                };
                l.upper[feature] = threshold;
                r.lower[feature] = threshold;
                let id = nodes.len();
                nodes[next].children = Some((id, id + 1));
                nodes.push(l);
                nodes.push(r);
            }
        }
        next += 1;
    }
    GrownTree { nodes }
}

impl GrownTree {
    /// Leaves of the tree truncated at `depth` (root has depth 0), as boxes
    /// clipped to the data bounding box together with their rows (ascending).
    pub(crate) fn leaves(
        &self,
        data: &SurvivalDataset,
        depth: usize,
    ) -> Result<Vec<(Region, Vec<usize>)>, MethodError> {
        let bbox = data.bounding_box();
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            match node.children {
                Some((l, r)) if node.depth < depth => {
                    stack.push(r);
                    stack.push(l);
                }
                _ => {
                    let half_spaces = Region::new(node.lower.clone(), node.upper.clone())
                        .map_err(|e| MethodError::InvalidArgument(e.to_string()))?;
                    let region = half_spaces
                        .intersect(&bbox)
                        .expect("non-empty leaf lies inside the bounding box");
                    let mut rows = node.rows.clone();
                    rows.sort_unstable();
                    out.push((region, rows));
                }
            }
        }
        Ok(out)
    }
}

/// Picks the leaf with minimum training EPE among those that admit a fit.
pub(crate) fn min_epe_leaf(
    data: &SurvivalDataset,
    leaves: &[(Region, Vec<usize>)],
    fits: &mut FitCache,
) -> Result<Region, MethodError> {
    let mut best: Option<(f64, &Region)> = None;
    for (region, rows) in leaves {
        if let Ok((_, epe)) = fits.get(data, rows) {
            if best.is_none_or(|(b, _)| epe < b) {
                best = Some((epe, region));
            }
        }
    }
    best.map(|(_, r)| r.clone()).ok_or(MethodError::NoValidLeaf)
}

/// Valid thresholds for one feature: midpoints between consecutive distinct
/// values leaving at least `min_leaf` points on each side.
fn candidate_thresholds(values: &mut [f64], min_leaf: usize, cap: Option<usize>) -> Vec<f64> {
    values.sort_unstable_by(f64::total_cmp);
    let m = values.len();
    let mut out = Vec::new();
    for a in 0..m.saturating_sub(1) {
        let (lo, hi) = (values[a], values[a + 1]);
        let left = a + 1;
        if lo == hi || left < min_leaf || m - left < min_leaf {
            continue;
        }
        let mid = lo + 0.5 * (hi - lo);
        if lo < mid && mid < hi {
            out.push(mid);
        }
    }
    match cap {
        Some(cap) if cap >= 1 && out.len() > cap => {
            let len = out.len();
            let mut picked: Vec<f64> = (0..cap)
                .map(|i| {
                    let pos = if cap == 1 {
                        (len - 1) / 2
                    } else {
                        (i * (len - 1) + (cap - 1) / 2) / (cap - 1)
                    };
                    out[pos]
                })
                .collect();
            picked.dedup();
            picked
        }
        _ => out,
    }
}

fn best_split(
    data: &SurvivalDataset,
    rows: &[usize],
    criterion: SplitCriterion,
    params: &TreeParams,
) -> Option<(usize, f64)> {
    let x = data.x_subgp();
    let times = data.times();
    let events = data.events();
    let min_leaf = params.min_leaf.max(1);
    let (parent_epe, blocks) = match criterion {
        SplitCriterion::LogRank => (0.0, time_blocks(rows, |r| times[r])),
        SplitCriterion::Epe => {
            let subset = data.subset(rows);
            let model = fit_cox(&subset, 0.0).ok()?;
            (empirical_epe(&model.beta, &subset).ok()?, Vec::new())
        }
    };
    let mut best: Option<(f64, usize, f64)> = None;
    for j in 0..data.d_subgp() {
        let mut values: Vec<f64> = rows.iter().map(|&r| x[[r, j]]).collect();
        let cap = match criterion {
            SplitCriterion::LogRank => None,
            SplitCriterion::Epe => params.max_thresholds,
        };
        for thr in candidate_thresholds(&mut values, min_leaf, cap) {
            let gain = match criterion {
                SplitCriterion::LogRank => {
                    let group: Vec<bool> = rows.iter().map(|&r| x[[r, j]] <= thr).collect();
                    let evs: Vec<bool> = rows.iter().map(|&r| events[r]).collect();
                    log_rank_blocks(&blocks, &evs, &group)
                }
                SplitCriterion::Epe => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&row| x[[row, j]] <= thr);
                    match (child_epe(data, &l), child_epe(data, &r)) {
                        (Some(el), Some(er)) => {
                            let n = (l.len() + r.len()) as f64;
                            parent_epe - (l.len() as f64 * el + r.len() as f64 * er) / n
                        }
                        _ => continue,
                    }
                }
            };
            if gain > SPLIT_TOLERANCE && best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, j, thr));
            }
        }
    }
    best.map(|(_, j, thr)| (j, thr))
}

const SPLIT_TOLERANCE: f64 = 1e-12;

fn child_epe(data: &SurvivalDataset, rows: &[usize]) -> Option<f64> {
    let subset = data.subset(rows);
    let model = fit_cox(&subset, 0.0).ok()?;
    empirical_epe(&model.beta, &subset).ok()
}

/// Half-open ranges of positions sharing a time, for rows in time order.
fn time_blocks(rows: &[usize], time: impl Fn(usize) -> f64) -> Vec<(usize, usize)> {
    let mut blocks = Vec::new();
    let mut start = 0;
    for p in 1..=rows.len() {
        if p == rows.len() || time(rows[p]) != time(rows[start]) {
            blocks.push((start, p));
            start = p;
        }
    }
    blocks
}

fn log_rank_blocks(blocks: &[(usize, usize)], events: &[bool], group: &[bool]) -> f64 {
    let mut at_risk = group.len() as f64;
    let mut at_risk_1 = group.iter().filter(|&&g| g).count() as f64;
    let (mut observed, mut expected, mut variance) = (0.0, 0.0, 0.0);
    for &(a, b) in blocks {
        let (mut d, mut d1, mut leaving, mut leaving_1) = (0.0, 0.0, 0.0, 0.0);
        for p in a..b {
            leaving += 1.0;
            if group[p] {
                leaving_1 += 1.0;
            }
            if events[p] {
                d += 1.0;
                if group[p] {
                    d1 += 1.0;
                }
            }
        }
        if d > 0.0 {
            let frac = at_risk_1 / at_risk;
            observed += d1;
            expected += d * frac;
            if at_risk > 1.0 {
                variance += d * frac * (1.0 - frac) * (at_risk - d) / (at_risk - 1.0);
            }
        }
        at_risk -= leaving;
        at_risk_1 -= leaving_1;
    }
    if variance > 0.0 {
        (observed - expected).powi(2) / variance
    } else {
        0.0
    }
}

/// Two-sample log-rank chi-square statistic for `group` against its
/// complement. Inputs are indexed alike and need not be sorted.
pub fn log_rank_statistic(times: &[f64], events: &[bool], group: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let blocks = time_blocks(&order, |r| times[r]);
    let ev: Vec<bool> = order.iter().map(|&r| events[r]).collect();
    let gr: Vec<bool> = order.iter().map(|&r| group[r]).collect();
    log_rank_blocks(&blocks, &ev, &gr)
}
