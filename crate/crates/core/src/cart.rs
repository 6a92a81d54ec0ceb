//! Unpruned CART regression trees grown on weighted (bootstrap) samples.
//!
//! A tree is an array of nodes addressed by index; the root is node 0 at
//! depth 0. Bootstrap multiplicities act as integer weights, which is
//! equivalent to materializing the duplicated rows.
//!
//! Split search is exhaustive over the candidate features drawn at each node:
//! every midpoint between consecutive distinct values for continuous
//! features, and every binary partition of the levels present in the node
//! for categorical features with at most [`EXHAUSTIVE_LEVELS`] present levels
//! (larger level sets use the classical mean-ordering shortcut, which is also
//! optimal for squared error). Candidates are visited in a fixed order
//! (feature id, then threshold or left-level bitmask ascending) and a later
//! candidate only wins when it improves on the incumbent by more than a
//! relative tolerance, so near-ties resolve to the earliest candidate.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::schema::Dataset;

/// Categorical features with at most this many levels present in a node are
/// split by enumerating all `2^(L-1) - 1` partitions.
pub const EXHAUSTIVE_LEVELS: usize = 10;

/// Relative tolerance (against the node's RSS) for ties and for the
/// strict-improvement test.
pub const REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub mtry: usize,
    /// A node is split only when its (weighted) row count exceeds this.
    pub node_size: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SplitRule {
    /// `x <= threshold` goes left.
    Threshold { feature: usize, threshold: f64 },
    /// Bitmasks over the schema's level order. Levels in `left` go left,
    /// levels in `right` go right; levels in neither were not seen in the
    /// node during training.
    Levels {
        feature: usize,
        #[serde(rename = "left_levels")]
        left: u64,
        #[serde(rename = "right_levels")]
        right: u64,
    },
}

impl SplitRule {
    pub fn feature(&self) -> usize {
        match *self {
            SplitRule::Threshold { feature, .. } | SplitRule::Levels { feature, .. } => feature,
        }
    }

    /// `Some(true)` for left, `Some(false)` for right, `None` for a level
    /// the node never saw.
    #[inline]
    pub fn route(&self, value: f64) -> Option<bool> {
        match *self {
            SplitRule::Threshold { threshold, .. } => Some(value <= threshold),
            SplitRule::Levels { left, right, .. } => {
                let bit = 1u64 << (value as u32);
                if left & bit != 0 {
                    Some(true)
                } else if right & bit != 0 {
                    Some(false)
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    #[serde(flatten)]
    pub rule: SplitRule,
    pub left: u32,
    pub right: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub depth: u32,
    /// Training rows in the node, counted with bootstrap multiplicity.
    pub count: u32,
    /// Mean training response in the node.
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    /// Bootstrap multiplicity of every training row; zero means out of bag.
    in_bag: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub rule: SplitRule,
    /// Sum of the two children's residual sums of squares.
    pub rss_after: f64,
}

impl RegressionTree {
    /// Assembles a tree from explicit nodes, checking structural invariants.
    pub fn from_parts(nodes: Vec<Node>, in_bag: Vec<u32>) -> Result<Self> {
        let tree = RegressionTree { nodes, in_bag };
        tree.validate()?;
        Ok(tree)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Model(m));
        if self.nodes.is_empty() {
            return bad("tree has no nodes".into());
        }
        if self.nodes[0].depth != 0 {
            return bad("root depth must be 0".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.value.is_finite() {
                return bad(format!("node {i} has a non-finite value"));
            }
            if let Some(s) = n.split {
                for c in [s.left as usize, s.right as usize] {
                    if c <= i || c >= self.nodes.len() {
                        return bad(format!("node {i} has invalid child {c}"));
                    }
                    if self.nodes[c].depth != n.depth + 1 {
                        return bad(format!("node {c} depth is not parent depth + 1"));
                    }
                    parents[c] += 1;
                }
                if s.left == s.right {
                    return bad(format!("node {i} has identical children"));
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return bad("nodes do not form a tree".into());
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn in_bag(&self) -> &[u32] {
        &self.in_bag
    }

    pub fn is_out_of_bag(&self, row: usize) -> bool {
        self.in_bag[row] == 0
    }

    pub fn oob_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.in_bag.iter().enumerate().filter(|(_, &m)| m == 0).map(|(i, _)| i)
    }

    /// Depth of the deepest node (0 for a single leaf).
    pub fn max_depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_with(|f| x[f])
    }

    /// Prediction where predictor values are supplied by a lookup closure.
    #[inline]
    pub fn predict_with(&self, value: impl Fn(usize) -> f64) -> f64 {
        self.nodes[self.leaf_with(value)].value
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        self.leaf_with(|f| x[f])
    }

    #[inline]
    fn leaf_with(&self, value: impl Fn(usize) -> f64) -> usize {
        let mut i = 0usize;
        while let Some(s) = self.nodes[i].split {
            let (l, r) = (s.left as usize, s.right as usize);
            i = match s.rule.route(value(s.rule.feature())) {
                Some(true) => l,
                Some(false) => r,
                None if self.nodes[l].count >= self.nodes[r].count => l,
                None => r,
            };
        }
        i
    }

    /// Copy with every node value replaced; structure and in-bag kept.
    pub fn with_values(&self, f: impl Fn(usize, &Node) -> f64) -> RegressionTree {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| Node { value: f(i, n), ..*n })
            .collect();
        RegressionTree {
            nodes,
            in_bag: self.in_bag.clone(),
        }
    }
}

#[derive(Clone, Copy)]
struct Sample {
    row: u32,
    weight: u32,
}

/// Reusable scratch space for split search.
#[derive(Default)]
struct Splitter {
    sorted: Vec<(f64, f64, f64)>,
}

#[inline]
fn child_rss(w: f64, s: f64, q: f64) -> f64 {
    (q - s * s / w).max(0.0)
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

impl Splitter {
    fn best(
        &mut self,
        ds: &Dataset,
        samples: &[Sample],
        feature: usize,
        center: f64,
        tol: f64,
    ) -> Option<SplitCandidate> {
        if ds.schema().is_categorical(feature) {
            self.best_categorical(ds, samples, feature, center, tol)
        } else {
            self.best_continuous(ds, samples, feature, center, tol)
        }
    }

    fn best_continuous(
        &mut self,
        ds: &Dataset,
        samples: &[Sample],
        feature: usize,
        center: f64,
        tol: f64,
    ) -> Option<SplitCandidate> {
        let x = ds.column(feature);
        let y = ds.response();
        self.sorted.clear();
        self.sorted.extend(samples.iter().map(|s| {
            let r = s.row as usize;
            (x[r], y[r] - center, s.weight as f64)
        }));
        self.sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let buf = &self.sorted;
        if buf.len() < 2 || buf[0].0 == buf[buf.len() - 1].0 {
            return None;
        }
        let (mut tw, mut ts, mut tq) = (0.0, 0.0, 0.0);
        for &(_, yc, w) in buf {
            tw += w;
            ts += w * yc;
            tq += w * yc * yc;
        }
        let (mut wl, mut sl, mut ql) = (0.0, 0.0, 0.0);
        let mut best: Option<(f64, f64)> = None;
        for i in 0..buf.len() - 1 {
            let (xi, yc, w) = buf[i];
            wl += w;
            sl += w * yc;
            ql += w * yc * yc;
            let next = buf[i + 1].0;
            if xi == next {
                continue;
            }
            let rss = child_rss(wl, sl, ql) + child_rss(tw - wl, ts - sl, tq - ql);
            if best.map_or(true, |(b, _)| rss < b - tol) {
                best = Some((rss, midpoint(xi, next)));
            }
        }
        best.map(|(rss_after, threshold)| SplitCandidate {
            rule: SplitRule::Threshold { feature, threshold },
            rss_after,
        })
    }

    fn best_categorical(
        &mut self,
        ds: &Dataset,
        samples: &[Sample],
        feature: usize,
        center: f64,
        tol: f64,
    ) -> Option<SplitCandidate> {
        let x = ds.column(feature);
        let y = ds.response();
        let n_levels = ds.schema().feature(feature).levels().map_or(0, |l| l.len());
        let mut w = vec![0.0; n_levels];
        let mut s = vec![0.0; n_levels];
        let mut q = vec![0.0; n_levels];
        for smp in samples {
            let r = smp.row as usize;
            let l = x[r] as usize;
            let yc = y[r] - center;
            let wt = smp.weight as f64;
            w[l] += wt;
            s[l] += wt * yc;
            q[l] += wt * yc * yc;
        }
        let present: Vec<usize> = (0..n_levels).filter(|&l| w[l] > 0.0).collect();
        if present.len() < 2 {
            return None;
        }
        let present_mask: u64 = present.iter().fold(0, |m, &l| m | (1u64 << l));
        let (tw, ts, tq) = present
            .iter()
            .fold((0.0, 0.0, 0.0), |(a, b, c), &l| (a + w[l], b + s[l], c + q[l]));
        let rss_of = |mask: u64| {
            let (mut wl, mut sl, mut ql) = (0.0, 0.0, 0.0);
            for &l in &present {
                if mask & (1u64 << l) != 0 {
                    wl += w[l];
                    sl += s[l];
                    ql += q[l];
                }
            }
            child_rss(wl, sl, ql) + child_rss(tw - wl, ts - sl, tq - ql)
        };
        let mut best: Option<(f64, u64)> = None;
        let consider = |mask: u64, best: &mut Option<(f64, u64)>| {
            let rss = rss_of(mask);
            if best.map_or(true, |(b, _)| rss < b - tol) {
                *best = Some((rss, mask));
            }
        };
        let lowest = 1u64 << present[0];
        if present.len() <= EXHAUSTIVE_LEVELS {
            // The lowest present level always sits on the left; the other
            // present levels join it according to the bits of `c`. The map
            // from `c` to the mask is monotone, so masks come out ascending.
            let rest = &present[1..];
            let all = (1u64 << rest.len()) - 1;
            for c in 0..all {
                let mask = rest
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| c & (1 << b) != 0)
                    .fold(lowest, |m, (_, &l)| m | (1u64 << l));
                consider(mask, &mut best);
            }
        } else {
            let mut order = present.clone();
            order.sort_by(|&a, &b| (s[a] / w[a]).total_cmp(&(s[b] / w[b])).then(a.cmp(&b)));
            let mut mask = 0u64;
            for &l in &order[..order.len() - 1] {
                mask |= 1u64 << l;
                let canonical = if mask & lowest != 0 { mask } else { present_mask & !mask };
                consider(canonical, &mut best);
            }
        }
        best.map(|(rss_after, left)| SplitCandidate {
            rule: SplitRule::Levels {
                feature,
                left,
                right: present_mask & !left,
            },
            rss_after,
        })
    }
}

/// Node statistics: weighted count, weighted mean, RSS, and purity.
fn node_stats(y: &[f64], samples: &[Sample]) -> (f64, f64, f64, bool) {
    let mut w = 0.0;
    let mut sum = 0.0;
    let first = y[samples[0].row as usize];
    let mut pure = true;
    for s in samples {
        let v = y[s.row as usize];
        pure &= v == first;
        w += s.weight as f64;
        sum += s.weight as f64 * v;
    }
    let mean = sum / w;
    let rss = if pure {
        0.0
    } else {
        samples
            .iter()
            .map(|s| {
                let d = y[s.row as usize] - mean;
                s.weight as f64 * d * d
            })
            .sum()
    };
    (w, mean, rss, pure)
}

fn node_rss_tolerance(rss: f64) -> f64 {
    REL_TOL * rss
}

/// Best split of `sample` (row, multiplicity pairs) on one feature, or `None`
/// when the feature is constant on those rows.
pub fn best_split(ds: &Dataset, sample: &[(usize, u32)], feature: usize) -> Option<SplitCandidate> {
    let samples: Vec<Sample> = sample
        .iter()
        .filter(|(_, w)| *w > 0)
        .map(|&(row, weight)| Sample {
            row: row as u32,
            weight,
        })
        .collect();
    if samples.len() < 2 {
        return None;
    }
    let (_, mean, rss, _) = node_stats(ds.response(), &samples);
    Splitter::default().best(ds, &samples, feature, mean, node_rss_tolerance(rss))
}

/// Uniform subset of `mtry` distinct feature ids, returned ascending.
fn draw_features(rng: &mut Rng, p: usize, mtry: usize, scratch: &mut Vec<usize>) {
    scratch.clear();
    scratch.extend(0..p);
    for i in 0..mtry {
        let j = rng.random_range(i..p);
        scratch.swap(i, j);
    }
    scratch.truncate(mtry);
    scratch.sort_unstable();
}

pub fn check_in_bag(in_bag: &[u32], n: usize) -> Result<()> {
    if in_bag.len() != n {
        return Err(Error::InvalidParams(format!(
            "in-bag vector has length {}, dataset has {n} rows",
            in_bag.len()
        )));
    }
    let total: u64 = in_bag.iter().map(|&m| m as u64).sum();
    if total != n as u64 {
        return Err(Error::InvalidParams(format!(
            "in-bag multiplicities sum to {total}, expected {n}"
        )));
    }
    Ok(())
}

/// Grows one tree on the rows selected by `in_bag`.
///
/// At each node with more than `node_size` rows, non-constant response and
/// depth below `max_depth`, `mtry` features are drawn afresh and the best
/// split among them is taken if it strictly lowers the RSS.
pub fn fit_tree(ds: &Dataset, in_bag: &[u32], params: &TreeParams) -> Result<RegressionTree> {
    let n = ds.n_rows();
    let p = ds.n_features();
    check_in_bag(in_bag, n)?;
    if params.mtry == 0 || params.mtry > p {
        return Err(Error::InvalidParams(format!("mtry must be in 1..={p}, got {}", params.mtry)));
    }
    if params.node_size == 0 {
        return Err(Error::InvalidParams("node_size must be at least 1".into()));
    }
    let y = ds.response();
    let mut rng = rng_from_seed(params.seed);
    let mut splitter = Splitter::default();
    let mut features = Vec::with_capacity(p);
    let mut samples: Vec<Sample> = in_bag
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0)
        .map(|(row, &weight)| Sample {
            row: row as u32,
            weight,
        })
        .collect();

    let placeholder = |depth| Node {
        depth,
        count: 0,
        value: 0.0,
        split: None,
    };
    let mut nodes = vec![placeholder(0)];
    // (node id, sample range start, end)
    let mut stack = vec![(0usize, 0usize, samples.len())];
    while let Some((id, start, end)) = stack.pop() {
        let depth = nodes[id].depth;
        let slice = &mut samples[start..end];
        let (w, mean, rss, pure) = node_stats(y, slice);
        nodes[id].count = w as u32;
        nodes[id].value = mean;
        let depth_ok = params.max_depth.map_or(true, |d| (depth as usize) < d);
        if pure || w <= params.node_size as f64 || !depth_ok {
            continue;
        }
        draw_features(&mut rng, p, params.mtry, &mut features);
        let tol = node_rss_tolerance(rss);
        let mut best: Option<SplitCandidate> = None;
        for &f in &features {
            if let Some(c) = splitter.best(ds, slice, f, mean, tol) {
                if best.map_or(true, |b| c.rss_after < b.rss_after - tol) {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best.filter(|b| b.rss_after < rss - tol) else {
            continue;
        };
        let f = best.rule.feature();
        let x = ds.column(f);
        // Unseen levels cannot occur here: the rule was built from this slice.
        let mut mid = 0;
        for i in 0..slice.len() {
            if best.rule.route(x[slice[i].row as usize]) == Some(true) {
                slice.swap(i, mid);
                mid += 1;
            }
        }
        if mid == 0 || mid == slice.len() {
            return Err(Error::Invariant(format!("split on feature {f} produced an empty child")));
        }
        let left = nodes.len();
        nodes.push(placeholder(depth + 1));
        nodes.push(placeholder(depth + 1));
        nodes[id].split = Some(Split {
            rule: best.rule,
            left: left as u32,
            right: left as u32 + 1,
        });
        stack.push((left + 1, start + mid, end));
        stack.push((left, start, start + mid));
    }
    Ok(RegressionTree {
        nodes,
        in_bag: in_bag.to_vec(),
    })
}
