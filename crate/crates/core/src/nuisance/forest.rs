//! CART regression forest.
//!
//! Trees split on the threshold that maximizes the reduction in summed
//! squared error, with candidate thresholds at midpoints between consecutive
//! distinct feature values. Every feature is sorted once per forest; each
//! tree derives its per-feature sample order from that in linear time and
//! keeps the orders partitioned as nodes split.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use super::learner::{FitError, Learner, Regressor};
use crate::math::{self, KahanSum};
use crate::rng::{Generator, RngStream};

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self, FitError> {
        if data.len() != rows * cols {
            return Err(FitError::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Self { data, rows, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, FitError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(FitError::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { data, rows: rows.len(), cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Fraction of features considered at each split.
    pub feature_fraction: f64,
    pub bootstrap: bool,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub seed: RngStream,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            min_samples_leaf: 5,
            feature_fraction: 1.0,
            bootstrap: true,
            seed: RngStream::default(),
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.n_trees == 0 {
            return Err(FitError::InvalidParams("n_trees must be positive"));
        }
        if self.max_depth == Some(0) {
            return Err(FitError::InvalidParams("max_depth must be positive"));
        }
        if self.min_samples_leaf == 0 {
            return Err(FitError::InvalidParams("min_samples_leaf must be positive"));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(FitError::InvalidParams("feature_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: RngStream) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    #[inline]
    fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_single_leaf(&self) -> bool {
        matches!(self.nodes.as_slice(), [Node::Leaf { .. }])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionForest {
    trees: Vec<Tree>,
    feature_count: usize,
    target_min: f64,
    target_max: f64,
}

/// Per-forest data shared by every tree.
struct Presorted<'a> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    /// Row indices sorted by `(value, row)`, one vector per feature.
    order: Vec<Vec<u32>>,
}

struct TreeBuilder<'a> {
    params: &'a ForestParams,
    rng: Generator,
    /// Sample values, column-major.
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    /// Number of node samples sent left.
    left: usize,
    threshold: f64,
}

impl<'a> TreeBuilder<'a> {
    fn new(data: &Presorted<'_>, params: &'a ForestParams, mut rng: Generator) -> Self {
        let n = data.x.rows();
        let p = data.x.cols();
        // Multiplicity of each training row in this tree's sample.
        let mut counts = vec![0u32; n];
        if params.bootstrap {
            for _ in 0..n {
                counts[rng.below(n as u64) as usize] += 1;
            }
        } else {
            counts.fill(1);
        }
        // Sample positions are grouped by row: row r owns [start[r], start[r] + counts[r]).
        let mut start = vec![0u32; n];
        let mut rows = Vec::with_capacity(n);
        for (r, &c) in counts.iter().enumerate() {
            start[r] = rows.len() as u32;
            rows.extend(core::iter::repeat(r).take(c as usize));
        }
        let y: Vec<f64> = rows.iter().map(|&r| data.y[r]).collect();
        let cols: Vec<Vec<f64>> =
            (0..p).map(|f| rows.iter().map(|&r| data.x.row(r)[f]).collect()).collect();
        let order = data
            .order
            .iter()
            .map(|global| {
                let mut o = Vec::with_capacity(rows.len());
                for &r in global {
                    let s = start[r as usize];
                    o.extend(s..s + counts[r as usize]);
                }
                o
            })
            .collect();
        let size = rows.len();
        Self {
            params,
            rng,
            cols,
            y,
            order,
            goes_left: vec![false; size],
            scratch: Vec::with_capacity(size),
            nodes: Vec::new(),
        }
    }

    fn build(mut self) -> Tree {
        let n = self.y.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let mut stack = vec![(0usize, 0usize, n, 0usize)];
        while let Some((id, s, e, depth)) = stack.pop() {
            match self.split_node(s, e, depth) {
                Some(split) => {
                    self.partition(&split, s, e);
                    let left = self.nodes.len();
                    self.nodes.push(Node::Leaf { value: 0.0 });
                    self.nodes.push(Node::Leaf { value: 0.0 });
                    self.nodes[id] = Node::Split {
                        feature: split.feature as u32,
                        threshold: split.threshold,
                        left: left as u32,
                        right: (left + 1) as u32,
                    };
                    let mid = s + split.left;
                    stack.push((left + 1, mid, e, depth + 1));
                    stack.push((left, s, mid, depth + 1));
                }
                None => {
                    self.nodes[id] = Node::Leaf { value: self.leaf_value(s, e) };
                }
            }
        }
        Tree { nodes: self.nodes }
    }

    fn node_targets(&self, s: usize, e: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        self.order[0][s..e].iter().map(|&k| self.y[k as usize])
    }

    fn leaf_value(&self, s: usize, e: usize) -> f64 {
        let (lo, hi) = self
            .node_targets(s, e)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        math::shifted_mean(self.node_targets(s, e)).clamp(lo, hi)
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.cols.len();
        if self.params.feature_fraction >= 1.0 {
            return (0..p).collect();
        }
        let k = ((self.params.feature_fraction * p as f64) as usize).max(1).min(p);
        let k = if (k as f64) < self.params.feature_fraction * p as f64 { k + 1 } else { k }.min(p);
        let mut picked = rand::seq::index::sample(&mut self.rng, p, k).into_vec();
        picked.sort_unstable();
        picked
    }

    fn split_node(&mut self, s: usize, e: usize, depth: usize) -> Option<BestSplit> {
        let n = e - s;
        let min_leaf = self.params.min_samples_leaf;
        if n < 2 * min_leaf || self.params.max_depth.is_some_and(|d| depth >= d) {
            return None;
        }
        let mean = math::shifted_mean(self.node_targets(s, e));
        let mut sse = KahanSum::new();
        let mut total = KahanSum::new();
        for v in self.node_targets(s, e) {
            let z = v - mean;
            sse.add(z * z);
            total.add(z);
        }
        let sse = sse.total();
        if !(sse > 0.0) {
            return None;
        }
        let total = total.total();
        let nf = n as f64;
        let base = total * total / nf;
        let features = self.candidate_features();
        let mut best: Option<BestSplit> = None;
        for f in features {
            let col = &self.cols[f];
            let ord = &self.order[f][s..e];
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                let k = ord[i] as usize;
                left_sum += self.y[k] - mean;
                let nl = i + 1;
                if nl < min_leaf {
                    continue;
                }
                let nr = n - nl;
                if nr < min_leaf {
                    break;
                }
                let (a, b) = (col[k], col[ord[i + 1] as usize]);
                if !(a < b) {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - base;
                if best.as_ref().map_or(true, |bs| gain > bs.gain) {
                    let mid = 0.5 * (a + b);
                    let threshold = if a <= mid && mid < b { mid } else { a };
                    best = Some(BestSplit { gain, feature: f, left: nl, threshold });
                }
            }
        }
        best.filter(|b| b.gain > 1e-12 * sse)
    }

    fn partition(&mut self, split: &BestSplit, s: usize, e: usize) {
        for &k in &self.order[split.feature][s..e] {
            self.goes_left[k as usize] = false;
        }
        for &k in &self.order[split.feature][s..s + split.left] {
            self.goes_left[k as usize] = true;
        }
        for f in 0..self.order.len() {
            let seg = &mut self.order[f][s..e];
            self.scratch.clear();
            let mut w = 0;
            for r in 0..seg.len() {
                let k = seg[r];
                if self.goes_left[k as usize] {
                    seg[w] = k;
                    w += 1;
                } else {
                    self.scratch.push(k);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
        }
    }
}

impl RegressionForest {
    pub fn fit(
        features: &FeatureMatrix,
        targets: &[f64],
        params: &ForestParams,
    ) -> Result<Self, FitError> {
        params.validate()?;
        let n = features.rows();
        if n == 0 {
            return Err(FitError::Empty);
        }
        if targets.len() != n {
            return Err(FitError::DimensionMismatch { expected: n, found: targets.len() });
        }
        if features.cols() == 0 {
            return Err(FitError::InvalidParams("feature matrix has no columns"));
        }
        if let Some(row) = (0..n).find(|&i| {
            !targets[i].is_finite() || features.row(i).iter().any(|v| !v.is_finite())
        }) {
            return Err(FitError::NonFinite { row });
        }
        let order = (0..features.cols())
            .map(|f| {
                let mut o: Vec<u32> = (0..n as u32).collect();
                o.sort_unstable_by(|&a, &b| {
                    let (va, vb) = (features.row(a as usize)[f], features.row(b as usize)[f]);
                    va.partial_cmp(&vb).expect("finite").then(a.cmp(&b))
                });
                o
            })
            .collect();
        let data = Presorted { x: features, y: targets, order };
        let trees = (0..params.n_trees as u64)
            .map(|t| TreeBuilder::new(&data, params, params.seed.derive(t).generator()).build())
            .collect();
        let (target_min, target_max) = targets
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(Self { trees, feature_count: features.cols(), target_min, target_max })
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Mean of the per-tree leaf values.
    pub fn predict(&self, x: &[f64]) -> Result<f64, FitError> {
        if x.len() != self.feature_count {
            return Err(FitError::DimensionMismatch { expected: self.feature_count, found: x.len() });
        }
        Ok(self.predict_unchecked(x))
    }

    #[inline]
    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        math::shifted_mean(self.trees.iter().map(|t| t.predict(x)))
            .clamp(self.target_min, self.target_max)
    }

    /// Flat text dump: a header line, then one line per node,
    /// `tree node split feature threshold left right` or `tree node leaf value`.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "forest features={} trees={} min={:?} max={:?}\n",
            self.feature_count,
            self.trees.len(),
            self.target_min,
            self.target_max
        );
        for (t, tree) in self.trees.iter().enumerate() {
            for (i, node) in tree.nodes.iter().enumerate() {
                let _ = match node {
                    Node::Split { feature, threshold, left, right } => {
                        writeln!(out, "{t} {i} split {feature} {threshold:?} {left} {right}")
                    }
                    Node::Leaf { value } => writeln!(out, "{t} {i} leaf {value:?}"),
                };
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, FitError> {
        let parse_err = |line: usize, reason: &'static str| FitError::Parse { line, reason };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(parse_err(1, "missing header"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("forest") {
            return Err(parse_err(1, "header must start with `forest`"));
        }
        let mut kv = |key: &str| -> Result<&str, FitError> {
            fields
                .next()
                .and_then(|f| f.strip_prefix(key))
                .and_then(|f| f.strip_prefix('='))
                .ok_or(parse_err(1, "malformed header field"))
        };
        let feature_count: usize = kv("features")?.parse().map_err(|_| parse_err(1, "bad count"))?;
        let n_trees: usize = kv("trees")?.parse().map_err(|_| parse_err(1, "bad count"))?;
        let target_min: f64 = kv("min")?.parse().map_err(|_| parse_err(1, "bad float"))?;
        let target_max: f64 = kv("max")?.parse().map_err(|_| parse_err(1, "bad float"))?;
        let mut trees: Vec<Tree> = (0..n_trees).map(|_| Tree { nodes: Vec::new() }).collect();
        for (i, line) in lines {
            let ln = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let int = |s: &str| s.parse::<usize>().map_err(|_| parse_err(ln, "bad integer"));
            let float = |s: &str| s.parse::<f64>().map_err(|_| parse_err(ln, "bad float"));
            let (t, node) = match parts.as_slice() {
                [t, id, "split", f, thr, l, r] => {
                    if int(id)? != trees.get(int(t)?).map_or(usize::MAX, |tr| tr.nodes.len()) {
                        return Err(parse_err(ln, "node ids must be consecutive"));
                    }
                    let feature = int(f)?;
                    if feature >= feature_count {
                        return Err(parse_err(ln, "feature index out of range"));
                    }
                    let node = Node::Split {
                        feature: feature as u32,
                        threshold: float(thr)?,
                        left: int(l)? as u32,
                        right: int(r)? as u32,
                    };
                    (int(t)?, node)
                }
                [t, id, "leaf", v] => {
                    if int(id)? != trees.get(int(t)?).map_or(usize::MAX, |tr| tr.nodes.len()) {
                        return Err(parse_err(ln, "node ids must be consecutive"));
                    }
                    (int(t)?, Node::Leaf { value: float(v)? })
                }
                _ => return Err(parse_err(ln, "unrecognized node line")),
            };
            trees[t].nodes.push(node);
        }
        for tree in &trees {
            let len = tree.nodes.len();
            if len == 0 {
                return Err(parse_err(0, "tree without nodes"));
            }
            let dangling = tree.nodes.iter().any(|n| match n {
                Node::Split { left, right, .. } => *left as usize >= len || *right as usize >= len,
                Node::Leaf { .. } => false,
            });
            if dangling {
                return Err(parse_err(0, "child index out of range"));
            }
        }
        Ok(Self { trees, feature_count, target_min, target_max })
    }
}

impl Regressor for RegressionForest {
    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn predict(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.feature_count);
        self.predict_unchecked(row)
    }
}

impl Learner for ForestParams {
    type Model = RegressionForest;

    fn fit(&self, features: &FeatureMatrix, targets: &[f64]) -> Result<RegressionForest, FitError> {
        RegressionForest::fit(features, targets, self)
    }
}

/// Free-function form of [`RegressionForest::fit`].
pub fn fit_regression_forest(
    features: &FeatureMatrix,
    targets: &[f64],
    params: &ForestParams,
) -> Result<RegressionForest, FitError> {
    RegressionForest::fit(features, targets, params)
}

/// Free-function form of [`RegressionForest::predict`].
pub fn predict_forest(forest: &RegressionForest, x: &[f64]) -> Result<f64, FitError> {
    forest.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_row_is_a_leaf() {
        let x = matrix(&[&[0.3, 2.0]]);
        let f = RegressionForest::fit(&x, &[7.5], &ForestParams::default()).unwrap();
        assert!(f.trees().iter().all(Tree::is_single_leaf));
        assert_eq!(f.predict(&[100.0, -3.0]).unwrap(), 7.5);
    }

    #[test]
    fn constant_targets_predict_exactly() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.1]).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let f = RegressionForest::fit(&x, &[0.1; 50], &ForestParams::default()).unwrap();
        for v in [-10.0, 0.0, 2.45, 99.0] {
            assert_eq!(f.predict(&[v]).unwrap(), 0.1);
        }
    }

    #[test]
    fn perfect_step_is_found() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..50 {
            rows.push(vec![-1.0]);
            y.push(0.0);
            rows.push(vec![1.0]);
            y.push(1.0);
        }
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let params = ForestParams { bootstrap: false, min_samples_leaf: 1, n_trees: 5, ..Default::default() };
        let f = RegressionForest::fit(&x, &y, &params).unwrap();
        assert_eq!(f.predict(&[-1.0]).unwrap(), 0.0);
        assert_eq!(f.predict(&[1.0]).unwrap(), 1.0);
        let Node::Split { threshold, .. } = f.trees()[0].nodes[0] else { panic!("root must split") };
        assert_eq!(threshold, 0.0);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // Two identical columns: the split must use feature 0.
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| f64::from(u8::from(i >= 10))).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let params = ForestParams { bootstrap: false, n_trees: 1, min_samples_leaf: 1, ..Default::default() };
        let f = RegressionForest::fit(&x, &y, &params).unwrap();
        let Node::Split { feature, threshold, .. } = f.trees()[0].nodes[0] else { panic!() };
        assert_eq!((feature, threshold), (0, 9.5));
    }

    #[test]
    fn errors() {
        let empty = FeatureMatrix::new(vec![], 0, 2).unwrap();
        assert_eq!(RegressionForest::fit(&empty, &[], &ForestParams::default()), Err(FitError::Empty));
        let x = matrix(&[&[1.0], &[2.0]]);
        assert!(matches!(
            RegressionForest::fit(&x, &[1.0], &ForestParams::default()),
            Err(FitError::DimensionMismatch { .. })
        ));
        let f = RegressionForest::fit(&x, &[1.0, 2.0], &ForestParams::default()).unwrap();
        assert!(matches!(f.predict(&[1.0, 2.0]), Err(FitError::DimensionMismatch { .. })));
        let bad = matrix(&[&[f64::NAN]]);
        assert_eq!(
            RegressionForest::fit(&bad, &[1.0], &ForestParams::default()),
            Err(FitError::NonFinite { row: 0 })
        );
    }

    #[test]
    fn max_depth_limits_growth() {
        let rows: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let params = ForestParams {
            bootstrap: false,
            n_trees: 1,
            min_samples_leaf: 1,
            max_depth: Some(2),
            ..Default::default()
        };
        let f = RegressionForest::fit(&x, &y, &params).unwrap();
        assert_eq!(f.trees()[0].node_count(), 7);
    }

    #[test]
    fn text_round_trip() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 * 0.37, (i % 7) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| libm::sin(r[0]) + r[1]).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let params = ForestParams { n_trees: 4, feature_fraction: 0.5, ..Default::default() };
        let f = RegressionForest::fit(&x, &y, &params).unwrap();
        let g = RegressionForest::from_text(&f.to_text()).unwrap();
        assert_eq!(f, g);
        assert!(RegressionForest::from_text("forest features=1 trees=1 min=0 max=1\n0 0 split 3 0.5 1 2\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn predictions_stay_in_target_range(
            data in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.0f64..1.0), 1..60),
            probe in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..10),
            seed in any::<u64>(),
        ) {
            let rows: Vec<Vec<f64>> = data.iter().map(|&(a, b, _)| vec![a, b]).collect();
            let y: Vec<f64> = data.iter().map(|&(_, _, t)| t).collect();
            let x = FeatureMatrix::from_rows(&rows).unwrap();
            let params = ForestParams {
                n_trees: 10,
                min_samples_leaf: 1,
                feature_fraction: 0.5,
                seed: RngStream::new(seed, 0),
                ..Default::default()
            };
            let f = RegressionForest::fit(&x, &y, &params).unwrap();
            let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for (a, b) in probe {
                let v = f.predict(&[a, b]).unwrap();
                prop_assert!(lo <= v && v <= hi);
            }
            let again = RegressionForest::fit(&x, &y, &params).unwrap();
            prop_assert_eq!(f, again);
        }
    }
}
