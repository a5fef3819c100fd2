//! Second-order gradient-boosted regression trees.
//!
//! Each round fits one tree to the per-row gradient and Hessian of the loss
//! at the current raw scores. Splits are found by exact greedy search over
//! midpoints of consecutive distinct feature values, scoring
//!
//! ```text
//! gain = 1/2 [ G_L^2/(H_L+l2) + G_R^2/(H_R+l2) - G^2/(H+l2) ]
//! ```
//!
//! and leaves take the Newton value `-G/(H+l2)`. Trees grow level by level;
//! the split search runs per feature in parallel and is reduced in feature
//! order, so results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::loss::Loss;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 120,
            learning_rate: 0.3,
            l2: 0.5,
            max_depth: 5,
            min_child_weight: 1.0,
            loss: Loss::Squared,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2 >= 0.0) || !(self.min_child_weight >= 0.0) {
            return Err(Error::Config("l2 and min_child_weight must be >= 0".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be positive".into()));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        leaf: f64,
    },
}

/// A binary tree stored as a node array rooted at index 0. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { leaf } => return leaf,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

/// Trained model: `raw(x) = base_score + learning_rate * sum_t leaf_t(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub config: TrainConfig,
    pub base_score: f64,
    pub learning_rate: f64,
    pub loss: Loss,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub schema_hash: String,
    pub trees: Vec<Tree>,
    /// Mean training loss before boosting and after each round.
    pub train_loss: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub raw: f64,
    /// Predicted target mean: `raw` for squared loss, `exp(raw)` for Tweedie.
    pub mean: f64,
}

impl Ensemble {
    /// Attaches feature names and schema hash; the dimensions must agree.
    pub fn with_schema(mut self, schema: &FeatureSchema) -> Result<Self> {
        if schema.dim() != self.n_features {
            return Err(Error::Argument(format!(
                "schema has {} features, model has {}",
                schema.dim(),
                self.n_features
            )));
        }
        self.feature_names = schema.names.clone();
        self.schema_hash = schema.hash();
        Ok(self)
    }

    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.base_score
            + self.learning_rate * self.trees.iter().map(|t| t.leaf_value(x)).sum::<f64>()
    }
}

/// Best split of one node along one feature.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

#[derive(Debug, Clone, Copy)]
struct NodeStats {
    g: f64,
    h: f64,
}

fn leaf_weight(s: NodeStats, l2: f64) -> f64 {
    -s.g / (s.h + l2)
}

/// Split gain for the given left/right sums.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, l2: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2) - g * g / (h + l2))
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    /// Per feature, `(row, value)` pairs in ascending value order.
    sorted: &'a [Vec<(u32, f64)>],
    cfg: &'a TrainConfig,
}

impl Grower<'_> {
    /// Best split per frontier slot along feature `f`.
    fn scan_feature(
        &self,
        f: usize,
        rows: &[(f64, f64, u32)],
        frontier: &[NodeStats],
    ) -> Vec<Option<Candidate>> {
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        let mut acc = vec![(0.0f64, 0.0f64, f64::NAN); frontier.len()];
        for &(row, v) in &self.sorted[f] {
            let (g, h, slot) = rows[row as usize];
            if slot == u32::MAX {
                continue;
            }
            let slot = slot as usize;
            let (gl, hl, last) = acc[slot];
            if v > last {
                let total = frontier[slot];
                let (gr, hr) = (total.g - gl, total.h - hl);
                if hl >= self.cfg.min_child_weight && hr >= self.cfg.min_child_weight {
                    let gain = split_gain(gl, hl, gr, hr, self.cfg.l2);
                    if gain > 0.0 && best[slot].is_none_or(|b| gain > b.gain) {
                        best[slot] = Some(Candidate { feature: f, threshold: midpoint(last, v), gain });
                    }
                }
            }
            acc[slot] = (gl + g, hl + h, v);
        }
        best
    }

    fn grow(&self, grad: &[(f64, f64)]) -> (Tree, Vec<u32>) {
        let n = self.x.len();
        let d = self.x[0].len();
        let root = grad.iter().fold(NodeStats { g: 0.0, h: 0.0 }, |s, &(g, h)| NodeStats {
            g: s.g + g,
            h: s.h + h,
        });
        let mut nodes = vec![Node::Leaf { leaf: 0.0 }];
        let mut stats = vec![root];
        let mut node_of_row = vec![0u32; n];
        let mut frontier: Vec<usize> = vec![0];

        for _depth in 0..self.cfg.max_depth {
            if frontier.is_empty() {
                break;
            }
            let mut slot_of_node = vec![u32::MAX; nodes.len()];
            for (s, &node) in frontier.iter().enumerate() {
                slot_of_node[node] = s as u32;
            }
            let rows: Vec<(f64, f64, u32)> = node_of_row
                .iter()
                .zip(grad)
                .map(|(&nd, &(g, h))| (g, h, slot_of_node[nd as usize]))
                .collect();
            let frontier_stats: Vec<NodeStats> = frontier.iter().map(|&nd| stats[nd]).collect();

            let per_feature: Vec<Vec<Option<Candidate>>> = (0..d)
                .into_par_iter()
                .map(|f| self.scan_feature(f, &rows, &frontier_stats))
                .collect();

            let mut next_frontier = Vec::new();
            let mut children = vec![None; frontier.len()];
            for (slot, &node) in frontier.iter().enumerate() {
                let mut best: Option<Candidate> = None;
                for cand in per_feature.iter().filter_map(|c| c[slot]) {
                    if best.is_none_or(|b| cand.gain > b.gain) {
                        best = Some(cand);
                    }
                }
                let Some(best) = best else { continue };
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { leaf: 0.0 });
                nodes.push(Node::Leaf { leaf: 0.0 });
                stats.push(NodeStats { g: 0.0, h: 0.0 });
                stats.push(NodeStats { g: 0.0, h: 0.0 });
                nodes[node] = Node::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    left,
                    right,
                    gain: best.gain,
                };
                children[slot] = Some((best.feature, best.threshold, left, right));
                next_frontier.push(left);
                next_frontier.push(right);
            }
            for (row, nd) in node_of_row.iter_mut().enumerate() {
                let slot = rows[row].2;
                if slot == u32::MAX {
                    continue;
                }
                if let Some((f, thr, left, right)) = children[slot as usize] {
                    let child = if self.x[row][f] <= thr { left } else { right };
                    *nd = child as u32;
                    let (g, h) = grad[row];
                    stats[child].g += g;
                    stats[child].h += h;
                }
            }
            frontier = next_frontier;
        }

        for (node, s) in nodes.iter_mut().zip(&stats) {
            if let Node::Leaf { leaf } = node {
                *leaf = leaf_weight(*s, self.cfg.l2);
            }
        }
        (Tree { nodes }, node_of_row)
    }
}

fn check_inputs(x: &[Vec<f64>], z: &[f64], loss: &Loss) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Argument("no training rows".into()));
    }
    if x.len() != z.len() {
        return Err(Error::Argument(format!(
            "{} feature rows but {} targets",
            x.len(),
            z.len()
        )));
    }
    let d = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Argument(format!("row {i} has {} features, expected {d}", row.len())));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("row {i} has a non-finite feature ({v})")));
        }
    }
    loss.check_targets(z)?;
    Ok(d)
}

fn mean_loss(loss: &Loss, z: &[f64], scores: &[f64]) -> f64 {
    z.iter().zip(scores).map(|(&t, &s)| loss.value(t, s)).sum::<f64>() / z.len() as f64
}

/// Fits an ensemble to targets `z` (already in transformed space).
pub fn train(x: &[Vec<f64>], z: &[f64], cfg: &TrainConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let d = check_inputs(x, z, &cfg.loss)?;
    let base_score = cfg.loss.base_score(z)?;

    let sorted: Vec<Vec<(u32, f64)>> = (0..d)
        .into_par_iter()
        .map(|f| {
            let mut col: Vec<(u32, f64)> = x.iter().enumerate().map(|(i, r)| (i as u32, r[f])).collect();
            col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            col
        })
        .collect();
    let grower = Grower { x, sorted: &sorted, cfg };

    let mut scores = vec![base_score; x.len()];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut train_loss = vec![mean_loss(&cfg.loss, z, &scores)];
    for _ in 0..cfg.n_trees {
        let grad: Vec<(f64, f64)> = z
            .iter()
            .zip(&scores)
            .map(|(&t, &s)| cfg.loss.grad_hess(t, s))
            .collect();
        let (tree, leaf_of_row) = grower.grow(&grad);
        for (s, &leaf) in scores.iter_mut().zip(&leaf_of_row) {
            if let Node::Leaf { leaf } = tree.nodes[leaf as usize] {
                *s += cfg.learning_rate * leaf;
            }
        }
        train_loss.push(mean_loss(&cfg.loss, z, &scores));
        trees.push(tree);
    }

    Ok(Ensemble {
        config: cfg.clone(),
        base_score,
        learning_rate: cfg.learning_rate,
        loss: cfg.loss,
        n_features: d,
        feature_names: (0..d).map(|i| format!("f{i}")).collect(),
        schema_hash: String::new(),
        trees,
        train_loss,
    })
}

pub fn predict(e: &Ensemble, x: &[f64]) -> Result<Prediction> {
    if x.len() != e.n_features {
        return Err(Error::Argument(format!(
            "expected {} features, got {}",
            e.n_features,
            x.len()
        )));
    }
    let raw = e.raw_score(x);
    Ok(Prediction { raw, mean: e.loss.mean(raw) })
}

pub fn predict_batch(e: &Ensemble, x: &[Vec<f64>]) -> Result<Vec<Prediction>> {
    x.iter().map(|row| predict(e, row)).collect()
}

/// Total split gain per feature name. Features never split on are absent.
pub fn feature_gain_report(e: &Ensemble) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for tree in &e.trees {
        for node in &tree.nodes {
            if let Node::Split { feature, gain, .. } = *node {
                let name = e
                    .feature_names
                    .get(feature)
                    .cloned()
                    .unwrap_or_else(|| format!("f{feature}"));
                *out.entry(name).or_insert(0.0) += gain;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, ((i * 5) % 8) as f64]).collect();
        let z = vec![1.0, 1.2, 0.9, 1.1, 3.0, 3.2, 2.9, 3.1];
        (x, z)
    }

    #[test]
    fn constant_targets_squared() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let z = vec![2.5; 10];
        let e = train(&x, &z, &TrainConfig { n_trees: 5, ..Default::default() }).unwrap();
        assert_eq!(e.base_score, 2.5);
        for t in &e.trees {
            assert!(t.nodes.iter().all(|n| matches!(n, Node::Leaf { leaf } if *leaf == 0.0)));
        }
        for row in &x {
            assert_eq!(predict(&e, row).unwrap().raw, 2.5);
        }
    }

    #[test]
    fn empty_ensemble_predicts_base() {
        let (x, z) = toy();
        let e = train(&x, &z, &TrainConfig { n_trees: 0, ..Default::default() }).unwrap();
        assert_eq!(predict(&e, &x[0]).unwrap().raw, e.base_score);
        assert!(feature_gain_report(&e).is_empty());
    }

    #[test]
    fn single_stump_is_hand_traceable() {
        let (x, z) = toy();
        let cfg = TrainConfig { n_trees: 1, max_depth: 1, learning_rate: 1.0, l2: 0.0, min_child_weight: 0.0, ..Default::default() };
        let e = train(&x, &z, &cfg).unwrap();
        let Node::Split { feature, threshold, .. } = e.trees[0].nodes[0] else {
            panic!("expected split");
        };
        assert_eq!((feature, threshold), (0, 3.5));
        let low = (1.0 + 1.2 + 0.9 + 1.1) / 4.0;
        assert!((predict(&e, &[0.0, 0.0]).unwrap().raw - low).abs() < 1e-12);
        let report = feature_gain_report(&e);
        assert_eq!(report.keys().collect::<Vec<_>>(), vec!["f0"]);
    }

    #[test]
    fn input_errors() {
        let cfg = TrainConfig::default();
        assert!(matches!(train(&[], &[], &cfg), Err(Error::Argument(_))));
        assert!(matches!(train(&[vec![f64::NAN]], &[1.0], &cfg), Err(Error::Data(_))));
        assert!(train(&[vec![1.0]], &[1.0, 2.0], &cfg).is_err());
        let e = train(&[vec![1.0], vec![2.0]], &[1.0, 2.0], &cfg).unwrap();
        assert!(predict(&e, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn huge_l2_shrinks_to_base() {
        let (x, z) = toy();
        let cfg = TrainConfig { n_trees: 5, l2: 1e12, min_child_weight: 0.0, ..Default::default() };
        let e = train(&x, &z, &cfg).unwrap();
        for row in &x {
            assert!((predict(&e, row).unwrap().raw - e.base_score).abs() < 1e-9);
        }
    }

    #[test]
    fn node_json_shape() {
        let split = Node::Split { feature: 1, threshold: 0.5, left: 1, right: 2, gain: 3.0 };
        let s = serde_json::to_string(&split).unwrap();
        assert_eq!(s, r#"{"feature":1,"threshold":0.5,"left":1,"right":2,"gain":3.0}"#);
        let leaf: Node = serde_json::from_str(r#"{"leaf":-0.25}"#).unwrap();
        assert_eq!(leaf, Node::Leaf { leaf: -0.25 });
    }
}
