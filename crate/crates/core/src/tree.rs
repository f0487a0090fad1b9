//! CART classification trees stored as flat node arrays.

use crate::dataset::Dataset;
use crate::rng::StreamRng;

/// `feature_index` value marking a leaf.
pub const LEAF: i32 = -1;

/// One node of a [`DecisionTree`].
///
/// Internal nodes send a row left iff `row[feature_index] <= threshold`.
/// Every node keeps the class counts of the training samples that reached
/// it; a leaf predicts their argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub feature_index: i32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub class_counts: Vec<u32>,
}

impl TreeNode {
    pub fn leaf(class_counts: Vec<u32>) -> Self {
        Self {
            feature_index: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            class_counts,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature_index == LEAF
    }

    /// Majority class; the lowest class id wins ties.
    pub fn majority(&self) -> u32 {
        argmax_lowest(&self.class_counts)
    }
}

/// Index of the largest count, lowest index on ties.
pub(crate) fn argmax_lowest(counts: &[u32]) -> u32 {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best as u32
}

/// A trained classification tree. The root is `nodes[0]` and children
/// always sit at higher indices than their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl DecisionTree {
    /// Leaf reached by `row`. The caller guarantees `row.len() == n_features`.
    pub fn leaf_for(&self, row: &[f64]) -> &TreeNode {
        let mut node = &self.nodes[0];
        while !node.is_leaf() {
            let next = if row[node.feature_index as usize] <= node.threshold {
                node.left
            } else {
                node.right
            };
            node = &self.nodes[next as usize];
        }
        node
    }

    pub fn predict(&self, row: &[f64]) -> u32 {
        self.leaf_for(row).majority()
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            max = max.max(depth[i]);
            if !n.is_leaf() {
                depth[n.left as usize] = depth[i] + 1;
                depth[n.right as usize] = depth[i] + 1;
            }
        }
        max
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Checks the structural invariants: forward child pointers, every node
    /// reachable exactly once, features and count vectors in range.
    pub fn validate(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let len = self.nodes.len();
        let mut parents = vec![0u32; len];
        for (i, n) in self.nodes.iter().enumerate() {
            if n.class_counts.len() != self.n_classes {
                return Err(format!("node {i}: {} class counts", n.class_counts.len()));
            }
            if n.is_leaf() {
                if n.class_counts.iter().map(|&c| c as u64).sum::<u64>() == 0 {
                    return Err(format!("leaf {i} has no samples"));
                }
                continue;
            }
            if n.feature_index < 0 || n.feature_index as usize >= self.n_features {
                return Err(format!(
                    "node {i}: feature {} out of range",
                    n.feature_index
                ));
            }
            if n.threshold.is_nan() {
                return Err(format!("node {i}: NaN threshold"));
            }
            for child in [n.left, n.right] {
                let c = child as usize;
                if c <= i || c >= len {
                    return Err(format!("node {i}: child {child} out of range"));
                }
                parents[c] += 1;
            }
        }
        if parents[0] != 0 {
            return Err("root has a parent".into());
        }
        if let Some(i) = parents[1..].iter().position(|&p| p != 1) {
            return Err(format!("node {} has {} parents", i + 1, parents[i + 1]));
        }
        Ok(())
    }
}

/// Growth limits for one tree.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowConfig {
    pub max_features: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

/// Best split found at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted Gini impurity of the two children.
    pub impurity: f64,
}

/// Gini impurity of a count vector.
pub fn gini(counts: &[u32]) -> f64 {
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    if n == 0 {
        return 0.0;
    }
    let sq: u64 = counts.iter().map(|&c| c as u64 * c as u64).sum();
    1.0 - sq as f64 / (n as f64 * n as f64)
}

/// Reusable buffers for split search.
pub(crate) struct Splitter<'a> {
    data: &'a Dataset,
    order: Vec<(f64, u32)>,
    left: Vec<u64>,
    right: Vec<u64>,
}

impl<'a> Splitter<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        Self {
            data,
            order: Vec::new(),
            left: vec![0; data.n_classes()],
            right: vec![0; data.n_classes()],
        }
    }

    /// Best threshold on one feature, or `None` if the feature is constant
    /// over `samples`.
    ///
    /// Candidate thresholds are midpoints between consecutive distinct
    /// values. Among equal impurities the smallest threshold wins.
    pub fn best_on_feature(&mut self, samples: &[usize], feature: usize) -> Option<Split> {
        let data = self.data;
        self.order.clear();
        self.order.extend(
            samples
                .iter()
                .map(|&s| (data.value(s, feature), data.labels()[s])),
        );
        self.order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let n = self.order.len();
        if n < 2 || self.order[0].0 == self.order[n - 1].0 {
            return None;
        }

        self.left.iter_mut().for_each(|c| *c = 0);
        self.right.iter_mut().for_each(|c| *c = 0);
        for &(_, l) in &self.order {
            self.right[l as usize] += 1;
        }
        let mut sq_left: u64 = 0;
        let mut sq_right: u64 = self.right.iter().map(|c| c * c).sum();

        // Maximise sq_left/n_left + sq_right/n_right, which minimises the
        // weighted child impurity.
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n - 1 {
            let class = self.order[i].1 as usize;
            sq_left += 2 * self.left[class] + 1;
            sq_right -= 2 * self.right[class] - 1;
            self.left[class] += 1;
            self.right[class] -= 1;
            if self.order[i].0 == self.order[i + 1].0 {
                continue;
            }
            let n_left = (i + 1) as f64;
            let n_right = (n - i - 1) as f64;
            let score = sq_left as f64 / n_left + sq_right as f64 / n_right;
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, i));
            }
        }
        let (score, i) = best?;
        let lo = self.order[i].0;
        let hi = self.order[i + 1].0;
        let mut threshold = lo + (hi - lo) / 2.0;
        if threshold >= hi || threshold.is_infinite() {
            threshold = lo;
        }
        Some(Split {
            feature,
            threshold,
            impurity: (n as f64 - score) / n as f64,
        })
    }
}

fn counts_of(data: &Dataset, samples: &[usize]) -> Vec<u32> {
    let mut counts = vec![0u32; data.n_classes()];
    for &s in samples {
        counts[data.labels()[s] as usize] += 1;
    }
    counts
}

/// Best split at the root over every feature, lowest feature index on ties.
/// Used to check split optimality and by callers that want a single stump.
pub fn best_root_split(data: &Dataset) -> Option<Split> {
    let samples: Vec<usize> = (0..data.n_samples()).collect();
    let mut splitter = Splitter::new(data);
    let mut best: Option<Split> = None;
    for f in 0..data.n_features() {
        if let Some(s) = splitter.best_on_feature(&samples, f) {
            if best.is_none_or(|b| s.impurity < b.impurity) {
                best = Some(s);
            }
        }
    }
    best
}

/// Grows one tree on `samples` (row indices, repeats allowed).
pub(crate) fn grow(
    data: &Dataset,
    samples: Vec<usize>,
    config: GrowConfig,
    rng: &mut StreamRng,
) -> DecisionTree {
    let n_features = data.n_features();
    let mut splitter = Splitter::new(data);
    let mut features: Vec<usize> = (0..n_features).collect();
    let mut nodes = vec![TreeNode::leaf(counts_of(data, &samples))];
    let mut stack = vec![(0usize, samples, 0usize)];

    while let Some((index, samples, depth)) = stack.pop() {
        let counts = &nodes[index].class_counts;
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure
            || samples.len() < config.min_samples_split.max(2)
            || config.max_depth.is_some_and(|d| depth >= d)
        {
            continue;
        }

        // Draw features without replacement until `max_features` of them
        // turn out to be non-constant here.
        let mut best: Option<Split> = None;
        let mut informative = 0;
        for k in 0..n_features {
            let j = k + rng.below(n_features - k);
            features.swap(k, j);
            if let Some(split) = splitter.best_on_feature(&samples, features[k]) {
                informative += 1;
                let better = match best {
                    None => true,
                    Some(b) => {
                        split.impurity < b.impurity
                            || (split.impurity == b.impurity && split.feature < b.feature)
                    }
                };
                if better {
                    best = Some(split);
                }
                if informative >= config.max_features {
                    break;
                }
            }
        }
        let Some(split) = best else { continue };

        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&s| data.value(s, split.feature) <= split.threshold);
        debug_assert!(!left.is_empty() && !right.is_empty());

        let left_index = nodes.len();
        let right_index = left_index + 1;
        nodes.push(TreeNode::leaf(counts_of(data, &left)));
        nodes.push(TreeNode::leaf(counts_of(data, &right)));
        let node = &mut nodes[index];
        node.feature_index = split.feature as i32;
        node.threshold = split.threshold;
        node.left = left_index as u32;
        node.right = right_index as u32;

        stack.push((right_index, right, depth + 1));
        stack.push((left_index, left, depth + 1));
    }

    DecisionTree {
        nodes,
        n_features,
        n_classes: data.n_classes(),
    }
}
