//! Softmax regression trees: region geometry, split scoring, softmax split
//! selection and growth to fixed depth.
//!
//! A tree of depth `d` is stored in heap order: internal nodes occupy heap
//! indices `1..2^d` (root at 1, children of `i` at `2i` and `2i+1`) and the
//! leaf with word `w` in `{0,1}^d` occupies slot `w` of the leaf arrays.

use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::Config;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::rng::{tag, RngStream};

/// Axis-aligned hyperrectangle, half-open except at the top face: `x` is
/// contained iff `lo^j <= x^j < hi^j`, with `<=` on coordinates where
/// `hi^j = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Region {
    /// The root region `[0,1]^p`.
    pub fn unit(p: usize) -> Self {
        Region {
            lo: vec![0.0; p],
            hi: vec![1.0; p],
        }
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lo).zip(&self.hi).all(|((&xj, &lo), &hi)| {
            xj >= lo && (xj < hi || (hi == 1.0 && xj <= 1.0))
        })
    }

    /// Splits on coordinate `j` at absolute threshold `tau`, returning the
    /// `(< tau, >= tau)` children.
    pub fn split(&self, j: usize, tau: f64) -> (Region, Region) {
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[j] = tau;
        right.lo[j] = tau;
        (left, right)
    }
}

/// A candidate split `(j, u)`: coordinate index plus relative position in
/// `(0,1)` within the region's extent on that coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    /// Coordinate index, zero-based.
    pub feature: usize,
    /// Relative position `u` in `(0,1)`.
    pub rel: f64,
}

impl SplitCandidate {
    /// The absolute threshold `lo^j + u (hi^j - lo^j)` within `region`.
    pub fn threshold(&self, region: &Region) -> f64 {
        let lo = region.lo[self.feature];
        let hi = region.hi[self.feature];
        lo + self.rel * (hi - lo)
    }
}

/// Globally normalized mean squared error of `values` over the points of
/// `dataset` inside `region`: `(1/n) sum_{i in A} (v_i - mean_A)^2`.
/// Regions holding fewer than two points contribute zero.
pub fn region_mse(region: &Region, dataset: &Dataset, values: &[f64]) -> f64 {
    assert_eq!(values.len(), dataset.n());
    let mut count = 0usize;
    let mut sum = 0.0;
    for i in 0..dataset.n() {
        if region.contains(dataset.point(i)) {
            count += 1;
            sum += values[i];
        }
    }
    if count < 2 {
        return 0.0;
    }
    let mean = sum / count as f64;
    let mut ss = 0.0;
    for i in 0..dataset.n() {
        if region.contains(dataset.point(i)) {
            ss += (values[i] - mean) * (values[i] - mean);
        }
    }
    ss / dataset.n() as f64
}

/// Score (mse decrease) of a candidate split:
/// `(n(A0)/n)(mean(A0)-mean(A))^2 + (n(A1)/n)(mean(A1)-mean(A))^2`,
/// with empty children contributing zero.
pub fn split_score(
    candidate: &SplitCandidate,
    region: &Region,
    dataset: &Dataset,
    values: &[f64],
) -> f64 {
    assert_eq!(values.len(), dataset.n());
    let members: Vec<usize> = (0..dataset.n())
        .filter(|&i| region.contains(dataset.point(i)))
        .collect();
    let tau = candidate.threshold(region);
    score_members(&members, candidate.feature, tau, dataset, values)
}

fn score_members(
    members: &[usize],
    feature: usize,
    tau: f64,
    dataset: &Dataset,
    values: &[f64],
) -> f64 {
    let n = dataset.n() as f64;
    let (mut n0, mut s0, mut n1, mut s1) = (0usize, 0.0f64, 0usize, 0.0f64);
    for &i in members {
        if dataset.feature(i, feature) < tau {
            n0 += 1;
            s0 += values[i];
        } else {
            n1 += 1;
            s1 += values[i];
        }
    }
    let total = n0 + n1;
    if total == 0 {
        return 0.0;
    }
    let mean = (s0 + s1) / total as f64;
    let mut score = 0.0;
    if n0 > 0 {
        let d = s0 / n0 as f64 - mean;
        score += n0 as f64 / n * d * d;
    }
    if n1 > 0 {
        let d = s1 / n1 as f64 - mean;
        score += n1 as f64 / n * d * d;
    }
    score
}

/// Samples an index with probability proportional to `exp(beta * score)`,
/// with the maximum subtracted before exponentiation. `beta = inf` returns
/// the smallest index attaining the maximum, deterministically.
pub fn softmax_select<R: Rng>(scores: &[f64], beta: f64, rng: &mut R) -> usize {
    assert!(!scores.is_empty());
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if beta.is_infinite() {
        return scores.iter().position(|&s| s == max).unwrap();
    }
    let weights: Vec<f64> = scores.iter().map(|&s| (beta * (s - max)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let target: f64 = rng.gen::<f64>() * total;
    let mut cum = 0.0;
    for (k, w) in weights.iter().enumerate() {
        cum += w;
        if target < cum {
            return k;
        }
    }
    scores.len() - 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SplitNode {
    feature: usize,
    threshold: f64,
}

/// The splitting structure of a depth-`d` tree: one split per internal node
/// and the `2^d` leaf regions partitioning `[0,1]^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreePartition {
    p: usize,
    depth: usize,
    splits: Vec<SplitNode>,     // heap index i stored at i-1, i in 1..2^d
    leaf_regions: Vec<Region>,  // indexed by leaf word bits
}

impl TreePartition {
    /// Builds a partition from absolute splits `(feature, threshold)` given in
    /// heap order (root first, then level by level).
    pub fn from_splits(p: usize, depth: usize, splits: &[(usize, f64)]) -> Result<Self> {
        let n_internal = (1usize << depth) - 1;
        if splits.len() != n_internal {
            return Err(Error::InvalidInput(format!(
                "expected {n_internal} splits for depth {depth}, got {}",
                splits.len()
            )));
        }
        let nodes: Vec<SplitNode> = splits
            .iter()
            .map(|&(feature, threshold)| SplitNode { feature, threshold })
            .collect();
        let leaf_regions = Self::build_regions(p, depth, &nodes)?;
        Ok(TreePartition {
            p,
            depth,
            splits: nodes,
            leaf_regions,
        })
    }

    /// Builds a partition from a relative splitting scheme `(j, u)` in heap
    /// order, resolving each threshold against the node's region.
    pub fn from_relative_scheme(p: usize, depth: usize, scheme: &[(usize, f64)]) -> Result<Self> {
        let n_internal = (1usize << depth) - 1;
        if scheme.len() != n_internal {
            return Err(Error::InvalidInput(format!(
                "expected {n_internal} scheme entries for depth {depth}, got {}",
                scheme.len()
            )));
        }
        let mut nodes = vec![
            SplitNode {
                feature: 0,
                threshold: 0.0,
            };
            n_internal
        ];
        let mut regions = vec![Region::unit(p)];
        for level in 0..depth {
            let mut next = Vec::with_capacity(regions.len() * 2);
            for (k, region) in regions.iter().enumerate() {
                let heap = (1 << level) + k;
                let (j, u) = scheme[heap - 1];
                if j >= p || !(u > 0.0 && u < 1.0) {
                    return Err(Error::InvalidInput(format!("bad scheme entry at node {heap}")));
                }
                let cand = SplitCandidate { feature: j, rel: u };
                let tau = cand.threshold(region);
                nodes[heap - 1] = SplitNode {
                    feature: j,
                    threshold: tau,
                };
                let (l, r) = region.split(j, tau);
                next.push(l);
                next.push(r);
            }
            regions = next;
        }
        Ok(TreePartition {
            p,
            depth,
            splits: nodes,
            leaf_regions: regions,
        })
    }

    fn build_regions(p: usize, depth: usize, nodes: &[SplitNode]) -> Result<Vec<Region>> {
        let mut regions = vec![Region::unit(p)];
        for level in 0..depth {
            let mut next = Vec::with_capacity(regions.len() * 2);
            for (k, region) in regions.iter().enumerate() {
                let heap = (1 << level) + k;
                let node = &nodes[heap - 1];
                if node.feature >= p {
                    return Err(Error::InvalidInput(format!(
                        "node {heap} splits on feature {} but p = {p}",
                        node.feature + 1
                    )));
                }
                let (lo, hi) = (region.lo[node.feature], region.hi[node.feature]);
                if !(node.threshold > lo && node.threshold < hi) {
                    return Err(Error::InvalidInput(format!(
                        "node {heap} threshold {} not inside ({lo}, {hi})",
                        node.threshold
                    )));
                }
                let (l, r) = region.split(node.feature, node.threshold);
                next.push(l);
                next.push(r);
            }
            regions = next;
        }
        Ok(regions)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_leaves(&self) -> usize {
        1 << self.depth
    }

    pub fn leaf_region(&self, leaf: usize) -> &Region {
        &self.leaf_regions[leaf]
    }

    /// Split `(feature, threshold)` at a heap index in `1..2^d`.
    pub fn split_at(&self, heap: usize) -> (usize, f64) {
        let node = &self.splits[heap - 1];
        (node.feature, node.threshold)
    }

    /// Index of the leaf whose region contains `x`.
    pub fn leaf_index(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.p || x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Domain(format!("point {x:?} outside [0,1]^{}", self.p)));
        }
        let mut heap = 1usize;
        for _ in 0..self.depth {
            let node = &self.splits[heap - 1];
            heap = 2 * heap + usize::from(x[node.feature] >= node.threshold);
        }
        Ok(heap - self.n_leaves())
    }
}

/// Grows a softmax partition to full depth `d`: at each internal node in
/// breadth-first order, draws `K` i.i.d. candidates uniform on
/// `[1,p] x (0,1)`, scores them against `values` and selects one via softmax.
/// Empty regions are still split (all scores are zero, selection is uniform).
pub fn grow_partition(
    dataset: &Dataset,
    values: &[f64],
    config: &Config,
    stream: RngStream,
) -> TreePartition {
    assert_eq!(values.len(), dataset.n());
    let p = dataset.p();
    let depth = config.depth;
    let n_internal = (1usize << depth) - 1;
    let mut nodes = vec![
        SplitNode {
            feature: 0,
            threshold: 0.0,
        };
        n_internal
    ];
    let mut regions = vec![Region::unit(p)];
    let mut memberships: Vec<Vec<usize>> = vec![(0..dataset.n()).collect()];
    for level in 0..depth {
        let mut next_regions = Vec::with_capacity(regions.len() * 2);
        let mut next_members = Vec::with_capacity(regions.len() * 2);
        for (k, region) in regions.iter().enumerate() {
            let heap = (1 << level) + k;
            let members = &memberships[k];
            let mut rng = stream.child(tag::NODE, heap as u64).rng();
            let mut candidates = Vec::with_capacity(config.k);
            let mut scores = Vec::with_capacity(config.k);
            for _ in 0..config.k {
                let feature = rng.gen_range(0..p);
                let rel: f64 = rng.sample(rand::distributions::Open01);
                let cand = SplitCandidate { feature, rel };
                let tau = cand.threshold(region);
                scores.push(score_members(members, feature, tau, dataset, values));
                candidates.push(cand);
            }
            let chosen = softmax_select(&scores, config.beta, &mut rng);
            let cand = candidates[chosen];
            let tau = cand.threshold(region);
            nodes[heap - 1] = SplitNode {
                feature: cand.feature,
                threshold: tau,
            };
            let (l, r) = region.split(cand.feature, tau);
            let (ml, mr): (Vec<usize>, Vec<usize>) = members
                .iter()
                .partition(|&&i| dataset.feature(i, cand.feature) < tau);
            next_regions.push(l);
            next_regions.push(r);
            next_members.push(ml);
            next_members.push(mr);
        }
        regions = next_regions;
        memberships = next_members;
    }
    TreePartition {
        p,
        depth,
        splits: nodes,
        leaf_regions: regions,
    }
}

/// A grown partition together with leaf values: the base learner output.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedTree {
    partition: TreePartition,
    leaf_values: Vec<f64>,
}

impl FittedTree {
    pub fn new(partition: TreePartition, leaf_values: Vec<f64>) -> Result<Self> {
        if leaf_values.len() != partition.n_leaves() {
            return Err(Error::InvalidInput("leaf value count mismatch".into()));
        }
        Ok(FittedTree {
            partition,
            leaf_values,
        })
    }

    pub fn partition(&self) -> &TreePartition {
        &self.partition
    }

    pub fn leaf_values(&self) -> &[f64] {
        &self.leaf_values
    }

    pub fn depth(&self) -> usize {
        self.partition.depth
    }

    pub fn p(&self) -> usize {
        self.partition.p
    }

    /// Value of the unique leaf containing `x`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.leaf_values[self.partition.leaf_index(x)?])
    }

    /// `max |leaf value|`; the exact sup norm of the tree function.
    pub fn sup_norm(&self) -> f64 {
        self.leaf_values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Fits leaf values as the mean of `values` over each leaf; empty leaves get 0.
pub fn fit_leaf_means(partition: &TreePartition, dataset: &Dataset, values: &[f64]) -> FittedTree {
    let n_leaves = partition.n_leaves();
    let mut sums = vec![0.0; n_leaves];
    let mut counts = vec![0usize; n_leaves];
    for i in 0..dataset.n() {
        let leaf = partition.leaf_index(dataset.point(i)).expect("sample outside [0,1]^p");
        sums[leaf] += values[i];
        counts[leaf] += 1;
    }
    let leaf_values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    FittedTree {
        partition: partition.clone(),
        leaf_values,
    }
}

/// Softmax regression tree: grow on `values`, then set each leaf to the mean
/// of `values` over its points.
pub fn fit_regression_tree(
    dataset: &Dataset,
    values: &[f64],
    config: &Config,
    stream: RngStream,
) -> FittedTree {
    let partition = grow_partition(dataset, values, config, stream);
    fit_leaf_means(&partition, dataset, values)
}

/// Softmax gradient tree: grow on the residuals `r_i = -d1(y_i, F(x_i))`,
/// then set each leaf to the Newton one-step value `-sum d1 / sum d2`.
/// Empty leaves get 0.
pub fn fit_gradient_tree(
    dataset: &Dataset,
    f_values: &[f64],
    loss: Loss,
    config: &Config,
    stream: RngStream,
) -> Result<FittedTree> {
    assert_eq!(f_values.len(), dataset.n());
    let n = dataset.n();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    let mut residuals = vec![0.0; n];
    for i in 0..n {
        let (_, g, h) = loss.eval(dataset.response(i), f_values[i])?;
        d1[i] = g;
        d2[i] = h;
        residuals[i] = -g;
    }
    let partition = grow_partition(dataset, &residuals, config, stream);
    let n_leaves = partition.n_leaves();
    let mut num = vec![0.0; n_leaves];
    let mut den = vec![0.0; n_leaves];
    let mut counts = vec![0usize; n_leaves];
    for i in 0..n {
        let leaf = partition.leaf_index(dataset.point(i))?;
        num[leaf] += d1[i];
        den[leaf] += d2[i];
        counts[leaf] += 1;
    }
    let leaf_values = (0..n_leaves)
        .map(|v| if counts[v] > 0 { -num[v] / den[v] } else { 0.0 })
        .collect();
    Ok(FittedTree {
        partition,
        leaf_values,
    })
}

// --- JSON schema: {p, depth, nodes:[{word, j, tau}], leaves:[{word, value}]} ---

fn word_string(heap: usize) -> String {
    // bits below the leading 1 of the heap index, msb first
    let len = usize::BITS - heap.leading_zeros() - 1;
    (0..len)
        .rev()
        .map(|b| if heap >> b & 1 == 1 { '1' } else { '0' })
        .collect()
}

fn parse_word(word: &str) -> Option<usize> {
    let mut heap = 1usize;
    for c in word.chars() {
        heap = 2 * heap
            + match c {
                '0' => 0,
                '1' => 1,
                _ => return None,
            };
    }
    Some(heap)
}

#[derive(Serialize, Deserialize)]
struct NodeJson {
    word: String,
    j: usize, // one-based coordinate index
    tau: f64,
}

#[derive(Serialize, Deserialize)]
struct LeafJson {
    word: String,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct TreeJson {
    p: usize,
    depth: usize,
    nodes: Vec<NodeJson>,
    leaves: Vec<LeafJson>,
}

impl Serialize for FittedTree {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let depth = self.partition.depth;
        let nodes = (1..(1usize << depth))
            .map(|heap| {
                let (feature, threshold) = self.partition.split_at(heap);
                NodeJson {
                    word: word_string(heap),
                    j: feature + 1,
                    tau: threshold,
                }
            })
            .collect();
        let leaves = self
            .leaf_values
            .iter()
            .enumerate()
            .map(|(w, &value)| LeafJson {
                word: word_string((1 << depth) + w),
                value,
            })
            .collect();
        TreeJson {
            p: self.partition.p,
            depth,
            nodes,
            leaves,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FittedTree {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = TreeJson::deserialize(deserializer)?;
        let n_internal = (1usize << raw.depth) - 1;
        let n_leaves = 1usize << raw.depth;
        if raw.nodes.len() != n_internal || raw.leaves.len() != n_leaves {
            return Err(D::Error::custom("node/leaf count inconsistent with depth"));
        }
        let mut splits = vec![(0usize, 0.0f64); n_internal];
        for node in &raw.nodes {
            let heap = parse_word(&node.word)
                .filter(|&h| h >= 1 && h <= n_internal)
                .ok_or_else(|| D::Error::custom(format!("bad node word {:?}", node.word)))?;
            if node.j == 0 || node.j > raw.p {
                return Err(D::Error::custom("node coordinate out of range"));
            }
            splits[heap - 1] = (node.j - 1, node.tau);
        }
        let partition = TreePartition::from_splits(raw.p, raw.depth, &splits)
            .map_err(|e| D::Error::custom(e.to_string()))?;
        let mut leaf_values = vec![0.0; n_leaves];
        for leaf in &raw.leaves {
            let heap = parse_word(&leaf.word)
                .filter(|&h| h >= n_leaves && h < 2 * n_leaves)
                .ok_or_else(|| D::Error::custom(format!("bad leaf word {:?}", leaf.word)))?;
            leaf_values[heap - n_leaves] = leaf.value;
        }
        FittedTree::new(partition, leaf_values).map_err(|e| D::Error::custom(e.to_string()))
    }
}
