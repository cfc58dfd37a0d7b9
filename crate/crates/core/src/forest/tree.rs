use rand::Rng;

use crate::nn::Matrix;

pub(crate) const ILLICIT: usize = 0;
pub(crate) const LICIT: usize = 1;

/// A node of a binary decision tree. Rows with `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Internal {
        feature: u32,
        threshold: f32,
        left: u32,
        right: u32,
    },
    /// Training-sample counts per class, `[illicit, licit]`.
    Leaf { counts: [u32; 2] },
}

/// Nodes stored in preorder; index 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_for(&self, row: &[f32]) -> &TreeNode {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                leaf @ TreeNode::Leaf { .. } => return leaf,
            }
        }
    }

    /// Fraction of illicit training samples in the leaf reached by `row`.
    pub fn illicit_fraction(&self, row: &[f32]) -> f64 {
        match self.leaf_for(row) {
            TreeNode::Leaf { counts } => counts[ILLICIT] as f64 / (counts[ILLICIT] + counts[LICIT]) as f64,
            TreeNode::Internal { .. } => unreachable!("leaf_for returns leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + go(t, *left as usize).max(go(t, *right as usize)),
            }
        }
        go(self, 0)
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct TreeParams {
    pub features_per_split: usize,
    pub max_depth: Option<usize>,
}

fn gini(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = c[0] as f64 / n;
    2.0 * p * (1.0 - p)
}

struct Split {
    feature: usize,
    threshold: f32,
    /// Weighted child impurity; lower is better.
    child_impurity: f64,
}

/// Best threshold on one feature, or `None` if the feature is constant over `samples`.
fn best_threshold(x: &Matrix<f32>, y: &[usize], samples: &[usize], feature: usize, buf: &mut Vec<(f32, usize)>) -> Option<(f32, f64)> {
    buf.clear();
    buf.extend(samples.iter().map(|&s| (x.get(s, feature), y[s])));
    buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    if buf[0].0 == buf[buf.len() - 1].0 {
        return None;
    }
    let n = buf.len();
    let mut total = [0usize; 2];
    for &(_, c) in buf.iter() {
        total[c] += 1;
    }
    let mut left = [0usize; 2];
    let mut best: Option<(f32, f64)> = None;
    for i in 0..n - 1 {
        left[buf[i].1] += 1;
        let (a, b) = (buf[i].0, buf[i + 1].0);
        if a == b {
            continue;
        }
        let nl = (i + 1) as f64;
        let right = [total[0] - left[0], total[1] - left[1]];
        let imp = (nl * gini(left) + (n as f64 - nl) * gini(right)) / n as f64;
        if best.is_none_or(|(_, bi)| imp < bi) {
            let mut thr = a + (b - a) / 2.0;
            if !(thr >= a && thr < b) {
                thr = a;
            }
            best = Some((thr, imp));
        }
    }
    best
}

/// Grows one CART tree on `samples` (row indices into `x`, repeats allowed).
///
/// Candidate features are drawn without replacement until
/// `features_per_split` non-constant ones have been evaluated. A branch
/// becomes a leaf when it is pure, has fewer than two samples, reaches the
/// depth limit, or no candidate feature separates its samples.
pub(crate) fn grow_tree<R: Rng>(x: &Matrix<f32>, y: &[usize], samples: Vec<usize>, params: TreeParams, rng: &mut R) -> Tree {
    struct Task {
        samples: Vec<usize>,
        depth: usize,
        parent: Option<(usize, bool)>,
    }
    let d = x.cols();
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut stack = vec![Task {
        samples,
        depth: 0,
        parent: None,
    }];
    let mut features: Vec<usize> = (0..d).collect();
    let mut buf = Vec::new();
    while let Some(task) = stack.pop() {
        let idx = nodes.len();
        if let Some((p, is_left)) = task.parent {
            if let TreeNode::Internal { left, right, .. } = &mut nodes[p] {
                if is_left {
                    *left = idx as u32;
                } else {
                    *right = idx as u32;
                }
            }
        }
        let mut counts = [0usize; 2];
        for &s in &task.samples {
            counts[y[s]] += 1;
        }
        let leaf = TreeNode::Leaf {
            counts: [counts[0] as u32, counts[1] as u32],
        };
        let stop = counts[0] == 0
            || counts[1] == 0
            || task.samples.len() < 2
            || params.max_depth.is_some_and(|m| task.depth >= m);
        if stop {
            nodes.push(leaf);
            continue;
        }

        let mut best: Option<Split> = None;
        let mut evaluated = 0usize;
        // lazy Fisher-Yates: features[..k] are the first k draws
        for k in 0..d {
            if evaluated >= params.features_per_split {
                break;
            }
            let j = rng.random_range(k..d);
            features.swap(k, j);
            let f = features[k];
            if let Some((threshold, child_impurity)) = best_threshold(x, y, &task.samples, f, &mut buf) {
                evaluated += 1;
                if best.as_ref().is_none_or(|b| child_impurity < b.child_impurity) {
                    best = Some(Split {
                        feature: f,
                        threshold,
                        child_impurity,
                    });
                }
            }
        }
        let Some(split) = best else {
            nodes.push(leaf);
            continue;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = task
            .samples
            .iter()
            .partition(|&&s| x.get(s, split.feature) <= split.threshold);
        nodes.push(TreeNode::Internal {
            feature: split.feature as u32,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        stack.push(Task {
            samples: right,
            depth: task.depth + 1,
            parent: Some((idx, false)),
        });
        stack.push(Task {
            samples: left,
            depth: task.depth + 1,
            parent: Some((idx, true)),
        });
    }
    Tree { nodes }
}

pub(crate) fn bootstrap<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

