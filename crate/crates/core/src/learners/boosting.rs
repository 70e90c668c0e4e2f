use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::risk::sigmoid;

/// Minimum hessian mass on each side of a split.
const MIN_CHILD_WEIGHT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A regression tree stored as a flat node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn eval(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row(feature) <= threshold { left } else { right },
            }
        }
    }
}

/// Gradient-boosted trees for the logistic loss, using second-order
/// (Newton) leaf values `-G / (H + lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    base_score: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
    dim: usize,
}

struct Grower<'a> {
    x: &'a DMatrix<f64>,
    sorted: &'a [Vec<usize>],
    grad: &'a [f64],
    hess: &'a [f64],
    lambda: f64,
    max_depth: usize,
}

impl Grower<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.lambda)
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.lambda)
    }

    fn grow(&self, members: &[bool], count: usize, depth: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let (g, h) = (0..members.len())
            .filter(|&i| members[i])
            .fold((0.0, 0.0), |(g, h), i| (g + self.grad[i], h + self.hess[i]));
        nodes.push(Node::Leaf(self.leaf_value(g, h)));
        if depth >= self.max_depth || count < 2 {
            return id;
        }

        let parent = self.score(g, h);
        let mut best: Option<(f64, usize, f64)> = None;
        for (feature, order) in self.sorted.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            let mut prev: Option<usize> = None;
            for &i in order.iter().filter(|&&i| members[i]) {
                if let Some(p) = prev {
                    let (xp, xi) = (self.x[(p, feature)], self.x[(i, feature)]);
                    let (gr, hr) = (g - gl, h - hl);
                    if xi > xp && hl >= MIN_CHILD_WEIGHT && hr >= MIN_CHILD_WEIGHT {
                        let gain = self.score(gl, hl) + self.score(gr, hr) - parent;
                        if gain > 1e-12 && best.map_or(true, |(b, _, _)| gain > b) {
                            best = Some((gain, feature, 0.5 * (xp + xi)));
                        }
                    }
                }
                gl += self.grad[i];
                hl += self.hess[i];
                prev = Some(i);
            }
        }

        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let mut left = vec![false; members.len()];
        let mut right = vec![false; members.len()];
        let (mut nl, mut nr) = (0, 0);
        for i in (0..members.len()).filter(|&i| members[i]) {
            if self.x[(i, feature)] <= threshold {
                left[i] = true;
                nl += 1;
            } else {
                right[i] = true;
                nr += 1;
            }
        }
        let l = self.grow(&left, nl, depth + 1, nodes);
        let r = self.grow(&right, nr, depth + 1, nodes);
        nodes[id] = Node::Split {
            feature,
            threshold,
            left: l,
            right: r,
        };
        id
    }
}

impl BoostedTrees {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn fit(
        x: &DMatrix<f64>,
        targets: &[u8],
        rounds: usize,
        learning_rate: f64,
        max_depth: usize,
        lambda: f64,
    ) -> Self {
        let n = x.nrows();
        let mean = targets.iter().map(|&t| t as f64).sum::<f64>() / n as f64;
        let mean = mean.clamp(1e-6, 1.0 - 1e-6);
        let base_score = (mean / (1.0 - mean)).ln();

        let sorted: Vec<Vec<usize>> = (0..x.ncols())
            .map(|j| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| x[(a, j)].total_cmp(&x[(b, j)]).then(a.cmp(&b)));
                idx
            })
            .collect();

        let mut margin = vec![base_score; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut trees = Vec::with_capacity(rounds);
        let all = vec![true; n];
        for _ in 0..rounds {
            for i in 0..n {
                let p = sigmoid(margin[i]);
                grad[i] = p - targets[i] as f64;
                hess[i] = p * (1.0 - p);
            }
            let grower = Grower {
                x,
                sorted: &sorted,
                grad: &grad,
                hess: &hess,
                lambda,
                max_depth,
            };
            let mut nodes = Vec::new();
            grower.grow(&all, n, 0, &mut nodes);
            let tree = Tree { nodes };
            for (i, m) in margin.iter_mut().enumerate() {
                *m += learning_rate * tree.eval(|j| x[(i, j)]);
            }
            trees.push(tree);
        }
        Self {
            base_score,
            learning_rate,
            trees,
            dim: x.ncols(),
        }
    }

    pub(crate) fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let m = self.trees.iter().fold(self.base_score, |acc, t| {
                    acc + self.learning_rate * t.eval(|j| x[(i, j)])
                });
                sigmoid(m)
            })
            .collect()
    }
}
