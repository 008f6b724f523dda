use serde::{Deserialize, Serialize};

/// Smallest split gain treated as an improvement.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        samples: usize,
    },
}

/// A regression tree stored as a flat node list with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { value, .. } => return *value,
            }
        }
    }

    /// Depth of the deepest leaf; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, samples } => Some((*value, *samples)),
            Node::Split { .. } => None,
        })
    }
}

/// Leaf regularization and shape limits for one tree.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l1: f64,
    pub l2: f64,
}

impl TreeParams {
    fn soft_threshold(&self, g: f64) -> f64 {
        if g > self.l1 {
            g - self.l1
        } else if g < -self.l1 {
            g + self.l1
        } else {
            0.0
        }
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        let t = self.soft_threshold(g);
        t * t / (h + self.l2)
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -self.soft_threshold(g) / (h + self.l2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Exact greedy search over every feature and every boundary between distinct values.
///
/// Ties keep the lowest feature index, then the lowest threshold.
pub(crate) fn best_split(
    rows: &[&[f64]],
    grad: &[f64],
    hess: &[f64],
    idx: &[usize],
    p: &TreeParams,
) -> Option<SplitChoice> {
    let n = idx.len();
    if n < 2 * p.min_samples_leaf {
        return None;
    }
    let g_total: f64 = idx.iter().map(|&i| grad[i]).sum();
    let h_total: f64 = idx.iter().map(|&i| hess[i]).sum();
    let parent = p.score(g_total, h_total);
    let dim = rows[idx[0]].len();

    let mut best: Option<SplitChoice> = None;
    let mut order = idx.to_vec();
    #[allow(clippy::needless_range_loop)]
    for f in 0..dim {
        order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]).then(a.cmp(&b)));
        let (mut gl, mut hl) = (0.0, 0.0);
        for pos in 1..n {
            let prev = order[pos - 1];
            gl += grad[prev];
            hl += hess[prev];
            if pos < p.min_samples_leaf || n - pos < p.min_samples_leaf {
                continue;
            }
            let (lo, hi) = (rows[prev][f], rows[order[pos]][f]);
            if lo >= hi {
                continue;
            }
            let gain = p.score(gl, hl) + p.score(g_total - gl, h_total - hl) - parent;
            if gain > MIN_GAIN && best.is_none_or(|b| gain > b.gain) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

pub(crate) fn build_tree(rows: &[&[f64]], grad: &[f64], hess: &[f64], idx: Vec<usize>, p: &TreeParams) -> Tree {
    let mut nodes = Vec::new();
    grow(rows, grad, hess, idx, 0, p, &mut nodes);
    Tree { nodes }
}

fn grow(
    rows: &[&[f64]],
    grad: &[f64],
    hess: &[f64],
    idx: Vec<usize>,
    depth: usize,
    p: &TreeParams,
    nodes: &mut Vec<Node>,
) -> usize {
    let at = nodes.len();
    let split = if depth < p.max_depth {
        best_split(rows, grad, hess, &idx, p)
    } else {
        None
    };
    match split {
        Some(s) => {
            nodes.push(Node::Leaf { value: 0.0, samples: 0 });
            let (l, r): (Vec<usize>, Vec<usize>) =
                idx.into_iter().partition(|&i| rows[i][s.feature] <= s.threshold);
            let left = grow(rows, grad, hess, l, depth + 1, p, nodes);
            let right = grow(rows, grad, hess, r, depth + 1, p, nodes);
            nodes[at] = Node::Split {
                feature: s.feature,
                threshold: s.threshold,
                left,
                right,
            };
        }
        None => {
            let g: f64 = idx.iter().map(|&i| grad[i]).sum();
            let h: f64 = idx.iter().map(|&i| hess[i]).sum();
            nodes.push(Node::Leaf {
                value: p.leaf_value(g, h),
                samples: idx.len(),
            });
        }
    }
    at
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> TreeParams {
        TreeParams {
            max_depth: 3,
            min_samples_leaf: 1,
            l1: 0.0,
            l2: 0.0,
        }
    }

    #[test]
    fn leaf_value_regularization() {
        let p = TreeParams {
            l1: 1.0,
            l2: 2.0,
            ..params()
        };
        // -(G - l1) / (H + l2) with G = 5, H = 3.
        assert_eq!(p.leaf_value(5.0, 3.0), -0.8);
        assert_eq!(p.leaf_value(-5.0, 3.0), 0.8);
        assert_eq!(p.leaf_value(0.5, 3.0), 0.0);
    }

    #[test]
    fn finds_obvious_split() {
        let data = [[0.1], [0.2], [0.8], [0.9]];
        let rows: Vec<&[f64]> = data.iter().map(|r| r.as_slice()).collect();
        // Residual targets 0,0,1,1 -> gradients 0,0,-1,-1.
        let grad = [0.0, 0.0, -1.0, -1.0];
        let hess = [1.0; 4];
        let s = best_split(&rows, &grad, &hess, &[0, 1, 2, 3], &params()).unwrap();
        assert_eq!(s.feature, 0);
        assert!((s.threshold - 0.5).abs() < 1e-12);
        let tree = build_tree(&rows, &grad, &hess, vec![0, 1, 2, 3], &params());
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.predict(&[0.0]), 0.0);
        assert_eq!(tree.predict(&[1.0]), 1.0);
    }

    #[test]
    fn respects_min_leaf() {
        let data = [[0.1], [0.2], [0.8], [0.9]];
        let rows: Vec<&[f64]> = data.iter().map(|r| r.as_slice()).collect();
        let grad = [0.0, 0.0, 0.0, -1.0];
        let hess = [1.0; 4];
        let p = TreeParams {
            min_samples_leaf: 2,
            ..params()
        };
        let s = best_split(&rows, &grad, &hess, &[0, 1, 2, 3], &p).unwrap();
        assert!((s.threshold - 0.5).abs() < 1e-12);
        let tree = build_tree(&rows, &grad, &hess, vec![0, 1, 2, 3], &p);
        assert!(tree.leaves().all(|(_, n)| n >= 2));
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        let data = [[0.0, 0.0], [1.0, 1.0]];
        let rows: Vec<&[f64]> = data.iter().map(|r| r.as_slice()).collect();
        let s = best_split(&rows, &[1.0, -1.0], &[1.0, 1.0], &[0, 1], &params()).unwrap();
        assert_eq!(s.feature, 0);
    }

    #[test]
    fn constant_gradient_does_not_split() {
        let data = [[0.1], [0.2], [0.3]];
        let rows: Vec<&[f64]> = data.iter().map(|r| r.as_slice()).collect();
        assert!(best_split(&rows, &[0.5; 3], &[1.0; 3], &[0, 1, 2], &params()).is_none());
    }
}
