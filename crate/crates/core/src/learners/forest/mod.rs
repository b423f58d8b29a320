//! Bagged binary trees shared by the survival and regression forests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

mod regression;
mod survival;

pub use regression::{fit_regression_forest, RegressionForest};
pub use survival::{fit_survival_forest, SurvivalForestFit};

#[derive(Debug, Clone, Copy)]
enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf(u32),
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &[f64]) -> usize {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(id) => return id as usize,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    k = if x[feature as usize] <= threshold {
                        left
                    } else {
                        right
                    } as usize;
                }
            }
        }
    }
}

/// Row-major feature matrix plus the split search settings.
struct Grower<'a> {
    x: &'a [f64],
    p: usize,
    min_leaf: usize,
    mtry: usize,
    nsplit: usize,
}

impl Grower<'_> {
    fn value(&self, row: usize, f: usize) -> f64 {
        self.x[row * self.p + f]
    }

    /// Grows one tree over `rows`. `score` rates a candidate left mask (higher is
    /// better, `None` for unusable); `splittable` vetoes splitting a node;
    /// `leaf` stores a terminal node's rows and returns its id.
    fn grow(
        &self,
        rows: Vec<usize>,
        rng: &mut ChaCha8Rng,
        mut score: impl FnMut(&[usize], &[bool]) -> Option<f64>,
        splittable: impl Fn(&[usize]) -> bool,
        mut leaf: impl FnMut(&[usize]) -> u32,
    ) -> Tree {
        let mut nodes = vec![Node::Leaf(0)];
        let mut stack = vec![(0usize, rows)];
        let mut mask = Vec::new();
        let mut features: Vec<usize> = (0..self.p).collect();
        while let Some((slot, rows)) = stack.pop() {
            let m = rows.len();
            let mut best: Option<(f64, usize, f64)> = None;
            if m >= 2 * self.min_leaf && splittable(&rows) {
                for i in 0..self.mtry.min(self.p) {
                    let j = rng.random_range(i..self.p);
                    features.swap(i, j);
                    let f = features[i];
                    let (lo, hi) =
                        rows.iter()
                            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                                let v = self.value(r, f);
                                (lo.min(v), hi.max(v))
                            });
                    if lo >= hi {
                        continue;
                    }
                    let thresholds: Vec<f64> = if self.nsplit == 0 {
                        let mut v: Vec<f64> = rows.iter().map(|&r| self.value(r, f)).collect();
                        v.sort_by(f64::total_cmp);
                        v.dedup();
                        v.pop();
                        v
                    } else {
                        (0..self.nsplit)
                            .map(|_| self.value(rows[rng.random_range(0..m)], f))
                            .filter(|&v| v < hi)
                            .collect()
                    };
                    for thr in thresholds {
                        mask.clear();
                        mask.extend(rows.iter().map(|&r| self.value(r, f) <= thr));
                        let nl = mask.iter().filter(|&&b| b).count();
                        if nl < self.min_leaf || m - nl < self.min_leaf {
                            continue;
                        }
                        if let Some(s) = score(&rows, &mask) {
                            if best.is_none_or(|(b, _, _)| s > b) {
                                best = Some((s, f, thr));
                            }
                        }
                    }
                }
            }
            match best {
                Some((_, f, thr)) => {
                    let (left, right): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&r| self.value(r, f) <= thr);
                    let l = nodes.len();
                    nodes.push(Node::Leaf(0));
                    nodes.push(Node::Leaf(0));
                    nodes[slot] = Node::Split {
                        feature: f as u32,
                        threshold: thr,
                        left: l as u32,
                        right: l as u32 + 1,
                    };
                    stack.push((l + 1, right));
                    stack.push((l, left));
                }
                None => nodes[slot] = Node::Leaf(leaf(&rows)),
            }
        }
        Tree { nodes }
    }
}

/// Bootstrap (or identity) resample, returned sorted so node rows stay in canonical order.
fn resample(n: usize, bootstrap: bool, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<bool>) {
    let mut in_bag = vec![false; n];
    let rows = if bootstrap {
        let mut v: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };
    for &r in &rows {
        in_bag[r] = true;
    }
    (rows, in_bag)
}
