//! Random-forest regressor: bootstrap-bagged CART trees with axis-aligned
//! splits minimizing within-node squared error and leaf means. With a
//! single covariate and all features considered per split this reduces to
//! bagging.

use rand::Rng;

use crate::error::{Error, Result};
use crate::sample::Sample;
use crate::seed::SeedSpec;

/// Forest hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means all features.
    pub features_per_split: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 200,
            max_depth: 8,
            min_leaf: 5,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// A fitted forest.
#[derive(Debug, Clone)]
pub struct ForestModel {
    trees: Vec<Tree>,
    pub params: ForestParams,
    n_features: usize,
}

impl ForestModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_features, "feature dimension mismatch");
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict(&self, sample: &Sample) -> Vec<f64> {
        let mut row = vec![0.0; sample.p()];
        (0..sample.n())
            .map(|i| {
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = sample.x_col(j)[i];
                }
                self.predict_row(&row)
            })
            .collect()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

/// Fit a forest: each tree on a bootstrap resample with a deterministic
/// per-tree sub-seed.
pub fn fit_forest(train: &Sample, params: ForestParams, seed: SeedSpec) -> Result<ForestModel> {
    let n = train.n();
    if n < 2 * params.min_leaf.max(1) {
        return Err(Error::TooFewRows {
            context: "fit_forest",
            needed: 2 * params.min_leaf.max(1),
            got: n,
        });
    }
    if params.trees == 0 {
        return Err(crate::error::invalid("forest needs at least one tree"));
    }
    let p = train.p();
    let xs: Vec<&[f64]> = (0..p).map(|j| train.x_col(j)).collect();
    let ys = train.y();

    let trees: Vec<Tree> = (0..params.trees)
        .map(|t| {
            let mut rng = seed.stream(t as u64).rng();
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut builder = TreeBuilder {
                xs: &xs,
                ys,
                params,
                nodes: Vec::new(),
                rng,
            };
            builder.build(rows, 0);
            Tree {
                nodes: builder.nodes,
            }
        })
        .collect();

    Ok(ForestModel {
        trees,
        params,
        n_features: p,
    })
}

struct TreeBuilder<'a> {
    xs: &'a [&'a [f64]],
    ys: &'a [f64],
    params: ForestParams,
    nodes: Vec<Node>,
    rng: rand_chacha::ChaCha12Rng,
}

impl TreeBuilder<'_> {
    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let mean = rows.iter().map(|&i| self.ys[i]).sum::<f64>() / rows.len() as f64;
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf {
            return self.push(Node::Leaf { value: mean });
        }
        match self.best_split(&rows) {
            None => self.push(Node::Leaf { value: mean }),
            Some((feature, threshold)) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .into_iter()
                    .partition(|&i| self.xs[feature][i] <= threshold);
                let slot = self.push(Node::Leaf { value: mean });
                let left = self.build(left_rows, depth + 1);
                let right = self.build(right_rows, depth + 1);
                self.nodes[slot] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                slot
            }
        }
    }

    fn push(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Best (feature, threshold) minimizing total child SSE, or None when
    /// no split satisfies the min-leaf constraint or improves on the
    /// parent.
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let p = self.xs.len();
        let m = self.params.features_per_split.unwrap_or(p).clamp(1, p);
        let features: Vec<usize> = if m >= p {
            (0..p).collect()
        } else {
            // Sample m distinct features.
            let mut pool: Vec<usize> = (0..p).collect();
            for i in 0..m {
                let j = self.rng.random_range(i..p);
                pool.swap(i, j);
            }
            pool.truncate(m);
            pool
        };

        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&i| self.ys[i]).sum();
        let total_sq: f64 = rows.iter().map(|&i| self.ys[i] * self.ys[i]).sum();
        let parent_sse = total_sq - total * total / n;

        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = rows.to_vec();
        for &feature in &features {
            let column = self.xs[feature];
            order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            for (k, &i) in order.iter().enumerate().take(order.len() - 1) {
                left_sum += self.ys[i];
                left_sq += self.ys[i] * self.ys[i];
                let left_n = (k + 1) as f64;
                let right_n = n - left_n;
                if (k + 1) < self.params.min_leaf || (order.len() - k - 1) < self.params.min_leaf {
                    continue;
                }
                let here = column[i];
                let next = column[order[k + 1]];
                if next <= here {
                    continue; // no gap to split in
                }
                let right_sum = total - left_sum;
                let right_sq = total_sq - left_sq;
                let sse = (left_sq - left_sum * left_sum / left_n)
                    + (right_sq - right_sum * right_sum / right_n);
                let better = match best {
                    None => sse < parent_sse - 1e-12,
                    Some((b, _, _)) => sse < b,
                };
                if better {
                    best = Some((sse, feature, 0.5 * (here + next)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train(xs: Vec<f64>, ys: Vec<f64>) -> Sample {
        Sample::univariate(xs, ys).unwrap()
    }

    #[test]
    fn depth_zero_predicts_training_mean() {
        let s = train(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0, 6.0]);
        let params = ForestParams {
            trees: 1,
            max_depth: 0,
            min_leaf: 1,
            features_per_split: None,
        };
        let model = fit_forest(&s, params, SeedSpec::new(0)).unwrap();
        // Root-only tree: bootstrap mean of y, constant everywhere.
        let a = model.predict_row(&[0.0]);
        let b = model.predict_row(&[100.0]);
        assert_eq!(a, b);
    }

    #[test]
    fn constant_response_is_reproduced() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let s = train(xs, vec![3.5; 50]);
        let model = fit_forest(&s, ForestParams::default(), SeedSpec::new(1)).unwrap();
        for x in [0.0, 10.0, 49.0, 200.0] {
            assert_eq!(model.predict_row(&[x]), 3.5);
        }
    }

    #[test]
    fn recovers_step_function() {
        let n = 1000;
        let mut rng = SeedSpec::new(5).rng();
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| if x > 0.5 { 1.0 } else { 0.0 }).collect();
        let s = train(xs, ys);
        let params = ForestParams {
            trees: 100,
            max_depth: 12,
            min_leaf: 2,
            features_per_split: None,
        };
        let model = fit_forest(&s, params, SeedSpec::new(6)).unwrap();
        // Held-out grid avoiding the immediate split neighborhood.
        let mut sq_err = 0.0;
        let mut count = 0;
        for i in 0..100 {
            let x = 0.005 + i as f64 * 0.01;
            if (x - 0.5).abs() < 0.02 {
                continue;
            }
            let truth = if x > 0.5 { 1.0 } else { 0.0 };
            let err = model.predict_row(&[x]) - truth;
            sq_err += err * err;
            count += 1;
        }
        let rmse = (sq_err / count as f64).sqrt();
        assert!(rmse < 0.05, "rmse = {rmse}");
    }

    #[test]
    fn predictions_bounded_by_training_range() {
        let n = 300;
        let mut rng = SeedSpec::new(9).rng();
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| (x * 2.1).sin() * 3.0).collect();
        let y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let y_max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s = train(xs, ys);
        let model = fit_forest(&s, ForestParams::default(), SeedSpec::new(10)).unwrap();
        for i in 0..200 {
            let x = -2.0 + i as f64 * 0.04;
            let pred = model.predict_row(&[x]);
            assert!(pred >= y_min && pred <= y_max, "pred {pred} out of range");
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let ys: Vec<f64> = (0..100).map(|i| (i as f64 * 0.11).cos()).collect();
        let s = train(xs, ys);
        let params = ForestParams {
            trees: 20,
            ..ForestParams::default()
        };
        let a = fit_forest(&s, params, SeedSpec::new(3)).unwrap();
        let b = fit_forest(&s, params, SeedSpec::new(3)).unwrap();
        for x in [-0.9, -0.3, 0.0, 0.4, 0.8] {
            assert_eq!(a.predict_row(&[x]), b.predict_row(&[x]));
        }
    }
}
