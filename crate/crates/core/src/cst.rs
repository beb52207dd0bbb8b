//! Classifier two-sample test.
//!
//! A random forest is trained to distinguish real embeddings (label 1) from
//! generated embeddings (label 0) and scored by repeated k-fold
//! cross-validated log loss. Chance-level log loss (ln 2 for balanced
//! classes) means the classifier cannot tell the sets apart; low log loss
//! means they remain separable.
//!
//! The whole test is a pure function of `(G, X, params)`. Seed derivation is
//! fixed so independent implementations can reproduce reports at the
//! per-repeat level (see [`crate::rng`] for `derive` and the stream
//! definition):
//!
//! - repeat `r`: `repeat_seed = derive(master_seed, r)`
//! - fold shuffle stream: `derive(repeat_seed, 0)`, shuffling class-0 indices
//!   first, then class-1, each dealt round-robin into folds
//! - forest for held-out fold `f`: `forest_seed = derive(repeat_seed, 1 + f)`
//! - tree `t` of a forest: `tree_seed = derive(forest_seed, t)`; the tree's
//!   stream first draws the `n` bootstrap indices, then per-node feature
//!   subsets in depth-first, left-child-first order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::FeatureMatrix;
use crate::rng::{derive, CounterRng};

pub type Result<T> = std::result::Result<T, CstError>;

#[derive(Debug, Error)]
pub enum CstError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("training data is empty")]
    EmptyInput,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("label count {labels} does not match sample count {samples}")]
    LengthMismatch { labels: usize, samples: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("class {class} has {count} samples, need at least {folds} for stratified folding")]
    TooFewPerClass {
        class: u8,
        count: usize,
        folds: usize,
    },
}

/// How many features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitFeatures {
    /// `ceil(sqrt(D))` features per split.
    SqrtD,
    Fixed(usize),
}

/// Random-forest and cross-validation hyperparameters, echoed verbatim into
/// every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CstParams {
    pub n_trees: usize,
    /// `None` grows trees to purity.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub features_per_split: SplitFeatures,
    pub n_repeats: usize,
    pub n_folds: usize,
    /// Probability floor/ceiling applied inside the log loss.
    pub clip_epsilon: f64,
    pub master_seed: u64,
}

impl Default for CstParams {
    fn default() -> Self {
        CstParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: SplitFeatures::SqrtD,
            n_repeats: 100,
            n_folds: 2,
            clip_epsilon: 1e-15,
            master_seed: 0,
        }
    }
}

impl CstParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(CstError::InvalidParams("n_trees must be >= 1".into()));
        }
        if self.n_folds < 2 {
            return Err(CstError::InvalidParams("n_folds must be >= 2".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 0.5) {
            return Err(CstError::InvalidParams(
                "clip_epsilon must be in (0, 0.5)".into(),
            ));
        }
        if self.min_leaf < 1 {
            return Err(CstError::InvalidParams("min_leaf must be >= 1".into()));
        }
        if self.n_repeats < 1 {
            return Err(CstError::InvalidParams("n_repeats must be >= 1".into()));
        }
        Ok(())
    }

    fn features_per_split(&self, d: usize) -> usize {
        match self.features_per_split {
            SplitFeatures::SqrtD => (d as f64).sqrt().ceil() as usize,
            SplitFeatures::Fixed(k) => k.clamp(1, d),
        }
    }
}

/// Two-sample test output: per-repeat and aggregate log losses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CstReport {
    pub mean_logloss: f64,
    /// Population standard deviation (divisor `n_repeats`) of `per_repeat`.
    pub std_logloss: f64,
    pub per_repeat: Vec<f64>,
    pub params_echo: CstParams,
}

/// One axis-aligned decision tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf { proba: [f64; 2] },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A grown decision tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub seed: u64,
}

impl Tree {
    /// Class-probability vector for one feature row. Samples with a feature
    /// value equal to a split threshold go left.
    pub fn predict(&self, row: &[f32]) -> [f64; 2] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { proba } => return *proba,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if (row[*feature] as f64) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

/// A bootstrap-aggregated forest of decision trees.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_features: usize,
}

struct TreeBuilder<'a> {
    data: &'a FeatureMatrix,
    labels: &'a [u8],
    max_depth: Option<usize>,
    min_leaf: usize,
    k_features: usize,
    rng: CounterRng,
    nodes: Vec<Node>,
    scratch: Vec<(f64, u8)>,
}

impl<'a> TreeBuilder<'a> {
    fn leaf(&mut self, c0: usize, c1: usize) -> usize {
        let n = (c0 + c1) as f64;
        self.nodes.push(Node::Leaf {
            proba: [c0 as f64 / n, c1 as f64 / n],
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let c1 = samples.iter().filter(|&&i| self.labels[i] == 1).count();
        let c0 = samples.len() - c1;
        let at_depth_limit = self.max_depth.is_some_and(|limit| depth >= limit);
        if c0 == 0 || c1 == 0 || at_depth_limit || samples.len() < 2 * self.min_leaf {
            return self.leaf(c0, c1);
        }

        let best = self.best_split(&samples, c0, c1);
        let (feature, threshold) = match best {
            Some(b) => b,
            None => return self.leaf(c0, c1),
        };

        let mut left = Vec::new();
        let mut right = Vec::new();
        for &i in &samples {
            if (self.data.get(i, feature) as f64) <= threshold {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        // Reserve the split slot before recursing so node indices are
        // assigned in depth-first order.
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { proba: [0.0, 0.0] });
        let left_idx = self.grow(left, depth + 1);
        let right_idx = self.grow(right, depth + 1);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left: left_idx,
            right: right_idx,
        };
        at
    }

    /// Minimum-weighted-Gini split over a random feature subset. Candidate
    /// thresholds are midpoints between consecutive distinct sorted values;
    /// ties break to the lowest feature index, then the lowest threshold.
    fn best_split(&mut self, samples: &[usize], c0: usize, c1: usize) -> Option<(usize, f64)> {
        let n = samples.len();
        let n_f = n as f64;
        let mut subset = self.rng.sample_indices(self.data.dim(), self.k_features);
        subset.sort_unstable();

        let mut best: Option<(f64, usize, f64)> = None;
        for &feature in &subset {
            self.scratch.clear();
            for &i in samples {
                self.scratch.push((self.data.get(i, feature) as f64, self.labels[i]));
            }
            self.scratch
                .sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            let mut left0 = 0usize;
            let mut left1 = 0usize;
            for i in 1..n {
                let (prev_value, prev_label) = self.scratch[i - 1];
                if prev_label == 0 {
                    left0 += 1;
                } else {
                    left1 += 1;
                }
                let value = self.scratch[i].0;
                if value == prev_value {
                    continue;
                }
                let left_n = i;
                let right_n = n - i;
                if left_n < self.min_leaf || right_n < self.min_leaf {
                    continue;
                }
                let gini = |a: usize, b: usize, total: usize| -> f64 {
                    let t = total as f64;
                    let pa = a as f64 / t;
                    let pb = b as f64 / t;
                    1.0 - (pa * pa + pb * pb)
                };
                let g_left = gini(left0, left1, left_n);
                let g_right = gini(c0 - left0, c1 - left1, right_n);
                let weighted = (left_n as f64 * g_left + right_n as f64 * g_right) / n_f;
                if best.map_or(true, |(score, _, _)| weighted < score) {
                    let mut threshold = (prev_value + value) / 2.0;
                    // Adjacent floats can make the midpoint collapse onto the
                    // upper value; pin it to the lower so the split is real.
                    if threshold >= value {
                        threshold = prev_value;
                    }
                    best = Some((weighted, feature, threshold));
                }
            }
        }
        best.map(|(_, feature, threshold)| (feature, threshold))
    }
}

fn grow_tree(
    data: &FeatureMatrix,
    labels: &[u8],
    pool: &[usize],
    params: &CstParams,
    seed: u64,
) -> Tree {
    let mut rng = CounterRng::new(seed);
    let bootstrap: Vec<usize> = (0..pool.len())
        .map(|_| pool[rng.below(pool.len())])
        .collect();
    let mut builder = TreeBuilder {
        data,
        labels,
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        k_features: params.features_per_split(data.dim()),
        rng,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(pool.len()),
    };
    builder.grow(bootstrap, 0);
    Tree {
        nodes: builder.nodes,
        seed,
    }
}

fn train_forest_on(
    data: &FeatureMatrix,
    labels: &[u8],
    pool: &[usize],
    params: &CstParams,
    seed: u64,
) -> Result<Forest> {
    if pool.is_empty() {
        return Err(CstError::EmptyInput);
    }
    let c1 = pool.iter().filter(|&&i| labels[i] == 1).count();
    if c1 == 0 || c1 == pool.len() {
        return Err(CstError::SingleClass);
    }
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| grow_tree(data, labels, pool, params, derive(seed, t as u64)))
        .collect();
    Ok(Forest {
        trees,
        n_features: data.dim(),
    })
}

/// Train a forest on every row of `features`. Each tree grows on its own
/// bootstrap resample (`N` draws with replacement) with a per-tree seed
/// `derive(seed, tree_index)`.
pub fn train_forest(
    features: &FeatureMatrix,
    labels: &[u8],
    params: &CstParams,
    seed: u64,
) -> Result<Forest> {
    params.validate()?;
    if labels.len() != features.n_samples() {
        return Err(CstError::LengthMismatch {
            labels: labels.len(),
            samples: features.n_samples(),
        });
    }
    let pool: Vec<usize> = (0..features.n_samples()).collect();
    train_forest_on(features, labels, &pool, params, seed)
}

/// Mean of per-tree leaf class distributions, one `[p0, p1]` row per sample.
pub fn predict_proba(forest: &Forest, features: &FeatureMatrix) -> Result<Vec<[f64; 2]>> {
    if features.dim() != forest.n_features {
        return Err(CstError::DimensionMismatch {
            left: forest.n_features,
            right: features.dim(),
        });
    }
    let n_trees = forest.trees.len() as f64;
    Ok((0..features.n_samples())
        .map(|i| {
            let row = features.row(i);
            let mut acc = [0.0f64; 2];
            for tree in &forest.trees {
                let p = tree.predict(row);
                acc[0] += p[0];
                acc[1] += p[1];
            }
            [acc[0] / n_trees, acc[1] / n_trees]
        })
        .collect())
}

/// `-(1/N) sum ln(clip(p_i[y_i], eps, 1 - eps))`.
pub fn log_loss(probs: &[[f64; 2]], labels: &[u8], clip_epsilon: f64) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(CstError::LengthMismatch {
            labels: labels.len(),
            samples: probs.len(),
        });
    }
    if probs.is_empty() {
        return Err(CstError::EmptyInput);
    }
    let mut total = 0.0f64;
    for (p, &y) in probs.iter().zip(labels) {
        let p_true = p[y as usize].clamp(clip_epsilon, 1.0 - clip_epsilon);
        total += p_true.ln();
    }
    Ok(-total / probs.len() as f64)
}

/// Assign each sample to a fold, stratified by class: within each class the
/// indices are shuffled and dealt round-robin, so every fold's class count
/// differs from an even share by at most one sample.
pub fn stratified_folds(labels: &[u8], n_folds: usize, rng: &mut CounterRng) -> Vec<usize> {
    let mut folds = vec![0usize; labels.len()];
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut members);
        for (pos, &sample) in members.iter().enumerate() {
            folds[sample] = pos % n_folds;
        }
    }
    folds
}

/// Cross-validated log loss for a fixed fold assignment: train on each
/// fold's complement with `forest_seed = derive(seed_base, 1 + fold)`, score
/// the held-out fold, and average the per-fold losses.
///
/// Exposed so callers can rerun an identical fold assignment (for instance
/// with flipped labels) and compare losses bit-for-bit.
pub fn cv_logloss(
    features: &FeatureMatrix,
    labels: &[u8],
    folds: &[usize],
    n_folds: usize,
    params: &CstParams,
    seed_base: u64,
) -> Result<f64> {
    let mut total = 0.0f64;
    for fold in 0..n_folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] != fold).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == fold).collect();
        let forest = train_forest_on(
            features,
            labels,
            &train,
            params,
            derive(seed_base, 1 + fold as u64),
        )?;
        let held_out = features.subset(&test).expect("fold subset");
        let probs = predict_proba(&forest, &held_out)?;
        let test_labels: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
        total += log_loss(&probs, &test_labels, params.clip_epsilon)?;
    }
    Ok(total / n_folds as f64)
}

/// Classifier two-sample test between generated features `G` (label 0) and
/// real features `X` (label 1).
pub fn two_sample_test(
    generated: &FeatureMatrix,
    real: &FeatureMatrix,
    params: &CstParams,
) -> Result<CstReport> {
    params.validate()?;
    if generated.dim() != real.dim() {
        return Err(CstError::DimensionMismatch {
            left: generated.dim(),
            right: real.dim(),
        });
    }
    for (class, count) in [(0u8, generated.n_samples()), (1u8, real.n_samples())] {
        if count < params.n_folds {
            return Err(CstError::TooFewPerClass {
                class,
                count,
                folds: params.n_folds,
            });
        }
    }

    let mut data = Vec::with_capacity((generated.n_samples() + real.n_samples()) * generated.dim());
    data.extend_from_slice(generated.data());
    data.extend_from_slice(real.data());
    let combined = FeatureMatrix::new(
        generated.n_samples() + real.n_samples(),
        generated.dim(),
        data,
    )
    .expect("combined matrix");
    let labels: Vec<u8> = std::iter::repeat(0u8)
        .take(generated.n_samples())
        .chain(std::iter::repeat(1u8).take(real.n_samples()))
        .collect();

    let per_repeat: Vec<f64> = (0..params.n_repeats)
        .into_par_iter()
        .map(|r| {
            let repeat_seed = derive(params.master_seed, r as u64);
            let mut fold_rng = CounterRng::new(derive(repeat_seed, 0));
            let folds = stratified_folds(&labels, params.n_folds, &mut fold_rng);
            cv_logloss(&combined, &labels, &folds, params.n_folds, params, repeat_seed)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mean = per_repeat.iter().sum::<f64>() / per_repeat.len() as f64;
    let var = per_repeat
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .sum::<f64>()
        / per_repeat.len() as f64;
    Ok(CstReport {
        mean_logloss: mean,
        std_logloss: var.sqrt(),
        per_repeat,
        params_echo: params.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{gen_gaussian_features, GaussianSpec};

    fn quick_params(n_trees: usize, n_repeats: usize) -> CstParams {
        CstParams {
            n_trees,
            n_repeats,
            ..CstParams::default()
        }
    }

    fn matrix(rows: Vec<Vec<f32>>) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    fn shifted_gaussian(d: usize, n: usize, shift: f64, seed: u64) -> FeatureMatrix {
        let per_dim = shift / (d as f64).sqrt();
        gen_gaussian_features(&GaussianSpec {
            mu: vec![per_dim; d],
            sigma_diag: vec![1.0; d],
            n,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn two_point_dataset_splits_at_midpoint() {
        let features = matrix(vec![vec![0.0], vec![1.0]]);
        let labels = [0u8, 1u8];
        let params = CstParams {
            n_trees: 1,
            ..CstParams::default()
        };
        // Find a seed whose single bootstrap draws both points, then the
        // split at 0.5 is forced.
        let forest = (0..64)
            .map(|seed| train_forest(&features, &labels, &params, seed).unwrap())
            .find(|f| f.trees[0].nodes.len() > 1)
            .expect("some bootstrap contains both samples");
        let root = &forest.trees[0].nodes[0];
        match root {
            Node::Split {
                feature, threshold, ..
            } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.5);
            }
            other => panic!("expected split root, got {other:?}"),
        }
        let probs = predict_proba(&forest, &features).unwrap();
        assert_eq!(probs[0], [1.0, 0.0]);
        assert_eq!(probs[1], [0.0, 1.0]);
    }

    #[test]
    fn constant_features_give_single_leaf_trees() {
        let features = matrix(vec![vec![3.5, 3.5]; 8]);
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let forest = train_forest(&features, &labels, &quick_params(20, 1), 5).unwrap();
        for tree in &forest.trees {
            assert_eq!(tree.nodes.len(), 1);
            match &tree.nodes[0] {
                Node::Leaf { proba } => {
                    assert!((proba[0] + proba[1] - 1.0).abs() < 1e-12);
                }
                other => panic!("expected leaf, got {other:?}"),
            }
        }
    }

    #[test]
    fn xor_dataset_is_fit_exactly() {
        let corners: [([f32; 2], u8); 4] = [
            ([0.0, 0.0], 0),
            ([0.0, 1.0], 1),
            ([1.0, 0.0], 1),
            ([1.0, 1.0], 0),
        ];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..25 {
            for (xy, y) in corners {
                rows.push(xy.to_vec());
                labels.push(y);
            }
        }
        let features = matrix(rows);
        let forest = train_forest(&features, &labels, &quick_params(100, 1), 11).unwrap();
        let probs = predict_proba(&forest, &features).unwrap();
        let correct = probs
            .iter()
            .zip(&labels)
            .filter(|(p, &y)| (p[1] > p[0]) == (y == 1))
            .count();
        assert_eq!(correct, labels.len(), "training accuracy must be 1.0");
    }

    #[test]
    fn single_leaf_forest_predicts_priors() {
        let forest = Forest {
            trees: vec![Tree {
                nodes: vec![Node::Leaf { proba: [0.7, 0.3] }],
                seed: 0,
            }],
            n_features: 3,
        };
        let features = matrix(vec![vec![0.0, 1.0, 2.0], vec![5.0, 5.0, 5.0]]);
        for p in predict_proba(&forest, &features).unwrap() {
            assert_eq!(p, [0.7, 0.3]);
        }
    }

    #[test]
    fn forest_of_identical_trees_equals_single_tree() {
        let features = matrix(vec![
            vec![0.0, 0.2],
            vec![0.9, 0.7],
            vec![0.1, 0.4],
            vec![0.8, 0.9],
        ]);
        let labels = [0, 1, 0, 1];
        let params = CstParams {
            n_trees: 1,
            ..CstParams::default()
        };
        let single = train_forest(&features, &labels, &params, 3).unwrap();
        let doubled = Forest {
            trees: vec![single.trees[0].clone(), single.trees[0].clone()],
            n_features: single.n_features,
        };
        assert_eq!(
            predict_proba(&single, &features).unwrap(),
            predict_proba(&doubled, &features).unwrap()
        );
    }

    #[test]
    fn forest_prediction_matches_per_tree_average() {
        let g = shifted_gaussian(4, 30, 0.0, 1);
        let x = shifted_gaussian(4, 30, 1.0, 2);
        let mut data = g.data().to_vec();
        data.extend_from_slice(x.data());
        let features = FeatureMatrix::new(60, 4, data).unwrap();
        let labels: Vec<u8> = (0..60).map(|i| (i >= 30) as u8).collect();
        let forest = train_forest(&features, &labels, &quick_params(100, 1), 21).unwrap();
        let fast = predict_proba(&forest, &features).unwrap();
        for i in 0..features.n_samples() {
            let mut acc = [0.0f64; 2];
            for tree in &forest.trees {
                let p = tree.predict(features.row(i));
                acc[0] += p[0];
                acc[1] += p[1];
            }
            let n = forest.trees.len() as f64;
            assert!((fast[i][0] - acc[0] / n).abs() <= 1e-12);
            assert!((fast[i][1] - acc[1] / n).abs() <= 1e-12);
        }
    }

    #[test]
    fn log_loss_reference_values() {
        let even = vec![[0.5, 0.5]; 4];
        let labels = [0, 1, 0, 1];
        assert_eq!(
            log_loss(&even, &labels, 1e-15).unwrap(),
            std::f64::consts::LN_2
        );

        let perfect = vec![[1.0, 0.0], [0.0, 1.0]];
        let ll = log_loss(&perfect, &[0, 1], 1e-15).unwrap();
        assert!(ll > 0.0 && ll < 1e-14, "clipped perfect loss {ll}");

        let probs = vec![[0.9, 0.1], [0.1, 0.9]];
        let ll = log_loss(&probs, &[0, 1], 1e-15).unwrap();
        assert!((ll - 0.105360515657826).abs() < 1e-12);

        assert!(matches!(
            log_loss(&probs, &[0, 1, 0], 1e-15).unwrap_err(),
            CstError::LengthMismatch { .. }
        ));
    }

    #[test]
    fn folds_are_stratified_within_one_sample() {
        let labels: Vec<u8> = std::iter::repeat(0u8)
            .take(30)
            .chain(std::iter::repeat(1u8).take(50))
            .collect();
        let mut rng = CounterRng::new(8);
        let n_folds = 3;
        let folds = stratified_folds(&labels, n_folds, &mut rng);
        for class in [0u8, 1u8] {
            let total = labels.iter().filter(|&&y| y == class).count();
            let even = total as f64 / n_folds as f64;
            for fold in 0..n_folds {
                let count = labels
                    .iter()
                    .zip(&folds)
                    .filter(|(&y, &f)| y == class && f == fold)
                    .count();
                assert!(
                    (count as f64 - even).abs() <= 1.0,
                    "class {class} fold {fold}: {count} vs even share {even}"
                );
            }
        }
    }

    #[test]
    fn identical_seeds_reproduce_reports_bit_exactly() {
        let g = shifted_gaussian(4, 24, 2.0, 10);
        let x = shifted_gaussian(4, 24, 0.0, 11);
        let params = CstParams {
            n_trees: 15,
            n_repeats: 5,
            master_seed: 99,
            ..CstParams::default()
        };
        let a = two_sample_test(&g, &x, &params).unwrap();
        let b = two_sample_test(&g, &x, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn label_flip_with_fixed_folds_gives_identical_loss() {
        let g = shifted_gaussian(4, 20, 1.0, 31);
        let x = shifted_gaussian(4, 20, 0.0, 32);
        let mut data = g.data().to_vec();
        data.extend_from_slice(x.data());
        let combined = FeatureMatrix::new(40, 4, data).unwrap();
        let labels: Vec<u8> = (0..40).map(|i| (i >= 20) as u8).collect();
        let flipped: Vec<u8> = labels.iter().map(|&y| 1 - y).collect();

        let mut fold_rng = CounterRng::new(77);
        let folds = stratified_folds(&labels, 2, &mut fold_rng);
        let params = quick_params(25, 1);
        let a = cv_logloss(&combined, &labels, &folds, 2, &params, 123).unwrap();
        let b = cv_logloss(&combined, &flipped, &folds, 2, &params, 123).unwrap();
        assert_eq!(a, b, "label symmetry must hold bit-for-bit");
    }

    #[test]
    fn chance_level_and_separated_smoke() {
        // Same distribution: chance-level log loss near ln 2.
        let g = shifted_gaussian(4, 60, 0.0, 41);
        let x = shifted_gaussian(4, 60, 0.0, 42);
        let params = CstParams {
            n_trees: 40,
            n_repeats: 10,
            master_seed: 7,
            ..CstParams::default()
        };
        let report = two_sample_test(&g, &x, &params).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!(
            (report.mean_logloss - ln2).abs() < 0.15,
            "chance-level mean {}",
            report.mean_logloss
        );
        assert_eq!(report.per_repeat.len(), 10);
        // Aggregates are consistent with the per-repeat list.
        let mean = report.per_repeat.iter().sum::<f64>() / 10.0;
        assert!((report.mean_logloss - mean).abs() <= 1e-12);
        let var = report
            .per_repeat
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / 10.0;
        assert!((report.std_logloss - var.sqrt()).abs() <= 1e-12);

        // Widely separated clusters: near-zero log loss.
        let far = shifted_gaussian(4, 60, 10.0, 43);
        let report = two_sample_test(&far, &x, &params).unwrap();
        assert!(
            report.mean_logloss < 0.05,
            "separated mean {}",
            report.mean_logloss
        );
    }

    #[test]
    fn discrimination_rises_monotonically_along_interpolation() {
        // G sliding toward X: log loss must rise toward chance level.
        let x = shifted_gaussian(4, 60, 0.0, 51);
        let params = CstParams {
            n_trees: 30,
            n_repeats: 5,
            master_seed: 3,
            ..CstParams::default()
        };
        let steps = 8;
        let mut losses = Vec::new();
        for t in 0..steps {
            let shift = 8.0 * (1.0 - t as f64 / (steps - 1) as f64);
            let g = shifted_gaussian(4, 60, shift, 60 + t as u64);
            losses.push(two_sample_test(&g, &x, &params).unwrap().mean_logloss);
        }
        let epochs: Vec<f64> = (0..steps).map(|t| t as f64).collect();
        let rho = crate::analysis::spearman(&epochs, &losses).unwrap();
        assert!(rho >= 0.9, "Spearman {rho} for losses {losses:?}");
    }

    #[test]
    fn input_validation_errors() {
        let g = shifted_gaussian(3, 4, 0.0, 1);
        let x = shifted_gaussian(4, 4, 0.0, 2);
        assert!(matches!(
            two_sample_test(&g, &x, &CstParams::default()).unwrap_err(),
            CstError::DimensionMismatch { .. }
        ));

        let tiny = shifted_gaussian(3, 1, 0.0, 3);
        let other = shifted_gaussian(3, 8, 0.0, 4);
        assert!(matches!(
            two_sample_test(&tiny, &other, &CstParams::default()).unwrap_err(),
            CstError::TooFewPerClass { class: 0, .. }
        ));

        let features = matrix(vec![vec![0.0], vec![1.0]]);
        assert!(matches!(
            train_forest(&features, &[0, 0], &CstParams::default(), 1).unwrap_err(),
            CstError::SingleClass
        ));

        let bad = CstParams {
            n_folds: 1,
            ..CstParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = CstParams {
            clip_epsilon: 0.7,
            ..CstParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
