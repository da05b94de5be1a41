//! Gradient-boosted regression trees trained on the pinball loss.
//!
//! Each stage fits a depth-limited tree to the negative pinball subgradient
//! with exact greedy split search (constant unit hessian), so leaf values are
//! means of the negative subgradient inside the leaf.

use serde::{Deserialize, Serialize};

use super::pinball::{pinball_grad, pinball_loss, PinballConfig};
use super::{FitInfo, ParameterLayout, Tabular};
use crate::metrics::quantile;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub alpha: PinballConfig,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_estimators: 50,
            max_depth: 5,
            learning_rate: 0.1,
            min_samples_leaf: 1,
            alpha: PinballConfig::default(),
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::config("estimators, depth and min samples per leaf must be positive"));
        }
        if self.max_depth > 16 {
            return Err(Error::config("max_depth above 16 is not supported"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(())
    }
}

/// A complete binary tree of fixed depth stored in heap order.
///
/// Internal node `i` has children `2i + 1` and `2i + 2`. A node that did not
/// split carries feature `-1` and routes every row left, so the layout does
/// not depend on the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub depth: usize,
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub leaf: Vec<f64>,
}

impl RegressionTree {
    pub fn n_internal(depth: usize) -> usize {
        (1 << depth) - 1
    }

    pub fn n_parameters(depth: usize) -> usize {
        2 * Self::n_internal(depth) + (1 << depth)
    }

    /// Fit to `targets` by least squares. `presorted[f]` lists row indices
    /// ordered by feature `f` (ties by row index).
    pub fn fit(x: &Tabular, targets: &[f64], presorted: &[Vec<u32>], depth: usize, min_leaf: usize) -> Self {
        let n = x.n_rows();
        let n_internal = Self::n_internal(depth);
        let mut feature = vec![-1i32; n_internal];
        let mut threshold = vec![0.0; n_internal];
        let mut splittable = vec![false; n_internal];
        if n_internal > 0 {
            splittable[0] = true;
        }
        let mut node_of = vec![0usize; n];

        for level in 0..depth {
            let first = (1 << level) - 1;
            let width = 1 << level;
            let mut total = vec![(0.0f64, 0usize, 0.0f64); width];
            for (i, &node) in node_of.iter().enumerate() {
                let t = &mut total[node - first];
                t.0 += targets[i];
                t.1 += 1;
                t.2 += targets[i] * targets[i];
            }

            // (gain, feature, threshold) per node of this level
            let mut best: Vec<Option<(f64, usize, f64)>> = vec![None; width];
            let mut left: Vec<(f64, usize, Option<f64>)> = vec![(0.0, 0, None); width];
            for (f, order) in presorted.iter().enumerate() {
                left.iter_mut().for_each(|l| *l = (0.0, 0, None));
                for &row in order {
                    let row = row as usize;
                    let j = node_of[row] - first;
                    if !splittable[first + j] {
                        continue;
                    }
                    let v = x.get(row, f);
                    let (s, cnt, ss) = total[j];
                    let l = &mut left[j];
                    if let Some(prev) = l.2 {
                        if v > prev && l.1 >= min_leaf && cnt - l.1 >= min_leaf {
                            let (sl, nl) = (l.0, l.1 as f64);
                            let (sr, nr) = (s - sl, (cnt - l.1) as f64);
                            let gain = sl * sl / nl + sr * sr / nr - s * s / cnt as f64;
                            let tol = 1e-12 * ss;
                            let better = match best[j] {
                                None => gain > tol,
                                Some((g, _, _)) => gain > g + tol,
                            };
                            if better {
                                best[j] = Some((gain, f, prev));
                            }
                        }
                    }
                    l.0 += targets[row];
                    l.1 += 1;
                    l.2 = Some(v);
                }
            }

            for j in 0..width {
                let id = first + j;
                match best[j] {
                    Some((_, f, thr)) if splittable[id] => {
                        feature[id] = f as i32;
                        threshold[id] = thr;
                        if level + 1 < depth {
                            splittable[2 * id + 1] = true;
                            splittable[2 * id + 2] = true;
                        }
                    }
                    _ => {}
                }
            }
            for (i, node) in node_of.iter_mut().enumerate() {
                let id = *node;
                let go_right = feature[id] >= 0 && !(x.get(i, feature[id] as usize) <= threshold[id]);
                *node = 2 * id + 1 + go_right as usize;
            }
        }

        let mut sums = vec![(0.0, 0usize); 1 << depth];
        for (i, &node) in node_of.iter().enumerate() {
            let s = &mut sums[node - n_internal];
            s.0 += targets[i];
            s.1 += 1;
        }
        let leaf = sums.iter().map(|&(s, c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
        Self { depth, feature, threshold, leaf }
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut id = 0;
        for _ in 0..self.depth {
            let f = self.feature[id];
            let go_right = f >= 0 && !(row[f as usize] <= self.threshold[id]);
            id = 2 * id + 1 + go_right as usize;
        }
        id - Self::n_internal(self.depth)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.leaf[self.leaf_index(row)]
    }

    fn push_parameters(&self, out: &mut Vec<f64>) {
        out.extend(self.feature.iter().map(|&f| f as f64));
        out.extend_from_slice(&self.threshold);
        out.extend_from_slice(&self.leaf);
    }

    fn from_parameters(depth: usize, p: &[f64]) -> Self {
        let ni = Self::n_internal(depth);
        Self {
            depth,
            feature: p[..ni].iter().map(|&f| f as i32).collect(),
            threshold: p[ni..2 * ni].to_vec(),
            leaf: p[2 * ni..].to_vec(),
        }
    }
}

/// Row indices sorted by each feature; ties broken by row index.
pub fn presort(x: &Tabular) -> Vec<Vec<u32>> {
    (0..x.n_features())
        .map(|f| {
            let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
            idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)).then(a.cmp(&b)));
            idx
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub config: GbtConfig,
    pub n_features: usize,
    /// Initial prediction: the alpha-quantile of the training target.
    pub init: f64,
    pub trees: Vec<RegressionTree>,
    pub fit_info: FitInfo,
}

/// Fit a boosted ensemble. The seed is accepted for interface symmetry; the
/// exact greedy search uses no randomness.
pub fn fit_gbt(data: &Tabular, cfg: &GbtConfig, _seed: u64) -> Result<GbtModel> {
    cfg.validate()?;
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::invalid("boosted trees need at least two training rows"));
    }
    let alpha = cfg.alpha.alpha();
    let y = data.targets();
    let init = quantile(y, alpha).expect("non-empty targets");
    let presorted = presort(data);
    let mut pred = vec![init; n];
    let mut residual = vec![0.0; n];
    let mut trees = Vec::with_capacity(cfg.n_estimators);
    let mut losses = Vec::with_capacity(cfg.n_estimators + 1);
    losses.push(pinball_loss(y, &pred, alpha)?);

    for _ in 0..cfg.n_estimators {
        for i in 0..n {
            residual[i] = -pinball_grad(y[i], pred[i], alpha);
        }
        let tree = RegressionTree::fit(data, &residual, &presorted, cfg.max_depth, cfg.min_samples_leaf);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += cfg.learning_rate * tree.predict_row(data.row(i));
        }
        losses.push(pinball_loss(y, &pred, alpha)?);
        trees.push(tree);
    }

    let ops = (cfg.n_estimators * (cfg.max_depth * data.n_features() + cfg.max_depth + 2) * n) as u64;
    Ok(GbtModel {
        config: cfg.clone(),
        n_features: data.n_features(),
        init,
        trees,
        fit_info: FitInfo {
            epochs: 1,
            train_losses: losses,
            valid_losses: Vec::new(),
            best_epoch: 0,
            ops,
            warnings: Vec::new(),
        },
    })
}

impl GbtModel {
    /// Raw ensemble output: `init + lr * sum(trees)`.
    pub fn predict_row_normalized(&self, row: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        self.init + self.config.learning_rate * s
    }

    pub fn predict_normalized(&self, rows: &Tabular) -> Result<Vec<f64>> {
        self.check_columns(rows.n_features())?;
        Ok((0..rows.n_rows()).map(|i| self.predict_row_normalized(rows.row(i))).collect())
    }

    /// Denormalize by each row's scale (EVSE nominal power) and clip at 0.
    pub fn predict_kw(&self, rows: &Tabular, scales: &[f64]) -> Result<Vec<f64>> {
        if scales.len() != rows.n_rows() {
            return Err(Error::Shape { expected: rows.n_rows(), actual: scales.len() });
        }
        let norm = self.predict_normalized(rows)?;
        Ok(norm.iter().zip(scales).map(|(v, s)| (v * s).max(0.0)).collect())
    }

    /// Per-tree outputs (without the learning rate) for one row.
    pub fn tree_outputs<'a>(&'a self, row: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.trees.iter().map(move |t| t.predict_row(row))
    }

    fn check_columns(&self, n: usize) -> Result<()> {
        if n != self.n_features {
            return Err(Error::Shape { expected: self.n_features, actual: n });
        }
        Ok(())
    }

    pub fn layout(&self) -> ParameterLayout {
        let ni = RegressionTree::n_internal(self.config.max_depth);
        let mut l = ParameterLayout::default();
        l.push("init", 1);
        for t in 0..self.trees.len() {
            l.push(format!("tree{t}.feature"), ni);
            l.push(format!("tree{t}.threshold"), ni);
            l.push(format!("tree{t}.leaf"), 1 << self.config.max_depth);
        }
        l
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut p = vec![self.init];
        for t in &self.trees {
            t.push_parameters(&mut p);
        }
        p
    }

    pub fn from_parameters(config: GbtConfig, n_features: usize, params: &[f64]) -> Result<Self> {
        config.validate()?;
        let per_tree = RegressionTree::n_parameters(config.max_depth);
        if params.is_empty() || (params.len() - 1) % per_tree != 0 {
            return Err(Error::invalid("parameter vector does not match tree layout"));
        }
        let trees = params[1..]
            .chunks(per_tree)
            .map(|c| RegressionTree::from_parameters(config.max_depth, c))
            .collect();
        Ok(Self { config, n_features, init: params[0], trees, fit_info: FitInfo::default() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_data(rows: usize, feats: usize, seed: u64) -> Tabular {
        let mut r = rng::seeded(seed);
        let mut t = Tabular::new(feats);
        for _ in 0..rows {
            let x: Vec<f64> = (0..feats).map(|_| r.random::<f64>()).collect();
            let y = x[0] * 2.0 + (x[feats - 1] * 6.0).sin() + 0.1 * r.random::<f64>();
            t.push(&x, y).unwrap();
        }
        t
    }

    #[test]
    fn constant_target_is_absorbed_by_init() {
        let mut t = Tabular::new(2);
        for i in 0..20 {
            t.push(&[i as f64, (i * 3 % 7) as f64], 4.25).unwrap();
        }
        let m = fit_gbt(&t, &GbtConfig::default(), 0).unwrap();
        assert_eq!(m.init, 4.25);
        assert!(m.predict_normalized(&t).unwrap().iter().all(|&p| p == 4.25));
        assert_eq!(*m.fit_info.train_losses.last().unwrap(), 0.0);
    }

    #[test]
    fn single_feature_stump_matches_enumeration() {
        // 4 rows, 1 feature: enumerate all 3 thresholds by hand.
        let mut t = Tabular::new(1);
        for (x, y) in [(1.0, 0.0), (2.0, 0.1), (3.0, 5.0), (4.0, 6.0)] {
            t.push(&[x], y).unwrap();
        }
        let cfg = GbtConfig { n_estimators: 1, max_depth: 1, ..Default::default() };
        let m = fit_gbt(&t, &cfg, 0).unwrap();
        // init = 0.7-quantile of [0, 0.1, 5, 6] = 5.0 + 0.1 * 1.0 = 5.1
        assert!((m.init - 5.1).abs() < 1e-12);
        // residuals: [0.7-1, 0.7-1, 0.7-1, 0.7] -> best split isolates row 4
        let tree = &m.trees[0];
        assert_eq!(tree.feature[0], 0);
        assert_eq!(tree.threshold[0], 3.0);
        assert!((tree.leaf[0] + 0.3).abs() < 1e-12);
        assert!((tree.leaf[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn deterministic_fit() {
        let t = random_data(200, 4, 3);
        let a = fit_gbt(&t, &GbtConfig::default(), 1).unwrap();
        let b = fit_gbt(&t, &GbtConfig::default(), 1).unwrap();
        assert_eq!(a.parameters(), b.parameters());
    }

    #[test]
    fn parameter_round_trip() {
        let t = random_data(100, 3, 9);
        let m = fit_gbt(&t, &GbtConfig { n_estimators: 7, ..Default::default() }, 0).unwrap();
        let p = m.parameters();
        assert_eq!(p.len(), m.layout().total());
        let back = GbtModel::from_parameters(m.config.clone(), 3, &p).unwrap();
        assert_eq!(back.predict_normalized(&t).unwrap(), m.predict_normalized(&t).unwrap());
    }

    #[test]
    fn column_mismatch() {
        let t = random_data(50, 3, 1);
        let m = fit_gbt(&t, &GbtConfig { n_estimators: 2, ..Default::default() }, 0).unwrap();
        let other = random_data(5, 2, 2);
        assert!(matches!(m.predict_normalized(&other), Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_rows_rejected() {
        assert!(fit_gbt(&Tabular::new(2), &GbtConfig::default(), 0).is_err());
    }

    #[test]
    fn identical_rows_with_different_targets_still_fit() {
        let mut t = Tabular::new(2);
        for i in 0..10 {
            t.push(&[1.0, 1.0], i as f64).unwrap();
        }
        let m = fit_gbt(&t, &GbtConfig::default(), 0).unwrap();
        assert!(m.predict_normalized(&t).unwrap().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn kw_predictions_are_clipped() {
        let mut t = Tabular::new(1);
        for i in 0..10 {
            t.push(&[i as f64], -1.0).unwrap();
        }
        let m = fit_gbt(&t, &GbtConfig { n_estimators: 3, ..Default::default() }, 0).unwrap();
        let kw = m.predict_kw(&t, &[22.0; 10]).unwrap();
        assert!(kw.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn training_loss_mostly_non_increasing() {
        // Statistical property: non-increasing after stage 1 on >= 95 of 100 seeds.
        let mut ok = 0;
        for seed in 0..100 {
            let t = random_data(60, 3, 1000 + seed);
            let cfg = GbtConfig { n_estimators: 20, max_depth: 3, ..Default::default() };
            let m = fit_gbt(&t, &cfg, seed).unwrap();
            let l = &m.fit_info.train_losses;
            if l[1..].windows(2).all(|w| w[1] <= w[0] + 1e-12) {
                ok += 1;
            }
        }
        assert!(ok >= 95, "{ok}/100 seeds monotone");
    }
}
