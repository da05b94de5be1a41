//! Autoregressive model with exogenous regressors, estimated by ordinary
//! least squares.
//!
//! The regression for position `t` is
//! `y[t] ~ y[t-1..=t-p] ++ exog[t] ++ seasonal dummies ++ 1`.
//! Columns with zero variance are dropped (coefficient fixed at 0); a
//! rank-deficient design falls back to a tiny ridge penalty and records a
//! warning.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FitInfo, ParameterLayout};
use crate::features::FeatureMask;
use crate::{Error, Result};

pub const RIDGE_FALLBACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArxConfig {
    pub order: usize,
    pub exogenous: FeatureMask,
    pub seasonal_dummies: bool,
    /// Period (bins) of the seasonal dummies; 14 half-day bins make a week.
    pub seasonal_period: usize,
}

impl Default for ArxConfig {
    fn default() -> Self {
        Self { order: 48, exogenous: FeatureMask::exogenous(), seasonal_dummies: false, seasonal_period: 14 }
    }
}

impl ArxConfig {
    fn n_dummies(&self) -> usize {
        if self.seasonal_dummies {
            self.seasonal_period.saturating_sub(1)
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxModel {
    pub config: ArxConfig,
    pub n_exog: usize,
    /// `[ar (p), exog (q), seasonal (period − 1 or 0), intercept]`.
    pub coef: Vec<f64>,
    pub fit_info: FitInfo,
}

/// Flat row-major exogenous matrix aligned with the target series.
#[derive(Debug, Clone, Copy)]
pub struct Exog<'a> {
    pub data: &'a [f64],
    pub width: usize,
}

impl<'a> Exog<'a> {
    pub fn none() -> Self {
        Exog { data: &[], width: 0 }
    }

    fn row(&self, t: usize) -> &'a [f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }
}

fn design_row(cfg: &ArxConfig, y: &[f64], exog: &Exog, t: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend((1..=cfg.order).map(|l| y[t - l]));
    if exog.width > 0 {
        out.extend_from_slice(exog.row(t));
    }
    let nd = cfg.n_dummies();
    for j in 1..=nd {
        out.push(if t % cfg.seasonal_period == j { 1.0 } else { 0.0 });
    }
    out.push(1.0);
}

pub fn fit_arx(y: &[f64], exog: Exog, cfg: &ArxConfig) -> Result<ArxModel> {
    let p = cfg.order;
    if p == 0 {
        return Err(Error::config("autoregressive order must be at least 1"));
    }
    if cfg.seasonal_dummies && cfg.seasonal_period < 2 {
        return Err(Error::config("seasonal period must be at least 2"));
    }
    let n = y.len();
    if exog.width > 0 && exog.data.len() != n * exog.width {
        return Err(Error::Shape { expected: n * exog.width, actual: exog.data.len() });
    }
    let k = p + exog.width + cfg.n_dummies() + 1;
    if n <= p + exog.width + 1 || n - p < k {
        return Err(Error::invalid(format!("series of length {n} too short for {k} regressors")));
    }

    let rows = n - p;
    let mut x = DMatrix::<f64>::zeros(rows, k);
    let mut buf = Vec::with_capacity(k);
    for (i, t) in (p..n).enumerate() {
        design_row(cfg, y, &exog, t, &mut buf);
        for (j, v) in buf.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    // Keep the intercept plus every column that varies.
    let keep: Vec<usize> = (0..k)
        .filter(|&j| j == k - 1 || x.column(j).iter().any(|v| *v != x[(0, j)]))
        .collect();
    let xs = x.select_columns(&keep);
    let yv = DVector::from_iterator(rows, y[p..].iter().copied());

    let mut info = FitInfo { epochs: 1, ops: (rows * keep.len() * keep.len() * 2) as u64, ..Default::default() };
    let beta = match solve_qr(&xs, &yv) {
        Some(b) => b,
        None => {
            info.warnings.push(format!("rank-deficient design; ridge fallback with penalty {RIDGE_FALLBACK}"));
            let m = keep.len();
            let mut aug = DMatrix::<f64>::zeros(rows + m, m);
            aug.view_mut((0, 0), (rows, m)).copy_from(&xs);
            for j in 0..m {
                aug[(rows + j, j)] = RIDGE_FALLBACK.sqrt();
            }
            let mut yaug = DVector::<f64>::zeros(rows + m);
            yaug.rows_mut(0, rows).copy_from(&yv);
            solve_qr(&aug, &yaug).ok_or_else(|| Error::Numerical("least-squares solve failed".into()))?
        }
    };
    let mut coef = vec![0.0; k];
    for (b, &j) in beta.iter().zip(&keep) {
        coef[j] = *b;
    }
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("non-finite autoregressive coefficients".into()));
    }
    let mut model = ArxModel { config: cfg.clone(), n_exog: exog.width, coef, fit_info: info };
    let fitted = model.fitted(y, exog, p..n)?;
    let loss = fitted.iter().zip(&y[p..]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / rows as f64;
    model.fit_info.train_losses.push(loss);
    Ok(model)
}

/// Least squares via QR; `None` when R is numerically singular.
fn solve_qr(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = diag_max * 1e-10 * (x.nrows().max(x.ncols()) as f64);
    if diag_max == 0.0 || r.diagonal().iter().any(|v| v.abs() <= tol) {
        return None;
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
}

impl ArxModel {
    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn intercept(&self) -> f64 {
        *self.coef.last().expect("intercept present")
    }

    /// One-step forecast of `y[t]` from `y[..t]` and `exog[t]`, unclipped.
    pub fn raw_forecast(&self, y: &[f64], exog: Exog, t: usize) -> Result<f64> {
        if t < self.config.order || t > y.len() {
            return Err(Error::invalid(format!("position {t} lacks {} lagged values", self.config.order)));
        }
        if exog.width != self.n_exog {
            return Err(Error::Shape { expected: self.n_exog, actual: exog.width });
        }
        let mut row = Vec::with_capacity(self.coef.len());
        design_row(&self.config, y, &exog, t, &mut row);
        Ok(row.iter().zip(&self.coef).map(|(a, b)| a * b).sum())
    }

    /// One-step forecasts for positions `range`, using observed history.
    pub fn fitted(&self, y: &[f64], exog: Exog, range: std::ops::Range<usize>) -> Result<Vec<f64>> {
        range.map(|t| self.raw_forecast(y, exog, t)).collect()
    }

    /// One-step forecasts clipped at zero.
    pub fn forecast(&self, y: &[f64], exog: Exog, range: std::ops::Range<usize>) -> Result<Vec<f64>> {
        Ok(self.fitted(y, exog, range)?.into_iter().map(|v| v.max(0.0)).collect())
    }

    pub fn layout(&self) -> ParameterLayout {
        let mut l = ParameterLayout::default();
        l.push("ar", self.config.order);
        l.push("exog", self.n_exog);
        l.push("seasonal", self.config.n_dummies());
        l.push("intercept", 1);
        l
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.coef.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::r2;

    fn cfg(order: usize) -> ArxConfig {
        ArxConfig { order, exogenous: FeatureMask(vec![]), ..Default::default() }
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let mut y = vec![5.0];
        for _ in 0..60 {
            y.push(0.8 * y.last().unwrap());
        }
        let m = fit_arx(&y, Exog::none(), &cfg(1)).unwrap();
        assert!((m.coef[0] - 0.8).abs() < 1e-9, "{}", m.coef[0]);
        assert!(m.intercept().abs() < 1e-9);
    }

    #[test]
    fn constant_series_is_intercept_only() {
        let y = vec![2.5; 40];
        let m = fit_arx(&y, Exog::none(), &cfg(3)).unwrap();
        assert!(m.coef[..3].iter().all(|c| *c == 0.0));
        assert!((m.intercept() - 2.5).abs() < 1e-12);
        assert!(m.fit_info.warnings.is_empty());
        let f = m.forecast(&y, Exog::none(), 3..40).unwrap();
        assert!(f.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn exogenous_copy_of_target_fits_perfectly() {
        let y: Vec<f64> = (0..80).map(|k| ((k * 7919) % 13) as f64 + (k as f64 * 0.3).sin()).collect();
        let m = fit_arx(&y, Exog { data: &y, width: 1 }, &cfg(2)).unwrap();
        let f = m.fitted(&y, Exog { data: &y, width: 1 }, 2..80).unwrap();
        assert!(r2(&y[2..], &f).unwrap().unwrap() >= 0.999);
    }

    #[test]
    fn collinear_design_uses_ridge() {
        let y: Vec<f64> = (0..50).map(|k| (k as f64 * 0.7).sin() + 2.0).collect();
        let ex: Vec<f64> = y.iter().flat_map(|v| [*v, 2.0 * v]).collect();
        let m = fit_arx(&y, Exog { data: &ex, width: 2 }, &cfg(1)).unwrap();
        assert_eq!(m.fit_info.warnings.len(), 1);
        assert!(m.coef.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn seasonal_dummies_capture_weekly_profile() {
        let y: Vec<f64> = (0..200).map(|k| [1.0, 0.0, 3.0, 0.5, 0.0, 0.0, 2.0][k % 7]).collect();
        let c = ArxConfig { seasonal_dummies: true, seasonal_period: 7, ..cfg(1) };
        let m = fit_arx(&y, Exog::none(), &c).unwrap();
        let f = m.forecast(&y, Exog::none(), 1..200).unwrap();
        assert!(f.iter().zip(&y[1..]).all(|(a, b)| (a - b).abs() < 1e-6));
        assert_eq!(m.layout().total(), m.coef.len());
    }

    #[test]
    fn negatives_clipped_and_short_series_rejected() {
        let y: Vec<f64> = (0..30).map(|k| 10.0 - k as f64).collect();
        let m = fit_arx(&y, Exog::none(), &cfg(1)).unwrap();
        assert!(m.forecast(&y, Exog::none(), 1..30).unwrap().iter().all(|v| *v >= 0.0));
        assert!(fit_arx(&y[..2], Exog::none(), &cfg(1)).is_err());
        assert!(fit_arx(&y, Exog::none(), &cfg(0)).is_err());
    }
}
