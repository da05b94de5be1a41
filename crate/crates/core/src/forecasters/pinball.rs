//! Quantile (pinball) loss and its subgradient.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PinballConfig {
    alpha: f64,
}

impl PinballConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self { alpha })
        } else {
            Err(Error::config(format!("pinball alpha must lie in (0, 1), got {alpha}")))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for PinballConfig {
    fn default() -> Self {
        Self { alpha: 0.7 }
    }
}

impl TryFrom<f64> for PinballConfig {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PinballConfig> for f64 {
    fn from(c: PinballConfig) -> f64 {
        c.alpha
    }
}

/// Loss of a single residual `y - yhat`.
#[inline]
pub fn pinball(y: f64, yhat: f64, alpha: f64) -> f64 {
    let r = y - yhat;
    (alpha * r).max((alpha - 1.0) * r)
}

/// Derivative of [`pinball`] with respect to `yhat`; 0 at the kink.
#[inline]
pub fn pinball_grad(y: f64, yhat: f64, alpha: f64) -> f64 {
    if y > yhat {
        -alpha
    } else if y < yhat {
        1.0 - alpha
    } else {
        0.0
    }
}

/// Mean pinball loss.
pub fn pinball_loss(y: &[f64], yhat: &[f64], alpha: f64) -> Result<f64> {
    check(y, yhat)?;
    let sum: f64 = y.iter().zip(yhat).map(|(&a, &b)| pinball(a, b, alpha)).sum();
    Ok(sum / y.len() as f64)
}

/// Per-element derivative of [`pinball_loss`] with respect to `yhat`.
pub fn pinball_subgradient(y: &[f64], yhat: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check(y, yhat)?;
    let n = y.len() as f64;
    Ok(y.iter().zip(yhat).map(|(&a, &b)| pinball_grad(a, b, alpha) / n).collect())
}

fn check(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Shape { expected: y.len(), actual: yhat.len() });
    }
    if y.is_empty() {
        return Err(Error::invalid("pinball loss needs at least one element"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tabulated_values() {
        assert_eq!(pinball_loss(&[1.0], &[1.0], 0.7).unwrap(), 0.0);
        assert_eq!(pinball_loss(&[1.0], &[0.0], 0.7).unwrap(), 0.7);
        assert!((pinball_loss(&[0.0], &[1.0], 0.7).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn subgradient_branches() {
        assert_eq!(pinball_subgradient(&[1.0], &[0.0], 0.7).unwrap(), vec![-0.7]);
        assert!((pinball_subgradient(&[0.0], &[1.0], 0.7).unwrap()[0] - 0.3).abs() < 1e-15);
        assert_eq!(pinball_subgradient(&[1.0], &[1.0], 0.7).unwrap(), vec![0.0]);
    }

    #[test]
    fn length_mismatch() {
        assert!(pinball_loss(&[1.0, 2.0], &[1.0], 0.7).is_err());
    }

    #[test]
    fn alpha_validated() {
        assert!(PinballConfig::new(0.0).is_err());
        assert!(PinballConfig::new(1.0).is_err());
        assert_eq!(PinballConfig::default().alpha(), 0.7);
    }

    proptest! {
        #[test]
        fn nonnegative_convex_homogeneous(
            y in -100.0f64..100.0, a in -100.0f64..100.0, b in -100.0f64..100.0,
            alpha in 0.01f64..0.99, c in 0.01f64..100.0,
        ) {
            let l = |p: f64| pinball(y, p, alpha);
            prop_assert!(l(a) >= 0.0);
            prop_assert!(l(0.5 * (a + b)) <= 0.5 * (l(a) + l(b)) + 1e-9);
            let scaled = pinball(c * y, c * a, alpha);
            prop_assert!((scaled - c * l(a)).abs() <= 1e-9 * (1.0 + scaled.abs()));
        }
    }
}
