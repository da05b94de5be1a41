use crate::{Error, Result};

/// Lag-`m` seasonal naive forecasts for positions `m..n`: entry `i` of the
/// output forecasts `series[m + i]` as `series[i]`.
pub fn seasonal_naive(series: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::config("seasonal lag must be positive"));
    }
    if series.len() <= m {
        return Err(Error::invalid(format!("series of length {} has no position at or beyond lag {m}", series.len())));
    }
    Ok(series[..series.len() - m].to_vec())
}

/// Forecast for a single position `k` of `series`.
pub fn seasonal_naive_at(series: &[f64], m: usize, k: usize) -> Result<f64> {
    if k < m || k >= series.len() + m {
        return Err(Error::invalid(format!("position {k} not forecastable with lag {m}")));
    }
    Ok(series[k - m])
}
