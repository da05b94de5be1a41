//! Feature engineering and normalization.
//!
//! Every feature at row `k` is computed from bins `<= k` only; the target of
//! row `k` is the normalized demand of bin `k + 1`.

mod columns;
mod frame;
mod normalization;
mod transforms;

pub use columns::{FeatureColumn, FeatureMask, ALL_COLUMNS, DEMAND_LAGS, ROLLING_LAGS};
pub use frame::{build_feature_frame, FeatureFrame, FeatureOptions, LAG_WARMUP};
pub use normalization::{NormalizationSpec, CHARGE_HOURS_CAP};
pub use transforms::{
    activity_score, cyclical_encode, downtime_series, ema, linear_extrapolation, log_delta, rolling_features,
    rolling_std, Cyclical, RollingColumns, LOG_DELTA_EPS,
};
