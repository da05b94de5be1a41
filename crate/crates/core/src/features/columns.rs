use serde::{Deserialize, Serialize};

pub const DEMAND_LAGS: [usize; 4] = [0, 1, 5, 48];
pub const ROLLING_LAGS: [usize; 3] = [0, 24, 48];

/// Feature columns in their frozen export order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureColumn {
    HourSin,
    HourCos,
    DaySin,
    DayCos,
    WeekSin,
    WeekCos,
    ActivityScore,
    Downtime,
    Sessions,
    AvgChargeHours,
    DemandLag0,
    DemandLag1,
    DemandLag5,
    DemandLag48,
    RollingStdLag0,
    RollingStdLag24,
    RollingStdLag48,
    EmaLag0,
    EmaLag24,
    EmaLag48,
    LogDelta,
    LinearExtrapolation,
    NominalPowerNorm,
}

use FeatureColumn::*;

pub const ALL_COLUMNS: [FeatureColumn; 23] = [
    HourSin,
    HourCos,
    DaySin,
    DayCos,
    WeekSin,
    WeekCos,
    ActivityScore,
    Downtime,
    Sessions,
    AvgChargeHours,
    DemandLag0,
    DemandLag1,
    DemandLag5,
    DemandLag48,
    RollingStdLag0,
    RollingStdLag24,
    RollingStdLag48,
    EmaLag0,
    EmaLag24,
    EmaLag48,
    LogDelta,
    LinearExtrapolation,
    NominalPowerNorm,
];

impl FeatureColumn {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            HourSin => "hour_sin",
            HourCos => "hour_cos",
            DaySin => "day_sin",
            DayCos => "day_cos",
            WeekSin => "week_sin",
            WeekCos => "week_cos",
            ActivityScore => "activity_score",
            Downtime => "downtime",
            Sessions => "sessions",
            AvgChargeHours => "avg_charge_hours",
            DemandLag0 => "demand_lag0",
            DemandLag1 => "demand_lag1",
            DemandLag5 => "demand_lag5",
            DemandLag48 => "demand_lag48",
            RollingStdLag0 => "rolling_std_lag0",
            RollingStdLag24 => "rolling_std_lag24",
            RollingStdLag48 => "rolling_std_lag48",
            EmaLag0 => "ema_lag0",
            EmaLag24 => "ema_lag24",
            EmaLag48 => "ema_lag48",
            LogDelta => "log_delta",
            LinearExtrapolation => "linear_extrapolation",
            NominalPowerNorm => "nominal_power_norm",
        }
    }

    pub fn is_cyclical(self) -> bool {
        matches!(self, HourSin | HourCos | DaySin | DayCos | WeekSin | WeekCos)
    }

    pub fn is_lag(self) -> bool {
        matches!(self, DemandLag1 | DemandLag5 | DemandLag48)
    }

    pub fn is_rolling(self) -> bool {
        matches!(
            self,
            RollingStdLag0 | RollingStdLag24 | RollingStdLag48 | EmaLag0 | EmaLag24 | EmaLag48
        )
    }

    /// Columns scaled by the EVSE nominal power.
    pub fn is_power(self) -> bool {
        self.is_rolling() || matches!(self, DemandLag0 | DemandLag1 | DemandLag5 | DemandLag48 | LinearExtrapolation)
    }
}

/// Ordered subset of feature columns fed to one model family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask(pub Vec<FeatureColumn>);

impl FeatureMask {
    pub fn all() -> Self {
        Self(ALL_COLUMNS.to_vec())
    }

    /// Exogenous regressors of the autoregressive baseline: calendar
    /// encodings, activity score, sessions and average charging time.
    pub fn exogenous() -> Self {
        Self(vec![HourSin, HourCos, DaySin, DayCos, WeekSin, WeekCos, ActivityScore, Sessions, AvgChargeHours])
    }

    /// Boosted trees: everything except the activity score.
    pub fn gbt() -> Self {
        Self(ALL_COLUMNS.iter().copied().filter(|c| *c != ActivityScore).collect())
    }

    /// Recurrent input: no explicit lags or rolling statistics. The current
    /// demand stays in; nominal power enters at the dense layer instead.
    pub fn rnn() -> Self {
        Self(
            ALL_COLUMNS
                .iter()
                .copied()
                .filter(|c| !c.is_lag() && !c.is_rolling() && *c != NominalPowerNorm)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.0.iter().map(|c| c.name()).collect()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().map(|c| c.index()).collect()
    }
}
