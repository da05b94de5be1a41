use std::f64::consts::TAU;

use chrono::{DateTime, Datelike, Timelike, Utc};

pub const LOG_DELTA_EPS: f64 = 1e-9;

/// `exp(-downtime)`: 1 for an active bin, decaying with idle bins.
pub fn activity_score(downtime: u32) -> f64 {
    (-(downtime as f64)).exp()
}

pub fn log_delta(p_k: f64, p_km1: f64) -> f64 {
    (p_k + LOG_DELTA_EPS).ln() - (p_km1 + LOG_DELTA_EPS).ln()
}

/// Bins since the last non-zero demand (0 for an active bin). Leading idle
/// bins count from the start of the series.
pub fn downtime_series(values: &[f64]) -> Vec<u32> {
    let mut last_active: Option<usize> = None;
    values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if v > 0.0 {
                last_active = Some(k);
                0
            } else {
                match last_active {
                    Some(j) => (k - j) as u32,
                    None => (k + 1) as u32,
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cyclical {
    pub hour_sin: f64,
    pub hour_cos: f64,
    pub day_sin: f64,
    pub day_cos: f64,
    pub week_sin: f64,
    pub week_cos: f64,
}

/// Hour of day over 24, weekday (Monday = 0) over 7, ISO week mod 52 over 52.
pub fn cyclical_encode(t: DateTime<Utc>) -> Cyclical {
    let hour = t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0;
    let day = t.weekday().num_days_from_monday() as f64;
    let week = (t.iso_week().week() % 52) as f64;
    let (hour_sin, hour_cos) = (TAU * hour / 24.0).sin_cos();
    let (day_sin, day_cos) = (TAU * day / 7.0).sin_cos();
    let (week_sin, week_cos) = (TAU * week / 52.0).sin_cos();
    Cyclical { hour_sin, hour_cos, day_sin, day_cos, week_sin, week_cos }
}

/// Trailing sample standard deviation; short windows at the start use the
/// available points and a single point has std 0.
pub fn rolling_std(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|k| {
            let w = &values[(k + 1).saturating_sub(window)..=k];
            if w.len() < 2 {
                return 0.0;
            }
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            let ss: f64 = w.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (w.len() - 1) as f64).sqrt()
        })
        .collect()
}

/// Recursive exponential moving average with smoothing `2 / (window + 1)`.
pub fn ema(values: &[f64], window: usize) -> Vec<f64> {
    let alpha = 2.0 / (window as f64 + 1.0);
    let mut out = Vec::with_capacity(values.len());
    let mut state = None;
    for &v in values {
        let next = match state {
            None => v,
            Some(prev) => alpha * v + (1.0 - alpha) * prev,
        };
        state = Some(next);
        out.push(next);
    }
    out
}

/// Rolling std and EMA, each at lags 0, 24 and 48.
#[derive(Debug, Clone, PartialEq)]
pub struct RollingColumns {
    pub std: [Vec<f64>; 3],
    pub ema: [Vec<f64>; 3],
}

pub fn rolling_features(values: &[f64], window: usize) -> RollingColumns {
    let s = rolling_std(values, window);
    let e = ema(values, window);
    let lag = |col: &[f64], l: usize| -> Vec<f64> {
        (0..col.len()).map(|k| if k >= l { col[k - l] } else { 0.0 }).collect()
    };
    RollingColumns {
        std: [lag(&s, 0), lag(&s, 24), lag(&s, 48)],
        ema: [lag(&e, 0), lag(&e, 24), lag(&e, 48)],
    }
}

/// Least-squares line through the trailing points, evaluated one step past
/// the last one and clipped at zero. Fewer than two points give 0.
pub fn linear_extrapolation(window: &[f64]) -> f64 {
    let m = window.len();
    if m < 2 {
        return 0.0;
    }
    let x_mean = (m as f64 - 1.0) / 2.0;
    let y_mean = window.iter().sum::<f64>() / m as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in window.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    (y_mean + slope * (m as f64 - x_mean)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    #[test]
    fn activity_score_values() {
        assert_eq!(activity_score(0), 1.0);
        assert!((activity_score(1) - 0.36788).abs() < 1e-5);
        assert!((activity_score(10) - 4.54e-5).abs() < 1e-7);
    }

    #[test]
    fn log_delta_values() {
        assert_eq!(log_delta(5.0, 5.0), 0.0);
        assert_eq!(log_delta(0.0, 0.0), 0.0);
        let expected = (1.0f64 + 1e-9).ln() - (1e-9f64).ln();
        assert_eq!(log_delta(1.0, 0.0), expected);
        assert!((log_delta(1.0, 0.0) - 20.723).abs() < 1e-3);
    }

    #[test]
    fn cyclical_zero_phase() {
        // 2018-12-24 is a Monday in ISO week 52.
        let t = Utc.with_ymd_and_hms(2018, 12, 24, 0, 0, 0).unwrap();
        assert_eq!(t.iso_week().week(), 52);
        let c = cyclical_encode(t);
        assert_eq!((c.hour_sin, c.hour_cos), (0.0, 1.0));
        assert_eq!((c.day_sin, c.day_cos), (0.0, 1.0));
        assert_eq!((c.week_sin, c.week_cos), (0.0, 1.0));
    }

    #[test]
    fn cyclical_quarter_periods() {
        let six = cyclical_encode(Utc.with_ymd_and_hms(2018, 3, 1, 6, 0, 0).unwrap());
        assert!((six.hour_sin - 1.0).abs() < 1e-12 && six.hour_cos.abs() < 1e-12);
        let eighteen = cyclical_encode(Utc.with_ymd_and_hms(2018, 3, 1, 18, 0, 0).unwrap());
        assert!((eighteen.hour_sin + 1.0).abs() < 1e-12 && eighteen.hour_cos.abs() < 1e-12);
    }

    #[test]
    fn rolling_constant_series() {
        let v = vec![3.5; 80];
        let r = rolling_features(&v, 5);
        assert!(r.std.iter().flatten().all(|&s| s == 0.0));
        assert!(r.ema[0].iter().all(|&e| e == 3.5));
    }

    #[test]
    fn rolling_std_is_sample_std() {
        let s = rolling_std(&[0.0, 0.0, 0.0, 12.0], 4);
        assert!((s[3] - 6.0).abs() < 1e-12);
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn rolling_lag_shift() {
        let v: Vec<f64> = (0..100).map(|i| ((i * 7) % 11) as f64).collect();
        let r = rolling_features(&v, 5);
        for k in 24..100 {
            assert_eq!(r.std[1][k], r.std[0][k - 24]);
            assert_eq!(r.ema[1][k], r.ema[0][k - 24]);
        }
        for k in 48..100 {
            assert_eq!(r.std[2][k], r.std[0][k - 48]);
        }
    }

    #[test]
    fn extrapolation_cases() {
        assert!((linear_extrapolation(&[1.0, 2.0, 3.0, 4.0]) - 5.0).abs() < 1e-12);
        assert!((linear_extrapolation(&[2.5; 4]) - 2.5).abs() < 1e-12);
        assert_eq!(linear_extrapolation(&[4.0, 3.0, 2.0, 1.0]), 0.0);
        assert_eq!(linear_extrapolation(&[4.0]), 0.0);
    }

    #[test]
    fn downtime_counts_idle_bins() {
        assert_eq!(downtime_series(&[0.0, 1.0, 0.0, 0.0, 2.0]), vec![1, 0, 1, 2, 0]);
    }

    proptest! {
        #[test]
        fn cyclical_pairs_on_unit_circle(secs in 0i64..4_000_000_000) {
            let c = cyclical_encode(DateTime::from_timestamp(secs, 0).unwrap());
            for (s, co) in [(c.hour_sin, c.hour_cos), (c.day_sin, c.day_cos), (c.week_sin, c.week_cos)] {
                prop_assert!((s * s + co * co - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn activity_strictly_decreasing(d in 0u32..700) {
            prop_assert!(activity_score(d + 1) < activity_score(d));
            prop_assert_eq!(activity_score(d) == 1.0, d == 0);
        }

        #[test]
        fn log_delta_antisymmetric(a in 0.0f64..1e3, b in 0.0f64..1e3) {
            prop_assert_eq!(log_delta(a, b), -log_delta(b, a));
        }
    }
}
