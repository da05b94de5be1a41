use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Parameters returned by one client after local training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientUpdate {
    pub hub: usize,
    pub params: Vec<f64>,
    /// Training sample count.
    pub weight: f64,
}

/// Sample-count-weighted mean of client parameters.
///
/// Clients are folded in ascending hub order with a running mean,
/// `m += (w_i / W_i)(x_i − m)`, clamped to the segment between the old mean
/// and `x_i`, so identical inputs reproduce exactly and every coordinate stays
/// within the clients' range.
pub fn fedavg_aggregate(updates: &[ClientUpdate]) -> Result<Vec<f64>> {
    let mut order: Vec<&ClientUpdate> = updates.iter().collect();
    order.sort_by_key(|u| u.hub);
    let first = order.first().ok_or_else(|| Error::Federation("no client updates to aggregate".into()))?;
    let n = first.params.len();
    for u in &order {
        if u.params.len() != n {
            return Err(Error::Shape { expected: n, actual: u.params.len() });
        }
        if !(u.weight.is_finite() && u.weight >= 0.0) {
            return Err(Error::Federation(format!("hub {} has invalid weight {}", u.hub, u.weight)));
        }
    }
    let mut mean: Option<Vec<f64>> = None;
    let mut total = 0.0;
    for u in order.iter().filter(|u| u.weight > 0.0) {
        total += u.weight;
        match mean.as_mut() {
            None => mean = Some(u.params.clone()),
            Some(m) => {
                let frac = u.weight / total;
                for (mi, xi) in m.iter_mut().zip(&u.params) {
                    let next = *mi + frac * (xi - *mi);
                    *mi = next.clamp(mi.min(*xi), mi.max(*xi));
                }
            }
        }
    }
    mean.ok_or_else(|| Error::Federation("all client weights are zero".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn up(hub: usize, params: Vec<f64>, weight: f64) -> ClientUpdate {
        ClientUpdate { hub, params, weight }
    }

    #[test]
    fn weighted_hand_case() {
        let g = fedavg_aggregate(&[up(0, vec![0.0], 1.0), up(1, vec![4.0], 3.0)]).unwrap();
        assert_eq!(g, vec![3.0]);
    }

    #[test]
    fn identical_vectors_reproduce_exactly() {
        let v = vec![0.1, -3.7, 1e-300, 12345.678];
        let g = fedavg_aggregate(&[up(2, v.clone(), 7.0), up(0, v.clone(), 3.0), up(1, v.clone(), 11.0)]).unwrap();
        assert_eq!(g, v);
    }

    #[test]
    fn errors() {
        assert!(fedavg_aggregate(&[]).is_err());
        assert!(fedavg_aggregate(&[up(0, vec![1.0], 1.0), up(1, vec![1.0, 2.0], 1.0)]).is_err());
        assert!(fedavg_aggregate(&[up(0, vec![1.0], 0.0)]).is_err());
    }

    proptest! {
        #[test]
        fn convex_hull_and_order(
            rows in prop::collection::vec((prop::collection::vec(-1e3f64..1e3, 4), 1.0f64..100.0), 1..6)
        ) {
            let ups: Vec<ClientUpdate> = rows.iter().enumerate().map(|(i, (p, w))| up(i, p.clone(), *w)).collect();
            let g = fedavg_aggregate(&ups).unwrap();
            for j in 0..4 {
                let lo = ups.iter().map(|u| u.params[j]).fold(f64::INFINITY, f64::min);
                let hi = ups.iter().map(|u| u.params[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(g[j] >= lo && g[j] <= hi);
            }
            let mut rev = ups.clone();
            rev.reverse();
            prop_assert_eq!(fedavg_aggregate(&rev).unwrap(), g.clone());
            let w: f64 = ups.iter().map(|u| u.weight).sum();
            for j in 0..4 {
                let direct: f64 = ups.iter().map(|u| u.weight * u.params[j]).sum::<f64>() / w;
                prop_assert!((direct - g[j]).abs() <= 1e-9 * (1.0 + direct.abs()));
            }
        }
    }
}
