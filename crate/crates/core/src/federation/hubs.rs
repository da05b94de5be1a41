use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ingest::GeoPoint;
use crate::rng;
use crate::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 100;

/// Partition of EVSEs into `k` geographic hubs (federation clients).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubAssignment {
    pub k: usize,
    pub centroids: Vec<GeoPoint>,
    /// EVSE id to hub id.
    pub hub_of: BTreeMap<String, usize>,
    pub iterations: usize,
}

impl HubAssignment {
    /// Member EVSE ids of `hub`, sorted.
    pub fn members(&self, hub: usize) -> Vec<&str> {
        self.hub_of.iter().filter(|(_, h)| **h == hub).map(|(e, _)| e.as_str()).collect()
    }
}

fn nearest(p: &GeoPoint, centroids: &[GeoPoint]) -> usize {
    let mut best = 0;
    for (i, c) in centroids.iter().enumerate().skip(1) {
        if p.dist2(c) < p.dist2(&centroids[best]) {
            best = i;
        }
    }
    best
}

/// k-means on (lat, lon): seeded k-means++ initialization over distinct
/// locations, then Lloyd iterations to an assignment fixpoint.
pub fn cluster_hubs(evses: &[(String, GeoPoint)], k: usize, seed: u64) -> Result<HubAssignment> {
    if k == 0 {
        return Err(Error::config("hub count must be at least 1"));
    }
    let mut items: Vec<&(String, GeoPoint)> = evses.iter().collect();
    items.sort_by(|a, b| a.0.cmp(&b.0));
    let points: Vec<GeoPoint> = items.iter().map(|(_, p)| *p).collect();
    let mut distinct = points.clone();
    distinct.sort_by(|a, b| a.lat.total_cmp(&b.lat).then(a.lon.total_cmp(&b.lon)));
    distinct.dedup();
    if k > distinct.len() {
        return Err(Error::config(format!("{k} hubs requested but only {} distinct locations", distinct.len())));
    }

    let mut r = rng::seeded(seed);
    let mut centroids = vec![distinct[r.random_range(0..distinct.len())]];
    while centroids.len() < k {
        let d2: Vec<f64> = distinct.iter().map(|p| p.dist2(&centroids[nearest(p, &centroids)])).collect();
        let total: f64 = d2.iter().sum();
        let mut u = r.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|d| *d > 0.0).expect("unchosen distinct point exists");
        for (i, d) in d2.iter().enumerate() {
            if *d > 0.0 && u < *d {
                pick = i;
                break;
            }
            u -= d;
        }
        centroids.push(distinct[pick]);
    }

    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (p, &a) in points.iter().zip(&assign) {
            sums[a].0 += p.lat;
            sums[a].1 += p.lon;
            sums[a].2 += 1;
        }
        for (c, s) in centroids.iter_mut().zip(&sums) {
            if s.2 > 0 {
                *c = GeoPoint::new(s.0 / s.2 as f64, s.1 / s.2 as f64);
            }
        }
        // Repair empty clusters with the point farthest from its centroid.
        for j in 0..k {
            if sums[j].2 == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        points[a].dist2(&centroids[assign[a]]).total_cmp(&points[b].dist2(&centroids[assign[b]])).then(b.cmp(&a))
                    })
                    .expect("non-empty input");
                centroids[j] = points[far];
                assign[far] = j;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }

    let mut counts = vec![0usize; k];
    assign.iter().for_each(|&a| counts[a] += 1);
    if counts.contains(&0) {
        return Err(Error::Federation("clustering left an empty hub".into()));
    }
    // Relabel hubs in order of their first member.
    let mut relabel = vec![usize::MAX; k];
    let mut next_id = 0;
    for &a in &assign {
        if relabel[a] == usize::MAX {
            relabel[a] = next_id;
            next_id += 1;
        }
    }
    let mut ordered = vec![GeoPoint::new(0.0, 0.0); k];
    for (old, &new) in relabel.iter().enumerate() {
        ordered[new] = centroids[old];
    }
    let hub_of = items.iter().zip(&assign).map(|((id, _), &a)| (id.clone(), relabel[a])).collect();
    Ok(HubAssignment { k, centroids: ordered, hub_of, iterations })
}
