#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, VecDeque};

use num_rational::Ratio;
use wedge_dla::geometry::{Site, SiteSet, Slope, WedgeSpec};

pub fn wedge(lower: &str, upper: &str) -> WedgeSpec {
    WedgeSpec::new(lower.parse::<Slope>().unwrap(), upper.parse::<Slope>().unwrap()).unwrap()
}

/// Sites of `W^r` in breadth-first order from the origin, so every prefix
/// is connected and each site touches an earlier one.
pub fn bfs_order(spec: &WedgeSpec, r: f64, limit: usize) -> Vec<Site> {
    let member = spec.ball_sector(r).unwrap();
    let mut seen = SiteSet::new();
    let mut order = Vec::new();
    let mut queue = VecDeque::from([Site::ORIGIN]);
    seen.insert(Site::ORIGIN);
    while let Some(p) = queue.pop_front() {
        order.push(p);
        if order.len() == limit {
            break;
        }
        for q in spec.neighbors(p).unwrap() {
            if member.contains(&q) && seen.insert(q) {
                queue.push_back(q);
            }
        }
    }
    order
}

/// Exact one-step transition probability of the wedge walk.
pub fn transition(spec: &WedgeSpec, degrees: &HashMap<Site, i64>, x: Site, y: Site) -> Ratio<i64> {
    if x.l1_distance(y) == 1 && spec.contains(y) {
        Ratio::new(1, degrees[&x])
    } else {
        Ratio::from_integer(0)
    }
}

pub struct ReversibilityTally {
    pub paths: u64,
    pub violations: u64,
}

/// Enumerates every nearest-neighbor path of length `1..=max_len` inside
/// `W^r` and compares `deg(u)·P^u(γ)` with `deg(y)·P^y(γ̂)`, each product
/// taken step by step from the transition kernel.
pub fn reversibility(spec: &WedgeSpec, r: f64, max_len: usize) -> ReversibilityTally {
    let sites = spec.ball_sector(r).unwrap();
    let mut degrees = HashMap::new();
    for p in spec.ball_sector(r + 2.0).unwrap().iter() {
        degrees.insert(*p, spec.degree(*p).unwrap() as i64);
    }
    let mut tally = ReversibilityTally { paths: 0, violations: 0 };
    let mut path = Vec::with_capacity(max_len + 1);
    for &u in sites.iter() {
        path.clear();
        path.push(u);
        extend(spec, &sites, &degrees, max_len, &mut path, &mut tally);
    }
    tally
}

fn extend(
    spec: &WedgeSpec,
    sites: &SiteSet,
    degrees: &HashMap<Site, i64>,
    max_len: usize,
    path: &mut Vec<Site>,
    tally: &mut ReversibilityTally,
) {
    let last = *path.last().unwrap();
    for q in last.lattice_neighbors() {
        if !sites.contains(&q) {
            continue;
        }
        path.push(q);
        let forward = path.windows(2).fold(Ratio::from_integer(1), |acc, w| acc * transition(spec, degrees, w[0], w[1]));
        let backward = path.windows(2).rev().fold(Ratio::from_integer(1), |acc, w| acc * transition(spec, degrees, w[1], w[0]));
        let lhs = forward * degrees[&path[0]];
        let rhs = backward * degrees[&q];
        tally.paths += 1;
        if lhs != rhs || lhs == Ratio::from_integer(0) {
            tally.violations += 1;
        }
        if path.len() <= max_len {
            extend(spec, sites, degrees, max_len, path, tally);
        }
        path.pop();
    }
}

pub fn tv(a: &BTreeMap<Site, f64>, b: &BTreeMap<Site, f64>) -> f64 {
    wedge_dla::oracle::total_variation(a, b)
}
