//! Simple random walk on the wedge graph, plain and jump-accelerated.

use std::f64::consts::SQRT_2;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Site, WedgeSpec};
use crate::grid::{Clearance, ClearanceIndex, NoObstacles};
use crate::jump::JumpLadder;
use crate::rng::{StreamRng, Streams};

pub const DEFAULT_STEP_CAP: u64 = 1_000_000_000;
/// Slack used when comparing floating norms against radii in jump bounds.
const NORM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WalkError {
    #[error("start {0} is outside the walk domain")]
    StartOutside(Site),
    #[error("site {0} has no neighbors in the walk domain")]
    Stuck(Site),
    #[error("a stop rule needs an absorbing set, an escape radius or a finite step cap")]
    Unbounded,
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// The wedge, optionally cut to the open ball `B_T`. Edges leaving `B_T` are
/// dropped, so the walk reflects there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkDomain {
    pub spec: WedgeSpec,
    pub truncation: Option<f64>,
}

impl WalkDomain {
    pub fn new(spec: WedgeSpec) -> Self {
        WalkDomain { spec, truncation: None }
    }

    pub fn truncated(spec: WedgeSpec, radius: f64) -> Self {
        WalkDomain { spec, truncation: Some(radius) }
    }

    #[inline]
    pub fn contains(&self, p: Site) -> bool {
        self.spec.contains(p) && self.truncation.is_none_or(|t| (p.norm2() as f64) < t * t)
    }

    #[inline]
    pub fn neighbor_mask(&self, p: Site) -> u8 {
        let mut mask = self.spec.neighbor_mask(p);
        if let Some(t) = self.truncation {
            for (i, q) in p.lattice_neighbors().into_iter().enumerate() {
                if (q.norm2() as f64) >= t * t {
                    mask &= !(1 << i);
                }
            }
        }
        mask
    }

    pub fn degree(&self, p: Site) -> usize {
        self.neighbor_mask(p).count_ones() as usize
    }

    /// Largest `k` with the closed sup-norm box of radius `k` around `p` in the domain.
    fn box_bound(&self, p: Site, norm: f64) -> i64 {
        let mut k = self.spec.box_clearance(p);
        if let Some(t) = self.truncation {
            k = k.min(((t - norm) / SQRT_2 - NORM_SLACK).floor() as i64);
        }
        k
    }
}

/// One step of the walk: a uniformly chosen wedge neighbor.
#[inline]
pub fn step<R: Rng + ?Sized>(domain: &WalkDomain, p: Site, rng: &mut R) -> Result<Site, WalkError> {
    let mask = domain.neighbor_mask(p);
    let deg = mask.count_ones();
    if deg == 0 {
        return Err(WalkError::Stuck(p));
    }
    let mut pick = rng.random_range(0..deg);
    let neighbors = p.lattice_neighbors();
    for (i, q) in neighbors.into_iter().enumerate() {
        if mask & (1 << i) != 0 {
            if pick == 0 {
                return Ok(q);
            }
            pick -= 1;
        }
    }
    unreachable!("mask has {deg} bits")
}

/// A finite absorbing site set with a conservative clearance query.
pub trait SiteTarget: Sync {
    fn hit(&self, p: Site) -> bool;
    /// True only if no target site lies within sup-distance `k` of `p`.
    fn clear(&self, p: Site, k: i64) -> bool;
}

impl SiteTarget for ClearanceIndex {
    #[inline]
    fn hit(&self, p: Site) -> bool {
        self.contains(p)
    }

    #[inline]
    fn clear(&self, p: Site, k: i64) -> bool {
        Clearance::clear(self, p, k)
    }
}

/// A stopping set.
#[derive(Clone, Copy)]
pub enum Absorber<'a> {
    Sites(&'a dyn SiteTarget),
    /// Sites with `‖p‖ ≥ r`; entered from inside this is the ring `∂W^r`.
    Outside(f64),
    /// Sites with `‖p‖ < r`, i.e. `W^r`.
    Inside(f64),
    /// The ring `∂W^r` itself, approachable from either side.
    Ring(WedgeSpec, f64),
}

impl std::fmt::Debug for Absorber<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Absorber::Sites(_) => write!(f, "Sites(..)"),
            Absorber::Outside(r) => write!(f, "Outside({r})"),
            Absorber::Inside(r) => write!(f, "Inside({r})"),
            Absorber::Ring(_, r) => write!(f, "Ring({r})"),
        }
    }
}

impl Absorber<'_> {
    #[inline]
    pub fn hit(&self, p: Site) -> bool {
        match *self {
            Absorber::Sites(t) => t.hit(p),
            Absorber::Outside(r) => (p.norm2() as f64) >= r * r,
            Absorber::Inside(r) => (p.norm2() as f64) < r * r,
            Absorber::Ring(spec, r) => spec.on_ring(p, r),
        }
    }

    /// Largest `k` such that no site within sup-distance `k − 1` of `p` is hit,
    /// for the radial absorbers; site sets are checked separately.
    fn radial_bound(&self, norm: f64) -> i64 {
        let reach = |gap: f64| (gap / SQRT_2 - NORM_SLACK).floor() as i64 + 1;
        match *self {
            Absorber::Sites(_) => i64::MAX,
            Absorber::Outside(r) => reach(r - norm),
            Absorber::Inside(r) => reach(norm - r),
            // The ring lies in the annulus r <= |p| < r + 1.
            Absorber::Ring(_, r) => {
                if norm < r {
                    reach(r - norm)
                } else {
                    reach(norm - r - 1.0)
                }
            }
        }
    }
}

/// First-hit `τ` or strict return `τ^+` semantics at time 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HitRule {
    First,
    Return,
}

#[derive(Debug, Clone)]
pub struct StopSpec<'a> {
    pub absorbers: Vec<(String, Absorber<'a>)>,
    pub step_cap: u64,
    pub escape_radius: Option<f64>,
    pub rule: HitRule,
}

impl<'a> StopSpec<'a> {
    pub fn new() -> Self {
        StopSpec { absorbers: Vec::new(), step_cap: DEFAULT_STEP_CAP, escape_radius: None, rule: HitRule::First }
    }

    pub fn absorb(mut self, label: impl Into<String>, absorber: Absorber<'a>) -> Self {
        self.absorbers.push((label.into(), absorber));
        self
    }

    pub fn escape_at(mut self, radius: f64) -> Self {
        self.escape_radius = Some(radius);
        self
    }

    pub fn cap(mut self, steps: u64) -> Self {
        self.step_cap = steps;
        self
    }

    pub fn rule(mut self, rule: HitRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn label(&self, index: usize) -> &str {
        &self.absorbers[index].0
    }

    fn validate(&self) -> Result<(), WalkError> {
        if self.absorbers.is_empty() && self.escape_radius.is_none() && self.step_cap == u64::MAX {
            return Err(WalkError::Unbounded);
        }
        Ok(())
    }

    #[inline]
    fn absorbed(&self, p: Site) -> Option<usize> {
        self.absorbers.iter().position(|(_, a)| a.hit(p))
    }
}

impl Default for StopSpec<'_> {
    fn default() -> Self {
        StopSpec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    /// Index into [`StopSpec::absorbers`].
    Absorbed(usize),
    Escaped,
    CapHit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    pub site: Site,
    /// Single steps taken.
    pub steps: u64,
    /// Box jumps taken.
    pub jumps: u64,
    /// Single steps plus the expected duration of every jump.
    pub steps_equivalent: f64,
}

impl Outcome {
    pub fn absorbed_in(&self) -> Option<usize> {
        match self.kind {
            OutcomeKind::Absorbed(i) => Some(i),
            _ => None,
        }
    }
}

/// One visited position for trajectory logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub site: Site,
    pub step: u64,
}

pub fn trace_to_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("x,y,step\n");
    for t in trace {
        out.push_str(&format!("{},{},{}\n", t.site.x, t.site.y, t.step));
    }
    out
}

/// Walks from `start` until absorption, escape or the step cap.
pub fn run_until<R: Rng + ?Sized>(
    domain: &WalkDomain,
    start: Site,
    stop: &StopSpec,
    rng: &mut R,
) -> Result<Outcome, WalkError> {
    drive(domain, start, stop, None, &NoObstacles, rng, None)
}

/// Same hitting law as [`run_until`], replacing runs of single steps by box
/// jumps whenever the box interior avoids every absorbing set, `forbidden`,
/// the escape radius and the domain boundary.
pub fn accelerated_run_until<R: Rng + ?Sized>(
    domain: &WalkDomain,
    start: Site,
    stop: &StopSpec,
    forbidden: &dyn Clearance,
    ladder: &JumpLadder,
    rng: &mut R,
) -> Result<Outcome, WalkError> {
    drive(domain, start, stop, Some(ladder), forbidden, rng, None)
}

/// [`run_until`] or [`accelerated_run_until`] recording every landing site.
pub fn traced_run<R: Rng + ?Sized>(
    domain: &WalkDomain,
    start: Site,
    stop: &StopSpec,
    ladder: Option<&JumpLadder>,
    rng: &mut R,
    trace: &mut Vec<TracePoint>,
) -> Result<Outcome, WalkError> {
    drive(domain, start, stop, ladder, &NoObstacles, rng, Some(trace))
}

fn drive<R: Rng + ?Sized>(
    domain: &WalkDomain,
    start: Site,
    stop: &StopSpec,
    ladder: Option<&JumpLadder>,
    forbidden: &dyn Clearance,
    rng: &mut R,
    mut trace: Option<&mut Vec<TracePoint>>,
) -> Result<Outcome, WalkError> {
    stop.validate()?;
    if !domain.contains(start) {
        return Err(WalkError::StartOutside(start));
    }
    let escape2 = stop.escape_radius.map(|e| e * e);
    let mut out = Outcome { kind: OutcomeKind::CapHit, site: start, steps: 0, jumps: 0, steps_equivalent: 0.0 };
    let mut pos = start;
    if let Some(t) = trace.as_deref_mut() {
        t.push(TracePoint { site: pos, step: 0 });
    }
    if stop.rule == HitRule::First {
        if let Some(i) = stop.absorbed(pos) {
            out.kind = OutcomeKind::Absorbed(i);
            return Ok(out);
        }
        if escape2.is_some_and(|e2| (pos.norm2() as f64) >= e2) {
            out.kind = OutcomeKind::Escaped;
            return Ok(out);
        }
    }
    let cap = stop.step_cap as f64;
    loop {
        if out.steps_equivalent >= cap {
            out.kind = OutcomeKind::CapHit;
            out.site = pos;
            return Ok(out);
        }
        let jumped = match ladder {
            Some(ladder) => try_jump(domain, pos, stop, forbidden, ladder, rng),
            None => None,
        };
        match jumped {
            Some((next, duration)) => {
                pos = next;
                out.jumps += 1;
                out.steps_equivalent += duration;
            }
            None => {
                pos = step(domain, pos, rng)?;
                out.steps += 1;
                out.steps_equivalent += 1.0;
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(TracePoint { site: pos, step: out.steps + out.jumps });
        }
        if let Some(i) = stop.absorbed(pos) {
            out.kind = OutcomeKind::Absorbed(i);
            out.site = pos;
            return Ok(out);
        }
        if escape2.is_some_and(|e2| (pos.norm2() as f64) >= e2) {
            out.kind = OutcomeKind::Escaped;
            out.site = pos;
            return Ok(out);
        }
    }
}

#[inline]
fn try_jump<R: Rng + ?Sized>(
    domain: &WalkDomain,
    pos: Site,
    stop: &StopSpec,
    forbidden: &dyn Clearance,
    ladder: &JumpLadder,
    rng: &mut R,
) -> Option<(Site, f64)> {
    let norm = pos.norm();
    let mut bound = domain.box_bound(pos, norm);
    if bound < 2 {
        return None;
    }
    if let Some(e) = stop.escape_radius {
        bound = bound.min(Absorber::Outside(e).radial_bound(norm));
    }
    for (_, a) in &stop.absorbers {
        bound = bound.min(a.radial_bound(norm));
    }
    let tables = ladder.tables();
    let mut i = tables.iter().rposition(|t| t.half_width() <= bound && t.half_width() >= 2)?;
    loop {
        let k = tables[i].half_width();
        let clear = forbidden.clear(pos, k - 1)
            && stop.absorbers.iter().all(|(_, a)| match a {
                Absorber::Sites(t) => t.clear(pos, k - 1),
                _ => true,
            });
        if clear {
            let t = &tables[i];
            let offset = t.sample(rng);
            return Some((Site::new(pos.x + offset.x, pos.y + offset.y), t.mean_steps()));
        }
        if i == 0 || tables[i - 1].half_width() < 2 {
            return None;
        }
        i -= 1;
    }
}

/// Runs `trial(t, rng)` for `t in 0..n` on `workers` threads, each trial on
/// its own stream; results come back in trial order.
pub fn par_trials<T, F>(streams: &Streams, n: u64, workers: usize, trial: F) -> Result<Vec<T>, WalkError>
where
    T: Send,
    F: Fn(u64, &mut StreamRng) -> T + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| WalkError::Pool(e.to_string()))?;
    Ok(pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|t| {
                let mut rng = streams.trial(t);
                trial(t, &mut rng)
            })
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SiteSet;

    fn w(lower: &str, upper: &str) -> WedgeSpec {
        WedgeSpec::new(lower.parse().unwrap(), upper.parse().unwrap()).unwrap()
    }

    #[test]
    fn interior_step_is_uniform_over_four() {
        let domain = WalkDomain::new(w("0/1", "1/1"));
        let mut rng = Streams::new(3, 1).trial(0);
        let p = Site::new(10, 5);
        let mut counts = [0usize; 4];
        let n = 400_000;
        for _ in 0..n {
            let q = step(&domain, p, &mut rng).unwrap();
            let i = p.lattice_neighbors().iter().position(|&r| r == q).unwrap();
            counts[i] += 1;
        }
        let sd = (0.25 * 0.75 / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn origin_of_half_plane_has_three_moves() {
        let domain = WalkDomain::new(WedgeSpec::half_plane());
        let mut rng = Streams::new(3, 2).trial(0);
        for _ in 0..1000 {
            let q = step(&domain, Site::ORIGIN, &mut rng).unwrap();
            assert!([Site::new(1, 0), Site::new(0, 1), Site::new(0, -1)].contains(&q));
        }
    }

    #[test]
    fn truncation_removes_edges() {
        let domain = WalkDomain::truncated(WedgeSpec::half_plane(), 3.0);
        assert_eq!(domain.degree(Site::new(2, 0)), 3);
        assert_eq!(domain.degree(Site::new(2, 2)), 2);
        assert!(!domain.contains(Site::new(2, 3)));
    }

    #[test]
    fn first_rule_stops_at_time_zero() {
        let domain = WalkDomain::new(w("0/1", "1/1"));
        let a: SiteSet = [Site::new(3, 1)].into_iter().collect();
        let idx = ClearanceIndex::from_set(&a);
        let stop = StopSpec::new().absorb("a", Absorber::Sites(&idx)).escape_at(50.0);
        let mut rng = Streams::new(1, 1).trial(0);
        let o = run_until(&domain, Site::new(3, 1), &stop, &mut rng).unwrap();
        assert_eq!(o.kind, OutcomeKind::Absorbed(0));
        assert_eq!(o.steps, 0);
        let o = run_until(&domain, Site::new(3, 1), &stop.clone().rule(HitRule::Return), &mut rng).unwrap();
        assert!(o.steps >= 1);
    }

    #[test]
    fn cap_hit_is_reported() {
        let domain = WalkDomain::new(WedgeSpec::half_plane());
        let stop = StopSpec::new().escape_at(1e6).cap(10);
        let mut rng = Streams::new(1, 1).trial(0);
        let o = run_until(&domain, Site::ORIGIN, &stop, &mut rng).unwrap();
        assert_eq!(o.kind, OutcomeKind::CapHit);
        assert_eq!(o.steps, 10);
    }

    #[test]
    fn walk_stays_in_wedge() {
        let domain = WalkDomain::truncated(w("0/1", "2/5"), 40.0);
        let mut trace = Vec::new();
        let stop = StopSpec::new().cap(20_000);
        let mut rng = Streams::new(5, 5).trial(0);
        traced_run(&domain, Site::ORIGIN, &stop, None, &mut rng, &mut trace).unwrap();
        assert_eq!(trace.len(), 20_001);
        assert!(trace.iter().all(|t| domain.contains(t.site)));
        assert!(trace.windows(2).all(|w| w[0].site.l1_distance(w[1].site) == 1));
    }

    #[test]
    fn no_jumps_near_forbidden_sites() {
        // Every site of the square around the start is forbidden, so the
        // accelerated engine must reproduce the plain trajectory exactly.
        let domain = WalkDomain::new(WedgeSpec::half_plane());
        let start = Site::new(50, 0);
        let ring: SiteSet = (-2..=2)
            .flat_map(|dx| (-2..=2).map(move |dy| Site::new(50 + dx, dy)))
            .filter(|p| p.l1_distance(start) == 2 || (p.x - 50).abs().max(p.y.abs()) == 2)
            .collect();
        let idx = ClearanceIndex::from_set(&ring);
        let ladder = JumpLadder::build(&[2, 4]).unwrap();
        let stop = StopSpec::new().absorb("ring", Absorber::Sites(&idx));
        let streams = Streams::new(9, 9);
        for t in 0..200 {
            let plain = run_until(&domain, start, &stop, &mut streams.trial(t)).unwrap();
            let fast = accelerated_run_until(&domain, start, &stop, &idx, &ladder, &mut streams.trial(t)).unwrap();
            assert_eq!(plain, fast);
        }
    }

    #[test]
    fn trials_independent_of_worker_count() {
        let domain = WalkDomain::new(w("0/1", "1/1"));
        let stop = StopSpec::new().escape_at(20.0);
        let streams = Streams::named(4, "workers");
        let run = |workers| {
            par_trials(&streams, 64, workers, |_, rng| run_until(&domain, Site::new(2, 1), &stop, rng).unwrap())
                .unwrap()
        };
        assert_eq!(run(1), run(3));
    }
}
