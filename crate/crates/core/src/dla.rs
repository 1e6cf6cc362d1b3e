//! Diffusion limited aggregation in the wedge.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Site, SiteSet, WedgeSpec};
use crate::grid::{Clearance, ClearanceIndex, DenseGrid, NoObstacles};
use crate::jump::JumpLadder;
use crate::oracle::total_variation;
use crate::rng::Streams;
use crate::stats::{empirical, linear_fit};
use crate::walk::{accelerated_run_until, par_trials, run_until, Absorber, OutcomeKind, SiteTarget, StopSpec, WalkDomain, WalkError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DlaError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("particle {particle} exhausted {restarts} restarts (last position {last})")]
    CapExhausted { particle: u64, restarts: u32, last: Site },
    #[error("particle {particle} hit the step cap at {last} after {restarts} restarts")]
    StepCap { particle: u64, restarts: u32, last: Site },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Walk(#[from] WalkError),
}

const EMPTY: u8 = 0;
const BOUNDARY: u8 = 1;
const OCCUPIED: u8 = 2;

/// Bookkeeping for one attached particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttachRecord {
    pub n: u64,
    pub site: Site,
    /// Walk duration in single-step units, jumps counted by their mean.
    pub steps: f64,
    pub restarts: u32,
}

/// The cluster `A_n` with its outer boundary, radius and diameter history.
#[derive(Debug, Clone)]
pub struct Aggregate {
    spec: WedgeSpec,
    order: Vec<Site>,
    records: Vec<AttachRecord>,
    state: DenseGrid<u8>,
    boundary: SiteSet,
    /// Covers `A ∪ ∂A`; only grows.
    index: ClearanceIndex,
    rho: f64,
    hull: Vec<Site>,
    diameters: Vec<f64>,
}

impl PartialEq for Aggregate {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.order == other.order && self.records == other.records
    }
}

impl Aggregate {
    /// `A_0 = {origin}`.
    pub fn new(spec: WedgeSpec) -> Self {
        let mut agg = Aggregate {
            spec,
            order: Vec::new(),
            records: Vec::new(),
            state: DenseGrid::new(),
            boundary: SiteSet::new(),
            index: ClearanceIndex::new(),
            rho: 0.0,
            hull: Vec::new(),
            diameters: Vec::new(),
        };
        agg.occupy(Site::ORIGIN);
        agg.diameters.push(0.0);
        agg
    }

    /// Rebuilds an aggregate from its attach order; `order[0]` must be the origin.
    pub fn from_order(spec: WedgeSpec, order: &[Site], records: Vec<AttachRecord>) -> Result<Self, DlaError> {
        if order.first() != Some(&Site::ORIGIN) {
            return Err(DlaError::Invalid("attach order must start at the origin".into()));
        }
        if !records.is_empty() && records.len() + 1 != order.len() {
            return Err(DlaError::Invalid("one record per attached particle expected".into()));
        }
        let mut agg = Aggregate::new(spec);
        for (i, p) in order.iter().enumerate().skip(1) {
            let (steps, restarts) = records.get(i - 1).map_or((0.0, 0), |r| (r.steps, r.restarts));
            agg.attach(*p, steps, restarts)?;
        }
        Ok(agg)
    }

    fn occupy(&mut self, p: Site) {
        self.state.set(p, OCCUPIED);
        self.index.insert(p);
        self.order.push(p);
        self.rho = self.rho.max(p.norm());
        let mask = self.spec.neighbor_mask(p);
        for (k, q) in p.lattice_neighbors().into_iter().enumerate() {
            if mask & (1 << k) != 0 && self.state.get(q) == EMPTY {
                self.state.set(q, BOUNDARY);
                self.boundary.insert(q);
                self.index.insert(q);
            }
        }
        self.extend_hull(p);
    }

    fn extend_hull(&mut self, p: Site) {
        let mut best = self.diameters.last().copied().unwrap_or(0.0);
        if !self.hull.is_empty() && point_in_hull(&self.hull, p) {
            if let Some(d) = self.diameters.last_mut() {
                *d = best;
            }
            return;
        }
        for h in &self.hull {
            let dx = (h.x - p.x) as f64;
            let dy = (h.y - p.y) as f64;
            best = best.max((dx * dx + dy * dy).sqrt());
        }
        let mut pts = self.hull.clone();
        pts.push(p);
        self.hull = convex_hull(pts);
        if let Some(d) = self.diameters.last_mut() {
            *d = best;
        }
    }

    /// Adds `p ∈ ∂A` as the next particle.
    pub fn attach(&mut self, p: Site, steps: f64, restarts: u32) -> Result<(), DlaError> {
        if self.state.get(p) != BOUNDARY {
            return Err(DlaError::Invalid(format!("{p} is not on the outer boundary")));
        }
        self.boundary.remove(&p);
        let n = self.order.len() as u64;
        self.diameters.push(self.diameters.last().copied().unwrap_or(0.0));
        self.occupy(p);
        self.records.push(AttachRecord { n, site: p, steps, restarts });
        Ok(())
    }

    pub fn spec(&self) -> &WedgeSpec {
        &self.spec
    }

    /// Number of attached particles `n`, so `|A_n| = n + 1`.
    pub fn particles(&self) -> u64 {
        self.order.len() as u64 - 1
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Sites in attach order, starting with the origin.
    pub fn order(&self) -> &[Site] {
        &self.order
    }

    pub fn records(&self) -> &[AttachRecord] {
        &self.records
    }

    pub fn contains(&self, p: Site) -> bool {
        self.state.get(p) == OCCUPIED
    }

    pub fn sites(&self) -> SiteSet {
        self.order.iter().copied().collect()
    }

    /// Cached `∂A`.
    pub fn boundary(&self) -> &SiteSet {
        &self.boundary
    }

    /// `max ‖a‖` over the cluster.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn diameter(&self) -> f64 {
        *self.diameters.last().expect("nonempty")
    }

    /// `diam(A_n)` for `n = 0, 1, …`.
    pub fn diameters(&self) -> &[f64] {
        &self.diameters
    }

    /// `n,x,y` lines in attach order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,x,y\n");
        for (n, p) in self.order.iter().enumerate() {
            out.push_str(&format!("{n},{},{}\n", p.x, p.y));
        }
        out
    }

    /// `n,steps,restarts` for every attached particle.
    pub fn records_to_csv(&self) -> String {
        let mut out = String::from("n,steps,restarts\n");
        for r in &self.records {
            out.push_str(&format!("{},{:?},{}\n", r.n, r.steps, r.restarts));
        }
        out
    }

    pub fn from_csv(spec: WedgeSpec, sites: &str, records: Option<&str>) -> Result<Self, DlaError> {
        let bad = |line: usize, msg: &str| DlaError::Invalid(format!("line {line}: {msg}"));
        let mut order = Vec::new();
        for (i, line) in sites.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(bad(i + 1, "expected n,x,y"));
            }
            let n: usize = f[0].trim().parse().map_err(|_| bad(i + 1, "bad index"))?;
            if n != order.len() {
                return Err(bad(i + 1, "indices must be consecutive from 0"));
            }
            let x = f[1].trim().parse().map_err(|_| bad(i + 1, "bad x"))?;
            let y = f[2].trim().parse().map_err(|_| bad(i + 1, "bad y"))?;
            order.push(Site::new(x, y));
        }
        let mut recs = Vec::new();
        if let Some(text) = records {
            for (i, line) in text.lines().enumerate().skip(1) {
                if line.trim().is_empty() {
                    continue;
                }
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 3 {
                    return Err(bad(i + 1, "expected n,steps,restarts"));
                }
                let n: u64 = f[0].trim().parse().map_err(|_| bad(i + 1, "bad index"))?;
                let steps: f64 = f[1].trim().parse().map_err(|_| bad(i + 1, "bad steps"))?;
                let restarts: u32 = f[2].trim().parse().map_err(|_| bad(i + 1, "bad restarts"))?;
                let site = *order.get(n as usize).ok_or_else(|| bad(i + 1, "index beyond the aggregate"))?;
                recs.push(AttachRecord { n, site, steps, restarts });
            }
        }
        Aggregate::from_order(spec, &order, recs)
    }

    /// Finite-scale arm count on the annulus `r_inner ≤ ‖x‖ < r_outer`.
    pub fn count_arms(&self, r_inner: f64, r_outer: f64) -> Result<usize, DlaError> {
        count_arms(&self.sites(), r_inner, r_outer)
    }
}

impl SiteTarget for Aggregate {
    #[inline]
    fn hit(&self, p: Site) -> bool {
        self.state.get(p) == BOUNDARY
    }

    #[inline]
    fn clear(&self, p: Site, k: i64) -> bool {
        Clearance::clear(&self.index, p, k)
    }
}

fn cross(o: Site, a: Site, b: Site) -> i128 {
    (a.x - o.x) as i128 * (b.y - o.y) as i128 - (a.y - o.y) as i128 * (b.x - o.x) as i128
}

/// Counter-clockwise hull without collinear points.
fn convex_hull(mut pts: Vec<Site>) -> Vec<Site> {
    pts.sort();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<Site> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Site> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Closed-hull membership for a counter-clockwise hull.
fn point_in_hull(hull: &[Site], p: Site) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        2 => cross(hull[0], hull[1], p) == 0 && {
            let (a, b) = (hull[0], hull[1]);
            p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
        },
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
    }
}

/// Components of `A ∩ {r_inner ≤ ‖x‖ < r_outer}` that touch `B_{r_inner}`
/// and reach radius `r_outer − 1`.
pub fn count_arms(sites: &SiteSet, r_inner: f64, r_outer: f64) -> Result<usize, DlaError> {
    if !(r_inner >= 0.0 && r_inner < r_outer) {
        return Err(DlaError::Invalid(format!("need 0 ≤ r_inner < r_outer, got {r_inner}, {r_outer}")));
    }
    let (i2, o2) = (r_inner * r_inner, r_outer * r_outer);
    let in_annulus = |p: &Site| {
        let n = p.norm2() as f64;
        n >= i2 && n < o2
    };
    let annulus: SiteSet = sites.iter().copied().filter(in_annulus).collect();
    let mut seen = SiteSet::new();
    let mut arms = 0;
    for &s in annulus.iter() {
        if seen.contains(&s) {
            continue;
        }
        seen.insert(s);
        let mut queue = VecDeque::from([s]);
        let (mut inner, mut outer) = (false, false);
        while let Some(p) = queue.pop_front() {
            inner |= p.lattice_neighbors().iter().any(|q| (q.norm2() as f64) < i2);
            outer |= p.norm() >= r_outer - 1.0;
            for q in p.lattice_neighbors() {
                if annulus.contains(&q) && seen.insert(q) {
                    queue.push_back(q);
                }
            }
        }
        if inner && outer {
            arms += 1;
        }
    }
    Ok(arms)
}

/// How far-away particles are released.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    /// `c_s` in `R_s = max(c_s·ρ, ρ + margin)`.
    pub start_factor: f64,
    pub start_margin: f64,
    /// `c_e`: the walk restarts beyond `c_e·R_s`.
    pub escape_factor: f64,
    /// Restarts allowed per particle.
    pub max_restarts: u32,
    /// Step cap per release, in single-step units.
    pub step_cap: u64,
    pub accelerate: bool,
}

impl Default for SamplerParams {
    fn default() -> Self {
        SamplerParams {
            start_factor: 4.0,
            start_margin: 16.0,
            escape_factor: 2.0,
            max_restarts: 10_000,
            step_cap: 1_000_000_000,
            accelerate: true,
        }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<(), DlaError> {
        if !(self.start_factor >= 4.0 && self.escape_factor >= 2.0 && self.start_margin >= 1.0) {
            return Err(DlaError::Invalid(format!(
                "need c_s ≥ 4, c_e ≥ 2, margin ≥ 1; got {}, {}, {}",
                self.start_factor, self.escape_factor, self.start_margin
            )));
        }
        Ok(())
    }

    pub fn start_radius(&self, rho: f64) -> f64 {
        (self.start_factor * rho).max(rho + self.start_margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub site: Site,
    pub steps: f64,
    pub restarts: u32,
}

/// Release-and-walk sampler with a cached start ring.
#[derive(Debug, Clone)]
pub struct Sampler {
    params: SamplerParams,
    ring: Option<(u64, Vec<Site>)>,
}

impl Sampler {
    pub fn new(params: SamplerParams) -> Result<Self, DlaError> {
        params.validate()?;
        Ok(Sampler { params, ring: None })
    }

    pub fn params(&self) -> &SamplerParams {
        &self.params
    }

    fn start_ring(&mut self, spec: &WedgeSpec, radius: f64) -> Result<&[Site], DlaError> {
        let key = radius.to_bits();
        if self.ring.as_ref().is_none_or(|(k, _)| *k != key) {
            let ring: Vec<Site> = spec.ring(radius)?.iter().copied().collect();
            self.ring = Some((key, ring));
        }
        Ok(&self.ring.as_ref().expect("filled").1)
    }

    /// One site of `∂A`, approximately from the harmonic measure from infinity.
    pub fn sample<R: Rng + ?Sized>(&mut self, agg: &Aggregate, particle: u64, rng: &mut R) -> Result<Attachment, DlaError> {
        let params = self.params;
        let rs = params.start_radius(agg.rho());
        let spec = *agg.spec();
        let ring = self.start_ring(&spec, rs)?.to_vec();
        sample_from_ring(agg, &params, &ring, rs, particle, rng)
    }
}

fn sample_from_ring<R: Rng + ?Sized>(
    agg: &Aggregate,
    params: &SamplerParams,
    ring: &[Site],
    rs: f64,
    particle: u64,
    rng: &mut R,
) -> Result<Attachment, DlaError> {
    let domain = WalkDomain::new(*agg.spec());
    let stop = StopSpec::new()
        .absorb("boundary", Absorber::Sites(agg))
        .escape_at(params.escape_factor * rs)
        .cap(params.step_cap);
    let ladder = JumpLadder::shared();
    let mut steps = 0.0;
    let mut restarts = 0u32;
    loop {
        let start = ring[rng.random_range(0..ring.len())];
        let out = if params.accelerate {
            accelerated_run_until(&domain, start, &stop, &NoObstacles, ladder, rng)?
        } else {
            run_until(&domain, start, &stop, rng)?
        };
        steps += out.steps_equivalent;
        match out.kind {
            OutcomeKind::Absorbed(_) => return Ok(Attachment { site: out.site, steps, restarts }),
            OutcomeKind::Escaped => {
                if restarts >= params.max_restarts {
                    return Err(DlaError::CapExhausted { particle, restarts, last: out.site });
                }
                restarts += 1;
            }
            OutcomeKind::CapHit => return Err(DlaError::StepCap { particle, restarts, last: out.site }),
        }
    }
}

/// One attachment for `agg` with a fresh sampler.
pub fn sample_attachment<R: Rng + ?Sized>(
    agg: &Aggregate,
    params: &SamplerParams,
    rng: &mut R,
) -> Result<Attachment, DlaError> {
    Sampler::new(*params)?.sample(agg, agg.particles() + 1, rng)
}

/// Last arrival times `T_last(R) = max{n : ‖a_n‖ < R}` at fixed dial radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationLedger {
    pub radii: Vec<f64>,
    pub t_last: Vec<u64>,
}

impl StabilizationLedger {
    pub fn new(mut radii: Vec<f64>) -> Result<Self, DlaError> {
        if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(DlaError::Invalid("dial radii must be positive".into()));
        }
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        let t_last = vec![0; radii.len()];
        Ok(StabilizationLedger { radii, t_last })
    }

    pub fn record(&mut self, n: u64, site: Site) {
        let norm2 = site.norm2() as f64;
        for (r, t) in self.radii.iter().zip(self.t_last.iter_mut()) {
            if norm2 < r * r {
                *t = n;
            }
        }
    }

    /// The same table recomputed from the attach order.
    pub fn recompute(&self, agg: &Aggregate) -> Vec<u64> {
        let mut fresh = StabilizationLedger { radii: self.radii.clone(), t_last: vec![0; self.radii.len()] };
        for (n, p) in agg.order().iter().enumerate() {
            fresh.record(n as u64, *p);
        }
        fresh.t_last
    }
}

/// Geometric dial radii `4, 8, 16, …` while `R^a ≤ n`, always including 4.
pub fn default_dials(a: f64, particles: u64) -> Vec<f64> {
    let mut out = vec![4.0];
    let mut r: f64 = 8.0;
    while r.powf(a) <= particles as f64 {
        out.push(r);
        r *= 2.0;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizationExponent {
    pub phi: f64,
    /// `(2π+4φ)/(π−4φ)`.
    pub a_min: f64,
    /// `(2π+8φ)/(π−4φ)`, the exponent the summability step needs.
    pub a_strong: f64,
    /// `(π+2φ)/(π−4φ)`.
    pub b_weak: f64,
    /// `(π+4φ)/(π−4φ)`.
    pub b_strict: f64,
}

/// Exponents for opening angle `φ < π/4`, computed through `f = φ/π` so that
/// dyadic fractions of `π` give exact results.
pub fn stabilization_exponent(phi: f64) -> Result<StabilizationExponent, DlaError> {
    if !(phi > 0.0) || phi >= PI / 4.0 {
        return Err(DlaError::Invalid(format!(
            "stabilization needs 0 < φ < π/4, got φ = {phi}"
        )));
    }
    let f = phi / PI;
    let d = 1.0 - 4.0 * f;
    Ok(StabilizationExponent {
        phi,
        a_min: (2.0 + 4.0 * f) / d,
        a_strong: (2.0 + 8.0 * f) / d,
        b_weak: (1.0 + 2.0 * f) / d,
        b_strict: (1.0 + 4.0 * f) / d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DialStatus {
    Satisfied,
    Failed,
    /// `R^a` exceeds the number of particles grown.
    Inconclusive,
}

impl std::fmt::Display for DialStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DialStatus::Satisfied => "satisfied",
            DialStatus::Failed => "failed",
            DialStatus::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DialRow {
    pub r: f64,
    pub t_last: u64,
    pub threshold: u64,
    pub status: DialStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationReport {
    pub exponent: f64,
    pub particles: u64,
    pub rows: Vec<DialRow>,
    /// Satisfied share of the conclusive rows; `None` when none is conclusive.
    pub satisfied_fraction: Option<f64>,
}

impl StabilizationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,t_last,threshold,status\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.r, r.t_last, r.threshold, r.status));
        }
        out
    }
}

/// Checks `T_last(R) < ⌈R^a⌉` for each dial radius.
pub fn stabilization_report(ledger: &StabilizationLedger, a: f64, particles: u64) -> StabilizationReport {
    let rows: Vec<DialRow> = ledger
        .radii
        .iter()
        .zip(&ledger.t_last)
        .map(|(&r, &t_last)| {
            let power = r.powf(a);
            let threshold = if power >= u64::MAX as f64 { u64::MAX } else { power.ceil() as u64 };
            let status = if power > particles as f64 {
                DialStatus::Inconclusive
            } else if t_last < threshold {
                DialStatus::Satisfied
            } else {
                DialStatus::Failed
            };
            DialRow { r, t_last, threshold, status }
        })
        .collect();
    let conclusive = rows.iter().filter(|r| r.status != DialStatus::Inconclusive).count();
    let satisfied = rows.iter().filter(|r| r.status == DialStatus::Satisfied).count();
    StabilizationReport {
        exponent: a,
        particles,
        satisfied_fraction: (conclusive > 0).then(|| satisfied as f64 / conclusive as f64),
        rows,
    }
}

/// A growth run in progress.
#[derive(Debug, Clone)]
pub struct Grower {
    aggregate: Aggregate,
    ledger: StabilizationLedger,
    sampler: Sampler,
    streams: Streams,
}

pub const GROW_STREAM: &str = "grow";

impl Grower {
    pub fn new(spec: WedgeSpec, params: SamplerParams, seed: u64, dials: Vec<f64>) -> Result<Self, DlaError> {
        Ok(Grower {
            aggregate: Aggregate::new(spec),
            ledger: StabilizationLedger::new(dials)?,
            sampler: Sampler::new(params)?,
            streams: Streams::named(seed, GROW_STREAM),
        })
    }

    /// Attaches particle `n = |A| `; it draws from stream `n`.
    pub fn attach_next(&mut self) -> Result<Attachment, DlaError> {
        let n = self.aggregate.particles() + 1;
        let mut rng = self.streams.trial(n);
        let a = self.sampler.sample(&self.aggregate, n, &mut rng)?;
        self.aggregate.attach(a.site, a.steps, a.restarts)?;
        self.ledger.record(n, a.site);
        Ok(a)
    }

    pub fn aggregate(&self) -> &Aggregate {
        &self.aggregate
    }

    pub fn ledger(&self) -> &StabilizationLedger {
        &self.ledger
    }

    pub fn into_parts(self) -> (Aggregate, StabilizationLedger) {
        (self.aggregate, self.ledger)
    }
}

#[derive(Debug, Clone)]
pub struct GrowthRun {
    pub aggregate: Aggregate,
    pub ledger: StabilizationLedger,
}

/// A failed run with everything grown before the failure.
#[derive(Debug, Clone, Error)]
#[error("growth stopped after {} particles: {source}", .partial.particles())]
pub struct GrowFailure {
    pub partial: Aggregate,
    pub ledger: StabilizationLedger,
    pub source: DlaError,
}

/// Grows `particles` particles sequentially from `A_0 = {origin}`.
pub fn grow(
    spec: WedgeSpec,
    particles: u64,
    params: SamplerParams,
    seed: u64,
    dials: Vec<f64>,
) -> Result<GrowthRun, Box<GrowFailure>> {
    let fail = |source: DlaError| {
        Box::new(GrowFailure {
            partial: Aggregate::new(spec),
            ledger: StabilizationLedger { radii: Vec::new(), t_last: Vec::new() },
            source,
        })
    };
    if particles == 0 {
        return Err(fail(DlaError::Invalid("at least one particle is required".into())));
    }
    let mut g = Grower::new(spec, params, seed, dials).map_err(fail)?;
    for _ in 0..particles {
        if let Err(source) = g.attach_next() {
            let (partial, ledger) = g.into_parts();
            return Err(Box::new(GrowFailure { partial, ledger, source }));
        }
    }
    let (aggregate, ledger) = g.into_parts();
    Ok(GrowthRun { aggregate, ledger })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRate {
    pub beta_hat: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub window: (usize, usize),
}

/// Slope of `log diam(A_n)` against `log n` over `n ∈ window` (inclusive);
/// the default window is the last decade `[N/10, N]`.
pub fn growth_rate_estimate(diameters: &[f64], window: Option<(usize, usize)>) -> Result<GrowthRate, DlaError> {
    if diameters.len() < 100 {
        return Err(DlaError::Invalid(format!("need at least 100 points, got {}", diameters.len())));
    }
    let last = diameters.len() - 1;
    let (lo, hi) = window.unwrap_or((last.div_ceil(10).max(1), last));
    if lo < 1 || hi > last || hi <= lo {
        return Err(DlaError::Invalid(format!("degenerate window {lo}..={hi}")));
    }
    let points: Vec<(f64, f64)> =
        (lo..=hi).filter(|&n| diameters[n] > 0.0).map(|n| ((n as f64).ln(), diameters[n].ln())).collect();
    let fit = linear_fit(&points).ok_or_else(|| DlaError::Invalid("window has no spread".into()))?;
    Ok(GrowthRate { beta_hat: fit.slope, stderr: fit.slope_stderr, r_squared: fit.r_squared, window: (lo, hi) })
}

/// Attachment law of a frozen aggregate estimated from `samples` releases.
pub fn attachment_law(
    agg: &Aggregate,
    params: &SamplerParams,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<BTreeMap<Site, f64>, DlaError> {
    params.validate()?;
    let rs = params.start_radius(agg.rho());
    let ring: Vec<Site> = agg.spec().ring(rs)?.iter().copied().collect();
    let streams = Streams::named(seed, &format!("attachment-law/{}", params.start_factor));
    let results = par_trials(&streams, samples, workers, |t, rng| sample_from_ring(agg, params, &ring, rs, t, rng))?;
    let sites = results.into_iter().map(|r| r.map(|a| a.site)).collect::<Result<Vec<_>, _>>()?;
    Ok(empirical(sites))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConsistency {
    pub start_factor: f64,
    pub samples: u64,
    /// TV between the laws at `c_s` and `2c_s`.
    pub tv: f64,
}

/// Effect of doubling the start factor on the attachment law.
pub fn sampler_consistency(
    agg: &Aggregate,
    params: &SamplerParams,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<SamplerConsistency, DlaError> {
    let base = attachment_law(agg, params, samples, seed, workers)?;
    let doubled = SamplerParams { start_factor: 2.0 * params.start_factor, ..*params };
    let far = attachment_law(agg, &doubled, samples, seed, workers)?;
    Ok(SamplerConsistency { start_factor: params.start_factor, samples, tv: total_variation(&base, &far) })
}
