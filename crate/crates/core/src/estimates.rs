//! Escape estimates on the wedge: the continuum escape law, lattice escape
//! past a boundary ray, Beurling-type exponents, dominance by the boundary
//! rays, ring escape, far exits and convergence of hitting laws.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Side, Site, SiteSet, WedgeSpec};
use crate::grid::{ClearanceIndex, DenseGrid, NoObstacles};
use crate::jump::JumpLadder;
use crate::oracle::{
    effective_resistance, return_probability, total_variation, HarmonicProblem, OracleError, OuterBoundary,
};
use crate::rng::Streams;
use crate::stats::{linear_fit, LinearFit, Proportion};
use crate::walk::{
    accelerated_run_until, par_trials, run_until, Absorber, HitRule, OutcomeKind, StopSpec, WalkDomain, WalkError,
};

/// Largest number of free sites an oracle experiment may solve for.
pub const ORACLE_SITE_LIMIT: usize = 200_000;
/// Frozen constant `C` of `P ≤ C / K^{π/2φ}`; `arctan t ≤ t` gives `4/π`.
pub const ESCAPE_CONSTANT: f64 = 4.0 / PI;
/// Largest step budget `T·R²` accepted by the far-exit experiment.
pub const MAX_STEP_BUDGET: f64 = 1e8;
/// Number of start sites on `∂W^r` in Monte Carlo escape estimates.
pub const MC_SPREAD: usize = 16;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{sites} sites exceed the oracle limit of {limit}")]
    TooLarge { sites: usize, limit: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Walk(#[from] WalkError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, EstimateError> {
    Err(EstimateError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Oracle,
    #[serde(rename = "mc")]
    MonteCarlo,
}

impl FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "oracle" => Ok(Backend::Oracle),
            "mc" => Ok(Backend::MonteCarlo),
            other => Err(format!("unknown backend {other:?} (expected oracle|mc)")),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Oracle => "oracle",
            Backend::MonteCarlo => "mc",
        })
    }
}

/// Monte Carlo budget. `trials` counts walks per start site where an
/// experiment uses several starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McSettings {
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
}

impl McSettings {
    pub fn new(trials: u64, seed: u64) -> Self {
        McSettings { trials, seed, workers: 1 }
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings::new(10_000, 0)
    }
}

fn check_sites(n: usize) -> Result<(), EstimateError> {
    if n > ORACLE_SITE_LIMIT {
        return Err(EstimateError::TooLarge { sites: n, limit: ORACLE_SITE_LIMIT });
    }
    Ok(())
}

/// Cheap size check before enumerating `W^R`.
fn check_area(spec: &WedgeSpec, radius: f64) -> Result<(), EstimateError> {
    let area = 0.5 * spec.phi() * radius * radius;
    if area > 1.5 * ORACLE_SITE_LIMIT as f64 {
        return Err(EstimateError::TooLarge { sites: area as usize, limit: ORACLE_SITE_LIMIT });
    }
    Ok(())
}

fn check_phi(phi: f64) -> Result<(), EstimateError> {
    if !(phi > 0.0 && phi <= PI * (1.0 + 1e-15)) {
        return invalid(format!("opening angle {phi} outside (0, π]"));
    }
    Ok(())
}

/// `(2/π)·arctan(2K^{π/2φ} / (K^{π/φ} − 1))`, the probability that Brownian
/// motion in a sector of angle `φ`, reflected on the upper ray and killed
/// on the lower one, reaches radius `K` from the unit arc's worst point.
///
/// The argument equals `1/sinh((π/2φ)·ln K)`, which is evaluated directly.
pub fn continuous_escape_probability(phi: f64, k: f64) -> Result<f64, EstimateError> {
    check_phi(phi)?;
    if !(k > 1.0) || k.is_nan() {
        return invalid(format!("ratio K = {k} must exceed 1"));
    }
    let s = (PI / (2.0 * phi) * (k - 1.0).ln_1p()).sinh();
    Ok(2.0 / PI * 1.0f64.atan2(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeBound {
    pub phi: f64,
    pub k: f64,
    pub formula: f64,
    pub bound: f64,
    pub constant: f64,
}

/// `C / K^{π/2φ}` with the frozen `C`, alongside the exact value it bounds.
pub fn escape_upper_bound(phi: f64, k: f64) -> Result<EscapeBound, EstimateError> {
    if !(k >= 2.0) {
        return invalid(format!("the bound needs K ≥ 2, got {k}"));
    }
    let formula = continuous_escape_probability(phi, k)?;
    let bound = ESCAPE_CONSTANT * (-(PI / (2.0 * phi)) * k.ln()).exp();
    assert!(formula <= bound * (1.0 + 1e-12), "escape bound violated at φ={phi}, K={k}");
    Ok(EscapeBound { phi, k, formula, bound, constant: ESCAPE_CONSTANT })
}

/// Numerical `sup_{K ≥ 2} K^{π/2φ}·P(φ, K)` over a geometric grid up to `10^12`.
pub fn calibrated_constant(phi: f64) -> Result<f64, EstimateError> {
    let mut best: f64 = 0.0;
    let mut k: f64 = 2.0;
    while k <= 1e12 {
        let p = continuous_escape_probability(phi, k)?;
        best = best.max(p * (PI / (2.0 * phi) * k.ln()).exp());
        k *= 1.05;
    }
    Ok(best)
}

/// Up to `count` sites of `∂W^r` evenly spaced in angle, always including
/// the two extreme ones.
pub fn ring_spread(spec: &WedgeSpec, r: f64, count: usize) -> Result<Vec<Site>, EstimateError> {
    let mut ring: Vec<Site> = spec.ring(r)?.iter().copied().collect();
    ring.sort_by(|a, b| (a.y as f64).atan2(a.x as f64).total_cmp(&(b.y as f64).atan2(b.x as f64)));
    if ring.len() <= count || count < 2 {
        return Ok(if count == 1 { ring.into_iter().take(1).collect() } else { ring });
    }
    let n = ring.len() - 1;
    let mut out: Vec<Site> = (0..count).map(|i| ring[(i * n + (count - 1) / 2) / (count - 1)]).collect();
    out.dedup();
    Ok(out)
}

/// Which inner set the lattice escape walk must avoid besides the ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerRing {
    /// Only the ray trace `Γ^α ∩ W^L` absorbs; the walk may pass back into `W^r`.
    Open,
    /// The full `Γ^{α,r,L}`, including `∂W^r`, absorbs.
    Absorbing,
}

impl FromStr for InnerRing {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "open" => Ok(InnerRing::Open),
            "absorbing" => Ok(InnerRing::Absorbing),
            other => Err(format!("unknown inner ring mode {other:?} (expected open|absorbing)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartEstimate {
    pub site: Site,
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeEscape {
    pub r: f64,
    pub l: f64,
    pub side: Side,
    pub inner: InnerRing,
    pub backend: Backend,
    /// Largest estimate over the start sites.
    pub estimate: f64,
    pub stderr: f64,
    pub argmax: Site,
    pub per_start: Vec<StartEstimate>,
    pub cap_hits: u64,
    pub free_sites: usize,
    /// Continuum value at `K = L/r`.
    pub continuum: f64,
    /// `r ≥ 8` and `L/r ≥ 2`, where lattice and continuum are compared.
    pub asymptotic_regime: bool,
}

impl LatticeEscape {
    pub fn relative_error(&self) -> f64 {
        (self.estimate - self.continuum).abs() / self.continuum
    }
}

/// `max_{y ∈ ∂W^r} P^y(τ^+_{∂W^L} < τ^+_F)` where `F` is the trace of the
/// `side` ray below radius `L`, plus `∂W^r` when `inner` is absorbing.
pub fn lattice_escape_experiment(
    spec: &WedgeSpec,
    r: f64,
    l: f64,
    side: Side,
    inner: InnerRing,
    backend: Backend,
    mc: &McSettings,
) -> Result<LatticeEscape, EstimateError> {
    if !(r >= 1.0 && l > r && l.is_finite()) {
        return invalid(format!("need 1 ≤ r < L, got r = {r}, L = {l}"));
    }
    let fail = match inner {
        InnerRing::Open => spec.gamma_ray(side, 0.0, l)?,
        InnerRing::Absorbing => spec.gamma_ray(side, r, l)?,
    };
    let continuum = continuous_escape_probability(spec.phi(), l / r)?;
    let asymptotic_regime = r >= 8.0 && l / r >= 2.0;
    let (per_start, cap_hits, free_sites) = match backend {
        Backend::Oracle => {
            check_area(spec, l)?;
            let target = spec.ring(l)?;
            let mut domain = spec.ball_sector(l)?;
            domain.extend(target.iter().copied());
            let problem = HarmonicProblem::new(
                spec,
                &domain,
                vec![("target".into(), target), ("fail".into(), fail)],
                OuterBoundary::Closed,
            )?;
            check_sites(problem.free_count())?;
            let h = problem.solve_hit_probability("target")?;
            let rows = spec
                .ring(r)?
                .iter()
                .map(|&y| StartEstimate {
                    site: y,
                    estimate: h.neighbor_mean(y).expect("ring site is a vertex"),
                    stderr: 0.0,
                    trials: 0,
                })
                .collect::<Vec<_>>();
            (rows, 0, problem.free_count())
        }
        Backend::MonteCarlo => {
            let index = ClearanceIndex::from_set(&fail);
            let starts = ring_spread(spec, r, MC_SPREAD)?;
            let domain = WalkDomain::new(*spec);
            let stop = StopSpec::new()
                .absorb("target", Absorber::Outside(l))
                .absorb("fail", Absorber::Sites(&index))
                .rule(HitRule::Return);
            let ladder = JumpLadder::shared();
            let streams = Streams::named(mc.seed, "lattice-escape");
            let mut rows = Vec::with_capacity(starts.len());
            let mut caps = 0;
            for (i, &y) in starts.iter().enumerate() {
                let base = i as u64 * mc.trials;
                let outcomes = par_trials(&streams, mc.trials, mc.workers, |t, _| {
                    let mut rng = streams.trial(base + t);
                    accelerated_run_until(&domain, y, &stop, &NoObstacles, ladder, &mut rng)
                })?;
                let mut hits = 0;
                for o in outcomes {
                    match o?.kind {
                        OutcomeKind::Absorbed(0) => hits += 1,
                        OutcomeKind::CapHit => caps += 1,
                        _ => {}
                    }
                }
                let p = Proportion::new(hits, mc.trials);
                rows.push(StartEstimate { site: y, estimate: p.estimate, stderr: p.stderr, trials: mc.trials });
            }
            (rows, caps, 0)
        }
    };
    let best = per_start
        .iter()
        .max_by(|a, b| a.estimate.total_cmp(&b.estimate))
        .cloned()
        .ok_or_else(|| EstimateError::Invalid(format!("ring ∂W^{r} is empty")))?;
    Ok(LatticeEscape {
        r,
        l,
        side,
        inner,
        backend,
        estimate: best.estimate,
        stderr: best.stderr,
        argmax: best.site,
        per_start,
        cap_hits,
        free_sites,
        continuum,
        asymptotic_regime,
    })
}

/// Fitted power law `log P ≈ slope·log(L/r) + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub half_width: f64,
    /// `−π/(2φ)`.
    pub theory_slope: f64,
}

impl ExponentFit {
    pub fn from_points(points: &[(f64, f64)], theory_slope: f64) -> Result<Self, EstimateError> {
        if points.len() < 3 {
            return invalid(format!("an exponent fit needs at least 3 points, got {}", points.len()));
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return invalid("non-finite point in exponent fit");
        }
        let fit: LinearFit = linear_fit(points).ok_or_else(|| EstimateError::Invalid("degenerate fit".into()))?;
        Ok(ExponentFit {
            points: fit.points,
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            half_width: fit.slope_half_width,
            theory_slope,
        })
    }

    /// `slope ≤ theory_slope + margin`.
    pub fn within(&self, margin: f64) -> bool {
        self.slope <= self.theory_slope + margin
    }
}

/// `W^r ∪ (Γ^side ∩ W^L)` plus the ray sites on `∂W^L`: the connected set
/// hugging one boundary ray out to radius `L`.
pub fn worst_case_set(spec: &WedgeSpec, side: Side, r: f64, l: f64) -> Result<SiteSet, EstimateError> {
    let mut a = spec.ball_sector(r)?;
    a.extend(spec.gamma_ray(side, 0.0, l)?.iter().copied());
    let outer = spec.ring(l)?;
    a.extend(spec.gamma_ray(side, 0.0, l + 2.0)?.intersection(&outer).iter().copied());
    Ok(a)
}

/// `W^L ∪ ∂W^L`, which screens `∂W^r` completely.
pub fn full_sector_set(spec: &WedgeSpec, _r: f64, l: f64) -> Result<SiteSet, EstimateError> {
    Ok(spec.ball_sector(l)?.union(&spec.ring(l)?))
}

/// Checks the hypotheses of the Beurling-type estimate on `A`.
pub fn validate_barrier(spec: &WedgeSpec, a: &SiteSet, r: f64, l: f64) -> Result<(), EstimateError> {
    if let Some(p) = a.iter().find(|p| !spec.contains(**p)) {
        return invalid(format!("{p} lies outside the wedge"));
    }
    if !a.is_connected() {
        return invalid("set is not connected");
    }
    if !spec.ball_sector(r)?.is_subset(a) {
        return invalid(format!("set does not contain W^{r}"));
    }
    if a.is_disjoint(&spec.ring(l)?) {
        return invalid(format!("set does not reach ∂W^{l}"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeurlingPoint {
    pub l: f64,
    pub probability: f64,
    pub stderr: f64,
    pub trials: u64,
    pub free_sites: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeurlingResult {
    pub r: f64,
    pub backend: Backend,
    pub rows: Vec<BeurlingPoint>,
    /// Absent when fewer than three probabilities are positive.
    pub fit: Option<ExponentFit>,
}

/// Radius of the source ring standing in for infinity, relative to `L`.
pub const FAR_SOURCE_FACTOR: f64 = 1.5;
/// Reflecting truncation radius, relative to `L`.
pub const FAR_TRUNCATION_FACTOR: f64 = 2.0;

/// Probability that the walk started uniformly on `∂W^{1.5L}`, reflected at
/// radius `2L`, first meets `∂A` inside `∂W^r`.
pub fn far_hit_probability(
    spec: &WedgeSpec,
    a: &SiteSet,
    r: f64,
    l: f64,
    backend: Backend,
    mc: &McSettings,
) -> Result<BeurlingPoint, EstimateError> {
    let source_radius = FAR_SOURCE_FACTOR * l;
    let truncation = FAR_TRUNCATION_FACTOR * l;
    if a.max_norm() + 2.0 >= source_radius {
        return invalid(format!("set reaches radius {} beyond the source ring {source_radius}", a.max_norm()));
    }
    let boundary = spec.outer_boundary(a);
    let inner = boundary.intersection(&spec.ring(r)?);
    let rest = boundary.difference(&inner);
    let zero = BeurlingPoint { l, probability: 0.0, stderr: 0.0, trials: 0, free_sites: 0 };
    if inner.is_empty() {
        return Ok(zero);
    }
    let sources: Vec<Site> = spec.ring(source_radius)?.iter().copied().collect();
    match backend {
        Backend::Oracle => {
            check_area(spec, truncation)?;
            let domain = spec.ball_sector(truncation)?.difference(a);
            let mut labels = vec![("inner".to_string(), inner)];
            if !rest.is_empty() {
                labels.push(("rest".to_string(), rest));
            }
            let problem = HarmonicProblem::new(spec, &domain, labels, OuterBoundary::Reflecting)?;
            check_sites(problem.free_count())?;
            let h = problem.solve_hit_probability("inner")?;
            let total: f64 = sources.iter().map(|s| h.get(*s).expect("source is a vertex")).sum();
            Ok(BeurlingPoint {
                l,
                probability: total / sources.len() as f64,
                stderr: 0.0,
                trials: 0,
                free_sites: problem.free_count(),
            })
        }
        Backend::MonteCarlo => {
            let inner_idx = ClearanceIndex::from_set(&inner);
            let rest_idx = ClearanceIndex::from_set(&rest);
            let domain = WalkDomain::truncated(*spec, truncation);
            let stop = StopSpec::new()
                .absorb("inner", Absorber::Sites(&inner_idx))
                .absorb("rest", Absorber::Sites(&rest_idx));
            let ladder = JumpLadder::shared();
            let streams = Streams::named(mc.seed, &format!("beurling/{l}"));
            let outcomes = par_trials(&streams, mc.trials, mc.workers, |_, rng| {
                let start = sources[rng.random_range(0..sources.len())];
                accelerated_run_until(&domain, start, &stop, &NoObstacles, ladder, rng)
            })?;
            let mut hits = 0;
            for o in outcomes {
                if o?.kind == OutcomeKind::Absorbed(0) {
                    hits += 1;
                }
            }
            let p = Proportion::new(hits, mc.trials);
            Ok(BeurlingPoint { l, probability: p.estimate, stderr: p.stderr, trials: mc.trials, free_sites: 0 })
        }
    }
}

/// A barrier family indexed by `(spec, r, L)`.
pub type SetGenerator<'a> = &'a dyn Fn(&WedgeSpec, f64, f64) -> Result<SiteSet, EstimateError>;

/// Hitting probability of `∂W^r` from far away for each `L`, and the fit of
/// `log P` against `log(L/r)` with `r` held fixed.
pub fn beurling_experiment(
    spec: &WedgeSpec,
    r: f64,
    ls: &[f64],
    generator: SetGenerator,
    backend: Backend,
    mc: &McSettings,
) -> Result<BeurlingResult, EstimateError> {
    if !(r >= 1.0) {
        return invalid(format!("r = {r} must be at least 1"));
    }
    let mut rows = Vec::with_capacity(ls.len());
    for &l in ls {
        if !(l / r >= 4.0) {
            return invalid(format!("L/r = {} is below 4", l / r));
        }
        let a = generator(spec, r, l)?;
        validate_barrier(spec, &a, r, l)?;
        rows.push(far_hit_probability(spec, &a, r, l, backend, mc)?);
    }
    let points: Vec<(f64, f64)> =
        rows.iter().filter(|p| p.probability > 0.0).map(|p| ((p.l / r).ln(), p.probability.ln())).collect();
    let fit = if points.len() >= 3 { Some(ExponentFit::from_points(&points, -PI / (2.0 * spec.phi()))?) } else { None };
    Ok(BeurlingResult { r, backend, rows, fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceRow {
    pub site: Site,
    pub lhs: f64,
    pub upper: f64,
    pub lower: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceResult {
    pub rows: Vec<DominanceRow>,
    pub lhs_max: f64,
    pub upper_max: f64,
    pub lower_max: f64,
    /// `lhs_max ≤ max(upper_max, lower_max)` up to solver tolerance.
    pub dominated: bool,
    /// Starts where `lhs(y)` exceeds both ray values at `y`.
    pub pointwise_violations: usize,
}

/// Slack for comparing escape probabilities from independent solves.
pub const DOMINANCE_TOLERANCE: f64 = 1e-9;

/// Escape probabilities past the two ray barriers, solved once and reused
/// for many sets `A` at fixed `(r, L)`.
#[derive(Debug, Clone)]
pub struct DominanceContext {
    spec: WedgeSpec,
    r: f64,
    l: f64,
    domain: SiteSet,
    outer: SiteSet,
    starts: Vec<Site>,
    upper: Vec<f64>,
    lower: Vec<f64>,
}

impl DominanceContext {
    pub fn new(spec: &WedgeSpec, r: f64, l: f64) -> Result<Self, EstimateError> {
        if !(r >= 1.0 && l > r + 1.0 && l.is_finite()) {
            return invalid(format!("need 1 ≤ r < L − 1, got r = {r}, L = {l}"));
        }
        check_area(spec, l)?;
        let outer = spec.ring(l)?;
        let domain = spec.ball_sector(l)?.union(&outer);
        let starts: Vec<Site> = spec.ring(r)?.iter().copied().collect();
        let mut ctx = DominanceContext {
            spec: *spec,
            r,
            l,
            domain,
            outer,
            starts,
            upper: Vec::new(),
            lower: Vec::new(),
        };
        ctx.upper = ctx.escape_values(&spec.gamma_ray(Side::Upper, r, l)?)?;
        ctx.lower = ctx.escape_values(&spec.gamma_ray(Side::Lower, r, l)?)?;
        Ok(ctx)
    }

    pub fn spec(&self) -> &WedgeSpec {
        &self.spec
    }

    pub fn radii(&self) -> (f64, f64) {
        (self.r, self.l)
    }

    /// `P^y(τ^+_{∂W^L \ B} < τ^+_B)` for each start `y`.
    fn escape_values(&self, barrier: &SiteSet) -> Result<Vec<f64>, EstimateError> {
        let fail = barrier.intersection(&self.domain);
        let target = self.outer.difference(barrier);
        if target.is_empty() {
            return Ok(vec![0.0; self.starts.len()]);
        }
        let mut labels = vec![("target".to_string(), target)];
        if !fail.is_empty() {
            labels.push(("fail".to_string(), fail));
        }
        let problem = HarmonicProblem::new(&self.spec, &self.domain, labels, OuterBoundary::Closed)?;
        check_sites(problem.free_count())?;
        let h = problem.solve_hit_probability("target")?;
        Ok(self.starts.iter().map(|&y| h.neighbor_mean(y).expect("start is a vertex")).collect())
    }

    /// Compares the escape past `Ā` (or `A` itself when `closure` is false)
    /// with the escape past each boundary ray.
    pub fn check(&self, a: &SiteSet, closure: bool) -> Result<DominanceResult, EstimateError> {
        if a.is_empty() || !a.is_subset(&self.domain) {
            return invalid(format!("set must be a nonempty subset of W^{0} ∪ ∂W^{0}", self.l));
        }
        let barrier = if closure {
            validate_barrier(&self.spec, a, self.r, self.l)?;
            self.spec.closure(a)
        } else {
            a.clone()
        };
        let lhs = self.escape_values(&barrier)?;
        let rows: Vec<DominanceRow> = self
            .starts
            .iter()
            .zip(&lhs)
            .zip(self.upper.iter().zip(&self.lower))
            .map(|((&site, &lhs), (&upper, &lower))| DominanceRow { site, lhs, upper, lower })
            .collect();
        let max = |f: fn(&DominanceRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
        let lhs_max = max(|r| r.lhs);
        let upper_max = max(|r| r.upper);
        let lower_max = max(|r| r.lower);
        let pointwise_violations =
            rows.iter().filter(|r| r.lhs > r.upper.max(r.lower) + DOMINANCE_TOLERANCE).count();
        Ok(DominanceResult {
            dominated: lhs_max <= upper_max.max(lower_max) + DOMINANCE_TOLERANCE,
            rows,
            lhs_max,
            upper_max,
            lower_max,
            pointwise_violations,
        })
    }
}

/// One-shot [`DominanceContext::check`] on `Ā`.
pub fn dominance_check(spec: &WedgeSpec, r: f64, l: f64, a: &SiteSet) -> Result<DominanceResult, EstimateError> {
    DominanceContext::new(spec, r, l)?.check(a, true)
}

/// `W^r` plus the sites within distance 1/2 of the bisecting ray out to `∂W^L`.
pub fn radial_path_set(spec: &WedgeSpec, r: f64, l: f64) -> Result<SiteSet, EstimateError> {
    let mid = 0.5 * (spec.theta1() + spec.theta2());
    let (c, s) = (mid.cos(), mid.sin());
    let mut a = spec.ball_sector(r)?;
    let mut last = Site::ORIGIN;
    let mut t = 0.0;
    while last.norm() < l {
        let p = Site::new((t * c).round() as i64, (t * s).round() as i64);
        if p != last {
            // Keep the path ℓ¹-connected through an elbow site.
            if p.l1_distance(last) > 1 {
                let elbow = if spec.contains(Site::new(p.x, last.y)) { Site::new(p.x, last.y) } else { Site::new(last.x, p.y) };
                a.insert(elbow);
            }
            a.insert(p);
            last = p;
        }
        t += 0.25;
    }
    Ok(a)
}

/// A random connected set satisfying the dominance hypotheses: `W^r`, a
/// drifting walk path from `∂W^r` to `∂W^L`, and a few Eden blobs in `W^L`.
pub fn random_barrier<R: Rng + ?Sized>(spec: &WedgeSpec, r: f64, l: f64, rng: &mut R) -> Result<SiteSet, EstimateError> {
    let mut a = spec.ball_sector(r)?;
    let ring: Vec<Site> = spec.ring(r)?.iter().copied().collect();
    let mut p = ring[rng.random_range(0..ring.len())];
    a.insert(p);
    let drift: f64 = rng.random_range(0.2..0.7);
    while p.norm() < l {
        let nbrs = spec.neighbors(p)?;
        p = if rng.random::<f64>() < drift {
            *nbrs.iter().max_by(|a, b| a.norm2().cmp(&b.norm2())).expect("degree ≥ 1")
        } else {
            nbrs[rng.random_range(0..nbrs.len())]
        };
        a.insert(p);
    }
    let blobs = rng.random_range(0..4);
    for _ in 0..blobs {
        let members: Vec<Site> = a.iter().copied().filter(|q| q.norm() < l).collect();
        let mut blob = vec![members[rng.random_range(0..members.len())]];
        let size = rng.random_range(5..40);
        for _ in 0..size * 4 {
            if blob.len() >= size {
                break;
            }
            let from = blob[rng.random_range(0..blob.len())];
            let nbrs = spec.neighbors(from)?;
            let q = nbrs[rng.random_range(0..nbrs.len())];
            if q.norm() < l && a.insert(q) {
                blob.push(q);
            }
        }
    }
    Ok(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingEscape {
    pub r: f64,
    pub c: f64,
    pub eps: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub backend: Backend,
    pub inner_first: f64,
    pub stderr: f64,
    pub trials: u64,
    pub cap_hits: u64,
    /// `ε/(1+ε)`.
    pub limit: f64,
}

/// Probability, from a uniform start on `∂W^R`, of meeting `∂W^{R/C}`
/// before reaching radius `C^ε·R`.
pub fn ring_escape_experiment(
    spec: &WedgeSpec,
    r: f64,
    c: f64,
    eps: f64,
    backend: Backend,
    mc: &McSettings,
) -> Result<RingEscape, EstimateError> {
    if !(c > 1.0 && eps > 0.0 && r / c >= 4.0 && r.is_finite()) {
        return invalid(format!("need C > 1, ε > 0, R/C ≥ 4; got R = {r}, C = {c}, ε = {eps}"));
    }
    let inner_radius = r / c;
    let outer_radius = c.powf(eps) * r;
    if outer_radius - inner_radius < 2.0 || inner_radius + 1.0 > r {
        return invalid("rings must be separated by at least 2 lattice units");
    }
    let starts: Vec<Site> = spec.ring(r)?.iter().copied().collect();
    let limit = eps / (1.0 + eps);
    let (inner_first, stderr, trials, cap_hits) = match backend {
        Backend::Oracle => {
            check_area(spec, outer_radius)?;
            let inner = spec.ring(inner_radius)?;
            let outer = spec.ring(outer_radius)?;
            let domain = spec
                .ball_sector(outer_radius)?
                .difference(&spec.ball_sector(inner_radius)?)
                .union(&outer)
                .union(&inner);
            let problem = HarmonicProblem::new(
                spec,
                &domain,
                vec![("inner".into(), inner), ("outer".into(), outer)],
                OuterBoundary::Closed,
            )?;
            check_sites(problem.free_count())?;
            let h = problem.solve_hit_probability("inner")?;
            let mean = starts.iter().map(|s| h.get(*s).expect("start is a vertex")).sum::<f64>() / starts.len() as f64;
            (mean, 0.0, 0, 0)
        }
        Backend::MonteCarlo => {
            let domain = WalkDomain::new(*spec);
            let stop = StopSpec::new()
                .absorb("inner", Absorber::Ring(*spec, inner_radius))
                .absorb("outer", Absorber::Outside(outer_radius));
            let ladder = JumpLadder::shared();
            let streams = Streams::named(mc.seed, "ring-escape");
            let outcomes = par_trials(&streams, mc.trials, mc.workers, |_, rng| {
                let start = starts[rng.random_range(0..starts.len())];
                accelerated_run_until(&domain, start, &stop, &NoObstacles, ladder, rng)
            })?;
            let (mut hits, mut caps) = (0, 0);
            for o in outcomes {
                match o?.kind {
                    OutcomeKind::Absorbed(0) => hits += 1,
                    OutcomeKind::CapHit => caps += 1,
                    _ => {}
                }
            }
            let p = Proportion::new(hits, mc.trials);
            (p.estimate, p.stderr, mc.trials, caps)
        }
    };
    Ok(RingEscape {
        r,
        c,
        eps,
        inner_radius,
        outer_radius,
        backend,
        inner_first,
        stderr,
        trials,
        cap_hits,
        limit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarExitRow {
    pub t: f64,
    pub exit_radius: f64,
    pub step_budget: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub argmax: Site,
    pub per_start: Vec<StartEstimate>,
    /// Walks that used the whole budget without exiting.
    pub budget_exhausted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarExit {
    pub r: f64,
    pub eps: f64,
    pub rows: Vec<FarExitRow>,
    /// `log P` against `log T` over rows with a positive estimate.
    pub trend: Option<LinearFit>,
    pub decreasing: bool,
}

/// `max_x P^x(τ_{∂W^{T^{1/2+ε}R}} ≤ T·R²)` over a spread of starts on
/// `∂W^R`, for each `T`. Walks take single steps so the clock is exact.
pub fn far_exit_time_experiment(
    spec: &WedgeSpec,
    r: f64,
    ts: &[f64],
    eps: f64,
    starts: usize,
    mc: &McSettings,
) -> Result<FarExit, EstimateError> {
    if !(r >= 1.0 && eps > 0.0) {
        return invalid(format!("need R ≥ 1 and ε > 0, got R = {r}, ε = {eps}"));
    }
    let sites = ring_spread(spec, r, starts.max(1))?;
    let domain = WalkDomain::new(*spec);
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        let budget = t * r * r;
        if !(t > 0.0 && budget <= MAX_STEP_BUDGET) {
            return invalid(format!("step budget T·R² = {budget} outside (0, {MAX_STEP_BUDGET}]"));
        }
        let exit_radius = t.powf(0.5 + eps) * r;
        let stop = StopSpec::new().escape_at(exit_radius).cap(budget.floor() as u64);
        let streams = Streams::named(mc.seed, &format!("far-exit/{t}"));
        let mut per_start = Vec::with_capacity(sites.len());
        let mut exhausted = 0;
        for (i, &x) in sites.iter().enumerate() {
            let base = i as u64 * mc.trials;
            let outcomes = par_trials(&streams, mc.trials, mc.workers, |k, _| {
                let mut rng = streams.trial(base + k);
                run_until(&domain, x, &stop, &mut rng)
            })?;
            let mut hits = 0;
            for o in outcomes {
                match o?.kind {
                    OutcomeKind::Escaped => hits += 1,
                    _ => exhausted += 1,
                }
            }
            let p = Proportion::new(hits, mc.trials);
            per_start.push(StartEstimate { site: x, estimate: p.estimate, stderr: p.stderr, trials: mc.trials });
        }
        let best = per_start.iter().max_by(|a, b| a.estimate.total_cmp(&b.estimate)).cloned().expect("starts");
        rows.push(FarExitRow {
            t,
            exit_radius,
            step_budget: budget.floor() as u64,
            estimate: best.estimate,
            stderr: best.stderr,
            argmax: best.site,
            per_start,
            budget_exhausted: exhausted,
        });
    }
    let points: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.estimate > 0.0).map(|r| (r.t.ln(), r.estimate.ln())).collect();
    let decreasing = rows.windows(2).all(|w| w[1].estimate <= w[0].estimate);
    Ok(FarExit { r, eps, trend: linear_fit(&points), rows, decreasing })
}

/// Exact `P^start(τ_target ≤ steps)` for the walk on a truncated domain.
pub fn hit_within_steps(domain: &WalkDomain, start: Site, target: &SiteSet, steps: u64) -> Result<f64, EstimateError> {
    let t = domain.truncation.ok_or_else(|| EstimateError::Invalid("exact hitting needs a truncated domain".into()))?;
    if !domain.contains(start) {
        return Err(WalkError::StartOutside(start).into());
    }
    if target.contains(&start) {
        return Ok(1.0);
    }
    check_area(&domain.spec, t)?;
    let sites: Vec<Site> = domain.spec.ball_sector(t)?.iter().copied().collect();
    check_sites(sites.len())?;
    let mut index: DenseGrid<u32> = DenseGrid::new();
    for (i, p) in sites.iter().enumerate() {
        index.set(*p, i as u32 + 1);
    }
    let mut adjacency: Vec<[u32; 4]> = Vec::with_capacity(sites.len());
    let mut weight = Vec::with_capacity(sites.len());
    for p in &sites {
        let mask = domain.neighbor_mask(*p);
        let mut adj = [u32::MAX; 4];
        for (k, q) in p.lattice_neighbors().into_iter().enumerate() {
            if mask & (1 << k) != 0 {
                adj[k] = index.get(q) - 1;
            }
        }
        adjacency.push(adj);
        weight.push(1.0 / mask.count_ones().max(1) as f64);
    }
    let absorbing: Vec<bool> = sites.iter().map(|p| target.contains(p)).collect();
    let mut mass = vec![0.0; sites.len()];
    let mut next = vec![0.0; sites.len()];
    mass[(index.get(start) - 1) as usize] = 1.0;
    let mut hit = 0.0;
    for _ in 0..steps {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let share = m * weight[i];
            for &j in &adjacency[i] {
                if j != u32::MAX {
                    next[j as usize] += share;
                }
            }
        }
        for (i, v) in next.iter_mut().enumerate() {
            if absorbing[i] {
                hit += *v;
                *v = 0.0;
            }
        }
        std::mem::swap(&mut mass, &mut next);
    }
    Ok(hit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallSetHit {
    pub r: f64,
    pub t: f64,
    pub set: SiteSet,
    pub estimate: f64,
    pub stderr: f64,
    pub argmax: Site,
    pub per_start: Vec<StartEstimate>,
    /// Exact value at `argmax` for the walk reflected at `truncation`.
    pub exact: Option<f64>,
    pub truncation: Option<f64>,
}

/// `max_x P^x(τ_A ≤ T·R²)` over a spread of `x ∈ ∂W^R`, with an optional
/// exact check at the worst start on a truncated copy of the wedge.
pub fn small_set_hit_experiment(
    spec: &WedgeSpec,
    a: &SiteSet,
    r: f64,
    t: f64,
    starts: usize,
    mc: &McSettings,
    exact_truncation: Option<f64>,
) -> Result<SmallSetHit, EstimateError> {
    let budget = t * r * r;
    if !(t > 0.0 && budget <= MAX_STEP_BUDGET) {
        return invalid(format!("step budget T·R² = {budget} outside (0, {MAX_STEP_BUDGET}]"));
    }
    if a.is_empty() || a.max_norm() >= r {
        return invalid(format!("A must be nonempty and inside W^{r}"));
    }
    let index = ClearanceIndex::from_set(a);
    let sites = ring_spread(spec, r, starts.max(1))?;
    let domain = WalkDomain::new(*spec);
    let stop = StopSpec::new().absorb("A", Absorber::Sites(&index)).cap(budget.floor() as u64);
    let streams = Streams::named(mc.seed, "small-set-hit");
    let mut per_start = Vec::with_capacity(sites.len());
    for (i, &x) in sites.iter().enumerate() {
        let base = i as u64 * mc.trials;
        let outcomes = par_trials(&streams, mc.trials, mc.workers, |k, _| {
            let mut rng = streams.trial(base + k);
            run_until(&domain, x, &stop, &mut rng)
        })?;
        let mut hits = 0;
        for o in outcomes {
            if o?.kind == OutcomeKind::Absorbed(0) {
                hits += 1;
            }
        }
        let p = Proportion::new(hits, mc.trials);
        per_start.push(StartEstimate { site: x, estimate: p.estimate, stderr: p.stderr, trials: mc.trials });
    }
    let best = per_start.iter().max_by(|a, b| a.estimate.total_cmp(&b.estimate)).cloned().expect("starts");
    let exact = match exact_truncation {
        Some(m) => Some(hit_within_steps(&WalkDomain::truncated(*spec, m), best.site, a, budget.floor() as u64)?),
        None => None,
    };
    Ok(SmallSetHit {
        r,
        t,
        set: a.clone(),
        estimate: best.estimate,
        stderr: best.stderr,
        argmax: best.site,
        per_start,
        exact,
        truncation: exact_truncation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub r: f64,
    pub sources: usize,
    pub max_tv: f64,
    pub pair: (Site, Site),
    pub free_sites: usize,
}

/// Reflecting truncation of the convergence diagnostic, relative to `R`.
pub const CONVERGENCE_TRUNCATION_FACTOR: f64 = 4.0;

/// Hitting laws `H_A(x, ·)` for every `x ∈ ∂W^R`, on the wedge reflected at `4R`.
pub fn ring_hit_laws(spec: &WedgeSpec, a: &SiteSet, r: f64) -> Result<(Vec<(Site, BTreeMap<Site, f64>)>, usize), EstimateError> {
    let truncation = CONVERGENCE_TRUNCATION_FACTOR * r;
    check_area(spec, truncation)?;
    let domain = spec.ball_sector(truncation)?.difference(a);
    let exposed: Vec<Site> = a
        .iter()
        .copied()
        .filter(|p| spec.neighbors(*p).map(|n| n.iter().any(|q| !a.contains(q))).unwrap_or(false))
        .collect();
    if exposed.is_empty() {
        return invalid("A has no exposed site");
    }
    let labels: Vec<(String, SiteSet)> =
        exposed.iter().map(|p| (format!("{},{}", p.x, p.y), [*p].into_iter().collect())).collect();
    let problem = HarmonicProblem::new(spec, &domain, labels, OuterBoundary::Reflecting)?;
    check_sites(problem.free_count())?;
    let sources: Vec<Site> = spec.ring(r)?.iter().copied().collect();
    let mut laws: Vec<BTreeMap<Site, f64>> = vec![BTreeMap::new(); sources.len()];
    for (k, p) in exposed.iter().enumerate() {
        let h = problem.solve_dirichlet(|label, _| if label == k { 1.0 } else { 0.0 })?;
        for (law, s) in laws.iter_mut().zip(&sources) {
            let v = h.get(*s).expect("source is a vertex");
            if v != 0.0 {
                law.insert(*p, v);
            }
        }
    }
    Ok((sources.into_iter().zip(laws).collect(), problem.free_count()))
}

/// Maximum pairwise total variation between hitting laws of `A` from the
/// sites of `∂W^R`, for each `R`.
pub fn convergence_diagnostic(spec: &WedgeSpec, a: &SiteSet, rs: &[f64]) -> Result<Vec<ConvergenceRow>, EstimateError> {
    let min_r = rs.iter().copied().fold(f64::INFINITY, f64::min);
    if a.is_empty() || a.iter().any(|p| !spec.contains(*p)) {
        return invalid("A must be a nonempty subset of the wedge");
    }
    if a.max_norm() >= min_r / 4.0 {
        return invalid(format!("A must lie inside W^{}", min_r / 4.0));
    }
    let mut rows = Vec::with_capacity(rs.len());
    for &r in rs {
        let (laws, free_sites) = ring_hit_laws(spec, a, r)?;
        let mut max_tv = 0.0;
        let mut pair = (laws[0].0, laws[0].0);
        for i in 0..laws.len() {
            for j in i + 1..laws.len() {
                let tv = total_variation(&laws[i].1, &laws[j].1);
                if tv > max_tv {
                    max_tv = tv;
                    pair = (laws[i].0, laws[j].0);
                }
            }
        }
        rows.push(ConvergenceRow { r, sources: laws.len(), max_tv, pair, free_sites });
    }
    Ok(rows)
}

/// Strictly decreasing within `slack`.
pub fn strictly_decreasing(rows: &[ConvergenceRow]) -> bool {
    rows.windows(2).all(|w| w[1].max_tv < w[0].max_tv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistanceRow {
    pub l: f64,
    pub resistance: f64,
    pub energy_resistance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistanceLaw {
    pub rows: Vec<ResistanceRow>,
    /// Resistance against `ln L`.
    pub fit: LinearFit,
}

/// Effective resistance from the origin to `∂W^L` on `W^L ∪ ∂W^L`, and its
/// fit against `ln L`.
pub fn resistance_log_law(spec: &WedgeSpec, ls: &[f64]) -> Result<ResistanceLaw, EstimateError> {
    let mut rows = Vec::with_capacity(ls.len());
    for &l in ls {
        check_area(spec, l)?;
        let z = spec.ring(l)?;
        let res = effective_resistance(spec, Site::ORIGIN, &z, l)?;
        rows.push(ResistanceRow { l, resistance: res.resistance, energy_resistance: res.energy_resistance });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.l.ln(), r.resistance)).collect();
    let fit = linear_fit(&points).ok_or_else(|| EstimateError::Invalid("need two distinct radii".into()))?;
    Ok(ResistanceLaw { rows, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnRow {
    pub l: f64,
    pub u: Site,
    pub value: f64,
    /// `value · ln L`.
    pub scaled: f64,
    pub warning: Option<String>,
}

/// Site of `∂W^L` closest in angle to the wedge bisector.
pub fn bisector_site(spec: &WedgeSpec, l: f64) -> Result<Site, EstimateError> {
    let mid = 0.5 * (spec.theta1() + spec.theta2());
    spec.ring(l)?
        .iter()
        .copied()
        .min_by(|a, b| {
            let da = ((a.y as f64).atan2(a.x as f64) - mid).abs();
            let db = ((b.y as f64).atan2(b.x as f64) - mid).abs();
            da.total_cmp(&db)
        })
        .ok_or_else(|| EstimateError::Invalid(format!("ring ∂W^{l} is empty")))
}

/// `P^u(τ^+_Ā ≤ τ^+_u)` for `u` the bisector site of `∂W^L`, for each `L`.
pub fn return_probability_scaling(spec: &WedgeSpec, a: &SiteSet, ls: &[f64]) -> Result<Vec<ReturnRow>, EstimateError> {
    let mut rows = Vec::with_capacity(ls.len());
    for &l in ls {
        let u = bisector_site(spec, l)?;
        check_area(spec, 8.0 * (l + 2.0))?;
        let p = return_probability(spec, u, a, 0.0)?;
        rows.push(ReturnRow { l, u, value: p.value, scaled: p.value * l.ln(), warning: p.warning });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(lower: &str, upper: &str) -> WedgeSpec {
        WedgeSpec::new(lower.parse().unwrap(), upper.parse().unwrap()).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let v = continuous_escape_probability(PI / 2.0, 2.0).unwrap();
        assert!((v - 2.0 / PI * (4.0f64 / 3.0).atan()).abs() < 1e-14);
        assert!((continuous_escape_probability(1.0, 1.0 + 1e-12).unwrap() - 1.0).abs() < 1e-6);
        assert!(continuous_escape_probability(1.0, 1.0).is_err());
        assert!(continuous_escape_probability(0.0, 2.0).is_err());
        assert!(continuous_escape_probability(PI * 1.01, 2.0).is_err());
        let far = continuous_escape_probability(0.1, 1e6).unwrap();
        assert!(far > 0.0 && far < 1e-80);
    }

    #[test]
    fn bound_holds_and_is_sharp() {
        for phi in [0.3, PI / 4.0, PI / 2.0, PI] {
            for k in [2.0, 3.0, 10.0, 1e3] {
                let b = escape_upper_bound(phi, k).unwrap();
                assert!(b.formula <= b.bound);
            }
            let c = calibrated_constant(phi).unwrap();
            assert!(c <= ESCAPE_CONSTANT * (1.0 + 1e-12) && c > ESCAPE_CONSTANT * (1.0 - 1e-6), "φ={phi}: {c}");
        }
        assert!(escape_upper_bound(1.0, 1.5).is_err());
    }

    #[test]
    fn spread_keeps_extremes() {
        let spec = w("0/1", "1/1");
        let ring: Vec<Site> = spec.ring(40.0).unwrap().iter().copied().collect();
        let spread = ring_spread(&spec, 40.0, 16).unwrap();
        assert_eq!(spread.len(), 16);
        let angle = |p: &Site| (p.y as f64).atan2(p.x as f64);
        let lo = ring.iter().map(angle).fold(f64::INFINITY, f64::min);
        let hi = ring.iter().map(angle).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(angle(&spread[0]), lo);
        assert_eq!(angle(spread.last().unwrap()), hi);
    }

    #[test]
    fn escape_with_adjacent_target_is_tiny_but_finite() {
        let spec = w("0/1", "1/1");
        let res = lattice_escape_experiment(
            &spec,
            8.0,
            9.0,
            Side::Lower,
            InnerRing::Absorbing,
            Backend::Oracle,
            &McSettings::default(),
        )
        .unwrap();
        assert!(res.estimate.is_finite() && res.estimate >= 0.0 && res.estimate <= 1.0);
        assert!(!res.asymptotic_regime);
    }

    #[test]
    fn screened_sector_has_zero_probability() {
        let spec = w("0/1", "1/1");
        let a = full_sector_set(&spec, 4.0, 16.0).unwrap();
        let p = far_hit_probability(&spec, &a, 4.0, 16.0, Backend::Oracle, &McSettings::default()).unwrap();
        assert_eq!(p.probability, 0.0);
    }

    #[test]
    fn worst_case_set_is_admissible() {
        for spec in [w("0/1", "1/1"), w("-1/2", "1/3"), WedgeSpec::half_plane()] {
            for side in [Side::Upper, Side::Lower] {
                let a = worst_case_set(&spec, side, 4.0, 20.0).unwrap();
                validate_barrier(&spec, &a, 4.0, 20.0).unwrap();
            }
        }
    }

    #[test]
    fn ray_barrier_equals_itself() {
        let spec = w("0/1", "1/1");
        let ctx = DominanceContext::new(&spec, 4.0, 12.0).unwrap();
        let gamma = spec.gamma_ray(Side::Lower, 4.0, 12.0).unwrap();
        let res = ctx.check(&gamma, false).unwrap();
        for row in &res.rows {
            assert_eq!(row.lhs, row.lower);
        }
        assert!(res.dominated);
    }

    #[test]
    fn radial_path_is_connected_and_admissible() {
        let spec = w("-1/1", "1/1");
        let a = radial_path_set(&spec, 4.0, 20.0).unwrap();
        validate_barrier(&spec, &a, 4.0, 20.0).unwrap();
    }

    #[test]
    fn random_barriers_are_admissible() {
        let spec = w("0/1", "2/3");
        let streams = Streams::named(5, "barrier-test");
        for t in 0..20 {
            let a = random_barrier(&spec, 5.0, 18.0, &mut streams.trial(t)).unwrap();
            validate_barrier(&spec, &a, 5.0, 18.0).unwrap();
            assert!(a.is_subset(&spec.ball_sector(18.0).unwrap().union(&spec.ring(18.0).unwrap())));
        }
    }

    #[test]
    fn dp_matches_hand_count() {
        // Path 0–1–2 in the thin wedge; target {2} from 0: hit at step 2 w.p. 1/2.
        let spec = w("0/1", "1/3");
        let domain = WalkDomain::truncated(spec, 2.5);
        let target: SiteSet = [Site::new(2, 0)].into_iter().collect();
        let p2 = hit_within_steps(&domain, Site::ORIGIN, &target, 2).unwrap();
        let p1 = hit_within_steps(&domain, Site::ORIGIN, &target, 1).unwrap();
        assert_eq!(p1, 0.0);
        // From the origin: to (1,0) surely; from (1,0) degree 2: (0,0) or (2,0).
        assert!((p2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ring_rejects_overlapping_rings() {
        let spec = WedgeSpec::half_plane();
        let mc = McSettings::default();
        assert!(ring_escape_experiment(&spec, 16.0, 8.0, 1.0, Backend::Oracle, &mc).is_err());
        assert!(ring_escape_experiment(&spec, 16.0, 2.0, 0.0, Backend::Oracle, &mc).is_err());
    }

    #[test]
    fn single_site_target_has_zero_spread() {
        let spec = w("0/1", "1/1");
        let a: SiteSet = [Site::ORIGIN].into_iter().collect();
        let rows = convergence_diagnostic(&spec, &a, &[8.0, 12.0]).unwrap();
        for r in rows {
            assert!(r.max_tv < 1e-9, "{r:?}");
        }
    }
}
