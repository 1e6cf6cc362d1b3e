//! Exact discrete-harmonic quantities on finite pieces of the wedge graph.
//!
//! Every quantity reduces to a Dirichlet problem for the graph Laplacian on
//! the free sites, solved by preconditioned conjugate gradients.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Site, SiteSet, WedgeSpec};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;
/// Relative change under doubling of the truncation that triggers a warning.
pub const TRUNCATION_SENSITIVITY: f64 = 0.01;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("absorbing set {0:?} is empty")]
    EmptyAbsorbing(String),
    #[error("absorbing sets {0:?} and {1:?} overlap at {2}")]
    OverlappingAbsorbing(String, String, Site),
    #[error("no absorbing set labelled {0:?}")]
    UnknownLabel(String),
    #[error("site {0} lies outside the wedge")]
    OutsideWedge(Site),
    #[error("free site {site} has wedge neighbor {neighbor} outside the domain")]
    OpenBoundary { site: Site, neighbor: Site },
    #[error("free site {0} cannot reach any absorbing site")]
    Disconnected(Site),
    #[error("site {0} is not a free site of the problem")]
    NotFree(Site),
    #[error("solver stopped after {iterations} iterations at relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// How a free site's wedge neighbors outside the domain are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OuterBoundary {
    /// Every wedge neighbor of a free site must be in the domain.
    Closed,
    /// Edges leaving the domain are dropped, so the walk reflects there.
    Reflecting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tolerance: DEFAULT_TOLERANCE, max_iterations: DEFAULT_MAX_ITERATIONS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `M x = b` for a symmetric positive-definite `M` given by `apply`,
/// with Jacobi preconditioning. The stopping test is on `‖r‖ / ‖b‖`.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    diagonal: &[f64],
    b: &[f64],
    settings: SolverSettings,
) -> Result<(Vec<f64>, SolveReport), OracleError> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((x, SolveReport { iterations: 0, residual: 0.0 }));
    }
    let inv: Vec<f64> = diagonal.iter().map(|d| 1.0 / d).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = 1.0;
    for iteration in 1..=settings.max_iterations {
        apply(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        residual = norm(&r) / b_norm;
        if residual <= settings.tolerance {
            // Confirm against the true residual; recursion drift can undershoot it.
            apply(&x, &mut q);
            let true_res = b.iter().zip(&q).map(|(b, q)| (b - q) * (b - q)).sum::<f64>().sqrt() / b_norm;
            if true_res <= settings.tolerance * 10.0 {
                return Ok((x, SolveReport { iterations: iteration, residual: true_res }));
            }
            for i in 0..n {
                r[i] = b[i] - q[i];
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(OracleError::NotConverged { iterations: settings.max_iterations, residual })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A Dirichlet problem on a finite piece of the wedge graph.
#[derive(Debug, Clone)]
pub struct HarmonicProblem {
    spec: Option<WedgeSpec>,
    labels: Vec<String>,
    sites: Vec<Site>,
    index: HashMap<Site, u32>,
    /// Label index per site, or `NONE` for free sites.
    label_of: Vec<u32>,
    /// Position among free sites, or `NONE`.
    free_pos: Vec<u32>,
    free: Vec<u32>,
    /// Graph neighbors of each site, `NONE`-padded.
    adjacency: Vec<[u32; 4]>,
    settings: SolverSettings,
}

impl HarmonicProblem {
    /// Problem on the wedge graph: the vertex set is `domain ∪ absorbing`.
    pub fn new(
        spec: &WedgeSpec,
        domain: &SiteSet,
        absorbing: Vec<(String, SiteSet)>,
        boundary: OuterBoundary,
    ) -> Result<Self, OracleError> {
        Self::build(Some(spec), domain, absorbing, boundary)
    }

    /// Problem on the plain square lattice, ignoring any wedge.
    pub fn on_lattice(domain: &SiteSet, absorbing: Vec<(String, SiteSet)>) -> Result<Self, OracleError> {
        Self::build(None, domain, absorbing, OuterBoundary::Closed)
    }

    fn build(
        spec: Option<&WedgeSpec>,
        domain: &SiteSet,
        absorbing: Vec<(String, SiteSet)>,
        boundary: OuterBoundary,
    ) -> Result<Self, OracleError> {
        if absorbing.is_empty() {
            return Err(OracleError::Invalid("at least one absorbing set is required".into()));
        }
        let mut owner: HashMap<Site, u32> = HashMap::new();
        for (li, (label, set)) in absorbing.iter().enumerate() {
            if set.is_empty() {
                return Err(OracleError::EmptyAbsorbing(label.clone()));
            }
            for &p in set.iter() {
                if let Some(&prev) = owner.get(&p) {
                    return Err(OracleError::OverlappingAbsorbing(
                        absorbing[prev as usize].0.clone(),
                        label.clone(),
                        p,
                    ));
                }
                owner.insert(p, li as u32);
            }
        }
        let mut sites: Vec<Site> = domain.iter().copied().collect();
        for (_, set) in &absorbing {
            sites.extend(set.iter().copied().filter(|p| !domain.contains(p)));
        }
        sites.sort();
        if let Some(spec) = spec {
            if let Some(&p) = sites.iter().find(|p| !spec.contains(**p)) {
                return Err(OracleError::OutsideWedge(p));
            }
        }
        let index: HashMap<Site, u32> = sites.iter().enumerate().map(|(i, &p)| (p, i as u32)).collect();
        let n = sites.len();
        let mut label_of = vec![NONE; n];
        let mut free_pos = vec![NONE; n];
        let mut free = Vec::new();
        for (i, p) in sites.iter().enumerate() {
            match owner.get(p) {
                Some(&l) => label_of[i] = l,
                None => {
                    free_pos[i] = free.len() as u32;
                    free.push(i as u32);
                }
            }
        }
        let mut adjacency = vec![[NONE; 4]; n];
        for (i, p) in sites.iter().enumerate() {
            for (slot, q) in p.lattice_neighbors().into_iter().enumerate() {
                match index.get(&q) {
                    Some(&j) => adjacency[i][slot] = j,
                    None => {
                        let in_wedge = spec.map_or(true, |s| s.contains(q));
                        if label_of[i] == NONE && in_wedge && boundary == OuterBoundary::Closed {
                            return Err(OracleError::OpenBoundary { site: *p, neighbor: q });
                        }
                    }
                }
            }
        }
        let problem = HarmonicProblem {
            spec: spec.copied(),
            labels: absorbing.into_iter().map(|(l, _)| l).collect(),
            sites,
            index,
            label_of,
            free_pos,
            free,
            adjacency,
            settings: SolverSettings::default(),
        };
        problem.check_reachability()?;
        Ok(problem)
    }

    pub fn with_settings(mut self, settings: SolverSettings) -> Self {
        self.settings = settings;
        self
    }

    fn check_reachability(&self) -> Result<(), OracleError> {
        let n = self.sites.len();
        let mut seen = vec![false; n];
        let mut queue: VecDeque<u32> = VecDeque::new();
        for i in 0..n {
            if self.label_of[i] != NONE {
                seen[i] = true;
                queue.push_back(i as u32);
            }
        }
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i as usize] {
                if j != NONE && !seen[j as usize] {
                    seen[j as usize] = true;
                    queue.push_back(j);
                }
            }
        }
        match (0..n).find(|&i| !seen[i]) {
            Some(i) => Err(OracleError::Disconnected(self.sites[i])),
            None => Ok(()),
        }
    }

    pub fn spec(&self) -> Option<&WedgeSpec> {
        self.spec.as_ref()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    pub fn free_sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.free.iter().map(|&i| self.sites[i as usize])
    }

    pub fn is_free(&self, p: Site) -> bool {
        self.index.get(&p).is_some_and(|&i| self.label_of[i as usize] == NONE)
    }

    /// Graph degree of a vertex of the problem.
    pub fn degree(&self, p: Site) -> Option<usize> {
        let &i = self.index.get(&p)?;
        Some(self.adjacency[i as usize].iter().filter(|&&j| j != NONE).count())
    }

    fn label_index(&self, label: &str) -> Result<u32, OracleError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| i as u32)
            .ok_or_else(|| OracleError::UnknownLabel(label.to_string()))
    }

    fn free_degree(&self, f: usize) -> f64 {
        let i = self.free[f] as usize;
        self.adjacency[i].iter().filter(|&&j| j != NONE).count() as f64
    }

    fn apply_laplacian(&self, x: &[f64], out: &mut [f64]) {
        for (f, slot) in out.iter_mut().enumerate() {
            let i = self.free[f] as usize;
            let mut acc = 0.0;
            let mut deg = 0.0;
            for &j in &self.adjacency[i] {
                if j == NONE {
                    continue;
                }
                deg += 1.0;
                let fj = self.free_pos[j as usize];
                if fj != NONE {
                    acc += x[fj as usize];
                }
            }
            *slot = deg * x[f] - acc;
        }
    }

    fn solve_free(&self, rhs: &[f64]) -> Result<(Vec<f64>, SolveReport), OracleError> {
        let diag: Vec<f64> = (0..self.free.len()).map(|f| self.free_degree(f)).collect();
        conjugate_gradient(|x, out| self.apply_laplacian(x, out), &diag, rhs, self.settings)
    }

    /// Harmonic extension of the boundary data `value(label index, site)`.
    pub fn solve_dirichlet(&self, value: impl Fn(usize, Site) -> f64) -> Result<Potential<'_>, OracleError> {
        let boundary: Vec<f64> = (0..self.sites.len())
            .map(|i| match self.label_of[i] {
                NONE => 0.0,
                l => value(l as usize, self.sites[i]),
            })
            .collect();
        let rhs: Vec<f64> = self
            .free
            .iter()
            .map(|&i| {
                self.adjacency[i as usize]
                    .iter()
                    .filter(|&&j| j != NONE && self.label_of[j as usize] != NONE)
                    .map(|&j| boundary[j as usize])
                    .sum()
            })
            .collect();
        let (values, report) = self.solve_free(&rhs)?;
        Ok(Potential { problem: self, values, boundary, report })
    }

    /// `h(x) = P^x(the walk is absorbed in the target set)`.
    pub fn solve_hit_probability(&self, target: &str) -> Result<Potential<'_>, OracleError> {
        let t = self.label_index(target)? as usize;
        self.solve_dirichlet(|l, _| if l == t { 1.0 } else { 0.0 })
    }

    /// Exact law of the absorption site from `source`, via one Green-function solve.
    pub fn hit_distribution(&self, source: Site) -> Result<HitDistribution, OracleError> {
        let &si = self.index.get(&source).ok_or(OracleError::NotFree(source))?;
        let sf = self.free_pos[si as usize];
        if sf == NONE {
            return Err(OracleError::NotFree(source));
        }
        let mut rhs = vec![0.0; self.free.len()];
        rhs[sf as usize] = 1.0;
        // u = L^{-1} e_source; the expected number of visits to z is u(z)·deg(z),
        // and each visit leaves for a given neighbor with probability 1/deg(z).
        let (u, report) = self.solve_free(&rhs)?;
        let mut probs: BTreeMap<Site, f64> = BTreeMap::new();
        let mut by_label = vec![0.0; self.labels.len()];
        let mut expected_steps = 0.0;
        for (f, &i) in self.free.iter().enumerate() {
            expected_steps += u[f] * self.free_degree(f);
            for &j in &self.adjacency[i as usize] {
                if j != NONE && self.label_of[j as usize] != NONE {
                    *probs.entry(self.sites[j as usize]).or_insert(0.0) += u[f];
                    by_label[self.label_of[j as usize] as usize] += u[f];
                }
            }
        }
        Ok(HitDistribution {
            source,
            labels: self.labels.clone(),
            probs,
            by_label,
            expected_steps,
            report,
        })
    }

    /// Hit distributions from many sources, solved in parallel.
    pub fn hit_distributions(&self, sources: &[Site]) -> Result<Vec<HitDistribution>, OracleError> {
        sources.par_iter().map(|&s| self.hit_distribution(s)).collect()
    }
}

/// A solved harmonic function.
#[derive(Debug, Clone)]
pub struct Potential<'a> {
    problem: &'a HarmonicProblem,
    values: Vec<f64>,
    boundary: Vec<f64>,
    pub report: SolveReport,
}

impl Potential<'_> {
    /// Value at any vertex of the problem.
    pub fn get(&self, p: Site) -> Option<f64> {
        let &i = self.problem.index.get(&p)?;
        let f = self.problem.free_pos[i as usize];
        Some(if f == NONE { self.boundary[i as usize] } else { self.values[f as usize] })
    }

    pub fn free_values(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        self.problem.free.iter().zip(&self.values).map(|(&i, &v)| (self.problem.sites[i as usize], v))
    }

    /// Mean of the function over the graph neighbors of `p`.
    pub fn neighbor_mean(&self, p: Site) -> Option<f64> {
        let &i = self.problem.index.get(&p)?;
        let mut sum = 0.0;
        let mut deg = 0usize;
        for &j in &self.problem.adjacency[i as usize] {
            if j != NONE {
                sum += self.get(self.problem.sites[j as usize]).expect("vertex");
                deg += 1;
            }
        }
        Some(sum / deg as f64)
    }

    /// `Σ_edges (h(x) − h(y))²` over the whole graph.
    pub fn dirichlet_energy(&self) -> f64 {
        let p = self.problem;
        let mut energy = 0.0;
        for (i, adj) in p.adjacency.iter().enumerate() {
            let hi = self.get(p.sites[i]).expect("vertex");
            for &j in adj {
                if j != NONE && (j as usize) > i {
                    let d = hi - self.get(p.sites[j as usize]).expect("vertex");
                    energy += d * d;
                }
            }
        }
        energy
    }

    /// Maximum residual of the mean-value property over free sites.
    pub fn harmonic_defect(&self) -> f64 {
        self.free_values()
            .map(|(p, v)| (self.neighbor_mean(p).expect("vertex") - v).abs())
            .fold(0.0, f64::max)
    }

    /// `x,y,value` lines over every vertex.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,value\n");
        for (i, p) in self.problem.sites.iter().enumerate() {
            let f = self.problem.free_pos[i];
            let v = if f == NONE { self.boundary[i] } else { self.values[f as usize] };
            out.push_str(&format!("{},{},{:.17e}\n", p.x, p.y, v));
        }
        out
    }
}

/// Law of the absorption site from one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitDistribution {
    pub source: Site,
    pub labels: Vec<String>,
    pub probs: BTreeMap<Site, f64>,
    pub by_label: Vec<f64>,
    /// Expected number of steps before absorption.
    pub expected_steps: f64,
    pub report: SolveReport,
}

impl HitDistribution {
    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    pub fn get(&self, p: Site) -> f64 {
        self.probs.get(&p).copied().unwrap_or(0.0)
    }

    pub fn label_mass(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.by_label[i])
    }
}

/// Total-variation distance between two laws given as site maps.
pub fn total_variation(a: &BTreeMap<Site, f64>, b: &BTreeMap<Site, f64>) -> f64 {
    let mut sum = 0.0;
    for (p, va) in a {
        sum += (va - b.get(p).copied().unwrap_or(0.0)).abs();
    }
    for (p, vb) in b {
        if !a.contains_key(p) {
            sum += vb.abs();
        }
    }
    0.5 * sum
}

/// Escape probability `P^v(τ_Z < τ_v^+)` together with both resistance routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resistance {
    pub escape_probability: f64,
    pub degree: usize,
    /// `1 / (deg(v)·p)`.
    pub resistance: f64,
    /// `1 / E(φ)` for the unit potential `φ` with `φ(v) = 1`, `φ|_Z = 0`.
    pub energy_resistance: f64,
    pub report: SolveReport,
}

/// Effective resistance between `v` and `Z` on `W^R ∪ Z`, reflecting at radius `R`.
pub fn effective_resistance(
    spec: &WedgeSpec,
    v: Site,
    z: &SiteSet,
    truncation: f64,
) -> Result<Resistance, OracleError> {
    if z.contains(&v) {
        return Err(OracleError::Invalid(format!("{v} belongs to the target set")));
    }
    if z.is_empty() {
        return Err(OracleError::EmptyAbsorbing("Z".into()));
    }
    let mut domain = spec.ball_sector(truncation)?;
    domain.insert(v);
    domain.extend(z.iter().copied());
    escape_between(spec, v, z, &domain)
}

fn escape_between(spec: &WedgeSpec, v: Site, z: &SiteSet, domain: &SiteSet) -> Result<Resistance, OracleError> {
    let source: SiteSet = [v].into_iter().collect();
    let problem = HarmonicProblem::new(
        spec,
        domain,
        vec![("Z".to_string(), z.clone()), ("v".to_string(), source)],
        OuterBoundary::Reflecting,
    )?;
    let degree = problem.degree(v).expect("vertex");
    if degree == 0 {
        return Err(OracleError::Disconnected(v));
    }
    let to_z = problem.solve_hit_probability("Z")?;
    let p = to_z.neighbor_mean(v).expect("vertex");
    let unit = problem.solve_hit_probability("v")?;
    let energy = unit.dirichlet_energy();
    Ok(Resistance {
        escape_probability: p,
        degree,
        resistance: 1.0 / (degree as f64 * p),
        energy_resistance: 1.0 / energy,
        report: to_z.report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnProbability {
    pub value: f64,
    pub truncation: f64,
    pub doubled_value: f64,
    pub resistance: Resistance,
    pub warning: Option<String>,
}

impl ReturnProbability {
    pub fn relative_sensitivity(&self) -> f64 {
        ((self.doubled_value - self.value) / self.value).abs()
    }
}

/// `P^u(τ^+_Ā ≤ τ^+_u)` on the wedge truncated (reflecting) at
/// `max(truncation, 4·max(‖u‖, max‖a‖))`, re-solved at twice that radius.
pub fn return_probability(
    spec: &WedgeSpec,
    u: Site,
    a: &SiteSet,
    truncation: f64,
) -> Result<ReturnProbability, OracleError> {
    let closure = spec.closure(a);
    if closure.contains(&u) {
        return Err(OracleError::Invalid(format!("{u} lies in the closure of A")));
    }
    let reach = u.norm().max(closure.max_norm()) + 1.0;
    let t = truncation.max(4.0 * reach);
    let at = |radius: f64| -> Result<Resistance, OracleError> {
        let mut domain = spec.ball_sector(radius)?;
        domain.insert(u);
        domain.extend(closure.iter().copied());
        escape_between(spec, u, &closure, &domain)
    };
    let base = at(t)?;
    let doubled = at(2.0 * t)?;
    let mut out = ReturnProbability {
        value: base.escape_probability,
        truncation: t,
        doubled_value: doubled.escape_probability,
        resistance: base,
        warning: None,
    };
    if out.relative_sensitivity() > TRUNCATION_SENSITIVITY {
        out.warning = Some(format!(
            "doubling the truncation {t} moved the return probability by {:.3}%",
            100.0 * out.relative_sensitivity()
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(lower: &str, upper: &str) -> WedgeSpec {
        WedgeSpec::new(lower.parse().unwrap(), upper.parse().unwrap()).unwrap()
    }

    fn set(points: &[(i64, i64)]) -> SiteSet {
        points.iter().map(|&(x, y)| Site::new(x, y)).collect()
    }

    #[test]
    fn single_absorbing_set_gives_one() {
        let spec = w("0/1", "1/1");
        let domain = spec.ball_sector(10.0).unwrap();
        let ring = spec.ring(10.0).unwrap();
        let problem =
            HarmonicProblem::new(&spec, &domain, vec![("out".into(), ring)], OuterBoundary::Closed).unwrap();
        let h = problem.solve_hit_probability("out").unwrap();
        for (_, v) in h.free_values() {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn gambler_ruin_on_the_axis() {
        // The segment {1..N-1} × {0} with absorbing ends, on the bare lattice.
        let n = 12;
        let domain: SiteSet = (1..n).map(|x| Site::new(x, 0)).collect();
        let problem = HarmonicProblem::on_lattice(
            &domain,
            vec![("far".into(), set(&[(n, 0)])), ("zero".into(), set(&[(0, 0)]))],
        );
        // Lattice neighbors off the axis are not vertices, so the closed check applies.
        assert!(matches!(problem, Err(OracleError::OpenBoundary { .. })));
        let slim = w("0/1", &format!("1/{}", n + 1));
        let ok = HarmonicProblem::new(
            &slim,
            &domain,
            vec![("far".into(), set(&[(n, 0)])), ("zero".into(), set(&[(0, 0)]))],
            OuterBoundary::Closed,
        )
        .unwrap();
        let h = ok.solve_hit_probability("far").unwrap();
        for k in 1..n {
            let v = h.get(Site::new(k, 0)).unwrap();
            assert!((v - k as f64 / n as f64).abs() < 1e-10, "k={k} h={v}");
        }
    }

    #[test]
    fn symmetric_wedge_symmetric_solution() {
        let spec = w("-1/1", "1/1");
        let domain = spec.ball_sector(12.0).unwrap();
        let ring = spec.ring(12.0).unwrap();
        let inner = set(&[(3, 1), (3, -1)]);
        let domain = domain.difference(&inner);
        let problem = HarmonicProblem::new(
            &spec,
            &domain,
            vec![("ring".into(), ring), ("inner".into(), inner)],
            OuterBoundary::Closed,
        )
        .unwrap();
        let h = problem.solve_hit_probability("inner").unwrap();
        for (p, v) in h.free_values() {
            assert!((v - h.get(p.mirrored()).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn labels_sum_to_one_and_max_principle() {
        let spec = w("0/1", "2/3");
        let domain = spec.ball_sector(15.0).unwrap();
        let ring = spec.ring(15.0).unwrap();
        let a = set(&[(4, 0), (5, 0), (5, 1)]);
        let domain = domain.difference(&a);
        let problem = HarmonicProblem::new(
            &spec,
            &domain,
            vec![("ring".into(), ring), ("a".into(), a)],
            OuterBoundary::Closed,
        )
        .unwrap();
        let h1 = problem.solve_hit_probability("ring").unwrap();
        let h2 = problem.solve_hit_probability("a").unwrap();
        for (p, v) in h1.free_values() {
            assert!((v + h2.get(p).unwrap() - 1.0).abs() < 1e-10);
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(h1.harmonic_defect() < 1e-10);
        let d = problem.hit_distribution(Site::new(1, 0)).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-10);
        assert!((d.label_mass("ring").unwrap() - h1.get(Site::new(1, 0)).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn spur_source_has_unit_mass() {
        // Vertices {(0,0),(1,0)} of the lattice; (0,0) is the only absorbing site.
        let domain = set(&[(1, 0)]);
        let spec = w("0/1", "1/3");
        let problem = HarmonicProblem::new(
            &spec,
            &domain,
            vec![("z".into(), set(&[(0, 0)]))],
            OuterBoundary::Reflecting,
        )
        .unwrap();
        let d = problem.hit_distribution(Site::new(1, 0)).unwrap();
        assert!((d.get(Site::ORIGIN) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resistance_of_a_pendant_edge() {
        let spec = w("0/1", "1/3");
        let domain = set(&[(0, 0), (1, 0)]);
        let problem = escape_between(&spec, Site::new(1, 0), &set(&[(0, 0)]), &domain).unwrap();
        assert_eq!(problem.degree, 1);
        assert!((problem.escape_probability - 1.0).abs() < 1e-12);
        assert!((problem.resistance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn series_law_on_a_chain() {
        // Slope 1/(N+1) keeps the wedge a path along the axis out to x = N.
        for n in [1, 3, 7, 20] {
            let spec = w("0/1", &format!("1/{}", n + 1));
            let domain: SiteSet = (0..=n).map(|x| Site::new(x, 0)).collect();
            let r = escape_between(&spec, Site::ORIGIN, &set(&[(n, 0)]), &domain).unwrap();
            assert!((r.resistance - n as f64).abs() < 1e-9, "n={n} R={}", r.resistance);
            assert!((r.energy_resistance - n as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn disconnected_free_component_is_reported() {
        let spec = WedgeSpec::half_plane();
        let domain = set(&[(5, 5), (0, 1)]);
        let err = HarmonicProblem::new(
            &spec,
            &domain,
            vec![("z".into(), set(&[(0, 0)]))],
            OuterBoundary::Reflecting,
        )
        .unwrap_err();
        assert_eq!(err, OracleError::Disconnected(Site::new(5, 5)));
    }

    #[test]
    fn return_probability_is_one_when_neighbors_are_in_the_closure() {
        let spec = WedgeSpec::half_plane();
        let u = Site::new(6, 2);
        let a = set(&[(8, 2), (4, 2), (6, 4), (6, 0)]);
        let closure = spec.closure(&a);
        assert!(!closure.contains(&u));
        let r = return_probability(&spec, u, &a, 8.0).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert!(r.warning.is_none());
    }

    #[test]
    fn return_probability_matches_resistance_identity() {
        let spec = w("0/1", "1/1");
        let a = set(&[(3, 0), (4, 0), (4, 1)]);
        let r = return_probability(&spec, Site::new(9, 2), &a, 0.0).unwrap();
        assert!(r.value > 0.0 && r.value < 1.0);
        let via_energy = 1.0 / (r.resistance.degree as f64 * r.resistance.energy_resistance);
        assert!((r.value - via_energy).abs() < 1e-9);
    }
}
