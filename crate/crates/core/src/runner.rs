//! Executes a validated run into its own directory, and replays it.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{parse_config, BarrierKind, ConfigError, Experiment, OracleMode, RunRequest};
use crate::dla::{self, Aggregate, DialStatus, GROW_STREAM};
use crate::estimates::{self, Backend, McSettings, SetGenerator};
use crate::geometry::{SiteSet, WedgeSpec};
use crate::oracle::{self, HarmonicProblem, OuterBoundary};
use crate::rng::{experiment_id, Streams};
use crate::store::{
    self, persist_aggregate, persist_hits, persist_report, write_file, Check, ExperimentReport, FileDigest, FitSummary,
    ReportCell, RunManifest, StoreError, ARTIFACT_VERSION, CONFIG_FILE, MANIFEST_FILE,
};

/// Stream used to draw the random sets of the dominance check.
pub const DOMINANCE_STREAM: &str = "dominance-sets";
/// Radius up to which the manifest reports degree-1 sites.
const DEGREE_SCAN_RADIUS: f64 = 64.0;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// Single writer for one run directory.
struct Outputs<'a> {
    dir: &'a Path,
    digests: Vec<FileDigest>,
}

impl Outputs<'_> {
    fn put(&mut self, name: &str, text: &str) -> Result<(), StoreError> {
        self.digests.push(write_file(self.dir, name, text.as_bytes())?);
        Ok(())
    }

    fn extend(&mut self, digests: Vec<FileDigest>) {
        self.digests.extend(digests);
    }
}

/// Stream names each command draws from, with their experiment ids.
pub fn stream_map(request: &RunRequest) -> BTreeMap<String, String> {
    let names: Vec<String> = match &request.experiment {
        Experiment::Grow { .. } => vec![GROW_STREAM.into()],
        Experiment::Escape { backend: Backend::MonteCarlo, .. } => vec!["lattice-escape".into()],
        Experiment::Beurling { backend: Backend::MonteCarlo, ls, .. } => ls.iter().map(|l| format!("beurling/{l}")).collect(),
        Experiment::Dominance { .. } => vec![DOMINANCE_STREAM.into()],
        Experiment::Ring { backend: Backend::MonteCarlo, .. } => vec!["ring-escape".into()],
        Experiment::FarExit { ts, .. } => {
            let mut v: Vec<String> = ts.iter().map(|t| format!("far-exit/{t}")).collect();
            v.push("small-set-hit".into());
            v
        }
        _ => Vec::new(),
    };
    names.into_iter().map(|n| (format!("{:016x}", experiment_id(&n)), n)).map(|(id, n)| (n, id)).collect()
}

fn degree_one_warning(spec: &WedgeSpec) -> Option<String> {
    let sites = spec.ball_sector(DEGREE_SCAN_RADIUS).ok()?;
    let thin: Vec<String> =
        sites.iter().filter(|p| spec.degree(**p).map_or(false, |d| d == 1)).take(5).map(|p| p.to_string()).collect();
    (!thin.is_empty()).then(|| format!("degree-1 sites present (forced move back), e.g. {}", thin.join(" ")))
}

fn cell(label: &str, params: &[(&str, String)], estimate: f64, stderr: f64, trials: u64) -> ReportCell {
    ReportCell {
        label: label.to_string(),
        params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        estimate,
        stderr,
        trials,
        cap_hits: 0,
        reference: None,
    }
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

fn unit_check(report: &mut ExperimentReport) {
    let bad = report.cells.iter().filter(|c| !unit(c.estimate)).count();
    report.check("probabilities_in_unit_interval", bad == 0, format!("{bad} cells outside [0, 1]"));
}

fn csv_table(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

/// Runs `request` into `dir`, writing the manifest last. Experiment
/// failures are recorded in the manifest; only I/O problems are errors.
pub fn run(request: &RunRequest, dir: &Path) -> Result<RunManifest, RunError> {
    let started = now_ms();
    let mut out = Outputs { dir, digests: Vec::new() };
    let config_text = request.to_config_text();
    let input = write_file(dir, CONFIG_FILE, config_text.as_bytes())?;
    let mut warnings = request.warnings.clone();
    warnings.extend(degree_one_warning(&request.spec));
    let mut report = ExperimentReport::new(request.command.name());
    let error = execute(request, &mut report, &mut out)?.err();
    out.extend(persist_report(dir, &report)?);
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        command: request.command.name().to_string(),
        theta1: request.lower.to_string(),
        theta2: request.upper.to_string(),
        phi: request.spec.phi(),
        params: request.params(),
        seed: request.seed,
        streams: stream_map(request),
        workers: request.workers,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        inputs: vec![input],
        outputs: out.digests,
        checks_passed: error.is_none() && report.all_passed(),
        warnings,
        error,
    };
    manifest.write(dir)?;
    Ok(manifest)
}

/// Fills `report` and writes the command's tables. The inner result carries
/// an experiment failure message.
fn execute(request: &RunRequest, report: &mut ExperimentReport, out: &mut Outputs) -> Result<Result<(), String>, StoreError> {
    let spec = request.spec;
    let mc = |trials: u64| McSettings::new(trials, request.seed).workers(request.workers);
    match &request.experiment {
        Experiment::Grow { particles, sampler, dials, exponent } => {
            grow(request, *particles, sampler, dials.as_deref(), *exponent, report, out)
        }
        Experiment::Escape { r, l, side, inner, backend, trials } => {
            let res = match estimates::lattice_escape_experiment(&spec, *r, *l, *side, *inner, *backend, &mc(*trials)) {
                Ok(v) => v,
                Err(e) => return Ok(Err(e.to_string())),
            };
            for s in &res.per_start {
                report.cells.push(cell("start", &[("x", s.site.x.to_string()), ("y", s.site.y.to_string())], s.estimate, s.stderr, s.trials));
            }
            let mut max = cell("max", &[("r", r.to_string()), ("l", l.to_string())], res.estimate, res.stderr, res.per_start.first().map_or(0, |s| s.trials));
            max.cap_hits = res.cap_hits;
            max.reference = Some(res.continuum);
            report.cells.push(max);
            unit_check(report);
            let k = l / r;
            if k >= 2.0 {
                let b = estimates::escape_upper_bound(spec.phi(), k);
                report.check("continuum_below_bound", b.is_ok(), format!("{b:?}"));
            }
            report.notes.push(format!(
                "inner ring {:?}; continuum value {:.6} at K = {k}; relative error {:.4}",
                inner,
                res.continuum,
                res.relative_error()
            ));
            Ok(Ok(()))
        }
        Experiment::Beurling { r, ls, side, set, backend, trials } => {
            let side = *side;
            let ray = move |s: &WedgeSpec, r: f64, l: f64| estimates::worst_case_set(s, side, r, l);
            let sector = |s: &WedgeSpec, r: f64, l: f64| estimates::full_sector_set(s, r, l);
            let generator: SetGenerator = match set {
                BarrierKind::Ray => &ray,
                BarrierKind::Sector => &sector,
            };
            let res = match estimates::beurling_experiment(&spec, *r, ls, generator, *backend, &mc(*trials)) {
                Ok(v) => v,
                Err(e) => return Ok(Err(e.to_string())),
            };
            for row in &res.rows {
                report.cells.push(cell("far-hit", &[("r", r.to_string()), ("l", row.l.to_string())], row.probability, row.stderr, row.trials));
            }
            if let Some(f) = &res.fit {
                report.fits.push(FitSummary {
                    label: "exponent".into(),
                    x: "ln(L/r)".into(),
                    y: "ln P".into(),
                    points: f.points.clone(),
                    slope: f.slope,
                    intercept: f.intercept,
                    r_squared: f.r_squared,
                    slope_stderr: None,
                    slope_half_width: f.half_width.is_finite().then_some(f.half_width),
                    theory_slope: Some(f.theory_slope),
                });
            }
            unit_check(report);
            report.notes.push("far source uniform on the ring at 1.5 L; walk reflected at 2 L".into());
            Ok(Ok(()))
        }
        Experiment::Dominance { r, l, sets } => {
            let ctx = match estimates::DominanceContext::new(&spec, *r, *l) {
                Ok(c) => c,
                Err(e) => return Ok(Err(e.to_string())),
            };
            let streams = Streams::named(request.seed, DOMINANCE_STREAM);
            let mut violations = 0;
            let mut rows = Vec::new();
            for i in 0..*sets {
                let mut rng = streams.trial(i);
                let res = estimates::random_barrier(&spec, *r, *l, &mut rng).and_then(|a| ctx.check(&a, true).map(|d| (a, d)));
                let (a, d) = match res {
                    Ok(v) => v,
                    Err(e) => return Ok(Err(format!("set {i}: {e}"))),
                };
                if !d.dominated {
                    violations += 1;
                }
                let mut c = cell("set", &[("index", i.to_string()), ("sites", a.len().to_string())], d.lhs_max, 0.0, 0);
                c.reference = Some(d.upper_max.max(d.lower_max));
                report.cells.push(c);
                rows.push(format!("{i},{},{:?},{:?},{:?},{},{}", a.len(), d.lhs_max, d.upper_max, d.lower_max, d.dominated, d.pointwise_violations));
            }
            out.put("sets.csv", &csv_table("index,sites,lhs_max,upper_max,lower_max,dominated,pointwise_violations", rows))?;
            unit_check(report);
            report.check("no_dominance_violation", violations == 0, format!("{violations} of {sets} sets violate the max bound"));
            Ok(Ok(()))
        }
        Experiment::Ring { r, c, eps, backend, trials } => {
            let mut caps = 0;
            for &e in eps {
                let res = match estimates::ring_escape_experiment(&spec, *r, *c, e, *backend, &mc(*trials)) {
                    Ok(v) => v,
                    Err(err) => return Ok(Err(err.to_string())),
                };
                let mut cl = cell("inner-first", &[("r", r.to_string()), ("c", c.to_string()), ("eps", e.to_string())], res.inner_first, res.stderr, res.trials);
                cl.cap_hits = res.cap_hits;
                cl.reference = Some(res.limit);
                caps += res.cap_hits;
                report.cells.push(cl);
            }
            unit_check(report);
            report.check("no_cap_hits", caps == 0, format!("{caps} walks hit the step cap"));
            if eps.len() > 1 {
                report.notes.push("cells share random streams (common random numbers across ε)".into());
            }
            Ok(Ok(()))
        }
        Experiment::FarExit { r, ts, eps, starts, trials, hit_r, hit_t } => {
            let res = match estimates::far_exit_time_experiment(&spec, *r, ts, *eps, *starts, &mc(*trials)) {
                Ok(v) => v,
                Err(e) => return Ok(Err(e.to_string())),
            };
            let mut start_rows = Vec::new();
            for row in &res.rows {
                let mut c = cell("far-exit", &[("t", row.t.to_string()), ("exit_radius", format!("{:?}", row.exit_radius))], row.estimate, row.stderr, *trials);
                c.cap_hits = row.budget_exhausted;
                report.cells.push(c);
                for s in &row.per_start {
                    start_rows.push(format!("{},{},{},{:?},{:?},{}", row.t, s.site.x, s.site.y, s.estimate, s.stderr, s.trials));
                }
            }
            out.put("starts.csv", &csv_table("t,x,y,estimate,stderr,trials", start_rows))?;
            if let Some(t) = &res.trend {
                report.fits.push(FitSummary::from_linear("far-exit trend", "ln T", "ln P", t, None));
            }
            report.notes.push(format!("far-exit estimates nonincreasing in T: {}", res.decreasing));
            let a = match spec.ball_sector(2.0) {
                Ok(a) => a,
                Err(e) => return Ok(Err(e.to_string())),
            };
            let truncation = 4.0 * hit_r;
            match estimates::small_set_hit_experiment(&spec, &a, *hit_r, *hit_t, *starts, &mc(*trials), Some(truncation)) {
                Ok(h) => {
                    let mut c = cell("small-set-hit", &[("r", hit_r.to_string()), ("t", hit_t.to_string()), ("set", "W^2".into())], h.estimate, h.stderr, *trials);
                    c.reference = h.exact;
                    report.cells.push(c);
                    let exact = h.exact.unwrap_or(f64::NAN);
                    let gap = (h.estimate - exact).abs();
                    report.check(
                        "small_set_mc_matches_exact",
                        gap <= 5.0 * h.stderr + 1e-3,
                        format!("MC {:.6} ± {:.6} vs exact {exact:.6} at {} (walk reflected at {truncation})", h.estimate, h.stderr, h.argmax),
                    );
                }
                Err(e) => return Ok(Err(e.to_string())),
            }
            unit_check(report);
            Ok(Ok(()))
        }
        Experiment::Converge { seed_radius, rs } => {
            let a = match spec.ball_sector(*seed_radius) {
                Ok(a) => a,
                Err(e) => return Ok(Err(e.to_string())),
            };
            let rows = match estimates::convergence_diagnostic(&spec, &a, rs) {
                Ok(v) => v,
                Err(e) => return Ok(Err(e.to_string())),
            };
            for row in &rows {
                report.cells.push(cell("max-tv", &[("r", row.r.to_string()), ("sources", row.sources.to_string())], row.max_tv, 0.0, 0));
            }
            unit_check(report);
            report.check(
                "max_tv_strictly_decreasing",
                estimates::strictly_decreasing(&rows),
                rows.iter().map(|r| format!("{:.3e}", r.max_tv)).collect::<Vec<_>>().join(" > "),
            );
            report.notes.push("hitting laws solved on the wedge reflected at 4 R".into());
            Ok(Ok(()))
        }
        Experiment::Oracle { radius, source, targets, mode } => {
            oracle_run(&spec, *radius, *source, targets, *mode, report, out).map(|r| r.map_err(|e| e.to_string()))
        }
    }
}

fn oracle_run(
    spec: &WedgeSpec,
    radius: f64,
    source: crate::geometry::Site,
    targets: &SiteSet,
    mode: OracleMode,
    report: &mut ExperimentReport,
    out: &mut Outputs,
) -> Result<Result<(), oracle::OracleError>, StoreError> {
    let domain = match spec.ball_sector(radius) {
        Ok(d) => d.difference(targets),
        Err(e) => return Ok(Err(e.into())),
    };
    match mode {
        OracleMode::Hit => {
            let dist = match HarmonicProblem::new(spec, &domain, vec![("targets".into(), targets.clone())], OuterBoundary::Reflecting)
                .and_then(|p| p.hit_distribution(source))
            {
                Ok(d) => d,
                Err(e) => return Ok(Err(e)),
            };
            for t in targets.iter() {
                report.cells.push(cell("hit", &[("x", t.x.to_string()), ("y", t.y.to_string())], dist.get(*t), 0.0, 0));
            }
            unit_check(report);
            let total = dist.total();
            report.check("mass_one", (total - 1.0).abs() <= 1e-9, format!("total mass {total:?}"));
            report.notes.push(format!("walk reflected at radius {radius}; {} solver iterations", dist.report.iterations));
            out.extend(persist_hits(out.dir, &dist)?);
        }
        OracleMode::Resistance => {
            let res = match oracle::effective_resistance(spec, source, targets, radius) {
                Ok(r) => r,
                Err(e) => return Ok(Err(e)),
            };
            let mut c = cell("resistance", &[("radius", radius.to_string())], res.resistance, 0.0, 0);
            c.reference = Some(res.energy_resistance);
            report.cells.push(c);
            let rel = (res.resistance - res.energy_resistance).abs() / res.resistance;
            report.check("resistance_routes_agree", rel <= 1e-6, format!("escape route {:?}, energy route {:?}", res.resistance, res.energy_resistance));
            report.notes.push(format!("walk reflected at radius {radius}"));
        }
    }
    Ok(Ok(()))
}

#[allow(clippy::too_many_arguments)]
fn grow(
    request: &RunRequest,
    particles: u64,
    sampler: &dla::SamplerParams,
    dials: Option<&[f64]>,
    exponent: Option<f64>,
    report: &mut ExperimentReport,
    out: &mut Outputs,
) -> Result<Result<(), String>, StoreError> {
    let spec = request.spec;
    let a = exponent.or_else(|| dla::stabilization_exponent(spec.phi()).ok().map(|e| e.a_strong));
    let dials = dials.map_or_else(|| dla::default_dials(a.unwrap_or(2.0), particles), <[f64]>::to_vec);
    let (agg, ledger, failure) = match dla::grow(spec, particles, *sampler, request.seed, dials) {
        Ok(run) => (run.aggregate, run.ledger, None),
        Err(f) => (f.partial, f.ledger, Some(f.source.to_string())),
    };
    out.extend(persist_aggregate(out.dir, &agg)?);
    if let Some(msg) = failure {
        report.notes.push("partial trajectory persisted".into());
        return Ok(Err(msg));
    }
    let recomputed = ledger.recompute(&agg);
    report.check("ledger_matches_recomputation", recomputed == ledger.t_last, format!("{:?}", ledger.t_last));
    report.check(
        "t_last_monotone",
        ledger.t_last.windows(2).all(|w| w[0] <= w[1]),
        format!("{:?}", ledger.t_last),
    );
    report.check("diameter_monotone", agg.diameters().windows(2).all(|w| w[0] <= w[1]), "");
    let reloaded = Aggregate::from_order(spec, agg.order(), agg.records().to_vec());
    report.check("aggregate_valid", reloaded.as_ref().is_ok_and(|r| *r == agg), reloaded.err().map_or(String::new(), |e| e.to_string()));
    if let Some(a) = a {
        let table = dla::stabilization_report(&ledger, a, particles);
        for row in &table.rows {
            report.cells.push(cell(
                "dial",
                &[("r", row.r.to_string()), ("threshold", row.threshold.to_string()), ("status", row.status.to_string())],
                row.t_last as f64,
                0.0,
                particles,
            ));
        }
        let labels_ok = table.rows.iter().all(|r| (r.r.powf(a) > particles as f64) == (r.status == DialStatus::Inconclusive));
        report.check("dial_labels_consistent", labels_ok, format!("exponent {a}"));
        report.notes.push(format!(
            "stabilization at exponent {a}: satisfied fraction {}",
            table.satisfied_fraction.map_or("n/a (no conclusive dial)".into(), |f| format!("{f}"))
        ));
        out.put("stabilization.csv", &table.to_csv())?;
    } else {
        report.notes.push(format!("no stabilization exponent for φ = {} ≥ π/4", spec.phi()));
    }
    if let Ok(rate) = dla::growth_rate_estimate(agg.diameters(), None) {
        let mut c = cell("growth-rate", &[("window", format!("{}..{}", rate.window.0, rate.window.1))], rate.beta_hat, rate.stderr, 0);
        c.reference = Some(0.5);
        report.cells.push(c);
    }
    let rho = agg.rho();
    if rho >= 8.0 {
        if let Ok(arms) = agg.count_arms(rho / 4.0, rho / 2.0) {
            report.cells.push(cell("arms-proxy", &[("r_inner", format!("{:?}", rho / 4.0)), ("r_outer", format!("{:?}", rho / 2.0))], arms as f64, 0.0, 0));
            report.notes.push("arms-proxy counts annulus-crossing components, a finite-scale proxy for ends".into());
        }
    }
    report.notes.push(format!("{particles} particles, ρ = {rho:.3}, φ/π = {:.6}", spec.phi() / PI));
    Ok(Ok(()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FileStatus {
    Match,
    Mismatch,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileComparison {
    pub name: String,
    pub expected: String,
    pub actual: Option<String>,
    pub status: FileStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub files: Vec<FileComparison>,
    /// Outputs of the replay that the original run did not produce.
    pub extra: Vec<String>,
    pub manifest: RunManifest,
    pub certified: bool,
}

/// Re-executes the run described by `manifest` into `dir` and compares every
/// output digest. Refuses to run for another artifact version.
pub fn replay(manifest: &RunManifest, dir: &Path, workers: Option<usize>) -> Result<ReplayReport, RunError> {
    manifest.check_version()?;
    let mut text = String::new();
    for (k, v) in &manifest.params {
        text.push_str(&format!("{k} = {v}\n"));
    }
    text.push_str(&format!("workers = {}\n", workers.unwrap_or(manifest.workers)));
    let mut request = parse_config(&text)?;
    // The recorded seed is part of the run description.
    request.seed = manifest.seed;
    let fresh = run(&request, dir)?;
    let files: Vec<FileComparison> = manifest
        .outputs
        .iter()
        .map(|d| {
            let actual = fresh.output(&d.name).map(|f| f.sha256.clone());
            let status = match &actual {
                None => FileStatus::Missing,
                Some(a) if *a == d.sha256 => FileStatus::Match,
                Some(_) => FileStatus::Mismatch,
            };
            FileComparison { name: d.name.clone(), expected: d.sha256.clone(), actual, status }
        })
        .collect();
    let extra: Vec<String> =
        fresh.outputs.iter().filter(|d| manifest.output(&d.name).is_none()).map(|d| d.name.clone()).collect();
    let certified = extra.is_empty() && !files.is_empty() && files.iter().all(|f| f.status == FileStatus::Match);
    Ok(ReplayReport { files, extra, manifest: fresh, certified })
}

/// Reads the manifest at `path` (a run directory or a manifest file).
pub fn read_manifest(path: &Path) -> Result<RunManifest, RunError> {
    Ok(RunManifest::read(path)?)
}

/// Checks the files of a finished run directory against its manifest.
pub fn verify_directory(dir: &Path) -> Result<Vec<Check>, RunError> {
    let manifest = RunManifest::read(&dir.join(MANIFEST_FILE))?;
    let mut checks = Vec::new();
    for d in manifest.inputs.iter().chain(&manifest.outputs) {
        let listed = manifest.inputs.iter().chain(&manifest.outputs).cloned().collect::<Vec<_>>();
        let r = store::read_verified(dir, &d.name, &listed);
        checks.push(Check::new(&d.name, r.is_ok(), r.err().map_or(String::new(), |e| e.to_string())));
    }
    Ok(checks)
}
