//! Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.

mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use wedge_dla::config::parse_config;
use wedge_dla::dla::stabilization_exponent;
use wedge_dla::estimates::{continuous_escape_probability, resistance_log_law, return_probability_scaling};
use wedge_dla::geometry::{Site, SiteSet, WedgeSpec};
use wedge_dla::grid::ClearanceIndex;
use wedge_dla::rng::Streams;
use wedge_dla::runner::{replay, run};
use wedge_dla::stats::{empirical, linear_fit};
use wedge_dla::store::{load_report, ExperimentReport, RunManifest};
use wedge_dla::walk::{par_trials, run_until, Absorber, StopSpec, WalkDomain};

const IDENTITY_TOL: f64 = 1e-12;
const HALF_PLANE_VALUE: f64 = 0.59033;
const HALF_PLANE_TOL: f64 = 1e-5;
const ORACLE_MC_TRIALS: u64 = 100_000;
const ORACLE_MC_TV: f64 = 0.02;
const ESCAPE_REFERENCE: f64 = 0.0795;
const ESCAPE_REL_TOL: f64 = 0.15;
const RING_TRIALS: u64 = 100_000;
const RING_TOL: f64 = 0.02;
const RESISTANCE_R2: f64 = 0.99;
const RETURN_BAND: f64 = 3.0;
const DOMINANCE_SETS: u64 = 100;
const BEURLING_MARGIN: f64 = 0.3;
const REVERSIBILITY_LEN: usize = 8;
const REVERSIBILITY_RADIUS: f64 = 6.0;
const GROW_PARTICLES: u64 = 20_000;
const STABILIZATION_A: f64 = 5.0;
const PI_8: &str = "0.39269908169872414";

struct Tally {
    passed: usize,
    total: usize,
}

/// Runs one criterion; it passes when `f` reports success within `limit`.
fn criterion(tally: &mut Tally, id: usize, title: &str, limit: Duration, f: impl FnOnce() -> Result<(bool, String), String>) {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let (ok, detail) = match outcome {
        Ok((ok, d)) => (ok, d),
        Err(e) => (false, format!("error: {e}")),
    };
    let in_time = elapsed <= limit;
    let pass = ok && in_time;
    tally.total += 1;
    if pass {
        tally.passed += 1;
    }
    println!(
        "{} [{id:>2}] {title}: {detail} | {:.1} s (limit {} s{})",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", exceeded" }
    );
}

fn mins(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn run_config(root: &Path, name: &str, text: &str) -> Result<(RunManifest, ExperimentReport), String> {
    let req = parse_config(text).map_err(|e| e.to_string())?;
    let dir = root.join(name);
    let m = run(&req, &dir).map_err(|e| e.to_string())?;
    if let Some(e) = &m.error {
        return Err(e.clone());
    }
    let report = load_report(&dir, &m.outputs).map_err(|e| e.to_string())?;
    Ok((m, report))
}

fn first_failed(report: &ExperimentReport) -> Option<String> {
    report.checks.iter().find(|c| !c.passed).map(|c| format!("{} ({})", c.name, c.detail))
}

/// Double-angle form of the wedge escape probability.
fn reference_escape(phi: f64, k: f64) -> f64 {
    4.0 / PI * k.powf(-PI / (2.0 * phi)).atan()
}

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let root = root.path();
    let mut tally = Tally { passed: 0, total: 0 };
    let mut replayable: Vec<(String, RunManifest)> = Vec::new();
    let quarter = "theta1 = 0/1\ntheta2 = 1/1\n";
    let eighth = format!("theta1 = 0/1\ntheta2 = {PI_8}\n");

    criterion(&mut tally, 1, "closed-form escape identity", Duration::from_secs(1), || {
        let mut worst: f64 = 0.0;
        for i in 0..10 {
            let phi = 0.1 + (PI - 0.1) * i as f64 / 9.0;
            for j in 0..10 {
                let k = 1.1 * (1000.0f64 / 1.1).powf(j as f64 / 9.0);
                let v = continuous_escape_probability(phi, k).map_err(|e| e.to_string())?;
                worst = worst.max((v - reference_escape(phi, k)).abs());
            }
        }
        let v = continuous_escape_probability(PI / 2.0, 2.0).map_err(|e| e.to_string())?;
        Ok((
            worst <= IDENTITY_TOL && (v - HALF_PLANE_VALUE).abs() <= HALF_PLANE_TOL,
            format!("max deviation {worst:.2e} over 100 points; P(π/2, 2) = {v:.6}"),
        ))
    });

    let mc_law = |workers: usize| -> Result<Vec<Site>, String> {
        let spec = common::wedge("0/1", "1/1");
        let targets: SiteSet = [(0, 0), (1, 0), (2, 0), (2, 1), (3, 1)].into_iter().map(|(x, y)| Site::new(x, y)).collect();
        let index = ClearanceIndex::from_set(&targets);
        let domain = WalkDomain::truncated(spec, 30.0);
        let stop = StopSpec::new().absorb("A", Absorber::Sites(&index));
        let sites = par_trials(&Streams::named(2, "acceptance/oracle-mc"), ORACLE_MC_TRIALS, workers, |_, rng| {
            run_until(&domain, Site::new(20, 5), &stop, rng).map(|o| o.site)
        })
        .map_err(|e| e.to_string())?;
        sites.into_iter().collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())
    };
    let mut mc_sites_1 = Vec::new();
    criterion(&mut tally, 2, "oracle and Monte Carlo hitting laws", mins(2), || {
        let (m, _) = run_config(root, "oracle", &format!("command = oracle\n{quarter}radius = 30\nsource = 20,5\n"))?;
        let digests = &m.outputs;
        let exact = wedge_dla::store::load_hits(&root.join("oracle"), digests).map_err(|e| e.to_string())?;
        replayable.push(("oracle".into(), m));
        mc_sites_1 = mc_law(1)?;
        let tv = common::tv(&empirical(mc_sites_1.iter().copied()), &exact.probs);
        Ok((tv <= ORACLE_MC_TV, format!("TV = {tv:.4} on W^30 of the quarter wedge, 5-site set, {ORACLE_MC_TRIALS} walks")))
    });

    criterion(&mut tally, 3, "lattice escape versus continuum", mins(10), || {
        let continuum = reference_escape(PI / 4.0, 4.0);
        let mut errors = Vec::new();
        let mut at_64 = 0.0;
        for r in [16.0, 32.0, 64.0] {
            let (m, rep) = run_config(root, &format!("escape-{r}"), &format!("command = escape\n{quarter}r = {r}\nl = {}\n", 4.0 * r))?;
            let max = rep.cells.iter().find(|c| c.label == "max").ok_or("no max cell")?;
            errors.push((max.estimate - continuum).abs() / continuum);
            if r == 64.0 {
                at_64 = max.estimate;
                replayable.push(("escape r=64".into(), m));
            }
        }
        let within = (at_64 - ESCAPE_REFERENCE).abs() / ESCAPE_REFERENCE <= ESCAPE_REL_TOL;
        // The maximum over ring sites oscillates with r, so the trend is the
        // log-log slope of the relative error.
        let points: Vec<(f64, f64)> = [16.0f64, 32.0, 64.0].iter().zip(&errors).map(|(r, e)| (r.ln(), e.ln())).collect();
        let trend = linear_fit(&points).ok_or("degenerate fit")?.slope;
        Ok((
            within && trend < 0.0,
            format!(
                "r=64, L=256: {at_64:.5} vs {ESCAPE_REFERENCE} (continuum {continuum:.5}); relative error at r=16,32,64: {}, log-log slope {trend:.2}",
                errors.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>().join(", ")
            ),
        ))
    });

    criterion(&mut tally, 4, "ring escape law", mins(5), || {
        let (_, rep) = run_config(
            root,
            "ring",
            &format!("command = ring\n{quarter}r = 128\nc = 4\neps = 1,2\nbackend = mc\ntrials = {RING_TRIALS}\n"),
        )?;
        let mut ok = first_failed(&rep).is_none();
        let mut parts = Vec::new();
        for (c, target) in rep.cells.iter().zip([0.5, 2.0 / 3.0]) {
            ok &= (c.estimate - target).abs() <= RING_TOL;
            parts.push(format!("{}: {:.4} ± {:.4} (target {target:.3})", c.params[2].1, c.estimate, c.stderr));
        }
        Ok((ok && parts.len() == 2, format!("ε = {}", parts.join(", ε = "))))
    });

    criterion(&mut tally, 5, "resistance logarithmic law", mins(5), || {
        let spec = WedgeSpec::from_angles(0.0, PI / 8.0, 1e-9).map_err(|e| e.to_string())?;
        let ls = [16.0, 32.0, 64.0, 128.0];
        let law = resistance_log_law(&spec, &ls).map_err(|e| e.to_string())?;
        let a: SiteSet = [Site::ORIGIN].into_iter().collect();
        let rows = return_probability_scaling(&spec, &a, &ls).map_err(|e| e.to_string())?;
        let hi = rows.iter().map(|r| r.scaled).fold(f64::MIN, f64::max);
        let lo = rows.iter().map(|r| r.scaled).fold(f64::MAX, f64::min);
        Ok((
            law.fit.r_squared >= RESISTANCE_R2 && lo > 0.0 && hi / lo <= RETURN_BAND,
            format!(
                "φ = π/8: R_eff ≈ {:.4}·ln L + {:.4}, R² = {:.5}; return·ln L in [{lo:.4}, {hi:.4}], ratio {:.3}",
                law.fit.slope,
                law.fit.intercept,
                law.fit.r_squared,
                hi / lo
            ),
        ))
    });

    criterion(&mut tally, 6, "push-to-boundary dominance", mins(10), || {
        let mut parts = Vec::new();
        let mut ok = true;
        for (name, wedge) in [("π/4", quarter.to_string()), ("π/8", eighth.clone())] {
            let (m, rep) = run_config(
                root,
                &format!("dominance-{}", parts.len()),
                &format!("command = dominance\n{wedge}r = 6\nl = 24\nsets = {DOMINANCE_SETS}\n"),
            )?;
            ok &= first_failed(&rep).is_none() && rep.cells.len() as u64 == DOMINANCE_SETS;
            let detail = rep.checks.iter().find(|c| c.name == "no_dominance_violation").map_or("no check".into(), |c| c.detail.clone());
            parts.push(format!("{name}: {detail}"));
            replayable.push((format!("dominance {name}"), m));
        }
        Ok((ok, parts.join("; ")))
    });

    criterion(&mut tally, 7, "Beurling exponent", mins(15), || {
        let mut parts = Vec::new();
        let mut ok = true;
        for (name, wedge) in [("π/8", eighth.clone()), ("π/4", quarter.to_string())] {
            let (m, rep) = run_config(
                root,
                &format!("beurling-{}", parts.len()),
                &format!("command = beurling\n{wedge}r = 16\nls = 64,128,256\n"),
            )?;
            let fit = rep.fits.first().ok_or("no fit")?;
            let bound = -(PI / (2.0 * m.phi) - BEURLING_MARGIN);
            ok &= fit.slope <= bound;
            parts.push(format!("{name}: slope {:.3} (bound {bound:.3})", fit.slope));
            replayable.push((format!("beurling {name}"), m));
        }
        Ok((ok, parts.join("; ")))
    });

    criterion(&mut tally, 8, "harmonic measure convergence", mins(10), || {
        let (m, rep) = run_config(root, "converge", &format!("command = converge\n{quarter}seed_radius = 4\nrs = 16,32,64\n"))?;
        let tvs: Vec<String> = rep.cells.iter().map(|c| format!("{:.3e}", c.estimate)).collect();
        let ok = first_failed(&rep).is_none() && rep.cells.windows(2).all(|w| w[1].estimate < w[0].estimate);
        replayable.push(("converge".into(), m));
        Ok((ok, format!("max TV at R = 16, 32, 64: {}", tvs.join(" > "))))
    });

    criterion(&mut tally, 9, "reversibility in exact arithmetic", mins(1), || {
        let mut paths = 0;
        let mut violations = 0;
        for (lo, hi) in [("0/1", "1/1"), ("0/1", "2/5"), ("-1/0", "1/0"), ("-1/3", "3/1")] {
            let t = common::reversibility(&common::wedge(lo, hi), REVERSIBILITY_RADIUS, REVERSIBILITY_LEN);
            paths += t.paths;
            violations += t.violations;
        }
        Ok((violations == 0 && paths > 0, format!("{paths} paths of length ≤ {REVERSIBILITY_LEN} in W^6 over 4 wedges, {violations} violations")))
    });

    criterion(&mut tally, 10, "stabilization evidence", mins(30), || {
        let e = stabilization_exponent(PI / 8.0).map_err(|e| e.to_string())?;
        let exact = e.a_min == STABILIZATION_A;
        let (_, rep) = run_config(
            root,
            "grow",
            &format!("command = grow\n{eighth}particles = {GROW_PARTICLES}\nseed = 1\nexponent = {STABILIZATION_A}\ndials = 2,3,4,5,6,7,8\n"),
        )?;
        let dials: Vec<_> = rep.cells.iter().filter(|c| c.label == "dial").collect();
        let mut labels_ok = dials.len() == 7 && first_failed(&rep).is_none();
        let (mut satisfied, mut failed, mut inconclusive) = (0, 0, 0);
        for d in &dials {
            let r: f64 = d.params[0].1.parse().map_err(|_| "bad radius")?;
            let status = d.params[2].1.as_str();
            let beyond = r.powf(STABILIZATION_A) > GROW_PARTICLES as f64;
            labels_ok &= beyond == (status == "inconclusive");
            match status {
                "satisfied" => satisfied += 1,
                "failed" => failed += 1,
                _ => inconclusive += 1,
            }
        }
        println!(
            "      dial table (r: T_last / ⌈r^5⌉ status): {}",
            dials
                .iter()
                .map(|d| format!("{}: {} / {} {}", d.params[0].1, d.estimate, d.params[1].1, d.params[2].1))
                .collect::<Vec<_>>()
                .join(", ")
        );
        Ok((
            exact && labels_ok,
            format!(
                "a_min(π/8) = {}; {GROW_PARTICLES} particles: {satisfied} satisfied, {failed} failed, {inconclusive} inconclusive (logged, not asserted)",
                e.a_min
            ),
        ))
    });

    criterion(&mut tally, 11, "determinism across 1, 4 and 16 workers", mins(20), || {
        let (g, _) = run_config(root, "grow-small", &format!("command = grow\n{eighth}particles = 2000\nseed = 1\nexponent = 5\n"))?;
        replayable.push(("grow 2000".into(), g));
        let (r, _) = run_config(root, "ring-small", &format!("command = ring\n{quarter}r = 128\neps = 1,2\ntrials = 20000\n"))?;
        replayable.push(("ring 2e4".into(), r));
        let mut bad = Vec::new();
        for (name, m) in &replayable {
            for workers in [4, 16] {
                let dir = root.join(format!("replay-{}-{workers}", name.replace([' ', '/', '='], "_")));
                let rep = replay(m, &dir, Some(workers)).map_err(|e| e.to_string())?;
                if !rep.certified {
                    bad.push(format!("{name} at {workers} workers"));
                }
            }
        }
        let mut mc_same = true;
        for workers in [4, 16] {
            mc_same &= mc_law(workers)? == mc_sites_1;
        }
        if !mc_same {
            bad.push("oracle-MC walks".into());
        }
        Ok((
            bad.is_empty(),
            format!("{} runs replayed byte-identically plus the criterion 2 walks; mismatches: {}", replayable.len(), if bad.is_empty() { "none".into() } else { bad.join(", ") }),
        ))
    });

    println!("acceptance: {}/{} criteria passed", tally.passed, tally.total);
    if tally.passed != tally.total {
        std::process::exit(1);
    }
}
