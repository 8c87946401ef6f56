//! Acceptance criteria 1–10, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`); the exit status is non-zero
//! when any criterion fails. `ACCEPTANCE_ONLY=3,9` restricts the run,
//! `ACCEPTANCE_TRACE=1` (or 2) prints per-fixture detail and `ACCEPTANCE_TOL`
//! replaces the default solver tolerance 1e-6.

use greenop::estimates::{coulomb_sweep, default_omega_grid, offdiagonal_profile, RegionMask, ESTIMATE_MODE};
use greenop::fixtures::{generate_coefficients, Generator};
use greenop::green::{propagator_stack, GreenSolver, PropagatorKind};
use greenop::norms::{conjugate_pair, is_admissible, is_compatible, Exponent, ExponentPair};
use greenop::operator::{coercivity_certificate, default_delta, garding_constants, CoefficientSet, NormMode};
use greenop::solver::{theta_constant, Direction, SolverConfig};
use greenop::suites::{
    gaussian_suite, gn_refinement, identity_suite, lorentz_diagonal_defect, lorentz_monotonicity_violations,
    GaussianSuiteParams, IdentityCheck, IdentityParams, TrigPolynomial,
};
use greenop::{Error, SpaceTimeGrid, SpatialField, C64};
use num_rational::Ratio;
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

type Outcome = Result<(bool, String), Error>;

fn within(start: Instant, budget_s: u64) -> (bool, String) {
    let el = start.elapsed();
    (el <= Duration::from_secs(budget_s), format!("{:.1}s/{budget_s}s", el.as_secs_f64()))
}

// ---------------------------------------------------------------- 1

fn periodic_heat_kernel(g: &SpaceTimeGrid, y: f64, el: f64) -> SpatialField {
    SpatialField::from_fn(g, |x| {
        let v: f64 = (-2..=2)
            .map(|m| {
                let d = x[0] - y + m as f64 * g.lx;
                (-d * d / (4.0 * el)).exp()
            })
            .sum();
        C64::new(v / (4.0 * PI * el).sqrt(), 0.0)
    })
}

/// Worst relative L² error of the Green column against the heat kernel.
fn heat_kernel_error(kappa: f64) -> Result<f64, Error> {
    let g = SpaceTimeGrid::new(1, 256, 40.0, 256, 20.0)?;
    let c = CoefficientSet::identity(&g);
    let cfg = SolverConfig::new(kappa, 0.5, 1e-10).with_mode(NormMode::Homogeneous);
    let (s, y) = (16, 128);
    let psi = SpatialField::basis(&g, y).scaled(C64::new(1.0 / g.dx(), 0.0));
    let traj = GreenSolver::new(&c, &cfg, Direction::Forward)?.column(s, &psi)?;
    let mut worst = 0.0f64;
    for k in s + 1..g.nt {
        let el = (k - s) as f64 * g.dt();
        if !(0.1 - 1e-12..=1.0 + 1e-12).contains(&el) {
            continue;
        }
        let want = periodic_heat_kernel(&g, g.point(y)[0], el);
        // Γ = e^{κ(t−s)} G_κ
        let got = traj.data.slice(k).scaled(C64::new((kappa * el).exp(), 0.0));
        worst = worst.max((&got - &want).norm() / want.norm());
    }
    Ok(worst)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let err = heat_kernel_error(0.0)?;
    let (fast, time) = within(start, 60);
    let damped = heat_kernel_error(1.0)?;
    Ok((
        err <= 0.02 && fast,
        format!("kappa=0 rel L2 err {err:.3e} (<= 2e-2), {time}; informational kappa=1 err {damped:.3e}"),
    ))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let bounds = [(1.0, 1.0), (0.5, 2.0), (0.2, 5.0)];
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for i in 0..100u64 {
        let (lambda, big) = bounds[i as usize % 3];
        let n = 1 + (i as usize / 3) % 3;
        let (nx, nt) = [(32, 32), (16, 16), (8, 8)][n - 1];
        let g = SpaceTimeGrid::new(n, nx, 2.0 * PI, nt, 2.0 * PI)?;
        let gen = Generator::RandomElliptic { lambda, big_lambda: big, real_symmetric: false, time_dependent: i % 2 == 1, band: 3 };
        let c = generate_coefficients(&gen, &g, i)?;
        let delta = lambda / (1.0 + big);
        let cert = coercivity_certificate(&c, 0.0, delta, 8, i)?;
        let scaled = cert.min_ratio / (delta / 2.0);
        worst = worst.min(scaled);
        if cert.min_ratio < 0.99 * delta / 2.0 {
            failures += 1;
        }
    }
    let (fast, time) = within(start, 120);
    Ok((failures == 0 && fast, format!("{failures}/100 below 0.99*delta/2, worst min_ratio/(delta/2) = {worst:.4}, {time}")))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let c = theta_constant(0.0)?;
    let err = (c - 0.5f64.sqrt()).abs();
    Ok((err <= 1e-8, format!("theta_constant(0) = {c:.12}, |err| = {err:.2e}")))
}

// ---------------------------------------------------------------- 4, 5, 6

const FIXTURES: u64 = 20;

/// Grid of the identity and κ checks: `dt·Λ(π/dx)² < 1`, so the time grid
/// resolves the stiffest spatial mode. Coarser steps leave an absolute
/// error in `G_κ` that `e^{κ(t−s)}` amplifies.
fn causal_grid(nt: usize) -> Result<SpaceTimeGrid, Error> {
    SpaceTimeGrid::new(1, 16, 16.0, nt, 8.0)
}

/// Grid of the decay fit, which needs spatial rather than temporal resolution.
// dx = 1/4 keeps the pseudo-spectral tail of variable-coefficient L below the
// Gaussian signal at distance 2; the short period needs a larger kappa against wrap
fn decay_grid() -> Result<SpaceTimeGrid, Error> {
    SpaceTimeGrid::new(1, 64, 16.0, 2048, 4.0)
}

const DECAY_KAPPA: f64 = 4.0;

const COARSE_NT: usize = 256;

fn causal_config(c: &CoefficientSet, kappa: f64, tol: f64) -> SolverConfig {
    SolverConfig::new(kappa, default_delta(&garding_constants(c)), tol).with_mode(NormMode::Inhomogeneous)
}

/// Seeded causal fixture: complex elliptic `A` with lower-order terms whose
/// size `P` is halved until the coercivity certificate accepts it. Fixture 0 is `A = Id`.
fn causal_fixture(seed: u64, g: &SpaceTimeGrid, kappa: f64, tol: f64) -> Result<(CoefficientSet, f64), Error> {
    if seed == 0 {
        return Ok((CoefficientSet::identity(g), 0.0));
    }
    let pair = ExponentPair::ratio((4, 3), (2, 1))?;
    let mut p = 0.5;
    loop {
        let gen = Generator::RandomLowerOrder { p_target: p, pair, lambda: 0.5, big_lambda: 2.0, time_dependent: seed.is_multiple_of(2), band: 3 };
        let c = generate_coefficients(&gen, g, seed)?;
        let cfg = causal_config(&c, kappa, tol);
        let cert = coercivity_certificate(&c, kappa, cfg.delta, cfg.certificate_probes, cfg.seed)?;
        if cert.min_ratio >= NormMode::Homogeneous.default_threshold(cfg.delta) {
            return Ok((c, p));
        }
        p /= 2.0;
        if p < 1e-4 {
            return Err(Error::CertificateFailed { min_ratio: cert.min_ratio, threshold: cert.threshold });
        }
    }
}

const KAPPA: f64 = 2.0;
fn tol() -> f64 {
    std::env::var("ACCEPTANCE_TOL").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-6)
}

fn suite_at(seed: u64, nt: usize, tol: f64) -> Result<Vec<IdentityCheck>, Error> {
    let g = causal_grid(nt)?;
    let (c, _) = causal_fixture(seed, &g, KAPPA, tol)?;
    let cfg = causal_config(&c, KAPPA, tol);
    // same physical times on both grids: s = 1, r = 1.5, t = 2
    let per_unit = nt / 8;
    let p = IdentityParams { s: per_unit, r: 3 * per_unit / 2, t: 2 * per_unit, sketch: None, seed };
    identity_suite(&c, &cfg, &p)
}

/// A defect halves when `fine ≤ 0.65·coarse`; defects already under the
/// solver floor (`≤ 10·tol` on both grids) cannot resolve a rate and are exempt.
fn halves(coarse: f64, fine: f64, tol: f64) -> bool {
    fine <= 0.65 * coarse || (coarse <= 10.0 * tol && fine <= 10.0 * tol)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut failed_thresholds = Vec::new();
    let mut failed_rates = Vec::new();
    let mut worst_ratio = [0.0f64; 4];
    let mut at_floor = 0;
    for seed in 0..FIXTURES {
        let coarse = suite_at(seed, COARSE_NT, tol())?;
        let fine = suite_at(seed, 2 * COARSE_NT, tol() / 2.0)?;
        for (j, (a, b)) in coarse.iter().zip(&fine).enumerate() {
            if !a.pass || !b.pass {
                failed_thresholds.push(format!("#{seed} {} {:.2e}/{:.2e}", a.check, a.defect, a.threshold));
            }
            if std::env::var("ACCEPTANCE_TRACE").is_ok() {
                eprintln!("  fixture {seed} {:<20} {:.3e} -> {:.3e} ratio {:.3}", a.check, a.defect, b.defect, b.defect / a.defect);
            }
            if !halves(a.defect, b.defect, tol()) {
                failed_rates.push(format!("#{seed} {} {:.2e}->{:.2e}", a.check, a.defect, b.defect));
            }
            if a.defect > 10.0 * tol() {
                worst_ratio[j] = worst_ratio[j].max(b.defect / a.defect);
            } else {
                at_floor += 1;
            }
        }
    }
    let (fast, time) = within(start, 600);
    let pass = failed_thresholds.is_empty() && failed_rates.is_empty() && fast;
    let mut detail = format!(
        "threshold failures {}, rate failures {}, {at_floor}/{} pairs at the 10*tol floor, worst resolved fine/coarse [jump ck adj caus] = [{:.2} {:.2} {:.2} {:.2}], {time}",
        failed_thresholds.len(),
        failed_rates.len(),
        4 * FIXTURES,
        worst_ratio[0],
        worst_ratio[1],
        worst_ratio[2],
        worst_ratio[3]
    );
    for f in failed_thresholds.iter().chain(&failed_rates).take(6) {
        detail.push_str("\n      ");
        detail.push_str(f);
    }
    Ok((pass, detail))
}

fn criterion_5() -> Outcome {
    let g = causal_grid(2 * COARSE_NT)?;
    let per_unit = g.nt / 8;
    // t − s = 1/4, 1/2, 1
    let (s, targets) = (per_unit, [5 * per_unit / 4, 3 * per_unit / 2, 2 * per_unit]);
    let mut worst = 0.0f64;
    for seed in 0..FIXTURES {
        // both κ must be valid for the fixture; the larger one certainly is
        let (c, _) = causal_fixture(seed, &g, KAPPA, tol())?;
        let stacks = [KAPPA, KAPPA + 1.0]
            .iter()
            .map(|&k| propagator_stack(&GreenSolver::new(&c, &causal_config(&c, k, tol()), Direction::Forward)?, s, &targets, PropagatorKind::Fundamental))
            .collect::<Result<Vec<_>, Error>>()?;
        for (a, b) in stacks[0].iter().zip(&stacks[1]) {
            let diff = (&a.entries - &b.entries).norm() / a.entries.norm();
            worst = worst.max(diff);
            if std::env::var("ACCEPTANCE_TRACE").is_ok() {
                eprintln!("  fixture {seed} t={} rel diff {diff:.3e}", a.target);
            }
        }
    }
    Ok((worst <= 10.0 * tol(), format!("max relative |Gamma_k1 - Gamma_k2| = {worst:.3e} (<= {:.1e}), t-s <= 1", 10.0 * tol())))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let g = decay_grid()?;
    let e = RegionMask::from_fn(&g, |x| (4.0..5.0).contains(&x[0]));
    let f = RegionMask::from_fn(&g, |x| (7.0..8.0).contains(&x[0]));
    // t − s from 1/4 to 1 in steps of 1/8
    let per_unit = (1.0 / g.dt()).round() as usize;
    let pairs: Vec<(usize, usize)> = (2..=8).map(|k| (per_unit, per_unit + k * per_unit / 8)).collect();
    let mut bad = Vec::new();
    let mut worst_r2 = 1.0f64;
    let mut id_c0 = f64::NAN;
    for seed in 0..FIXTURES {
        let (c, _) = causal_fixture(seed, &g, KAPPA, tol())?;
        let cfg = causal_config(&c, DECAY_KAPPA, tol()).with_mode(ESTIMATE_MODE);
        let omegas = if seed == 0 { vec![0.0] } else { default_omega_grid(&c, 8) };
        let prof = offdiagonal_profile(&c, &cfg, &e, &f, &pairs, 5, seed, &omegas)?;
        let fit = prof.fit.ok_or_else(|| Error::Geometry("E and F touch".into()))?;
        worst_r2 = worst_r2.min(fit.r2);
        if seed == 0 {
            id_c0 = fit.c0;
        }
        if std::env::var("ACCEPTANCE_TRACE").is_ok() {
            eprintln!("  fixture {seed} slope {:.4} r2 {:.4} c0 {:.3} omega {:.3}", fit.slope, fit.r2, fit.c0, fit.omega);
            if std::env::var("ACCEPTANCE_TRACE").as_deref() == Ok("2") {
                for smp in &prof.samples {
                    eprintln!("    el {:.3} X {:.3} value {:.4e}", smp.elapsed, smp.d * smp.d / smp.elapsed, smp.value);
                }
            }
        }
        if !(fit.slope < 0.0 && fit.r2 >= 0.95) {
            bad.push(format!("#{seed} slope {:.3} r2 {:.3}", fit.slope, fit.r2));
        }
    }
    let (fast, time) = within(start, 300);
    let c0_ok = (0.8..=1.3).contains(&id_c0);
    let mut detail = format!("{} fits rejected, worst r2 {worst_r2:.4}, A=Id c0 = {id_c0:.3} (in [0.8, 1.3]), {time}", bad.len());
    for b in bad.iter().take(4) {
        detail.push_str("\n      ");
        detail.push_str(b);
    }
    Ok((bad.is_empty() && c0_ok && fast, detail))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let start = Instant::now();
    // same resolution as the decay fit, dt = dx²/8; radius 2dx gives cylinders of depth 1
    let g = SpaceTimeGrid::new(1, 64, 16.0, 512, 4.0)?;
    let mut total = 0;
    let mut entries = 0;
    let mut min_ratio = f64::INFINITY;
    for seed in 0..6u64 {
        let c = if seed == 0 {
            CoefficientSet::identity(&g)
        } else {
            let gen = Generator::RandomElliptic { lambda: 0.5, big_lambda: 2.0, real_symmetric: true, time_dependent: false, band: 3 };
            generate_coefficients(&gen, &g, seed)?
        };
        let cfg = SolverConfig::new(DECAY_KAPPA, default_delta(&garding_constants(&c)), 1e-8).with_mode(ESTIMATE_MODE);
        let p = GaussianSuiteParams { seed, ..GaussianSuiteParams::default_for(&g) };
        let rep = gaussian_suite(&c, &cfg, &p)?;
        if std::env::var("ACCEPTANCE_TRACE").is_ok() {
            eprintln!("  fixture {seed} B {:.3} c0 {:.3} violations {} min ratio {:.3e}", rep.local.b, rep.params.c0, rep.report.violations, rep.report.min_ratio);
            if let Some(r) = rep.report.rows.iter().filter(|r| r.ratio < 1.0).min_by(|a, b| a.ratio.total_cmp(&b.ratio)) {
                eprintln!("    worst t-s {:.3} x {} y {} |kernel| {:.3e} bound {:.3e}", r.t - r.s, r.x, r.y, r.abs_kernel, r.bound);
            }
        }
        total += rep.report.violations;
        entries += rep.report.rows.len();
        min_ratio = min_ratio.min(rep.report.min_ratio);
    }
    let (fast, time) = within(start, 600);
    Ok((total == 0 && fast, format!("{total} violations over {entries} checked entries, min bound/|kernel| = {min_ratio:.3}, {time}")))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let g = SpaceTimeGrid::new(3, 32, 8.0, 64, 1.0)?;
    let re: Vec<f64> = (0..=20).map(|i| -1.0 + 0.05 * i as f64).collect();
    let cap = 1.0 / (g.dx() * g.dx());
    let sweep = coulomb_sweep(&g, &re, 0.0, cap, 8, 1)?;
    let monotone = sweep.windows(2).all(|w| w[0].ratio <= w[1].ratio + 1e-12);
    let crossing = sweep.windows(2).find(|w| w[0].ratio < 0.0 && w[1].ratio >= 0.0).map(|w| {
        let (a, b) = (&w[0], &w[1]);
        a.re_c + (b.re_c - a.re_c) * (-a.ratio) / (b.ratio - a.ratio)
    });
    let bracketed = crossing.is_some_and(|c| (-0.30..=-0.20).contains(&c));
    let (fast, time) = within(start, 600);
    let at = crossing.map_or("none".to_string(), |c| format!("{c:.4}"));
    Ok((monotone && bracketed && fast, format!("monotone {monotone}, sign change at Re c = {at} (want [-0.30, -0.20]), {time}")))
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let recips: BTreeSet<Ratio<i64>> = (1..=24i64).flat_map(|d| (0..=d).map(move |a| Ratio::new(a, d))).collect();
    let exps: Vec<Exponent> = recips.iter().map(|&q| Exponent::from_reciprocal(q)).collect::<Result<_, _>>()?;
    let (mut checked, mut compatible, mut exceptions) = (0usize, 0usize, Vec::new());
    for n in 1..=3 {
        for &r in &exps {
            for &q in &exps {
                let p = ExponentPair::new(r, q);
                let lhs = is_compatible(p, n);
                let rhs = is_admissible(conjugate_pair(p), n);
                checked += 1;
                compatible += lhs as usize;
                if lhs != rhs {
                    exceptions.push(format!("n={n} {p}"));
                }
            }
        }
    }
    Ok((
        exceptions.is_empty(),
        format!("{checked} pairs ({compatible} compatible), {} exceptions {:?}", exceptions.len(), &exceptions[..exceptions.len().min(3)]),
    ))
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let g = SpaceTimeGrid::new(2, 16, 2.0 * PI, 16, 2.0 * PI)?;
    let mut diag = 0.0f64;
    let mut violations = 0;
    for id in 0..100u32 {
        let u = TrigPolynomial::random(2, 3, 10, id).sample(&g)?;
        for (r, q) in [(1, 1), (2, 2), (2, 4), (3, 5), (4, 2)] {
            diag = diag.max(lorentz_diagonal_defect(&u, r, q)?);
        }
        violations += lorentz_monotonicity_violations(&u, 3.0, &[1.0, 1.5, 2.0, 3.0, 6.0, f64::INFINITY])?;
    }
    let mut gn = Vec::new();
    let mut gn_ok = true;
    for (n, m, order) in [(1, 1, 0), (2, 1, 0), (1, 2, 1)] {
        let rows = gn_refinement(n, m, order, 200, 11)?;
        let finite = rows.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0 && r.refined.is_finite());
        let change = rows.iter().map(|r| r.change).fold(0.0, f64::max);
        let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
        gn_ok &= finite && change <= 0.10;
        gn.push(format!("({n},{m},{order}) max ratio {max_ratio:.3} max change {:.2}%", 100.0 * change));
    }
    let time = format!("{:.1}s", start.elapsed().as_secs_f64());
    Ok((
        diag <= 1e-12 && violations == 0 && gn_ok,
        format!("L^(p,p) vs L^p {diag:.2e}, monotonicity violations {violations}, GN {}, {time}", gn.join("; ")),
    ))
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "heat kernel reproduction", criterion_1),
        (2, "hidden coercivity certificate", criterion_2),
        (3, "theta constant c(0)", criterion_3),
        (4, "identity suite and halving", criterion_4),
        (5, "kappa-independence of Gamma", criterion_5),
        (6, "off-diagonal decay fit", criterion_6),
        (7, "Gaussian bound", criterion_7),
        (8, "Coulomb threshold", criterion_8),
        (9, "exponent algebra", criterion_9),
        (10, "norm identities and GN stability", criterion_10),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !pass as usize;
        println!("criterion {id:>2} {:<34} {}  {detail}", name, if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
