//! One pipeline per command. Each returns its checks; artifacts go to `out`.

use crate::manifest::Run;
use crate::report::{write_csv, Check};
use greenop::estimates::{coulomb_sweep, default_omega_grid, offdiagonal_profile, RegionMask, ESTIMATE_MODE};
use greenop::green::{cauchy_representation, jump_defect, propagator_stack, solve_cauchy, CauchyData, GreenSolver, PropagatorKind};
use greenop::io::{read_any, read_field, write_field, write_propagator};
use greenop::solver::{solve_variational, Direction};
use greenop::suites::{
    centered_bump, gaussian_suite, gn_refinement, identity_suite, lorentz_diagonal_defect, lorentz_monotonicity_violations,
    norm_rows, GaussianSuiteParams, IdentityParams, NormRow, NormSpec, TrigPolynomial,
};
use greenop::{Error, Field, SpaceTimeGrid, SpatialField};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

type Res<T> = Result<T, Error>;

fn spatial_input(run: &Run, path: &Option<PathBuf>) -> Res<SpatialField> {
    match path {
        Some(p) => read_any(&run.resolve(p))?.into_spatial(&run.grid),
        None => Ok(centered_bump(&run.grid)),
    }
}

fn field_input(run: &Run, path: &Option<PathBuf>) -> Res<Field> {
    match path {
        Some(p) => read_any(&run.resolve(p))?.into_field(&run.grid),
        None => Ok(Field::zeros(&run.grid)),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyParams {
    s: Option<usize>,
    r: Option<usize>,
    t: Option<usize>,
    /// Randomized sketches with this many probes instead of dense propagators.
    sketch: Option<usize>,
    #[serde(default)]
    dense: bool,
}

pub fn verify(run: &Run, out: &Path) -> Res<Vec<Check>> {
    let p: VerifyParams = run.params()?;
    let coeffs = run.coefficients()?;
    let cfg = run.solver_config(&coeffs);
    let mut ip = IdentityParams::default_for(&run.grid);
    ip.s = p.s.unwrap_or(ip.s);
    ip.r = p.r.unwrap_or(ip.r);
    ip.t = p.t.unwrap_or(ip.t);
    ip.seed = run.manifest.seed;
    if p.dense {
        ip.sketch = None;
    }
    if p.sketch.is_some() {
        ip.sketch = p.sketch;
    }
    let rows = identity_suite(&coeffs, &cfg, &ip)?;
    write_csv(&out.join("identities.csv"), &rows, &["check", "s", "r", "t", "kappa", "defect", "threshold", "pass"])?;
    let anchor = |c: &str| match c {
        "jump" => "Pi+ - Pi- = Id",
        "chapman_kolmogorov" => "G(t,s) = G(t,r)G(r,s)",
        "adjoint" => "G(t,s)* = G~(s,t)",
        _ => "G(t,s) = 0 for t < s",
    };
    Ok(rows.iter().map(|r| Check::at_most(r.check.clone(), anchor(&r.check), r.defect, r.threshold)).collect())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GreenParams {
    s: Option<usize>,
    targets: Option<Vec<usize>>,
    kind: Option<PropagatorKind>,
    direction: Option<Direction>,
    /// Also store the orbit of this datum.
    psi: Option<PathBuf>,
}

pub fn green(run: &Run, out: &Path) -> Res<Vec<Check>> {
    let p: GreenParams = run.params()?;
    let g = &run.grid;
    let coeffs = run.coefficients()?;
    let cfg = run.solver_config(&coeffs);
    let direction = p.direction.unwrap_or(Direction::Forward);
    let solver = GreenSolver::new(&coeffs, &cfg, direction)?;
    let defaults = IdentityParams::default_for(g);
    let s = p.s.unwrap_or(defaults.s);
    let targets = p.targets.unwrap_or_else(|| match direction {
        Direction::Forward => vec![defaults.t],
        Direction::Backward => vec![s.saturating_sub(defaults.t - defaults.s)],
    });
    let kind = p.kind.unwrap_or(PropagatorKind::Fundamental);
    let stack = propagator_stack(&solver, s, &targets, kind)?;
    let mut checks = Vec::new();
    for m in &stack {
        write_propagator(&out.join(format!("propagator_s{}_t{}.gop", m.source, m.target)), m)?;
        let norm = m.operator_norm();
        checks.push(Check::at_most(format!("operator_norm[t={}]", m.target), "||G(t,s)|| < inf", norm, f64::MAX).with_pass(norm.is_finite()));
    }
    if p.psi.is_some() {
        let traj = solver.column(s, &spatial_input(run, &p.psi)?)?;
        write_field(&out.join(format!("column_s{s}.gof")), &traj.data)?;
        checks.push(Check::at_most("jump", "Pi+ - Pi- = Id", jump_defect(&traj), 5.0 * g.dt()));
    }
    Ok(checks)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CauchyParams {
    horizon: Option<usize>,
    psi: Option<PathBuf>,
    g: Option<PathBuf>,
    h: Option<PathBuf>,
    #[serde(default)]
    flux: Vec<PathBuf>,
    /// Compare with the Green-column representation.
    #[serde(default)]
    representation: bool,
}

pub fn cauchy(run: &Run, out: &Path) -> Res<Vec<Check>> {
    let p: CauchyParams = run.params()?;
    let grid = &run.grid;
    let coeffs = run.coefficients()?;
    let cfg = run.solver_config(&coeffs);
    let horizon = p.horizon.unwrap_or(grid.nt / 2);
    let psi = spatial_input(run, &p.psi)?;
    let gf = field_input(run, &p.g)?;
    let hf = field_input(run, &p.h)?;
    let flux = p.flux.iter().map(|f| read_any(&run.resolve(f))?.into_field(grid)).collect::<Res<Vec<Field>>>()?;
    let flux = if flux.is_empty() { vec![Field::zeros(grid); grid.n] } else { flux };
    let data = CauchyData { psi: &psi, flux: &flux, g: &gf, h: &hf };
    let sol = solve_cauchy(&coeffs, &data, horizon, &cfg)?;
    let as_field = |slices: &[SpatialField]| -> Res<Field> {
        let mut all = slices.to_vec();
        all.resize(grid.nt, SpatialField::zeros(grid));
        Field::from_slices(grid, &all)
    };
    write_field(&out.join("cauchy.gof"), &as_field(&sol.slices)?)?;
    let mut checks = vec![Check::at_most("residual", "(H+kappa)u = f", sol.residual, cfg.tol)];
    if p.representation {
        let rep = cauchy_representation(&coeffs, &data, horizon, &cfg)?;
        let scale = sol.slices.iter().map(|s| s.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let diff = sol.slices.iter().zip(&rep.slices).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
        checks.push(Check::at_most("representation", "u(t) = Gamma(t,0)psi + int Gamma(t,s)f(s) ds", diff, 50.0 * (cfg.tol + grid.dt())));
    }
    Ok(checks)
}

/// Spatial region in physical coordinates.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Region {
    fn mask(&self, g: &SpaceTimeGrid) -> Res<RegionMask> {
        let dims = |v: &[f64]| {
            if v.len() == g.n {
                Ok(())
            } else {
                Err(Error::Shape(format!("region coordinates have {} entries, n = {}", v.len(), g.n)))
            }
        };
        let periodic = |a: f64, b: f64| {
            let d = (a - b).rem_euclid(g.lx);
            d.min(g.lx - d)
        };
        Ok(match self {
            Region::Ball { center, radius } => {
                dims(center)?;
                let (c, r) = (center.clone(), *radius);
                RegionMask::from_fn(g, move |x| (0..c.len()).map(|i| periodic(x[i], c[i]).powi(2)).sum::<f64>() <= r * r + 1e-12)
            }
            Region::Box { lo, hi } => {
                dims(lo)?;
                dims(hi)?;
                let (lo, hi) = (lo.clone(), hi.clone());
                RegionMask::from_fn(g, move |x| (0..lo.len()).all(|i| lo[i] <= x[i] && x[i] < hi[i]))
            }
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OffdiagParams {
    e: Region,
    f: Region,
    pairs: Option<Vec<(usize, usize)>>,
    #[serde(default = "five")]
    probes: usize,
    omega: Option<Vec<f64>>,
    #[serde(default = "r2_min")]
    r2_min: f64,
}

fn five() -> usize {
    5
}
fn r2_min() -> f64 {
    0.95
}

#[derive(Serialize)]
struct OffdiagRow {
    s: f64,
    t: f64,
    #[serde(rename = "dEF")]
    d: f64,
    value: f64,
    bound: f64,
    pass: bool,
}

pub fn offdiag(run: &Run, out: &Path) -> Res<Vec<Check>> {
    let p: OffdiagParams = run.required_params()?;
    let g = &run.grid;
    let coeffs = run.coefficients()?;
    let cfg = run.solver_config(&coeffs).with_mode(ESTIMATE_MODE);
    let (e, f) = (p.e.mask(g)?, p.f.mask(g)?);
    if e.is_empty() || f.is_empty() {
        return Err(Error::Geometry("a region contains no grid point".into()));
    }
    let pairs = p.pairs.unwrap_or_else(|| GaussianSuiteParams::default_for(g).targets.iter().map(|&t| (g.nt / 8, t)).collect());
    let omega = p.omega.unwrap_or_else(|| default_omega_grid(&coeffs, 8));
    let prof = offdiagonal_profile(&coeffs, &cfg, &e, &f, &pairs, p.probes, run.manifest.seed, &omega)?;
    let envelope = |d: f64, el: f64| prof.fit.map_or(f64::INFINITY, |fit| fit.bound(d, el) * (3.0 * fit.stderr).exp() * (1.0 + 1e-9));
    let rows: Vec<OffdiagRow> = prof
        .samples
        .iter()
        .map(|s| {
            let bound = envelope(s.d, s.elapsed);
            OffdiagRow { s: g.time(s.s), t: g.time(s.t), d: s.d, value: s.value, bound, pass: s.value <= bound }
        })
        .collect();
    write_csv(&out.join("offdiag.csv"), &rows, &["s", "t", "dEF", "value", "bound", "pass"])?;
    let mut checks = Vec::new();
    if let Some(fit) = prof.fit {
        let anchor = "||Gamma(t,s)psi||_E <= C exp(-d^2/4c0(t-s) + omega(t-s)) ||psi||_F";
        checks.push(Check::at_most("slope", anchor, fit.slope, 0.0).with_pass(fit.slope < 0.0));
        checks.push(Check::at_least("r2", anchor, fit.r2, p.r2_min));
        checks.push(Check::at_least("c0", anchor, fit.c0, 0.0).with_pass(fit.c0.is_finite() && fit.c0 > 0.0));
        let worst = rows.iter().map(|r| r.value / r.bound).fold(0.0, f64::max);
        checks.push(Check::at_most("envelope", anchor, worst, 1.0));
    }
    Ok(checks)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Constants {
    c: f64,
    c0: f64,
    #[serde(default)]
    omega: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianParams {
    source: Option<usize>,
    targets: Option<Vec<usize>>,
    radius: Option<f64>,
    noise: Option<f64>,
    constants: Option<Constants>,
    probes: Option<usize>,
}

pub fn gaussian(run: &Run, out: &Path) -> Res<Vec<Check>> {
    let p: GaussianParams = run.params()?;
    let g = &run.grid;
    let coeffs = run.coefficients()?;
    let cfg = run.solver_config(&coeffs).with_mode(ESTIMATE_MODE);
    let mut gp = GaussianSuiteParams::default_for(g);
    if let Some(s) = p.source {
        let shift = |t: usize| t + s - gp.source;
        gp.targets = gp.targets.iter().map(|&t| shift(t)).filter(|&t| t < g.nt).collect();
        gp.source = s;
    }
    gp.targets = p.targets.unwrap_or(gp.targets);
    gp.radius = p.radius.unwrap_or(gp.radius);
    gp.noise = p.noise;
    gp.constants = p.constants.map(|c| (c.c, c.c0, c.omega));
    gp.probes = p.probes.unwrap_or(gp.probes);
    gp.seed = run.manifest.seed;
    let rep = gaussian_suite(&coeffs, &cfg, &gp)?;
    write_csv(&out.join("gaussian.csv"), &rep.report.rows, &["t", "s", "x", "y", "abs_kernel", "bound", "ratio"])?;
    let anchor = "|Gamma(t,x,s,y)| <= mu^(k+1) (16 pi c0 (t-s))^(-n/2) exp(-|x-y|^2/16c0(t-s) + omega(t-s))";
    Ok(vec![
        Check::at_least("local_bound", "sup_Q_r |u| <= B r^-(n+2)/2 ||u||_L2(Q_2r)", rep.local.b, 0.0).with_pass(rep.local.b.is_finite()),
        Check::at_most("violations", anchor, rep.report.violations as f64, 0.0),
        Check::at_least("min_ratio", anchor, rep.report.min_ratio, 1.0),
    ])
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoulombParams {
    re_c: Option<Vec<f64>>,
    #[serde(default)]
    im_c: f64,
    cap: Option<f64>,
    probes: Option<usize>,
    /// Interval expected to contain the sign change.
    bracket: Option<(f64, f64)>,
}

#[derive(Serialize)]
struct CoulombRow {
    re_c: f64,
    ratio: f64,
    pass: bool,
}

pub fn coulomb(run: &Run, out: &Path) -> Res<Vec<Check>> {
    let p: CoulombParams = run.params()?;
    let g = &run.grid;
    let re_c = p.re_c.unwrap_or_else(|| (0..=20).map(|i| -1.0 + 0.05 * i as f64).collect());
    let cap = p.cap.unwrap_or(1.0 / (g.dx() * g.dx()));
    let sweep = coulomb_sweep(g, &re_c, p.im_c, cap, p.probes.unwrap_or(16), run.manifest.seed)?;
    let rows: Vec<CoulombRow> = sweep.iter().map(|r| CoulombRow { re_c: r.re_c, ratio: r.ratio, pass: r.pass }).collect();
    write_csv(&out.join("coulomb.csv"), &rows, &["re_c", "ratio", "pass"])?;
    let mut sorted: Vec<&CoulombRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.re_c.total_cmp(&b.re_c));
    let drops = sorted.windows(2).filter(|w| w[1].ratio < w[0].ratio - 1e-12).count();
    // sign change by linear interpolation between the bracketing sweep points
    let crossing = sorted.windows(2).find(|w| w[0].ratio <= 0.0 && w[1].ratio > 0.0).map(|w| {
        let (a, b) = (w[0], w[1]);
        a.re_c + (b.re_c - a.re_c) * (-a.ratio) / (b.ratio - a.ratio)
    });
    let (lo, hi) = p.bracket.unwrap_or((-0.30, -0.20));
    let anchor = "Re<Lu,u> >= (1 + min(Re c,0)/((n-2)/2)^2) ||grad u||^2";
    let found = crossing.unwrap_or(f64::NAN);
    Ok(vec![
        Check::at_most("monotone", anchor, drops as f64, 0.0),
        Check::at_least("threshold", anchor, found, lo).with_pass(crossing.is_some_and(|c| (lo..=hi).contains(&c))),
    ])
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GnParams {
    cases: Option<Vec<(usize, usize, usize)>>,
    fields: Option<usize>,
    tolerance: Option<f64>,
}

pub fn gn(run: &Run, out: &Path) -> Res<Vec<Check>> {
    let p: GnParams = run.params()?;
    let cases = p.cases.unwrap_or_else(|| vec![(1, 1, 0), (2, 1, 0), (1, 2, 1)]);
    let fields = p.fields.unwrap_or(200);
    let tol = p.tolerance.unwrap_or(0.1);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let anchor = "||d^alpha u||_{L^r L^{q,2}} <= C ||grad^m u||^{2/r} ||u||_{L^inf L^2}^{1-2/r}";
    for (n, m, o) in cases {
        let block = gn_refinement(n, m, o, fields, run.manifest.seed)?;
        let max_ratio = block.iter().map(|r| r.ratio).fold(0.0, f64::max);
        let change = block.iter().map(|r| r.change).fold(0.0, f64::max);
        checks.push(Check::at_most(format!("max_ratio[{n},{m},{o}]"), anchor, max_ratio, f64::MAX).with_pass(max_ratio.is_finite()));
        checks.push(Check::at_most(format!("refinement[{n},{m},{o}]"), anchor, change, tol));
        rows.extend(block);
    }
    write_csv(&out.join("gn.csv"), &rows, &["field_id", "n", "m", "order", "ratio", "refined", "change"])?;
    Ok(checks)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormsParams {
    #[serde(default)]
    fields: Vec<PathBuf>,
    /// Random fields used when no files are given.
    random: Option<usize>,
    specs: Option<Vec<NormSpec>>,
}

pub fn norms(run: &Run, out: &Path) -> Res<Vec<Check>> {
    let p: NormsParams = run.params()?;
    let g = &run.grid;
    let fields: Vec<Field> = if p.fields.is_empty() {
        (0..p.random.unwrap_or(100)).map(|i| TrigPolynomial::random(g.n, 3, run.manifest.seed, i as u32).sample(g)).collect::<Res<_>>()?
    } else {
        p.fields.iter().map(|f| read_field(&run.resolve(f))).collect::<Res<_>>()?
    };
    if let Some(f) = fields.iter().find(|f| f.grid() != g) {
        return Err(Error::InvalidGrid(format!("field on a {}-point grid differs from the manifest grid", f.grid().len())));
    }
    let specs = p.specs.unwrap_or_else(|| {
        let sp = |r, q, s_time, s_space| NormSpec { r, q, s_time, s_space };
        vec![sp(2.0, 2.0, 2.0, 2.0), sp(4.0, 3.0, 4.0, 3.0), sp(4.0, 3.0, 2.0, 2.0), sp(4.0, 3.0, f64::INFINITY, f64::INFINITY)]
    });
    let mut rows: Vec<NormRow> = Vec::new();
    let (mut diag, mut violations) = (0.0f64, 0usize);
    for (i, u) in fields.iter().enumerate() {
        rows.extend(norm_rows(u, i, &specs)?);
        diag = diag.max(lorentz_diagonal_defect(u, 4, 3)?).max(lorentz_diagonal_defect(u, 2, 2)?);
        violations += lorentz_monotonicity_violations(u, 3.0, &[1.0, 1.5, 2.0, 3.0, 6.0, f64::INFINITY])?;
    }
    write_csv(&out.join("norms.csv"), &rows, &["field_id", "r", "q", "s_time", "s_space", "norm"])?;
    Ok(vec![
        Check::at_most("lorentz_diagonal", "L^{p,p} = L^p", diag, 1e-12),
        Check::at_most("secondary_monotone", "L^{p,s1} into L^{p,s2}, s1 <= s2", violations as f64, 0.0),
    ])
}

#[derive(Serialize)]
struct SolveRow {
    iterations: usize,
    residual: f64,
    converged: bool,
    certificate_min_ratio: Option<f64>,
    certificate_threshold: Option<f64>,
    inverse_bound_ok: bool,
    wall_time: f64,
}

/// Plain variational solve: reads `rhs`, writes `out` and the `report` CSV.
pub fn solve(run: &Run, out: &Path) -> Res<Vec<Check>> {
    let m = &run.manifest;
    let rhs = m.rhs.as_ref().ok_or_else(|| Error::InvalidArgument("solve needs an rhs field".into()))?;
    let f = read_any(&run.resolve(rhs))?.into_field(&run.grid)?;
    let coeffs = run.coefficients()?;
    let cfg = run.solver_config(&coeffs);
    let (u, rep) = solve_variational(&coeffs, &f, &cfg)?;
    write_field(&out.join(m.out.clone().unwrap_or_else(|| "solution.gof".into())), &u)?;
    let row = SolveRow {
        iterations: rep.iterations,
        residual: rep.residual,
        converged: rep.converged,
        certificate_min_ratio: rep.certificate.map(|c| c.min_ratio),
        certificate_threshold: rep.certificate.map(|c| c.threshold),
        inverse_bound_ok: rep.inverse_bound_ok,
        wall_time: rep.wall_time,
    };
    write_csv(&out.join(m.report.clone().unwrap_or_else(|| "solve.csv".into())), &[row], &[])?;
    if !rep.converged {
        return Err(Error::NonConvergence { iterations: rep.iterations, residual: rep.residual });
    }
    let mut checks = vec![Check::at_most("residual", "(H+kappa)u = f", rep.residual, cfg.tol)];
    let bound = if rep.inverse_bound_ok { 1.0 } else { 0.0 };
    checks.push(Check::at_least("inverse_bound", "||u|| <= C/delta ||f||_dual", bound, 1.0));
    if let Some(c) = rep.certificate {
        checks.push(Check::at_least("coercivity", "Re<Hu,(Id+delta H_t)u> >= delta/2 ||u||^2", c.min_ratio, c.threshold));
    }
    Ok(checks)
}
