//! End-to-end verification pipelines shared by the command line and the
//! acceptance harness: identity suite, Gaussian bound, norm sweeps.

use crate::error::{Error, Result};
use crate::estimates::{
    default_omega_grid, gaussian_bound_check, measure_local_bound, offdiagonal_profile, DecayFit, GaussianBoundParams,
    GaussianReport, LocalBound, RegionMask,
};
use crate::green::{
    adjoint_defect, causality_defect, causality_threshold, chapman_kolmogorov_defect, jump_defect, propagator_stack,
    sketch_adjoint, sketch_chapman_kolmogorov, GreenSolver, PropagatorKind,
};
use crate::lattice::{Field, SpaceTimeGrid, SpatialField};
use crate::norms::{gagliardo_nirenberg_ratio, gn_default_pair, mixed_lebesgue_norm, mixed_lorentz_norm, ExponentPair, LorentzIndex};
use crate::operator::CoefficientSet;
use crate::rng;
use crate::solver::{Direction, SolverConfig};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Slices `s < r < t` of the identity suite, plus the assembly mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityParams {
    pub s: usize,
    pub r: usize,
    pub t: usize,
    /// Probe count for randomized sketches; dense propagators when `None`.
    pub sketch: Option<usize>,
    pub seed: u64,
}

impl IdentityParams {
    /// `s = Nt/4`, `t − s ≈ min(1, Lt/4)`, `r` halfway; dense up to 256 points.
    pub fn default_for(grid: &SpaceTimeGrid) -> Self {
        let s = grid.nt / 4;
        let span = ((1.0f64.min(grid.lt / 4.0) / grid.dt()).round() as usize).max(2);
        let sketch = if grid.spatial_len() > 256 { Some(8) } else { None };
        Self { s, r: s + span / 2, t: s + span, sketch, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub check: String,
    pub s: f64,
    /// Intermediate time, Chapman–Kolmogorov only.
    pub r: Option<f64>,
    pub t: f64,
    pub kappa: f64,
    pub defect: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Smooth bump of width `Lx/8` centered in the box.
pub fn centered_bump(grid: &SpaceTimeGrid) -> SpatialField {
    let w = grid.lx / 8.0;
    let c = grid.lx / 2.0;
    SpatialField::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|v| (v - c).powi(2)).sum();
        C64::new((-r2 / (2.0 * w * w)).exp(), 0.0)
    })
}

/// Jump, Chapman–Kolmogorov, adjointness and causality with thresholds
/// `5·dt`, `50·(tol+dt)`, `50·(tol+dt)` and `max(e^{−0.9κLt}, 10·tol)`.
pub fn identity_suite(coeffs: &CoefficientSet, cfg: &SolverConfig, p: &IdentityParams) -> Result<Vec<IdentityCheck>> {
    let g = coeffs.grid();
    if !(p.s < p.r && p.r < p.t && p.t < g.nt) {
        return Err(Error::InvalidTimes(format!("need s < r < t < Nt, got ({}, {}, {})", p.s, p.r, p.t)));
    }
    let fwd = GreenSolver::new(coeffs, cfg, Direction::Forward)?;
    let bwd = GreenSolver::new(coeffs, cfg, Direction::Backward)?;
    let traj = fwd.column(p.s, &centered_bump(g))?;
    let (ck, adj) = match p.sketch {
        Some(count) => (
            sketch_chapman_kolmogorov(&fwd, p.s, p.r, p.t, count, p.seed)?,
            sketch_adjoint(&fwd, &bwd, p.s, p.t, count, p.seed)?,
        ),
        None => {
            let from_s = propagator_stack(&fwd, p.s, &[p.r, p.t], PropagatorKind::Green)?;
            let from_r = propagator_stack(&fwd, p.r, &[p.t], PropagatorKind::Green)?;
            let back = propagator_stack(&bwd, p.t, &[p.s], PropagatorKind::Green)?;
            (chapman_kolmogorov_defect(&from_s[1], &from_r[0], &from_s[0])?, adjoint_defect(&from_s[1], &back[0])?)
        }
    };
    let semigroup = 50.0 * (cfg.tol + g.dt());
    let row = |check: &str, r: Option<usize>, t: usize, defect: f64, threshold: f64| IdentityCheck {
        check: check.into(),
        s: g.time(p.s),
        r: r.map(|r| g.time(r)),
        t: g.time(t),
        kappa: cfg.kappa,
        defect,
        threshold,
        pass: defect <= threshold,
    };
    Ok(vec![
        row("jump", None, p.s, jump_defect(&traj), 5.0 * g.dt()),
        row("chapman_kolmogorov", Some(p.r), p.t, ck, semigroup),
        row("adjoint", None, p.t, adj, semigroup),
        row("causality", None, p.s, causality_defect(&traj), causality_threshold(g, cfg.kappa, cfg.tol)),
    ])
}

/// Inputs of the pointwise Gaussian check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSuiteParams {
    pub source: usize,
    pub targets: Vec<usize>,
    /// Local-boundedness radius, also the scale `ρ` of the bound.
    pub radius: f64,
    /// Absolute kernel floor; `10·tol/dxⁿ` when `None`.
    pub noise: Option<f64>,
    /// `(C, c₀, ω)`; fitted from an off-diagonal profile when `None`.
    pub constants: Option<(f64, f64, f64)>,
    pub probes: usize,
    pub seed: u64,
}

impl GaussianSuiteParams {
    /// Targets with `t − s ∈ [0.1, 1]`, radius `max(2dx, √(2dt), Lx/32)`.
    pub fn default_for(grid: &SpaceTimeGrid) -> Self {
        let source = grid.nt / 8;
        let targets: Vec<usize> = (source + 1..grid.nt)
            .filter(|&t| {
                let el = (t - source) as f64 * grid.dt();
                (0.1 - 1e-12..=1.0 + 1e-12).contains(&el)
            })
            .collect();
        let radius = (2.0 * grid.dx()).max((2.0 * grid.dt()).sqrt()).max(grid.lx / 32.0);
        Self { source, targets, radius, noise: None, constants: None, probes: 4, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSuiteReport {
    pub local: LocalBound,
    pub fit: Option<DecayFit>,
    pub params: GaussianBoundParams,
    pub noise: f64,
    pub report: GaussianReport,
}

/// Measures `B`, fits `(C, c₀, ω)` unless given, then checks every kernel entry.
pub fn gaussian_suite(coeffs: &CoefficientSet, cfg: &SolverConfig, p: &GaussianSuiteParams) -> Result<GaussianSuiteReport> {
    let g = coeffs.grid();
    if p.targets.is_empty() {
        return Err(Error::InvalidTimes("no target slices".into()));
    }
    let solver = GreenSolver::new(coeffs, cfg, Direction::Forward)?;
    let stack = propagator_stack(&solver, p.source, &p.targets, PropagatorKind::Fundamental)?;
    // local boundedness on Γ-orbits started at the source; the source slice is excluded.
    // B bounds every solution, so the data include constants and point sources.
    let ns = g.spatial_len();
    let everywhere = RegionMask::new(g, vec![true; ns])?;
    let mut data = vec![
        SpatialField::new(g, vec![C64::new(1.0, 0.0); ns])?,
        centered_bump(g),
        SpatialField::basis(g, 0),
        SpatialField::basis(g, ns / 2),
    ];
    data.extend((0..p.probes).map(|i| everywhere.random_probe(p.seed, rng::stream_id(0xB0, i as u32))));
    let columns = data
        .par_iter()
        .map(|psi| {
            let mut orbit = solver.column(p.source, psi)?.data;
            for k in 0..g.nt {
                let el = (k as f64 - p.source as f64) * g.dt();
                let w = if k > p.source { (cfg.kappa * el).exp() } else { 0.0 };
                orbit.slice_data_mut(k).iter_mut().for_each(|z| *z *= w);
            }
            Ok(orbit)
        })
        .collect::<Result<Vec<Field>>>()?;
    // B is a property of the operator: sample every later slice whose cylinder
    // stays clear of the source, not only the target slices
    let stride = (g.spatial_len() / 16).max(1);
    let step = (g.nt / 32).max(1);
    let centers: Vec<(usize, usize)> = (p.source + 1..g.nt)
        .step_by(step)
        .chain(p.targets.iter().copied())
        .flat_map(|k| (0..g.spatial_len()).step_by(stride).map(move |ix| (k, ix)))
        .collect();
    let guard = [p.source];
    let mut local: Option<LocalBound> = None;
    for col in &columns {
        let lb = measure_local_bound(col, p.radius, &centers, &guard)?;
        local = Some(match local {
            Some(acc) if acc.b >= lb.b => LocalBound { used: acc.used + lb.used, skipped: acc.skipped + lb.skipped, ..acc },
            Some(acc) => LocalBound { used: acc.used + lb.used, skipped: acc.skipped + lb.skipped, ..lb },
            None => lb,
        });
    }
    let local = local.expect("at least one probe");
    let (fit, (c, c0, omega)) = match p.constants {
        Some(k) => (None, k),
        None => {
            let f = RegionMask::from_fn(g, |x| x.iter().all(|v| *v < g.lx / 16.0));
            let e = RegionMask::from_fn(g, |x| (3.0 * g.lx / 16.0..4.0 * g.lx / 16.0).contains(&x[0]));
            let pairs: Vec<(usize, usize)> = p.targets.iter().map(|&t| (p.source, t)).collect();
            let prof = offdiagonal_profile(coeffs, cfg, &e, &f, &pairs, 5, p.seed, &default_omega_grid(coeffs, 8))?;
            let fit = prof.fit.ok_or_else(|| Error::Geometry("regions of the decay fit touch".into()))?;
            if !(fit.c0.is_finite() && fit.c0 > 0.0) {
                return Err(Error::InvalidArgument(format!("decay fit has no positive c0 (slope {})", fit.slope)));
            }
            (Some(fit), (fit.c.max(1.0), fit.c0, fit.omega))
        }
    };
    let params = GaussianBoundParams::new(g.n, local.b, c, c0, omega, p.radius)?;
    let noise = p.noise.unwrap_or(10.0 * cfg.tol / g.space_cell());
    let report = gaussian_bound_check(&stack, &params, noise)?;
    Ok(GaussianSuiteReport { local, fit, params, noise, report })
}

/// Random trigonometric polynomial in `(t, x)`; sampling it on a finer grid
/// gives the same function, which is what refinement checks need.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    pub n: usize,
    /// `(time harmonic, spatial harmonics, amplitude)`
    pub terms: Vec<(i64, [i64; 3], C64)>,
}

impl TrigPolynomial {
    pub fn random(n: usize, band: i64, seed: u64, id: u32) -> Self {
        let mut r = rng::stream(seed, rng::stream_id(0x7A, id));
        let mut terms = Vec::new();
        let span = 2 * band + 1;
        let count = span.pow(n as u32 + 1);
        for idx in 0..count {
            let mut rest = idx;
            let mut k = [0i64; 4];
            for slot in k.iter_mut().take(n + 1) {
                *slot = rest % span - band;
                rest /= span;
            }
            // decaying spectrum, a random subset of modes
            let size: i64 = k.iter().map(|v| v * v).sum();
            if size == 0 || r.gen::<f64>() < 0.5 {
                continue;
            }
            let a: f64 = StandardNormal.sample(&mut r);
            let b: f64 = StandardNormal.sample(&mut r);
            let amp = C64::new(a, b) / (1.0 + size as f64);
            terms.push((k[0], [k[1], k[2], k[3]], amp));
        }
        if terms.is_empty() {
            terms.push((0, [1, 0, 0], C64::new(1.0, 0.0)));
        }
        Self { n, terms }
    }

    pub fn sample(&self, grid: &SpaceTimeGrid) -> Result<Field> {
        if grid.n != self.n {
            return Err(Error::Shape(format!("polynomial in {} dimensions, grid has {}", self.n, grid.n)));
        }
        let (wt, wx) = (2.0 * PI / grid.lt, 2.0 * PI / grid.lx);
        Ok(Field::from_fn(grid, |t, x| {
            self.terms
                .iter()
                .map(|(kt, kx, a)| {
                    let ph = wt * *kt as f64 * t + (0..self.n).map(|c| wx * kx[c] as f64 * x[c]).sum::<f64>();
                    a * C64::from_polar(1.0, ph)
                })
                .sum()
        }))
    }
}

/// One row of the Gagliardo–Nirenberg sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnRow {
    pub field_id: usize,
    pub n: usize,
    pub m: usize,
    pub order: usize,
    pub ratio: f64,
    pub refined: f64,
    /// `|refined − ratio| / ratio`
    pub change: f64,
}

/// Gagliardo–Nirenberg ratios of `fields` random polynomials for `(n, m, |α|)`
/// on a base grid and on the grid refined twice in every direction.
pub fn gn_refinement(n: usize, m: usize, order: usize, fields: usize, seed: u64) -> Result<Vec<GnRow>> {
    let pair = gn_default_pair(n, m, order)
        .ok_or_else(|| Error::Unsupported(format!("no default exponent pair for (n, m, |alpha|) = ({n}, {m}, {order})")))?;
    let nx = match n {
        1 => 32,
        2 => 16,
        _ => 8,
    };
    let base = SpaceTimeGrid::new(n, nx, 2.0 * PI, 16, 2.0 * PI)?;
    let fine = SpaceTimeGrid::new(n, 2 * nx, 2.0 * PI, 32, 2.0 * PI)?;
    let mut alpha = vec![0usize; n];
    alpha[0] = order;
    (0..fields)
        .into_par_iter()
        .map(|id| {
            let poly = TrigPolynomial::random(n, 2, seed, id as u32);
            let ratio = gagliardo_nirenberg_ratio(&poly.sample(&base)?, &alpha, m, pair, 0..base.nt)?;
            let refined = gagliardo_nirenberg_ratio(&poly.sample(&fine)?, &alpha, m, pair, 0..fine.nt)?;
            let change = if ratio > 0.0 { (refined - ratio).abs() / ratio } else { 0.0 };
            Ok(GnRow { field_id: id, n, m, order, ratio, refined, change })
        })
        .collect()
}

/// Mixed Lorentz norm request `L^{r,s_time}_t L^{q,s_space}_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub r: f64,
    pub q: f64,
    pub s_time: f64,
    pub s_space: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub field_id: usize,
    pub r: f64,
    pub q: f64,
    pub s_time: f64,
    pub s_space: f64,
    pub norm: f64,
}

pub fn norm_rows(u: &Field, field_id: usize, specs: &[NormSpec]) -> Result<Vec<NormRow>> {
    specs
        .iter()
        .map(|sp| {
            let norm = mixed_lorentz_norm(u, LorentzIndex::new(sp.r, sp.s_time)?, LorentzIndex::new(sp.q, sp.s_space)?)?;
            Ok(NormRow { field_id, r: sp.r, q: sp.q, s_time: sp.s_time, s_space: sp.s_space, norm })
        })
        .collect()
}

/// `|‖u‖_{L^{r,r}L^{q,q}} − ‖u‖_{L^rL^q}| / ‖u‖_{L^rL^q}` for integer `r, q`.
pub fn lorentz_diagonal_defect(u: &Field, r: i64, q: i64) -> Result<f64> {
    let lor = mixed_lorentz_norm(u, LorentzIndex::lebesgue(r as f64), LorentzIndex::lebesgue(q as f64))?;
    let leb = mixed_lebesgue_norm(u, ExponentPair::ratio((r, 1), (q, 1))?);
    Ok(if leb == 0.0 { lor } else { (lor - leb).abs() / leb })
}

/// Number of increases of `s ↦ ‖u‖_{L^{p,s}}` (space, per slice) along the
/// increasing sequence `secondary`; zero for a correct rearrangement.
pub fn lorentz_monotonicity_violations(u: &Field, p: f64, secondary: &[f64]) -> Result<usize> {
    let mut count = 0;
    for k in 0..u.grid().nt {
        let slice = u.slice(k);
        let vals = secondary
            .iter()
            .map(|&s| crate::norms::lorentz_norm(&slice, LorentzIndex::new(p, s)?, u.grid().space_cell()))
            .collect::<Result<Vec<f64>>>()?;
        count += vals.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-12)).count();
    }
    Ok(count)
}
