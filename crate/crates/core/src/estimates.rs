//! Decay estimates: L² off-diagonal bounds, Davies conjugation, pointwise
//! Gaussian kernel bounds and the Coulomb/Hardy threshold scenario.

use crate::error::{Error, Result};
use crate::green::{GreenSolver, PropagatorMatrix};
use crate::lattice::{self, Field, SpaceTimeGrid, SpatialField};
use crate::operator::{
    coercivity_certificate_with, davies_conjugate, davies_conjugate_grad, CertificateOptions, CoefficientField,
    CoefficientSet, NormMode,
};
use crate::rng;
use crate::solver::{Direction, SolverConfig};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Subset of the spatial lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    grid: SpaceTimeGrid,
    mask: Vec<bool>,
}

impl RegionMask {
    pub fn new(grid: &SpaceTimeGrid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.spatial_len() {
            return Err(Error::Shape(format!("mask has {} entries, expected {}", mask.len(), grid.spatial_len())));
        }
        Ok(Self { grid: grid.clone(), mask })
    }

    pub fn from_fn(grid: &SpaceTimeGrid, f: impl Fn(&[f64]) -> bool) -> Self {
        let mask = (0..grid.spatial_len()).map(|ix| f(&grid.point(ix)[..grid.n])).collect();
        Self { grid: grid.clone(), mask }
    }

    /// Closed periodic ball around a lattice point.
    pub fn ball(grid: &SpaceTimeGrid, center: usize, radius: f64) -> Self {
        let mask = (0..grid.spatial_len()).map(|ix| grid.torus_distance(center, ix) <= radius + 1e-12).collect();
        Self { grid: grid.clone(), mask }
    }

    pub fn contains(&self, ix: usize) -> bool {
        self.mask[ix]
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// `d(E,F)`: minimum periodic distance between points of the two masks.
    pub fn distance(&self, other: &RegionMask) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.is_empty() || other.is_empty() {
            return Err(Error::Geometry("empty region".into()));
        }
        let fi = other.indices();
        Ok(self
            .indices()
            .par_iter()
            .map(|&a| fi.iter().map(|&b| self.grid.torus_distance(a, b)).fold(f64::INFINITY, f64::min))
            .reduce(|| f64::INFINITY, f64::min))
    }

    /// `‖ψ‖_{L²(E)}`.
    pub fn norm_on(&self, psi: &SpatialField) -> f64 {
        let s: f64 = psi.data().iter().zip(&self.mask).filter(|(_, &m)| m).map(|(z, _)| z.norm_sqr()).sum();
        (s * self.grid.space_cell()).sqrt()
    }

    fn norm_on_slice(&self, slice: &[C64]) -> f64 {
        let s: f64 = slice.iter().zip(&self.mask).filter(|(_, &m)| m).map(|(z, _)| z.norm_sqr()).sum();
        (s * self.grid.space_cell()).sqrt()
    }

    /// Complex Gaussian noise supported in the mask.
    pub fn random_probe(&self, seed: u64, id: u64) -> SpatialField {
        let mut r = rng::stream(seed, id);
        let data = self
            .mask
            .iter()
            .map(|&m| {
                let z = C64::new(StandardNormal.sample(&mut r), StandardNormal.sample(&mut r));
                if m {
                    z
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect();
        SpatialField::new(&self.grid, data).expect("finite probe")
    }
}

/// `C e^{−d²/4c₀(t−s) + ω(t−s)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c: f64,
    pub c0: f64,
    pub omega: f64,
    pub r2: f64,
    /// Slope of the log-linear regression, `−1/(4c₀)`.
    pub slope: f64,
    /// Residual standard error of the regression.
    pub stderr: f64,
}

impl DecayFit {
    pub fn bound(&self, d: f64, elapsed: f64) -> f64 {
        self.c * (-d * d / (4.0 * self.c0 * elapsed) + self.omega * elapsed).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffDiagSample {
    pub s: usize,
    pub t: usize,
    pub elapsed: f64,
    pub d: f64,
    /// `max_ψ ‖Γ(t,s)ψ‖_{L²(E)} / ‖ψ‖_{L²(F)}`
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffDiagProfile {
    pub samples: Vec<OffDiagSample>,
    /// `None` when `E` and `F` touch.
    pub fit: Option<DecayFit>,
}

/// Least-squares fit of `log v − ω(t−s) = log C − X/(4c₀)`, `X = d²/(t−s)`,
/// for each `ω` of the grid; keeps the best `r²`. The intercept is raised so
/// that no sample lies more than three standard errors above the line.
pub fn fit_decay(samples: &[OffDiagSample], omega_grid: &[f64]) -> Result<DecayFit> {
    let pts: Vec<&OffDiagSample> = samples.iter().filter(|s| s.value > 0.0 && s.elapsed > 0.0).collect();
    if pts.len() < 3 {
        return Err(Error::InvalidArgument("decay fit needs at least three positive samples".into()));
    }
    if omega_grid.is_empty() {
        return Err(Error::InvalidArgument("empty omega grid".into()));
    }
    let xs: Vec<f64> = pts.iter().map(|s| s.d * s.d / s.elapsed).collect();
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("d²/(t−s) does not vary over the samples".into()));
    }
    let mut best: Option<DecayFit> = None;
    for &omega in omega_grid {
        let ys: Vec<f64> = pts.iter().map(|s| s.value.ln() - omega * s.elapsed).collect();
        let ybar = ys.iter().sum::<f64>() / m;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
        let syy: f64 = ys.iter().map(|y| (y - ybar).powi(2)).sum();
        let slope = sxy / sxx;
        let icpt = ybar - slope * xbar;
        let resid: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - icpt - slope * x).collect();
        let sse: f64 = resid.iter().map(|r| r * r).sum();
        let r2 = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
        let stderr = if pts.len() > 2 { (sse / (m - 2.0)).sqrt() } else { 0.0 };
        let lift = (resid.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - 3.0 * stderr).max(0.0);
        let c0 = if slope < 0.0 { -1.0 / (4.0 * slope) } else { f64::INFINITY };
        let fit = DecayFit { c: (icpt + lift).exp(), c0, omega, r2, slope, stderr };
        if best.is_none_or(|b| fit.r2 > b.r2) {
            best = Some(fit);
        }
    }
    Ok(best.expect("nonempty grid"))
}

/// `{0, P∞², 2P∞², …}` with `count` entries (just `{0}` when `P∞ = 0`).
pub fn default_omega_grid(coeffs: &CoefficientSet, count: usize) -> Vec<f64> {
    let p2 = coeffs.p_infinity().powi(2);
    if p2 == 0.0 {
        return vec![0.0];
    }
    (0..count.max(1)).map(|i| i as f64 * p2).collect()
}

fn check_pairs(grid: &SpaceTimeGrid, pairs: &[(usize, usize)]) -> Result<()> {
    for &(s, t) in pairs {
        if s >= grid.nt || t >= grid.nt || t <= s {
            return Err(Error::InvalidTimes(format!("pair (s,t) = ({s},{t}) needs s < t < Nt")));
        }
    }
    Ok(())
}

/// `max_ψ ‖e^{κ(t−s)}G_κ(t,s)ψ‖_{L²(E)} / ‖ψ‖_{L²(F)}` for random `ψ` supported in `F`.
fn profile_values(
    solver: &GreenSolver,
    e: &RegionMask,
    f: &RegionMask,
    pairs: &[(usize, usize)],
    probes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let g = solver.grid().clone();
    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &(s, _)) in pairs.iter().enumerate() {
        by_source.entry(s).or_default().push(i);
    }
    let jobs: Vec<(usize, usize)> = by_source.keys().flat_map(|&s| (0..probes).map(move |p| (s, p))).collect();
    let results = jobs
        .par_iter()
        .map(|&(s, p)| {
            let psi = f.random_probe(seed, rng::stream_id(s as u32, p as u32));
            let traj = solver.column(s, &psi)?;
            let base = f.norm_on(&psi);
            Ok(((s, p), (traj, base)))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let kappa = solver.kappa();
    Ok(pairs
        .iter()
        .map(|&(s, t)| {
            (0..probes)
                .map(|p| {
                    let (traj, base) = &results[&(s, p)];
                    let amp = (kappa * (t - s) as f64 * g.dt()).exp();
                    amp * e.norm_on_slice(traj.data.slice_data(t)) / base
                })
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Off-diagonal profile of `Γ(t,s)` from `F` to `E` and its decay fit.
pub fn offdiagonal_profile(
    coeffs: &CoefficientSet,
    cfg: &SolverConfig,
    e: &RegionMask,
    f: &RegionMask,
    pairs: &[(usize, usize)],
    probes: usize,
    seed: u64,
    omega_grid: &[f64],
) -> Result<OffDiagProfile> {
    let g = coeffs.grid();
    if probes < 5 {
        return Err(Error::InvalidArgument("at least five probes per pair are required".into()));
    }
    check_pairs(g, pairs)?;
    let d = e.distance(f)?;
    if d > g.lx / 4.0 {
        return Err(Error::Geometry(format!("d(E,F) = {d:.4} exceeds Lx/4 = {:.4}; periodic images interfere", g.lx / 4.0)));
    }
    let solver = GreenSolver::new(coeffs, cfg, Direction::Forward)?;
    let values = profile_values(&solver, e, f, pairs, probes, seed)?;
    let samples: Vec<OffDiagSample> = pairs
        .iter()
        .zip(values)
        .map(|(&(s, t), value)| OffDiagSample { s, t, elapsed: (t - s) as f64 * g.dt(), d, value })
        .collect();
    let fit = if d == 0.0 { None } else { Some(fit_decay(&samples, omega_grid)?) };
    Ok(OffDiagProfile { samples, fit })
}

/// Outcome of the conjugated bound `‖e^hΓ(t,s)ψ‖ ≤ C e^{ω(t−s)} e^{c₀γ²(t−s)} ‖e^hψ‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaviesReport {
    pub gamma: f64,
    /// Smallest `κ` (on a bisection grid) for which the conjugated certificate passes.
    pub required_kappa: f64,
    pub kappa_used: f64,
    /// `max observed/bound` over pairs; pairs with `γ√(t−s) > 4` are skipped.
    pub max_ratio: f64,
    pub skipped: usize,
}

/// Minimal coercivity ratio over single Fourier modes `e^{i(τt+ξ·x)}` in a low band.
/// Random probes average over modes and can miss one unstable mode; pure
/// modes are exact probes for constant coefficients.
fn mode_ratio(coeffs: &CoefficientSet, kappa: f64, delta: f64, mode: NormMode) -> f64 {
    let g = coeffs.grid();
    let band: i64 = match g.n {
        1 => 4,
        2 => 2,
        _ => 1,
    };
    let op = crate::solver::SpaceTimeOperator::forward(coeffs, kappa);
    let ns = g.spatial_len();
    let mut jobs = Vec::new();
    for k in 0..g.nt {
        if crate::lattice::signed_bin(k, g.nt).abs() > band {
            continue;
        }
        for ix in 0..ns {
            let idx = g.unravel(ix);
            if (0..g.n).all(|c| crate::lattice::signed_bin(idx[c], g.nx).abs() <= band) && !(k == 0 && ix == 0) {
                jobs.push(k * ns + ix);
            }
        }
    }
    jobs.par_iter()
        .map(|&p| {
            let mut hat = vec![C64::new(0.0, 0.0); g.len()];
            hat[p] = C64::new(1.0, 0.0);
            crate::operator::coercivity_ratio_hat(&op, &hat, delta, mode)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Smallest `κ ≥ κ_min` (to relative accuracy 1e-3) for which both the random
/// certificate and single-mode probes clear the coercivity threshold.
pub fn required_kappa(coeffs: &CoefficientSet, cfg: &SolverConfig, kappa_min: f64) -> Result<f64> {
    let threshold = cfg.mode.default_threshold(cfg.delta);
    let pass = |kappa: f64| -> Result<bool> {
        let opts = CertificateOptions {
            kappa,
            delta: cfg.delta,
            probes: cfg.certificate_probes,
            seed: cfg.seed,
            mode: cfg.mode,
            threshold: None,
        };
        Ok(coercivity_certificate_with(coeffs, &opts)?.pass && mode_ratio(coeffs, kappa, cfg.delta, cfg.mode) >= threshold)
    };
    if pass(kappa_min)? {
        return Ok(kappa_min);
    }
    let mut lo = kappa_min;
    let mut hi = kappa_min.max(0.5) * 2.0;
    while !pass(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::NonCausal("no kappa below 1e8 passes the certificate".into()));
        }
    }
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if pass(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Weight `h` for the Davies check, either sampled or with an exact gradient.
#[derive(Debug, Clone)]
pub enum DaviesWeight {
    Sampled(SpatialField),
    /// Affine `h`: constant gradient `∇h`.
    Affine(Vec<f64>),
}

impl DaviesWeight {
    fn gamma(&self) -> f64 {
        match self {
            Self::Affine(v) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Self::Sampled(h) => {
                let grads = lattice::spatial_gradient(h);
                (0..h.data().len())
                    .map(|i| grads.iter().map(|gc| gc.data()[i].re.powi(2)).sum::<f64>().sqrt())
                    .fold(0.0, f64::max)
            }
        }
    }

    fn conjugate(&self, coeffs: &CoefficientSet) -> Result<CoefficientSet> {
        match self {
            Self::Sampled(h) => davies_conjugate(coeffs, h),
            Self::Affine(v) => {
                if v.len() != coeffs.grid().n {
                    return Err(Error::Shape("gradient length differs from n".into()));
                }
                let grad: Vec<CoefficientField> = v.iter().map(|&z| CoefficientField::real(z)).collect();
                davies_conjugate_grad(coeffs, &grad)
            }
        }
    }
}

/// Checks the conjugated uniform bound with the measured decay constants.
///
/// `Γ` is independent of the damping, so the conjugated columns are computed
/// with `max(κ, required κ)`.
pub fn davies_bound_check(
    coeffs: &CoefficientSet,
    cfg: &SolverConfig,
    h: &DaviesWeight,
    pairs: &[(usize, usize)],
    fit: &DecayFit,
    probes: usize,
    seed: u64,
) -> Result<DaviesReport> {
    let g = coeffs.grid();
    check_pairs(g, pairs)?;
    let gamma = h.gamma();
    let conj = h.conjugate(coeffs)?;
    let needed = required_kappa(&conj, cfg, 0.0)?;
    let kappa_used = cfg.kappa.max(needed);
    let solver = GreenSolver::new(&conj, &(*cfg).with_kappa(kappa_used), Direction::Forward)?;
    let kept: Vec<(usize, usize)> =
        pairs.iter().cloned().filter(|&(s, t)| gamma * ((t - s) as f64 * g.dt()).sqrt() <= 4.0).collect();
    let skipped = pairs.len() - kept.len();
    let everywhere = RegionMask::new(g, vec![true; g.spatial_len()])?;
    let values = if kept.is_empty() {
        Vec::new()
    } else {
        profile_values(&solver, &everywhere, &everywhere, &kept, probes.max(1), seed)?
    };
    let max_ratio = kept
        .iter()
        .zip(values)
        .map(|(&(s, t), v)| {
            let el = (t - s) as f64 * g.dt();
            v / (fit.c * ((fit.omega + fit.c0 * gamma * gamma) * el).exp())
        })
        .fold(0.0, f64::max);
    Ok(DaviesReport { gamma, required_kappa: needed, kappa_used, max_ratio, skipped })
}

/// Constants entering the pointwise Gaussian upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBoundParams {
    pub n: usize,
    /// Local-boundedness constant.
    pub b: f64,
    pub c: f64,
    pub c0: f64,
    pub omega: f64,
    /// Local-boundedness scale.
    pub rho: f64,
    pub mu: f64,
}

impl GaussianBoundParams {
    /// Fills in `μ = (32πc₀)^{n/2} 2^{n/2} e^{2/c₀} (2^{1+n/2} B C)²`.
    pub fn new(n: usize, b: f64, c: f64, c0: f64, omega: f64, rho: f64) -> Result<Self> {
        if !(b > 0.0 && c > 0.0 && c0 > 0.0 && rho > 0.0) {
            return Err(Error::InvalidArgument("B, C, c0 and rho must be positive".into()));
        }
        let nh = n as f64 / 2.0;
        let mu = (32.0 * std::f64::consts::PI * c0).powf(nh)
            * 2f64.powf(nh)
            * (2.0 / c0).exp()
            * (2f64.powf(1.0 + nh) * b * c).powi(2);
        Ok(Self { n, b, c, c0, omega, rho, mu })
    }

    /// `k` with `kρ² ≤ t−s < (k+1)ρ²`.
    pub fn steps(&self, elapsed: f64) -> u32 {
        (elapsed / (self.rho * self.rho)).floor().max(0.0) as u32
    }

    /// `μ^{k+1}/(16πc₀(t−s))^{n/2} · e^{−|x−y|²/16c₀(t−s) + ω(t−s)}`.
    pub fn bound(&self, elapsed: f64, dist: f64) -> f64 {
        let k = self.steps(elapsed) as i32;
        // log form keeps μ^{k+1} from overflowing before the Gaussian factor acts
        let log = (k + 1) as f64 * self.mu.ln()
            - (self.n as f64 / 2.0) * (16.0 * std::f64::consts::PI * self.c0 * elapsed).ln()
            - dist * dist / (16.0 * self.c0 * elapsed)
            + self.omega * elapsed;
        log.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianRow {
    pub t: f64,
    pub s: f64,
    pub x: usize,
    pub y: usize,
    pub abs_kernel: f64,
    pub bound: f64,
    /// `bound / (|kernel| − noise)₊`; at least one means the bound holds.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianReport {
    pub min_ratio: f64,
    pub violations: usize,
    pub rows: Vec<GaussianRow>,
}

/// Evaluates the Gaussian bound on every kernel entry of the stack.
///
/// `noise` is an absolute kernel floor (solver and discretization error);
/// only the part of `|Γ|` above it has to be dominated.
pub fn gaussian_bound_check(stack: &[PropagatorMatrix], params: &GaussianBoundParams, noise: f64) -> Result<GaussianReport> {
    let mut rows = Vec::new();
    for m in stack {
        let el = m.elapsed();
        if !(el > 0.0) {
            return Err(Error::InvalidTimes(format!("kernel at t−s = {el} is not forward in time")));
        }
        if m.grid.n != params.n {
            return Err(Error::Shape("kernel dimension differs from the bound parameters".into()));
        }
        let ns = m.grid.spatial_len();
        let fundamental = m.to_kind(crate::green::PropagatorKind::Fundamental);
        let block: Vec<GaussianRow> = (0..ns * ns)
            .into_par_iter()
            .map(|p| {
                let (x, y) = (p / ns, p % ns);
                let abs_kernel = fundamental.kernel(x, y).norm();
                let bound = params.bound(el, m.grid.torus_distance(x, y));
                let excess = (abs_kernel - noise).max(0.0);
                let ratio = if excess > 0.0 { bound / excess } else { f64::INFINITY };
                GaussianRow { t: m.target_time(), s: m.source_time(), x, y, abs_kernel, bound, ratio }
            })
            .collect();
        rows.extend(block);
    }
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let violations = rows.iter().filter(|r| r.ratio < 1.0).count();
    Ok(GaussianReport { min_ratio, violations, rows })
}

/// Measured local-boundedness constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalBound {
    pub b: f64,
    pub used: usize,
    pub skipped: usize,
}

/// `max (sup_{B(x,r)}|u(t)|² · r^{n+2} / ∬_{Q_{2r}(t,x)}|u|²)^{1/2}` over the
/// given `(time slice, spatial index)` centers. `Q_{2r}` is the backward
/// cylinder `(t−4r², t] × B(x,2r)`; cylinders that wrap past slice 0 or
/// contain a slice in `guard` are skipped.
pub fn measure_local_bound(u: &Field, r: f64, centers: &[(usize, usize)], guard: &[usize]) -> Result<LocalBound> {
    let g = u.grid();
    if r < 2.0 * g.dx() || r * r < 2.0 * g.dt() {
        return Err(Error::InvalidArgument(format!(
            "radius {r} below the grid resolution (needs r ≥ 2dx = {}, r² ≥ 2dt = {})",
            2.0 * g.dx(),
            2.0 * g.dt()
        )));
    }
    let ns = g.spatial_len();
    let depth = (4.0 * r * r / g.dt()).ceil() as usize;
    let results: Vec<Option<f64>> = centers
        .par_iter()
        .map(|&(k, x)| {
            if k >= g.nt || x >= ns || k + 1 < depth || guard.iter().any(|&s| s + depth > k && s <= k) {
                return None;
            }
            let first = k + 1 - depth;
            let mut sup = 0.0f64;
            let mut mass = 0.0;
            for ix in 0..ns {
                let d = g.torus_distance(x, ix);
                if d <= r + 1e-12 {
                    sup = sup.max(u.slice_data(k)[ix].norm_sqr());
                }
                if d <= 2.0 * r + 1e-12 {
                    mass += (first..=k).map(|kk| u.slice_data(kk)[ix].norm_sqr()).sum::<f64>();
                }
            }
            mass *= g.cell_volume();
            if mass == 0.0 {
                return None;
            }
            Some((sup * r.powi(g.n as i32 + 2) / mass).sqrt())
        })
        .collect();
    let used = results.iter().filter(|v| v.is_some()).count();
    if used == 0 {
        return Err(Error::Geometry("every local-boundedness center was skipped".into()));
    }
    Ok(LocalBound { b: results.iter().flatten().cloned().fold(0.0, f64::max), used, skipped: centers.len() - used })
}

/// `min(|x − x_c|^{-2}, M)` with `x_c` the box center.
pub fn coulomb_profile(grid: &SpaceTimeGrid, cap: f64) -> Vec<f64> {
    let half = grid.lx / 2.0;
    (0..grid.spatial_len())
        .map(|ix| {
            let p = grid.point(ix);
            let r2: f64 = p[..grid.n].iter().map(|x| (x - half).powi(2)).sum();
            if r2 == 0.0 {
                cap
            } else {
                (1.0 / r2).min(cap)
            }
        })
        .collect()
}

/// Hardy quotients `q(u) = ⟨V₀u,u⟩/‖∇u‖²` of a probe set for `V₀ = min(|x|^{-2}, M)`.
///
/// For `L = −Δ + cV₀`, `Re⟪Lu,u⟫/‖∇u‖² = 1 + Re c·q(u)`, so the minimal ratio
/// over the set is `min_i (1 + Re c·q_i)`, non-decreasing in `Re c`.
#[derive(Debug, Clone, PartialEq)]
pub struct HardyProbeSet {
    pub quotients: Vec<f64>,
    /// Top Ritz value of the discrete Hardy quotient.
    pub q_max: f64,
}

fn lanczos_top(apply: impl Fn(&[f64]) -> Vec<f64>, dim: usize, start: Vec<f64>, steps: usize) -> (f64, Vec<f64>) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let nrm = dot(&start, &start).sqrt();
    let mut v: Vec<f64> = start.iter().map(|x| x / nrm).collect();
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    for _ in 0..steps.min(dim) {
        let mut w = apply(&v);
        let a = dot(&w, &v);
        alpha.push(a);
        basis.push(v.clone());
        // full reorthogonalization
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = dot(&w, &w).sqrt();
        if b < 1e-12 {
            break;
        }
        beta.push(b);
        v = w.iter().map(|x| x / b).collect();
    }
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j || j + 1 == i {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let (top, &val) = eig.eigenvalues.iter().enumerate().fold((0, &f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let mut vec = vec![0.0; dim];
    for (j, q) in basis.iter().enumerate() {
        let c = eig.eigenvectors[(j, top)];
        vec.iter_mut().zip(q).for_each(|(x, y)| *x += c * y);
    }
    (val, vec)
}

impl HardyProbeSet {
    /// Random band-limited probes plus a Lanczos near-optimizer of the quotient.
    pub fn new(grid: &SpaceTimeGrid, cap: f64, probes: usize, seed: u64) -> Result<Self> {
        let ns = grid.spatial_len();
        let v0 = coulomb_profile(grid, cap);
        let xi2: Vec<f64> = (0..ns).map(|ix| grid.xi_sq(ix)).collect();
        let cell = grid.space_cell();
        // K = (−Δ)^{-1/2} V₀ (−Δ)^{-1/2} on mean-zero real fields
        let half_inv = |w: &[f64], power: f64| -> Vec<f64> {
            let mut z: Vec<C64> = w.iter().map(|&x| C64::new(x, 0.0)).collect();
            lattice::dft_space(grid, &mut z, false);
            z.iter_mut().zip(&xi2).for_each(|(c, &k)| *c = if k == 0.0 { C64::new(0.0, 0.0) } else { *c * k.powf(power) });
            lattice::dft_space(grid, &mut z, true);
            z.into_iter().map(|c| c.re).collect()
        };
        let apply = |w: &[f64]| {
            let a = half_inv(w, -0.5);
            let b: Vec<f64> = a.iter().zip(&v0).map(|(x, v)| x * v).collect();
            half_inv(&b, -0.5)
        };
        let start = half_inv(&v0, 0.0);
        let (q_max, w) = lanczos_top(apply, ns, start, 80);
        let optimizer = half_inv(&w, -0.5);
        let quotient = |u: &[C64]| -> f64 {
            let psi = SpatialField::new(grid, u.to_vec()).expect("finite");
            let grad: f64 = lattice::spatial_gradient(&psi).iter().map(|gc| gc.norm().powi(2)).sum();
            let pot: f64 = u.iter().zip(&v0).map(|(z, v)| v * z.norm_sqr()).sum::<f64>() * cell;
            pot / grad
        };
        let mut quotients: Vec<f64> = (0..probes)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(seed, rng::stream_id(0xC0u32, i as u32));
                let kx = (grid.nx / 4) as i64;
                let mut hat = vec![C64::new(0.0, 0.0); ns];
                for (ix, h) in hat.iter_mut().enumerate().skip(1) {
                    let idx = grid.unravel(ix);
                    if (0..grid.n).all(|c| lattice::signed_bin(idx[c], grid.nx).abs() <= kx) {
                        *h = C64::new(r.gen::<f64>() - 0.5, r.gen::<f64>() - 0.5);
                    }
                }
                lattice::dft_space(grid, &mut hat, true);
                quotient(&hat)
            })
            .collect();
        let opt: Vec<C64> = optimizer.iter().map(|&x| C64::new(x, 0.0)).collect();
        quotients.push(quotient(&opt));
        Ok(Self { quotients, q_max })
    }

    /// `min_i (1 + Re c·q_i)`.
    pub fn ratio(&self, re_c: f64) -> f64 {
        self.quotients.iter().map(|q| 1.0 + re_c * q).fold(f64::INFINITY, f64::min)
    }

    /// Strength at which the ratio changes sign, `−1/max q_i`.
    pub fn threshold(&self) -> f64 {
        -1.0 / self.quotients.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoulombReport {
    pub re_c: f64,
    pub im_c: f64,
    pub ratio: f64,
    /// Lower-bound certificate: `Re⟪Lu,u⟫ ≥ ratio·‖∇u‖²` with `ratio > 0` on every probe.
    pub pass: bool,
}

/// Coercivity ratio of `−Δ + c·min(|x|^{-2}, M)` on a three-dimensional box.
pub fn coulomb_scenario(grid: &SpaceTimeGrid, c: C64, cap: f64, probes: usize, seed: u64) -> Result<CoulombReport> {
    Ok(coulomb_sweep(grid, &[c.re], c.im, cap, probes, seed)?.remove(0))
}

/// [`coulomb_scenario`] over several `Re c` with a shared probe set.
pub fn coulomb_sweep(grid: &SpaceTimeGrid, re_c: &[f64], im_c: f64, cap: f64, probes: usize, seed: u64) -> Result<Vec<CoulombReport>> {
    if grid.n != 3 {
        return Err(Error::Unsupported(format!("the Coulomb scenario needs n = 3, got n = {}", grid.n)));
    }
    if !(cap > 0.0) {
        return Err(Error::InvalidArgument("regularization M must be positive".into()));
    }
    let set = HardyProbeSet::new(grid, cap, probes, seed)?;
    Ok(re_c
        .iter()
        .map(|&rc| {
            let ratio = set.ratio(rc);
            CoulombReport { re_c: rc, im_c, ratio, pass: ratio > 0.0 }
        })
        .collect())
}

/// The coefficient set `A = Id`, `a0 = c·min(|x|^{-2}, M)`.
pub fn coulomb_coefficients(grid: &SpaceTimeGrid, c: C64, cap: f64) -> CoefficientSet {
    let mut set = CoefficientSet::identity(grid);
    set.a0 = CoefficientField::Spatial(coulomb_profile(grid, cap).into_iter().map(|v| c * v).collect());
    set
}

/// `NormMode` used by the off-diagonal and Gaussian suites.
pub const ESTIMATE_MODE: NormMode = NormMode::Inhomogeneous;
