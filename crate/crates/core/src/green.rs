//! Green operators from Dirac-in-time data, fundamental solutions, their
//! identity checks and the Cauchy problem.
//!
//! A column `(H+κ)u = δ_s ⊗ ψ` is split as `u = u₀ + u₁ + u₂ + v`. The parts
//! `u_k` solve mean-coefficient equations exactly in continuous time, mode by
//! mode in space: `u₀` carries the jump at `s` without Gibbs ringing, `u₁` and
//! `u₂` absorb the jumps of the remaining data and of its time derivative. The
//! remainder `v` goes to the variational solver with data that is `C¹` across `s`.

use crate::error::{Error, Result};
use crate::lattice::{dft_space, Field, SpaceTimeGrid, SpatialField};
use crate::operator::{apply_l, CoefficientSet};
use crate::rng;
use crate::solver::{Direction, SolveReport, SolverConfig, VariationalSolver};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagatorKind {
    /// `G_κ(t,s)`
    Green,
    /// `Γ(t,s) = e^{κ(t−s)} G_κ(t,s)`
    Fundamental,
}

/// Orbit `t ↦ u(t)` of one Green column.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub source: usize,
    pub direction: Direction,
    pub kappa: f64,
    pub psi: SpatialField,
    /// Slice at the source holds the midpoint of the two one-sided values.
    pub data: Field,
    /// Slice one step after the source.
    pub plus: SpatialField,
    /// Slice one step before the source.
    pub minus: SpatialField,
    /// Exact one-sided value at the source on the side the flow moves into.
    pub onset: SpatialField,
    pub report: SolveReport,
}

/// `Π⁺ψ` and `Π⁻ψ` read from the slices adjacent to the source.
pub fn pi_limits(traj: &Trajectory) -> (SpatialField, SpatialField) {
    (traj.plus.clone(), traj.minus.clone())
}

/// `‖Π⁺ψ − Π⁻ψ − σψ‖ / ‖ψ‖` with `σ = +1` forward and `−1` backward.
pub fn jump_defect(traj: &Trajectory) -> f64 {
    let pn = traj.psi.norm();
    if pn == 0.0 {
        return 0.0;
    }
    let sigma = traj.direction.time_sign();
    let d = &(&traj.plus - &traj.minus) - &traj.psi.scaled(C64::new(sigma, 0.0));
    d.norm() / pn
}

/// Start of the causality window: the last tenth of the period before the source.
fn causality_window(grid: &SpaceTimeGrid) -> usize {
    ((grid.nt as f64 * 0.1).round() as usize).max(2)
}

/// `max ‖u(t)‖/‖ψ‖` over `t ∈ [s − 0.1·Lt, s − 2dt]` (mirrored for backward flows).
pub fn causality_defect(traj: &Trajectory) -> f64 {
    let g = traj.data.grid();
    let pn = traj.psi.norm();
    if pn == 0.0 {
        return 0.0;
    }
    let w = causality_window(g);
    let mut worst = 0.0f64;
    for lag in 2..=w {
        let k = match traj.direction {
            Direction::Forward => (traj.source + g.nt - lag) % g.nt,
            Direction::Backward => (traj.source + lag) % g.nt,
        };
        let nrm = traj.data.slice_data(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * g.space_cell().sqrt();
        worst = worst.max(nrm / pn);
    }
    worst
}

/// Threshold paired with [`causality_defect`]: `max(e^{−0.9κLt}, 10·tol)`.
pub fn causality_threshold(grid: &SpaceTimeGrid, kappa: f64, tol: f64) -> f64 {
    (-0.9 * kappa * grid.lt).exp().max(10.0 * tol)
}

fn cexpm1(z: C64) -> C64 {
    if z.norm() < 1e-5 {
        z + z * z / 2.0 + z * z * z / 6.0
    } else {
        z.exp() - 1.0
    }
}

/// Prepared Green-column solver for one operator and direction.
#[derive(Debug, Clone)]
pub struct GreenSolver {
    solver: VariationalSolver,
    /// Spatial symbol of the mean-coefficient operator, without `κ`.
    mean_symbol: Vec<C64>,
}

impl GreenSolver {
    pub fn new(coeffs: &CoefficientSet, cfg: &SolverConfig, direction: Direction) -> Result<Self> {
        let solver = VariationalSolver::new(coeffs, cfg, direction)?;
        let g = coeffs.grid();
        let means = solver.operator().coefficients().means();
        let mean_symbol = (0..g.spatial_len()).map(|ix| means.spatial_symbol(&g.xi_vec(ix)[..g.n])).collect();
        Ok(Self { solver, mean_symbol })
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        self.solver.operator().grid()
    }

    pub fn direction(&self) -> Direction {
        self.solver.operator().direction()
    }

    pub fn config(&self) -> &SolverConfig {
        self.solver.config()
    }

    pub fn kappa(&self) -> f64 {
        self.solver.config().kappa
    }

    /// Periodic solutions on lags `x = l·dt` of `y₀' + m y₀ = δ` (midpoint at
    /// lag 0), `y₁' + m y₁ = y₀` and `y₂' + m y₂ = y₁`, plus `y₀(0⁺)`.
    fn kernel_tables(&self, ix: usize) -> ([Vec<C64>; 3], C64) {
        let g = self.grid();
        let (nt, dt, lt) = (g.nt, g.dt(), g.lt);
        let m = self.mean_symbol[ix] + self.kappa();
        let xs = (0..nt).map(|l| l as f64 * dt);
        if (m * lt).norm() < 1e-14 {
            // zero-mean periodic profiles of the undamped zero mode
            let mut y0: Vec<C64> = xs.clone().map(|x| C64::new(0.5 - x / lt, 0.0)).collect();
            let y1 = xs.clone().map(|x| C64::new(x / 2.0 - x * x / (2.0 * lt) - lt / 12.0, 0.0)).collect();
            let y2 = xs.map(|x| C64::new(x * x / 4.0 - x * x * x / (6.0 * lt) - lt * x / 12.0, 0.0)).collect();
            y0[0] = ZERO;
            return ([y0, y1, y2], C64::new(0.5, 0.0));
        }
        // y_k = e^{−mx} P_k(x) with P_k' = P_{k−1}; periodicity fixes P_k(0) = q∫P_{k−1}/(1−q)
        let omq = -cexpm1(-m * lt);
        let q = 1.0 - omq;
        let c1 = lt * q / (omq * omq);
        let c2 = q * (lt * lt / (2.0 * omq) + c1 * lt) / omq;
        let mut y0: Vec<C64> = xs.clone().map(|x| (-m * x).exp() / omq).collect();
        let y1 = xs.clone().map(|x| (-m * x).exp() * (x / omq + c1)).collect();
        let y2 = xs.map(|x| (-m * x).exp() * (x * x / (2.0 * omq) + c1 * x + c2)).collect();
        let right = y0[0];
        y0[0] = 0.5 * (right + right * q);
        ([y0, y1, y2], right)
    }

    fn lag(&self, s: usize, k: usize) -> usize {
        match self.direction() {
            Direction::Forward => self.grid().forward_lag(s, k),
            Direction::Backward => self.grid().forward_lag(k, s),
        }
    }

    /// `M̄u` slice by slice.
    fn mean_apply(&self, u: &Field) -> Field {
        let g = self.grid();
        let ns = g.spatial_len();
        let mut d = u.data().to_vec();
        dft_space(g, &mut d, false);
        for chunk in d.chunks_mut(ns) {
            chunk.iter_mut().zip(&self.mean_symbol).for_each(|(z, m)| *z *= m);
        }
        dft_space(g, &mut d, true);
        Field::from_raw(g, d)
    }

    /// Solves `(σ∂t + L + κ)u = Σ δ_s ⊗ φ_s` as `u = u₀ + u₁ + u₂ + v`.
    ///
    /// `u₀` is the exact mean-operator response. `(M̄ − L)u₀` jumps by
    /// `J_s = (M̄ − L)φ_s` at each source; `u₁` is the exact mean-operator
    /// response to a forcing with the same jumps, and `u₂` does the same for
    /// the jump `K_s` of the time derivative, so the data left for the
    /// spectral solve of `v` is `C¹` in time. Returns `(u, gap, report)`
    /// where `gap` is the one-sided value minus the stored midpoint at the
    /// first source slice.
    fn respond(&self, sources: &[(usize, &SpatialField)]) -> Result<(Field, Vec<C64>, SolveReport)> {
        let g = self.grid().clone();
        let ns = g.spatial_len();
        let mut slices: Vec<usize> = Vec::new();
        let mut p = Field::zeros(&g);
        for (s, phi) in sources {
            if *s >= g.nt {
                return Err(Error::InvalidTimes(format!("source slice {s} outside 0..{}", g.nt)));
            }
            let pg = phi.grid();
            if pg.n != g.n || pg.nx != g.nx || pg.lx != g.lx {
                return Err(Error::GridMismatch);
            }
            if !slices.contains(s) {
                slices.push(*s);
            }
            p.slice_data_mut(*s).iter_mut().zip(phi.data()).for_each(|(a, b)| *a += b);
        }
        let coeffs = self.solver.operator().coefficients();
        let defect = |f: &Field| -> Result<Field> { Ok(&self.mean_apply(f) - &apply_l(coeffs, f)?) };
        let jump = defect(&p)?;
        // derivative jump of the remaining data: M̄J − DM̄φ + DJ + σ(∂tD)φ, D = M̄ − L
        let mut kink = &(&self.mean_apply(&jump) - &defect(&self.mean_apply(&p))?) + &defect(&jump)?;
        if !coeffs.is_time_independent() {
            let shifted = |by: usize| {
                let mut q = Field::zeros(&g);
                for (s, phi) in sources {
                    q.slice_data_mut((s + by) % g.nt).iter_mut().zip(phi.data()).for_each(|(a, b)| *a += b);
                }
                defect(&q)
            };
            let (ahead, behind) = (shifted(1)?, shifted(g.nt - 1)?);
            let w = C64::new(self.direction().time_sign() / (2.0 * g.dt()), 0.0);
            for &s in &slices {
                let (a, b) = (ahead.slice_data((s + 1) % g.nt), behind.slice_data((s + g.nt - 1) % g.nt));
                let out: Vec<C64> = a.iter().zip(b).map(|(x, y)| (x - y) * w).collect();
                kink.slice_data_mut(s).iter_mut().zip(out).for_each(|(z, d)| *z += d);
            }
        }
        let spectra = |f: &Field| -> Vec<Vec<C64>> {
            slices
                .iter()
                .map(|&s| {
                    let mut h = f.slice_data(s).to_vec();
                    dft_space(&g, &mut h, false);
                    h
                })
                .collect()
        };
        let (ph, jh, kh) = (spectra(&p), spectra(&jump), spectra(&kink));
        let mut base = vec![ZERO; g.len()];
        let mut rt = vec![ZERO; g.len()];
        let mut gap = vec![ZERO; ns];
        for ix in 0..ns {
            if ph.iter().all(|h| h[ix] == ZERO) {
                continue;
            }
            let ([y0, y1, y2], right) = self.kernel_tables(ix);
            for (i, &s) in slices.iter().enumerate() {
                let (a, j, kk) = (ph[i][ix], jh[i][ix], kh[i][ix]);
                if i == 0 {
                    gap[ix] = (right - y0[0]) * a;
                }
                for k in 0..g.nt {
                    let l = self.lag(s, k);
                    let at = k * ns + ix;
                    base[at] += y0[l] * a + y1[l] * j + y2[l] * kk;
                    rt[at] += y0[l] * j + y1[l] * kk;
                }
            }
        }
        for d in [&mut base, &mut rt, &mut gap] {
            dft_space(&g, d, true);
        }
        let base = Field::from_raw(&g, base);
        let r = &defect(&base)? - &Field::from_raw(&g, rt);
        let (v, report) = self.solver.solve(&r)?;
        if !report.converged {
            return Err(Error::NonConvergence { iterations: report.iterations, residual: report.residual });
        }
        Ok((&base + &v, gap, report))
    }

    /// Solves `(σ∂t + L + κ)u = δ_s ⊗ ψ`.
    pub fn column(&self, s: usize, psi: &SpatialField) -> Result<Trajectory> {
        let g = self.grid().clone();
        let (data, mut onset, report) = self.respond(&[(s, psi)])?;
        onset.iter_mut().zip(data.slice_data(s)).for_each(|(o, z)| *o += z);
        let plus = data.slice((s + 1) % g.nt);
        let minus = data.slice((s + g.nt - 1) % g.nt);
        Ok(Trajectory {
            source: s,
            direction: self.direction(),
            kappa: self.kappa(),
            psi: psi.clone(),
            data,
            plus,
            minus,
            onset: SpatialField::new(&g, onset)?,
            report,
        })
    }
}

/// Forward Green column of `∂t + L + κ` with source slice `s`.
pub fn green_column(coeffs: &CoefficientSet, cfg: &SolverConfig, s: usize, psi: &SpatialField) -> Result<Trajectory> {
    GreenSolver::new(coeffs, cfg, Direction::Forward)?.column(s, psi)
}

/// Dense spatial operator `Nxⁿ × Nxⁿ`; entries are kernel values times `dxⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorMatrix {
    pub source: usize,
    pub target: usize,
    pub kappa: f64,
    pub kind: PropagatorKind,
    pub direction: Direction,
    pub grid: SpaceTimeGrid,
    pub entries: DMatrix<C64>,
}

impl PropagatorMatrix {
    pub fn source_time(&self) -> f64 {
        self.grid.time(self.source)
    }

    pub fn target_time(&self) -> f64 {
        self.grid.time(self.target)
    }

    /// `σ(t − s)` in physical time, the elapsed time along the flow.
    pub fn elapsed(&self) -> f64 {
        let sigma = self.direction.time_sign();
        sigma * (self.target as f64 - self.source as f64) * self.grid.dt()
    }

    /// Operator 2-norm (largest singular value).
    pub fn operator_norm(&self) -> f64 {
        op_norm(&self.entries)
    }

    /// The same operator in the other normalization.
    pub fn to_kind(&self, kind: PropagatorKind) -> Self {
        let factor = match (self.kind, kind) {
            (a, b) if a == b => 1.0,
            (PropagatorKind::Green, PropagatorKind::Fundamental) => (self.kappa * self.elapsed()).exp(),
            _ => (-self.kappa * self.elapsed()).exp(),
        };
        let mut out = self.clone();
        out.kind = kind;
        out.entries *= C64::new(factor, 0.0);
        out
    }

    /// Kernel `Γ(t,x,s,y)` at lattice points.
    pub fn kernel(&self, x: usize, y: usize) -> C64 {
        self.entries[(x, y)] / self.grid.space_cell()
    }

    pub fn apply(&self, psi: &SpatialField) -> Result<SpatialField> {
        if psi.data().len() != self.entries.ncols() {
            return Err(Error::GridMismatch);
        }
        let v = nalgebra::DVector::from_column_slice(psi.data());
        let out = &self.entries * v;
        SpatialField::new(&self.grid, out.as_slice().to_vec())
    }
}

fn op_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Propagators from source `s` to every slice in `targets`, one column solve
/// per spatial basis vector.
pub fn propagator_stack(solver: &GreenSolver, s: usize, targets: &[usize], kind: PropagatorKind) -> Result<Vec<PropagatorMatrix>> {
    let g = solver.grid().clone();
    for &t in targets {
        if t == s {
            return Err(Error::InvalidTimes("t = s: the limits are one-sided, use the column limits".into()));
        }
        if t >= g.nt {
            return Err(Error::InvalidTimes(format!("target slice {t} outside 0..{}", g.nt)));
        }
    }
    let ns = g.spatial_len();
    let columns = (0..ns)
        .into_par_iter()
        .map(|j| {
            let traj = solver.column(s, &SpatialField::basis(&g, j))?;
            Ok(targets.iter().map(|&t| traj.data.slice_data(t).to_vec()).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<Vec<Vec<C64>>>>>()?;
    Ok(targets
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let entries = DMatrix::from_fn(ns, ns, |i, j| columns[j][ti][i]);
            let m = PropagatorMatrix {
                source: s,
                target: t,
                kappa: solver.kappa(),
                kind: PropagatorKind::Green,
                direction: solver.direction(),
                grid: g.clone(),
                entries,
            };
            m.to_kind(kind)
        })
        .collect())
}

/// Dense `G_κ(t,s)` (or `Γ(t,s)`) of the forward operator.
pub fn propagator(coeffs: &CoefficientSet, cfg: &SolverConfig, s: usize, t: usize, kind: PropagatorKind) -> Result<PropagatorMatrix> {
    let solver = GreenSolver::new(coeffs, cfg, Direction::Forward)?;
    Ok(propagator_stack(&solver, s, &[t], kind)?.remove(0))
}

fn same_family(a: &PropagatorMatrix, b: &PropagatorMatrix) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    if a.kappa != b.kappa || a.kind != b.kind {
        return Err(Error::InvalidArgument("propagators differ in kappa or kind".into()));
    }
    Ok(())
}

/// `‖G(t,s) − G(t,r)G(r,s)‖ / ‖G(t,s)‖`.
pub fn chapman_kolmogorov_defect(gts: &PropagatorMatrix, gtr: &PropagatorMatrix, grs: &PropagatorMatrix) -> Result<f64> {
    same_family(gts, gtr)?;
    same_family(gts, grs)?;
    let (s, r, t) = (grs.source, grs.target, gtr.target);
    if gtr.source != r || gts.source != s || gts.target != t {
        return Err(Error::InvalidTimes("propagators do not chain as (t,r)(r,s) = (t,s)".into()));
    }
    if !((s < r && r < t) || (t < r && r < s)) {
        return Err(Error::InvalidTimes(format!("r = {r} is not strictly between s = {s} and t = {t}")));
    }
    let prod = &gtr.entries * &grs.entries;
    let base = gts.operator_norm();
    if base == 0.0 {
        return Ok(op_norm(&prod));
    }
    Ok(op_norm(&(&gts.entries - prod)) / base)
}

/// `‖G(t,s) − G̃(s,t)^H‖ / ‖G(t,s)‖` for a forward and a backward propagator.
pub fn adjoint_defect(gts: &PropagatorMatrix, gst_adj: &PropagatorMatrix) -> Result<f64> {
    same_family(gts, gst_adj)?;
    if gts.direction != Direction::Forward || gst_adj.direction != Direction::Backward {
        return Err(Error::InvalidArgument("expected a forward and a backward propagator".into()));
    }
    if gts.source != gst_adj.target || gts.target != gst_adj.source {
        return Err(Error::InvalidTimes("propagator times are not transposed".into()));
    }
    let base = gts.operator_norm();
    let diff = &gts.entries - gst_adj.entries.adjoint();
    Ok(if base == 0.0 { op_norm(&diff) } else { op_norm(&diff) / base })
}

/// Randomized sketch `Y = GΩ` of a propagator, for grids too large to assemble.
#[derive(Debug, Clone)]
pub struct PropagatorSketch {
    pub source: usize,
    pub target: usize,
    pub probes: Vec<SpatialField>,
    pub images: Vec<SpatialField>,
}

fn gaussian_probe(grid: &SpaceTimeGrid, seed: u64, id: u64) -> SpatialField {
    let mut r = rng::stream(seed, id);
    let data = (0..grid.spatial_len())
        .map(|_| C64::new(StandardNormal.sample(&mut r), StandardNormal.sample(&mut r)))
        .collect();
    SpatialField::new(grid, data).expect("finite probe")
}

fn probe_set(grid: &SpaceTimeGrid, count: usize, seed: u64) -> Vec<SpatialField> {
    (0..count).map(|i| gaussian_probe(grid, seed, rng::stream_id(0x5e7c, i as u32))).collect()
}

fn images_at(solver: &GreenSolver, s: usize, probes: &[SpatialField], targets: &[usize]) -> Result<Vec<Vec<SpatialField>>> {
    probes
        .par_iter()
        .map(|p| {
            let traj = solver.column(s, p)?;
            Ok(targets.iter().map(|&t| traj.data.slice(t)).collect())
        })
        .collect()
}

/// Sketches of `G(t,s)` for every target slice from `count` Gaussian probes.
pub fn sketch_stack(solver: &GreenSolver, s: usize, targets: &[usize], count: usize, seed: u64) -> Result<Vec<PropagatorSketch>> {
    if count == 0 {
        return Err(Error::InvalidArgument("a sketch needs at least one probe".into()));
    }
    if targets.contains(&s) {
        return Err(Error::InvalidTimes("t = s: the limits are one-sided".into()));
    }
    let probes = probe_set(solver.grid(), count, seed);
    let imgs = images_at(solver, s, &probes, targets)?;
    Ok(targets
        .iter()
        .enumerate()
        .map(|(ti, &t)| PropagatorSketch {
            source: s,
            target: t,
            probes: probes.clone(),
            images: imgs.iter().map(|v| v[ti].clone()).collect(),
        })
        .collect())
}

/// Sketch estimate of the Chapman–Kolmogorov defect: `max_ω ‖G(t,s)ω − G(t,r)G(r,s)ω‖ / ‖G(t,s)ω‖`.
pub fn sketch_chapman_kolmogorov(solver: &GreenSolver, s: usize, r: usize, t: usize, count: usize, seed: u64) -> Result<f64> {
    if !((s < r && r < t) || (t < r && r < s)) {
        return Err(Error::InvalidTimes(format!("r = {r} is not strictly between s = {s} and t = {t}")));
    }
    let probes = probe_set(solver.grid(), count.max(1), seed);
    let direct = images_at(solver, s, &probes, &[r, t])?;
    let mids: Vec<SpatialField> = direct.iter().map(|v| v[0].clone()).collect();
    let composed = images_at(solver, r, &mids, &[t])?;
    let mut worst = 0.0f64;
    for (d, c) in direct.iter().zip(&composed) {
        let base = d[1].norm();
        let diff = (&d[1] - &c[0]).norm();
        worst = worst.max(if base == 0.0 { diff } else { diff / base });
    }
    Ok(worst)
}

/// Sketch estimate of the adjointness defect: `max |⟨G(t,s)ω,η⟩ − ⟨ω,G̃(s,t)η⟩| / (‖G(t,s)ω‖‖η‖)`.
pub fn sketch_adjoint(forward: &GreenSolver, backward: &GreenSolver, s: usize, t: usize, count: usize, seed: u64) -> Result<f64> {
    if forward.direction() != Direction::Forward || backward.direction() != Direction::Backward {
        return Err(Error::InvalidArgument("expected a forward and a backward solver".into()));
    }
    if forward.kappa() != backward.kappa() || forward.grid() != backward.grid() {
        return Err(Error::InvalidArgument("solvers differ in kappa or grid".into()));
    }
    let omegas = probe_set(forward.grid(), count.max(1), seed);
    let etas = probe_set(forward.grid(), count.max(1), seed ^ 0x9e37_79b9_7f4a_7c15);
    let fw = images_at(forward, s, &omegas, &[t])?;
    let bw = images_at(backward, t, &etas, &[s])?;
    let mut worst = 0.0f64;
    for (i, o) in omegas.iter().enumerate() {
        let a = fw[i][0].inner(&etas[i])?;
        let b = o.inner(&bw[i][0])?;
        let scale = fw[i][0].norm() * etas[i].norm();
        worst = worst.max((a - b).norm() / scale.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Solution of the Cauchy problem on `[0, T]`, one slice per grid time.
#[derive(Debug, Clone)]
pub struct CauchySolution {
    pub horizon: usize,
    pub kappa: f64,
    /// `u(t_k)` for `k = 0..=horizon`; `u(0)` is the right limit at the initial time.
    pub slices: Vec<SpatialField>,
    pub residual: f64,
}

/// Data `ψ`, `F`, `g`, `h` of `∂t u + Lu = −div F + g + h`, `u(0) = ψ`.
#[derive(Debug, Clone, Copy)]
pub struct CauchyData<'a> {
    pub psi: &'a SpatialField,
    pub flux: &'a [Field],
    pub g: &'a Field,
    pub h: &'a Field,
}

fn check_cauchy(coeffs: &CoefficientSet, data: &CauchyData, horizon: usize, cfg: &SolverConfig) -> Result<()> {
    let g = coeffs.grid();
    if horizon == 0 || horizon >= g.nt {
        return Err(Error::InvalidTimes(format!("horizon {horizon} outside 1..{}", g.nt)));
    }
    let budget = cfg.kappa * (g.lt - horizon as f64 * g.dt());
    if budget < (1.0 / cfg.tol).ln() {
        return Err(Error::NonCausal(format!(
            "kappa (Lt - T) = {budget:.3} < ln(1/tol) = {:.3}: the periodic wrap is not damped",
            (1.0 / cfg.tol).ln()
        )));
    }
    if data.flux.len() != g.n {
        return Err(Error::Shape(format!("flux has {} components, expected {}", data.flux.len(), g.n)));
    }
    let ns = g.spatial_len();
    for f in data.flux.iter().chain([data.g, data.h]) {
        if f.grid() != g {
            return Err(Error::GridMismatch);
        }
        let scale = f.max_abs();
        let outside = f.data()[(horizon + 1) * ns..].iter().any(|z| z.norm() > 1e-14 * scale.max(1.0));
        if outside {
            return Err(Error::InvalidArgument("Cauchy data must vanish after the horizon".into()));
        }
    }
    Ok(())
}

fn forcing(data: &CauchyData) -> Result<Field> {
    let mut f = crate::lattice::divergence(data.flux)?.scaled(C64::new(-1.0, 0.0));
    f.axpy(C64::new(1.0, 0.0), data.g)?;
    f.axpy(C64::new(1.0, 0.0), data.h)?;
    Ok(f)
}

fn cauchy_solver(coeffs: &CoefficientSet, horizon: usize, cfg: &SolverConfig) -> Result<GreenSolver> {
    let extended = coeffs.extended_outside(0..=horizon);
    GreenSolver::new(&extended, cfg, Direction::Forward).map_err(|e| match e {
        Error::CertificateFailed { min_ratio, threshold } => Error::NonCausal(format!(
            "coercivity certificate failed (min ratio {min_ratio:.4} < {threshold:.4}); raise kappa"
        )),
        other => other,
    })
}

/// Solves the Cauchy problem by one global damped solve: coefficients are
/// extended by `A = Id` and zero lower order outside `[0,T]`, the equation
/// for `w = e^{−κt}u` with data `δ₀ ⊗ ψ + e^{−κt}f` is solved and
/// `u = e^{κt}w` is restricted to `[0,T]`. The forcing enters as
/// `Σ_s dt·δ_s ⊗ f(s)`, so a forcing switched on at `t₀` leaves no trace before `t₀`.
pub fn solve_cauchy(coeffs: &CoefficientSet, data: &CauchyData, horizon: usize, cfg: &SolverConfig) -> Result<CauchySolution> {
    check_cauchy(coeffs, data, horizon, cfg)?;
    let g = coeffs.grid();
    let solver = cauchy_solver(coeffs, horizon, cfg)?;
    let f = forcing(data)?;
    let weighted: Vec<(usize, SpatialField)> = (0..=horizon)
        .map(|s| (s, f.slice(s).scaled(C64::new(g.dt() * (-cfg.kappa * g.time(s)).exp(), 0.0))))
        .filter(|(_, phi)| phi.max_abs() > 0.0)
        .collect();
    let mut sources: Vec<(usize, &SpatialField)> = vec![(0, data.psi)];
    sources.extend(weighted.iter().map(|(s, phi)| (*s, phi)));
    let (w, onset, report) = solver.respond(&sources)?;
    let mut slices = Vec::with_capacity(horizon + 1);
    let mut first = w.slice(0);
    // the stored slice holds the midpoint of the initial jump; report its right limit
    first.axpy(C64::new(1.0, 0.0), &SpatialField::new(g, onset)?)?;
    slices.push(first);
    for k in 1..=horizon {
        slices.push(w.slice(k).scaled(C64::new((cfg.kappa * g.time(k)).exp(), 0.0)));
    }
    Ok(CauchySolution { horizon, kappa: cfg.kappa, slices, residual: report.residual })
}

/// The representation `u(t) = Γ(t,0)ψ + ∫₀^t Γ(t,s)(−div F + g + h)(s) ds`
/// evaluated with one Green column per source slice.
pub fn cauchy_representation(coeffs: &CoefficientSet, data: &CauchyData, horizon: usize, cfg: &SolverConfig) -> Result<CauchySolution> {
    check_cauchy(coeffs, data, horizon, cfg)?;
    let g = coeffs.grid();
    let solver = cauchy_solver(coeffs, horizon, cfg)?;
    let f = forcing(data)?;
    let init = solver.column(0, data.psi)?;
    let gamma = |traj: &Trajectory, t: usize, s: usize| {
        let e = (cfg.kappa * (t as f64 - s as f64) * g.dt()).exp();
        traj.data.slice(t).scaled(C64::new(e, 0.0))
    };
    let columns = (0..=horizon)
        .into_par_iter()
        .map(|s| {
            let fs = f.slice(s);
            if fs.max_abs() == 0.0 {
                return Ok(None);
            }
            solver.column(s, &fs).map(Some)
        })
        .collect::<Result<Vec<Option<Trajectory>>>>()?;
    let mut slices = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let mut u = if t == 0 { init.onset.clone() } else { gamma(&init, t, 0) };
        for (s, col) in columns.iter().enumerate().take(t + 1) {
            if let Some(col) = col {
                // periodic rectangle rule; the column holds the midpoint value at its source
                u.axpy(C64::new(g.dt(), 0.0), &gamma(col, t, s))?;
            }
        }
        slices.push(u);
    }
    Ok(CauchySolution { horizon, kappa: cfg.kappa, slices, residual: 0.0 })
}
