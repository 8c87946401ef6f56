//! Variational inverse of `∂t + L + κ`, the heat resolvent, `c(θ)` and
//! energy identities.
//!
//! The solve works on DFT coefficients. Testing against `(Id + δH_t)v`
//! turns the skew time derivative into a coercive form, so the system
//! `(Id − δH_t)(H + κ)u = (Id − δH_t)f` is what GMRES sees, scaled by the
//! dual weight `W^{-1}` and right-preconditioned by the symbol of the
//! mean-coefficient operator.

use crate::error::{Error, Result};
use crate::lattice::{self, dft, sign, Field, SpaceTimeGrid};
use crate::operator::{
    certificate_for, garding_constants, CertificateOptions, CoefficientField, CoefficientSet,
    CoercivityCertificate, NormMode,
};
use crate::quadrature;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::time::Instant;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kappa: f64,
    pub delta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub mode: NormMode,
    /// Krylov dimension before restart.
    #[serde(default = "default_restart")]
    pub restart: usize,
    /// Probes used by the pre-solve coercivity certificate.
    #[serde(default = "default_probes")]
    pub certificate_probes: usize,
    #[serde(default)]
    pub seed: u64,
    /// Skip the ellipticity and certificate gates.
    #[serde(default)]
    pub force: bool,
}

fn default_restart() -> usize {
    40
}
fn default_probes() -> usize {
    8
}

impl SolverConfig {
    pub fn new(kappa: f64, delta: f64, tol: f64) -> Self {
        Self {
            kappa,
            delta,
            tol,
            max_iter: 400,
            mode: NormMode::Homogeneous,
            restart: default_restart(),
            certificate_probes: default_probes(),
            seed: 0,
            force: false,
        }
    }

    pub fn with_mode(mut self, mode: NormMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn forced(mut self) -> Self {
        self.force = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || self.restart == 0 {
            return Err(Error::InvalidArgument("tol > 0, max_iter >= 1 and restart >= 1 required".into()));
        }
        if !(self.delta > 0.0) || !(self.kappa >= 0.0) {
            return Err(Error::InvalidArgument("delta > 0 and kappa >= 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖f − (H+κ)u‖_dual / ‖f‖_dual`.
    pub residual: f64,
    pub converged: bool,
    pub certificate: Option<CoercivityCertificate>,
    /// `‖u‖ ≤ (2 or 4)·√(1+δ²)/δ · ‖f‖_dual` held for this solve.
    pub inverse_bound_ok: bool,
    pub wall_time: f64,
}

/// Direction of time in `σ∂t + L + κ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `∂t + L + κ`
    Forward,
    /// `−∂t + L* + κ`
    Backward,
}

impl Direction {
    pub fn time_sign(self) -> f64 {
        match self {
            Self::Forward => 1.0,
            Self::Backward => -1.0,
        }
    }
}

/// `σ∂t + L + κ` acting on unnormalized DFT coefficients.
#[derive(Debug, Clone)]
pub struct SpaceTimeOperator {
    coeffs: CoefficientSet,
    kappa: f64,
    direction: Direction,
    constant: bool,
}

impl SpaceTimeOperator {
    pub fn forward(coeffs: &CoefficientSet, kappa: f64) -> Self {
        Self::new(coeffs.clone(), kappa, Direction::Forward)
    }

    /// `−∂t + L* + κ`; stores the adjoint coefficients.
    pub fn backward(coeffs: &CoefficientSet, kappa: f64) -> Self {
        Self::new(coeffs.adjoint(), kappa, Direction::Backward)
    }

    pub fn with_direction(coeffs: &CoefficientSet, kappa: f64, direction: Direction) -> Self {
        match direction {
            Direction::Forward => Self::forward(coeffs, kappa),
            Direction::Backward => Self::backward(coeffs, kappa),
        }
    }

    fn new(coeffs: CoefficientSet, kappa: f64, direction: Direction) -> Self {
        let constant = coeffs
            .a
            .iter()
            .chain(&coeffs.avec)
            .chain(&coeffs.bvec)
            .chain(std::iter::once(&coeffs.a0))
            .all(|c| matches!(c, CoefficientField::Constant(_)));
        Self { coeffs, kappa, direction, constant }
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        self.coeffs.grid()
    }

    /// Coefficients of the spatial part (already adjoint for backward operators).
    pub fn coefficients(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn time_sign(&self) -> f64 {
        self.direction.time_sign()
    }

    /// DFT of `(σ∂t + L + κ)u` from the DFT of `u`.
    pub fn apply_hat(&self, hat: &[C64]) -> Vec<C64> {
        let g = self.coeffs.grid();
        let n = g.n;
        let ns = g.spatial_len();
        let sigma = self.time_sign();
        let mut out = vec![ZERO; hat.len()];
        if self.constant {
            let means = self.coeffs.means();
            let sym: Vec<C64> = (0..ns).map(|ix| means.spatial_symbol(&g.xi_vec(ix)[..n])).collect();
            for k in 0..g.nt {
                let t = C64::new(self.kappa, sigma * g.tau_at(k));
                for ix in 0..ns {
                    out[k * ns + ix] = (t + sym[ix]) * hat[k * ns + ix];
                }
            }
            return out;
        }
        for k in 0..g.nt {
            let t = C64::new(self.kappa, sigma * g.tau_at(k));
            for ix in 0..ns {
                out[k * ns + ix] = t * hat[k * ns + ix];
            }
        }
        let xis: Vec<[f64; 3]> = (0..ns).map(|ix| g.xi_vec(ix)).collect();
        let grads: Vec<Vec<C64>> = (0..n)
            .map(|d| {
                let mut v: Vec<C64> = hat
                    .iter()
                    .enumerate()
                    .map(|(p, z)| z * C64::new(0.0, xis[p % ns][d]))
                    .collect();
                dft(g, &mut v, true);
                v
            })
            .collect();
        let needs_u = self.coeffs.avec.iter().any(|c| !c.is_zero()) || !self.coeffs.a0.is_zero();
        let u = if needs_u {
            let mut v = hat.to_vec();
            dft(g, &mut v, true);
            v
        } else {
            vec![ZERO; hat.len()]
        };
        for c in 0..n {
            let mut flux = vec![ZERO; hat.len()];
            for d in 0..n {
                self.coeffs.a[c * n + d].mul_add(&grads[d], &mut flux, ns);
            }
            self.coeffs.avec[c].mul_add(&u, &mut flux, ns);
            dft(g, &mut flux, false);
            for (p, (o, j)) in out.iter_mut().zip(&flux).enumerate() {
                *o -= C64::new(0.0, xis[p % ns][c]) * j;
            }
        }
        if self.coeffs.has_lower_order() {
            let mut scalar = vec![ZERO; hat.len()];
            for c in 0..n {
                self.coeffs.bvec[c].mul_add(&grads[c], &mut scalar, ns);
            }
            self.coeffs.a0.mul_add(&u, &mut scalar, ns);
            dft(g, &mut scalar, false);
            for (o, s) in out.iter_mut().zip(&scalar) {
                *o += s;
            }
        }
        out
    }

    /// Physical-space application.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        if u.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        let mut hat = u.data().to_vec();
        dft(self.grid(), &mut hat, false);
        let mut out = self.apply_hat(&hat);
        dft(self.grid(), &mut out, true);
        Ok(Field::from_raw(self.grid(), out))
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    // ⟨a, b⟩ = Σ conj(a)·b
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm2(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

struct GmresOutcome {
    x: Vec<C64>,
    iterations: usize,
    converged: bool,
}

/// Restarted GMRES for `K x = b` with zero initial guess; `tol` is relative to `‖b‖`.
fn gmres(k: &dyn Fn(&[C64]) -> Vec<C64>, b: &[C64], tol: f64, max_iter: usize, restart: usize) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![ZERO; n];
    if bnorm == 0.0 {
        return GmresOutcome { x, iterations: 0, converged: true };
    }
    let mut total = 0;
    let mut r = b.to_vec();
    while total < max_iter {
        let beta = norm2(&r);
        if beta / bnorm <= tol {
            return GmresOutcome { x, iterations: total, converged: true };
        }
        let m = restart.min(max_iter - total);
        let mut v: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut h = vec![vec![ZERO; m]; m + 1];
        let mut cs = vec![ZERO; m];
        let mut sn = vec![ZERO; m];
        let mut g = vec![ZERO; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut used = 0;
        let mut rel = 1.0;
        for j in 0..m {
            let mut w = k(&v[j]);
            for i in 0..=j {
                let hij = dot(&v[i], &w);
                h[i][j] = hij;
                w.iter_mut().zip(&v[i]).for_each(|(wz, vz)| *wz -= hij * vz);
            }
            // one reorthogonalization pass keeps the basis clean at tight tolerances
            for i in 0..=j {
                let c = dot(&v[i], &w);
                h[i][j] += c;
                w.iter_mut().zip(&v[i]).for_each(|(wz, vz)| *wz -= c * vz);
            }
            let wn = norm2(&w);
            h[j + 1][j] = C64::new(wn, 0.0);
            for i in 0..j {
                let t = cs[i].conj() * h[i][j] + sn[i].conj() * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let (a, bb) = (h[j][j], h[j + 1][j]);
            let rho = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if rho == 0.0 {
                cs[j] = C64::new(1.0, 0.0);
                sn[j] = ZERO;
            } else {
                cs[j] = a / rho;
                sn[j] = bb / rho;
            }
            h[j][j] = cs[j].conj() * a + sn[j].conj() * bb;
            h[j + 1][j] = ZERO;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j].conj() * g[j];
            used = j + 1;
            total += 1;
            rel = g[j + 1].norm() / bnorm;
            if rel <= tol || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|z| z / wn).collect());
        }
        // back substitution
        let mut y = vec![ZERO; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for l in i + 1..used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            x.iter_mut().zip(&v[i]).for_each(|(xz, vz)| *xz += yi * vz);
        }
        let kx = k(&x);
        r = b.iter().zip(&kx).map(|(bz, kz)| bz - kz).collect();
        if rel <= tol {
            let true_rel = norm2(&r) / bnorm;
            if true_rel <= tol {
                return GmresOutcome { x, iterations: total, converged: true };
            }
        }
    }
    let converged = norm2(&r) / bnorm <= tol;
    GmresOutcome { x, iterations: total, converged }
}

/// A prepared solver for one operator; the gates (ellipticity, certificate)
/// run once and every later solve reuses the preconditioner.
#[derive(Debug, Clone)]
pub struct VariationalSolver {
    op: SpaceTimeOperator,
    cfg: SolverConfig,
    /// `W = (weight)^{1/2}` per bin, with 1 on an excluded zero mode.
    w: Vec<f64>,
    /// Symbol of `(Id − σδH_t)` per time bin.
    test: Vec<C64>,
    /// Transformed preconditioner symbol `T0` per bin.
    t0: Vec<C64>,
    exclude_zero: bool,
    certificate: Option<CoercivityCertificate>,
}

impl VariationalSolver {
    pub fn new(coeffs: &CoefficientSet, cfg: &SolverConfig, direction: Direction) -> Result<Self> {
        cfg.validate()?;
        let bounds = garding_constants(coeffs);
        if !bounds.elliptic && !cfg.force {
            return Err(Error::NotElliptic(bounds.lambda));
        }
        let op = SpaceTimeOperator::with_direction(coeffs, cfg.kappa, direction);
        let certificate = if cfg.force {
            None
        } else {
            let cert = certificate_for(
                &op,
                &CertificateOptions {
                    kappa: cfg.kappa,
                    delta: cfg.delta,
                    probes: cfg.certificate_probes.max(1),
                    seed: cfg.seed,
                    mode: cfg.mode,
                    threshold: None,
                },
            )?;
            if !cert.pass {
                return Err(Error::CertificateFailed { min_ratio: cert.min_ratio, threshold: cert.threshold });
            }
            Some(cert)
        };
        Ok(Self::assemble(op, cfg, bounds.lambda.max(1e-12), certificate))
    }

    fn assemble(op: SpaceTimeOperator, cfg: &SolverConfig, lambda: f64, certificate: Option<CoercivityCertificate>) -> Self {
        let g = op.grid().clone();
        let n = g.n;
        let ns = g.spatial_len();
        let sigma = op.time_sign();
        let exclude_zero = cfg.mode == NormMode::Homogeneous;
        let means = op.coefficients().means();
        let msym: Vec<C64> = (0..ns).map(|ix| means.spatial_symbol(&g.xi_vec(ix)[..n])).collect();
        let mut w = vec![1.0; g.len()];
        let mut t0 = vec![C64::new(1.0, 0.0); g.len()];
        let test: Vec<C64> = (0..g.nt).map(|k| C64::new(1.0, -sigma * cfg.delta * sign(g.tau_at(k)))).collect();
        for k in 0..g.nt {
            let tau = g.tau_at(k);
            for ix in 0..ns {
                let p = k * ns + ix;
                let xi2 = g.xi_sq(ix);
                if exclude_zero && p == 0 {
                    continue;
                }
                w[p] = cfg.mode.weight(tau, xi2).sqrt();
                let scale = tau.abs() + lambda * xi2 + cfg.kappa;
                let mut p0 = C64::new(cfg.kappa, sigma * tau) + msym[ix];
                if p0.norm() < 0.1 * scale {
                    p0 = C64::new(cfg.kappa + lambda * xi2, sigma * tau);
                }
                if p0.norm() == 0.0 {
                    p0 = C64::new(1.0, 0.0);
                }
                t0[p] = test[k] * p0;
            }
        }
        Self { op, cfg: *cfg, w, test, t0, exclude_zero, certificate }
    }

    pub fn operator(&self) -> &SpaceTimeOperator {
        &self.op
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn certificate(&self) -> Option<&CoercivityCertificate> {
        self.certificate.as_ref()
    }

    /// Dual norm `‖W^{-1} f̂‖` in unnormalized units.
    fn dual_norm_hat(&self, f: &[C64]) -> f64 {
        let mut s = 0.0;
        for (p, z) in f.iter().enumerate() {
            if self.exclude_zero && p == 0 {
                continue;
            }
            s += z.norm_sqr() / (self.w[p] * self.w[p]);
        }
        s.sqrt()
    }

    fn primal_norm_hat(&self, u: &[C64]) -> f64 {
        let mut s = 0.0;
        for (p, z) in u.iter().enumerate() {
            if self.exclude_zero && p == 0 {
                continue;
            }
            s += z.norm_sqr() * self.w[p] * self.w[p];
        }
        s.sqrt()
    }

    /// Solves in DFT coefficients; returns `(û, report)`.
    pub fn solve_hat(&self, f: &[C64]) -> (Vec<C64>, SolveReport) {
        let start = Instant::now();
        let g = self.op.grid();
        let ns = g.spatial_len();
        let nt = g.nt;
        let zero_out = self.exclude_zero;
        // K z = W^{-1}·T·T0^{-1}·W z
        let k = |z: &[C64]| -> Vec<C64> {
            let mut u: Vec<C64> = z.iter().enumerate().map(|(p, v)| v * self.w[p] / self.t0[p]).collect();
            if zero_out {
                u[0] = ZERO;
            }
            let mut hu = self.op.apply_hat(&u);
            for kk in 0..nt {
                for ix in 0..ns {
                    let p = kk * ns + ix;
                    hu[p] = hu[p] * self.test[kk] / self.w[p];
                }
            }
            if zero_out {
                hu[0] = ZERO;
            }
            hu
        };
        let mut b: Vec<C64> = (0..f.len()).map(|p| f[p] * self.test[p / ns] / self.w[p]).collect();
        if zero_out {
            b[0] = ZERO;
        }
        let inner_tol = self.cfg.tol / (1.0 + self.cfg.delta * self.cfg.delta).sqrt();
        let out = gmres(&k, &b, inner_tol, self.cfg.max_iter, self.cfg.restart);
        let mut u: Vec<C64> = out.x.iter().enumerate().map(|(p, v)| v * self.w[p] / self.t0[p]).collect();
        if zero_out {
            u[0] = ZERO;
        }
        let hu = self.op.apply_hat(&u);
        let mut res: Vec<C64> = f.iter().zip(&hu).map(|(a, b)| a - b).collect();
        if zero_out {
            res[0] = ZERO;
        }
        let fd = self.dual_norm_hat(f);
        let residual = if fd == 0.0 { 0.0 } else { self.dual_norm_hat(&res) / fd };
        let factor = match self.cfg.mode {
            NormMode::Homogeneous => 2.0,
            NormMode::Inhomogeneous => 4.0,
        };
        let bound = factor * (1.0 + self.cfg.delta.powi(2)).sqrt() / self.cfg.delta;
        let inverse_bound_ok = self.primal_norm_hat(&u) <= bound * fd * (1.0 + 1e-9) + 1e-300;
        let report = SolveReport {
            iterations: out.iterations,
            residual,
            converged: out.converged && residual <= self.cfg.tol * (1.0 + 1e-6),
            certificate: self.certificate,
            inverse_bound_ok,
            wall_time: start.elapsed().as_secs_f64(),
        };
        (u, report)
    }

    /// Physical-space solve.
    pub fn solve(&self, f: &Field) -> Result<(Field, SolveReport)> {
        if f.grid() != self.op.grid() {
            return Err(Error::GridMismatch);
        }
        let mut hat = f.data().to_vec();
        dft(f.grid(), &mut hat, false);
        let (mut u, report) = self.solve_hat(&hat);
        dft(f.grid(), &mut u, true);
        Ok((Field::from_raw(f.grid(), u), report))
    }
}

/// Solves `(H + κ)u = f`; a non-converged solve returns the best iterate with
/// `report.converged == false`.
pub fn solve_variational(coeffs: &CoefficientSet, f: &Field, cfg: &SolverConfig) -> Result<(Field, SolveReport)> {
    if f.grid() != coeffs.grid() {
        return Err(Error::GridMismatch);
    }
    VariationalSolver::new(coeffs, cfg, Direction::Forward)?.solve(f)
}

/// Solves `(−∂t + L* + κ)u = f`.
pub fn solve_variational_adjoint(coeffs: &CoefficientSet, f: &Field, cfg: &SolverConfig) -> Result<(Field, SolveReport)> {
    if f.grid() != coeffs.grid() {
        return Err(Error::GridMismatch);
    }
    VariationalSolver::new(coeffs, cfg, Direction::Backward)?.solve(f)
}

/// Heat resolvent: `v̂ = ŵ/(iτ + |ξ|²)`.
pub fn solve_heat(w: &Field) -> Result<Field> {
    let g = w.grid();
    let mut hat = w.data().to_vec();
    dft(g, &mut hat, false);
    let total = hat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if hat[0].norm() > 1e-12 * total.max(f64::MIN_POSITIVE) && hat[0].norm() > 1e-300 {
        return Err(Error::ZeroModeMass);
    }
    let ns = g.spatial_len();
    for k in 0..g.nt {
        let tau = g.tau_at(k);
        for ix in 0..ns {
            let p = k * ns + ix;
            hat[p] = if p == 0 { ZERO } else { hat[p] / C64::new(g.xi_sq(ix), tau) };
        }
    }
    dft(g, &mut hat, true);
    Ok(Field::from_raw(g, hat))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    GaussKronrod,
    DoubleExponential,
}

/// `c(θ) = (2π)^{-1/2} (∫_ℝ |σ|^θ/(1+σ²) dσ)^{1/2}`.
pub fn theta_constant(theta: f64) -> Result<f64> {
    theta_constant_with(theta, QuadratureRule::GaussKronrod)
}

/// [`QuadratureRule::DoubleExponential`] truncates the `σ^{θ-2}` tail and
/// loses accuracy as `θ → 1`; it exists as an independent cross-check.
pub fn theta_constant_with(theta: f64, rule: QuadratureRule) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("theta = {theta} outside [0,1); the integral diverges")));
    }
    let half_line = match rule {
        QuadratureRule::GaussKronrod => {
            // split at 1, map σ ↦ 1/σ on the tail and remove the endpoint powers
            let a = 2.0 / (1.0 + theta);
            let b = 2.0 / (1.0 - theta);
            let i1 = quadrature::gauss_kronrod(|v| 1.0 / (1.0 + v.powf(a)), 0.0, 1.0, 1e-14) / (1.0 + theta);
            let i2 = quadrature::gauss_kronrod(|v| 1.0 / (1.0 + v.powf(b)), 0.0, 1.0, 1e-14) / (1.0 - theta);
            i1 + i2
        }
        QuadratureRule::DoubleExponential => quadrature::exp_sinh(|s| s.powf(theta) / (1.0 + s * s), 1e-13),
    };
    Ok((2.0 * half_line / (2.0 * std::f64::consts::PI)).sqrt())
}

/// Data of `∂t u = −div F + g + h`.
#[derive(Debug, Clone)]
pub struct EnergyData<'a> {
    pub flux: &'a [Field],
    pub g: &'a Field,
    pub h: &'a Field,
}

impl EnergyData<'_> {
    fn rhs(&self) -> Result<Field> {
        let mut r = lattice::divergence(self.flux)?.scaled(C64::new(-1.0, 0.0));
        r.axpy(C64::new(1.0, 0.0), self.g)?;
        r.axpy(C64::new(1.0, 0.0), self.h)?;
        Ok(r)
    }
}

const EQUATION_TOL: f64 = 1e-8;

fn check_equation(u: &Field, data: &EnergyData) -> Result<()> {
    let rhs = data.rhs()?;
    let dtu = lattice::time_derivative(u);
    let scale = dtu.norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
    let res = (&dtu - &rhs).norm();
    if res > EQUATION_TOL * scale {
        return Err(Error::InvalidArgument(format!(
            "equation residual {:.3e} exceeds {EQUATION_TOL:e} relative; the identity does not apply",
            res / scale
        )));
    }
    Ok(())
}

fn check_times(grid: &SpaceTimeGrid, s: usize, t: usize) -> Result<()> {
    if s >= t || t >= grid.nt {
        return Err(Error::InvalidTimes(format!("need sigma < tau within the grid, got {s}, {t}")));
    }
    Ok(())
}

fn slice_inner(a: &Field, b: &Field, k: usize) -> C64 {
    let s: C64 = a.slice_data(k).iter().zip(b.slice_data(k)).map(|(x, y)| x * y.conj()).sum();
    s * a.grid().space_cell()
}

fn trapezoid(values: &[C64], dt: f64) -> C64 {
    if values.len() < 2 {
        return ZERO;
    }
    let inner: C64 = values[1..values.len() - 1].iter().sum();
    (inner + 0.5 * (values[0] + values[values.len() - 1])) * dt
}

/// `|‖u(τ)‖² − ‖u(σ)‖² − 2Re∫_σ^τ (⟨F,∇u⟩ + ⟨g,u⟩ + ⟨h,u⟩)|` with trapezoidal time quadrature.
pub fn energy_identity_residual(u: &Field, data: &EnergyData, sigma: usize, tau: usize) -> Result<f64> {
    let grid = u.grid();
    check_times(grid, sigma, tau)?;
    check_equation(u, data)?;
    let grads = lattice::gradient(u);
    let integrand: Vec<C64> = (sigma..=tau)
        .map(|k| {
            let mut s = slice_inner(data.g, u, k) + slice_inner(data.h, u, k);
            for (f, gu) in data.flux.iter().zip(&grads) {
                s += slice_inner(f, gu, k);
            }
            s
        })
        .collect();
    let rhs = 2.0 * trapezoid(&integrand, grid.dt()).re;
    let norms = u.slice_norms();
    let lhs = norms[tau].powi(2) - norms[sigma].powi(2);
    Ok((lhs - rhs).abs())
}

/// `|⟨u(τ),ũ(τ)⟩ − ⟨u(σ),ũ(σ)⟩ − ∫_σ^τ (⟨∂t u,ũ⟩ + ⟨u,∂t ũ⟩)|`.
pub fn polarized_energy_residual(u: &Field, du: &EnergyData, v: &Field, dv: &EnergyData, sigma: usize, tau: usize) -> Result<f64> {
    let grid = u.grid();
    if v.grid() != grid {
        return Err(Error::GridMismatch);
    }
    check_times(grid, sigma, tau)?;
    check_equation(u, du)?;
    check_equation(v, dv)?;
    let (ru, rv) = (du.rhs()?, dv.rhs()?);
    let integrand: Vec<C64> = (sigma..=tau).map(|k| slice_inner(&ru, v, k) + slice_inner(u, &rv, k)).collect();
    let rhs = trapezoid(&integrand, grid.dt());
    let lhs = slice_inner(u, v, tau) - slice_inner(u, v, sigma);
    Ok((lhs - rhs).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;
    use crate::operator::apply_h;
    use crate::rng;
    use rand::Rng;
    use std::f64::consts::PI;

    fn smooth_random(g: &SpaceTimeGrid, seed: u64) -> Field {
        let mut r = rng::stream(seed, 0);
        let ns = g.spatial_len();
        let mut hat = vec![ZERO; g.len()];
        for k in 0..g.nt {
            for ix in 0..ns {
                let kk = lattice::signed_bin(k, g.nt).abs();
                let idx = g.unravel(ix);
                let ok = kk <= (g.nt / 4) as i64
                    && (0..g.n).all(|c| lattice::signed_bin(idx[c], g.nx).abs() <= (g.nx / 4) as i64);
                let z = C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
                if ok && k + ix > 0 {
                    hat[k * ns + ix] = z;
                }
            }
        }
        dft(g, &mut hat, true);
        Field::from_raw(g, hat)
    }

    #[test]
    fn heat_resolvent_on_pure_mode() {
        let g = make_grid(1, 8, 2.0 * PI, 8, 2.0 * PI).unwrap();
        let w = Field::from_fn(&g, |t, x| C64::new(1.0, 1.0) * C64::from_polar(1.0, t + x[0]));
        let v = solve_heat(&w).unwrap();
        let want = Field::from_fn(&g, |t, x| C64::from_polar(1.0, t + x[0]));
        assert!((&v - &want).norm() < 1e-12);
        let c = Field::from_fn(&g, |_, _| C64::new(1.0, 0.0));
        assert!(matches!(solve_heat(&c), Err(Error::ZeroModeMass)));
    }

    #[test]
    fn heat_resolvent_residual() {
        let g = make_grid(2, 8, 5.0, 16, 3.0).unwrap();
        let w = smooth_random(&g, 1);
        let v = solve_heat(&w).unwrap();
        let lap = lattice::apply_symbol(&v, |_, xi| C64::new(-xi.iter().map(|a| a * a).sum::<f64>(), 0.0));
        let res = &(&lattice::time_derivative(&v) - &lap) - &w;
        assert!(res.norm() < 1e-12 * w.norm());
    }

    #[test]
    fn theta_zero_and_closed_form() {
        let c0 = theta_constant(0.0).unwrap();
        assert!((c0 - 0.5f64.sqrt()).abs() < 1e-12);
        for &th in &[0.1, 0.5, 0.9, 0.99] {
            let a = theta_constant(th).unwrap();
            let b = theta_constant_with(th, QuadratureRule::DoubleExponential).unwrap();
            let exact = (2.0 * (PI * th / 2.0).cos()).powf(-0.5);
            assert!((a - exact).abs() < 1e-9, "{th}: {a} vs {exact}");
            // the double-exponential tail is truncated, so it only checks moderate θ
            if th <= 0.9 {
                assert!((a - b).abs() < 1e-7, "{th}: {a} vs {b}");
            }
        }
        assert!(theta_constant(1.0).is_err());
        assert!(theta_constant(-0.1).is_err());
    }

    #[test]
    fn manufactured_identity_solve() {
        let g = make_grid(1, 32, 8.0, 32, 4.0).unwrap();
        let c = CoefficientSet::identity(&g);
        let ustar = smooth_random(&g, 2);
        let f = apply_h(&c, &ustar, 0.0).unwrap();
        let cfg = SolverConfig::new(0.0, 0.5, 1e-10);
        let (u, rep) = solve_variational(&c, &f, &cfg).unwrap();
        assert!(rep.converged && rep.iterations <= 2, "{rep:?}");
        assert!((&u - &ustar).norm() <= 10.0 * cfg.tol * ustar.norm());
        assert!(rep.inverse_bound_ok);
    }

    #[test]
    fn variable_coefficients_converge() {
        let g = make_grid(1, 32, 8.0, 32, 4.0).unwrap();
        let ns = g.spatial_len();
        let a = CoefficientField::Full(
            (0..g.len())
                .map(|p| {
                    let (k, ix) = (p / ns, p % ns);
                    C64::new(1.0 + 0.5 * (2.0 * PI * ix as f64 / 32.0).sin() * (2.0 * PI * k as f64 / 32.0).cos(), 0.2)
                })
                .collect(),
        );
        let mut c = CoefficientSet::scalar_diffusion(&g, a);
        c.avec[0] = CoefficientField::real(0.3);
        c.a0 = CoefficientField::real(0.2);
        let f = smooth_random(&g, 3);
        let cfg = SolverConfig::new(0.5, 0.2, 1e-9).with_mode(NormMode::Inhomogeneous);
        let (u, rep) = solve_variational(&c, &f, &cfg).unwrap();
        assert!(rep.converged, "{rep:?}");
        let r = &apply_h(&c, &u, 0.5).unwrap() - &f;
        assert!(r.norm() < 1e-6 * f.norm());
        let (u0, rep0) = solve_variational(&c, &Field::zeros(&g), &cfg).unwrap();
        assert!(rep0.converged && u0.norm() == 0.0);
    }
}
