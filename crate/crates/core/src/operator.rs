//! Coefficients of `L = −div(A∇u + 𝐚u) + 𝐛·∇u + a0·u`, weak-form pairings,
//! ellipticity constants, Davies conjugation and the coercivity certificate.

use crate::error::{Error, Result};
use crate::lattice::{self, gradient, Field, SpaceTimeGrid, SpatialField};
use crate::rng;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// One scalar coefficient, stored as compactly as its variation allows.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientField {
    Constant(C64),
    /// Time independent, `Nxⁿ` samples.
    Spatial(Vec<C64>),
    /// `Nt·Nxⁿ` samples, time-major.
    Full(Vec<C64>),
}

impl CoefficientField {
    pub fn zero() -> Self {
        Self::Constant(ZERO)
    }

    pub fn real(v: f64) -> Self {
        Self::Constant(C64::new(v, 0.0))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Constant(c) => *c == ZERO,
            Self::Spatial(v) | Self::Full(v) => v.iter().all(|z| *z == ZERO),
        }
    }

    pub fn is_time_independent(&self) -> bool {
        !matches!(self, Self::Full(_))
    }

    #[inline]
    pub fn at(&self, k: usize, ix: usize, ns: usize) -> C64 {
        match self {
            Self::Constant(c) => *c,
            Self::Spatial(v) => v[ix],
            Self::Full(v) => v[k * ns + ix],
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Self::Constant(_) => 0,
            Self::Spatial(_) => 1,
            Self::Full(_) => 2,
        }
    }

    fn check(&self, grid: &SpaceTimeGrid) -> Result<()> {
        let (len, want) = match self {
            Self::Constant(c) => {
                return if c.re.is_finite() && c.im.is_finite() { Ok(()) } else { Err(Error::NonFinite("coefficient")) }
            }
            Self::Spatial(v) => (v.len(), grid.spatial_len()),
            Self::Full(v) => (v.len(), grid.len()),
        };
        if len != want {
            return Err(Error::Shape(format!("coefficient has {len} samples, expected {want}")));
        }
        let data = match self {
            Self::Spatial(v) | Self::Full(v) => v,
            Self::Constant(_) => unreachable!(),
        };
        if data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("coefficient"))
        }
    }

    /// Pointwise combination with storage promoted to the richest input.
    pub fn combine(grid: &SpaceTimeGrid, parts: &[&CoefficientField], f: impl Fn(&[C64]) -> C64) -> Self {
        let rank = parts.iter().map(|p| p.rank()).max().unwrap_or(0);
        let ns = grid.spatial_len();
        let mut buf = vec![ZERO; parts.len()];
        let mut eval = |k: usize, ix: usize| {
            for (b, p) in buf.iter_mut().zip(parts) {
                *b = p.at(k, ix, ns);
            }
            f(&buf)
        };
        match rank {
            0 => Self::Constant(eval(0, 0)),
            1 => Self::Spatial((0..ns).map(|ix| eval(0, ix)).collect()),
            _ => {
                let mut out = Vec::with_capacity(grid.len());
                for k in 0..grid.nt {
                    for ix in 0..ns {
                        out.push(eval(k, ix));
                    }
                }
                Self::Full(out)
            }
        }
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        match self {
            Self::Constant(c) => Self::Constant(f(*c)),
            Self::Spatial(v) => Self::Spatial(v.iter().map(|&z| f(z)).collect()),
            Self::Full(v) => Self::Full(v.iter().map(|&z| f(z)).collect()),
        }
    }

    pub fn to_field(&self, grid: &SpaceTimeGrid) -> Field {
        let ns = grid.spatial_len();
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..grid.nt {
            for ix in 0..ns {
                data.push(self.at(k, ix, ns));
            }
        }
        Field::from_raw(grid, data)
    }

    /// Compresses a full field to the cheapest exact storage.
    pub fn from_field(u: &Field) -> Self {
        let g = u.grid();
        let ns = g.spatial_len();
        let d = u.data();
        if d.iter().all(|z| *z == d[0]) {
            return Self::Constant(d[0]);
        }
        if (1..g.nt).all(|k| d[k * ns..(k + 1) * ns] == d[..ns]) {
            return Self::Spatial(d[..ns].to_vec());
        }
        Self::Full(d.to_vec())
    }

    pub fn from_spatial(psi: &SpatialField) -> Self {
        let d = psi.data();
        if d.iter().all(|z| *z == d[0]) {
            Self::Constant(d[0])
        } else {
            Self::Spatial(d.to_vec())
        }
    }

    pub fn mean(&self, grid: &SpaceTimeGrid) -> C64 {
        match self {
            Self::Constant(c) => *c,
            Self::Spatial(v) => v.iter().sum::<C64>() / grid.spatial_len() as f64,
            Self::Full(v) => v.iter().sum::<C64>() / grid.len() as f64,
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Self::Constant(c) => c.norm(),
            Self::Spatial(v) | Self::Full(v) => v.iter().map(|z| z.norm()).fold(0.0, f64::max),
        }
    }

    /// `dst[k,ix] += self[k,ix]·src[k,ix]` over a full space-time array.
    pub(crate) fn mul_add(&self, src: &[C64], dst: &mut [C64], ns: usize) {
        match self {
            Self::Constant(c) => {
                if *c != ZERO {
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += c * s);
                }
            }
            Self::Spatial(v) => {
                for (dc, sc) in dst.chunks_mut(ns).zip(src.chunks(ns)) {
                    for ((d, s), c) in dc.iter_mut().zip(sc).zip(v) {
                        *d += c * s;
                    }
                }
            }
            Self::Full(v) => {
                dst.iter_mut().zip(src).zip(v).for_each(|((d, s), c)| *d += c * s);
            }
        }
    }
}

/// Coefficients `A` (n×n, row-major), `𝐚`, `𝐛`, `a0` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    grid: SpaceTimeGrid,
    pub a: Vec<CoefficientField>,
    pub avec: Vec<CoefficientField>,
    pub bvec: Vec<CoefficientField>,
    pub a0: CoefficientField,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityBounds {
    pub lambda: f64,
    pub big_lambda: f64,
    pub elliptic: bool,
}

impl CoefficientSet {
    pub fn new(
        grid: &SpaceTimeGrid,
        a: Vec<CoefficientField>,
        avec: Vec<CoefficientField>,
        bvec: Vec<CoefficientField>,
        a0: CoefficientField,
    ) -> Result<Self> {
        let n = grid.n;
        if a.len() != n * n || avec.len() != n || bvec.len() != n {
            return Err(Error::Shape(format!(
                "coefficient shapes A:{} a:{} b:{} do not match n = {n}",
                a.len(),
                avec.len(),
                bvec.len()
            )));
        }
        for c in a.iter().chain(&avec).chain(&bvec).chain(std::iter::once(&a0)) {
            c.check(grid)?;
        }
        Ok(Self { grid: grid.clone(), a, avec, bvec, a0 })
    }

    /// `A = Id`, no lower-order terms.
    pub fn identity(grid: &SpaceTimeGrid) -> Self {
        Self::scalar_diffusion(grid, CoefficientField::real(1.0))
    }

    /// `A = α·Id`, no lower-order terms.
    pub fn scalar_diffusion(grid: &SpaceTimeGrid, alpha: CoefficientField) -> Self {
        let n = grid.n;
        let a = (0..n * n)
            .map(|i| if i / n == i % n { alpha.clone() } else { CoefficientField::zero() })
            .collect();
        Self {
            grid: grid.clone(),
            a,
            avec: vec![CoefficientField::zero(); n],
            bvec: vec![CoefficientField::zero(); n],
            a0: CoefficientField::zero(),
        }
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn a_entry(&self, i: usize, j: usize) -> &CoefficientField {
        &self.a[i * self.grid.n + j]
    }

    pub fn has_lower_order(&self) -> bool {
        !(self.avec.iter().all(|c| c.is_zero()) && self.bvec.iter().all(|c| c.is_zero()) && self.a0.is_zero())
    }

    pub fn is_time_independent(&self) -> bool {
        self.all_fields().all(|c| c.is_time_independent())
    }

    fn all_fields(&self) -> impl Iterator<Item = &CoefficientField> {
        self.a.iter().chain(&self.avec).chain(&self.bvec).chain(std::iter::once(&self.a0))
    }

    /// Coefficients of `L*`: `A^H`, `𝐚 ↦ conj 𝐛`, `𝐛 ↦ conj 𝐚`, `a0 ↦ conj a0`.
    pub fn adjoint(&self) -> Self {
        let n = self.grid.n;
        let a = (0..n * n).map(|idx| self.a[(idx % n) * n + idx / n].map(|z| z.conj())).collect();
        Self {
            grid: self.grid.clone(),
            a,
            avec: self.bvec.iter().map(|c| c.map(|z| z.conj())).collect(),
            bvec: self.avec.iter().map(|c| c.map(|z| z.conj())).collect(),
            a0: self.a0.map(|z| z.conj()),
        }
    }

    /// Moves the coefficients to another grid with the same spatial lattice
    /// (same `n`, `Nx`, `Lx`); time-dependent fields are rejected.
    pub fn on_grid(&self, grid: &SpaceTimeGrid) -> Result<Self> {
        if grid.n != self.grid.n || grid.nx != self.grid.nx || grid.lx != self.grid.lx {
            return Err(Error::GridMismatch);
        }
        if !self.is_time_independent() {
            return Err(Error::Unsupported("regridding time-dependent coefficients".into()));
        }
        let mut out = self.clone();
        out.grid = grid.clone();
        Ok(out)
    }

    /// Replaces coefficients outside the time slices `window` by `A = Id` and
    /// zero lower-order terms.
    pub fn extended_outside(&self, window: std::ops::RangeInclusive<usize>) -> Self {
        let g = &self.grid;
        let n = g.n;
        let ns = g.spatial_len();
        let mask = |c: &CoefficientField, outside: C64| {
            let mut v = Vec::with_capacity(g.len());
            for k in 0..g.nt {
                let inside = window.contains(&k);
                for ix in 0..ns {
                    v.push(if inside { c.at(k, ix, ns) } else { outside });
                }
            }
            CoefficientField::Full(v)
        };
        Self {
            grid: g.clone(),
            a: (0..n * n).map(|i| mask(&self.a[i], if i / n == i % n { ONE } else { ZERO })).collect(),
            avec: self.avec.iter().map(|c| mask(c, ZERO)).collect(),
            bvec: self.bvec.iter().map(|c| mask(c, ZERO)).collect(),
            a0: mask(&self.a0, ZERO),
        }
    }

    /// Multiplies all lower-order coefficients by `s`.
    pub fn scale_lower_order(&self, s: f64) -> Self {
        let mut out = self.clone();
        for c in out.avec.iter_mut().chain(out.bvec.iter_mut()) {
            *c = c.map(|z| z * s);
        }
        out.a0 = out.a0.map(|z| z * s);
        out
    }

    /// Pointwise `A(t,x)` as a dense matrix.
    pub fn a_at(&self, k: usize, ix: usize) -> DMatrix<C64> {
        let n = self.grid.n;
        let ns = self.grid.spatial_len();
        DMatrix::from_fn(n, n, |i, j| self.a[i * n + j].at(k, ix, ns))
    }

    /// Space-time means of every coefficient.
    pub fn means(&self) -> MeanCoefficients {
        let g = &self.grid;
        MeanCoefficients {
            a: self.a.iter().map(|c| c.mean(g)).collect(),
            avec: self.avec.iter().map(|c| c.mean(g)).collect(),
            bvec: self.bvec.iter().map(|c| c.mean(g)).collect(),
            a0: self.a0.mean(g),
        }
    }

    /// Sup of every lower-order magnitude: `(‖𝐚‖∞, ‖𝐛‖∞, ‖a0‖∞)`.
    pub fn lower_order_sup(&self) -> (f64, f64, f64) {
        let vsup = |v: &[CoefficientField]| {
            let g = &self.grid;
            let ns = g.spatial_len();
            let mut best = 0.0f64;
            let nt = if v.iter().all(|c| c.is_time_independent()) { 1 } else { g.nt };
            for k in 0..nt {
                for ix in 0..ns {
                    let s: f64 = v.iter().map(|c| c.at(k, ix, ns).norm_sqr()).sum();
                    best = best.max(s.sqrt());
                }
            }
            best
        };
        (vsup(&self.avec), vsup(&self.bvec), self.a0.max_abs())
    }

    /// `P∞ = ‖𝐚‖∞ + ‖𝐛‖∞ + ‖a0‖∞^{1/2}` for the whole lower-order part.
    pub fn p_infinity(&self) -> f64 {
        let (a, b, c) = self.lower_order_sup();
        a + b + c.sqrt()
    }

    /// Lattice points on which the coefficients are distinct: `(nt, ns)` extent.
    fn distinct_extent(&self) -> (usize, usize) {
        let rank = self.a.iter().map(|c| c.rank()).max().unwrap_or(0);
        match rank {
            0 => (1, 1),
            1 => (1, self.grid.spatial_len()),
            _ => (self.grid.nt, self.grid.spatial_len()),
        }
    }
}

/// Constant-coefficient reference operator built from coefficient means.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCoefficients {
    pub a: Vec<C64>,
    pub avec: Vec<C64>,
    pub bvec: Vec<C64>,
    pub a0: C64,
}

impl MeanCoefficients {
    /// Symbol of the constant-coefficient spatial operator at `ξ`:
    /// `ξᵀAξ + iξ·(𝐛 − 𝐚) + a0`.
    pub fn spatial_symbol(&self, xi: &[f64]) -> C64 {
        let n = xi.len();
        let mut s = self.a0;
        for i in 0..n {
            for j in 0..n {
                s += self.a[i * n + j] * xi[i] * xi[j];
            }
            s += C64::new(0.0, xi[i]) * (self.bvec[i] - self.avec[i]);
        }
        s
    }
}

pub fn garding_constants(coeffs: &CoefficientSet) -> EllipticityBounds {
    let n = coeffs.grid.n;
    let (nt, ns) = coeffs.distinct_extent();
    let (lambda, big_lambda) = (0..nt * ns)
        .into_par_iter()
        .map(|p| {
            let m = coeffs.a_at(p / ns, p % ns);
            if n == 1 {
                let z = m[(0, 0)];
                return (z.re, z.norm());
            }
            let herm = (&m + m.adjoint()) * C64::new(0.5, 0.0);
            let low = SymmetricEigen::new(herm).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            let gram = m.adjoint() * &m;
            let top = SymmetricEigen::new(gram).eigenvalues.iter().cloned().fold(0.0, f64::max);
            (low, top.max(0.0).sqrt())
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    EllipticityBounds { lambda, big_lambda, elliptic: lambda > 0.0 }
}

/// Default coercivity parameter `δ = λ/(1+Λ)`.
pub fn default_delta(bounds: &EllipticityBounds) -> f64 {
    bounds.lambda / (1.0 + bounds.big_lambda)
}

/// Full-lattice gradient samples, per component, in physical space.
fn apply_l_physical(coeffs: &CoefficientSet, u: &[C64], grads: &[Vec<C64>]) -> (Vec<Vec<C64>>, Vec<C64>) {
    let g = &coeffs.grid;
    let n = g.n;
    let ns = g.spatial_len();
    let mut flux = vec![vec![ZERO; u.len()]; n];
    for (c, fc) in flux.iter_mut().enumerate() {
        for (d, gd) in grads.iter().enumerate() {
            coeffs.a[c * n + d].mul_add(gd, fc, ns);
        }
        coeffs.avec[c].mul_add(u, fc, ns);
    }
    let mut scalar = vec![ZERO; u.len()];
    for (c, gc) in grads.iter().enumerate() {
        coeffs.bvec[c].mul_add(gc, &mut scalar, ns);
    }
    coeffs.a0.mul_add(u, &mut scalar, ns);
    (flux, scalar)
}

/// `L u` with spectral derivatives and pointwise coefficient products.
pub fn apply_l(coeffs: &CoefficientSet, u: &Field) -> Result<Field> {
    if u.grid() != &coeffs.grid {
        return Err(Error::GridMismatch);
    }
    let grads: Vec<Vec<C64>> = gradient(u).into_iter().map(|f| f.into_data()).collect();
    let (flux, scalar) = apply_l_physical(coeffs, u.data(), &grads);
    let flux: Vec<Field> = flux.into_iter().map(|d| Field::from_raw(&coeffs.grid, d)).collect();
    let div = lattice::divergence(&flux)?;
    let mut out = Field::from_raw(&coeffs.grid, scalar);
    out.axpy(-ONE, &div)?;
    Ok(out)
}

/// `L* u` built from [`CoefficientSet::adjoint`].
pub fn apply_l_adjoint(coeffs: &CoefficientSet, u: &Field) -> Result<Field> {
    apply_l(&coeffs.adjoint(), u)
}

/// `(∂t + L + κ) u`.
pub fn apply_h(coeffs: &CoefficientSet, u: &Field, kappa: f64) -> Result<Field> {
    let mut out = apply_l(coeffs, u)?;
    out.axpy(ONE, &lattice::time_derivative(u))?;
    out.axpy(C64::new(kappa, 0.0), u)?;
    Ok(out)
}

/// `(−∂t + L* + κ) u`.
pub fn apply_h_adjoint(coeffs: &CoefficientSet, u: &Field, kappa: f64) -> Result<Field> {
    let mut out = apply_l_adjoint(coeffs, u)?;
    out.axpy(-ONE, &lattice::time_derivative(u))?;
    out.axpy(C64::new(kappa, 0.0), u)?;
    Ok(out)
}

fn inner_raw(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// `⟪∂t u, v⟫ + ⟪A∇u,∇v⟫ + ⟪𝐚u,∇v⟫ + ⟪𝐛·∇u,v⟫ + ⟪a0 u,v⟫`.
pub fn pairing(coeffs: &CoefficientSet, u: &Field, v: &Field) -> Result<C64> {
    if u.grid() != &coeffs.grid || v.grid() != &coeffs.grid {
        return Err(Error::GridMismatch);
    }
    let gu: Vec<Vec<C64>> = gradient(u).into_iter().map(|f| f.into_data()).collect();
    let gv: Vec<Vec<C64>> = gradient(v).into_iter().map(|f| f.into_data()).collect();
    let (flux, scalar) = apply_l_physical(coeffs, u.data(), &gu);
    let dt_u = lattice::time_derivative(u);
    let mut s = inner_raw(dt_u.data(), v.data()) + inner_raw(&scalar, v.data());
    for (fc, gc) in flux.iter().zip(&gv) {
        s += inner_raw(fc, gc);
    }
    Ok(s * coeffs.grid.cell_volume())
}

/// Pairing of the adjoint operator `−∂t + L*`.
pub fn pairing_adjoint(coeffs: &CoefficientSet, u: &Field, v: &Field) -> Result<C64> {
    let adj = coeffs.adjoint();
    let minus_dt = 2.0 * lattice::time_derivative(u).inner(v)?;
    Ok(pairing(&adj, u, v)? - minus_dt)
}

/// Lower-order part of the pairing, `⟪𝐚u,∇v⟫ + ⟪𝐛·∇u,v⟫ + ⟪a0 u,v⟫`.
pub fn lower_order_pairing(coeffs: &CoefficientSet, u: &Field, v: &Field) -> Result<C64> {
    let mut lower = coeffs.clone();
    let n = coeffs.grid.n;
    lower.a = vec![CoefficientField::zero(); n * n];
    let dt_part = lattice::time_derivative(u).inner(v)?;
    Ok(pairing(&lower, u, v)? - dt_part)
}

/// Conjugates `∂t + L` by `e^h` for a real spatial `h` (gradient computed spectrally).
pub fn davies_conjugate(coeffs: &CoefficientSet, h: &SpatialField) -> Result<CoefficientSet> {
    if h.grid().n != coeffs.grid.n || h.grid().nx != coeffs.grid.nx || h.grid().lx != coeffs.grid.lx {
        return Err(Error::GridMismatch);
    }
    let scale = h.max_abs().max(1.0);
    if h.data().iter().any(|z| z.im.abs() > 1e-12 * scale) {
        return Err(Error::InvalidArgument("Davies weight h must be real-valued".into()));
    }
    let real = h.map(|z| C64::new(z.re, 0.0));
    let grad: Vec<CoefficientField> = lattice::spatial_gradient(&real)
        .iter()
        .map(|g| CoefficientField::from_spatial(&g.map(|z| C64::new(z.re, 0.0))))
        .collect();
    davies_conjugate_grad(coeffs, &grad)
}

/// Conjugation with an explicitly supplied real gradient `∇h`
/// (e.g. a constant vector for affine `h`).
pub fn davies_conjugate_grad(coeffs: &CoefficientSet, grad_h: &[CoefficientField]) -> Result<CoefficientSet> {
    let g = &coeffs.grid;
    let n = g.n;
    if grad_h.len() != n {
        return Err(Error::Shape(format!("gradient has {} components, expected {n}", grad_h.len())));
    }
    for c in grad_h {
        c.check(g)?;
        let complex = match c {
            CoefficientField::Constant(z) => z.im != 0.0,
            CoefficientField::Spatial(v) | CoefficientField::Full(v) => v.iter().any(|z| z.im != 0.0),
        };
        if complex {
            return Err(Error::InvalidArgument("Davies weight h must be real-valued".into()));
        }
    }
    // a_c' = a_c − Σ_d A_cd ∂_d h
    let avec = (0..n)
        .map(|c| {
            let mut parts: Vec<&CoefficientField> = vec![&coeffs.avec[c]];
            parts.extend((0..n).map(|d| &coeffs.a[c * n + d]));
            parts.extend(grad_h.iter());
            CoefficientField::combine(g, &parts, |v| {
                let mut s = v[0];
                for d in 0..n {
                    s -= v[1 + d] * v[1 + n + d];
                }
                s
            })
        })
        .collect();
    // b_c' = b_c + Σ_d A_dc ∂_d h
    let bvec = (0..n)
        .map(|c| {
            let mut parts: Vec<&CoefficientField> = vec![&coeffs.bvec[c]];
            parts.extend((0..n).map(|d| &coeffs.a[d * n + c]));
            parts.extend(grad_h.iter());
            CoefficientField::combine(g, &parts, |v| {
                let mut s = v[0];
                for d in 0..n {
                    s += v[1 + d] * v[1 + n + d];
                }
                s
            })
        })
        .collect();
    // a0' = a0 − Σ_cd A_cd ∂_d h ∂_c h + Σ_c (a_c − b_c) ∂_c h
    let mut parts: Vec<&CoefficientField> = vec![&coeffs.a0];
    parts.extend(coeffs.a.iter());
    parts.extend(coeffs.avec.iter());
    parts.extend(coeffs.bvec.iter());
    parts.extend(grad_h.iter());
    let a0 = CoefficientField::combine(g, &parts, |v| {
        let (am, av, bv, gh) = (&v[1..1 + n * n], &v[1 + n * n..1 + n * n + n], &v[1 + n * n + n..1 + n * n + 2 * n], &v[1 + n * n + 2 * n..]);
        let mut s = v[0];
        for c in 0..n {
            for d in 0..n {
                s -= am[c * n + d] * gh[d] * gh[c];
            }
            s += (av[c] - bv[c]) * gh[c];
        }
        s
    });
    Ok(CoefficientSet { grid: g.clone(), a: coeffs.a.clone(), avec, bvec, a0 })
}

/// Norm used to normalize coercivity probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// `V̇`: `‖∇u‖² + ‖D_t^{1/2}u‖²`.
    Homogeneous,
    /// `𝒱`: `‖u‖² + ‖∇u‖² + ‖D_t^{1/2}u‖²`.
    Inhomogeneous,
}

impl NormMode {
    /// Squared-norm weight at `(τ, |ξ|²)`.
    #[inline]
    pub fn weight(self, tau: f64, xi2: f64) -> f64 {
        match self {
            Self::Homogeneous => tau.abs() + xi2,
            Self::Inhomogeneous => 1.0 + tau.abs() + xi2,
        }
    }

    /// Coercivity bound the theory guarantees: `δ/2` or `δ/4`.
    pub fn default_threshold(self, delta: f64) -> f64 {
        match self {
            Self::Homogeneous => delta / 2.0,
            Self::Inhomogeneous => delta / 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityCertificate {
    pub delta: f64,
    pub kappa: f64,
    pub min_ratio: f64,
    pub threshold: f64,
    pub probes: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateOptions {
    pub kappa: f64,
    pub delta: f64,
    pub probes: usize,
    pub seed: u64,
    pub mode: NormMode,
    /// Defaults to [`NormMode::default_threshold`].
    pub threshold: Option<f64>,
}

/// Band-limited random probe in unnormalized DFT coefficients: complex Gaussian
/// on `|k| ≤ Nt/4`, `|j| ≤ Nx/4`, zero joint mode, unit norm in `mode`.
pub(crate) fn probe_spectrum(grid: &SpaceTimeGrid, seed: u64, id: u64, mode: NormMode) -> Vec<C64> {
    let mut rng = rng::stream(seed, id);
    let ns = grid.spatial_len();
    let (kt, kx) = ((grid.nt / 4) as i64, (grid.nx / 4) as i64);
    let mut hat = vec![ZERO; grid.len()];
    for k in 0..grid.nt {
        let kk = lattice::signed_bin(k, grid.nt);
        for ix in 0..ns {
            let idx = grid.unravel(ix);
            let inside = kk.abs() <= kt && (0..grid.n).all(|c| lattice::signed_bin(idx[c], grid.nx).abs() <= kx);
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            if inside && !(k == 0 && ix == 0) {
                hat[k * ns + ix] = C64::new(re, im);
            }
        }
    }
    let nrm = spectral_norm_sq(grid, &hat, mode).sqrt();
    hat.iter_mut().for_each(|z| *z /= nrm);
    hat
}

/// `‖u‖²` in the given norm from unnormalized DFT coefficients.
pub(crate) fn spectral_norm_sq(grid: &SpaceTimeGrid, hat: &[C64], mode: NormMode) -> f64 {
    let ns = grid.spatial_len();
    let scale = grid.cell_volume() / grid.len() as f64;
    let mut s = 0.0;
    for k in 0..grid.nt {
        let tau = grid.tau_at(k);
        for ix in 0..ns {
            s += mode.weight(tau, grid.xi_sq(ix)) * hat[k * ns + ix].norm_sqr();
        }
    }
    s * scale
}

pub fn coercivity_certificate(coeffs: &CoefficientSet, kappa: f64, delta: f64, probes: usize, seed: u64) -> Result<CoercivityCertificate> {
    coercivity_certificate_with(
        coeffs,
        &CertificateOptions { kappa, delta, probes, seed, mode: NormMode::Homogeneous, threshold: None },
    )
}

pub fn coercivity_certificate_with(coeffs: &CoefficientSet, opts: &CertificateOptions) -> Result<CoercivityCertificate> {
    if opts.probes == 0 {
        return Err(Error::InvalidArgument("at least one probe is required".into()));
    }
    if !(opts.delta > 0.0) {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    certificate_for(&crate::solver::SpaceTimeOperator::forward(coeffs, opts.kappa), opts)
}

/// Certificate for an already built operator (either time direction).
pub(crate) fn certificate_for(op: &crate::solver::SpaceTimeOperator, opts: &CertificateOptions) -> Result<CoercivityCertificate> {
    let grid = op.grid();
    let min_ratio = (0..opts.probes)
        .into_par_iter()
        .map(|i| {
            let hat = probe_spectrum(grid, opts.seed, i as u64, opts.mode);
            coercivity_ratio_hat(op, &hat, opts.delta, opts.mode)
        })
        .reduce(|| f64::INFINITY, f64::min);
    let threshold = opts.threshold.unwrap_or_else(|| opts.mode.default_threshold(opts.delta));
    Ok(CoercivityCertificate {
        delta: opts.delta,
        kappa: opts.kappa,
        min_ratio,
        threshold,
        probes: opts.probes,
        pass: min_ratio >= threshold,
    })
}

/// `Re⟪(H+κ)u, (Id+δH_t)u⟫ / ‖u‖²` for a probe given by DFT coefficients.
pub(crate) fn coercivity_ratio_hat(op: &crate::solver::SpaceTimeOperator, hat: &[C64], delta: f64, mode: NormMode) -> f64 {
    let grid = op.grid();
    let ns = grid.spatial_len();
    let hu = op.apply_hat(hat);
    let mut num = 0.0;
    for k in 0..grid.nt {
        let test = C64::new(1.0, -delta * lattice::sign(grid.tau_at(k)) * op.time_sign());
        for ix in 0..ns {
            let p = k * ns + ix;
            num += (hu[p] * test * hat[p].conj()).re;
        }
    }
    num * grid.cell_volume() / grid.len() as f64 / spectral_norm_sq(grid, hat, mode)
}

/// Same ratio for a physical-space probe field.
pub fn coercivity_ratio(coeffs: &CoefficientSet, u: &Field, kappa: f64, delta: f64, mode: NormMode) -> Result<f64> {
    if u.grid() != &coeffs.grid {
        return Err(Error::GridMismatch);
    }
    let mut hat = u.data().to_vec();
    lattice::dft(&coeffs.grid, &mut hat, false);
    hat[0] = ZERO;
    let op = crate::solver::SpaceTimeOperator::forward(coeffs, kappa);
    Ok(coercivity_ratio_hat(&op, &hat, delta, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;
    use rand::Rng;

    fn random_field(g: &SpaceTimeGrid, seed: u64) -> Field {
        let mut r = rng::stream(seed, 0);
        Field::from_raw(g, (0..g.len()).map(|_| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect())
    }

    fn random_coeff(g: &SpaceTimeGrid, seed: u64, scale: f64) -> CoefficientField {
        let mut r = rng::stream(seed, 1);
        CoefficientField::Full((0..g.len()).map(|_| C64::new(r.gen_range(-scale..scale), r.gen_range(-scale..scale))).collect())
    }

    fn random_set(g: &SpaceTimeGrid, seed: u64) -> CoefficientSet {
        let n = g.n;
        let a = (0..n * n)
            .map(|i| {
                let c = random_coeff(g, seed + i as u64, 0.3);
                if i / n == i % n {
                    c.map(|z| z + 1.0)
                } else {
                    c
                }
            })
            .collect();
        let avec = (0..n).map(|i| random_coeff(g, seed + 50 + i as u64, 0.5)).collect();
        let bvec = (0..n).map(|i| random_coeff(g, seed + 80 + i as u64, 0.5)).collect();
        CoefficientSet::new(g, a, avec, bvec, random_coeff(g, seed + 99, 0.5)).unwrap()
    }

    #[test]
    fn identity_on_pure_mode_is_eigenvalue() {
        let g = make_grid(2, 8, 2.0 * std::f64::consts::PI, 8, 1.0).unwrap();
        let u = Field::from_fn(&g, |_, x| C64::from_polar(1.0, x[0]));
        let lu = apply_l(&CoefficientSet::identity(&g), &u).unwrap();
        assert!((&lu - &u).norm() < 1e-12);
        assert!(apply_l(&CoefficientSet::identity(&g), &Field::zeros(&g)).unwrap().norm() == 0.0);
    }

    #[test]
    fn adjoint_consistency_random_coefficients() {
        let g = make_grid(2, 8, 3.0, 8, 2.0).unwrap();
        let c = random_set(&g, 1);
        let (u, v) = (random_field(&g, 2), random_field(&g, 3));
        let lhs = apply_l(&c, &u).unwrap().inner(&v).unwrap();
        let rhs = apply_l_adjoint(&c, &v).unwrap().inner(&u).unwrap().conj();
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
        let p = pairing(&c, &u, &v).unwrap();
        let q = pairing_adjoint(&c, &v, &u).unwrap().conj();
        assert!((p - q).norm() < 1e-10 * p.norm().max(1.0));
    }

    #[test]
    fn pairing_matches_operator_application() {
        let g = make_grid(1, 16, 3.0, 8, 2.0).unwrap();
        let c = random_set(&g, 4);
        let (u, v) = (random_field(&g, 5), random_field(&g, 6));
        let p = pairing(&c, &u, &v).unwrap();
        let q = apply_h(&c, &u, 0.0).unwrap().inner(&v).unwrap();
        assert!((p - q).norm() < 1e-10 * p.norm());
    }

    #[test]
    fn symmetric_form_is_real() {
        let g = make_grid(2, 8, 3.0, 8, 2.0).unwrap();
        let mut c = random_set(&g, 7);
        // Hermitian A, real a = b, a0 = 0
        let n = 2;
        let a01 = c.a[1].clone();
        c.a[2] = a01.map(|z| z.conj());
        c.a[0] = c.a[0].map(|z| C64::new(z.re, 0.0));
        c.a[3] = c.a[3].map(|z| C64::new(z.re, 0.0));
        for i in 0..n {
            c.avec[i] = c.avec[i].map(|z| C64::new(z.re, 0.0));
            c.bvec[i] = c.avec[i].clone();
        }
        c.a0 = CoefficientField::zero();
        let u = random_field(&g, 8);
        let z = apply_l(&c, &u).unwrap().inner(&u).unwrap();
        assert!(z.im.abs() < 1e-10 * z.norm());
    }

    #[test]
    fn garding_examples() {
        let g = make_grid(2, 8, 1.0, 8, 1.0).unwrap();
        let b = garding_constants(&CoefficientSet::identity(&g));
        assert!((b.lambda - 1.0).abs() < 1e-14 && (b.big_lambda - 1.0).abs() < 1e-14);
        let mut c = CoefficientSet::identity(&g);
        c.a[0] = CoefficientField::real(2.0);
        c.a[3] = CoefficientField::real(0.5);
        let b = garding_constants(&c);
        assert!((b.lambda - 0.5).abs() < 1e-12 && (b.big_lambda - 2.0).abs() < 1e-12);
        c.a = vec![
            CoefficientField::real(1.0),
            CoefficientField::Constant(C64::new(0.0, 1.0)),
            CoefficientField::Constant(C64::new(0.0, -1.0)),
            CoefficientField::real(1.0),
        ];
        let b = garding_constants(&c);
        assert!(b.lambda.abs() < 1e-12 && !b.elliptic);
        assert!((b.big_lambda - 2.0).abs() < 1e-12);
    }

    #[test]
    fn davies_affine_heat() {
        let g = make_grid(2, 8, 4.0, 8, 1.0).unwrap();
        let zeta = [0.3, -0.7];
        let grad: Vec<_> = zeta.iter().map(|&z| CoefficientField::real(z)).collect();
        let c = davies_conjugate_grad(&CoefficientSet::identity(&g), &grad).unwrap();
        for i in 0..2 {
            assert_eq!(c.avec[i], CoefficientField::real(-zeta[i]));
            assert_eq!(c.bvec[i], CoefficientField::real(zeta[i]));
        }
        let want = -(zeta[0] * zeta[0] + zeta[1] * zeta[1]);
        match c.a0 {
            CoefficientField::Constant(z) => assert!((z.re - want).abs() < 1e-14 && z.im == 0.0),
            _ => panic!("constant expected"),
        }
    }

    #[test]
    fn davies_constant_h_is_identity_and_complex_rejected() {
        let g = make_grid(1, 16, 4.0, 8, 1.0).unwrap();
        let c = random_set(&g, 9);
        let h = SpatialField::from_fn(&g, |_| C64::new(3.0, 0.0));
        let d = davies_conjugate(&c, &h).unwrap();
        let u = random_field(&g, 10);
        assert!((&apply_l(&d, &u).unwrap() - &apply_l(&c, &u).unwrap()).norm() < 1e-10 * u.norm());
        let hc = SpatialField::from_fn(&g, |_| C64::new(0.0, 1.0));
        assert!(davies_conjugate(&c, &hc).is_err());
    }

    #[test]
    fn davies_conjugation_identity_smooth() {
        let g = make_grid(1, 64, 2.0 * std::f64::consts::PI, 16, 1.0).unwrap();
        let mut c = CoefficientSet::identity(&g);
        c.a[0] = CoefficientField::Spatial(
            (0..64).map(|i| C64::new(1.5 + 0.3 * (i as f64 * 2.0 * std::f64::consts::PI / 64.0).cos(), 0.1)).collect(),
        );
        let h = SpatialField::from_fn(&g, |x| C64::new(0.4 * x[0].sin(), 0.0));
        let conj = davies_conjugate(&c, &h).unwrap();
        let u = Field::from_fn(&g, |t, x| C64::new((x[0]).cos() * (2.0 * std::f64::consts::PI * t).sin(), 0.2 * (2.0 * x[0]).sin()));
        let eh: Vec<C64> = h.data().iter().map(|z| C64::new(z.re.exp(), 0.0)).collect();
        let mut damped = u.clone();
        for k in 0..g.nt {
            for (z, e) in damped.slice_data_mut(k).iter_mut().zip(&eh) {
                *z /= e;
            }
        }
        let mut lhs = apply_h(&c, &damped, 0.0).unwrap();
        for k in 0..g.nt {
            for (z, e) in lhs.slice_data_mut(k).iter_mut().zip(&eh) {
                *z *= e;
            }
        }
        let rhs = apply_h(&conj, &u, 0.0).unwrap();
        // band-limited to aliasing level: e^{±h} is entire, 64 points resolve it
        assert!((&lhs - &rhs).norm() < 1e-8 * u.norm());
    }

    #[test]
    fn certificate_identity_meets_half_delta() {
        let g = make_grid(1, 16, 6.0, 16, 4.0).unwrap();
        let cert = coercivity_certificate(&CoefficientSet::identity(&g), 0.0, 0.5, 100, 3).unwrap();
        assert!(cert.pass && cert.min_ratio >= 0.25, "{cert:?}");
    }

    #[test]
    fn single_mode_ratio_closed_form() {
        let g = make_grid(1, 8, 2.0 * std::f64::consts::PI, 8, 2.0 * std::f64::consts::PI).unwrap();
        let delta = 0.3;
        for (tk, xk) in [(1.0, 1.0), (2.0, 1.0), (-3.0, 2.0), (0.0, 1.0)] {
            let u = Field::from_fn(&g, |t, x| C64::from_polar(1.0, tk * t + xk * x[0]));
            let r = coercivity_ratio(&CoefficientSet::identity(&g), &u, 0.0, delta, NormMode::Homogeneous).unwrap();
            let tau: f64 = tk;
            let xi2 = xk * xk;
            let want = (delta * tau.abs() + xi2) / (tau.abs() + xi2);
            assert!((r - want).abs() < 1e-12, "{r} vs {want}");
        }
    }

    #[test]
    fn certificate_increases_with_kappa() {
        let g = make_grid(1, 16, 6.0, 16, 4.0).unwrap();
        let mut c = CoefficientSet::identity(&g);
        c.a0 = CoefficientField::Spatial((0..16).map(|i| C64::new(3.0 * (i as f64 / 16.0), 0.0)).collect());
        let mut last = f64::NEG_INFINITY;
        for kappa in [0.0, 0.5, 1.0, 2.0] {
            let cert = coercivity_certificate(&c, kappa, 0.25, 20, 1).unwrap();
            assert!(cert.min_ratio > last);
            last = cert.min_ratio;
        }
    }
}
