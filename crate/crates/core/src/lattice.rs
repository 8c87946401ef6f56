//! Periodic space-time lattice, spectral transforms and Fourier multipliers.
//!
//! Samples live on `[0, Lt) x [0, Lx)^n`, stored time-major with space in
//! row-major order. Transforms approximate the continuum Fourier transform:
//! `û(τ,ξ) = Σ u(t,x) e^{-i(τt+ξ·x)} dt dxⁿ`, so that
//! `Σ|u|² dt dxⁿ = (Lt Lxⁿ)^{-1} Σ|û|²`.

use crate::error::{Error, Result};
use crate::fft;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid {
    pub n: usize,
    pub nx: usize,
    pub lx: f64,
    pub nt: usize,
    pub lt: f64,
    tau: Arc<[f64]>,
    xi: Arc<[f64]>,
}

fn ordered_freqs(count: usize, period: f64) -> Arc<[f64]> {
    let half = (count / 2) as i64;
    (-half..half).map(|k| 2.0 * PI * k as f64 / period).collect()
}

/// Signed integer frequency of FFT bin `j` for a length-`n` transform.
/// The Nyquist bin maps to `-n/2`.
#[inline]
pub fn signed_bin(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

pub fn make_grid(n: usize, nx: usize, lx: f64, nt: usize, lt: f64) -> Result<SpaceTimeGrid> {
    SpaceTimeGrid::new(n, nx, lx, nt, lt)
}

impl SpaceTimeGrid {
    pub fn new(n: usize, nx: usize, lx: f64, nt: usize, lt: f64) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::InvalidGrid(format!("dimension {n} not in {{1,2,3}}")));
        }
        for (name, c) in [("Nx", nx), ("Nt", nt)] {
            if c < 8 || !c.is_power_of_two() {
                return Err(Error::InvalidGrid(format!("{name} = {c} is not a power of two >= 8")));
            }
        }
        if !(lx.is_finite() && lx > 0.0 && lt.is_finite() && lt > 0.0) {
            return Err(Error::InvalidGrid("periods must be positive and finite".into()));
        }
        Ok(Self {
            n,
            nx,
            lx,
            nt,
            lt,
            tau: ordered_freqs(nt, lt),
            xi: ordered_freqs(nx, lx),
        })
    }

    pub fn dt(&self) -> f64 {
        self.lt / self.nt as f64
    }
    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    /// `dxⁿ`
    pub fn space_cell(&self) -> f64 {
        self.dx().powi(self.n as i32)
    }
    /// `dt·dxⁿ`
    pub fn cell_volume(&self) -> f64 {
        self.dt() * self.space_cell()
    }
    pub fn spatial_len(&self) -> usize {
        self.nx.pow(self.n as u32)
    }
    pub fn len(&self) -> usize {
        self.nt * self.spatial_len()
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn space_volume(&self) -> f64 {
        self.lx.powi(self.n as i32)
    }
    pub fn spatial_dims(&self) -> Vec<usize> {
        vec![self.nx; self.n]
    }
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.nt];
        d.extend(self.spatial_dims());
        d
    }

    /// Ordered table `τ_k`, `k = -Nt/2 .. Nt/2-1`.
    pub fn tau_table(&self) -> &[f64] {
        &self.tau
    }
    /// Ordered table `ξ_j` per axis, `j = -Nx/2 .. Nx/2-1`.
    pub fn xi_table(&self) -> &[f64] {
        &self.xi
    }

    /// `τ` of FFT bin `k`.
    #[inline]
    pub fn tau_at(&self, k: usize) -> f64 {
        2.0 * PI * signed_bin(k, self.nt) as f64 / self.lt
    }
    #[inline]
    pub fn xi_1d(&self, j: usize) -> f64 {
        2.0 * PI * signed_bin(j, self.nx) as f64 / self.lx
    }

    /// Multi-index of a spatial linear index (unused axes are 0).
    #[inline]
    pub fn unravel(&self, ix: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rem = ix;
        for c in (0..self.n).rev() {
            idx[c] = rem % self.nx;
            rem /= self.nx;
        }
        idx
    }

    #[inline]
    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().take(self.n).fold(0, |acc, &i| acc * self.nx + (i % self.nx))
    }

    /// Frequency vector of spatial FFT bin `ix`.
    #[inline]
    pub fn xi_vec(&self, ix: usize) -> [f64; 3] {
        let idx = self.unravel(ix);
        let mut out = [0.0; 3];
        for c in 0..self.n {
            out[c] = self.xi_1d(idx[c]);
        }
        out
    }

    #[inline]
    pub fn xi_sq(&self, ix: usize) -> f64 {
        self.xi_vec(ix).iter().map(|v| v * v).sum()
    }

    /// Physical coordinates of spatial lattice point `ix`.
    #[inline]
    pub fn point(&self, ix: usize) -> [f64; 3] {
        let idx = self.unravel(ix);
        let dx = self.dx();
        let mut out = [0.0; 3];
        for c in 0..self.n {
            out[c] = idx[c] as f64 * dx;
        }
        out
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Periodic distance between two spatial lattice points.
    pub fn torus_distance(&self, a: usize, b: usize) -> f64 {
        let (ia, ib) = (self.unravel(a), self.unravel(b));
        let mut d2 = 0.0;
        for c in 0..self.n {
            let raw = (ia[c] as i64 - ib[c] as i64).rem_euclid(self.nx as i64) as usize;
            let steps = raw.min(self.nx - raw);
            d2 += (steps as f64 * self.dx()).powi(2);
        }
        d2.sqrt()
    }

    /// Periodic time separation `t_b - t_a` folded into `[0, Lt)`.
    pub fn forward_lag(&self, from: usize, to: usize) -> usize {
        (to + self.nt - from % self.nt) % self.nt
    }

    fn check(&self, other: &SpaceTimeGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

fn check_finite(data: &[C64], what: &'static str) -> Result<()> {
    if data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: SpaceTimeGrid,
    data: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    grid: SpaceTimeGrid,
    data: Vec<C64>,
}

/// Frequency representation of a [`Field`], bins in FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: SpaceTimeGrid,
    data: Vec<C64>,
}

macro_rules! common_field_api {
    ($ty:ident, $len:ident, $weight:ident, $what:literal) => {
        impl $ty {
            pub fn new(grid: &SpaceTimeGrid, data: Vec<C64>) -> Result<Self> {
                if data.len() != grid.$len() {
                    return Err(Error::Shape(format!(
                        "{} expects {} samples, got {}",
                        $what,
                        grid.$len(),
                        data.len()
                    )));
                }
                check_finite(&data, $what)?;
                Ok(Self { grid: grid.clone(), data })
            }
            #[allow(dead_code)]
            pub(crate) fn from_raw(grid: &SpaceTimeGrid, data: Vec<C64>) -> Self {
                debug_assert_eq!(data.len(), grid.$len());
                Self { grid: grid.clone(), data }
            }
            pub fn zeros(grid: &SpaceTimeGrid) -> Self {
                Self { grid: grid.clone(), data: vec![C64::default(); grid.$len()] }
            }
            pub fn grid(&self) -> &SpaceTimeGrid {
                &self.grid
            }
            pub fn data(&self) -> &[C64] {
                &self.data
            }
            pub fn data_mut(&mut self) -> &mut [C64] {
                &mut self.data
            }
            pub fn into_data(self) -> Vec<C64> {
                self.data
            }
            /// Discrete inner product `Σ self · conj(other) · cell`.
            pub fn inner(&self, other: &Self) -> Result<C64> {
                self.grid.check(&other.grid)?;
                let s: C64 = self.data.iter().zip(&other.data).map(|(a, b)| a * b.conj()).sum();
                Ok(s * self.grid.$weight())
            }
            pub fn norm(&self) -> f64 {
                (self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.$weight()).sqrt()
            }
            pub fn max_abs(&self) -> f64 {
                self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
            }
            pub fn scaled(&self, c: C64) -> Self {
                Self { grid: self.grid.clone(), data: self.data.iter().map(|z| z * c).collect() }
            }
            /// `self += a·x`
            pub fn axpy(&mut self, a: C64, x: &Self) -> Result<()> {
                self.grid.check(&x.grid)?;
                for (y, v) in self.data.iter_mut().zip(&x.data) {
                    *y += a * v;
                }
                Ok(())
            }
            pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
                Self { grid: self.grid.clone(), data: self.data.iter().map(|&z| f(z)).collect() }
            }
            pub fn conj(&self) -> Self {
                self.map(|z| z.conj())
            }
            /// Pointwise product.
            pub fn mul(&self, other: &Self) -> Result<Self> {
                self.grid.check(&other.grid)?;
                Ok(Self {
                    grid: self.grid.clone(),
                    data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
                })
            }
        }

        impl std::ops::Add for &$ty {
            type Output = $ty;
            /// # Panics
            /// On grid mismatch.
            fn add(self, rhs: &$ty) -> $ty {
                let mut out = self.clone();
                out.axpy(C64::new(1.0, 0.0), rhs).expect("grid mismatch in addition");
                out
            }
        }

        impl std::ops::Sub for &$ty {
            type Output = $ty;
            /// # Panics
            /// On grid mismatch.
            fn sub(self, rhs: &$ty) -> $ty {
                let mut out = self.clone();
                out.axpy(C64::new(-1.0, 0.0), rhs).expect("grid mismatch in subtraction");
                out
            }
        }
    };
}

common_field_api!(Field, len, cell_volume, "Field");
common_field_api!(SpatialField, spatial_len, space_cell, "SpatialField");

impl Field {
    /// Samples `f(t, x)` at every lattice point.
    pub fn from_fn(grid: &SpaceTimeGrid, f: impl Fn(f64, &[f64]) -> C64) -> Self {
        let ns = grid.spatial_len();
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..grid.nt {
            let t = grid.time(k);
            for ix in 0..ns {
                let p = grid.point(ix);
                data.push(f(t, &p[..grid.n]));
            }
        }
        Self { grid: grid.clone(), data }
    }

    pub fn from_slices(grid: &SpaceTimeGrid, slices: &[SpatialField]) -> Result<Self> {
        if slices.len() != grid.nt {
            return Err(Error::Shape(format!("expected {} slices, got {}", grid.nt, slices.len())));
        }
        let mut data = Vec::with_capacity(grid.len());
        for s in slices {
            grid.check(&s.grid)?;
            data.extend_from_slice(&s.data);
        }
        Ok(Self { grid: grid.clone(), data })
    }

    /// Tensor product `f(t)·ψ(x)`.
    pub fn tensor(time: &[C64], psi: &SpatialField) -> Result<Self> {
        let grid = psi.grid();
        if time.len() != grid.nt {
            return Err(Error::Shape("time profile length differs from Nt".into()));
        }
        let mut data = Vec::with_capacity(grid.len());
        for &a in time {
            data.extend(psi.data.iter().map(|z| a * z));
        }
        Ok(Self { grid: grid.clone(), data })
    }

    pub fn slice_data(&self, k: usize) -> &[C64] {
        let ns = self.grid.spatial_len();
        &self.data[k * ns..(k + 1) * ns]
    }

    pub fn slice_data_mut(&mut self, k: usize) -> &mut [C64] {
        let ns = self.grid.spatial_len();
        &mut self.data[k * ns..(k + 1) * ns]
    }

    pub fn slice(&self, k: usize) -> SpatialField {
        SpatialField { grid: self.grid.clone(), data: self.slice_data(k).to_vec() }
    }

    pub fn set_slice(&mut self, k: usize, s: &SpatialField) -> Result<()> {
        self.grid.check(&s.grid)?;
        self.slice_data_mut(k).copy_from_slice(&s.data);
        Ok(())
    }

    /// Spatial L² norm of every time slice.
    pub fn slice_norms(&self) -> Vec<f64> {
        let w = self.grid.space_cell();
        self.data
            .chunks(self.grid.spatial_len())
            .map(|s| (s.iter().map(|z| z.norm_sqr()).sum::<f64>() * w).sqrt())
            .collect()
    }
}

impl SpatialField {
    pub fn from_fn(grid: &SpaceTimeGrid, f: impl Fn(&[f64]) -> C64) -> Self {
        let data = (0..grid.spatial_len())
            .map(|ix| {
                let p = grid.point(ix);
                f(&p[..grid.n])
            })
            .collect();
        Self { grid: grid.clone(), data }
    }

    /// Unit-valued discrete delta at lattice point `ix` (not scaled by `dx⁻ⁿ`).
    pub fn basis(grid: &SpaceTimeGrid, ix: usize) -> Self {
        let mut s = Self::zeros(grid);
        s.data[ix] = C64::new(1.0, 0.0);
        s
    }

    /// Constant-in-time extension.
    pub fn extend_in_time(&self) -> Field {
        let time = vec![C64::new(1.0, 0.0); self.grid.nt];
        Field::tensor(&time, self).expect("matching grid")
    }
}

impl Spectrum {
    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }
    /// Bins in FFT order: index `k·Nxⁿ + ix`.
    pub fn data(&self) -> &[C64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }
    pub fn get(&self, k: usize, ix: usize) -> C64 {
        self.data[k * self.grid.spatial_len() + ix]
    }
    /// Frequency-side L² norm, equal to the physical one by Parseval.
    pub fn norm(&self) -> f64 {
        let w = 1.0 / (self.grid.lt * self.grid.space_volume());
        (self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * w).sqrt()
    }
    pub fn zero_mode(&self) -> C64 {
        self.data[0]
    }
}

pub fn forward_transform(u: &Field) -> Spectrum {
    let g = &u.grid;
    let mut data = u.data.clone();
    fft::fft_all(&mut data, &g.dims(), false);
    let w = g.cell_volume();
    data.iter_mut().for_each(|z| *z *= w);
    Spectrum { grid: g.clone(), data }
}

pub fn inverse_transform(s: &Spectrum) -> Field {
    let g = &s.grid;
    let mut data = s.data.clone();
    fft::fft_all(&mut data, &g.dims(), true);
    let w = 1.0 / (g.lt * g.space_volume());
    data.iter_mut().for_each(|z| *z *= w);
    Field { grid: g.clone(), data }
}

/// Unnormalized DFT of a whole field in place (space-time).
pub(crate) fn dft(grid: &SpaceTimeGrid, data: &mut [C64], inverse: bool) {
    fft::fft_all(data, &grid.dims(), inverse);
    if inverse {
        let s = 1.0 / grid.len() as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }
}

/// Unnormalized spatial DFT of every time slice in place; `inverse` also rescales.
pub(crate) fn dft_space(grid: &SpaceTimeGrid, data: &mut [C64], inverse: bool) {
    let slices = data.len() / grid.spatial_len();
    let mut dims = vec![slices];
    dims.extend(grid.spatial_dims());
    fft::fft_trailing(data, &dims, grid.n, inverse);
    if inverse {
        let s = 1.0 / grid.spatial_len() as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MultiplierKind {
    /// `|τ|^α`, zero at `τ = 0`.
    TimeFraction(f64),
    /// `|ξ|^s`, zero at `ξ = 0`.
    SpatialFraction(f64),
    /// `i·sign(τ)`.
    HilbertT,
    /// `1/(iτ + |ξ|²)`, zero at the joint zero mode.
    HeatResolvent,
    /// `(|τ| + |ξ|²)^{1/2}`.
    VdotWeight,
    /// `(|τ| + |ξ|²)^{-1/2}`, zero at the joint zero mode.
    VdotInverseWeight,
    /// Arbitrary table supplied by the caller.
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSymbol {
    pub kind: MultiplierKind,
    grid: SpaceTimeGrid,
    values: Vec<C64>,
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Scalar symbol value of a built-in multiplier at `(τ, |ξ|²)`.
pub fn symbol_value(kind: &MultiplierKind, tau: f64, xi2: f64) -> C64 {
    let joint_zero = tau == 0.0 && xi2 == 0.0;
    let re = |v: f64| C64::new(v, 0.0);
    match *kind {
        MultiplierKind::TimeFraction(a) => {
            if tau == 0.0 {
                re(0.0)
            } else {
                re(tau.abs().powf(a))
            }
        }
        MultiplierKind::SpatialFraction(s) => {
            if xi2 == 0.0 {
                re(0.0)
            } else {
                re(xi2.powf(0.5 * s))
            }
        }
        MultiplierKind::HilbertT => C64::new(0.0, sign(tau)),
        MultiplierKind::HeatResolvent => {
            if joint_zero {
                re(0.0)
            } else {
                C64::new(xi2, tau).inv()
            }
        }
        MultiplierKind::VdotWeight => re((tau.abs() + xi2).sqrt()),
        MultiplierKind::VdotInverseWeight => {
            if joint_zero {
                re(0.0)
            } else {
                re(1.0 / (tau.abs() + xi2).sqrt())
            }
        }
        MultiplierKind::Custom => panic!("custom symbols carry their own table"),
    }
}

impl MultiplierSymbol {
    pub fn new(grid: &SpaceTimeGrid, kind: MultiplierKind) -> Self {
        if kind == MultiplierKind::Custom {
            return Self::custom(grid, |_, _| C64::new(1.0, 0.0));
        }
        let kind2 = kind.clone();
        let mut s = Self::custom(grid, move |tau, xi| {
            symbol_value(&kind2, tau, xi.iter().map(|v| v * v).sum())
        });
        s.kind = kind;
        s
    }

    /// Table from a closure `(τ, ξ) -> value`.
    pub fn custom(grid: &SpaceTimeGrid, f: impl Fn(f64, &[f64]) -> C64) -> Self {
        let ns = grid.spatial_len();
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.nt {
            let tau = grid.tau_at(k);
            for ix in 0..ns {
                let xi = grid.xi_vec(ix);
                values.push(f(tau, &xi[..grid.n]));
            }
        }
        Self { kind: MultiplierKind::Custom, grid: grid.clone(), values }
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn compose(&self, other: &MultiplierSymbol) -> Result<MultiplierSymbol> {
        self.grid.check(&other.grid)?;
        Ok(Self {
            kind: MultiplierKind::Custom,
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }
}

pub fn apply_multiplier(u: &Field, m: &MultiplierSymbol) -> Result<Field> {
    u.grid.check(&m.grid)?;
    let mut data = u.data.clone();
    dft(&u.grid, &mut data, false);
    for (z, s) in data.iter_mut().zip(&m.values) {
        *z *= s;
    }
    dft(&u.grid, &mut data, true);
    Ok(Field { grid: u.grid.clone(), data })
}

/// Applies a symbol given as a closure without materializing the table.
pub fn apply_symbol(u: &Field, f: impl Fn(f64, &[f64]) -> C64 + Sync) -> Field {
    let g = &u.grid;
    let ns = g.spatial_len();
    let mut data = u.data.clone();
    dft(g, &mut data, false);
    for k in 0..g.nt {
        let tau = g.tau_at(k);
        for ix in 0..ns {
            let xi = g.xi_vec(ix);
            data[k * ns + ix] *= f(tau, &xi[..g.n]);
        }
    }
    dft(g, &mut data, true);
    Field { grid: g.clone(), data }
}

/// Applies a purely spatial symbol to a spatial field.
pub fn apply_spatial_symbol(psi: &SpatialField, f: impl Fn(&[f64]) -> C64) -> SpatialField {
    let g = &psi.grid;
    let mut data = psi.data.clone();
    dft_space(g, &mut data, false);
    for (ix, z) in data.iter_mut().enumerate() {
        let xi = g.xi_vec(ix);
        *z *= f(&xi[..g.n]);
    }
    dft_space(g, &mut data, true);
    SpatialField { grid: g.clone(), data }
}

pub fn time_derivative(u: &Field) -> Field {
    apply_symbol(u, |tau, _| C64::new(0.0, tau))
}

pub fn gradient(u: &Field) -> Vec<Field> {
    let g = &u.grid;
    let ns = g.spatial_len();
    let mut hat = u.data.clone();
    dft_space(g, &mut hat, false);
    (0..g.n)
        .map(|c| {
            let mut d = hat.clone();
            for chunk in d.chunks_mut(ns) {
                for (ix, z) in chunk.iter_mut().enumerate() {
                    *z *= C64::new(0.0, g.xi_vec(ix)[c]);
                }
            }
            dft_space(g, &mut d, true);
            Field { grid: g.clone(), data: d }
        })
        .collect()
}

pub fn divergence(f: &[Field]) -> Result<Field> {
    let g = f
        .first()
        .map(|x| x.grid.clone())
        .ok_or_else(|| Error::Shape("divergence of an empty vector field".into()))?;
    if f.len() != g.n {
        return Err(Error::Shape(format!("divergence needs {} components, got {}", g.n, f.len())));
    }
    let ns = g.spatial_len();
    let mut acc = vec![C64::default(); g.len()];
    for (c, comp) in f.iter().enumerate() {
        g.check(&comp.grid)?;
        let mut d = comp.data.clone();
        dft_space(&g, &mut d, false);
        for (chunk, out) in d.chunks(ns).zip(acc.chunks_mut(ns)) {
            for (ix, (z, o)) in chunk.iter().zip(out.iter_mut()).enumerate() {
                *o += z * C64::new(0.0, g.xi_vec(ix)[c]);
            }
        }
    }
    dft_space(&g, &mut acc, true);
    Ok(Field { grid: g, data: acc })
}

pub fn spatial_gradient(psi: &SpatialField) -> Vec<SpatialField> {
    let g = &psi.grid;
    (0..g.n)
        .map(|c| apply_spatial_symbol(psi, |xi| C64::new(0.0, xi[c])))
        .collect()
}

/// Removes the joint `(τ,ξ) = (0,0)` mode, i.e. the space-time mean.
pub fn project_zero_mode(u: &Field) -> Field {
    let n = u.data.len() as f64;
    let mean: C64 = u.data.iter().sum::<C64>() / n;
    u.map(|z| z - mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: &SpaceTimeGrid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..g.len()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        Field::new(g, data).unwrap()
    }

    #[test]
    fn unit_period_tables_are_integers() {
        let g = make_grid(1, 8, 2.0 * PI, 8, 2.0 * PI).unwrap();
        let expect: Vec<f64> = (-4..4).map(|k| k as f64).collect();
        for (a, b) in g.tau_table().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in g.xi_table().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn spacing_arithmetic() {
        let g = make_grid(2, 16, 10.0, 32, 20.0).unwrap();
        assert_eq!(g.dt(), 0.625);
        assert_eq!(g.dx(), 0.625);
        assert!((g.cell_volume() - 0.625f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_counts_and_dimension() {
        assert!(make_grid(1, 8, 2.0 * PI, 7, 2.0 * PI).is_err());
        assert!(make_grid(1, 4, 1.0, 8, 1.0).is_err());
        assert!(make_grid(4, 8, 1.0, 8, 1.0).is_err());
        assert!(make_grid(1, 8, 0.0, 8, 1.0).is_err());
    }

    #[test]
    fn constant_lands_on_dc() {
        let g = make_grid(2, 8, 3.0, 8, 5.0).unwrap();
        let u = Field::from_fn(&g, |_, _| C64::new(2.0, -1.0));
        let s = forward_transform(&u);
        let total: f64 = s.data().iter().skip(1).map(|z| z.norm()).sum();
        assert!(total < 1e-10);
        // continuum transform of a constant over the box is c·Lt·Lx²
        assert!((s.zero_mode() - C64::new(2.0, -1.0) * 5.0 * 9.0).norm() < 1e-10);
    }

    #[test]
    fn pure_mode_single_coefficient() {
        let g = make_grid(1, 8, 2.0 * PI, 8, 2.0 * PI).unwrap();
        let u = Field::from_fn(&g, |t, x| C64::from_polar(1.0, t + x[0]));
        let s = forward_transform(&u);
        for k in 0..8 {
            for j in 0..8 {
                let v = s.get(k, j).norm();
                if k == 1 && j == 1 {
                    assert!((v - 4.0 * PI * PI).abs() < 1e-10);
                } else {
                    assert!(v < 1e-10);
                }
            }
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let g = make_grid(2, 8, 4.0, 16, 3.0).unwrap();
        let u = random_field(&g, 3);
        let s = forward_transform(&u);
        let back = inverse_transform(&s);
        assert!((&back - &u).norm() < 1e-12 * u.norm());
        assert!((s.norm() - u.norm()).abs() < 1e-12 * u.norm());
    }

    #[test]
    fn hilbert_of_cosine_is_minus_sine() {
        let g = make_grid(1, 16, 2.0 * PI, 32, 2.0 * PI).unwrap();
        let phi = |x: f64| (-(x - PI).powi(2)).exp();
        let u = Field::from_fn(&g, |t, x| C64::new((3.0 * t).cos() * phi(x[0]), 0.0));
        let h = apply_multiplier(&u, &MultiplierSymbol::new(&g, MultiplierKind::HilbertT)).unwrap();
        let want = Field::from_fn(&g, |t, x| C64::new(-(3.0 * t).sin() * phi(x[0]), 0.0));
        assert!((&h - &want).norm() < 1e-12 * want.norm());
    }

    #[test]
    fn vdot_weight_inverse_is_projection() {
        let g = make_grid(1, 8, 3.0, 8, 2.0).unwrap();
        let u = random_field(&g, 5);
        let w = MultiplierSymbol::new(&g, MultiplierKind::VdotWeight);
        let wi = MultiplierSymbol::new(&g, MultiplierKind::VdotInverseWeight);
        let out = apply_multiplier(&apply_multiplier(&u, &w).unwrap(), &wi).unwrap();
        let want = project_zero_mode(&u);
        assert!((&out - &want).norm() < 1e-12 * u.norm());
    }

    #[test]
    fn derivative_of_pure_mode() {
        let g = make_grid(2, 8, 2.0 * PI, 8, 1.0).unwrap();
        let u = Field::from_fn(&g, |_, x| C64::from_polar(1.0, x[0]));
        let grad = gradient(&u);
        let want = u.scaled(C64::new(0.0, 1.0));
        assert!((&grad[0] - &want).norm() < 1e-12);
        assert!(grad[1].norm() < 1e-12);
        let c = Field::from_fn(&g, |_, _| C64::new(1.0, 1.0));
        assert!(gradient(&c).iter().all(|d| d.norm() < 1e-12));
    }

    #[test]
    fn divergence_is_minus_adjoint_of_gradient() {
        let g = make_grid(3, 8, 5.0, 8, 2.0).unwrap();
        let u = random_field(&g, 11);
        let f: Vec<Field> = (0..3).map(|c| random_field(&g, 20 + c)).collect();
        let grad = gradient(&u);
        let lhs: C64 = grad.iter().zip(&f).map(|(a, b)| a.inner(b).unwrap()).sum();
        let rhs = u.inner(&divergence(&f).unwrap()).unwrap();
        let scale = u.norm() * f.iter().map(|x| x.norm().powi(2)).sum::<f64>().sqrt();
        assert!((lhs + rhs).norm() < 1e-10 * scale);
        assert!(divergence(&f[..2]).is_err());
    }

    #[test]
    fn torus_distance_wraps() {
        let g = make_grid(1, 8, 8.0, 8, 1.0).unwrap();
        assert_eq!(g.torus_distance(0, 7), 1.0);
        assert_eq!(g.torus_distance(1, 5), 4.0);
    }
}
