//! Seeded coefficient generators for the hypothesis classes exercised by the suites.

use crate::error::{Error, Result};
use crate::estimates::coulomb_coefficients;
use crate::lattice::{dft_space, signed_bin, SpaceTimeGrid};
use crate::norms::{coefficient_size, ExponentPair};
use crate::operator::{CoefficientField, CoefficientSet};
use crate::rng;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

fn default_band() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Identity,
    /// Pointwise `Re⟨Aζ,ζ⟩ ≥ λ|ζ|²` and `‖A‖ ≤ Λ`.
    RandomElliptic {
        lambda: f64,
        big_lambda: f64,
        /// Real symmetric `A` instead of complex.
        #[serde(default)]
        real_symmetric: bool,
        #[serde(default)]
        time_dependent: bool,
        /// Highest spatial frequency of the random fields.
        #[serde(default = "default_band")]
        band: usize,
    },
    /// `A` as in `random_elliptic` (or `Id` when both bounds are 1) with
    /// `𝐚, 𝐛, a0` scaled so that the mixed-norm size equals `p_target`.
    RandomLowerOrder {
        p_target: f64,
        pair: ExponentPair,
        #[serde(default = "one")]
        lambda: f64,
        #[serde(default = "one")]
        big_lambda: f64,
        #[serde(default)]
        time_dependent: bool,
        #[serde(default = "default_band")]
        band: usize,
    },
    Coulomb {
        re_c: f64,
        #[serde(default)]
        im_c: f64,
        cap: f64,
    },
    /// `A = Id` on alternating cells of side `Lx/cells`, `contrast·Id` elsewhere.
    Checkerboard {
        contrast: f64,
        #[serde(default = "four")]
        cells: usize,
    },
}

fn one() -> f64 {
    1.0
}
fn four() -> usize {
    4
}

/// Real band-limited random field with unit sup norm, time-major when `timed`.
fn smooth_field(grid: &SpaceTimeGrid, seed: u64, id: u32, band: usize, timed: bool) -> Vec<f64> {
    let ns = grid.spatial_len();
    let slices = if timed { grid.nt } else { 1 };
    let mut r = rng::stream(seed, rng::stream_id(0xF1, id));
    let tband = band.min(grid.nt / 4) as i64;
    // one random spatial spectrum per temporal harmonic, combined with cosines in time
    let harmonics = if timed { tband as usize + 1 } else { 1 };
    let mut spectra = Vec::with_capacity(harmonics);
    for _ in 0..harmonics {
        let mut hat = vec![C64::new(0.0, 0.0); ns];
        for (ix, h) in hat.iter_mut().enumerate() {
            let idx = grid.unravel(ix);
            let a: f64 = StandardNormal.sample(&mut r);
            let b: f64 = StandardNormal.sample(&mut r);
            if (0..grid.n).all(|c| signed_bin(idx[c], grid.nx).unsigned_abs() as usize <= band) {
                *h = C64::new(a, b);
            }
        }
        dft_space(grid, &mut hat, true);
        spectra.push(hat.into_iter().map(|z| z.re).collect::<Vec<f64>>());
    }
    let phases: Vec<f64> = (0..harmonics).map(|_| StandardNormal.sample(&mut r)).collect();
    let mut out = vec![0.0; slices * ns];
    for k in 0..slices {
        let t = grid.time(k);
        for (h, spec) in spectra.iter().enumerate() {
            let w = if h == 0 { 1.0 } else { (2.0 * std::f64::consts::PI * h as f64 * t / grid.lt + phases[h]).cos() };
            for ix in 0..ns {
                out[k * ns + ix] += w * spec[ix];
            }
        }
    }
    let top = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top > 0.0 {
        out.iter_mut().for_each(|v| *v /= top);
    }
    out
}

fn field(values: Vec<C64>, timed: bool) -> CoefficientField {
    if timed {
        CoefficientField::Full(values)
    } else {
        CoefficientField::Spatial(values)
    }
}

fn random_elliptic(grid: &SpaceTimeGrid, seed: u64, lambda: f64, big: f64, real: bool, timed: bool, band: usize) -> Result<CoefficientSet> {
    if !(lambda > 0.0 && big >= lambda) {
        return Err(Error::InvalidArgument(format!("need 0 < lambda <= Lambda, got ({lambda}, {big})")));
    }
    let n = grid.n;
    if big == lambda {
        return Ok(CoefficientSet::scalar_diffusion(grid, CoefficientField::real(lambda)));
    }
    // N = GᵀG (+ skew-Hermitian K when complex); A = λ·Id + s·N with s from sup‖N‖
    let mut id = 0u32;
    let mut next = || {
        id += 1;
        smooth_field(grid, seed, id, band, timed)
    };
    let g_re: Vec<Vec<f64>> = (0..n * n).map(|_| next()).collect();
    let k_re: Vec<Vec<f64>> = (0..n * n).map(|_| if real { Vec::new() } else { next() }).collect();
    let k_im: Vec<Vec<f64>> = (0..n * n).map(|_| if real { Vec::new() } else { next() }).collect();
    let len = g_re[0].len();
    let mats: Vec<DMatrix<C64>> = (0..len)
        .map(|p| {
            let gm = DMatrix::from_fn(n, n, |i, j| C64::new(g_re[i * n + j][p], 0.0));
            let mut m = gm.adjoint() * &gm;
            if !real {
                let r = DMatrix::from_fn(n, n, |i, j| C64::new(k_re[i * n + j][p], k_im[i * n + j][p]));
                m += (&r - r.adjoint()) * C64::new(0.5, 0.0);
            }
            m
        })
        .collect();
    let top = mats.iter().map(|m| m.clone().singular_values().max()).fold(0.0f64, f64::max);
    let s = if top > 0.0 { (big - lambda) / top } else { 0.0 };
    let a = (0..n * n)
        .map(|e| {
            let (i, j) = (e / n, e % n);
            let vals = mats.iter().map(|m| m[(i, j)] * s + if i == j { lambda } else { 0.0 }).collect();
            field(vals, timed)
        })
        .collect();
    CoefficientSet::new(grid, a, vec![CoefficientField::zero(); n], vec![CoefficientField::zero(); n], CoefficientField::zero())
}

/// Builds the coefficient set of a generator; deterministic in `(generator, seed)`.
pub fn generate_coefficients(gen: &Generator, grid: &SpaceTimeGrid, seed: u64) -> Result<CoefficientSet> {
    match gen {
        Generator::Identity => Ok(CoefficientSet::identity(grid)),
        Generator::RandomElliptic { lambda, big_lambda, real_symmetric, time_dependent, band } => {
            random_elliptic(grid, seed, *lambda, *big_lambda, *real_symmetric, *time_dependent, *band)
        }
        Generator::RandomLowerOrder { p_target, pair, lambda, big_lambda, time_dependent, band } => {
            if !(*p_target >= 0.0) {
                return Err(Error::InvalidArgument("p_target must be non-negative".into()));
            }
            let mut set = random_elliptic(grid, seed, *lambda, *big_lambda, false, *time_dependent, *band)?;
            let n = grid.n;
            let mut id = 1000u32;
            let mut complex = || {
                id += 2;
                let re = smooth_field(grid, seed, id, *band, *time_dependent);
                let im = smooth_field(grid, seed, id + 1, *band, *time_dependent);
                re.into_iter().zip(im).map(|(a, b)| C64::new(a, b)).collect::<Vec<C64>>()
            };
            let avec: Vec<Vec<C64>> = (0..n).map(|_| complex()).collect();
            let bvec: Vec<Vec<C64>> = (0..n).map(|_| complex()).collect();
            let a0 = complex();
            let build = |scale: f64| {
                let mut s = set.clone();
                s.avec = avec.iter().map(|v| field(v.iter().map(|z| z * scale).collect(), *time_dependent)).collect();
                s.bvec = bvec.iter().map(|v| field(v.iter().map(|z| z * scale).collect(), *time_dependent)).collect();
                s.a0 = field(a0.iter().map(|z| z * scale).collect(), *time_dependent);
                s
            };
            let unit = coefficient_size(&build(1.0), *pair, false)?;
            if unit == 0.0 {
                return Err(Error::InvalidArgument("random lower-order fields vanished".into()));
            }
            set = build(p_target / unit);
            Ok(set)
        }
        Generator::Coulomb { re_c, im_c, cap } => {
            if grid.n != 3 {
                return Err(Error::Unsupported("the Coulomb generator needs n = 3".into()));
            }
            Ok(coulomb_coefficients(grid, C64::new(*re_c, *im_c), *cap))
        }
        Generator::Checkerboard { contrast, cells } => {
            if !(*contrast > 0.0) || *cells == 0 {
                return Err(Error::InvalidArgument("contrast must be positive and cells nonzero".into()));
            }
            let side = grid.lx / *cells as f64;
            let vals = (0..grid.spatial_len())
                .map(|ix| {
                    let p = grid.point(ix);
                    let parity: usize = p[..grid.n].iter().map(|x| (x / side).floor() as usize).sum();
                    C64::new(if parity.is_multiple_of(2) { 1.0 } else { *contrast }, 0.0)
                })
                .collect();
            Ok(CoefficientSet::scalar_diffusion(grid, CoefficientField::Spatial(vals)))
        }
    }
}
