//! Mixed Lebesgue and Lorentz norms, the variational norms, exponent-pair
//! algebra, coefficient sizes with their truncation splitting, and the
//! Gagliardo–Nirenberg ratio.

use crate::error::{Error, Result};
use crate::lattice::{self, dft, dft_space, Field, SpaceTimeGrid, SpatialField};
use crate::operator::{CoefficientField, CoefficientSet};
use num_complex::Complex64 as C64;
use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::Range;

type Q = Ratio<i64>;

/// A Lebesgue exponent in `[1,∞]`, stored as its exact reciprocal (`0` is `∞`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Exponent(Q);

impl Exponent {
    pub const INFINITY: Exponent = Exponent(Q::new_raw(0, 1));

    /// The exponent `num/den`.
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 || num == 0 || (num < 0) != (den < 0) {
            return Err(Error::InvalidExponent(format!("{num}/{den}")));
        }
        Self::from_reciprocal(Q::new(den, num))
    }

    pub fn integer(p: i64) -> Result<Self> {
        Self::new(p, 1)
    }

    /// Exponent with reciprocal `rec`; must lie in `[0,1]`.
    pub fn from_reciprocal(rec: Q) -> Result<Self> {
        if rec < Q::zero() || rec > Q::one() {
            return Err(Error::InvalidExponent(format!("reciprocal {rec} outside [0,1]")));
        }
        Ok(Self(rec))
    }

    pub fn reciprocal(self) -> Q {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_zero()
    }

    pub fn value(self) -> f64 {
        if self.is_infinite() {
            f64::INFINITY
        } else {
            *self.0.denom() as f64 / *self.0.numer() as f64
        }
    }

    fn recip_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    /// Hölder conjugate `p' = p/(p−1)`.
    pub fn conjugate(self) -> Self {
        Self(Q::one() - self.0)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            return write!(f, "inf");
        }
        let v = self.0.recip();
        if v.is_integer() {
            write!(f, "{}", v.numer())
        } else {
            write!(f, "{}/{}", v.numer(), v.denom())
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞") {
            return Ok(Self::INFINITY);
        }
        let bad = || Error::InvalidExponent(s.to_string());
        match t.split_once('/') {
            Some((a, b)) => Self::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
            None => {
                if let Ok(i) = t.parse::<i64>() {
                    return Self::integer(i);
                }
                from_float(t.parse().map_err(|_| bad())?)
            }
        }
    }
}

fn from_float(v: f64) -> Result<Exponent> {
    if v.is_infinite() && v > 0.0 {
        return Ok(Exponent::INFINITY);
    }
    let r = Q::approximate_float(v).ok_or_else(|| Error::InvalidExponent(v.to_string()))?;
    Exponent::new(*r.numer(), *r.denom())
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.is_infinite() && self.0.recip().is_integer() {
            s.serialize_i64(*self.0.recip().numer())
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Num(f64),
            Str(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Int(i) => Exponent::integer(i),
            Raw::Num(v) => from_float(v),
            Raw::Str(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// `(r, q)`: time exponent then space exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExponentPair {
    pub r: Exponent,
    pub q: Exponent,
}

impl ExponentPair {
    pub fn new(r: Exponent, q: Exponent) -> Self {
        Self { r, q }
    }

    /// Both exponents given as `num/den`; `den = 0` means `∞`.
    pub fn ratio(r: (i64, i64), q: (i64, i64)) -> Result<Self> {
        let e = |(a, b): (i64, i64)| if b == 0 { Ok(Exponent::INFINITY) } else { Exponent::new(a, b) };
        Ok(Self { r: e(r)?, q: e(q)? })
    }
}

impl fmt::Display for ExponentPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.r, self.q)
    }
}

/// `1/r + n/(2q) = n/4` with `2 ≤ r, q < ∞`.
pub fn is_admissible(p: ExponentPair, n: usize) -> bool {
    let half = Q::new(1, 2);
    let inside = |e: Exponent| e.0 > Q::zero() && e.0 <= half;
    let n = Q::from_integer(n as i64);
    inside(p.r) && inside(p.q) && p.r.0 + n * p.q.0 / 2 == n / 4
}

/// `1/r̃ + n/(2q̃) = 1` with `1 < r̃, q̃ ≤ ∞`.
pub fn is_compatible(p: ExponentPair, n: usize) -> bool {
    let inside = |e: Exponent| e.0 >= Q::zero() && e.0 < Q::one();
    let n = Q::from_integer(n as i64);
    inside(p.r) && inside(p.q) && p.r.0 + n * p.q.0 / 2 == Q::one()
}

/// `(r, q) = (2r̃′, 2q̃′)`.
pub fn conjugate_pair(p: ExponentPair) -> ExponentPair {
    let c = |e: Exponent| Exponent((Q::one() - e.0) / 2);
    ExponentPair { r: c(p.r), q: c(p.q) }
}

/// Lorentz index `(p, s)`; `p = ∞` is allowed only with `s = ∞` (the sup norm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzIndex {
    pub p: f64,
    pub s: f64,
}

impl LorentzIndex {
    pub fn new(p: f64, s: f64) -> Result<Self> {
        let idx = Self { p, s };
        idx.check()?;
        Ok(idx)
    }

    /// `L^{p,p} = L^p`.
    pub fn lebesgue(p: f64) -> Self {
        Self { p, s: p }
    }

    /// `L^{p,∞}`.
    pub fn weak(p: f64) -> Self {
        Self { p, s: f64::INFINITY }
    }

    fn check(&self) -> Result<()> {
        let ok = self.p >= 1.0 && self.s >= 1.0 && !(self.p.is_infinite() && self.s.is_finite());
        if ok && !self.p.is_nan() && !self.s.is_nan() {
            Ok(())
        } else {
            Err(Error::InvalidExponent(format!("Lorentz index ({}, {})", self.p, self.s)))
        }
    }
}

/// Lorentz norm of magnitudes on cells of measure `w`, evaluated exactly on
/// the step rearrangement.
pub fn lorentz_norm_values(values: &[f64], idx: LorentzIndex, w: f64) -> Result<f64> {
    idx.check()?;
    let mut f: Vec<f64> = values.iter().map(|v| v.abs()).filter(|v| *v > 0.0).collect();
    if f.is_empty() {
        return Ok(0.0);
    }
    f.sort_unstable_by(|a, b| b.total_cmp(a));
    if idx.p.is_infinite() {
        return Ok(f[0]);
    }
    let inv_p = 1.0 / idx.p;
    if idx.s.is_infinite() {
        return Ok(f
            .iter()
            .enumerate()
            .map(|(i, v)| ((i + 1) as f64 * w).powf(inv_p) * v)
            .fold(0.0, f64::max));
    }
    let e = idx.s / idx.p;
    // scale out the largest value so f^s cannot overflow
    let top = f[0];
    let mut sum = 0.0;
    for (i, v) in f.iter().enumerate() {
        let step = if i == 0 {
            w.powf(e)
        } else {
            let b = i as f64 * w;
            b.powf(e) * (e * (1.0 / i as f64).ln_1p()).exp_m1()
        };
        sum += (v / top).powf(idx.s) * step;
    }
    Ok(top * sum.powf(1.0 / idx.s))
}

/// Lorentz norm of one spatial field with cell measure `cell_volume`.
pub fn lorentz_norm(samples: &SpatialField, idx: LorentzIndex, cell_volume: f64) -> Result<f64> {
    let mags: Vec<f64> = samples.data().iter().map(|z| z.norm()).collect();
    lorentz_norm_values(&mags, idx, cell_volume)
}

fn lebesgue_values(values: &[f64], p: Exponent, w: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let pv = p.value();
    let top = values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().map(|v| (v.abs() / top).powf(pv)).sum();
    top * (s * w).powf(1.0 / pv)
}

/// Mixed norm of magnitudes laid out time-major as `nt` slices of `ns` cells.
fn mixed_values(mags: &[f64], grid: &SpaceTimeGrid, p: ExponentPair) -> f64 {
    let ns = grid.spatial_len();
    let inner: Vec<f64> = mags.chunks(ns).map(|c| lebesgue_values(c, p.q, grid.space_cell())).collect();
    lebesgue_values(&inner, p.r, grid.dt())
}

fn mixed_lorentz_values(mags: &[f64], grid: &SpaceTimeGrid, time: LorentzIndex, space: LorentzIndex) -> Result<f64> {
    let ns = grid.spatial_len();
    let inner = mags
        .chunks(ns)
        .map(|c| lorentz_norm_values(c, space, grid.space_cell()))
        .collect::<Result<Vec<f64>>>()?;
    lorentz_norm_values(&inner, time, grid.dt())
}

/// `(∫(∫|u|^q dx)^{r/q} dt)^{1/r}` by the cell quadrature, max for `∞`.
pub fn mixed_lebesgue_norm(u: &Field, p: ExponentPair) -> f64 {
    let mags: Vec<f64> = u.data().iter().map(|z| z.norm()).collect();
    mixed_values(&mags, u.grid(), p)
}

/// Inner Lorentz norm per time slice, then the outer Lorentz norm of the profile.
pub fn mixed_lorentz_norm(u: &Field, time: LorentzIndex, space: LorentzIndex) -> Result<f64> {
    let mags: Vec<f64> = u.data().iter().map(|z| z.norm()).collect();
    mixed_lorentz_values(&mags, u.grid(), time, space)
}

/// Squared norm of unnormalized DFT coefficients against a frequency weight.
fn weighted_spectrum_sq(grid: &SpaceTimeGrid, hat: &[C64], weight: impl Fn(f64, f64) -> f64) -> f64 {
    let ns = grid.spatial_len();
    let mut s = 0.0;
    for k in 0..grid.nt {
        let tau = grid.tau_at(k);
        for ix in 0..ns {
            let z = hat[k * ns + ix];
            if z != C64::default() {
                s += weight(tau, grid.xi_sq(ix)) * z.norm_sqr();
            }
        }
    }
    s * grid.cell_volume() / grid.len() as f64
}

/// `‖u‖_V̇` computed from the multiplier `(|τ|+|ξ|²)^{1/2}` and from
/// `(‖∇u‖² + ‖D_t^{1/2}u‖²)^{1/2}`; the joint zero mode is projected out first.
pub fn vdot_norm(u: &Field) -> (f64, f64) {
    let g = u.grid();
    let mut hat = u.data().to_vec();
    dft(g, &mut hat, false);
    hat[0] = C64::default();
    let a = weighted_spectrum_sq(g, &hat, |t, x| t.abs() + x).sqrt();
    let v = lattice::project_zero_mode(u);
    let grad: f64 = lattice::gradient(&v).iter().map(|f| f.norm().powi(2)).sum();
    let half = lattice::apply_symbol(&v, |tau, _| C64::new(tau.abs().sqrt(), 0.0)).norm();
    (a, (grad + half * half).sqrt())
}

/// `(‖u‖² + ‖u‖²_V̇)^{1/2}`.
pub fn inhomogeneous_norm(u: &Field) -> f64 {
    let g = u.grid();
    let mut hat = u.data().to_vec();
    dft(g, &mut hat, false);
    weighted_spectrum_sq(g, &hat, |t, x| 1.0 + t.abs() + x).sqrt()
}

/// Dual norm against the V̇ (or 𝒱) pairing: multiplier `(|τ|+|ξ|²)^{-1/2}`
/// (or `(1+|τ|+|ξ|²)^{-1/2}`); the joint zero mode is dropped in the homogeneous case.
pub fn dual_norm(f: &Field, mode: crate::operator::NormMode) -> f64 {
    let g = f.grid();
    let mut hat = f.data().to_vec();
    dft(g, &mut hat, false);
    if mode == crate::operator::NormMode::Homogeneous {
        hat[0] = C64::default();
    }
    weighted_spectrum_sq(g, &hat, |t, x| {
        let w = mode.weight(t, x);
        if w > 0.0 {
            1.0 / w
        } else {
            0.0
        }
    })
    .sqrt()
}

const ZERO_WEIGHT_TOL: f64 = 1e-12;

/// `‖ |τ|^{−θ/2}|ξ|^{−(1−θ)} ŵ ‖` over modes with nonzero weight.
pub fn h_theta_norm(w: &Field, theta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("theta = {theta} outside [0,1)")));
    }
    let g = w.grid();
    let mut hat = w.data().to_vec();
    dft(g, &mut hat, false);
    let ns = g.spatial_len();
    let total: f64 = hat.iter().map(|z| z.norm_sqr()).sum();
    let mut outside = 0.0;
    let mut s = 0.0;
    for k in 0..g.nt {
        let tau = g.tau_at(k).abs();
        for ix in 0..ns {
            let z = hat[k * ns + ix].norm_sqr();
            let xi = g.xi_sq(ix).sqrt();
            let m = tau.powf(theta / 2.0) * xi.powf(1.0 - theta);
            if m == 0.0 {
                outside += z;
            } else {
                s += z / (m * m);
            }
        }
    }
    if outside > ZERO_WEIGHT_TOL * ZERO_WEIGHT_TOL * total.max(f64::MIN_POSITIVE) && outside > 0.0 {
        return Err(Error::NotInHTheta);
    }
    Ok((s * g.cell_volume() / g.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSize {
    /// `P` of the small part in the compatible mixed norm.
    pub p_small: f64,
    /// Sup aggregate of the bounded part.
    pub p_inf: f64,
    pub epsilon: f64,
}

/// Which term of `L` a coefficient belongs to; first-order coefficients are
/// measured through `|a|²`, the potential through `|a0|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientOrder {
    First,
    Zero,
}

fn field_magnitudes(grid: &SpaceTimeGrid, parts: &[CoefficientField]) -> Vec<f64> {
    let ns = grid.spatial_len();
    let mut out = vec![0.0; grid.len()];
    for c in parts {
        for k in 0..grid.nt {
            for ix in 0..ns {
                out[k * ns + ix] += c.at(k, ix, ns).norm_sqr();
            }
        }
    }
    out
}

fn check_compatible(p: ExponentPair, n: usize) -> Result<()> {
    if !is_compatible(p, n) {
        return Err(Error::InvalidExponent(format!("{p} is not compatible for n = {n}")));
    }
    Ok(())
}

fn size_of(mags: &[f64], grid: &SpaceTimeGrid, p: ExponentPair, lorentz: bool) -> Result<f64> {
    if lorentz {
        let idx = |e: Exponent| LorentzIndex::weak(e.value());
        mixed_lorentz_values(mags, grid, idx(p.r), idx(p.q))
    } else {
        Ok(mixed_values(mags, grid, p))
    }
}

/// `P = ‖|𝐚|²‖^{1/2} + ‖|𝐛|²‖^{1/2} + ‖a0‖` in `L^{r̃}_t L^{q̃}_x`, or in the
/// weak spaces `L^{r̃,∞}_t L^{q̃,∞}_x` when `lorentz` is set.
pub fn coefficient_size(coeffs: &CoefficientSet, p: ExponentPair, lorentz: bool) -> Result<f64> {
    let g = coeffs.grid();
    check_compatible(p, g.n)?;
    let a2 = field_magnitudes(g, &coeffs.avec);
    let b2 = field_magnitudes(g, &coeffs.bvec);
    let c: Vec<f64> = field_magnitudes(g, std::slice::from_ref(&coeffs.a0)).into_iter().map(f64::sqrt).collect();
    Ok(size_of(&a2, g, p, lorentz)?.sqrt() + size_of(&b2, g, p, lorentz)?.sqrt() + size_of(&c, g, p, lorentz)?)
}

/// Splits `coeff = small + bounded` by truncation at the smallest height `M`
/// for which the part above `M` has size at most `ε`.
pub fn epsilon_decomposition(
    coeff: &Field,
    p: ExponentPair,
    eps: f64,
    order: CoefficientOrder,
) -> Result<(Field, Field, CoefficientSize)> {
    let g = coeff.grid();
    check_compatible(p, g.n)?;
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument("epsilon must be non-negative".into()));
    }
    let ns = g.spatial_len();
    let d = coeff.data();
    let time_dependent = (1..g.nt).any(|k| d[k * ns..(k + 1) * ns] != d[..ns]);
    if p.r.is_infinite() && time_dependent {
        return Err(Error::TruncationInsufficient(
            "r = inf: height truncation does not make a time-dependent coefficient small".into(),
        ));
    }
    let mags: Vec<f64> = d.iter().map(|z| z.norm()).collect();
    let size_above = |m: f64| {
        let part: Vec<f64> = mags
            .iter()
            .map(|&v| match order {
                CoefficientOrder::First if v > m => v * v,
                CoefficientOrder::Zero if v > m => v,
                _ => 0.0,
            })
            .collect();
        let s = mixed_values(&part, g, p);
        match order {
            CoefficientOrder::First => s.sqrt(),
            CoefficientOrder::Zero => s,
        }
    };
    let mut heights: Vec<f64> = mags.clone();
    heights.push(0.0);
    heights.sort_unstable_by(|a, b| a.total_cmp(b));
    heights.dedup();
    // size_above is non-increasing in the height; find the first admissible one
    let (mut lo, mut hi) = (0usize, heights.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if size_above(heights[mid]) <= eps {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let m = heights[lo];
    let small = coeff.map(|z| if z.norm() > m { z } else { C64::default() });
    let bounded = coeff.map(|z| if z.norm() > m { C64::default() } else { z });
    let p_inf = match order {
        CoefficientOrder::First => m,
        CoefficientOrder::Zero => m.sqrt(),
    };
    Ok((small, bounded, CoefficientSize { p_small: size_above(m), p_inf, epsilon: eps }))
}

/// `‖∂^α u‖_{L^r(I;L^{q,2})} / (‖∇^m u‖^{2/r}_{L²(I;L²)} ‖u‖^{1−2/r}_{L^∞(I;L²)})`.
pub fn gagliardo_nirenberg_ratio(u: &Field, alpha: &[usize], m: usize, p: ExponentPair, interval: Range<usize>) -> Result<f64> {
    let g = u.grid();
    let n = g.n;
    if alpha.len() != n {
        return Err(Error::Shape(format!("multi-index has {} entries, expected {n}", alpha.len())));
    }
    let order: usize = alpha.iter().sum();
    if m == 0 || order > m {
        return Err(Error::InvalidArgument(format!("|alpha| = {order} must not exceed m = {m} >= 1")));
    }
    let half = Q::new(1, 2);
    let in_range = |e: Exponent| e.0 > Q::zero() && e.0 <= half;
    let (nq, mq) = (Q::from_integer(n as i64), Q::from_integer(m as i64));
    let lhs_rel = p.r.0 + nq * p.q.0 / (mq * 2);
    let rhs_rel = (nq + Q::from_integer(2 * order as i64)) / (mq * 4);
    if !in_range(p.r) || !in_range(p.q) || lhs_rel != rhs_rel {
        return Err(Error::InvalidExponent(format!(
            "{p} violates 1/r + n/(2mq) = (n+2|alpha|)/(4m) with 2 <= r,q < inf"
        )));
    }
    if interval.start >= interval.end || interval.end > g.nt {
        return Err(Error::InvalidTimes(format!("interval {interval:?} outside 0..{}", g.nt)));
    }
    let slice_hat = |k: usize| {
        let mut h = u.slice_data(k).to_vec();
        dft_space(g, &mut h, false);
        h
    };
    let from_hat = |h: &[C64], f: &dyn Fn(&[f64]) -> C64| {
        let mut v: Vec<C64> = h.iter().enumerate().map(|(ix, z)| z * f(&g.xi_vec(ix)[..n])).collect();
        dft_space(g, &mut v, true);
        v
    };
    let deriv = |xi: &[f64]| {
        let mut s = C64::new(1.0, 0.0);
        for (c, &a) in alpha.iter().enumerate() {
            s *= C64::new(0.0, xi[c]).powu(a as u32);
        }
        s
    };
    let top = |xi: &[f64]| C64::new(xi.iter().map(|x| x * x).sum::<f64>().powf(m as f64 / 2.0), 0.0);
    let l2 = |v: &[C64]| (v.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.space_cell()).sqrt();
    let mut lhs_profile = Vec::with_capacity(interval.len());
    let mut top_sq = 0.0;
    let mut sup = 0.0f64;
    for k in interval.clone() {
        let h = slice_hat(k);
        let d = from_hat(&h, &deriv);
        let mags: Vec<f64> = d.iter().map(|z| z.norm()).collect();
        lhs_profile.push(lorentz_norm_values(&mags, LorentzIndex::new(p.q.value(), 2.0)?, g.space_cell())?);
        top_sq += l2(&from_hat(&h, &top)).powi(2) * g.dt();
        sup = sup.max(l2(u.slice_data(k)));
    }
    let lhs = lebesgue_values(&lhs_profile, p.r, g.dt());
    if lhs == 0.0 {
        return Ok(0.0);
    }
    let theta = 2.0 * p.r.recip_f64();
    let rhs = top_sq.sqrt().powf(theta) * sup.powf(1.0 - theta);
    if rhs == 0.0 {
        return Err(Error::InvalidArgument("zero denominator in the Gagliardo-Nirenberg ratio".into()));
    }
    Ok(lhs / rhs)
}

/// Exponents `(r, q)` used for the standard Gagliardo–Nirenberg sweep cases
/// `(n, m, |α|)`.
pub fn gn_default_pair(n: usize, m: usize, order: usize) -> Option<ExponentPair> {
    let pair = match (n, m, order) {
        (1, 1, 0) => ((8, 1), (4, 1)),
        (2, 1, 0) => ((4, 1), (4, 1)),
        (1, 2, 1) => ((4, 1), (2, 1)),
        (3, 1, 0) => ((8, 3), (4, 1)),
        _ => return None,
    };
    ExponentPair::ratio(pair.0, pair.1).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_grid;
    use crate::rng;
    use rand::Rng;

    fn pair(r: (i64, i64), q: (i64, i64)) -> ExponentPair {
        ExponentPair::ratio(r, q).unwrap()
    }

    fn random_field(g: &SpaceTimeGrid, seed: u64) -> Field {
        let mut r = rng::stream(seed, 7);
        Field::new(g, (0..g.len()).map(|_| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect()).unwrap()
    }

    #[test]
    fn exponent_parsing_and_display() {
        let e: Exponent = "3/2".parse().unwrap();
        assert_eq!(e.reciprocal(), Q::new(2, 3));
        assert_eq!("inf".parse::<Exponent>().unwrap(), Exponent::INFINITY);
        assert_eq!("4".parse::<Exponent>().unwrap().to_string(), "4");
        assert!("1/2".parse::<Exponent>().is_err());
        let p: ExponentPair = serde_json::from_str(r#"{"r":"inf","q":1.5}"#).unwrap();
        assert_eq!(p, pair((1, 0), (3, 2)));
        let back: ExponentPair = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn admissibility_examples() {
        assert!(is_admissible(pair((4, 1), (4, 1)), 2));
        let c = pair((1, 0), (3, 2));
        assert!(is_compatible(c, 3));
        assert_eq!(conjugate_pair(c), pair((2, 1), (6, 1)));
        assert!(is_admissible(conjugate_pair(c), 3));
        assert!(!is_admissible(pair((1, 0), (2, 1)), 1));
    }

    #[test]
    fn constant_and_indicator_norms() {
        let g = make_grid(1, 8, 1.0, 8, 1.0).unwrap();
        let c = Field::from_fn(&g, |_, _| C64::new(0.0, 3.0));
        assert!((mixed_lebesgue_norm(&c, pair((2, 1), (2, 1))) - 3.0).abs() < 1e-12);
        let mut ind = Field::zeros(&g);
        ind.data_mut()[13] = C64::new(1.0, 0.0);
        assert_eq!(mixed_lebesgue_norm(&ind, pair((1, 0), (1, 0))), 1.0);
    }

    #[test]
    fn lorentz_indicator_and_diagonal() {
        let vals = [1.0, 1.0, 1.0, 0.0, 0.0];
        for s in [1.0, 2.0, 5.0, f64::INFINITY] {
            let v = lorentz_norm_values(&vals, LorentzIndex::new(3.0, s).unwrap(), 0.5).unwrap();
            assert!((v - 1.5f64.powf(1.0 / 3.0)).abs() < 1e-12, "{s}: {v}");
        }
        let g = make_grid(2, 8, 3.0, 8, 1.0).unwrap();
        let f = random_field(&g, 1).slice(0);
        let l2 = lorentz_norm(&f, LorentzIndex::lebesgue(2.0), g.space_cell()).unwrap();
        assert!((l2 - f.norm()).abs() < 1e-12 * l2);
        assert_eq!(lorentz_norm(&SpatialField::zeros(&g), LorentzIndex::weak(2.0), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn vdot_two_ways_and_pure_mode() {
        let g = make_grid(1, 8, 2.0 * std::f64::consts::PI, 8, 2.0 * std::f64::consts::PI).unwrap();
        let u = Field::from_fn(&g, |t, x| C64::from_polar(1.0, t + x[0]));
        let (a, b) = vdot_norm(&u);
        assert!((a - 2f64.sqrt() * u.norm()).abs() < 1e-12 * a);
        assert!((a - b).abs() < 1e-12 * a);
        let c = Field::from_fn(&g, |_, _| C64::new(2.0, 0.0));
        assert!(vdot_norm(&c).0 < 1e-12);
        let g2 = make_grid(2, 16, 3.0, 8, 2.0).unwrap();
        let r = random_field(&g2, 3);
        let (a, b) = vdot_norm(&r);
        assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn h_theta_examples() {
        let g = make_grid(1, 8, 2.0 * std::f64::consts::PI, 8, 2.0 * std::f64::consts::PI).unwrap();
        let u = Field::from_fn(&g, |t, x| C64::from_polar(1.0, t + x[0]));
        assert!((h_theta_norm(&u, 0.5).unwrap() - u.norm()).abs() < 1e-12);
        let c = Field::from_fn(&g, |t, _| C64::new(t.cos(), 0.0));
        assert!(matches!(h_theta_norm(&c, 0.0), Err(Error::NotInHTheta)));
        let f = random_field(&g, 4);
        let f = f.scaled(C64::new(1.0 / f.norm(), 0.0));
        let w = lattice::divergence(&[f]).unwrap().scaled(C64::new(-1.0, 0.0));
        assert!(h_theta_norm(&w, 0.0).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn coefficient_size_of_constant_potential() {
        let g = make_grid(3, 8, 2.0, 8, 3.0).unwrap();
        let mut c = CoefficientSet::identity(&g);
        let p = pair((2, 1), (3, 1));
        assert!(is_compatible(p, 3));
        assert_eq!(coefficient_size(&c, p, false).unwrap(), 0.0);
        c.a0 = CoefficientField::Constant(C64::new(0.0, -0.7));
        let want = 0.7 * 3f64.powf(0.5) * 8f64.powf(1.0 / 3.0);
        assert!((coefficient_size(&c, p, false).unwrap() - want).abs() < 1e-12);
        assert!(coefficient_size(&c, pair((2, 1), (2, 1)), false).is_err());
    }

    #[test]
    fn truncation_spike_and_extremes() {
        let g = make_grid(1, 8, 1.0, 8, 1.0).unwrap();
        let p = pair((4, 3), (2, 1));
        assert!(is_compatible(p, 1));
        let mut u = Field::from_fn(&g, |_, _| C64::new(5.0, 0.0));
        u.data_mut()[17] = C64::new(50.0, 0.0);
        let (small, bounded, rep) = epsilon_decomposition(&u, p, 4.0, CoefficientOrder::Zero).unwrap();
        assert_eq!((&small + &bounded).data(), u.data());
        assert_eq!(small.data().iter().filter(|z| z.norm() > 0.0).count(), 1);
        assert!(rep.p_small <= 4.0 && (rep.p_inf - 5f64.sqrt()).abs() < 1e-15);
        let (s0, b0, _) = epsilon_decomposition(&u, p, 0.0, CoefficientOrder::Zero).unwrap();
        assert_eq!(s0.norm(), 0.0);
        assert_eq!(b0.data(), u.data());
        let (s1, b1, _) = epsilon_decomposition(&u, p, 1e9, CoefficientOrder::First).unwrap();
        assert_eq!(s1.data(), u.data());
        assert_eq!(b1.norm(), 0.0);
    }

    #[test]
    fn truncation_rejects_time_dependent_sup_exponent() {
        let g = make_grid(3, 8, 1.0, 8, 1.0).unwrap();
        let u = Field::from_fn(&g, |t, _| C64::new(1.0 + t, 0.0));
        let p = pair((1, 0), (3, 2));
        assert!(is_compatible(p, 3));
        assert!(matches!(
            epsilon_decomposition(&u, p, 0.1, CoefficientOrder::First),
            Err(Error::TruncationInsufficient(_))
        ));
    }

    #[test]
    fn gn_constant_in_space_and_relation_check() {
        let g = make_grid(1, 16, 4.0, 8, 1.0).unwrap();
        let u = Field::from_fn(&g, |t, _| C64::new(1.0 + t, 0.0));
        let p = gn_default_pair(1, 2, 1).unwrap();
        assert_eq!(gagliardo_nirenberg_ratio(&u, &[1], 2, p, 0..8).unwrap(), 0.0);
        assert!(gagliardo_nirenberg_ratio(&u, &[1], 2, pair((4, 1), (4, 1)), 0..8).is_err());
        for (n, m, a) in [(1, 1, 0), (2, 1, 0), (1, 2, 1), (3, 1, 0)] {
            let p = gn_default_pair(n, m, a).unwrap();
            let g = make_grid(n, 8, 1.0, 8, 1.0).unwrap();
            let mut alpha = vec![0; n];
            alpha[0] = a;
            let r = gagliardo_nirenberg_ratio(&random_field(&g, 5), &alpha, m, p, 0..8).unwrap();
            assert!(r.is_finite() && r > 0.0);
        }
    }
}
